use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::point::Point3;

use super::grid::Grid;

/// Label of points that belong to no cluster.
pub const NOISE: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    /// Neighborhood radius in meters. Neighborhoods are closed balls.
    pub epsilon: f64,
    /// Neighbors (the point itself included) needed for a core point.
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(epsilon: f64, min_pts: usize) -> Result<Self> {
        let p = DbscanParams { epsilon, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be positive and finite"));
        }
        if self.min_pts == 0 {
            return Err(Error::InvalidParameter("min_pts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    /// Cluster id per point, or [`NOISE`].
    pub labels: Vec<i32>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn all_noise(n: usize) -> Self {
        ClusterAssignment { labels: vec![NOISE; n], n_clusters: 0 }
    }

    /// Builds an assignment from raw labels, checking that ids are dense.
    pub fn from_labels(labels: Vec<i32>) -> Result<Self> {
        let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        let mut used = vec![false; n_clusters];
        for &l in &labels {
            if l < NOISE {
                return Err(Error::InvalidParameter("cluster labels must be >= -1"));
            }
            if l >= 0 {
                used[l as usize] = true;
            }
        }
        if used.iter().any(|u| !u) {
            return Err(Error::InvalidParameter("cluster ids must be contiguous from 0"));
        }
        Ok(ClusterAssignment { labels, n_clusters })
    }

    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }
}

/// DBSCAN over 3D points.
///
/// Points are scanned in input order; each unlabeled core point seeds a new
/// cluster, which is grown breadth-first through core points. A border point
/// reachable from several clusters keeps the first one that reaches it.
pub fn dbscan(points: &[Point3], params: &DbscanParams) -> ClusterAssignment {
    dbscan_with_core(points, params).0
}

/// [`dbscan`] together with the core flag of every point.
pub fn dbscan_with_core(points: &[Point3], params: &DbscanParams) -> (ClusterAssignment, Vec<bool>) {
    const UNSEEN: i32 = -2;
    let n = points.len();
    let grid = Grid::new(points, params.epsilon);
    let mut scratch = Vec::new();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            grid.neighbors(i, &mut scratch);
            scratch.clone()
        })
        .collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut labels = vec![UNSEEN; n];
    let mut n_clusters = 0i32;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != UNSEEN || !is_core[start] {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        labels[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q] >= 0 {
                    continue;
                }
                labels[q] = id;
                if is_core[q] {
                    queue.push_back(q);
                }
            }
        }
    }
    for l in labels.iter_mut() {
        if *l == UNSEEN {
            *l = NOISE;
        }
    }
    (ClusterAssignment { labels, n_clusters: n_clusters as usize }, is_core)
}

/// Splits points by cluster id, preserving input order and dropping noise.
pub fn extract_clusters(points: &[Point3], assignment: &ClusterAssignment) -> Result<Vec<Vec<Point3>>> {
    if points.len() != assignment.labels.len() {
        return Err(Error::LengthMismatch { expected: points.len(), got: assignment.labels.len() });
    }
    let mut out = vec![Vec::new(); assignment.n_clusters];
    for (p, &l) in points.iter().zip(&assignment.labels) {
        if l >= 0 {
            let slot = out
                .get_mut(l as usize)
                .ok_or(Error::InvalidParameter("label outside [-1, n_clusters)"))?;
            slot.push(*p);
        }
    }
    Ok(out)
}
