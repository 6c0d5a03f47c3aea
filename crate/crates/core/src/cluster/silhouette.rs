use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::point::Point3;

use super::dbscan::ClusterAssignment;

/// Mean silhouette coefficient over the non-noise points.
///
/// For point `i` with mean intra-cluster distance `a` and smallest mean distance
/// to another cluster `b`, `S(i) = (b - a) / max(a, b)`. Points in singleton
/// clusters score 0.
pub fn silhouette(points: &[Point3], assignment: &ClusterAssignment) -> Result<f64> {
    if points.len() != assignment.labels.len() {
        return Err(Error::LengthMismatch { expected: points.len(), got: assignment.labels.len() });
    }
    let k = assignment.n_clusters;
    if k < 2 {
        return Err(Error::UndefinedSilhouette { n_clusters: k });
    }
    let sizes = assignment.cluster_sizes();
    let members: Vec<(usize, usize)> = assignment
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l >= 0)
        .map(|(i, &l)| (i, l as usize))
        .collect();

    let mut sums = vec![0.0; k];
    let mut total = 0.0;
    for &(i, own) in &members {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &(j, c) in &members {
            if j != i {
                sums[c] += points[i].dist(&points[j]);
            }
        }
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / members.len() as f64)
}
