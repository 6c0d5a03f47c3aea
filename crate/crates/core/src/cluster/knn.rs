use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::point::Point3;

/// k-th nearest neighbor distance of every point, sorted in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct KDistanceCurve {
    pub k: usize,
    pub distances: Vec<f64>,
}

impl KDistanceCurve {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// Builds the k-distance curve by exhaustive search. Requires `1 <= k < n`.
pub fn knn_distance_curve(points: &[Point3], k: usize) -> Result<KDistanceCurve> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1"));
    }
    if points.len() <= k {
        return Err(Error::TooFewPoints { needed: k, got: points.len() });
    }
    let mut scratch = Vec::with_capacity(points.len() - 1);
    let mut distances: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            scratch.clear();
            scratch.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| p.dist_sq(q)),
            );
            let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
            libm::sqrt(*kth)
        })
        .collect();
    distances.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(KDistanceCurve { k, distances })
}
