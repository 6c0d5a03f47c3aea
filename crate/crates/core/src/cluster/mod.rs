//! Density-based clustering of preprocessed captures.
//!
//! Epsilon is chosen per capture: build the k-distance curve with
//! `k = min_pts - 1`, take its elbow, then run DBSCAN with that radius.

mod dbscan;
mod elbow;
mod grid;
mod knn;
mod silhouette;

pub use dbscan::{dbscan, dbscan_with_core, extract_clusters, ClusterAssignment, DbscanParams, NOISE};
pub use elbow::{find_elbow, Elbow};
pub use knn::{knn_distance_curve, KDistanceCurve};
pub use silhouette::silhouette;

use crate::error::Result;
use crate::point::Point3;

/// Result of clustering one capture with an adaptive epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveClustering {
    /// `None` when the capture had too few points to build a k-distance curve.
    pub elbow: Option<Elbow>,
    pub assignment: ClusterAssignment,
}

/// k used for the k-distance curve given DBSCAN's `min_pts`.
pub fn knn_k_for(min_pts: usize) -> usize {
    min_pts.saturating_sub(1).max(1)
}

/// Per-capture epsilon from the k-distance elbow, or `None` if the capture is too
/// small to have a curve of at least three points.
pub fn adaptive_epsilon(points: &[Point3], min_pts: usize) -> Result<Option<Elbow>> {
    let k = knn_k_for(min_pts);
    if points.len() <= k || points.len() < 3 {
        return Ok(None);
    }
    let curve = knn_distance_curve(points, k)?;
    Ok(Some(find_elbow(&curve)?))
}

/// Adaptive-epsilon DBSCAN. Captures too small for an epsilon estimate (or whose
/// elbow is zero) come back as all noise.
pub fn cluster_adaptive(points: &[Point3], min_pts: usize) -> Result<AdaptiveClustering> {
    let elbow = adaptive_epsilon(points, min_pts)?;
    let assignment = match elbow {
        Some(e) if e.epsilon > 0.0 => dbscan(points, &DbscanParams::new(e.epsilon, min_pts)?),
        _ => ClusterAssignment::all_noise(points.len()),
    };
    Ok(AdaptiveClustering { elbow, assignment })
}
