use crate::error::{Error, Result};

use super::knn::KDistanceCurve;

/// Knee of a k-distance curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elbow {
    pub epsilon: f64,
    pub index: usize,
    /// Set when no point stands off the first-to-last chord (flat or straight curve).
    pub degenerate: bool,
}

/// Relative slack under which two chord distances count as tied.
const TIE_RTOL: f64 = 1e-12;

/// Finds the point of the curve farthest from the chord joining its first and
/// last points. Ties go to the larger index.
///
/// Distances are compared without the chord-length normalizer, which is the
/// same for every index, so scaling the curve by `c > 0` scales every score by
/// `c` and the chosen index does not move.
pub fn find_elbow(curve: &KDistanceCurve) -> Result<Elbow> {
    let d = &curve.distances;
    let n = d.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let first = d[0];
    let rise = d[n - 1] - first;
    let run = (n - 1) as f64;
    let score = |i: usize| libm::fabs(rise * i as f64 - run * (d[i] - first));

    let best = (0..n).map(score).fold(0.0f64, f64::max);
    if !(best > 0.0) {
        return Ok(Elbow { epsilon: d[n - 1], index: n - 1, degenerate: true });
    }
    let floor = best * (1.0 - TIE_RTOL);
    let index = (0..n).rev().find(|&i| score(i) >= floor).unwrap_or(n - 1);
    Ok(Elbow { epsilon: d[index], index, degenerate: false })
}
