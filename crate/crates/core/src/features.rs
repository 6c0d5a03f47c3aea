//! Slice-based cluster descriptor.
//!
//! A cluster is cut into horizontal slabs of thickness `dz` starting at its
//! lowest point. The 94 features are laid out as:
//!
//! | index     | feature                                                   |
//! |-----------|-----------------------------------------------------------|
//! | 0         | number of points                                          |
//! | 1..=3     | extent in x, y, z                                         |
//! | 4..=6     | population std of x, y, z                                 |
//! | 7         | planar distance from the centroid to the sensor           |
//! | 8         | centroid z                                                |
//! | 9         | density `n / (ex * ey * ez + 1e-6)`                       |
//! | 10        | number of non-empty slices                                |
//! | 11        | mean points per non-empty slice                           |
//! | 12, 13    | fraction of points strictly above / below mid-height      |
//! | 14..94    | 10 slice features x 8 statistics, at `14 + 8 * f + s`     |
//!
//! Slice features `f`: point count, x extent, y extent, x std, y std, slice
//! centroid offset from the cluster centroid in x and y, mean and max planar
//! distance to the slice centroid, mean planar range to the sensor.
//! Statistics `s` over the non-empty slices: mean, std, min, max, median,
//! 25th and 75th percentile, interquartile range.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::point::Point3;

pub const FEATURE_DIM: usize = 94;
pub const GLOBAL_FEATURES: usize = 14;
pub const SLICE_FEATURES: usize = 10;
pub const SLICE_STATS: usize = 8;

const DENSITY_EPS: f64 = 1e-6;
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSpec {
    /// Slab thickness in meters.
    pub dz: f64,
}

impl Default for SliceSpec {
    fn default() -> Self {
        SliceSpec { dz: 0.02 }
    }
}

impl SliceSpec {
    pub fn new(dz: f64) -> Result<Self> {
        if !(dz > 0.0) || !dz.is_finite() {
            return Err(Error::InvalidParameter("slice thickness must be positive"));
        }
        Ok(SliceSpec { dz })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_DIM] = values
            .try_into()
            .map_err(|_| Error::LengthMismatch { expected: FEATURE_DIM, got: values.len() })?;
        Ok(FeatureVector(arr))
    }
}

/// Per-dimension training statistics for standardizing inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Cuts a cluster into slabs `[z_lo + i*dz, z_lo + (i+1)*dz)`; the top point
/// lands in the last slab. Empty slabs are kept.
pub fn slice_cluster(cluster: &[Point3], spec: &SliceSpec) -> Result<Vec<Vec<Point3>>> {
    let (z_lo, z_hi) = z_bounds(cluster).ok_or(Error::EmptyCluster)?;
    let n_slices = ((libm::ceil((z_hi - z_lo) / spec.dz)) as usize).max(1);
    let mut slices = vec![Vec::new(); n_slices];
    for p in cluster {
        let idx = (libm::floor((p.z - z_lo) / spec.dz) as usize).min(n_slices - 1);
        slices[idx].push(*p);
    }
    Ok(slices)
}

fn z_bounds(points: &[Point3]) -> Option<(f64, f64)> {
    let first = points.first()?;
    Some(points.iter().fold((first.z, first.z), |(lo, hi), p| (lo.min(p.z), hi.max(p.z))))
}

/// Mean, population std, min and max of one coordinate.
struct Moments {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

impl Moments {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Moments {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values.clone() {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        let mean = sum / n as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Moments { mean, std: libm::sqrt(var), min, max }
    }

    fn extent(&self) -> f64 {
        self.max - self.min
    }
}

/// Linear interpolation between order statistics; `sorted` must be ascending.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn summarize(values: &mut [f64]) -> [f64; SLICE_STATS] {
    values.sort_unstable_by(f64::total_cmp);
    let m = Moments::of(values.iter().copied());
    let q1 = percentile(values, 0.25);
    let q3 = percentile(values, 0.75);
    [m.mean, m.std, m.min, m.max, percentile(values, 0.5), q1, q3, q3 - q1]
}

/// Computes the 94-dimensional descriptor of one cluster.
///
/// Points are put into `(z, x, y)` order first, so the result does not depend on
/// input order.
pub fn extract_features(cluster: &[Point3], spec: &SliceSpec, sensor_origin: Point3) -> Result<FeatureVector> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut pts = cluster.to_vec();
    pts.sort_unstable_by(Point3::cmp_zxy);
    let n = pts.len() as f64;

    let mx = Moments::of(pts.iter().map(|p| p.x));
    let my = Moments::of(pts.iter().map(|p| p.y));
    let mz = Moments::of(pts.iter().map(|p| p.z));
    let centroid = Point3::new(mx.mean, my.mean, mz.mean);
    let (ex, ey, ez) = (mx.extent(), my.extent(), mz.extent());
    let mid = (mz.min + mz.max) / 2.0;

    let slices = slice_cluster(&pts, spec)?;
    let nonempty: Vec<&Vec<Point3>> = slices.iter().filter(|s| !s.is_empty()).collect();

    let mut per_slice = vec![Vec::with_capacity(nonempty.len()); SLICE_FEATURES];
    for s in &nonempty {
        let sx = Moments::of(s.iter().map(|p| p.x));
        let sy = Moments::of(s.iter().map(|p| p.y));
        let sc = Point3::new(sx.mean, sy.mean, 0.0);
        let radial = Moments::of(s.iter().map(|p| p.planar_dist(&sc)));
        let range = Moments::of(s.iter().map(|p| p.planar_dist(&sensor_origin)));
        let row = [
            s.len() as f64,
            sx.extent(),
            sy.extent(),
            sx.std,
            sy.std,
            sx.mean - centroid.x,
            sy.mean - centroid.y,
            radial.mean,
            radial.max,
            range.mean,
        ];
        for (col, v) in per_slice.iter_mut().zip(row) {
            col.push(v);
        }
    }

    let mut out = [0.0; FEATURE_DIM];
    out[..GLOBAL_FEATURES].copy_from_slice(&[
        n,
        ex,
        ey,
        ez,
        mx.std,
        my.std,
        mz.std,
        centroid.planar_dist(&sensor_origin),
        centroid.z,
        n / (ex * ey * ez + DENSITY_EPS),
        nonempty.len() as f64,
        n / nonempty.len() as f64,
        pts.iter().filter(|p| p.z > mid).count() as f64 / n,
        pts.iter().filter(|p| p.z < mid).count() as f64 / n,
    ]);
    for (f, col) in per_slice.iter_mut().enumerate() {
        let at = GLOBAL_FEATURES + f * SLICE_STATS;
        out[at..at + SLICE_STATS].copy_from_slice(&summarize(col));
    }
    Ok(FeatureVector(out))
}

/// Per-dimension mean and population std over a training set.
pub fn fit_normalizer(train: &[FeatureVector]) -> Result<FeatureStats> {
    if train.len() < 2 {
        return Err(Error::TooFewPoints { needed: 1, got: train.len() });
    }
    let n = train.len() as f64;
    let mut mean = vec![0.0; FEATURE_DIM];
    for v in train {
        for (m, x) in mean.iter_mut().zip(v.0.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; FEATURE_DIM];
    for v in train {
        for ((s, x), m) in var.iter_mut().zip(v.0.iter()).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|s| libm::sqrt(s / n)).collect();
    Ok(FeatureStats { mean, std })
}

/// `(v - mean) / max(std, 1e-8)` per dimension.
pub fn apply_normalizer(v: &FeatureVector, stats: &FeatureStats) -> FeatureVector {
    let mut out = [0.0; FEATURE_DIM];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (v.0[i] - stats.mean[i]) / stats.std[i].max(STD_FLOOR);
    }
    FeatureVector(out)
}

impl FeatureStats {
    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != FEATURE_DIM || self.std.len() != FEATURE_DIM {
            return Err(Error::LengthMismatch { expected: FEATURE_DIM, got: self.mean.len().min(self.std.len()) });
        }
        if self.std.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter("feature std must be non-negative"));
        }
        Ok(())
    }
}
