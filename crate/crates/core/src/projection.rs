//! Fixed-size enlargement of a cluster and its three-view projection image.
//!
//! A cluster is padded to a perfect-square row count with points sampled from
//! a pool of human-free captures (or uniformly subsampled when too large),
//! sorted by `(z, x, y)`, and each pair of coordinate columns is reshaped into
//! a square plane. Channel order is `[x, y | y, z | x, z]`: top, front and side
//! views.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::point::Point3;
use crate::rng::seeded;

pub const IMAGE_SIDE: usize = 18;
pub const IMAGE_CHANNELS: usize = 6;
pub const TARGET_POINTS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const IMAGE_LEN: usize = TARGET_POINTS * IMAGE_CHANNELS;

/// Coordinate column pairs for the top, front and side views.
pub const VIEW_COLUMNS: [[usize; 2]; 3] = [[0, 1], [1, 2], [0, 2]];

/// An `n x 3` matrix of points, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrix {
    pub rows: Vec<[f64; 3]>,
}

impl PointMatrix {
    pub fn new(rows: Vec<[f64; 3]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyCluster);
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("point matrix entries must be finite"));
        }
        Ok(PointMatrix { rows })
    }

    pub fn from_points(points: &[Point3]) -> Result<Self> {
        Self::new(points.iter().map(|p| p.to_array()).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Points from captures with no people in them, used as padding.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundPool {
    pub rows: Vec<[f64; 3]>,
}

impl GroundPool {
    pub fn new(rows: Vec<[f64; 3]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok(GroundPool { rows })
    }

    /// Concatenates the points of several human-free captures.
    pub fn from_points<'a>(captures: impl IntoIterator<Item = &'a [Point3]>) -> Result<Self> {
        Self::new(captures.into_iter().flatten().map(|p| p.to_array()).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `18 x 18 x 6` image, row-major with channels last.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionImage {
    pub data: Vec<f64>,
}

impl ProjectionImage {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.len() != IMAGE_LEN {
            return Err(Error::ShapeMismatch {
                expected: alloc::vec![IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS],
                got: alloc::vec![data.len()],
            });
        }
        Ok(ProjectionImage { data })
    }

    pub fn shape(&self) -> [usize; 3] {
        [IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS]
    }

    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * IMAGE_SIDE + col) * IMAGE_CHANNELS + channel]
    }

    /// Recovers the sorted point rows the image was built from.
    pub fn point_rows(&self) -> Vec<[f64; 3]> {
        self.data.chunks_exact(IMAGE_CHANNELS).map(|px| [px[0], px[1], px[3]]).collect()
    }
}

/// Smallest perfect square `>= n`.
pub fn next_perfect_square(n: usize) -> usize {
    let mut r = libm::sqrt(n as f64) as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r * r
}

/// Brings a cluster to exactly `target` rows.
///
/// Smaller clusters keep their rows as a prefix and are padded with rows drawn
/// uniformly with replacement from `pool`. Larger clusters are reduced to a
/// uniform subset of `target` rows kept in input order.
pub fn enlarge(cluster: &PointMatrix, target: usize, pool: &GroundPool, seed: u64) -> Result<PointMatrix> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster);
    }
    if target == 0 || next_perfect_square(target) != target {
        return Err(Error::InvalidParameter("enlarge target must be a perfect square"));
    }
    let n = cluster.len();
    let mut rng = seeded(seed);
    let rows = if n <= target {
        let diff = target - n;
        if diff > 0 && pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        let mut rows = Vec::with_capacity(target);
        rows.extend_from_slice(&cluster.rows);
        rows.extend((0..diff).map(|_| pool.rows[rng.gen_range(0..pool.len())]));
        rows
    } else {
        let mut picked = index::sample(&mut rng, n, target).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| cluster.rows[i]).collect()
    };
    Ok(PointMatrix { rows })
}

/// Projects exactly 324 rows onto the three coordinate planes.
pub fn project_views(points: &PointMatrix) -> Result<ProjectionImage> {
    if points.len() != TARGET_POINTS {
        return Err(Error::LengthMismatch { expected: TARGET_POINTS, got: points.len() });
    }
    let mut rows = points.rows.clone();
    rows.sort_unstable_by(|a, b| {
        a[2].total_cmp(&b[2]).then(a[0].total_cmp(&b[0])).then(a[1].total_cmp(&b[1]))
    });
    let mut data = Vec::with_capacity(IMAGE_LEN);
    for row in &rows {
        for cols in VIEW_COLUMNS {
            data.push(row[cols[0]]);
            data.push(row[cols[1]]);
        }
    }
    Ok(ProjectionImage { data })
}

/// Enlarge to 324 rows, then project.
pub fn cluster_to_image(cluster: &PointMatrix, pool: &GroundPool, seed: u64) -> Result<ProjectionImage> {
    project_views(&enlarge(cluster, TARGET_POINTS, pool, seed)?)
}
