//! Points, frames and the rule-based preprocessing applied to every capture.
//!
//! Sensor coordinates: `x` runs along the walkway away from the pole, `y` is
//! lateral and `z` is vertical with the sensor at the origin, so the ground
//! sits near `z = -3`.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist_sq(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        libm::sqrt(self.dist_sq(other))
    }

    /// Distance in the horizontal plane.
    pub fn planar_dist(&self, other: &Point3) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Total order by `(z, x, y)`, used wherever a canonical point order is needed.
    pub fn cmp_zxy(&self, other: &Point3) -> core::cmp::Ordering {
        self.z
            .total_cmp(&other.z)
            .then(self.x.total_cmp(&other.x))
            .then(self.y.total_cmp(&other.y))
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

/// One LiDAR capture.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub frame_id: u64,
    /// Unix seconds.
    pub timestamp: f64,
    pub points: Vec<Point3>,
}

impl Frame {
    pub fn new(frame_id: u64, timestamp: f64, points: Vec<Point3>) -> Self {
        Frame { frame_id, timestamp, points }
    }

    /// Same id and timestamp, different points.
    pub fn with_points(&self, points: Vec<Point3>) -> Frame {
        Frame { frame_id: self.frame_id, timestamp: self.timestamp, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Axis-aligned region of interest. All bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
}

impl Default for RoiConfig {
    /// The 5 m walkway centered on the pole, out to 12 m, from the sensor's
    /// 0.3 m minimum range, with ground below -2.6 m discarded.
    fn default() -> Self {
        RoiConfig { x_min: 0.3, x_max: 12.0, y_min: -2.5, y_max: 2.5, z_min: -2.6 }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max, self.z_min]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("roi bounds must be finite"));
        }
        if self.x_min >= self.x_max {
            return Err(Error::InvalidParameter("roi requires x_min < x_max"));
        }
        if self.y_min >= self.y_max {
            return Err(Error::InvalidParameter("roi requires y_min < y_max"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.x_min
            && p.x <= self.x_max
            && p.y >= self.y_min
            && p.y <= self.y_max
            && p.z >= self.z_min
    }
}

/// Keeps the points with `z >= z_min`, in order.
pub fn remove_ground(frame: &Frame, z_min: f64) -> Frame {
    frame.with_points(frame.points.iter().copied().filter(|p| p.z >= z_min).collect())
}

/// Keeps the points inside `roi`, in order. Idempotent.
pub fn apply_roi(frame: &Frame, roi: &RoiConfig) -> Frame {
    frame.with_points(frame.points.iter().copied().filter(|p| roi.contains(p)).collect())
}

/// Ground removal followed by the region of interest.
pub fn preprocess(frame: &Frame, roi: &RoiConfig) -> Frame {
    apply_roi(&remove_ground(frame, roi.z_min), roi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn frame(points: Vec<Point3>) -> Frame {
        Frame::new(3, 12.5, points)
    }

    #[test]
    fn ground_below_threshold_is_removed() {
        let f = frame(vec![Point3::new(4.0, 0.0, -2.7), Point3::new(4.0, 0.0, -1.0)]);
        let out = remove_ground(&f, -2.6);
        assert_eq!(out.points, vec![Point3::new(4.0, 0.0, -1.0)]);
        assert_eq!(out.frame_id, 3);
        assert_eq!(out.timestamp, 12.5);
    }

    #[test]
    fn ground_threshold_is_inclusive() {
        let f = frame(vec![Point3::new(4.0, 0.0, -2.6)]);
        assert_eq!(remove_ground(&f, -2.6).len(), 1);
    }

    #[test]
    fn empty_frame_stays_empty() {
        let f = frame(vec![]);
        assert!(remove_ground(&f, -2.6).is_empty());
        assert!(apply_roi(&f, &RoiConfig::default()).is_empty());
    }

    #[test]
    fn roi_drops_far_points_and_keeps_boundaries() {
        let roi = RoiConfig::default();
        let f = frame(vec![
            Point3::new(13.0, 0.0, -1.0),
            Point3::new(roi.x_min, roi.y_min, roi.z_min),
            Point3::new(roi.x_max, roi.y_max, roi.z_min),
        ]);
        let out = apply_roi(&f, &roi);
        assert_eq!(out.points, f.points[1..].to_vec());
    }

    #[test]
    fn roi_validation() {
        assert!(RoiConfig::default().validate().is_ok());
        let bad = RoiConfig { x_min: 2.0, x_max: 1.0, ..RoiConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RoiConfig { y_min: 0.0, y_max: 0.0, ..RoiConfig::default() };
        assert!(bad.validate().is_err());
    }

    fn arb_points() -> impl Strategy<Value = Vec<Point3>> {
        prop::collection::vec(
            (-1.0f64..14.0, -4.0f64..4.0, -3.5f64..0.5).prop_map(|(x, y, z)| Point3::new(x, y, z)),
            0..60,
        )
    }

    fn is_subsequence(sub: &[Point3], full: &[Point3]) -> bool {
        let mut it = full.iter();
        sub.iter().all(|p| it.any(|q| q == p))
    }

    proptest! {
        #[test]
        fn filters_return_subsequences(points in arb_points(), z_min in -3.0f64..-1.0) {
            let f = frame(points);
            let roi = RoiConfig { z_min, ..RoiConfig::default() };
            let g = remove_ground(&f, z_min);
            let r = apply_roi(&f, &roi);
            prop_assert!(is_subsequence(&g.points, &f.points));
            prop_assert!(is_subsequence(&r.points, &f.points));
            prop_assert_eq!(apply_roi(&r, &roi), r.clone());
            prop_assert_eq!(apply_roi(&g, &roi), r);
        }
    }
}
