//! Synthetic LiDAR scenes.
//!
//! A pole-mounted spinning sensor sits at the origin looking along +x, with
//! the ground plane 3 m below. Each (elevation, azimuth) ray returns the
//! nearest analytic hit among the scene objects and the ground, with Gaussian
//! noise along the ray and range quantization. People are built from a torso
//! ellipsoid, a head sphere and two leg cylinders; clutter is boxes, poles and
//! bushes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{HUMAN, NON_HUMAN};
use crate::point::{Frame, Point3, RoiConfig};
use crate::projection::GroundPool;
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub n_channels: usize,
    /// Lowest and highest beam elevations in degrees, evenly spaced between.
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    /// Width of the azimuth sector in degrees, centered on `sector_center_deg`.
    pub sector_deg: f64,
    pub sector_center_deg: f64,
    /// Azimuth steps inside the sector.
    pub azimuth_steps: usize,
    pub min_range: f64,
    pub max_range: f64,
    pub range_sigma: f64,
    pub range_resolution: f64,
    pub ground_z: f64,
}

impl Default for SensorModel {
    /// 32 channels over +/-45 degrees, 512 steps per turn prorated to a 90 degree
    /// sector, 0.3 to 35 m, 1 cm noise and 3 mm range resolution.
    fn default() -> Self {
        SensorModel {
            n_channels: 32,
            elevation_min_deg: -45.0,
            elevation_max_deg: 45.0,
            sector_deg: 90.0,
            sector_center_deg: 0.0,
            azimuth_steps: 128,
            min_range: 0.3,
            max_range: 35.0,
            range_sigma: 0.01,
            range_resolution: 0.003,
            ground_z: -3.0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.azimuth_steps == 0 {
            return Err(Error::InvalidParameter("sensor needs at least one channel and azimuth step"));
        }
        if !(self.sector_deg > 0.0 && self.sector_deg <= 360.0) {
            return Err(Error::InvalidParameter("azimuth sector must lie in (0, 360] degrees"));
        }
        if !(self.elevation_min_deg <= self.elevation_max_deg
            && self.elevation_min_deg >= -90.0
            && self.elevation_max_deg <= 90.0)
        {
            return Err(Error::InvalidParameter("elevations must be ordered within [-90, 90]"));
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range && self.max_range.is_finite()) {
            return Err(Error::InvalidParameter("range limits must satisfy 0 <= min < max"));
        }
        if !(self.range_sigma >= 0.0 && self.range_resolution >= 0.0) || !self.ground_z.is_finite() {
            return Err(Error::InvalidParameter("noise, resolution and ground height must be valid"));
        }
        Ok(())
    }

    pub fn elevations_deg(&self) -> Vec<f64> {
        let n = self.n_channels;
        if n == 1 {
            return vec![(self.elevation_min_deg + self.elevation_max_deg) / 2.0];
        }
        let step = (self.elevation_max_deg - self.elevation_min_deg) / (n - 1) as f64;
        (0..n).map(|i| self.elevation_min_deg + step * i as f64).collect()
    }

    /// Step centers, so the sector edges are never sampled.
    pub fn azimuths_deg(&self) -> Vec<f64> {
        let step = self.sector_deg / self.azimuth_steps as f64;
        let start = self.sector_center_deg - self.sector_deg / 2.0;
        (0..self.azimuth_steps).map(|j| start + step * (j as f64 + 0.5)).collect()
    }

    /// Unit ray directions, channel-major.
    pub fn directions(&self) -> Vec<[f64; 3]> {
        let az = self.azimuths_deg();
        let mut out = Vec::with_capacity(self.n_channels * az.len());
        for el in self.elevations_deg() {
            let (se, ce) = libm::sincos(el.to_radians());
            for &a in &az {
                let (sa, ca) = libm::sincos(a.to_radians());
                out.push([ce * ca, ce * sa, se]);
            }
        }
        out
    }
}

/// Object geometry. Every object stands on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectKind {
    Human { height: f64 },
    Box { length: f64, width: f64, height: f64 },
    Pole { radius: f64, height: f64 },
    Bush { rx: f64, ry: f64, rz: f64 },
}

impl ObjectKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectKind::Human { .. } => "human",
            ObjectKind::Box { .. } => "box",
            ObjectKind::Pole { .. } => "pole",
            ObjectKind::Bush { .. } => "bush",
        }
    }

    /// [`HUMAN`] or [`NON_HUMAN`].
    pub fn class(&self) -> usize {
        match self {
            ObjectKind::Human { .. } => HUMAN,
            _ => NON_HUMAN,
        }
    }

    /// Radius of a vertical cylinder around the pose that contains the object.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            ObjectKind::Human { .. } => 0.25,
            ObjectKind::Box { length, width, .. } => libm::hypot(length, width) / 2.0,
            ObjectKind::Pole { radius, .. } => radius,
            ObjectKind::Bush { rx, ry, .. } => rx.max(ry),
        }
    }

    pub fn sample_human<R: Rng>(rng: &mut R) -> Self {
        ObjectKind::Human { height: rng.gen_range(1.5..=1.9) }
    }

    /// Uniformly one of box, pole or bush with sampled dimensions.
    pub fn sample_clutter<R: Rng>(rng: &mut R) -> Self {
        match rng.gen_range(0..3) {
            0 => ObjectKind::Box {
                length: rng.gen_range(0.4..1.2),
                width: rng.gen_range(0.3..0.8),
                height: rng.gen_range(0.8..1.4),
            },
            1 => ObjectKind::Pole { radius: rng.gen_range(0.05..0.15), height: rng.gen_range(2.5..4.5) },
            _ => ObjectKind::Bush {
                rx: rng.gen_range(0.3..0.8),
                ry: rng.gen_range(0.3..0.8),
                rz: rng.gen_range(0.45..0.8),
            },
        }
    }
}

/// An object placed at `(x, y)` on the ground, rotated by `heading` radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl ObjectSpec {
    pub fn validate(&self) -> Result<()> {
        let dims_ok = match self.kind {
            ObjectKind::Human { height } => height > 0.0,
            ObjectKind::Box { length, width, height } => length > 0.0 && width > 0.0 && height > 0.0,
            ObjectKind::Pole { radius, height } => radius > 0.0 && height > 0.0,
            ObjectKind::Bush { rx, ry, rz } => rx > 0.0 && ry > 0.0 && rz > 0.0,
        };
        if !dims_ok || !(self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()) {
            return Err(Error::InvalidParameter("object dimensions must be positive and pose finite"));
        }
        Ok(())
    }

    fn primitives(&self, ground_z: f64) -> Vec<Primitive> {
        let (x, y, yaw) = (self.x, self.y, self.heading);
        match self.kind {
            ObjectKind::Human { height } => {
                // Local x faces forward, y runs across the shoulders.
                let leg_top = ground_z + 0.47 * height;
                let (s, c) = libm::sincos(yaw);
                let leg = |side: f64| Primitive::Cylinder {
                    cx: x - s * 0.1 * side,
                    cy: y + c * 0.1 * side,
                    radius: 0.07,
                    z0: ground_z,
                    z1: leg_top,
                };
                vec![
                    Primitive::Ellipsoid { center: [x, y, ground_z + 0.6 * height], axes: [0.15, 0.22, 0.35], yaw },
                    Primitive::Ellipsoid { center: [x, y, ground_z + height - 0.11], axes: [0.11; 3], yaw },
                    leg(1.0),
                    leg(-1.0),
                ]
            }
            ObjectKind::Box { length, width, height } => vec![Primitive::Box {
                center: [x, y, ground_z + height / 2.0],
                half: [length / 2.0, width / 2.0, height / 2.0],
                yaw,
            }],
            ObjectKind::Pole { radius, height } => {
                vec![Primitive::Cylinder { cx: x, cy: y, radius, z0: ground_z, z1: ground_z + height }]
            }
            // Slightly sunk into the ground.
            ObjectKind::Bush { rx, ry, rz } => {
                vec![Primitive::Ellipsoid { center: [x, y, ground_z + 0.9 * rz], axes: [rx, ry, rz], yaw }]
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Primitive {
    Ellipsoid { center: [f64; 3], axes: [f64; 3], yaw: f64 },
    /// Vertical capped cylinder.
    Cylinder { cx: f64, cy: f64, radius: f64, z0: f64, z1: f64 },
    Box { center: [f64; 3], half: [f64; 3], yaw: f64 },
}

fn to_local(v: [f64; 3], yaw: f64) -> [f64; 3] {
    let (s, c) = libm::sincos(-yaw);
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

fn smallest_positive(a: f64, b: f64) -> Option<f64> {
    match (a > 0.0, b > 0.0) {
        (true, true) => Some(a.min(b)),
        (true, false) => Some(a),
        (false, true) => Some(b),
        _ => None,
    }
}

impl Primitive {
    /// Distance along the unit ray `o + t d` to the first hit with `t > 0`.
    fn intersect(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        match *self {
            Primitive::Ellipsoid { center, axes, yaw } => {
                let p = to_local([o[0] - center[0], o[1] - center[1], o[2] - center[2]], yaw);
                let v = to_local(d, yaw);
                let p = [p[0] / axes[0], p[1] / axes[1], p[2] / axes[2]];
                let v = [v[0] / axes[0], v[1] / axes[1], v[2] / axes[2]];
                let a = dot(v, v);
                let b = 2.0 * dot(p, v);
                let c = dot(p, p) - 1.0;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = libm::sqrt(disc);
                smallest_positive((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))
            }
            Primitive::Cylinder { cx, cy, radius, z0, z1 } => {
                let (px, py) = (o[0] - cx, o[1] - cy);
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > 0.0 && best.map_or(true, |b| t < b) {
                        best = Some(t);
                    }
                };
                let a = d[0] * d[0] + d[1] * d[1];
                if a > 0.0 {
                    let b = 2.0 * (px * d[0] + py * d[1]);
                    let c = px * px + py * py - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = libm::sqrt(disc);
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = o[2] + t * d[2];
                            if z >= z0 && z <= z1 {
                                consider(t);
                            }
                        }
                    }
                }
                if d[2] != 0.0 {
                    for zc in [z0, z1] {
                        let t = (zc - o[2]) / d[2];
                        let (x, y) = (px + t * d[0], py + t * d[1]);
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
            Primitive::Box { center, half, yaw } => {
                let p = to_local([o[0] - center[0], o[1] - center[1], o[2] - center[2]], yaw);
                let v = to_local(d, yaw);
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..3 {
                    if v[i] == 0.0 {
                        if libm::fabs(p[i]) > half[i] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-half[i] - p[i]) / v[i];
                    let t2 = (half[i] - p[i]) / v[i];
                    t_near = t_near.max(t1.min(t2));
                    t_far = t_far.min(t1.max(t2));
                }
                if t_far < t_near.max(0.0) {
                    return None;
                }
                smallest_positive(t_near, t_far)
            }
        }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Ground-truth labels for one ray-cast frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneTruth {
    /// Object index per returned point; `None` for ground returns.
    pub point_objects: Vec<Option<usize>>,
    /// [`HUMAN`] or [`NON_HUMAN`] per object.
    pub object_classes: Vec<usize>,
}

impl SceneTruth {
    pub fn point_class(&self, i: usize) -> Option<usize> {
        self.point_objects[i].map(|o| self.object_classes[o])
    }

    pub fn n_humans(&self) -> usize {
        self.object_classes.iter().filter(|&&c| c == HUMAN).count()
    }
}

/// Casts every sensor ray into the scene. Returns points in channel-major ray
/// order together with the object each one came from.
pub fn raycast(sensor: &SensorModel, objects: &[ObjectSpec], seed: u64) -> Result<(Frame, SceneTruth)> {
    raycast_with_background(sensor, objects, &[], seed)
}

/// [`raycast`] with extra static geometry whose returns carry no owner.
fn raycast_with_background(
    sensor: &SensorModel,
    objects: &[ObjectSpec],
    background: &[ObjectSpec],
    seed: u64,
) -> Result<(Frame, SceneTruth)> {
    sensor.validate()?;
    for o in objects.iter().chain(background) {
        o.validate()?;
    }
    let prims: Vec<(Option<usize>, Primitive)> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| (Some(i), o))
        .chain(background.iter().map(|o| (None, o)))
        .flat_map(|(owner, o)| o.primitives(sensor.ground_z).into_iter().map(move |p| (owner, p)))
        .collect();
    let noise = Normal::new(0.0, sensor.range_sigma).map_err(|_| Error::InvalidParameter("range noise sigma"))?;
    let mut rng = seeded(seed);
    let origin = [0.0; 3];
    let mut points = Vec::new();
    let mut owners = Vec::new();
    for d in sensor.directions() {
        let mut best: Option<(f64, Option<usize>)> =
            (d[2] < 0.0).then(|| (sensor.ground_z / d[2], None)).filter(|(t, _)| *t > 0.0);
        for (i, p) in &prims {
            if let Some(t) = p.intersect(origin, d) {
                if best.map_or(true, |(b, _)| t < b) {
                    best = Some((t, *i));
                }
            }
        }
        let Some((t, owner)) = best else { continue };
        if t < sensor.min_range || t > sensor.max_range {
            continue;
        }
        let mut r = t + noise.sample(&mut rng);
        if sensor.range_resolution > 0.0 {
            r = libm::round(r / sensor.range_resolution) * sensor.range_resolution;
        }
        if r < sensor.min_range || r > sensor.max_range {
            continue;
        }
        points.push(Point3::new(d[0] * r, d[1] * r, d[2] * r));
        owners.push(owner);
    }
    let truth = SceneTruth { point_objects: owners, object_classes: objects.iter().map(|o| o.kind.class()).collect() };
    Ok((Frame::new(0, 0.0, points), truth))
}

/// Settings shared by the dataset and scene generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub sensor: SensorModel,
    pub roi: RoiConfig,
    /// Objects must leave at least this many post-ROI returns.
    pub min_pts: usize,
    /// Range of object distances along x.
    pub x_min: f64,
    pub x_max: f64,
    /// Placement attempts before giving up.
    pub max_attempts: usize,
    /// A thin low post (a sprinkler head or drain cover) whose top clears
    /// `z_min` by a few centimeters. Its returns are the residue of an empty
    /// walkway and stay below `min_pts`, so clustering treats them as noise.
    pub fixtures: bool,
}

impl Default for SimConfig {
    /// Objects between 3 m (where the lowest beam meets the ground) and the
    /// far edge of the region of interest, needing 5 returns each.
    fn default() -> Self {
        SimConfig {
            sensor: SensorModel::default(),
            roi: RoiConfig::default(),
            min_pts: 5,
            x_min: 3.0,
            x_max: 12.0,
            max_attempts: 200,
            fixtures: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.roi.validate()?;
        if !(self.x_min < self.x_max) || self.max_attempts == 0 {
            return Err(Error::InvalidParameter("placement range must be non-empty"));
        }
        Ok(())
    }

    /// Static background geometry present in every generated frame: the post
    /// stands 1 m off the axis where the lowest beam passes just above `z_min`.
    pub fn fixture_objects(&self) -> Vec<ObjectSpec> {
        const CLEARANCE: f64 = 0.05;
        const LATERAL: f64 = 1.0;
        let Some(&lowest) = self.sensor.elevations_deg().first() else { return Vec::new() };
        let top = self.roi.z_min + CLEARANCE;
        let slope = libm::tan(-lowest.to_radians());
        if !self.fixtures || slope <= 0.0 || top <= self.sensor.ground_z || top >= 0.0 {
            return Vec::new();
        }
        let reach = -(self.roi.z_min + CLEARANCE / 2.0) / slope;
        if reach <= LATERAL {
            return Vec::new();
        }
        let x = libm::sqrt(reach * reach - LATERAL * LATERAL);
        let kind = ObjectKind::Pole { radius: 0.04, height: top - self.sensor.ground_z };
        vec![ObjectSpec { kind, x, y: LATERAL, heading: 0.0 }]
    }

    /// Uniform pose whose footprint lies inside the region of interest and the
    /// sensor sector.
    pub fn sample_pose<R: Rng>(&self, kind: ObjectKind, rng: &mut R) -> Result<ObjectSpec> {
        let r = kind.footprint_radius();
        let x_lo = self.x_min.max(self.roi.x_min + r);
        let x_hi = self.x_max.min(self.roi.x_max) - r;
        if x_lo >= x_hi {
            return Err(Error::InvalidParameter("object does not fit in the placement range"));
        }
        let x = rng.gen_range(x_lo..x_hi);
        let half_sector = (self.sensor.sector_deg / 2.0).min(89.0).to_radians();
        let y_sector = x * libm::tan(half_sector) - r;
        let y_lo = (self.roi.y_min + r).max(-y_sector);
        let y_hi = (self.roi.y_max - r).min(y_sector);
        if y_lo >= y_hi {
            return Err(Error::InvalidParameter("object does not fit in the placement range"));
        }
        let y = rng.gen_range(y_lo..y_hi);
        Ok(ObjectSpec { kind, x, y, heading: rng.gen_range(0.0..2.0 * PI) })
    }
}

/// Post-ROI returns of each object, indexed like `objects`.
pub fn object_returns(frame: &Frame, truth: &SceneTruth, roi: &RoiConfig) -> Vec<Vec<Point3>> {
    let mut out = vec![Vec::new(); truth.object_classes.len()];
    for (p, owner) in frame.points.iter().zip(&truth.point_objects) {
        if let Some(o) = owner {
            if roi.contains(p) {
                out[*o].push(*p);
            }
        }
    }
    out
}

/// One object's post-ROI returns and its class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCluster {
    pub points: Vec<Point3>,
    /// [`HUMAN`] or [`NON_HUMAN`].
    pub label: usize,
    pub kind: &'static str,
}

/// Single-object clusters. The first `n_human` entries are people, the rest
/// clutter. Scene `i` is generated from `derive_seed(seed, i)`.
pub fn gen_labeled_dataset(n_human: usize, n_clutter: usize, seed: u64, cfg: &SimConfig) -> Result<Vec<LabeledCluster>> {
    cfg.validate()?;
    let fixtures = cfg.fixture_objects();
    (0..n_human + n_clutter)
        .map(|i| {
            let scene_seed = derive_seed(seed, i as u64);
            let mut rng = seeded(scene_seed);
            for attempt in 0..cfg.max_attempts {
                let kind = if i < n_human {
                    ObjectKind::sample_human(&mut rng)
                } else {
                    ObjectKind::sample_clutter(&mut rng)
                };
                let obj = cfg.sample_pose(kind, &mut rng)?;
                let (frame, truth) =
                    raycast_with_background(&cfg.sensor, &[obj], &fixtures, derive_seed(scene_seed, attempt as u64))?;
                let points = object_returns(&frame, &truth, &cfg.roi).swap_remove(0);
                if points.len() >= cfg.min_pts.max(1) {
                    return Ok(LabeledCluster { points, label: kind.class(), kind: kind.name() });
                }
            }
            Err(Error::InvalidParameter("no placement produced enough returns"))
        })
        .collect()
}

/// A generated multi-object frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frame: Frame,
    pub truth: SceneTruth,
    pub objects: Vec<ObjectSpec>,
}

/// Places `n_humans` people and `n_clutter` clutter objects with footprints at
/// least `gap` meters apart, resampling until every object leaves
/// `min_pts` post-ROI returns.
pub fn gen_scene(n_humans: usize, n_clutter: usize, gap: f64, seed: u64, cfg: &SimConfig) -> Result<Scene> {
    cfg.validate()?;
    let fixtures = cfg.fixture_objects();
    let mut rng = seeded(seed);
    'attempt: for attempt in 0..cfg.max_attempts {
        let mut objects: Vec<ObjectSpec> = Vec::with_capacity(n_humans + n_clutter);
        for i in 0..n_humans + n_clutter {
            let kind = if i < n_humans {
                ObjectKind::sample_human(&mut rng)
            } else {
                ObjectKind::sample_clutter(&mut rng)
            };
            let placed = (0..cfg.max_attempts).find_map(|_| {
                let o = cfg.sample_pose(kind, &mut rng).ok()?;
                let clear = objects.iter().all(|p| {
                    let d = libm::hypot(p.x - o.x, p.y - o.y);
                    d >= gap + p.kind.footprint_radius() + o.kind.footprint_radius()
                });
                clear.then_some(o)
            });
            match placed {
                Some(o) => objects.push(o),
                None => continue 'attempt,
            }
        }
        let (frame, truth) = raycast_with_background(&cfg.sensor, &objects, &fixtures, derive_seed(seed, attempt as u64))?;
        if object_returns(&frame, &truth, &cfg.roi).iter().all(|r| r.len() >= cfg.min_pts.max(1)) {
            return Ok(Scene { frame, truth, objects });
        }
    }
    Err(Error::InvalidParameter("could not place the requested objects"))
}

/// Post-ROI points of `n_scenes` captures of the empty walkway, which leave
/// only the static fixtures' returns. Scene `i` uses `derive_seed(seed, i)`,
/// so a larger `n_scenes` extends the pool of a smaller one.
pub fn gen_ground_pool(n_scenes: usize, seed: u64, cfg: &SimConfig) -> Result<GroundPool> {
    if n_scenes == 0 {
        return Err(Error::InvalidParameter("ground pool needs at least one scene"));
    }
    let mut rows = Vec::new();
    for i in 0..n_scenes {
        let scene = gen_scene(0, 0, 0.0, derive_seed(seed, i as u64), cfg)?;
        rows.extend(scene.frame.points.iter().filter(|p| cfg.roi.contains(p)).map(|p| p.to_array()));
    }
    GroundPool::new(rows)
}
