//! Seeded urban-like labeled scenes, rigid oracle transforms and brute-force
//! oracles used to check the estimators.
//!
//! Scenes are built in the sensor frame (sensor at the origin, ground plane at
//! `z = -GROUND_Z`). Buildings enclose the sensor and the other
//! representative structures (trunks, poles, signs) are spread over azimuth,
//! so every scene has structure all around the sensor.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti::PoseSE3;
use crate::point::{LabeledCloud, SemanticClass, SemanticPoint};
use crate::pose::RelativePose;
use crate::projection::RingProjection;

/// Sensor height above the ground plane.
pub const GROUND_Z: f64 = 1.73;

/// Closest ground return, set by the lowest beam of a 64-beam sensor.
pub const GROUND_NEAR: f64 = 3.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub walls: usize,
    pub trunks: usize,
    pub poles: usize,
    pub signs: usize,
    pub vegetation: usize,
    pub cars: usize,
    /// Ground points per meter of range per degree of azimuth, spread
    /// uniformly in range like the returns of a spinning sensor.
    pub ground_density: f64,
    /// Points per square meter on object surfaces.
    pub surface_density: f64,
    /// Ground regions labelled with one of the non-road ground classes.
    pub ground_patches: usize,
    /// Radius of the ground disc and outer limit for objects, meters.
    pub extent: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            walls: 8,
            trunks: 12,
            poles: 6,
            signs: 4,
            vegetation: 6,
            cars: 5,
            ground_density: 4.0,
            ground_patches: 12,
            surface_density: 8.0,
            extent: 45.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// No objects and no ground.
    pub fn empty(seed: u64) -> Self {
        Self {
            walls: 0,
            trunks: 0,
            poles: 0,
            signs: 0,
            vegetation: 0,
            cars: 0,
            ground_density: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Default layout at a density giving roughly 120k points, the size of a
    /// 64-beam scan.
    pub fn scan_sized(seed: u64) -> Self {
        Self {
            ground_density: 7.5,
            surface_density: 20.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) {
            return Err(Error::InvalidParams(format!("extent = {} must be > 0", self.extent)));
        }
        if !(self.ground_density >= 0.0) || !(self.surface_density >= 0.0) {
            return Err(Error::InvalidParams("densities must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleTransform {
    pub dx: f64,
    pub dy: f64,
    pub theta_deg: f64,
    pub noise_sigma: f64,
    pub dropout_rate: f64,
}

impl Default for OracleTransform {
    fn default() -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            theta_deg: 0.0,
            noise_sigma: 0.0,
            dropout_rate: 0.0,
        }
    }
}

impl OracleTransform {
    pub fn rigid(dx: f64, dy: f64, theta_deg: f64) -> Self {
        Self {
            dx,
            dy,
            theta_deg,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParams(format!(
                "dropout_rate = {} must be in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "noise_sigma = {} must be >= 0",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn as_pose(&self) -> RelativePose {
        RelativePose::new(self.dx, self.dy, self.theta_deg)
    }

    /// Pose mapping the transformed cloud back onto the original, i.e. what
    /// `estimate_relative_pose(original, transformed)` should return.
    pub fn expected_pose(&self) -> RelativePose {
        self.as_pose().inverse()
    }
}

struct SceneBuilder {
    rng: ChaCha8Rng,
    points: Vec<SemanticPoint>,
    density: f64,
}

impl SceneBuilder {
    fn count(&mut self, area: f64) -> usize {
        let expected = area * self.density;
        let base = expected.floor();
        base as usize + self.rng.random_bool((expected - base).clamp(0.0, 1.0)) as usize
    }

    fn push(&mut self, x: f64, y: f64, z: f64, label: SemanticClass) {
        self.points.push(SemanticPoint::new(x, y, z, label));
    }

    /// Vertical rectangle from `(x0, y0)` to `(x1, y1)`, bottom on the ground.
    fn wall(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, height: f64) {
        let len = (x1 - x0).hypot(y1 - y0);
        let n = self.count(len * height);
        for _ in 0..n {
            let t: f64 = self.rng.random();
            let h: f64 = self.rng.random::<f64>() * height;
            self.push(x0 + t * (x1 - x0), y0 + t * (y1 - y0), h - GROUND_Z, SemanticClass::Building);
        }
    }

    /// Vertical cylinder surface.
    fn cylinder(&mut self, cx: f64, cy: f64, radius: f64, z0: f64, height: f64, label: SemanticClass) {
        let n = self.count(2.0 * PI * radius * height).max(8);
        for _ in 0..n {
            let a = self.rng.random::<f64>() * 2.0 * PI;
            let h = self.rng.random::<f64>() * height;
            self.push(cx + radius * a.cos(), cy + radius * a.sin(), z0 + h, label);
        }
    }

    /// Ellipsoid surface, axis aligned after a yaw `heading`.
    fn ellipsoid(&mut self, c: (f64, f64, f64), radii: (f64, f64, f64), heading: f64, label: SemanticClass) {
        let (a, b, h) = radii;
        let area = 4.0 * PI * ((a * b + a * h + b * h) / 3.0);
        let n = self.count(area).max(8);
        let (s, co) = heading.sin_cos();
        for _ in 0..n {
            let u: f64 = self.rng.random::<f64>() * 2.0 - 1.0;
            let t = self.rng.random::<f64>() * 2.0 * PI;
            let w = (1.0 - u * u).sqrt();
            let (lx, ly, lz) = (a * w * t.cos(), b * w * t.sin(), h * u);
            self.push(c.0 + co * lx - s * ly, c.1 + s * lx + co * ly, c.2 + lz, label);
        }
    }

    /// Box surface (top and sides) of a parked car.
    fn car(&mut self, cx: f64, cy: f64, heading: f64) {
        let (l, w, h) = (4.2, 1.8, 1.5);
        let area = 2.0 * (l + w) * h + l * w;
        let n = self.count(area).max(8);
        let (s, c) = heading.sin_cos();
        for _ in 0..n {
            let face = self.rng.random::<f64>() * area;
            let (lx, ly, lz) = if face < l * w {
                (self.rng.random_range(-l / 2.0..l / 2.0), self.rng.random_range(-w / 2.0..w / 2.0), h)
            } else if face < l * w + 2.0 * l * h {
                let side = if self.rng.random_bool(0.5) { w / 2.0 } else { -w / 2.0 };
                (self.rng.random_range(-l / 2.0..l / 2.0), side, self.rng.random::<f64>() * h)
            } else {
                let side = if self.rng.random_bool(0.5) { l / 2.0 } else { -l / 2.0 };
                (side, self.rng.random_range(-w / 2.0..w / 2.0), self.rng.random::<f64>() * h)
            };
            self.push(cx + c * lx - s * ly, cy + s * lx + c * ly, lz - GROUND_Z, SemanticClass::Car);
        }
    }
}

#[derive(Clone, Copy)]
enum Landmark {
    Trunk,
    Pole,
    Sign,
}

/// Building outline used to bound the ground and the placement of objects.
struct Outline {
    segments: Vec<[(f64, f64); 2]>,
}

impl Outline {
    /// Distance from the origin to the outline along azimuth `az`, or `limit`
    /// when no segment is hit.
    fn radius(&self, az: f64, limit: f64) -> f64 {
        let (dy, dx) = az.sin_cos();
        let mut best = limit;
        for &[(ax, ay), (bx, by)] in &self.segments {
            let (ex, ey) = (bx - ax, by - ay);
            // solve t * d = a + u * e
            let den = dx * ey - dy * ex;
            if den.abs() < 1e-12 {
                continue;
            }
            let t = (ax * ey - ay * ex) / den;
            let u = (ax * dy - ay * dx) / den;
            if t > 0.0 && (0.0..=1.0).contains(&u) {
                best = best.min(t);
            }
        }
        best
    }
}

const GROUND_PATCH_CLASSES: [SemanticClass; 4] = [
    SemanticClass::Sidewalk,
    SemanticClass::Parking,
    SemanticClass::OtherGround,
    SemanticClass::Terrain,
];

/// Where the buildings, road and small objects go.
struct Site {
    outline: Outline,
    road_heading: f64,
    road_half: f64,
    /// `(x, y)` of each trunk, pole and sign.
    landmarks: Vec<(f64, f64)>,
    vegetation: Vec<(f64, f64)>,
}

/// Buildings on a star-shaped footprint around the sensor, one wall per
/// vertex with gaps at the corners. Structures are kept far relative to the
/// translations under test: the ring yaw search is biased by roughly
/// `|t| / r` for structures at range `r`.
fn block_site(spec: &SceneSpec, b: &mut SceneBuilder, far: f64, landmarks: usize) -> Site {
    let offset = b.rng.random::<f64>() * 2.0 * PI;
    let nw = spec.walls;
    let vertices: Vec<(f64, f64)> = (0..nw)
        .map(|k| {
            let az = offset + 2.0 * PI * (k as f64 + b.rng.random_range(0.3..0.7)) / nw as f64;
            let r = b.rng.random_range(0.75..1.1) * far;
            (r * az.cos(), r * az.sin())
        })
        .collect();
    let mut vertices = vertices;
    if nw >= 3 {
        // put the sensor near the middle of the block as seen over azimuth
        for _ in 0..3 {
            let o = Outline {
                segments: (0..nw).map(|k| [vertices[k], vertices[(k + 1) % nw]]).collect(),
            };
            let (mut cx, mut cy) = (0.0, 0.0);
            for k in 0..360 {
                let az = (k as f64 + 0.5).to_radians();
                let r = o.radius(az, far);
                cx += r * az.cos() / 360.0;
                cy += r * az.sin() / 360.0;
            }
            for v in &mut vertices {
                v.0 -= cx;
                v.1 -= cy;
            }
        }
    }
    let mut segments = Vec::new();
    for k in 0..nw {
        let (ax, ay) = vertices[k];
        let (bx, by) = if nw >= 3 {
            vertices[(k + 1) % nw]
        } else {
            // too few for a closed block: a free-standing wall facing the sensor
            let len = b.rng.random_range(6.0..20.0);
            let d = ax.hypot(ay);
            (ax - ay / d * len, ay + ax / d * len)
        };
        let t0 = b.rng.random_range(0.0..0.2);
        let t1 = 1.0 - b.rng.random_range(0.0..0.2);
        let height = b.rng.random_range(4.0..12.0);
        let (ex, ey) = (bx - ax, by - ay);
        b.wall(ax + t0 * ex, ay + t0 * ey, ax + t1 * ex, ay + t1 * ey, height);
        if nw >= 3 {
            segments.push([(ax, ay), (bx, by)]);
        }
    }
    let outline = Outline { segments };

    // stratified over azimuth
    let n = landmarks.max(1) as f64;
    let offset = b.rng.random::<f64>() * 2.0 * PI;
    let landmarks = (0..landmarks)
        .map(|k| {
            let az = offset + 2.0 * PI * (k as f64 + b.rng.random_range(0.15..0.85)) / n;
            let rr = outline.radius(az, far);
            let hi = (rr * 0.8).max(6.5);
            let d = b.rng.random_range((0.6 * rr).clamp(6.0, hi - 0.5)..hi);
            (d * az.cos(), d * az.sin())
        })
        .collect();
    let vegetation = (0..spec.vegetation)
        .map(|_| {
            let az = b.rng.random::<f64>() * 2.0 * PI;
            let hi = (outline.radius(az, far) * 0.85).max(6.5);
            let d = b.rng.random_range(6.0..hi);
            (d * az.cos(), d * az.sin())
        })
        .collect();
    Site {
        outline,
        road_heading: b.rng.random::<f64>() * PI,
        road_half: b.rng.random_range(3.0..4.5),
        landmarks,
        vegetation,
    }
}

/// Builds a deterministic scene from `spec`: an enclosed block of buildings,
/// landmarks and vegetation in front of them, a road through the sensor with
/// cars on it, and ground patches of several classes filling the area inside
/// the block.
pub fn generate_scene(spec: &SceneSpec) -> LabeledCloud {
    let mut b = SceneBuilder {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        points: Vec::new(),
        density: spec.surface_density,
    };
    let extent = spec.extent;
    let far = extent.min(40.0);

    let mut kinds: Vec<Landmark> = std::iter::repeat_n(Landmark::Trunk, spec.trunks)
        .chain(std::iter::repeat_n(Landmark::Pole, spec.poles))
        .chain(std::iter::repeat_n(Landmark::Sign, spec.signs))
        .collect();
    kinds.shuffle(&mut b.rng);
    let site = block_site(spec, &mut b, far, kinds.len());

    for (kind, &(cx, cy)) in kinds.into_iter().zip(&site.landmarks) {
        match kind {
            Landmark::Trunk => {
                let r = b.rng.random_range(0.15..0.35);
                let h = b.rng.random_range(2.0..4.0);
                b.cylinder(cx, cy, r, -GROUND_Z, h, SemanticClass::Trunk);
            }
            Landmark::Pole => {
                let r = b.rng.random_range(0.08..0.15);
                let h = b.rng.random_range(4.0..8.0);
                b.cylinder(cx, cy, r, -GROUND_Z, h, SemanticClass::Pole);
            }
            Landmark::Sign => {
                let facing = cy.atan2(cx) + b.rng.random_range(-0.5..0.5);
                let (fs, fc) = (facing + PI / 2.0).sin_cos();
                let z0 = b.rng.random_range(1.8..3.0) - GROUND_Z;
                let m = b.count(0.6 * 0.6).max(12);
                for _ in 0..m {
                    let u = b.rng.random_range(-0.3..0.3);
                    let v = b.rng.random_range(0.0..0.6);
                    b.push(cx + fc * u, cy + fs * u, z0 + v, SemanticClass::TrafficSign);
                }
            }
        }
    }

    for &(x, y) in &site.vegetation {
        let radii = (b.rng.random_range(1.0..2.5), b.rng.random_range(1.0..2.5), b.rng.random_range(0.8..2.0));
        let heading = b.rng.random::<f64>() * PI;
        let cz = radii.2 - GROUND_Z + 0.2;
        b.ellipsoid((x, y, cz), radii, heading, SemanticClass::Vegetation);
    }

    let (rs, rc) = site.road_heading.sin_cos();
    let road_half = site.road_half;
    for _ in 0..spec.cars {
        let along = b.rng.random_range(-far..far);
        let side = if b.rng.random_bool(0.5) { 0.6 } else { -0.6 } * road_half;
        let (cx, cy) = (rc * along - rs * side, rs * along + rc * side);
        let d = cx.hypot(cy);
        if d > 5.0 && d < site.outline.radius(cy.atan2(cx), far) - 3.0 {
            b.car(cx, cy, site.road_heading);
        }
    }

    if spec.ground_density > 0.0 {
        let patches: Vec<(f64, f64, SemanticClass)> = (0..spec.ground_patches.max(1))
            .map(|_| {
                let az = b.rng.random::<f64>() * 2.0 * PI;
                let d = site.outline.radius(az, extent) * b.rng.random::<f64>().sqrt();
                let label = GROUND_PATCH_CLASSES[b.rng.random_range(0..GROUND_PATCH_CLASSES.len())];
                (d * az.cos(), d * az.sin(), label)
            })
            .collect();
        let near = GROUND_NEAR.min(extent * 0.5);
        let n = (spec.ground_density * 360.0 * (extent - near)).round() as usize;
        for _ in 0..n {
            let r = b.rng.random_range(near..extent);
            let a = b.rng.random::<f64>() * 2.0 * PI;
            if r >= site.outline.radius(a, extent) {
                continue;
            }
            let (x, y) = (r * a.cos(), r * a.sin());
            let label = if (-rs * x + rc * y).abs() < road_half {
                SemanticClass::Road
            } else {
                patches
                    .iter()
                    .min_by(|p, q| (p.0 - x).hypot(p.1 - y).total_cmp(&(q.0 - x).hypot(q.1 - y)))
                    .map_or(SemanticClass::Terrain, |p| p.2)
            };
            let z = -GROUND_Z + b.rng.random_range(-0.03..0.03);
            b.push(x, y, z, label);
        }
    }

    LabeledCloud::new(b.points, 0)
}

/// Applies rotation, translation, per-axis Gaussian noise and independent
/// point dropout, in that order.
pub fn apply_transform(cloud: &LabeledCloud, t: &OracleTransform, seed: u64) -> LabeledCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, t.noise_sigma.max(0.0)).expect("finite sigma");
    let (s, c) = t.theta_deg.to_radians().sin_cos();
    let mut points = Vec::with_capacity(cloud.len());
    for p in cloud.iter() {
        if t.dropout_rate > 0.0 && rng.random::<f64>() < t.dropout_rate {
            continue;
        }
        let mut q = SemanticPoint::new(c * p.x - s * p.y + t.dx, s * p.x + c * p.y + t.dy, p.z, p.label);
        if t.noise_sigma > 0.0 {
            q.x += noise.sample(&mut rng);
            q.y += noise.sample(&mut rng);
            q.z += noise.sample(&mut rng);
        }
        points.push(q);
    }
    LabeledCloud::new(points, cloud.frame_id)
}

/// Result of the exhaustive translation search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTranslation {
    pub dx: f64,
    pub dy: f64,
    pub loss: f64,
}

/// Label-gated ICP loss at translation `(dx, dy)` with full (non-windowed)
/// nearest-neighbour correspondences. Points without a same-label target
/// contribute nothing.
pub fn full_correspondence_loss(target: &RingProjection, rotated: &RingProjection, dx: f64, dy: f64) -> f64 {
    let targets: Vec<_> = target.slots().iter().flatten().collect();
    rotated
        .slots()
        .iter()
        .flatten()
        .filter_map(|a| {
            let (ax, ay) = (a.x + dx, a.y + dy);
            targets
                .iter()
                .filter(|t| t.label == a.label)
                .map(|t| (t.x - ax).powi(2) + (t.y - ay).powi(2))
                .min_by(f64::total_cmp)
        })
        .map(|d2| 0.5 * d2)
        .sum()
}

/// Exhaustive minimization of the label-gated ICP loss over the grid
/// `[-bound, bound]²` with spacing `grid_step`. Ties keep the first grid point
/// in x-major order.
pub fn oracle_translation(
    target: &RingProjection,
    rotated: &RingProjection,
    grid_step: f64,
    bound: f64,
) -> Result<OracleTranslation> {
    if !(grid_step > 0.0) || !(bound >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "grid_step = {grid_step}, bound = {bound}"
        )));
    }
    // group targets by label once; the grid loop is the hot path
    let mut by_label: Vec<Vec<(f64, f64)>> = vec![Vec::new(); crate::point::NUM_CLASSES];
    for t in target.slots().iter().flatten() {
        by_label[t.label.code() as usize].push((t.x, t.y));
    }
    // (source x, source y, same-label targets)
    type Source<'a> = (f64, f64, &'a [(f64, f64)]);
    let sources: Vec<Source> = rotated
        .slots()
        .iter()
        .flatten()
        .filter_map(|a| {
            let c = &by_label[a.label.code() as usize];
            (!c.is_empty()).then_some((a.x, a.y, c.as_slice()))
        })
        .collect();

    let steps = (bound / grid_step).round() as i64;
    let mut best = OracleTranslation {
        dx: 0.0,
        dy: 0.0,
        loss: f64::INFINITY,
    };
    for ix in -steps..=steps {
        let dx = ix as f64 * grid_step;
        for iy in -steps..=steps {
            let dy = iy as f64 * grid_step;
            let mut loss = 0.0;
            for &(ax, ay, cands) in &sources {
                let (px, py) = (ax + dx, ay + dy);
                let mut m = f64::INFINITY;
                for &(cx, cy) in cands {
                    let d2 = (cx - px) * (cx - px) + (cy - py) * (cy - py);
                    if d2 < m {
                        m = d2;
                    }
                }
                loss += m;
                if 0.5 * loss >= best.loss {
                    break;
                }
            }
            let loss = 0.5 * loss;
            if loss < best.loss {
                best = OracleTranslation { dx, dy, loss };
            }
        }
    }
    Ok(best)
}

/// A synthetic drive with planted revisits, in memory.
#[derive(Debug, Clone)]
pub struct PlantedSequence {
    pub clouds: Vec<LabeledCloud>,
    /// LiDAR-frame poses.
    pub poses: Vec<PoseSE3>,
    /// `(earlier frame, revisit frame)` of each planted loop.
    pub loops: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSequenceSpec {
    pub frames: usize,
    /// Each loop: (frame revisited, relative pose of the revisit in that frame).
    pub loops: Vec<(usize, RelativePose)>,
    /// Distance between consecutive distinct places along the route, meters.
    pub spacing: f64,
    pub noise_sigma: f64,
    pub dropout_rate: f64,
    pub scene: SceneSpec,
    pub seed: u64,
}

impl Default for PlantedSequenceSpec {
    /// 20 frames: 18 distinct places, a same-direction revisit of frame 3 and
    /// a reverse revisit of frame 10.
    fn default() -> Self {
        Self {
            frames: 20,
            loops: vec![
                (3, RelativePose::new(1.2, -0.8, 12.0)),
                (10, RelativePose::new(-1.0, 1.5, 180.0)),
            ],
            spacing: 40.0,
            noise_sigma: 0.0,
            dropout_rate: 0.0,
            scene: SceneSpec::default(),
            seed: 7,
        }
    }
}

/// Builds the sequence: frames `0..frames - loops.len()` are distinct places
/// on a straight route; the remaining frames revisit the listed places.
pub fn planted_loop_sequence(spec: &PlantedSequenceSpec) -> Result<PlantedSequence> {
    let distinct = spec
        .frames
        .checked_sub(spec.loops.len())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::InvalidParams("more loops than frames".into()))?;
    let transform = OracleTransform {
        noise_sigma: spec.noise_sigma,
        dropout_rate: spec.dropout_rate,
        ..OracleTransform::default()
    };
    transform.validate()?;

    let mut scenes = Vec::with_capacity(distinct);
    let mut clouds = Vec::with_capacity(spec.frames);
    let mut poses = Vec::with_capacity(spec.frames);
    for k in 0..distinct {
        let scene = generate_scene(&spec.scene.clone().with_seed(spec.seed.wrapping_mul(1000).wrapping_add(k as u64)));
        let noisy = apply_transform(&scene, &transform, spec.seed ^ ((k as u64) << 20));
        clouds.push(LabeledCloud::new(noisy.points, k as u32));
        scenes.push(scene);
        poses.push(PoseSE3::from_planar(k as f64 * spec.spacing, 0.0, 0.0, 0.0));
    }
    let mut loops = Vec::with_capacity(spec.loops.len());
    for (n, &(place, rel)) in spec.loops.iter().enumerate() {
        if place >= distinct {
            return Err(Error::InvalidParams(format!("loop revisits unknown frame {place}")));
        }
        let frame = distinct + n;
        // points of the revisit frame j satisfy p_place = rel · p_j
        let inv = rel.inverse();
        let t = OracleTransform {
            dx: inv.dx,
            dy: inv.dy,
            theta_deg: inv.theta_deg,
            ..transform
        };
        let cloud = apply_transform(&scenes[place], &t, spec.seed ^ ((frame as u64) << 20));
        clouds.push(LabeledCloud::new(cloud.points, frame as u32));
        let rel3 = PoseSE3::from_planar(rel.dx, rel.dy, 0.0, rel.theta_deg);
        poses.push(poses[place].compose(&rel3));
        loops.push((place, frame));
    }
    Ok(PlantedSequence { clouds, poses, loops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{build_ring, filter_representative, RingPoint};

    #[test]
    fn single_trunk_scene() {
        let spec = SceneSpec {
            trunks: 1,
            ..SceneSpec::empty(3)
        };
        let cloud = generate_scene(&spec);
        assert!(!cloud.is_empty());
        assert!(cloud.iter().all(|p| p.label == SemanticClass::Trunk));
        let (mx, my) = cloud.iter().fold((0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y));
        let (mx, my) = (mx / cloud.len() as f64, my / cloud.len() as f64);
        // all points on one thin cylinder
        assert!(cloud.iter().all(|p| (p.x - mx).hypot(p.y - my) <= 0.36));
    }

    #[test]
    fn scenes_are_deterministic() {
        let spec = SceneSpec::default().with_seed(42);
        let a = generate_scene(&spec);
        let b = generate_scene(&spec);
        assert_eq!(a, b);
        assert_ne!(a, generate_scene(&spec.clone().with_seed(43)));
    }

    #[test]
    fn default_scene_has_representative_variety() {
        for seed in 0..10 {
            let cloud = generate_scene(&SceneSpec::default().with_seed(seed));
            let f = filter_representative(&cloud);
            let mut classes: Vec<_> = f.iter().map(|p| p.label).collect();
            classes.sort();
            classes.dedup();
            assert!(classes.len() >= 4, "seed {seed}: {classes:?}");

            let ring = build_ring(&f, 360);
            let mut octants = [false; 8];
            for (k, s) in ring.slots().iter().enumerate() {
                if s.is_some() {
                    octants[k * 8 / 360] = true;
                }
            }
            assert!(octants.iter().filter(|&&o| o).count() >= 3);
        }
    }

    #[test]
    fn transform_cases() {
        let cloud = LabeledCloud::new(vec![SemanticPoint::new(1.0, 0.0, 2.5, SemanticClass::Pole)], 0);
        assert_eq!(apply_transform(&cloud, &OracleTransform::default(), 1), cloud);
        let t = apply_transform(&cloud, &OracleTransform::rigid(0.5, 2.0, 180.0), 1);
        let p = t.points[0];
        assert!((p.x - (-1.0 + 0.5)).abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
        assert_eq!(p.z, 2.5);
    }

    #[test]
    fn dropout_is_binomial() {
        let cloud = LabeledCloud::new(
            (0..10_000).map(|i| SemanticPoint::new(i as f64, 1.0, 0.0, SemanticClass::Building)).collect(),
            0,
        );
        let t = OracleTransform {
            dropout_rate: 0.5,
            ..Default::default()
        };
        let kept = apply_transform(&cloud, &t, 99).len();
        // 4 sigma of Binomial(10000, 0.5) is 200
        assert!((4800..=5200).contains(&kept), "{kept}");
        assert_eq!(apply_transform(&cloud, &t, 99).len(), kept);
    }

    #[test]
    fn transform_validation() {
        assert!(OracleTransform { dropout_rate: 1.0, ..Default::default() }.validate().is_err());
        assert!(OracleTransform { noise_sigma: -1.0, ..Default::default() }.validate().is_err());
        assert!(OracleTransform::rigid(1.0, 2.0, 3.0).validate().is_ok());
    }

    #[test]
    fn expected_pose_inverts() {
        let t = OracleTransform::rigid(2.0, -1.0, 30.0);
        let e = t.expected_pose();
        let (x, y) = t.as_pose().apply(3.0, 7.0);
        let (bx, by) = e.apply(x, y);
        assert!((bx - 3.0).abs() < 1e-12 && (by - 7.0).abs() < 1e-12);
    }

    fn two_point_rings(shift: (f64, f64)) -> (RingProjection, RingProjection) {
        let target = RingProjection::from_slots(vec![
            Some(RingPoint::new(5.0, 0.0, SemanticClass::Pole)),
            None,
            Some(RingPoint::new(-4.0, 1.0, SemanticClass::Trunk)),
            None,
        ]);
        let moved = RingProjection::from_slots(
            target
                .slots()
                .iter()
                .map(|s| s.map(|p| RingPoint::new(p.x - shift.0, p.y - shift.1, p.label)))
                .collect(),
        );
        (target, moved)
    }

    #[test]
    fn oracle_identity_and_unit_shift() {
        let (t, m) = two_point_rings((0.0, 0.0));
        let o = oracle_translation(&t, &m, 0.05, 1.0).unwrap();
        assert_eq!((o.dx, o.dy, o.loss), (0.0, 0.0, 0.0));

        let (t, m) = two_point_rings((1.0, 0.0));
        let o = oracle_translation(&t, &m, 0.01, 3.0).unwrap();
        assert!((o.dx - 1.0).abs() <= 0.01 && o.dy.abs() <= 0.01, "{o:?}");
        assert!(o.loss < 1e-9);
        assert!((full_correspondence_loss(&t, &m, o.dx, o.dy) - o.loss).abs() < 1e-12);
    }

    #[test]
    fn oracle_matches_two_point_analytic_optimum() {
        // one pole each side with unequal offsets: optimum is the mean residual
        let target = RingProjection::from_slots(vec![
            Some(RingPoint::new(5.0, 0.0, SemanticClass::Pole)),
            Some(RingPoint::new(-5.0, 0.0, SemanticClass::Trunk)),
        ]);
        let moved = RingProjection::from_slots(vec![
            Some(RingPoint::new(4.6, 0.2, SemanticClass::Pole)),
            Some(RingPoint::new(-5.2, -0.4, SemanticClass::Trunk)),
        ]);
        // mean of (0.4, -0.2) and (0.2, 0.4)
        let o = oracle_translation(&target, &moved, 0.01, 1.0).unwrap();
        assert!((o.dx - 0.3).abs() < 0.006 && (o.dy - 0.1).abs() < 0.006, "{o:?}");
        assert!(oracle_translation(&target, &moved, 0.0, 1.0).is_err());
    }

    #[test]
    fn planted_sequence_shape() {
        let seq = planted_loop_sequence(&PlantedSequenceSpec::default()).unwrap();
        assert_eq!(seq.clouds.len(), 20);
        assert_eq!(seq.poses.len(), 20);
        assert_eq!(seq.loops, vec![(3, 18), (10, 19)]);
        assert!(seq.poses[3].planar_distance(&seq.poses[18]) < 3.0);
        assert!(seq.poses[10].planar_distance(&seq.poses[19]) < 3.0);
        assert!(seq.poses[0].planar_distance(&seq.poses[1]) > 20.0);
        for (i, c) in seq.clouds.iter().enumerate() {
            assert_eq!(c.frame_id as usize, i);
        }
    }
}
