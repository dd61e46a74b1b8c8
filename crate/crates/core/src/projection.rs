//! Representative-class filtering and the azimuth ring projection.
//!
//! The ring keeps, per azimuth sector, the filtered point with the smallest
//! polar radius. Sector 0 starts at `φ = -π`, the same origin as descriptor
//! column 1.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::point::{LabeledCloud, SemanticClass};

/// Classes kept for pose estimation: static, thin, view-stable structure.
pub const REPRESENTATIVE_CLASSES: [SemanticClass; 4] = [
    SemanticClass::Building,
    SemanticClass::Trunk,
    SemanticClass::TrafficSign,
    SemanticClass::Pole,
];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SicpParams {
    /// Sector count of the ring.
    pub na: usize,
    /// Correspondence window length in sectors.
    pub nl: usize,
    pub max_iters: usize,
    /// Stop once the translation update is shorter than this (meters).
    pub converge_eps: f64,
}

impl Default for SicpParams {
    fn default() -> Self {
        Self {
            na: 360,
            nl: 20,
            max_iters: 30,
            converge_eps: 1e-3,
        }
    }
}

impl SicpParams {
    pub fn validate(&self) -> Result<()> {
        if self.na < 4 {
            return Err(Error::InvalidParams(format!("na = {} must be >= 4", self.na)));
        }
        if self.nl == 0 || self.nl > self.na {
            return Err(Error::InvalidParams(format!(
                "nl = {} must be in 1..={}",
                self.nl, self.na
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be >= 1".into()));
        }
        if !(self.converge_eps > 0.0) {
            return Err(Error::InvalidParams("converge_eps must be > 0".into()));
        }
        Ok(())
    }
}

pub fn filter_classes(cloud: &LabeledCloud, classes: &[SemanticClass]) -> LabeledCloud {
    LabeledCloud {
        points: cloud
            .iter()
            .filter(|p| classes.contains(&p.label))
            .copied()
            .collect(),
        frame_id: cloud.frame_id,
    }
}

pub fn filter_representative(cloud: &LabeledCloud) -> LabeledCloud {
    filter_classes(cloud, &REPRESENTATIVE_CLASSES)
}

/// Polar radius and quadrant-aware angle in `[-π, π)`.
pub fn to_polar(x: f64, y: f64) -> Result<(f64, f64)> {
    if x == 0.0 && y == 0.0 {
        return Err(Error::DegeneratePoint);
    }
    let mut phi = y.atan2(x);
    if phi >= PI {
        phi = -PI;
    }
    Ok(((x * x + y * y).sqrt(), phi))
}

/// Sector index of angle `phi` (radians) for `n` sectors starting at `-π`.
#[inline]
pub fn sector_index(phi: f64, n: usize) -> usize {
    let k = ((phi + PI) * n as f64 / (2.0 * PI)).floor();
    (k.max(0.0) as usize).min(n - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingPoint {
    pub r: f64,
    pub x: f64,
    pub y: f64,
    pub label: SemanticClass,
}

impl RingPoint {
    pub fn new(x: f64, y: f64, label: SemanticClass) -> Self {
        Self {
            r: x.hypot(y),
            x,
            y,
            label,
        }
    }

    fn precedes(&self, other: &RingPoint) -> bool {
        (self.r, self.x, self.y, self.label.code()) < (other.r, other.x, other.y, other.label.code())
    }
}

/// Azimuth-ordered nearest representative point per sector.
#[derive(Debug, Clone, PartialEq)]
pub struct RingProjection {
    slots: Vec<Option<RingPoint>>,
}

impl RingProjection {
    pub fn from_slots(slots: Vec<Option<RingPoint>>) -> Self {
        Self { slots }
    }

    pub fn empty(na: usize) -> Self {
        Self {
            slots: vec![None; na],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Option<RingPoint>] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [Option<RingPoint>] {
        &mut self.slots
    }

    pub fn get(&self, k: usize) -> Option<&RingPoint> {
        self.slots[k].as_ref()
    }

    pub fn occupied(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn radius(&self, k: usize) -> Option<f64> {
        self.slots[k].map(|p| p.r)
    }

    /// Rolls slot contents forward: `out[k] = self[(k - m) mod n]`.
    pub fn cyclic_shift(&self, m: usize) -> Self {
        let n = self.slots.len();
        let mut slots = self.slots.clone();
        slots.rotate_right(m % n.max(1));
        Self { slots }
    }
}

/// Projects an already-filtered cloud onto `na` azimuth sectors.
///
/// Points exactly at the origin have no azimuth and are skipped.
pub fn build_ring(cloud: &LabeledCloud, na: usize) -> RingProjection {
    let mut slots: Vec<Option<RingPoint>> = vec![None; na];
    for p in cloud.iter() {
        let Ok((r, phi)) = to_polar(p.x, p.y) else {
            continue;
        };
        let candidate = RingPoint {
            r,
            x: p.x,
            y: p.y,
            label: p.label,
        };
        let slot = &mut slots[sector_index(phi, na)];
        match slot {
            Some(cur) if !candidate.precedes(cur) => {}
            _ => *slot = Some(candidate),
        }
    }
    RingProjection { slots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::SemanticPoint;
    use proptest::prelude::*;

    fn pt(x: f64, y: f64, label: SemanticClass) -> SemanticPoint {
        SemanticPoint::new(x, y, 0.0, label)
    }

    #[test]
    fn filter_keeps_representative_in_order() {
        let cloud = LabeledCloud::new(
            vec![
                pt(1.0, 0.0, SemanticClass::Road),
                pt(2.0, 0.0, SemanticClass::Building),
                pt(3.0, 0.0, SemanticClass::Pole),
            ],
            0,
        );
        let f = filter_representative(&cloud);
        assert_eq!(f.len(), 2);
        assert_eq!(f.points[0].label, SemanticClass::Building);
        assert_eq!(f.points[1].label, SemanticClass::Pole);

        let road = LabeledCloud::new(vec![pt(1.0, 0.0, SemanticClass::Road)], 0);
        assert!(filter_representative(&road).is_empty());
        assert!(filter_representative(&LabeledCloud::default()).is_empty());
    }

    #[test]
    fn polar_conventions() {
        assert_eq!(to_polar(1.0, 0.0).unwrap(), (1.0, 0.0));
        let (r, phi) = to_polar(0.0, 2.0).unwrap();
        assert_eq!(r, 2.0);
        assert!((phi - PI / 2.0).abs() < 1e-15);
        assert_eq!(to_polar(-1.0, 0.0).unwrap(), (1.0, -PI));
        assert_eq!(to_polar(-1.0, -0.0).unwrap(), (1.0, -PI));
        assert!(matches!(to_polar(0.0, 0.0), Err(Error::DegeneratePoint)));
    }

    #[test]
    fn ring_keeps_nearest() {
        let cloud = LabeledCloud::new(
            vec![
                pt(5.0, 0.001, SemanticClass::Building),
                pt(3.0, 0.001, SemanticClass::Pole),
            ],
            0,
        );
        let ring = build_ring(&cloud, 360);
        assert_eq!(ring.occupied(), 1);
        let s = ring.get(180).unwrap();
        assert_eq!(s.r, (9.0f64 + 0.001 * 0.001).sqrt());
        assert_eq!(s.label, SemanticClass::Pole);
    }

    #[test]
    fn ring_quadrants() {
        let cloud = LabeledCloud::new(
            vec![
                pt(1.0, 1.0, SemanticClass::Building),
                pt(-1.0, -1.0, SemanticClass::Building),
                pt(-1.0, 1.0, SemanticClass::Building),
                pt(1.0, -1.0, SemanticClass::Building),
            ],
            0,
        );
        let ring = build_ring(&cloud, 4);
        assert_eq!(ring.occupied(), 4);
        let xs: Vec<(f64, f64)> = ring.slots().iter().map(|s| (s.unwrap().x, s.unwrap().y)).collect();
        assert_eq!(xs, vec![(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]);
    }

    #[test]
    fn ring_single_sector_and_empty() {
        let cloud = LabeledCloud::new(vec![pt(-1.0, -0.001, SemanticClass::Trunk)], 0);
        let ring = build_ring(&cloud, 8);
        assert!(ring.get(0).is_some());
        assert_eq!(ring.occupied(), 1);
        let empty = build_ring(&LabeledCloud::default(), 8);
        assert_eq!((empty.len(), empty.occupied()), (8, 0));
    }

    #[test]
    fn params_validation() {
        assert!(SicpParams::default().validate().is_ok());
        assert!(SicpParams { na: 3, ..Default::default() }.validate().is_err());
        assert!(SicpParams { nl: 0, ..Default::default() }.validate().is_err());
        assert!(SicpParams { nl: 361, ..Default::default() }.validate().is_err());
        assert!(SicpParams { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(SicpParams { converge_eps: 0.0, ..Default::default() }.validate().is_err());
    }

    fn arb_cloud() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64, -2.0..5.0f64), 1..80)
    }

    proptest! {
        #[test]
        fn ring_order_invariant(pts in arb_cloud(), seed in any::<u64>()) {
            let cloud = LabeledCloud::new(
                pts.iter().map(|&(x, y, z)| SemanticPoint::new(x, y, z, SemanticClass::Building)).collect(),
                0,
            );
            let mut shuffled = cloud.clone();
            let n = shuffled.points.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.points.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(build_ring(&cloud, 72), build_ring(&shuffled, 72));
        }

        #[test]
        fn ring_ignores_z(pts in arb_cloud(), dz in -10.0..10.0f64) {
            let cloud = LabeledCloud::new(
                pts.iter().map(|&(x, y, z)| SemanticPoint::new(x, y, z, SemanticClass::Pole)).collect(),
                0,
            );
            let mut lifted = cloud.clone();
            for p in &mut lifted.points {
                p.z += dz;
            }
            prop_assert_eq!(build_ring(&cloud, 90), build_ring(&lifted, 90));
        }

        #[test]
        fn ring_slot_invariants(pts in arb_cloud()) {
            let cloud = LabeledCloud::new(
                pts.iter().map(|&(x, y, z)| SemanticPoint::new(x, y, z, SemanticClass::Trunk)).collect(),
                0,
            );
            let na = 60;
            let ring = build_ring(&cloud, na);
            prop_assert_eq!(ring.len(), na);
            for (k, slot) in ring.slots().iter().enumerate() {
                if let Some(s) = slot {
                    let (r, phi) = to_polar(s.x, s.y).unwrap();
                    prop_assert_eq!(sector_index(phi, na), k);
                    prop_assert!((s.r - r).abs() <= 1e-9 * r);
                    for p in cloud.iter() {
                        let (pr, pphi) = to_polar(p.x, p.y).unwrap();
                        if sector_index(pphi, na) == k {
                            prop_assert!(s.r <= pr);
                        }
                    }
                }
            }
        }

        #[test]
        fn rotation_by_whole_sectors_permutes(
            sectors in prop::collection::btree_set(0usize..36, 1..20),
            m in 0usize..36,
            radii in prop::collection::vec(1.0..40.0f64, 36),
        ) {
            let na = 36;
            let step = 2.0 * PI / na as f64;
            // points at sector centres, away from boundaries
            let pts: Vec<SemanticPoint> = sectors.iter().map(|&k| {
                let phi = -PI + (k as f64 + 0.5) * step;
                SemanticPoint::new(radii[k] * phi.cos(), radii[k] * phi.sin(), 0.0, SemanticClass::Building)
            }).collect();
            let rot = m as f64 * step;
            let (s, c) = rot.sin_cos();
            let rotated: Vec<SemanticPoint> = pts.iter()
                .map(|p| SemanticPoint::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z, p.label))
                .collect();
            let a = build_ring(&LabeledCloud::new(pts, 0), na);
            let b = build_ring(&LabeledCloud::new(rotated, 0), na);
            let expected = a.cyclic_shift(m);
            for k in 0..na {
                prop_assert_eq!(b.get(k).is_some(), expected.get(k).is_some());
                if let (Some(x), Some(y)) = (b.get(k), expected.get(k)) {
                    prop_assert!((x.r - y.r).abs() < 1e-9);
                }
            }
        }
    }
}
