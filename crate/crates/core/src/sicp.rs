//! Two-step global semantic ICP.
//!
//! Step one finds the yaw by comparing the ring radius vectors under every
//! cyclic shift (mean absolute difference over jointly occupied sectors).
//! Step two rotates the second ring by that yaw and solves for the planar
//! translation with an ICP whose correspondences are restricted to points of
//! the same class inside a circular window of sectors around the yaw-consistent
//! position. The least-squares translation update is the mean residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::LabeledCloud;
use crate::pose::{normalize_deg, RelativePose};
use crate::projection::{build_ring, filter_representative, RingPoint, RingProjection, SicpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YawEstimate {
    /// Cyclic shift `s` minimizing the ring distance, `ring2[(k + s) mod n] ~ ring1[k]`.
    pub shift: usize,
    /// Rotation (degrees, `(-180, 180]`) bringing the second ring onto the first.
    pub theta_deg: f64,
    /// Mean absolute radius difference at `shift`.
    pub residual: f64,
}

/// Yaw in degrees corresponding to a ring shift.
pub fn shift_to_theta(shift: usize, na: usize) -> f64 {
    normalize_deg(360.0 - 360.0 * shift as f64 / na as f64)
}

/// Ring shift whose yaw is closest to `theta_deg`.
pub fn theta_to_shift(theta_deg: f64, na: usize) -> usize {
    let s = ((360.0 - theta_deg) * na as f64 / 360.0).round() as i64;
    s.rem_euclid(na as i64) as usize
}

fn check_same_len(a: &RingProjection, b: &RingProjection) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("rings have {} and {} sectors", a.len(), b.len())));
    }
    Ok(())
}

/// Mean absolute radius difference between `ring1` and `ring2` shifted by
/// `shift`, over sectors occupied in both. `None` when no sector overlaps.
pub fn ring_distance(ring1: &RingProjection, ring2: &RingProjection, shift: usize) -> Option<f64> {
    let n = ring1.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..n {
        if let (Some(a), Some(b)) = (ring1.radius(k), ring2.radius((k + shift) % n)) {
            sum += (a - b).abs();
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn compute_yaw(ring1: &RingProjection, ring2: &RingProjection) -> Result<YawEstimate> {
    check_same_len(ring1, ring2)?;
    let n = ring1.len();
    // flat copies: radius or NaN for empty sectors
    let r1: Vec<f64> = (0..n).map(|k| ring1.radius(k).unwrap_or(f64::NAN)).collect();
    let r2: Vec<f64> = (0..n).map(|k| ring2.radius(k).unwrap_or(f64::NAN)).collect();

    let mut best: Option<(usize, f64)> = None;
    for shift in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (k, &a) in r1.iter().enumerate() {
            let b = r2[(k + shift) % n];
            if !a.is_nan() && !b.is_nan() {
                sum += (a - b).abs();
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let psi = sum / count as f64;
        if best.is_none_or(|(_, v)| psi < v) {
            best = Some((shift, psi));
        }
    }
    let (shift, residual) = best.ok_or(Error::NoOverlap)?;
    Ok(YawEstimate {
        shift,
        theta_deg: shift_to_theta(shift, n),
        residual,
    })
}

/// Rotates every occupied point by `theta_deg` about the origin. Slot order is
/// kept; points are not re-bucketed.
pub fn rotate_ring(ring: &RingProjection, theta_deg: f64) -> RingProjection {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let slots = ring
        .slots()
        .iter()
        .map(|slot| {
            slot.map(|p| RingPoint {
                x: c * p.x - s * p.y,
                y: s * p.x + c * p.y,
                ..p
            })
        })
        .collect();
    RingProjection::from_slots(slots)
}

/// Translation `(dx, dy)` mapping the rotated ring onto the target, with
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub dx: f64,
    pub dy: f64,
    /// Loss at the returned translation with freshly chosen correspondences.
    pub loss: f64,
    pub iterations: usize,
    pub correspondences: usize,
    /// Loss at the start of each iteration.
    pub loss_history: Vec<f64>,
}

/// Target slots searched for rotated slot `j`: the circular window of `nl + 1`
/// sectors (at most `n`) centred on the yaw-consistent sector `j - shift`.
fn window(j: usize, shift: usize, nl: usize, n: usize) -> impl Iterator<Item = usize> {
    let half = nl / 2;
    let len = (2 * half + 1).min(n);
    let centre = (j + n - shift % n) % n;
    let start = (centre + n - half % n) % n;
    (0..len).map(move |o| (start + o) % n)
}

struct Correspondences {
    /// Sum of residual vectors `target - moved`.
    sum: (f64, f64),
    count: usize,
    loss: f64,
}

fn correspond(
    target: &RingProjection,
    rotated: &RingProjection,
    shift: usize,
    nl: usize,
    offset: (f64, f64),
) -> Correspondences {
    let n = target.len();
    let mut out = Correspondences {
        sum: (0.0, 0.0),
        count: 0,
        loss: 0.0,
    };
    for (j, slot) in rotated.slots().iter().enumerate() {
        let Some(a) = slot else { continue };
        let (ax, ay) = (a.x + offset.0, a.y + offset.1);
        let mut nearest: Option<(f64, f64, f64)> = None;
        for k in window(j, shift, nl, n) {
            let Some(t) = target.get(k) else { continue };
            if t.label != a.label {
                continue;
            }
            let (ex, ey) = (t.x - ax, t.y - ay);
            let d2 = ex * ex + ey * ey;
            if nearest.is_none_or(|(_, _, best)| d2 < best) {
                nearest = Some((ex, ey, d2));
            }
        }
        if let Some((ex, ey, d2)) = nearest {
            out.sum.0 += ex;
            out.sum.1 += ey;
            out.loss += 0.5 * d2;
            out.count += 1;
        }
    }
    out
}

/// Label-gated windowed ICP for the planar translation between `rotated`
/// (already yaw-aligned) and `target`.
pub fn semantic_icp(
    target: &RingProjection,
    rotated: &RingProjection,
    shift: usize,
    params: &SicpParams,
) -> Result<IcpResult> {
    check_same_len(target, rotated)?;
    let mut offset = (0.0, 0.0);
    let mut history = Vec::with_capacity(params.max_iters);
    let mut iterations = 0;
    for it in 0..params.max_iters {
        let c = correspond(target, rotated, shift, params.nl, offset);
        if c.count == 0 {
            return Err(Error::NoCorrespondence { iteration: it });
        }
        history.push(c.loss);
        let step = (c.sum.0 / c.count as f64, c.sum.1 / c.count as f64);
        offset.0 += step.0;
        offset.1 += step.1;
        iterations = it + 1;
        if step.0.hypot(step.1) < params.converge_eps {
            break;
        }
    }
    let last = correspond(target, rotated, shift, params.nl, offset);
    if last.count == 0 {
        return Err(Error::NoCorrespondence { iteration: iterations });
    }
    Ok(IcpResult {
        dx: offset.0,
        dy: offset.1,
        loss: last.loss,
        iterations,
        correspondences: last.count,
        loss_history: history,
    })
}

/// Full two-step estimate on precomputed rings (`ring_a` is the reference).
pub fn estimate_from_rings(
    ring_a: &RingProjection,
    ring_b: &RingProjection,
    params: &SicpParams,
) -> Result<RelativePose> {
    let yaw = compute_yaw(ring_a, ring_b)?;
    let rotated = rotate_ring(ring_b, yaw.theta_deg);
    let icp = semantic_icp(ring_a, &rotated, yaw.shift, params)?;
    Ok(RelativePose {
        dx: icp.dx,
        dy: icp.dy,
        theta_deg: yaw.theta_deg,
        yaw_residual: yaw.residual,
        icp_loss: icp.loss,
    })
}

/// Planar pose mapping `cloud_b` into `cloud_a`'s frame.
pub fn estimate_relative_pose(
    cloud_a: &LabeledCloud,
    cloud_b: &LabeledCloud,
    params: &SicpParams,
) -> Result<RelativePose> {
    params.validate()?;
    let ring_a = build_ring(&filter_representative(cloud_a), params.na);
    let ring_b = build_ring(&filter_representative(cloud_b), params.na);
    estimate_from_rings(&ring_a, &ring_b, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::{SemanticClass, SemanticPoint};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn dense_ring(radii: &[f64], label: SemanticClass) -> RingProjection {
        let n = radii.len();
        let step = 2.0 * PI / n as f64;
        RingProjection::from_slots(
            radii
                .iter()
                .enumerate()
                .map(|(k, &r)| {
                    let phi = -PI + (k as f64 + 0.5) * step;
                    Some(RingPoint::new(r * phi.cos(), r * phi.sin(), label))
                })
                .collect(),
        )
    }

    /// Exhaustive shift enumeration written independently of `compute_yaw`.
    fn brute_yaw(r1: &RingProjection, r2: &RingProjection) -> Option<(usize, f64)> {
        let n = r1.len();
        let scores: Vec<Option<f64>> = (0..n)
            .map(|i| {
                let pairs: Vec<f64> = (0..n)
                    .filter_map(|k| match (r1.get(k), r2.get((k + i) % n)) {
                        (Some(a), Some(b)) => Some((a.r - b.r).abs()),
                        _ => None,
                    })
                    .collect();
                (!pairs.is_empty()).then(|| pairs.iter().sum::<f64>() / pairs.len() as f64)
            })
            .collect();
        let min = scores.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        scores.iter().position(|s| *s == Some(min)).map(|i| (i, min))
    }

    #[test]
    fn yaw_exact_shift_of_three() {
        let ring1 = dense_ring(&[1.0, 2.0, 3.0, 4.0], SemanticClass::Building);
        let ring2 = ring1.cyclic_shift(3);
        let y = compute_yaw(&ring1, &ring2).unwrap();
        assert_eq!(y.shift, 3);
        assert_eq!(y.theta_deg, 90.0);
        assert_eq!(y.residual, 0.0);
    }

    #[test]
    fn yaw_identity() {
        let ring = dense_ring(&[3.0, 1.0, 4.0, 1.5, 5.0, 9.0], SemanticClass::Pole);
        let y = compute_yaw(&ring, &ring).unwrap();
        assert_eq!((y.shift, y.theta_deg, y.residual), (0, 0.0, 0.0));
    }

    #[test]
    fn yaw_no_overlap() {
        let empty = RingProjection::empty(8);
        let ring = dense_ring(&[1.0; 8], SemanticClass::Building);
        assert!(matches!(compute_yaw(&ring, &empty), Err(Error::NoOverlap)));
        assert!(matches!(compute_yaw(&empty, &empty), Err(Error::NoOverlap)));
        assert!(matches!(
            compute_yaw(&ring, &RingProjection::empty(4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn yaw_matches_enumeration_on_sparse_rings() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                RingProjection::from_slots(
                    (0..360)
                        .map(|_| {
                            rng.random_bool(0.4)
                                .then(|| RingPoint::new(rng.random_range(1.0..50.0), 0.0, SemanticClass::Building))
                        })
                        .collect(),
                )
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            let y = compute_yaw(&a, &b).unwrap();
            let (shift, psi) = brute_yaw(&a, &b).unwrap();
            assert_eq!(y.shift, shift);
            assert_eq!(y.residual, psi);
        }
    }

    #[test]
    fn theta_shift_conversions() {
        assert_eq!(shift_to_theta(0, 360), 0.0);
        assert_eq!(shift_to_theta(180, 360), 180.0);
        assert_eq!(shift_to_theta(90, 360), -90.0);
        for s in 0..360 {
            assert_eq!(theta_to_shift(shift_to_theta(s, 360), 360), s);
        }
    }

    #[test]
    fn rotate_ring_cases() {
        let ring = RingProjection::from_slots(vec![
            Some(RingPoint::new(1.0, 0.0, SemanticClass::Building)),
            None,
            Some(RingPoint::new(2.0, -3.0, SemanticClass::Pole)),
            None,
        ]);
        assert_eq!(rotate_ring(&ring, 0.0), ring);
        let q = rotate_ring(&ring, 90.0);
        let p = q.get(0).unwrap();
        assert!((p.x - 0.0).abs() < 1e-15 && (p.y - 1.0).abs() < 1e-15);
        assert!(q.get(1).is_none());
        let back = rotate_ring(&rotate_ring(&ring, 180.0), 180.0);
        for (a, b) in back.slots().iter().zip(ring.slots()) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
                    assert_eq!(a.r, b.r);
                }
                (None, None) => {}
                _ => panic!("occupancy changed"),
            }
        }
    }

    #[test]
    fn window_is_circular() {
        let w: Vec<usize> = window(0, 0, 4, 10).collect();
        assert_eq!(w, vec![8, 9, 0, 1, 2]);
        let w: Vec<usize> = window(1, 3, 2, 10).collect();
        assert_eq!(w, vec![7, 8, 9]);
        assert_eq!(window(0, 0, 20, 8).count(), 8);
    }

    #[test]
    fn icp_identical_rings() {
        let ring = dense_ring(&[10.0; 360], SemanticClass::Building);
        let out = semantic_icp(&ring, &ring, 0, &SicpParams::default()).unwrap();
        assert_eq!((out.dx, out.dy, out.loss), (0.0, 0.0, 0.0));
    }

    #[test]
    fn icp_unit_translation() {
        // a building ring with varying radius, shifted by (1, 0)
        let radii: Vec<f64> = (0..360).map(|k| 12.0 + 4.0 * ((k as f64) * 0.05).sin()).collect();
        let target = dense_ring(&radii, SemanticClass::Building);
        let moved = RingProjection::from_slots(
            target
                .slots()
                .iter()
                .map(|s| s.map(|p| RingPoint::new(p.x - 1.0, p.y, p.label)))
                .collect(),
        );
        let out = semantic_icp(&target, &moved, 0, &SicpParams::default()).unwrap();
        assert!((out.dx - 1.0).abs() < 0.05, "dx = {}", out.dx);
        assert!(out.dy.abs() < 0.05, "dy = {}", out.dy);
    }

    #[test]
    fn icp_label_gate() {
        let a = dense_ring(&[10.0; 36], SemanticClass::Building);
        let b = dense_ring(&[10.0; 36], SemanticClass::Pole);
        assert!(matches!(
            semantic_icp(&a, &b, 0, &SicpParams { na: 36, nl: 4, ..Default::default() }),
            Err(Error::NoCorrespondence { iteration: 0 })
        ));
    }

    #[test]
    fn estimate_self_is_identity() {
        let pts: Vec<SemanticPoint> = (0..720)
            .map(|k| {
                let phi = k as f64 * PI / 360.0;
                let r = 8.0 + 3.0 * (3.0 * phi).cos();
                SemanticPoint::new(r * phi.cos(), r * phi.sin(), 1.0, SemanticClass::Building)
            })
            .collect();
        let cloud = LabeledCloud::new(pts, 0);
        let pose = estimate_relative_pose(&cloud, &cloud, &SicpParams::default()).unwrap();
        assert_eq!((pose.dx, pose.dy, pose.theta_deg), (0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn yaw_recovers_cyclic_shift(radii in prop::collection::vec(1.0..50.0f64, 8..120), m in 0usize..1000) {
            let ring = RingProjection::from_slots(
                radii.iter().map(|&r| Some(RingPoint::new(r, 0.0, SemanticClass::Building))).collect(),
            );
            let m = m % ring.len();
            let shifted = ring.cyclic_shift(m);
            let y = compute_yaw(&ring, &shifted).unwrap();
            // ties only when the radius vector is itself periodic
            if brute_yaw(&ring, &shifted).unwrap().0 == m {
                prop_assert_eq!(y.shift, m);
            }
            prop_assert_eq!(ring_distance(&ring, &shifted, y.shift), Some(0.0));
        }

        #[test]
        fn icp_loss_non_increasing(
            radii in prop::collection::vec(5.0..30.0f64, 72),
            labels in prop::collection::vec(0usize..3, 72),
            tx in -1.5..1.5f64,
            ty in -1.5..1.5f64,
            noise in prop::collection::vec(-0.2..0.2f64, 144),
        ) {
            let classes = [SemanticClass::Building, SemanticClass::Pole, SemanticClass::Trunk];
            let n = radii.len();
            let step = 2.0 * PI / n as f64;
            let mut target = Vec::new();
            let mut moved = Vec::new();
            for k in 0..n {
                let phi = -PI + (k as f64 + 0.5) * step;
                let (x, y) = (radii[k] * phi.cos(), radii[k] * phi.sin());
                target.push(Some(RingPoint::new(x, y, classes[labels[k]])));
                moved.push(Some(RingPoint::new(x - tx + noise[2 * k], y - ty + noise[2 * k + 1], classes[labels[k]])));
            }
            let params = SicpParams { na: n, nl: 10, max_iters: 50, converge_eps: 1e-9 };
            let out = semantic_icp(
                &RingProjection::from_slots(target),
                &RingProjection::from_slots(moved),
                0,
                &params,
            ).unwrap();
            for w in out.loss_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", out.loss_history);
            }
            prop_assert!(out.loss <= out.loss_history[0] + 1e-9);
        }
    }
}
