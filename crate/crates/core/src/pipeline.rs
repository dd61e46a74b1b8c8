//! Pair matching: estimate the relative pose, align the second scan, encode
//! both scans and score them. Ablation switches replace individual stages.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{LabeledCloud, PriorityTable};
use crate::pose::{normalize_deg, RelativePose};
use crate::projection::{build_ring, filter_representative, SicpParams};
use crate::sicp::{compute_yaw, rotate_ring, semantic_icp, theta_to_shift};
use crate::ssc::{encode, encode_height, max_shift_similarity, similarity, SscDescriptor, SscParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Off: yaw comes from the best descriptor column shift and the score is
    /// the maximum over all column shifts.
    pub use_yaw_align: bool,
    /// Off: translation is fixed to zero.
    pub use_icp: bool,
    /// Off: blocks hold the quantized maximum height instead of a class.
    pub use_semantic_encoding: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            use_yaw_align: true,
            use_icp: true,
            use_semantic_encoding: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchParams {
    pub sicp: SicpParams,
    pub ssc: SscParams,
    pub priority: PriorityTable,
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        self.sicp.validate()?;
        self.ssc.validate()
    }
}

/// Wall-clock time per stage in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    /// Filtering, ring projection and yaw search.
    pub yaw: f64,
    pub icp: f64,
    /// Alignment and encoding of both scans.
    pub describe: f64,
    pub retrieve: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub frame_a: u32,
    pub frame_b: u32,
    pub score: f64,
    pub pose: RelativePose,
    pub timings_us: StageTimings,
    /// Why the pair was scored 0 without reaching the descriptor stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Applies `pose` (rotation, then translation) to every point; `z` and labels
/// are kept.
pub fn align_cloud(cloud: &LabeledCloud, pose: &RelativePose) -> LabeledCloud {
    let points = cloud
        .iter()
        .map(|p| {
            let (x, y) = pose.apply(p.x, p.y);
            crate::point::SemanticPoint { x, y, ..*p }
        })
        .collect();
    LabeledCloud::new(points, cloud.frame_id)
}

pub fn describe(cloud: &LabeledCloud, params: &MatchParams, ablation: &AblationConfig) -> SscDescriptor {
    if ablation.use_semantic_encoding {
        encode(cloud, &params.ssc, &params.priority)
    } else {
        encode_height(cloud, &params.ssc)
    }
}

fn micros(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e6
}

/// Scores `cloud_b` against `cloud_a`. Pose-estimation failures produce a
/// score of 0 with a diagnostic; only invalid parameters are errors.
pub fn match_pair(
    cloud_a: &LabeledCloud,
    cloud_b: &LabeledCloud,
    params: &MatchParams,
    ablation: &AblationConfig,
) -> Result<MatchResult> {
    params.validate()?;
    let mut timings = StageTimings::default();
    let mut result = MatchResult {
        frame_a: cloud_a.frame_id,
        frame_b: cloud_b.frame_id,
        score: 0.0,
        pose: RelativePose::identity(),
        timings_us: timings,
        diagnostic: None,
    };
    let fail = |mut r: MatchResult, e: Error, t: StageTimings| {
        r.diagnostic = Some(e.to_string());
        r.timings_us = t;
        Ok(r)
    };

    let t = Instant::now();
    let na = params.sicp.na;
    let ring_a = build_ring(&filter_representative(cloud_a), na);
    let ring_b = build_ring(&filter_representative(cloud_b), na);
    let mut desc_a = None;
    let (theta, shift, residual) = if ablation.use_yaw_align {
        match compute_yaw(&ring_a, &ring_b) {
            Ok(y) => (y.theta_deg, y.shift, y.residual),
            Err(e) => return fail(result, e, timings),
        }
    } else {
        // column search on the unaligned descriptors
        let da = describe(cloud_a, params, ablation);
        let db = describe(cloud_b, params, ablation);
        let (col, _) = max_shift_similarity(&da, &db)?;
        desc_a = Some(da);
        let theta = normalize_deg(-(col as f64) * 360.0 / params.ssc.ns as f64);
        (theta, theta_to_shift(theta, na), 0.0)
    };
    timings.yaw = micros(t);

    let t = Instant::now();
    let (dx, dy, loss) = if ablation.use_icp {
        let rotated = rotate_ring(&ring_b, theta);
        match semantic_icp(&ring_a, &rotated, shift, &params.sicp) {
            Ok(icp) => (icp.dx, icp.dy, icp.loss),
            Err(e) => {
                timings.icp = micros(t);
                return fail(result, e, timings);
            }
        }
    } else {
        (0.0, 0.0, 0.0)
    };
    timings.icp = micros(t);
    result.pose = RelativePose {
        dx,
        dy,
        theta_deg: theta,
        yaw_residual: residual,
        icp_loss: loss,
    };

    let t = Instant::now();
    let aligned = align_cloud(cloud_b, &result.pose);
    let desc_a = desc_a.unwrap_or_else(|| describe(cloud_a, params, ablation));
    let desc_b = describe(&aligned, params, ablation);
    timings.describe = micros(t);

    let t = Instant::now();
    result.score = if ablation.use_yaw_align {
        similarity(&desc_a, &desc_b)?
    } else {
        max_shift_similarity(&desc_a, &desc_b)?.1
    };
    timings.retrieve = micros(t);
    result.timings_us = timings;
    Ok(result)
}
