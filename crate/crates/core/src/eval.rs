//! Evaluation protocol: distance-labelled pair sampling, precision-recall
//! curves, F1-max, extended precision, pose errors and timing summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti::PoseSE3;
use crate::pipeline::{match_pair, AblationConfig, MatchParams, MatchResult, StageTimings};
use crate::point::LabeledCloud;
use crate::pose::{angle_diff_deg, RelativePose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub i: usize,
    pub j: usize,
    pub is_positive: bool,
    /// Planar distance between the two sensor positions, meters.
    pub distance: f64,
    /// Pose of frame `j` in frame `i`.
    pub gt_pose: RelativePose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Negatives drawn per positive.
    pub alpha: f64,
    pub seed: u64,
    /// Minimum `j - i` for a positive pair.
    pub min_gap: usize,
    pub positive_radius: f64,
    pub negative_radius: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            seed: 0,
            min_gap: 100,
            positive_radius: 3.0,
            negative_radius: 20.0,
        }
    }
}

/// Pose of `t2` expressed in `t1`'s frame, reduced to `(dx, dy, yaw)`.
pub fn gt_relative_pose(t1: &PoseSE3, t2: &PoseSE3) -> RelativePose {
    let t = t1.inverse().compose(t2);
    let yaw = t.rotation[(1, 0)].atan2(t.rotation[(0, 0)]).to_degrees();
    RelativePose::new(t.translation[0], t.translation[1], yaw)
}

/// All positives (distance below `positive_radius`, gap at least `min_gap`)
/// plus `floor(alpha * N_p)` negatives (distance above `negative_radius`)
/// drawn uniformly without replacement. Pairs in between are never used.
pub fn sample_pairs(poses: &[PoseSE3], cfg: &SamplingConfig) -> Result<Vec<LabeledPair>> {
    if !(cfg.alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha = {} must be > 0", cfg.alpha)));
    }
    if poses.len() < 2 {
        return Err(Error::InvalidParams(format!("{} poses, need at least 2", poses.len())));
    }
    let n = poses.len();
    let make = |i: usize, j: usize, is_positive: bool, distance: f64| LabeledPair {
        i,
        j,
        is_positive,
        distance,
        gt_pose: gt_relative_pose(&poses[i], &poses[j]),
    };

    let mut positives = Vec::new();
    let mut negative_count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let d = poses[i].planar_distance(&poses[j]);
            if d < cfg.positive_radius && j - i >= cfg.min_gap {
                positives.push(make(i, j, true, d));
            } else if d > cfg.negative_radius {
                negative_count += 1;
            }
        }
    }
    if positives.is_empty() {
        return Err(Error::EmptyPositives {
            threshold: cfg.positive_radius,
            min_gap: cfg.min_gap,
        });
    }
    let wanted = (cfg.alpha * positives.len() as f64).floor() as usize;
    let take = if wanted > negative_count {
        log::warn!("requested {wanted} negatives but only {negative_count} exist; using all");
        negative_count
    } else {
        wanted
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chosen = rand::seq::index::sample(&mut rng, negative_count, take).into_vec();
    chosen.sort_unstable();

    // second pass: pick the chosen ordinals among negatives
    let mut out = positives;
    let mut ordinal = 0usize;
    let mut next = chosen.iter().peekable();
    'outer: for i in 0..n {
        for j in i + 1..n {
            let Some(&&want) = next.peek() else { break 'outer };
            let d = poses[i].planar_distance(&poses[j]);
            let positive = d < cfg.positive_radius && j - i >= cfg.min_gap;
            if !positive && d > cfg.negative_radius {
                if ordinal == want {
                    out.push(make(i, j, false, d));
                    next.next();
                }
                ordinal += 1;
            }
        }
    }
    out.sort_by_key(|p| (p.i, p.j));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        if self.precision + self.recall == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / (self.precision + self.recall)
        }
    }
}

/// Precision and recall at every distinct score, predicting positive when
/// `score >= threshold`. Sorted by descending threshold.
pub fn pr_curve(scored: &[(f64, bool)]) -> Result<Vec<PrPoint>> {
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels { positives, negatives });
    }
    if scored.iter().any(|s| s.0.is_nan()) {
        return Err(Error::InvalidParams("NaN score".into()));
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < sorted.len() {
        let threshold = sorted[k].0;
        while k < sorted.len() && sorted[k].0 == threshold {
            if sorted[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        curve.push(PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
            true_positives: tp,
            false_positives: fp,
        });
    }
    Ok(curve)
}

/// Best F1 over the curve and the threshold achieving it (highest threshold
/// on ties).
pub fn f1_max_point(curve: &[PrPoint]) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for p in curve {
        let f = p.f1();
        if best.is_none_or(|(b, _)| f > b) {
            best = Some((f, p.threshold));
        }
    }
    best
}

pub fn f1_max(curve: &[PrPoint]) -> f64 {
    f1_max_point(curve).map_or(0.0, |(f, _)| f)
}

/// Mean of the precision at minimum recall and the maximum recall at full
/// precision (0 when precision never reaches 1).
pub fn extended_precision(curve: &[PrPoint]) -> f64 {
    // recall is non-decreasing along the curve, so the first point has the minimum
    let Some(first) = curve.first() else { return 0.0 };
    let p_r0 = first.precision;
    let r_p100 = curve
        .iter()
        .filter(|p| p.precision == 1.0)
        .map(|p| p.recall)
        .fold(0.0, f64::max);
    0.5 * (p_r0 + r_p100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorStats {
    pub mean_yaw_err_deg: f64,
    pub mean_translation_err_m: f64,
    pub yaw_errors_deg: Vec<f64>,
    pub translation_errors_m: Vec<f64>,
}

/// Yaw (wrapped) and planar translation errors of `(estimate, truth)` pairs.
pub fn pose_error_stats(pairs: &[(RelativePose, RelativePose)]) -> Result<PoseErrorStats> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs for pose error statistics".into()));
    }
    let yaw: Vec<f64> = pairs.iter().map(|(e, g)| angle_diff_deg(e.theta_deg, g.theta_deg)).collect();
    let trans: Vec<f64> = pairs.iter().map(|(e, g)| (e.dx - g.dx).hypot(e.dy - g.dy)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(PoseErrorStats {
        mean_yaw_err_deg: mean(&yaw),
        mean_translation_err_m: mean(&trans),
        yaw_errors_deg: yaw,
        translation_errors_m: trans,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: LabeledPair,
    pub result: MatchResult,
}

/// Scores every pair in parallel on the current rayon pool. Frames are loaded
/// on demand through `load`.
pub fn score_pairs<F>(
    pairs: &[LabeledPair],
    load: F,
    params: &MatchParams,
    ablation: &AblationConfig,
) -> Result<Vec<ScoredPair>>
where
    F: Fn(usize) -> Result<LabeledCloud> + Sync,
{
    pairs
        .par_iter()
        .map(|pair| {
            let a = load(pair.i)?;
            let b = load(pair.j)?;
            let result = match_pair(&a, &b, params, ablation)?;
            Ok(ScoredPair { pair: *pair, result })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub positives: usize,
    pub negatives: usize,
    pub pr_curve: Vec<PrPoint>,
    pub f1_max: f64,
    pub f1_threshold: f64,
    pub extended_precision: f64,
    /// Pose errors over true positives at `f1_threshold`; `None` without any.
    pub pose_errors: Option<PoseErrorStats>,
    /// Mean stage timings over all pairs, microseconds.
    pub mean_timings_us: StageTimings,
}

impl EvalReport {
    pub fn mean_yaw_error_deg(&self) -> Option<f64> {
        self.pose_errors.as_ref().map(|p| p.mean_yaw_err_deg)
    }

    pub fn mean_translation_error_m(&self) -> Option<f64> {
        self.pose_errors.as_ref().map(|p| p.mean_translation_err_m)
    }
}

/// Aggregates scored pairs into the report. Pose errors use the true
/// positives at `pose_threshold` when given, else at the F1-max threshold.
pub fn build_report(scored: &[ScoredPair], pose_threshold: Option<f64>) -> Result<EvalReport> {
    let labels: Vec<(f64, bool)> = scored.iter().map(|s| (s.result.score, s.pair.is_positive)).collect();
    let curve = pr_curve(&labels)?;
    let (f1, f1_threshold) = f1_max_point(&curve).unwrap_or((0.0, f64::INFINITY));
    let ep = extended_precision(&curve);
    let threshold = pose_threshold.unwrap_or(f1_threshold);
    let tp: Vec<(RelativePose, RelativePose)> = scored
        .iter()
        .filter(|s| s.pair.is_positive && s.result.score >= threshold && s.result.diagnostic.is_none())
        .map(|s| (s.result.pose, s.pair.gt_pose))
        .collect();
    let pose_errors = if tp.is_empty() { None } else { Some(pose_error_stats(&tp)?) };

    let n = scored.len().max(1) as f64;
    let mut t = StageTimings::default();
    for s in scored {
        t.yaw += s.result.timings_us.yaw / n;
        t.icp += s.result.timings_us.icp / n;
        t.describe += s.result.timings_us.describe / n;
        t.retrieve += s.result.timings_us.retrieve / n;
    }
    let positives = labels.iter().filter(|l| l.1).count();
    Ok(EvalReport {
        positives,
        negatives: labels.len() - positives,
        pr_curve: curve,
        f1_max: f1,
        f1_threshold,
        extended_precision: ep,
        pose_errors,
        mean_timings_us: t,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `pr_curve.csv`, `pose_errors.csv`, `timings.csv`
/// and `matches.jsonl` into `dir`.
pub fn write_report(dir: impl AsRef<Path>, report: &EvalReport, scored: &[ScoredPair]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&dir.join("report.json"), &json)?;

    let mut pr = String::from("threshold,precision,recall,true_positives,false_positives\n");
    for p in &report.pr_curve {
        let _ = writeln!(pr, "{},{},{},{},{}", p.threshold, p.precision, p.recall, p.true_positives, p.false_positives);
    }
    write_text(&dir.join("pr_curve.csv"), &pr)?;

    let mut pe = String::from("frame_i,frame_j,yaw_error_deg,translation_error_m\n");
    let threshold = report.f1_threshold;
    for s in scored
        .iter()
        .filter(|s| s.pair.is_positive && s.result.score >= threshold && s.result.diagnostic.is_none())
    {
        let (e, g) = (&s.result.pose, &s.pair.gt_pose);
        let _ = writeln!(
            pe,
            "{},{},{},{}",
            s.pair.i,
            s.pair.j,
            angle_diff_deg(e.theta_deg, g.theta_deg),
            (e.dx - g.dx).hypot(e.dy - g.dy)
        );
    }
    write_text(&dir.join("pose_errors.csv"), &pe)?;

    let t = &report.mean_timings_us;
    let timings = format!(
        "stage,mean_us\nyaw,{}\nicp,{}\ndescribe,{}\nretrieve,{}\n",
        t.yaw, t.icp, t.describe, t.retrieve
    );
    write_text(&dir.join("timings.csv"), &timings)?;

    let mut lines = String::new();
    for s in scored {
        let line = serde_json::to_string(&s.result).map_err(|e| Error::Config(e.to_string()))?;
        lines.push_str(&line);
        lines.push('\n');
    }
    write_text(&dir.join("matches.jsonl"), &lines)
}
