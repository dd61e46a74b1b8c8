use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;
use ssc_core::eval::{build_report, sample_pairs, score_pairs, write_report};
use ssc_core::kitti::{load_labels, load_scan, write_calib, write_labels, write_poses, write_scan, PoseSE3, SequenceIndex};
use ssc_core::pipeline::describe;
use ssc_core::ssc::similarity;
use ssc_core::synthetic::{
    apply_transform, generate_scene, planted_loop_sequence, OracleTransform, PlantedSequenceSpec, SceneSpec,
};
use ssc_core::{estimate_relative_pose, match_pair, LabeledCloud, SemanticClass};

use crate::config::RunConfig;

/// Largest dropout rate accepted by `synth`; beyond it too little survives to
/// match.
pub const MAX_DROPOUT: f64 = 0.9;

pub fn load_labeled(scan: &Path, labels: &Path) -> Result<LabeledCloud> {
    let cloud = load_scan(scan).with_context(|| format!("loading scan {}", scan.display()))?;
    load_labels(labels, cloud).with_context(|| format!("loading labels {}", labels.display()))
}

pub fn cmd_describe(scan: &Path, labels: &Path, out: Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let cloud = load_labeled(scan, labels)?;
    if cloud.is_empty() {
        log::warn!("{}: scan is empty, the descriptor is all zero", scan.display());
    }
    let desc = describe(&cloud, &cfg.params, &cfg.ablation);
    let out = out.unwrap_or_else(|| scan.with_extension("ssc"));
    if out.extension().is_some_and(|e| e == "csv") {
        fs::write(&out, desc.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    } else {
        desc.write(&out)?;
    }

    let counts = desc.class_counts();
    let classes: serde_json::Map<String, serde_json::Value> = if cfg.ablation.use_semantic_encoding {
        SemanticClass::ALL
            .iter()
            .filter(|c| **c != SemanticClass::Unlabeled && counts[c.code() as usize] > 0)
            .map(|c| (c.name().to_string(), json!(counts[c.code() as usize])))
            .collect()
    } else {
        serde_json::Map::new()
    };
    let summary = json!({
        "descriptor": out,
        "rings": desc.rings(),
        "sectors": desc.sectors(),
        "points": cloud.len(),
        "occupied": desc.occupied(),
        "occupancy_ratio": desc.occupancy_ratio(),
        "class_cells": classes,
    });
    println!("{summary}");
    Ok(())
}

pub fn cmd_match(a: (&Path, &Path), b: (&Path, &Path), cfg: &RunConfig) -> Result<()> {
    let ca = load_labeled(a.0, a.1)?;
    let cb = load_labeled(b.0, b.1)?;
    for (cloud, path) in [(&ca, a.0), (&cb, b.0)] {
        if cloud.is_empty() {
            log::warn!("{}: scan is empty", path.display());
        }
    }
    let result = match_pair(&ca, &cb, &cfg.params, &cfg.ablation)?;
    if let Some(d) = &result.diagnostic {
        log::warn!("pose estimation failed, score set to 0: {d}");
    }
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let root = cfg.require_root()?;
    let index = SequenceIndex::open(root, &cfg.sequence)
        .with_context(|| format!("indexing sequence {} under {}", cfg.sequence, root.display()))?;
    let pairs = sample_pairs(&index.poses, &cfg.sampling)
        .with_context(|| format!("sampling pairs for sequence {} ({} frames)", cfg.sequence, index.len()))?;
    log::info!("scoring {} pairs from {} frames", pairs.len(), index.len());

    let pool = cfg.thread_pool()?;
    let scored = pool.install(|| score_pairs(&pairs, |k| index.load_frame(k), &cfg.params, &cfg.ablation))?;
    let report = build_report(&scored, None)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("ssc-eval"));
    write_report(&out, &report, &scored)?;

    let summary = json!({
        "sequence": cfg.sequence,
        "pairs": scored.len(),
        "positives": report.positives,
        "negatives": report.negatives,
        "f1_max": report.f1_max,
        "f1_threshold": report.f1_threshold,
        "extended_precision": report.extended_precision,
        "mean_yaw_error_deg": report.mean_yaw_error_deg(),
        "mean_translation_error_m": report.mean_translation_error_m(),
        "out": out,
    });
    println!("{summary}");
    Ok(())
}

fn check_perturbation(noise: f64, dropout: f64) -> Result<()> {
    if !(0.0..=MAX_DROPOUT).contains(&dropout) {
        bail!("dropout {dropout} is outside [0, {MAX_DROPOUT}]");
    }
    if !(noise >= 0.0) {
        bail!("noise {noise} must be >= 0");
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub struct PairSpec {
    pub scene: SceneSpec,
    pub transform: OracleTransform,
}

/// Writes `a.{bin,label}`, `b.{bin,label}` and `gt.json`, where `b` is `a`
/// moved by the transform.
pub fn cmd_synth_pair(spec: &PairSpec, out: &Path) -> Result<()> {
    let t = &spec.transform;
    check_perturbation(t.noise_sigma, t.dropout_rate)?;
    spec.scene.validate()?;
    create_dir(out)?;
    let a = generate_scene(&spec.scene);
    let b = apply_transform(&a, t, spec.scene.seed.wrapping_add(1));
    for (cloud, name) in [(&a, "a"), (&b, "b")] {
        write_scan(out.join(format!("{name}.bin")), cloud)?;
        write_labels(out.join(format!("{name}.label")), cloud)?;
    }
    let gt = json!({
        "scene": spec.scene,
        "transform": t,
        "expected_pose": t.expected_pose(),
    });
    let path = out.join("gt.json");
    fs::write(&path, serde_json::to_string_pretty(&gt)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    println!("{}", json!({ "out": out, "points_a": a.len(), "points_b": b.len() }));
    Ok(())
}

/// Writes a planted-loop sequence in the SemanticKITTI layout with an
/// identity calibration, so camera and LiDAR poses coincide.
pub fn cmd_synth_sequence(spec: &PlantedSequenceSpec, root: &Path, sequence: &str) -> Result<()> {
    check_perturbation(spec.noise_sigma, spec.dropout_rate)?;
    let seq = planted_loop_sequence(spec)?;
    let dir = root.join("sequences").join(sequence);
    let (velodyne, labels) = (dir.join("velodyne"), dir.join("labels"));
    create_dir(&velodyne)?;
    create_dir(&labels)?;
    for (k, cloud) in seq.clouds.iter().enumerate() {
        write_scan(velodyne.join(format!("{k:06}.bin")), cloud)?;
        write_labels(labels.join(format!("{k:06}.label")), cloud)?;
    }
    write_poses(dir.join("poses.txt"), &seq.poses)?;
    write_calib(dir.join("calib.txt"), &PoseSE3::identity())?;
    let planted = json!({ "spec": spec, "loops": seq.loops });
    let path = dir.join("planted.json");
    fs::write(&path, serde_json::to_string_pretty(&planted)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    println!("{}", json!({ "out": dir, "frames": seq.clouds.len(), "loops": seq.loops }));
    Ok(())
}

pub struct BenchSpec {
    pub scans: usize,
    pub iterations: usize,
}

/// Mean per-operation time and a digest of the outputs, which must not
/// change between runs.
struct StageStats {
    count: usize,
    mean_ms: f64,
    checksum: f64,
}

fn timed<F>(pool: &rayon::ThreadPool, n: usize, op: F) -> StageStats
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let samples: Vec<(f64, f64)> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|k| {
                let t = Instant::now();
                let v = op(k);
                (t.elapsed().as_secs_f64() * 1e3, v)
            })
            .collect()
    });
    StageStats {
        count: n,
        mean_ms: samples.iter().map(|s| s.0).sum::<f64>() / n as f64,
        checksum: samples.iter().map(|s| s.1).sum(),
    }
}

/// Times description, retrieval and pose estimation. Inputs are the first
/// frames of the dataset sequence or, without a dataset, scan-sized
/// synthetic scenes.
pub fn cmd_bench(spec: &BenchSpec, cfg: &RunConfig) -> Result<()> {
    if spec.scans < 2 || spec.iterations == 0 {
        bail!("bench needs at least 2 scans and 1 iteration");
    }
    let seed = cfg.sampling.seed;
    // pairs for pose estimation: consecutive frames, or a scene and its moved copy
    let (clouds, partners): (Vec<LabeledCloud>, Vec<LabeledCloud>) = match &cfg.dataset_root {
        Some(_) => {
            let root = cfg.require_root()?;
            let index = SequenceIndex::open(root, &cfg.sequence)?;
            if index.len() < spec.scans {
                bail!("sequence {} has {} frames, {} requested", cfg.sequence, index.len(), spec.scans);
            }
            let clouds = (0..spec.scans).map(|k| index.load_frame(k)).collect::<ssc_core::Result<Vec<_>>>()?;
            let partners = (0..spec.scans).map(|k| clouds[(k + 1) % spec.scans].clone()).collect();
            (clouds, partners)
        }
        None => {
            let clouds: Vec<_> = (0..spec.scans as u64)
                .map(|k| generate_scene(&SceneSpec::scan_sized(seed.wrapping_add(k))))
                .collect();
            let partners = clouds
                .iter()
                .enumerate()
                .map(|(k, c)| apply_transform(c, &OracleTransform::rigid(1.0, -0.5, 37.0 * k as f64), k as u64))
                .collect();
            (clouds, partners)
        }
    };
    let points = clouds.iter().map(LabeledCloud::len).sum::<usize>() as f64 / clouds.len() as f64;
    let pool = cfg.thread_pool()?;
    let n = spec.scans;

    let descs: Vec<_> = clouds.iter().map(|c| describe(c, &cfg.params, &cfg.ablation)).collect();
    let describe_stats = timed(&pool, spec.iterations, |k| {
        describe(&clouds[k % n], &cfg.params, &cfg.ablation).occupied() as f64
    });
    let sim_stats = timed(&pool, spec.iterations, |k| {
        similarity(&descs[k % n], &descs[(k / n) % n]).unwrap_or(f64::NAN)
    });
    let icp_stats = timed(&pool, spec.iterations, |k| {
        match estimate_relative_pose(&clouds[k % n], &partners[k % n], &cfg.params.sicp) {
            Ok(p) => p.dx + p.dy + p.theta_deg,
            Err(_) => f64::NAN,
        }
    });

    let mut csv = String::from("stage,count,mean_ms,checksum\n");
    for (name, s) in [("describe", &describe_stats), ("similarity", &sim_stats), ("icp", &icp_stats)] {
        let _ = writeln!(csv, "{name},{},{:.6},{:.9e}", s.count, s.mean_ms, s.checksum);
    }
    log::info!("{} scans of {points:.0} points on average", clouds.len());
    print!("{csv}");
    if let Some(out) = &cfg.out {
        fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
