//! Run configuration: built-in defaults, overridden by an optional TOML file,
//! overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use ssc_core::eval::SamplingConfig;
use ssc_core::pipeline::MatchParams;
use ssc_core::{AblationConfig, PriorityTable};

/// Matching flags shared by every command that scores or describes scans.
#[derive(Debug, Clone, Default, Args)]
pub struct MatchArgs {
    /// TOML file with defaults for any of these settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Class priority table (`class-name rank` per line).
    #[arg(long, value_name = "FILE")]
    pub priority: Option<PathBuf>,
    /// Ring sectors used for yaw estimation.
    #[arg(long)]
    pub na: Option<usize>,
    /// ICP correspondence window in sectors.
    #[arg(long)]
    pub nl: Option<usize>,
    /// Descriptor sectors.
    #[arg(long)]
    pub ns: Option<usize>,
    /// Descriptor rings.
    #[arg(long)]
    pub nr: Option<usize>,
    /// Descriptor range in meters.
    #[arg(long)]
    pub rmax: Option<f64>,
    /// Replace yaw alignment with a column-shift search on the descriptors.
    #[arg(long)]
    pub no_yaw: bool,
    /// Skip translation estimation.
    #[arg(long)]
    pub no_icp: bool,
    /// Encode quantized height instead of semantic classes.
    #[arg(long)]
    pub no_semantic: bool,
}

/// Dataset flags for `eval`.
#[derive(Debug, Clone, Default, Args)]
pub struct DatasetArgs {
    /// Root containing `sequences/<id>/{velodyne,labels,poses.txt,calib.txt}`.
    #[arg(long, value_name = "DIR")]
    pub dataset_root: Option<PathBuf>,
    #[arg(long)]
    pub sequence: Option<String>,
    /// Negatives sampled per positive.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum frame gap for a positive pair.
    #[arg(long)]
    pub min_gap: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SicpSection {
    na: Option<usize>,
    nl: Option<usize>,
    max_iters: Option<usize>,
    converge_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SscSection {
    ns: Option<usize>,
    nr: Option<usize>,
    rmax: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AblationSection {
    use_yaw_align: Option<bool>,
    use_icp: Option<bool>,
    use_semantic_encoding: Option<bool>,
}

/// Every key is optional; missing keys keep the built-in default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset_root: Option<PathBuf>,
    sequence: Option<String>,
    alpha: Option<f64>,
    seed: Option<u64>,
    min_gap: Option<usize>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    priority: Option<PathBuf>,
    #[serde(default)]
    sicp: SicpSection,
    #[serde(default)]
    ssc: SscSection,
    #[serde(default)]
    ablation: AblationSection,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_root: Option<PathBuf>,
    pub sequence: String,
    pub sampling: SamplingConfig,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub params: MatchParams,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: None,
            sequence: "00".into(),
            sampling: SamplingConfig::default(),
            workers: 0,
            out: None,
            params: MatchParams::default(),
            ablation: AblationConfig::default(),
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_priority(path: &Path) -> Result<PriorityTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading priority table {}", path.display()))?;
    PriorityTable::parse(&text).with_context(|| format!("parsing priority table {}", path.display()))
}

impl RunConfig {
    /// Resolves defaults, then the `--config` file, then flags.
    pub fn resolve(m: &MatchArgs, d: Option<&DatasetArgs>, out: Option<PathBuf>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &m.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let file: FileConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            cfg.apply_file(file)?;
        }

        if let Some(path) = &m.priority {
            cfg.params.priority = load_priority(path)?;
        }
        let (sicp, ssc) = (&mut cfg.params.sicp, &mut cfg.params.ssc);
        set(&mut sicp.na, m.na);
        set(&mut sicp.nl, m.nl);
        set(&mut ssc.ns, m.ns);
        set(&mut ssc.nr, m.nr);
        set(&mut ssc.rmax, m.rmax);
        if m.no_yaw {
            cfg.ablation.use_yaw_align = false;
        }
        if m.no_icp {
            cfg.ablation.use_icp = false;
        }
        if m.no_semantic {
            cfg.ablation.use_semantic_encoding = false;
        }
        if let Some(d) = d {
            if d.dataset_root.is_some() {
                cfg.dataset_root = d.dataset_root.clone();
            }
            set(&mut cfg.sequence, d.sequence.clone());
            set(&mut cfg.sampling.alpha, d.alpha);
            set(&mut cfg.sampling.seed, d.seed);
            set(&mut cfg.sampling.min_gap, d.min_gap);
            set(&mut cfg.workers, d.workers);
        }
        if out.is_some() {
            cfg.out = out;
        }

        if !(cfg.sampling.alpha > 0.0) {
            bail!("alpha = {} must be > 0", cfg.sampling.alpha);
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, f: FileConfig) -> Result<()> {
        if f.dataset_root.is_some() {
            self.dataset_root = f.dataset_root;
        }
        set(&mut self.sequence, f.sequence);
        set(&mut self.sampling.alpha, f.alpha);
        set(&mut self.sampling.seed, f.seed);
        set(&mut self.sampling.min_gap, f.min_gap);
        set(&mut self.workers, f.workers);
        if f.out.is_some() {
            self.out = f.out;
        }
        if let Some(path) = &f.priority {
            self.params.priority = load_priority(path)?;
        }
        let sicp = &mut self.params.sicp;
        set(&mut sicp.na, f.sicp.na);
        set(&mut sicp.nl, f.sicp.nl);
        set(&mut sicp.max_iters, f.sicp.max_iters);
        set(&mut sicp.converge_eps, f.sicp.converge_eps);
        let ssc = &mut self.params.ssc;
        set(&mut ssc.ns, f.ssc.ns);
        set(&mut ssc.nr, f.ssc.nr);
        set(&mut ssc.rmax, f.ssc.rmax);
        set(&mut self.ablation.use_yaw_align, f.ablation.use_yaw_align);
        set(&mut self.ablation.use_icp, f.ablation.use_icp);
        set(&mut self.ablation.use_semantic_encoding, f.ablation.use_semantic_encoding);
        Ok(())
    }

    /// The dataset root, which must exist.
    pub fn require_root(&self) -> Result<&Path> {
        let Some(root) = self.dataset_root.as_deref() else {
            bail!("--dataset-root is required (or `dataset_root` in the config file)");
        };
        if !root.is_dir() {
            bail!("dataset root {} does not exist", root.display());
        }
        Ok(root)
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .context("building worker pool")
    }
}
