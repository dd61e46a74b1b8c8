//! Semantic Scan Context place recognition for labeled LiDAR scans.
//!
//! The crate estimates the planar relative pose `(dx, dy, yaw)` between two
//! scans without an initial guess (a yaw search over a one-dimensional ring of
//! nearest representative points, then a label-gated ICP for translation),
//! aligns the second scan, and scores the pair with a polar grid descriptor
//! holding the most representative semantic class per block.
//!
//! Modules:
//! - [`point`]: class taxonomy, label remapping, priority table
//! - [`kitti`]: KITTI / SemanticKITTI readers and writers
//! - [`projection`]: representative filtering and ring projection
//! - [`sicp`]: yaw search and semantic ICP
//! - [`ssc`]: descriptor encoding and similarity
//! - [`pipeline`]: pair matching with ablation switches
//! - [`eval`]: pair sampling, PR curves, F1-max, extended precision, pose errors
//! - [`synthetic`]: seeded urban-like scenes, rigid transforms and brute-force oracles

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod kitti;
pub mod pipeline;
pub mod point;
pub mod pose;
pub mod projection;
pub mod sicp;
pub mod ssc;
pub mod synthetic;

pub use error::{Error, Result};
pub use pipeline::{match_pair, AblationConfig, MatchResult};
pub use point::{remap_label, LabeledCloud, PriorityTable, SemanticClass, SemanticPoint};
pub use pose::RelativePose;
pub use projection::{RingProjection, SicpParams};
pub use sicp::estimate_relative_pose;
pub use ssc::{SscDescriptor, SscParams};
