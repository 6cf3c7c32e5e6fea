//! Tracker-portfolio evaluation and best-of-N meta-tracker selection.
//!
//! The crate turns stored tracker outputs into per-video best-tracker labels,
//! trains a light selector over early-sequence features, and assembles
//! video-level and frame-level meta-trackers by selecting or splicing the
//! stored trajectories.

pub mod augment;
pub mod dataset;
pub mod geometry;
pub mod labelgen;
pub mod metrics;
pub mod predictor;
pub mod report;
pub mod rng;
pub mod select;
pub mod synth;
