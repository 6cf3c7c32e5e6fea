//! Annotation-level training augmentations: temporal subsampling, spatial
//! rescaling, time reversal and target scale-down.
//!
//! Augmented records get the id `<id>#<spec>` and keep the applied steps in
//! [`SequenceRecord::history`] so pixel-consuming tools can replay them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::dataset::SequenceRecord;
use crate::metrics::Trajectory;
use crate::rng::{keyed_rng, str_key};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("sequence '{sequence}' would keep {frames} frame(s), at least 2 required")]
    TooShort { sequence: String, frames: usize },
    #[error("invalid augmentation parameter: {0}")]
    InvalidParameter(String),
    #[error("derived sequence id '{0}' collides with an existing id")]
    IdCollision(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentStep {
    /// Keep-ratio of frames, in `(0, 1]`.
    TemporalSubsample(f64),
    /// Multiplies all coordinates (and the frame size) by the factor.
    SpatialRescale(f64),
    Reverse,
    /// Shrinks every ground-truth box about its center to `(1 - factor)` of its size.
    TargetScale(f64),
}

impl fmt::Display for AugmentStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentStep::TemporalSubsample(r) => write!(f, "temporal:{r}"),
            AugmentStep::SpatialRescale(s) => write!(f, "spatial:{s}"),
            AugmentStep::Reverse => f.write_str("reverse"),
            AugmentStep::TargetScale(s) => write!(f, "target:{s}"),
        }
    }
}

impl FromStr for AugmentStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "reverse" {
            return Ok(AugmentStep::Reverse);
        }
        let (kind, value) = s.split_once(':').ok_or_else(|| format!("bad augmentation '{s}'"))?;
        let v: f64 = value.parse().map_err(|_| format!("bad augmentation value '{value}'"))?;
        let step = match kind {
            "temporal" => AugmentStep::TemporalSubsample(v),
            "spatial" => AugmentStep::SpatialRescale(v),
            "target" => AugmentStep::TargetScale(v),
            other => return Err(format!("unknown augmentation '{other}'")),
        };
        step.validate().map_err(|e| e.to_string())?;
        Ok(step)
    }
}

impl AugmentStep {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |msg: String| Err(AugmentError::InvalidParameter(msg));
        match *self {
            AugmentStep::TemporalSubsample(r) if !(r > 0.0 && r <= 1.0) => {
                bad(format!("temporal rate {r} not in (0, 1]"))
            }
            AugmentStep::SpatialRescale(s) if !(s > 0.0 && s.is_finite()) => {
                bad(format!("spatial factor {s} must be positive"))
            }
            AugmentStep::TargetScale(s) if !(0.0..1.0).contains(&s) => {
                bad(format!("target scale-down {s} not in [0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

/// A chain of steps applied left to right. `seed` enables jitter in temporal
/// subsampling; without it the stride is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub steps: Vec<AugmentStep>,
    pub seed: Option<u64>,
}

impl AugmentSpec {
    pub fn single(step: AugmentStep) -> Self {
        Self {
            steps: vec![step],
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }
}

impl fmt::Display for AugmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for AugmentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let steps = s.split('+').map(str::parse).collect::<Result<Vec<AugmentStep>, _>>()?;
        Ok(Self { steps, seed: None })
    }
}

/// Temporal keep-ratios, spatial factors and target scale-downs used by default.
pub const DEFAULT_TEMPORAL_RATES: [f64; 2] = [0.10, 0.50];
pub const DEFAULT_SPATIAL_FACTORS: [f64; 2] = [0.10, 0.50];
pub const DEFAULT_TARGET_SCALES: [f64; 3] = [0.10, 0.20, 0.50];

/// Every single parametric step, reversal alone, and each parametric step
/// followed by reversal (15 specs).
pub fn default_specs(seed: Option<u64>) -> Vec<AugmentSpec> {
    let parametric: Vec<AugmentStep> = DEFAULT_TEMPORAL_RATES
        .iter()
        .map(|&r| AugmentStep::TemporalSubsample(r))
        .chain(DEFAULT_SPATIAL_FACTORS.iter().map(|&s| AugmentStep::SpatialRescale(s)))
        .chain(DEFAULT_TARGET_SCALES.iter().map(|&s| AugmentStep::TargetScale(s)))
        .collect();
    let mut specs: Vec<AugmentSpec> = parametric.iter().map(|&s| AugmentSpec::single(s)).collect();
    specs.push(AugmentSpec::single(AugmentStep::Reverse));
    specs.extend(parametric.iter().map(|&s| AugmentSpec {
        steps: vec![s, AugmentStep::Reverse],
        seed: None,
    }));
    specs.into_iter().map(|s| s.with_seed(seed)).collect()
}

fn kept_count(m: usize, rate: f64) -> usize {
    // tolerance absorbs representation error in products like 0.1 * 30
    (((rate * m as f64) - 1e-9).ceil().max(1.0) as usize).min(m)
}

/// Indices (0-based) kept by temporal subsampling: `ceil(rate * m)` frames,
/// frame 0 always, one frame per equal-width stride bucket. With a seed the
/// frame inside each bucket is drawn at random, otherwise the bucket start
/// is used.
pub fn temporal_indices(m: usize, rate: f64, jitter: Option<(u64, u64)>) -> Result<Vec<usize>, AugmentError> {
    AugmentStep::TemporalSubsample(rate).validate()?;
    let n = kept_count(m, rate);
    let mut rng = jitter.map(|(seed, key)| keyed_rng(seed, &[key]));
    Ok((0..n)
        .map(|i| {
            let lo = i * m / n;
            let hi = (i + 1) * m / n;
            match (&mut rng, i) {
                (Some(r), i) if i > 0 && hi > lo + 1 => lo + r.random_range(0..hi - lo),
                _ => lo,
            }
        })
        .collect())
}

/// Keeps the given frames, in the given order.
pub fn select_frames(seq: &SequenceRecord, indices: &[usize]) -> SequenceRecord {
    let gt: Trajectory = indices.iter().map(|&i| seq.gt.boxes[i]).collect();
    SequenceRecord {
        frame_count: gt.len(),
        gt,
        ..seq.clone()
    }
}

pub fn temporal_subsample(seq: &SequenceRecord, rate: f64, seed: Option<u64>) -> Result<SequenceRecord, AugmentError> {
    let jitter = seed.map(|s| (s, str_key(&seq.id)));
    let idx = temporal_indices(seq.frame_count, rate, jitter)?;
    if idx.len() < 2 {
        return Err(AugmentError::TooShort {
            sequence: seq.id.clone(),
            frames: idx.len(),
        });
    }
    Ok(select_frames(seq, &idx))
}

pub fn spatial_rescale(seq: &SequenceRecord, factor: f64) -> Result<SequenceRecord, AugmentError> {
    AugmentStep::SpatialRescale(factor).validate()?;
    Ok(SequenceRecord {
        gt: seq.gt.boxes.iter().map(|b| b.map(|b| b.scaled(factor))).collect(),
        frame_size: seq.frame_size.map(|(w, h)| (w * factor, h * factor)),
        ..seq.clone()
    })
}

pub fn reverse(seq: &SequenceRecord) -> SequenceRecord {
    SequenceRecord {
        gt: seq.gt.boxes.iter().rev().copied().collect(),
        ..seq.clone()
    }
}

pub fn target_scale(seq: &SequenceRecord, factor: f64) -> Result<SequenceRecord, AugmentError> {
    AugmentStep::TargetScale(factor).validate()?;
    if factor == 0.0 {
        return Ok(seq.clone());
    }
    Ok(SequenceRecord {
        gt: seq
            .gt
            .boxes
            .iter()
            .map(|b| b.map(|b| b.resized_about_center(1.0 - factor)))
            .collect(),
        ..seq.clone()
    })
}

/// Applies every step of `spec` and tags the result with id `<id>#<spec>`.
pub fn apply(seq: &SequenceRecord, spec: &AugmentSpec) -> Result<SequenceRecord, AugmentError> {
    let mut out = seq.clone();
    for step in &spec.steps {
        out = match *step {
            AugmentStep::TemporalSubsample(r) => {
                // keyed by the source id so jitter does not depend on chain position
                let jitter = spec.seed.map(|s| (s, str_key(&seq.id)));
                let idx = temporal_indices(out.frame_count, r, jitter)?;
                if idx.len() < 2 {
                    return Err(AugmentError::TooShort {
                        sequence: seq.id.clone(),
                        frames: idx.len(),
                    });
                }
                select_frames(&out, &idx)
            }
            AugmentStep::SpatialRescale(s) => spatial_rescale(&out, s)?,
            AugmentStep::Reverse => reverse(&out),
            AugmentStep::TargetScale(s) => target_scale(&out, s)?,
        };
        out.history.push(step.to_string());
    }
    out.id = format!("{}#{}", seq.id, spec);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    /// Originals first (input order), then augmented copies per sequence.
    pub records: Vec<SequenceRecord>,
    /// `(sequence id, spec)` pairs dropped because too few frames survived.
    pub skipped: Vec<(String, String)>,
}

pub fn expand_training_set(sequences: &[SequenceRecord], specs: &[AugmentSpec]) -> Result<Expansion, AugmentError> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for s in sequences {
        if !seen.insert(s.id.clone()) {
            return Err(AugmentError::IdCollision(s.id.clone()));
        }
    }
    let mut records = sequences.to_vec();
    let mut skipped = Vec::new();
    for seq in sequences {
        for spec in specs {
            match apply(seq, spec) {
                Ok(aug) => {
                    if !seen.insert(aug.id.clone()) {
                        return Err(AugmentError::IdCollision(aug.id));
                    }
                    records.push(aug);
                }
                Err(AugmentError::TooShort { .. }) => skipped.push((seq.id.clone(), spec.to_string())),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Expansion { records, skipped })
}
