//! Best-tracker predictor: early-window featurization, a multinomial logistic
//! regression trained by full-batch gradient descent, and the prediction
//! interchange file shared with external predictors.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{read_text, DatasetError, SequenceRecord};
use crate::geometry::{BBox, MaybeBox};
use crate::labelgen::{argmax_first, BofnLabel};
use crate::metrics::{top1_accuracy, MetricError};

/// Frames (including the init frame) the selector may look at.
pub const DEFAULT_WINDOW: usize = 5;
/// Sequence-length bucket edges; lengths fall into `len(edges) + 1` buckets.
pub const LENGTH_BUCKETS: [usize; 3] = [100, 300, 1000];
const BASE_FEATURES: usize = 7;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("feature dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label for '{video}' names trackers {got:?}, model expects {expected:?}")]
    TrackerMismatch {
        video: String,
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("no label for sequence '{0}'")]
    MissingLabel(String),
    #[error("prediction line {line}: unknown tracker '{tracker}'")]
    UnknownTracker { line: usize, tracker: String },
    #[error("duplicate prediction for sequence '{sequence}', frame {frame}")]
    DuplicateRecord { sequence: String, frame: usize },
    #[error("prediction line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] DatasetError),
    #[error("model file: {0}")]
    Model(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

/// Maps an early window of boxes to a fixed-length feature vector:
/// init-box geometry, early motion, attribute one-hots and a length bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub attributes: Vec<String>,
    pub window: usize,
}

fn squash(v: f64) -> f64 {
    v / (1.0 + v)
}

impl Featurizer {
    pub fn new(attributes: Vec<String>, window: usize) -> Self {
        Self {
            attributes,
            window: window.max(1),
        }
    }

    pub fn dim(&self) -> usize {
        BASE_FEATURES + self.attributes.len() + LENGTH_BUCKETS.len() + 1
    }

    /// Features from the first `window` ground-truth frames of `seq`.
    pub fn featurize(&self, seq: &SequenceRecord) -> FeatureVector {
        let end = self.window.min(seq.gt.len());
        self.featurize_window(&seq.gt.boxes[..end], &seq.attributes, seq.frame_size, seq.frame_count)
    }

    /// Features from an arbitrary window of boxes whose first entry plays the
    /// role of the init box. Only the boxes passed in are read.
    pub fn featurize_window(
        &self,
        window: &[MaybeBox],
        attributes: &BTreeSet<String>,
        frame_size: Option<(f64, f64)>,
        sequence_len: usize,
    ) -> FeatureVector {
        let present: Vec<&BBox> = window.iter().flatten().collect();
        let mut f = Vec::with_capacity(self.dim());

        let (fw, fh) = frame_size.unwrap_or_else(|| {
            present
                .iter()
                .fold((1.0f64, 1.0f64), |(w, h), b| (w.max(b.x + b.w), h.max(b.y + b.h)))
        });
        match present.first() {
            Some(b0) => {
                let (cx, cy) = b0.center();
                f.push((b0.area() / (fw * fh)).clamp(0.0, 1.0));
                f.push(if b0.w + b0.h > 0.0 { b0.w / (b0.w + b0.h) } else { 0.5 });
                f.push((cx / fw).clamp(0.0, 1.0));
                f.push((cy / fh).clamp(0.0, 1.0));
            }
            None => f.extend([0.0, 0.5, 0.5, 0.5]),
        }

        let diag = present
            .first()
            .map(|b| b.w.hypot(b.h))
            .filter(|d| *d > 0.0)
            .unwrap_or(1.0);
        let steps: Vec<f64> = present
            .windows(2)
            .map(|p| crate::geometry::center_error(p[0], p[1]) / diag)
            .collect();
        let mean_step = if steps.is_empty() {
            0.0
        } else {
            steps.iter().sum::<f64>() / steps.len() as f64
        };
        let max_step = steps.iter().copied().fold(0.0, f64::max);
        f.push(squash(mean_step));
        f.push(squash(max_step));
        let scale_ratio = match (present.first(), present.last()) {
            (Some(a), Some(b)) if present.len() >= 2 && a.area() > 0.0 => b.area() / a.area(),
            _ => 1.0,
        };
        f.push(scale_ratio);

        f.extend(
            self.attributes
                .iter()
                .map(|a| f64::from(u8::from(attributes.contains(a)))),
        );
        let bucket = LENGTH_BUCKETS.iter().filter(|&&e| sequence_len >= e).count();
        f.extend((0..=LENGTH_BUCKETS.len()).map(|i| f64::from(u8::from(i == bucket))));
        debug_assert_eq!(f.len(), self.dim());
        FeatureVector(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.5,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub tracker_ids: Vec<String>,
    pub featurizer: Featurizer,
    /// Row-major `dim x classes`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Classes without training examples never win.
    pub active: Vec<bool>,
    pub hyper: Hyper,
    pub loss_curve: Vec<f64>,
}

impl ClassifierModel {
    /// Untrained model: zero weights, every class active.
    pub fn zeros(tracker_ids: Vec<String>, featurizer: Featurizer) -> Self {
        let n = tracker_ids.len();
        let d = featurizer.dim();
        Self {
            tracker_ids,
            featurizer,
            weights: vec![0.0; d * n],
            bias: vec![0.0; n],
            active: vec![true; n],
            hyper: Hyper {
                epochs: 0,
                ..Hyper::default()
            },
            loss_curve: Vec::new(),
        }
    }

    pub fn classes(&self) -> usize {
        self.tracker_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.featurizer.dim()
    }

    pub fn scores(&self, x: &FeatureVector) -> Result<Vec<f64>, PredictorError> {
        if x.0.len() != self.dim() {
            return Err(PredictorError::DimensionMismatch {
                expected: self.dim(),
                got: x.0.len(),
            });
        }
        let logits = logits(&self.weights, &self.bias, &x.0, self.classes());
        Ok(softmax_masked(&logits, &self.active))
    }

    pub fn predict(
        &self,
        x: &FeatureVector,
        sequence_id: &str,
        frame_index: usize,
    ) -> Result<PredictionRecord, PredictorError> {
        let scores = self.scores(x)?;
        let chosen = argmax_first(&scores);
        Ok(PredictionRecord {
            sequence_id: sequence_id.to_string(),
            frame_index,
            tracker_ids: self.tracker_ids.clone(),
            scores,
            chosen: self.tracker_ids[chosen].clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn logits(weights: &[f64], bias: &[f64], x: &[f64], classes: usize) -> Vec<f64> {
    let mut z = bias.to_vec();
    for (d, &xd) in x.iter().enumerate() {
        if xd != 0.0 {
            let row = &weights[d * classes..(d + 1) * classes];
            for (zc, w) in z.iter_mut().zip(row) {
                *zc += xd * w;
            }
        }
    }
    z
}

/// Softmax over active classes; inactive classes get probability 0.
pub fn softmax_masked(logits: &[f64], active: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .zip(active)
        .map(|(&z, &a)| if a { (z - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy plus `l2 / 2 * ||W||^2` and its gradient with respect
/// to the flattened parameters `[weights (dim x classes), bias (classes)]`.
pub fn objective(
    params: &[f64],
    xs: &[FeatureVector],
    ys: &[usize],
    classes: usize,
    active: &[bool],
    l2: f64,
) -> (f64, Vec<f64>) {
    let dim = params.len() / classes - 1;
    let (w, b) = params.split_at(dim * classes);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let n = xs.len() as f64;
    for (x, &y) in xs.iter().zip(ys) {
        let p = softmax_masked(&logits(w, b, &x.0, classes), active);
        loss -= p[y].ln();
        for c in 0..classes {
            let delta = (p[c] - f64::from(u8::from(c == y))) / n;
            if delta == 0.0 {
                continue;
            }
            for (d, &xd) in x.0.iter().enumerate() {
                grad[d * classes + c] += delta * xd;
            }
            grad[dim * classes + c] += delta;
        }
    }
    loss /= n;
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wv) in grad.iter_mut().zip(w) {
        *g += l2 * wv;
    }
    (loss, grad)
}

/// Fits the model on `(features, winner index)` pairs by full-batch
/// gradient descent from zero weights. Degenerate labels must be filtered
/// out by the caller (see [`training_pairs`]).
pub fn train(
    xs: &[FeatureVector],
    ys: &[usize],
    tracker_ids: Vec<String>,
    featurizer: Featurizer,
    hyper: Hyper,
) -> Result<ClassifierModel, PredictorError> {
    if xs.is_empty() {
        return Err(PredictorError::EmptyTrainingSet);
    }
    let classes = tracker_ids.len();
    let dim = featurizer.dim();
    if let Some(bad) = xs.iter().find(|x| x.0.len() != dim) {
        return Err(PredictorError::DimensionMismatch {
            expected: dim,
            got: bad.0.len(),
        });
    }
    let mut active = vec![false; classes];
    for &y in ys {
        active[y] = true;
    }
    let mut params = vec![0.0; dim * classes + classes];
    let mut loss_curve = Vec::with_capacity(hyper.epochs + 1);
    for epoch in 0..=hyper.epochs {
        let (loss, grad) = objective(&params, xs, ys, classes, &active, hyper.l2);
        if !loss.is_finite() {
            return Err(PredictorError::NonFiniteLoss { epoch });
        }
        loss_curve.push(loss);
        if epoch == hyper.epochs {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= hyper.lr * g;
        }
    }
    let bias = params.split_off(dim * classes);
    Ok(ClassifierModel {
        tracker_ids,
        featurizer,
        weights: params,
        bias,
        active,
        hyper,
        loss_curve,
    })
}

/// Features and winner indices for every sequence with a non-degenerate
/// label. Augmented ids (`<id>#<spec>`) fall back to their source label.
pub fn training_pairs(
    featurizer: &Featurizer,
    sequences: &[SequenceRecord],
    labels: &[BofnLabel],
    tracker_ids: &[String],
) -> Result<(Vec<FeatureVector>, Vec<usize>), PredictorError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for seq in sequences {
        let label = find_label(labels, seq);
        let Some(label) = label else { continue };
        if label.trackers != tracker_ids {
            return Err(PredictorError::TrackerMismatch {
                video: label.video_id.clone(),
                expected: tracker_ids.to_vec(),
                got: label.trackers.clone(),
            });
        }
        if label.degenerate {
            continue;
        }
        xs.push(featurizer.featurize(seq));
        ys.push(label.winner);
    }
    Ok((xs, ys))
}

pub fn find_label<'a>(labels: &'a [BofnLabel], seq: &SequenceRecord) -> Option<&'a BofnLabel> {
    labels
        .iter()
        .find(|l| l.video_id == seq.id)
        .or_else(|| labels.iter().find(|l| l.video_id == seq.base_id()))
}

/// Video-level top-1 accuracy of `model` against `labels` on `sequences`.
pub fn evaluate_top1_video(
    model: &ClassifierModel,
    sequences: &[SequenceRecord],
    labels: &[BofnLabel],
) -> Result<f64, PredictorError> {
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for seq in sequences {
        let label = find_label(labels, seq).ok_or_else(|| PredictorError::MissingLabel(seq.id.clone()))?;
        let rec = model.predict(&model.featurizer.featurize(seq), &seq.id, 0)?;
        predicted.push(rec.chosen);
        truth.push(label.winner_id().to_string());
    }
    Ok(top1_accuracy(&predicted, &truth)?)
}

/// One prediction: made for `sequence_id` at 0-based `frame_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub sequence_id: String,
    pub frame_index: usize,
    pub tracker_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub chosen: String,
}

#[derive(Serialize, Deserialize)]
struct ScoreEntry {
    tracker: String,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    sequence_id: String,
    frame_index: usize,
    scores: Vec<ScoreEntry>,
    chosen: String,
}

pub fn format_predictions(records: &[PredictionRecord]) -> String {
    records
        .iter()
        .map(|r| {
            let line = PredictionLine {
                sequence_id: r.sequence_id.clone(),
                frame_index: r.frame_index,
                scores: r
                    .tracker_ids
                    .iter()
                    .zip(&r.scores)
                    .map(|(t, &s)| ScoreEntry {
                        tracker: t.clone(),
                        score: s,
                    })
                    .collect(),
                chosen: r.chosen.clone(),
            };
            serde_json::to_string(&line).expect("prediction serializes") + "\n"
        })
        .collect()
}

/// Parses and validates an interchange file against the manifest tracker
/// list: trackers must be known and unique per record, scores finite,
/// `chosen` the highest-scoring tracker (manifest order breaks ties), and
/// each `(sequence, frame)` may appear once.
pub fn parse_predictions(text: &str, manifest_trackers: &[String]) -> Result<Vec<PredictionRecord>, PredictorError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fmt_err = |message: String| PredictorError::Format { line, message };
        let rec: PredictionLine = serde_json::from_str(raw).map_err(|e| fmt_err(e.to_string()))?;
        if rec.scores.is_empty() {
            return Err(fmt_err("no scores".into()));
        }
        let mut order = Vec::new();
        for e in &rec.scores {
            let idx = manifest_trackers.iter().position(|t| *t == e.tracker).ok_or_else(|| {
                PredictorError::UnknownTracker {
                    line,
                    tracker: e.tracker.clone(),
                }
            })?;
            if order.contains(&idx) {
                return Err(fmt_err(format!("tracker '{}' scored twice", e.tracker)));
            }
            if !e.score.is_finite() {
                return Err(fmt_err(format!("non-finite score for '{}'", e.tracker)));
            }
            order.push(idx);
        }
        if !manifest_trackers.contains(&rec.chosen) {
            return Err(PredictorError::UnknownTracker {
                line,
                tracker: rec.chosen,
            });
        }
        let best = rec
            .scores
            .iter()
            .zip(&order)
            .max_by(|(a, ia), (b, ib)| a.score.total_cmp(&b.score).then(ib.cmp(ia)))
            .map(|(e, _)| e.tracker.clone())
            .expect("nonempty");
        if best != rec.chosen {
            return Err(fmt_err(format!(
                "chosen '{}' is not the top-scoring tracker '{best}'",
                rec.chosen
            )));
        }
        if !seen.insert((rec.sequence_id.clone(), rec.frame_index)) {
            return Err(PredictorError::DuplicateRecord {
                sequence: rec.sequence_id,
                frame: rec.frame_index,
            });
        }
        out.push(PredictionRecord {
            sequence_id: rec.sequence_id,
            frame_index: rec.frame_index,
            tracker_ids: rec.scores.iter().map(|e| e.tracker.clone()).collect(),
            scores: rec.scores.iter().map(|e| e.score).collect(),
            chosen: rec.chosen,
        });
    }
    Ok(out)
}

pub fn load_external_predictions(
    path: &Path,
    manifest_trackers: &[String],
) -> Result<Vec<PredictionRecord>, PredictorError> {
    parse_predictions(&read_text(path)?, manifest_trackers)
}
