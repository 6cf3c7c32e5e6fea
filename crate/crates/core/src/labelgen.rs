//! Best-tracker labels: per-video performance vectors, L2 normalization and
//! one-hot winners.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ResultSet, SequenceRecord};
use crate::metrics::{frame_scores, MetricError, MetricKind};

/// Norms at or below this are treated as all-zero.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("tracker '{tracker}' has no trajectory for video '{video}'")]
    MissingTrajectory { tracker: String, video: String },
    #[error("tracker '{tracker}', video '{video}': {source}")]
    Metric {
        tracker: String,
        video: String,
        #[source]
        source: MetricError,
    },
    #[error("label file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfVector {
    pub video_id: String,
    /// One score per tracker, in result-set order.
    pub scores: Vec<f64>,
    pub metric: MetricKind,
}

/// `a / ||a||_2`, or the uniform unit vector with the degenerate flag set
/// when the norm vanishes.
pub fn normalize(scores: &[f64]) -> (Vec<f64>, bool) {
    let norm = scores.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > NORM_EPS {
        (scores.iter().map(|v| v / norm).collect(), false)
    } else {
        let u = 1.0 / (scores.len() as f64).sqrt();
        (vec![u; scores.len()], true)
    }
}

/// Index of the first maximum. Panics on an empty slice.
pub fn argmax_first(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of empty slice");
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// One-hot vector with a 1 at the first index attaining the maximum.
pub fn onehot(probs: &[f64]) -> (Vec<u8>, usize) {
    let winner = argmax_first(probs);
    let hot = (0..probs.len()).map(|i| u8::from(i == winner)).collect();
    (hot, winner)
}

fn trajectory_for<'a>(set: &'a ResultSet, video: &str) -> Result<&'a crate::metrics::Trajectory, LabelError> {
    set.get(video).ok_or_else(|| LabelError::MissingTrajectory {
        tracker: set.tracker_id.clone(),
        video: video.to_string(),
    })
}

pub fn performance_vector(
    video: &SequenceRecord,
    results: &[ResultSet],
    metric: MetricKind,
) -> Result<PerfVector, LabelError> {
    let scores = results
        .iter()
        .map(|set| {
            metric
                .evaluate(trajectory_for(set, &video.id)?, &video.gt)
                .map_err(|source| LabelError::Metric {
                    tracker: set.tracker_id.clone(),
                    video: video.id.clone(),
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(PerfVector {
        video_id: video.id.clone(),
        scores,
        metric,
    })
}

/// Performance restricted to frames in `frames`, computed as the mean of the
/// metric's per-frame kernel. Intervals without scored frames give zeros.
pub fn interval_performance(
    video: &SequenceRecord,
    results: &[ResultSet],
    metric: MetricKind,
    frames: Range<usize>,
) -> Result<PerfVector, LabelError> {
    let scores = results
        .iter()
        .map(|set| {
            let all =
                frame_scores(trajectory_for(set, &video.id)?, &video.gt).map_err(|source| LabelError::Metric {
                    tracker: set.tracker_id.clone(),
                    video: video.id.clone(),
                    source,
                })?;
            let inside: Vec<f64> = all
                .iter()
                .filter(|s| frames.contains(&s.frame))
                .map(|s| metric.kernel(s))
                .collect();
            Ok(if inside.is_empty() {
                0.0
            } else {
                inside.iter().sum::<f64>() / (inside.len() as f64 * metric.kernel_scale())
            })
        })
        .collect::<Result<_, LabelError>>()?;
    Ok(PerfVector {
        video_id: video.id.clone(),
        scores,
        metric,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BofnLabel {
    pub video_id: String,
    pub metric: MetricKind,
    pub trackers: Vec<String>,
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub onehot: Vec<u8>,
    pub winner: usize,
    pub degenerate: bool,
}

impl BofnLabel {
    pub fn from_perf(perf: PerfVector, trackers: Vec<String>) -> Self {
        let (probs, degenerate) = normalize(&perf.scores);
        let (onehot, winner) = onehot(&probs);
        Self {
            video_id: perf.video_id,
            metric: perf.metric,
            trackers,
            scores: perf.scores,
            probs,
            onehot,
            winner,
            degenerate,
        }
    }

    pub fn winner_id(&self) -> &str {
        &self.trackers[self.winner]
    }
}

pub fn build_label_set(
    sequences: &[SequenceRecord],
    results: &[ResultSet],
    metric: MetricKind,
) -> Result<Vec<BofnLabel>, LabelError> {
    let trackers: Vec<String> = results.iter().map(|r| r.tracker_id.clone()).collect();
    sequences
        .par_iter()
        .map(|seq| {
            let perf = performance_vector(seq, results, metric)?;
            Ok(BofnLabel::from_perf(perf, trackers.clone()))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    video_id: String,
    metric: MetricKind,
    trackers: Vec<String>,
    scores: Vec<f64>,
    probs: Vec<f64>,
    winner: String,
    degenerate: bool,
}

/// JSON-lines label file, one record per video.
pub fn format_labels(labels: &[BofnLabel]) -> String {
    labels
        .iter()
        .map(|l| {
            let rec = LabelRecord {
                video_id: l.video_id.clone(),
                metric: l.metric,
                trackers: l.trackers.clone(),
                scores: l.scores.clone(),
                probs: l.probs.clone(),
                winner: l.winner_id().to_string(),
                degenerate: l.degenerate,
            };
            serde_json::to_string(&rec).expect("label serializes") + "\n"
        })
        .collect()
}

pub fn parse_labels(text: &str) -> Result<Vec<BofnLabel>, LabelError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            let fmt_err = |message: String| LabelError::Format { line, message };
            let rec: LabelRecord = serde_json::from_str(l).map_err(|e| fmt_err(e.to_string()))?;
            let n = rec.trackers.len();
            if n == 0 || rec.scores.len() != n || rec.probs.len() != n {
                return Err(fmt_err(
                    "trackers, scores and probs must have equal nonzero length".into(),
                ));
            }
            let winner = rec
                .trackers
                .iter()
                .position(|t| *t == rec.winner)
                .ok_or_else(|| fmt_err(format!("winner '{}' is not a listed tracker", rec.winner)))?;
            Ok(BofnLabel {
                video_id: rec.video_id,
                metric: rec.metric,
                trackers: rec.trackers,
                scores: rec.scores,
                probs: rec.probs,
                onehot: (0..n).map(|i| u8::from(i == winner)).collect(),
                winner,
                degenerate: rec.degenerate,
            })
        })
        .collect()
}
