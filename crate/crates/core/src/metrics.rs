//! Trajectory metrics: success AUC, precision, normalized precision, average
//! overlap, success rates and a simplified (no re-initialization) EAO.
//!
//! Every per-sequence metric except EAO is a mean over *scored* frames of a
//! per-frame kernel. The init frame (index 0) is never scored, and frames whose
//! ground truth is absent or zero-area are skipped. A missing prediction scores
//! overlap 0 and infinite center error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{center_error, iou, norm_center_error, BBox, MaybeBox};

/// Number of points on both threshold grids (AUC and normalized precision).
pub const GRID_POINTS: usize = 51;
/// Center-error threshold for precision, in pixels.
pub const PRECISION_TAU_PX: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("trajectory length {pred} does not match ground truth length {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("no scored frames")]
    NoScoredFrames,
    #[error("empty input")]
    EmptyInput,
    #[error("bad interval [{lo}, {hi}]")]
    BadInterval { lo: usize, hi: usize },
}

/// Success-plot overlap threshold `i / 50` for `i` in `0..51`.
pub fn auc_threshold(i: usize) -> f64 {
    i as f64 / 50.0
}

/// Normalized-precision threshold `i / 100` for `i` in `0..51`.
pub fn norm_precision_threshold(i: usize) -> f64 {
    i as f64 / 100.0
}

fn auc_grid() -> [f64; GRID_POINTS] {
    std::array::from_fn(auc_threshold)
}

fn norm_grid() -> [f64; GRID_POINTS] {
    std::array::from_fn(norm_precision_threshold)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub boxes: Vec<MaybeBox>,
}

impl Trajectory {
    pub fn new(boxes: Vec<MaybeBox>) -> Self {
        Self { boxes }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn get(&self, frame: usize) -> Option<&BBox> {
        self.boxes.get(frame).and_then(|b| b.as_ref())
    }

    pub fn absent(len: usize) -> Self {
        Self { boxes: vec![None; len] }
    }
}

impl From<Vec<MaybeBox>> for Trajectory {
    fn from(boxes: Vec<MaybeBox>) -> Self {
        Self { boxes }
    }
}

impl FromIterator<MaybeBox> for Trajectory {
    fn from_iter<I: IntoIterator<Item = MaybeBox>>(iter: I) -> Self {
        Self {
            boxes: iter.into_iter().collect(),
        }
    }
}

/// Raw per-frame comparison values for one scored frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub frame: usize,
    pub iou: f64,
    pub center_error: f64,
    pub norm_center_error: f64,
}

impl FrameScore {
    pub fn compare(frame: usize, pred: Option<&BBox>, gt: &BBox) -> Self {
        match pred {
            Some(p) => Self {
                frame,
                iou: iou(p, gt),
                center_error: center_error(p, gt),
                norm_center_error: norm_center_error(p, gt).unwrap_or(f64::INFINITY),
            },
            None => Self {
                frame,
                iou: 0.0,
                center_error: f64::INFINITY,
                norm_center_error: f64::INFINITY,
            },
        }
    }
}

/// Whether frame `frame` of `gt` takes part in scoring.
pub fn is_scored(gt: &Trajectory, frame: usize) -> bool {
    frame > 0 && gt.get(frame).is_some_and(BBox::is_proper)
}

pub fn frame_scores(pred: &Trajectory, gt: &Trajectory) -> Result<Vec<FrameScore>, MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    Ok((1..gt.len())
        .filter(|&f| is_scored(gt, f))
        .map(|f| FrameScore::compare(f, pred.get(f), gt.get(f).expect("scored frame")))
        .collect())
}

pub fn overlap_series(pred: &Trajectory, gt: &Trajectory) -> Result<Vec<f64>, MetricError> {
    Ok(frame_scores(pred, gt)?.iter().map(|s| s.iou).collect())
}

fn nonempty<T>(xs: &[T]) -> Result<usize, MetricError> {
    if xs.is_empty() {
        Err(MetricError::NoScoredFrames)
    } else {
        Ok(xs.len())
    }
}

/// Mean over the 51 overlap thresholds of the fraction of frames with
/// overlap strictly above the threshold.
pub fn success_auc_from_overlaps(overlaps: &[f64]) -> Result<f64, MetricError> {
    let n = nonempty(overlaps)?;
    let mut sorted = overlaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let passed: usize = auc_grid()
        .iter()
        .map(|&t| n - sorted.partition_point(|&v| v <= t))
        .sum();
    Ok(passed as f64 / (GRID_POINTS * n) as f64)
}

pub fn success_rate_from_overlaps(overlaps: &[f64], tau: f64) -> Result<f64, MetricError> {
    let n = nonempty(overlaps)?;
    Ok(overlaps.iter().filter(|&&v| v > tau).count() as f64 / n as f64)
}

pub fn average_overlap_from_overlaps(overlaps: &[f64]) -> Result<f64, MetricError> {
    let n = nonempty(overlaps)?;
    Ok(overlaps.iter().sum::<f64>() / n as f64)
}

pub fn success_auc(pred: &Trajectory, gt: &Trajectory) -> Result<f64, MetricError> {
    success_auc_from_overlaps(&overlap_series(pred, gt)?)
}

pub fn average_overlap(pred: &Trajectory, gt: &Trajectory) -> Result<f64, MetricError> {
    average_overlap_from_overlaps(&overlap_series(pred, gt)?)
}

pub fn success_rate(pred: &Trajectory, gt: &Trajectory, tau: f64) -> Result<f64, MetricError> {
    success_rate_from_overlaps(&overlap_series(pred, gt)?, tau)
}

fn precision_from_frames(frames: &[FrameScore], tau_px: f64) -> Result<f64, MetricError> {
    let n = nonempty(frames)?;
    Ok(frames.iter().filter(|s| s.center_error <= tau_px).count() as f64 / n as f64)
}

fn norm_precision_from_frames(frames: &[FrameScore]) -> Result<f64, MetricError> {
    let n = nonempty(frames)?;
    let mut errors: Vec<f64> = frames.iter().map(|s| s.norm_center_error).collect();
    errors.sort_by(f64::total_cmp);
    let passed: usize = norm_grid().iter().map(|&t| errors.partition_point(|&e| e <= t)).sum();
    Ok(passed as f64 / (GRID_POINTS * n) as f64)
}

pub fn precision_at(pred: &Trajectory, gt: &Trajectory, tau_px: f64) -> Result<f64, MetricError> {
    precision_from_frames(&frame_scores(pred, gt)?, tau_px)
}

pub fn norm_precision(pred: &Trajectory, gt: &Trajectory) -> Result<f64, MetricError> {
    norm_precision_from_frames(&frame_scores(pred, gt)?)
}

/// Fraction of frames (in percent-free units) passing each success threshold.
pub fn success_curve(overlaps: &[f64]) -> Vec<(f64, f64)> {
    let n = overlaps.len().max(1) as f64;
    auc_grid()
        .iter()
        .map(|&t| (t, overlaps.iter().filter(|&&v| v > t).count() as f64 / n))
        .collect()
}

/// Fraction of frames within each center-error threshold 0..=50 px.
pub fn precision_curve(center_errors: &[f64]) -> Vec<(f64, f64)> {
    let n = center_errors.len().max(1) as f64;
    (0..=50)
        .map(|t| {
            let t = t as f64;
            (t, center_errors.iter().filter(|&&e| e <= t).count() as f64 / n)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EaoSummary {
    pub eao: f64,
    pub accuracy: f64,
    pub robustness: f64,
}

/// Expected average overlap without tracker re-initialization.
///
/// For every length `L` in `[lo, hi]` each sequence contributes the mean of its
/// first `L` overlaps, zero-padded when shorter than `L`; the EAO is the mean
/// over `L` of the across-sequence average. Accuracy is the mean overlap over
/// frames with non-zero overlap and robustness the fraction of such frames,
/// both pooled over all frames.
pub fn simplified_eao(per_sequence_overlaps: &[Vec<f64>], lo: usize, hi: usize) -> Result<EaoSummary, MetricError> {
    if per_sequence_overlaps.is_empty() || per_sequence_overlaps.iter().any(Vec::is_empty) {
        return Err(MetricError::EmptyInput);
    }
    if lo == 0 || lo > hi {
        return Err(MetricError::BadInterval { lo, hi });
    }
    let prefix: Vec<Vec<f64>> = per_sequence_overlaps
        .iter()
        .map(|s| {
            let mut acc = 0.0;
            std::iter::once(0.0)
                .chain(s.iter().map(|v| {
                    acc += v;
                    acc
                }))
                .collect()
        })
        .collect();
    let n_seq = per_sequence_overlaps.len() as f64;
    let curve_sum: f64 = (lo..=hi)
        .map(|len| prefix.iter().map(|p| p[len.min(p.len() - 1)] / len as f64).sum::<f64>() / n_seq)
        .sum();
    let eao = curve_sum / (hi - lo + 1) as f64;

    let all = per_sequence_overlaps.iter().flatten();
    let total = per_sequence_overlaps.iter().map(Vec::len).sum::<usize>();
    let (hits, hit_sum) = all
        .filter(|&&v| v > 0.0)
        .fold((0usize, 0.0), |(c, s), &v| (c + 1, s + v));
    let accuracy = if hits > 0 { hit_sum / hits as f64 } else { 0.0 };
    Ok(EaoSummary {
        eao,
        accuracy,
        robustness: hits as f64 / total as f64,
    })
}

pub fn top1_accuracy<T: PartialEq>(predicted: &[T], labels: &[T]) -> Result<f64, MetricError> {
    if predicted.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            pred: predicted.len(),
            gt: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Metric used for labels, oracle selection and ablation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    SuccessAuc,
    AverageOverlap,
    Sr50,
    Sr75,
    Precision,
    NormPrecision,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::SuccessAuc,
        MetricKind::AverageOverlap,
        MetricKind::Sr50,
        MetricKind::Sr75,
        MetricKind::Precision,
        MetricKind::NormPrecision,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::SuccessAuc => "success_auc",
            MetricKind::AverageOverlap => "average_overlap",
            MetricKind::Sr50 => "sr50",
            MetricKind::Sr75 => "sr75",
            MetricKind::Precision => "precision",
            MetricKind::NormPrecision => "norm_precision",
        }
    }

    /// Per-frame contribution, in units where the metric equals
    /// `sum(kernel) / (frames * kernel_scale())`. Count-based metrics use
    /// integer-valued kernels so that sums are exact.
    pub fn kernel(&self, s: &FrameScore) -> f64 {
        let count = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            MetricKind::SuccessAuc => auc_grid().partition_point(|&t| t < s.iou) as f64,
            MetricKind::AverageOverlap => s.iou,
            MetricKind::Sr50 => count(s.iou > 0.5),
            MetricKind::Sr75 => count(s.iou > 0.75),
            MetricKind::Precision => count(s.center_error <= PRECISION_TAU_PX),
            MetricKind::NormPrecision => {
                let below = norm_grid().partition_point(|&t| t < s.norm_center_error);
                (GRID_POINTS - below) as f64
            }
        }
    }

    pub fn kernel_scale(&self) -> f64 {
        match self {
            MetricKind::SuccessAuc | MetricKind::NormPrecision => GRID_POINTS as f64,
            _ => 1.0,
        }
    }

    pub fn from_frames(&self, frames: &[FrameScore]) -> Result<f64, MetricError> {
        match self {
            MetricKind::SuccessAuc => success_auc_from_overlaps(&frames.iter().map(|s| s.iou).collect::<Vec<_>>()),
            MetricKind::AverageOverlap => {
                average_overlap_from_overlaps(&frames.iter().map(|s| s.iou).collect::<Vec<_>>())
            }
            MetricKind::Sr50 => success_rate_from_overlaps(&frames.iter().map(|s| s.iou).collect::<Vec<_>>(), 0.5),
            MetricKind::Sr75 => success_rate_from_overlaps(&frames.iter().map(|s| s.iou).collect::<Vec<_>>(), 0.75),
            MetricKind::Precision => precision_from_frames(frames, PRECISION_TAU_PX),
            MetricKind::NormPrecision => norm_precision_from_frames(frames),
        }
    }

    pub fn evaluate(&self, pred: &Trajectory, gt: &Trajectory) -> Result<f64, MetricError> {
        self.from_frames(&frame_scores(pred, gt)?)
    }

    pub fn of_report(&self, r: &MetricReport) -> f64 {
        match self {
            MetricKind::SuccessAuc => r.auc,
            MetricKind::AverageOverlap => r.ao,
            MetricKind::Sr50 => r.sr50,
            MetricKind::Sr75 => r.sr75,
            MetricKind::Precision => r.precision,
            MetricKind::NormPrecision => r.norm_precision,
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "success_auc" | "auc" => MetricKind::SuccessAuc,
            "average_overlap" | "ao" => MetricKind::AverageOverlap,
            "sr50" => MetricKind::Sr50,
            "sr75" => MetricKind::Sr75,
            "precision" | "p" => MetricKind::Precision,
            "norm_precision" | "p_norm" => MetricKind::NormPrecision,
            other => return Err(format!("unknown metric '{other}'")),
        })
    }
}

/// All measures for one trajectory, or averaged over a set of sequences.
/// `eao` is the simplified no-reset variant and is reported as
/// "EAO-simplified".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub precision: f64,
    pub norm_precision: f64,
    pub ao: f64,
    pub sr50: f64,
    pub sr75: f64,
    pub eao: f64,
    pub accuracy: f64,
    pub robustness: f64,
    pub frames_evaluated: usize,
}

impl MetricReport {
    pub fn from_frames(frames: &[FrameScore]) -> Result<Self, MetricError> {
        Self::aggregate(std::slice::from_ref(&frames.to_vec()))
    }

    pub fn compute(pred: &Trajectory, gt: &Trajectory) -> Result<Self, MetricError> {
        Self::from_frames(&frame_scores(pred, gt)?)
    }

    /// Dataset-level report: per-sequence means for the frame-wise metrics,
    /// EAO over lengths `[1, longest sequence]`, accuracy and robustness
    /// pooled over frames.
    pub fn aggregate(sequences: &[Vec<FrameScore>]) -> Result<Self, MetricError> {
        if sequences.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        let overlaps: Vec<Vec<f64>> = sequences.iter().map(|s| s.iter().map(|f| f.iou).collect()).collect();
        let mut sums = [0.0f64; 6];
        for frames in sequences {
            for (slot, kind) in sums.iter_mut().zip(MetricKind::ALL) {
                *slot += kind.from_frames(frames)?;
            }
        }
        let n = sequences.len() as f64;
        let longest = overlaps.iter().map(Vec::len).max().unwrap_or(0);
        let eao = simplified_eao(&overlaps, 1, longest)?;
        Ok(Self {
            auc: sums[0] / n,
            ao: sums[1] / n,
            sr50: sums[2] / n,
            sr75: sums[3] / n,
            precision: sums[4] / n,
            norm_precision: sums[5] / n,
            eao: eao.eao,
            accuracy: eao.accuracy,
            robustness: eao.robustness,
            frames_evaluated: sequences.iter().map(Vec::len).sum(),
        })
    }
}
