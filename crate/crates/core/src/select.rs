//! The best-of-N meta-tracker: selection policies, video-level and
//! frame-level plans, trajectory splicing, overhead accounting and the
//! pool-size ablation.
//!
//! Frame-level plans splice precomputed, independently run trajectories; no
//! tracker is re-initialized at interval boundaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ResultSet, SequenceRecord};
use crate::labelgen::{interval_performance, normalize, onehot, performance_vector, LabelError};
use crate::metrics::{frame_scores, top1_accuracy, FrameScore, MetricError, MetricKind, MetricReport, Trajectory};
use crate::predictor::{ClassifierModel, PredictionRecord, PredictorError};
use crate::rng::{keyed_rng, str_key};

/// Seconds spent per selector evaluation.
pub const OVERHEAD_PER_EVAL_S: f64 = 0.84;
/// Frames between re-selections in frame-level mode.
pub const DEFAULT_INTERVAL: usize = 5;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("tracker pool is empty")]
    EmptyPool,
    #[error("interval length must be at least 1")]
    BadInterval,
    #[error("unknown tracker '{0}'")]
    UnknownTracker(String),
    #[error("tracker '{0}' is not in the pool")]
    NotInPool(String),
    #[error("pool size {size} exceeds the {available} ranked trackers")]
    PoolTooLarge { size: usize, available: usize },
    #[error("tracker '{tracker}' has no trajectory for sequence '{sequence}'")]
    MissingTrajectory { tracker: String, sequence: String },
    #[error("no prediction for sequence '{sequence}' at frame {frame}")]
    MissingPrediction { sequence: String, frame: usize },
    #[error("prediction for sequence '{sequence}' at frame {frame} scores no pool tracker")]
    PredictionOutsidePool { sequence: String, frame: usize },
    #[error("no sequences to evaluate")]
    NoSequences,
    #[error("plan file line {line}: {message}")]
    PlanFormat { line: usize, message: String },
    #[error("bad policy '{spec}': {message}")]
    Policy { spec: String, message: String },
    #[error("bad pool '{0}'")]
    Pool(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "level")]
pub enum Level {
    Video,
    Frame { k: usize },
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Level::Video => f.write_str("video"),
            Level::Frame { k } => write!(f, "frame(k={k})"),
        }
    }
}

/// Number of selector evaluations for an `m`-frame sequence.
pub fn n_evaluations(m: usize, level: Level) -> usize {
    match level {
        Level::Video => 1,
        Level::Frame { k } => (m.saturating_sub(1)).div_ceil(k.max(1)).max(1),
    }
}

pub fn overhead_seconds(n_e: usize) -> f64 {
    OVERHEAD_PER_EVAL_S * n_e as f64
}

/// Half-open 0-based intervals tiling frames `1..m`.
pub fn interval_bounds(m: usize, level: Level) -> Vec<(usize, usize)> {
    match level {
        Level::Video => vec![(1, m)],
        Level::Frame { k } => {
            let mut out: Vec<(usize, usize)> = (1..m).step_by(k).map(|s| (s, (s + k).min(m))).collect();
            if out.is_empty() {
                out.push((1, m));
            }
            out
        }
    }
}

/// Ordered subset of the manifest trackers, by manifest index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackerPool {
    pub members: Vec<usize>,
}

impl TrackerPool {
    pub fn all(n: usize) -> Self {
        Self {
            members: (0..n).collect(),
        }
    }

    pub fn from_ids(ids: &[String], manifest: &[String]) -> Result<Self, SelectError> {
        let members = ids
            .iter()
            .map(|id| {
                manifest
                    .iter()
                    .position(|m| m == id)
                    .ok_or_else(|| SelectError::UnknownTracker(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if members.is_empty() {
            return Err(SelectError::EmptyPool);
        }
        Ok(Self { members })
    }

    /// The top `n` entries of a ranking.
    pub fn nested(rank: &[usize], n: usize) -> Result<Self, SelectError> {
        if n == 0 {
            return Err(SelectError::EmptyPool);
        }
        if n > rank.len() {
            return Err(SelectError::PoolTooLarge {
                size: n,
                available: rank.len(),
            });
        }
        Ok(Self {
            members: rank[..n].to_vec(),
        })
    }

    /// Members in manifest order, which is the tie-break order.
    pub fn tie_order(&self) -> Vec<usize> {
        let mut m = self.members.clone();
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn ids(&self, manifest: &[String]) -> Vec<String> {
        self.members.iter().map(|&i| manifest[i].clone()).collect()
    }
}

/// Predictions keyed by `(sequence id, frame index)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalPredictions {
    pub records: BTreeMap<(String, usize), PredictionRecord>,
}

impl ExternalPredictions {
    pub fn new(records: Vec<PredictionRecord>) -> Self {
        Self {
            records: records
                .into_iter()
                .map(|r| ((r.sequence_id.clone(), r.frame_index), r))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Predictor {
    Model(Box<ClassifierModel>),
    External(ExternalPredictions),
}

#[derive(Debug, Clone)]
pub enum SelectionPolicy {
    /// Ground-truth upper bound; evaluation only.
    Oracle(MetricKind),
    Fixed(String),
    Random(u64),
    Predicted(Predictor),
}

impl SelectionPolicy {
    pub fn describe(&self) -> String {
        match self {
            SelectionPolicy::Oracle(m) => format!("oracle:{m}"),
            SelectionPolicy::Fixed(t) => format!("fixed:{t}"),
            SelectionPolicy::Random(s) => format!("random:{s}"),
            SelectionPolicy::Predicted(Predictor::Model(_)) => "predicted:model".into(),
            SelectionPolicy::Predicted(Predictor::External(_)) => "predicted:external".into(),
        }
    }
}

impl SelectionPolicy {
    /// Parses `oracle[:METRIC]`, `fixed:ID`, `random:SEED`, `model:PATH` or
    /// `external:PATH`. File-backed policies are loaded immediately.
    pub fn parse(spec: &str, manifest_trackers: &[String]) -> Result<Self, SelectError> {
        let bad = |message: String| SelectError::Policy {
            spec: spec.to_string(),
            message,
        };
        let (kind, arg) = match spec.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (spec, None),
        };
        let need = |what: &str| arg.ok_or_else(|| bad(format!("'{kind}' needs {what}")));
        Ok(match kind {
            "oracle" => SelectionPolicy::Oracle(match arg {
                Some(m) => m.parse().map_err(bad)?,
                None => MetricKind::default(),
            }),
            "fixed" => SelectionPolicy::Fixed(need("a tracker id")?.to_string()),
            "random" => SelectionPolicy::Random(
                need("a seed")?
                    .parse()
                    .map_err(|_| bad("seed must be an unsigned integer".into()))?,
            ),
            "model" => {
                let path = std::path::Path::new(need("a model path")?);
                let text = crate::dataset::read_text(path).map_err(|e| bad(e.to_string()))?;
                SelectionPolicy::Predicted(Predictor::Model(Box::new(ClassifierModel::from_json(&text)?)))
            }
            "external" => {
                let path = std::path::Path::new(need("a predictions path")?);
                let records = crate::predictor::load_external_predictions(path, manifest_trackers)?;
                SelectionPolicy::Predicted(Predictor::External(ExternalPredictions::new(records)))
            }
            other => return Err(bad(format!("unknown kind '{other}'"))),
        })
    }
}

impl TrackerPool {
    /// Parses `all`, `top:N` (first `N` of `rank`) or a comma-separated id list.
    pub fn parse(spec: &str, manifest_trackers: &[String], rank: &[usize]) -> Result<Self, SelectError> {
        if spec == "all" {
            return Ok(Self::all(manifest_trackers.len()));
        }
        if let Some(n) = spec.strip_prefix("top:") {
            let n: usize = n.parse().map_err(|_| SelectError::Pool(spec.to_string()))?;
            return Self::nested(rank, n);
        }
        let ids: Vec<String> = spec.split(',').map(|s| s.trim().to_string()).collect();
        Self::from_ids(&ids, manifest_trackers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub tracker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub sequence_id: String,
    pub frames: usize,
    pub level: Level,
    pub intervals: Vec<Interval>,
    pub n_e: usize,
    pub overhead_s: f64,
}

impl SelectionPlan {
    /// Tracker responsible for frame `f`; frame 0 belongs to the first interval.
    pub fn tracker_at(&self, f: usize) -> &str {
        self.intervals
            .iter()
            .find(|iv| f < iv.end)
            .unwrap_or_else(|| self.intervals.last().expect("plan has intervals"))
            .tracker
            .as_str()
    }
}

/// Frame index a prediction for interval `(start, _)` is filed under.
pub fn prediction_frame(level: Level, start: usize) -> usize {
    match level {
        Level::Video => 0,
        Level::Frame { .. } => start,
    }
}

/// Stored trajectories for one dataset, in manifest order.
#[derive(Debug, Clone, Copy)]
pub struct Portfolio<'a> {
    pub results: &'a [ResultSet],
}

impl<'a> Portfolio<'a> {
    pub fn new(results: &'a [ResultSet]) -> Self {
        Self { results }
    }

    pub fn tracker_ids(&self) -> Vec<String> {
        self.results.iter().map(|r| r.tracker_id.clone()).collect()
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.results.iter().position(|r| r.tracker_id == id)
    }

    pub fn trajectory(&self, tracker: usize, sequence: &str) -> Result<&'a Trajectory, SelectError> {
        self.results[tracker]
            .get(sequence)
            .ok_or_else(|| SelectError::MissingTrajectory {
                tracker: self.results[tracker].tracker_id.clone(),
                sequence: sequence.to_string(),
            })
    }

    fn subset(&self, members: &[usize]) -> Vec<ResultSet> {
        members.iter().map(|&i| self.results[i].clone()).collect()
    }
}

fn oracle_pick(
    seq: &SequenceRecord,
    sub: &[ResultSet],
    order: &[usize],
    metric: MetricKind,
    bounds: (usize, usize),
    whole: bool,
) -> Result<usize, SelectError> {
    let perf = if whole {
        performance_vector(seq, sub, metric)?
    } else {
        interval_performance(seq, sub, metric, bounds.0..bounds.1)?
    };
    let (probs, _) = normalize(&perf.scores);
    Ok(order[onehot(&probs).1])
}

/// Highest-scoring pool member; manifest order breaks ties.
fn pick_from_scores(ids: &[String], scores: &[f64], order: &[usize], portfolio: &Portfolio) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &m in order {
        let id = &portfolio.results[m].tracker_id;
        if let Some(pos) = ids.iter().position(|t| t == id) {
            let s = scores[pos];
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((m, s));
            }
        }
    }
    best.map(|(m, _)| m)
}

/// Model input for the interval starting at `start`: the ground-truth
/// opening window for the first interval, else the last `window` boxes of
/// the plan spliced so far.
pub fn model_features(
    model: &ClassifierModel,
    seq: &SequenceRecord,
    spliced: &[crate::geometry::MaybeBox],
    start: usize,
) -> crate::predictor::FeatureVector {
    if start <= 1 {
        model.featurizer.featurize(seq)
    } else {
        let lo = start.saturating_sub(model.featurizer.window);
        model
            .featurizer
            .featurize_window(&spliced[lo..start], &seq.attributes, seq.frame_size, seq.frame_count)
    }
}

/// The prediction records a model emits while planning `seq` over the full
/// manifest pool.
pub fn model_predictions(
    seq: &SequenceRecord,
    portfolio: &Portfolio,
    model: &ClassifierModel,
    level: Level,
) -> Result<Vec<PredictionRecord>, SelectError> {
    let pool = TrackerPool::all(portfolio.results.len());
    let policy = SelectionPolicy::Predicted(Predictor::Model(Box::new(model.clone())));
    let plan = select(seq, portfolio, &pool, &policy, level)?;
    let spliced = splice(&plan, &seq.gt, portfolio)?;
    plan.intervals
        .iter()
        .map(|iv| {
            let x = model_features(model, seq, &spliced.boxes, iv.start);
            Ok(model.predict(&x, &seq.id, prediction_frame(level, iv.start))?)
        })
        .collect()
}

pub fn select(
    seq: &SequenceRecord,
    portfolio: &Portfolio,
    pool: &TrackerPool,
    policy: &SelectionPolicy,
    level: Level,
) -> Result<SelectionPlan, SelectError> {
    if pool.members.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    if let Level::Frame { k: 0 } = level {
        return Err(SelectError::BadInterval);
    }
    let order = pool.tie_order();
    let m = seq.frame_count;
    let bounds = interval_bounds(m, level);
    let sub = portfolio.subset(&order);
    let mut chosen: Vec<usize> = Vec::with_capacity(bounds.len());
    // boxes of the plan built so far, for predictors that look back
    let mut spliced: Vec<crate::geometry::MaybeBox> = vec![seq.gt.boxes[0]];

    for (i, &(start, end)) in bounds.iter().enumerate() {
        let pick = match policy {
            SelectionPolicy::Oracle(metric) => {
                oracle_pick(seq, &sub, &order, *metric, (start, end), level == Level::Video)?
            }
            SelectionPolicy::Fixed(id) => {
                let idx = portfolio
                    .index(id)
                    .ok_or_else(|| SelectError::UnknownTracker(id.clone()))?;
                if !order.contains(&idx) {
                    return Err(SelectError::NotInPool(id.clone()));
                }
                idx
            }
            SelectionPolicy::Random(seed) => {
                let mut rng = keyed_rng(*seed, &[str_key(&seq.id), i as u64]);
                order[rng.random_range(0..order.len())]
            }
            SelectionPolicy::Predicted(Predictor::Model(model)) => {
                let x = model_features(model, seq, &spliced, start);
                let scores = model.scores(&x)?;
                pick_from_scores(&model.tracker_ids, &scores, &order, portfolio).ok_or(
                    SelectError::PredictionOutsidePool {
                        sequence: seq.id.clone(),
                        frame: start,
                    },
                )?
            }
            SelectionPolicy::Predicted(Predictor::External(ext)) => {
                let frame = prediction_frame(level, start);
                let rec = ext
                    .records
                    .get(&(seq.id.clone(), frame))
                    .ok_or_else(|| SelectError::MissingPrediction {
                        sequence: seq.id.clone(),
                        frame,
                    })?;
                pick_from_scores(&rec.tracker_ids, &rec.scores, &order, portfolio).ok_or(
                    SelectError::PredictionOutsidePool {
                        sequence: seq.id.clone(),
                        frame,
                    },
                )?
            }
        };
        let traj = portfolio.trajectory(pick, &seq.id)?;
        spliced.extend_from_slice(&traj.boxes[start..end]);
        chosen.push(pick);
    }

    let n_e = n_evaluations(m, level);
    debug_assert_eq!(n_e, bounds.len());
    Ok(SelectionPlan {
        sequence_id: seq.id.clone(),
        frames: m,
        level,
        intervals: bounds
            .iter()
            .zip(&chosen)
            .map(|(&(start, end), &t)| Interval {
                start,
                end,
                tracker: portfolio.results[t].tracker_id.clone(),
            })
            .collect(),
        n_e,
        overhead_s: overhead_seconds(n_e),
    })
}

pub fn select_video_level(
    seq: &SequenceRecord,
    portfolio: &Portfolio,
    pool: &TrackerPool,
    policy: &SelectionPolicy,
) -> Result<SelectionPlan, SelectError> {
    select(seq, portfolio, pool, policy, Level::Video)
}

pub fn select_frame_level(
    seq: &SequenceRecord,
    portfolio: &Portfolio,
    pool: &TrackerPool,
    policy: &SelectionPolicy,
    k: usize,
) -> Result<SelectionPlan, SelectError> {
    select(seq, portfolio, pool, policy, Level::Frame { k })
}

/// Assembles the meta-tracker trajectory: the init frame from ground truth,
/// every other frame from the tracker chosen for its interval.
pub fn splice(plan: &SelectionPlan, gt: &Trajectory, portfolio: &Portfolio) -> Result<Trajectory, SelectError> {
    let mut boxes = Vec::with_capacity(plan.frames);
    boxes.push(gt.boxes.first().copied().flatten());
    for iv in &plan.intervals {
        let idx = portfolio
            .index(&iv.tracker)
            .ok_or_else(|| SelectError::UnknownTracker(iv.tracker.clone()))?;
        let traj = portfolio.trajectory(idx, &plan.sequence_id)?;
        if traj.len() < iv.end {
            return Err(MetricError::LengthMismatch {
                pred: traj.len(),
                gt: plan.frames,
            }
            .into());
        }
        boxes.extend_from_slice(&traj.boxes[iv.start..iv.end]);
    }
    Ok(Trajectory::new(boxes))
}

/// Predictions a perfect selector would emit: one-hot scores on the oracle
/// winner of each interval, over the whole manifest.
pub fn oracle_predictions(
    seq: &SequenceRecord,
    portfolio: &Portfolio,
    metric: MetricKind,
    level: Level,
) -> Result<Vec<PredictionRecord>, SelectError> {
    let pool = TrackerPool::all(portfolio.results.len());
    let plan = select(seq, portfolio, &pool, &SelectionPolicy::Oracle(metric), level)?;
    let ids = portfolio.tracker_ids();
    Ok(plan
        .intervals
        .iter()
        .map(|iv| PredictionRecord {
            sequence_id: seq.id.clone(),
            frame_index: prediction_frame(level, iv.start),
            tracker_ids: ids.clone(),
            scores: ids.iter().map(|t| f64::from(u8::from(*t == iv.tracker))).collect(),
            chosen: iv.tracker.clone(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub sequence_id: String,
    pub frames: usize,
    pub trackers: Vec<String>,
    pub report: MetricReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_frames: usize,
    pub tracker_time_s: f64,
    pub overhead_s: f64,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BofnEvaluation {
    pub report: MetricReport,
    /// Sorted by sequence id.
    pub rows: Vec<SequenceRow>,
    pub plans: Vec<SelectionPlan>,
    /// Per-frame scores of the spliced trajectories, in row order.
    pub frame_scores: Vec<Vec<FrameScore>>,
    pub timing: Timing,
}

/// Plans, splices and scores every sequence. `frame_costs` holds one
/// per-frame runtime (seconds) per manifest tracker.
pub fn evaluate_bofn(
    sequences: &[SequenceRecord],
    portfolio: &Portfolio,
    frame_costs: &[f64],
    pool: &TrackerPool,
    policy: &SelectionPolicy,
    level: Level,
) -> Result<BofnEvaluation, SelectError> {
    if sequences.is_empty() {
        return Err(SelectError::NoSequences);
    }
    struct PerSeq {
        plan: SelectionPlan,
        frames: Vec<FrameScore>,
        row: SequenceRow,
        tracker_time: f64,
    }
    let mut per: Vec<PerSeq> = sequences
        .par_iter()
        .map(|seq| {
            let plan = select(seq, portfolio, pool, policy, level)?;
            let spliced = splice(&plan, &seq.gt, portfolio)?;
            let frames = frame_scores(&spliced, &seq.gt)?;
            let report = MetricReport::from_frames(&frames)?;
            let mut tracker_time = 0.0;
            for f in 0..plan.frames {
                let idx = portfolio.index(plan.tracker_at(f)).expect("planned tracker exists");
                tracker_time += frame_costs[idx];
            }
            let mut trackers: Vec<String> = Vec::new();
            for iv in &plan.intervals {
                if trackers.last() != Some(&iv.tracker) {
                    trackers.push(iv.tracker.clone());
                }
            }
            Ok(PerSeq {
                row: SequenceRow {
                    sequence_id: seq.id.clone(),
                    frames: seq.frame_count,
                    trackers,
                    report,
                },
                plan,
                frames,
                tracker_time,
            })
        })
        .collect::<Result<_, SelectError>>()?;
    per.sort_by(|a, b| a.row.sequence_id.cmp(&b.row.sequence_id));

    let all_frames: Vec<Vec<FrameScore>> = per.iter().map(|p| p.frames.clone()).collect();
    let report = MetricReport::aggregate(&all_frames)?;
    let total_frames: usize = per.iter().map(|p| p.plan.frames).sum();
    let tracker_time_s: f64 = per.iter().map(|p| p.tracker_time).sum();
    let overhead_s: f64 = per.iter().map(|p| p.plan.overhead_s).sum();
    let timing = Timing {
        total_frames,
        tracker_time_s,
        overhead_s,
        fps: total_frames as f64 / (tracker_time_s + overhead_s),
    };
    Ok(BofnEvaluation {
        report,
        rows: per.iter().map(|p| p.row.clone()).collect(),
        plans: per.iter().map(|p| p.plan.clone()).collect(),
        frame_scores: all_frames,
        timing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub size: usize,
    pub pool: Vec<String>,
    pub video: f64,
    pub frame: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub metric: MetricKind,
    pub k: usize,
    pub policy: String,
    pub rows: Vec<AblationRow>,
}

/// Nested-pool sizes used by default.
pub const DEFAULT_POOL_SIZES: [usize; 6] = [3, 6, 9, 12, 15, 17];

/// Evaluates `policy` at both levels for each nested pool `rank[..size]`
/// and reports `metric` of the dataset mean.
pub fn ablate_pool_size(
    sequences: &[SequenceRecord],
    portfolio: &Portfolio,
    frame_costs: &[f64],
    rank: &[usize],
    sizes: &[usize],
    policy: &SelectionPolicy,
    metric: MetricKind,
    k: usize,
) -> Result<AblationTable, SelectError> {
    let ids = portfolio.tracker_ids();
    let rows = sizes
        .iter()
        .map(|&size| {
            let pool = TrackerPool::nested(rank, size)?;
            let video = evaluate_bofn(sequences, portfolio, frame_costs, &pool, policy, Level::Video)?;
            let frame = evaluate_bofn(sequences, portfolio, frame_costs, &pool, policy, Level::Frame { k })?;
            Ok(AblationRow {
                size,
                pool: pool.ids(&ids),
                video: metric.of_report(&video.report),
                frame: metric.of_report(&frame.report),
            })
        })
        .collect::<Result<_, SelectError>>()?;
    Ok(AblationTable {
        metric,
        k,
        policy: policy.describe(),
        rows,
    })
}

/// Top-1 accuracy of `model` at every interval start against the interval
/// oracle winner over the full manifest.
pub fn evaluate_top1_frame_level(
    model: &ClassifierModel,
    sequences: &[SequenceRecord],
    portfolio: &Portfolio,
    metric: MetricKind,
    k: usize,
) -> Result<f64, SelectError> {
    let level = Level::Frame { k };
    let pool = TrackerPool::all(portfolio.results.len());
    let policy = SelectionPolicy::Predicted(Predictor::Model(Box::new(model.clone())));
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for seq in sequences {
        let plan = select(seq, portfolio, &pool, &policy, level)?;
        let oracle = select(seq, portfolio, &pool, &SelectionPolicy::Oracle(metric), level)?;
        predicted.extend(plan.intervals.into_iter().map(|iv| iv.tracker));
        truth.extend(oracle.intervals.into_iter().map(|iv| iv.tracker));
    }
    Ok(top1_accuracy(&predicted, &truth)?)
}

// ---------------------------------------------------------------------------
// Plan files
// ---------------------------------------------------------------------------

pub const PLAN_HEADER: &str = "# sequence_id\tlevel\tk\tframes\tn_e\toverhead_s\tintervals";

/// Tab-separated plan file; intervals are `start-end:tracker`, 0-based and
/// half-open, separated by commas.
pub fn format_plans(plans: &[SelectionPlan]) -> String {
    let mut out = String::from(PLAN_HEADER);
    out.push('\n');
    for p in plans {
        let (level, k) = match p.level {
            Level::Video => ("video", "-".to_string()),
            Level::Frame { k } => ("frame", k.to_string()),
        };
        let ivs: Vec<String> = p
            .intervals
            .iter()
            .map(|iv| format!("{}-{}:{}", iv.start, iv.end, iv.tracker))
            .collect();
        writeln!(
            out,
            "{}\t{level}\t{k}\t{}\t{}\t{}\t{}",
            p.sequence_id,
            p.frames,
            p.n_e,
            p.overhead_s,
            ivs.join(",")
        )
        .expect("write to string");
    }
    out
}

pub fn parse_plans(text: &str) -> Result<Vec<SelectionPlan>, SelectError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let err = |message: &str| SelectError::PlanFormat {
            line,
            message: message.to_string(),
        };
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 7 {
            return Err(err("expected 7 tab-separated columns"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad integer"));
        let level = match (cols[1], cols[2]) {
            ("video", "-") => Level::Video,
            ("frame", k) => Level::Frame { k: num(k)? },
            _ => return Err(err("bad level")),
        };
        let frames = num(cols[3])?;
        let n_e = num(cols[4])?;
        let overhead_s: f64 = cols[5].parse().map_err(|_| err("bad overhead"))?;
        let intervals = cols[6]
            .split(',')
            .map(|s| {
                let (range, tracker) = s.split_once(':').ok_or_else(|| err("bad interval"))?;
                let (a, b) = range.split_once('-').ok_or_else(|| err("bad interval"))?;
                Ok(Interval {
                    start: num(a)?,
                    end: num(b)?,
                    tracker: tracker.to_string(),
                })
            })
            .collect::<Result<Vec<_>, SelectError>>()?;
        let tiles = intervals.first().is_some_and(|iv| iv.start == 1)
            && intervals.last().is_some_and(|iv| iv.end == frames)
            && intervals.windows(2).all(|w| w[0].end == w[1].start)
            && intervals.iter().all(|iv| iv.start < iv.end);
        if !tiles {
            return Err(err("intervals do not tile frames 1..frames"));
        }
        if n_e != intervals.len() {
            return Err(err("n_e does not match the interval count"));
        }
        out.push(SelectionPlan {
            sequence_id: cols[0].to_string(),
            frames,
            level,
            intervals,
            n_e,
            overhead_s,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn gt(m: usize) -> Trajectory {
        (0..m)
            .map(|i| Some(BBox::new(i as f64, 0., 10., 10.).unwrap()))
            .collect()
    }

    fn seq(id: &str, m: usize) -> SequenceRecord {
        SequenceRecord::new(id, gt(m))
    }

    fn set(id: &str, entries: Vec<(&str, Trajectory)>) -> ResultSet {
        ResultSet {
            tracker_id: id.into(),
            entries: entries.into_iter().map(|(s, t)| (s.to_string(), t)).collect(),
        }
    }

    /// `a` is perfect on even intervals (k=5), `b` on odd ones.
    fn alternating(m: usize) -> (SequenceRecord, Vec<ResultSet>) {
        let s = seq("alt", m);
        let pick = |even: bool| -> Trajectory {
            (0..m)
                .map(|f| {
                    let iv = if f == 0 { 0 } else { (f - 1) / 5 };
                    if (iv % 2 == 0) == even {
                        s.gt.boxes[f]
                    } else {
                        None
                    }
                })
                .collect()
        };
        let sets = vec![
            set("a", vec![("alt", pick(true))]),
            set("b", vec![("alt", pick(false))]),
        ];
        (s, sets)
    }

    #[test]
    fn overhead_closed_forms() {
        assert_eq!(n_evaluations(101, Level::Frame { k: 5 }), 20);
        assert_eq!(n_evaluations(101, Level::Video), 1);
        assert_eq!(n_evaluations(2, Level::Frame { k: 5 }), 1);
        assert_eq!(overhead_seconds(1), 0.84);
        assert_eq!(
            interval_bounds(12, Level::Frame { k: 5 }),
            vec![(1, 6), (6, 11), (11, 12)]
        );
    }

    #[test]
    fn video_level_examples() {
        let s = seq("s", 10);
        let sets = vec![set("only", vec![("s", gt(10))])];
        let p = Portfolio::new(&sets);
        let plan = select_video_level(
            &s,
            &p,
            &TrackerPool::all(1),
            &SelectionPolicy::Oracle(MetricKind::SuccessAuc),
        )
        .unwrap();
        assert_eq!(plan.intervals.len(), 1);
        assert_eq!(plan.intervals[0].tracker, "only");
        assert_eq!((plan.n_e, plan.overhead_s), (1, 0.84));
        assert!(matches!(
            select_video_level(&s, &p, &TrackerPool { members: vec![] }, &SelectionPolicy::Random(1)),
            Err(SelectError::EmptyPool)
        ));
    }

    #[test]
    fn oracle_tie_break_uses_manifest_order() {
        let s = seq("s", 10);
        let shifted: Trajectory = gt(10).boxes.iter().map(|b| b.map(|b| b.translated(3.0, 0.0))).collect();
        let sets = vec![
            set("weak", vec![("s", shifted)]),
            set("x", vec![("s", gt(10))]),
            set("y", vec![("s", gt(10))]),
        ];
        let p = Portfolio::new(&sets);
        let pool = TrackerPool { members: vec![2, 1, 0] };
        let plan = select_video_level(&s, &p, &pool, &SelectionPolicy::Oracle(MetricKind::AverageOverlap)).unwrap();
        assert_eq!(plan.intervals[0].tracker, "x");
    }

    #[test]
    fn random_is_reproducible() {
        let (s, sets) = alternating(31);
        let p = Portfolio::new(&sets);
        let pool = TrackerPool::all(2);
        let a = select_frame_level(&s, &p, &pool, &SelectionPolicy::Random(9), 5).unwrap();
        let b = select_frame_level(&s, &p, &pool, &SelectionPolicy::Random(9), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frame_level_alternation_reaches_perfect_ao() {
        let (s, sets) = alternating(31);
        let p = Portfolio::new(&sets);
        let pool = TrackerPool::all(2);
        let plan = select_frame_level(&s, &p, &pool, &SelectionPolicy::Oracle(MetricKind::AverageOverlap), 5).unwrap();
        let picks: Vec<&str> = plan.intervals.iter().map(|iv| iv.tracker.as_str()).collect();
        assert_eq!(picks, ["a", "b", "a", "b", "a", "b"]);
        let spliced = splice(&plan, &s.gt, &p).unwrap();
        assert_eq!(spliced, s.gt);
        assert_eq!(crate::metrics::average_overlap(&spliced, &s.gt).unwrap(), 1.0);

        let video = select_video_level(&s, &p, &pool, &SelectionPolicy::Oracle(MetricKind::AverageOverlap)).unwrap();
        let long = select_frame_level(&s, &p, &pool, &SelectionPolicy::Oracle(MetricKind::AverageOverlap), 40).unwrap();
        assert_eq!(long.intervals, video.intervals);
        assert!(matches!(
            select_frame_level(&s, &p, &pool, &SelectionPolicy::Random(1), 0),
            Err(SelectError::BadInterval)
        ));
    }

    #[test]
    fn splice_single_tracker_is_that_trajectory() {
        let (s, sets) = alternating(12);
        let p = Portfolio::new(&sets);
        let plan = select_frame_level(&s, &p, &TrackerPool::all(2), &SelectionPolicy::Fixed("b".into()), 5).unwrap();
        let spliced = splice(&plan, &s.gt, &p).unwrap();
        assert_eq!(spliced.len(), 12);
        assert_eq!(spliced.boxes[1..], sets[1].entries["alt"].boxes[1..]);
        assert_eq!(spliced.boxes[0], s.gt.boxes[0]);
    }

    #[test]
    fn fixed_reproduces_tracker_metrics() {
        let (s, sets) = alternating(21);
        let p = Portfolio::new(&sets);
        let eval = evaluate_bofn(
            std::slice::from_ref(&s),
            &p,
            &[0.01, 0.02],
            &TrackerPool::all(2),
            &SelectionPolicy::Fixed("a".into()),
            Level::Video,
        )
        .unwrap();
        let direct = MetricReport::compute(&sets[0].entries["alt"], &s.gt).unwrap();
        assert_eq!(eval.report, direct);
        assert_eq!(eval.timing.total_frames, 21);
        assert!((eval.timing.tracker_time_s - 0.21).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_reproduce_oracle() {
        let (s, sets) = alternating(33);
        let p = Portfolio::new(&sets);
        let pool = TrackerPool::all(2);
        for level in [Level::Video, Level::Frame { k: 5 }] {
            let recs = oracle_predictions(&s, &p, MetricKind::SuccessAuc, level).unwrap();
            let policy = SelectionPolicy::Predicted(Predictor::External(ExternalPredictions::new(recs)));
            let a = select(&s, &p, &pool, &policy, level).unwrap();
            let b = select(&s, &p, &pool, &SelectionPolicy::Oracle(MetricKind::SuccessAuc), level).unwrap();
            assert_eq!(a, b);
        }
        let policy = SelectionPolicy::Predicted(Predictor::External(ExternalPredictions::default()));
        assert!(matches!(
            select(&s, &p, &pool, &policy, Level::Video),
            Err(SelectError::MissingPrediction { frame: 0, .. })
        ));
    }

    #[test]
    fn plan_file_round_trip() {
        let (s, sets) = alternating(33);
        let p = Portfolio::new(&sets);
        let pool = TrackerPool::all(2);
        let plans = vec![
            select(
                &s,
                &p,
                &pool,
                &SelectionPolicy::Oracle(MetricKind::SuccessAuc),
                Level::Frame { k: 5 },
            )
            .unwrap(),
            select(&s, &p, &pool, &SelectionPolicy::Random(3), Level::Video).unwrap(),
        ];
        let text = format_plans(&plans);
        let back = parse_plans(&text).unwrap();
        assert_eq!(back, plans);
        assert_eq!(format_plans(&back), text);
        let broken = text.replace("1-6:", "2-6:");
        assert!(matches!(parse_plans(&broken), Err(SelectError::PlanFormat { .. })));
    }

    #[test]
    fn nested_pools() {
        let rank = [4, 2, 0, 1, 3];
        let small = TrackerPool::nested(&rank, 2).unwrap();
        let big = TrackerPool::nested(&rank, 4).unwrap();
        assert!(small.members.iter().all(|m| big.members.contains(m)));
        assert_eq!(small.tie_order(), vec![2, 4]);
        assert!(matches!(
            TrackerPool::nested(&rank, 6),
            Err(SelectError::PoolTooLarge { .. })
        ));
    }
}
