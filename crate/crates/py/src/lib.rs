//! Python bindings. Boxes cross the boundary as `(x, y, w, h)` tuples and
//! trajectories as lists of boxes or `None`.

use std::path::PathBuf;

use bofn_core::dataset::{self as ds, DatasetError, SequenceRecord, Split};
use bofn_core::geometry::{self, BBox};
use bofn_core::labelgen::{self, build_label_set, format_labels, BofnLabel};
use bofn_core::metrics::{self, MetricKind, MetricReport, Trajectory};
use bofn_core::predictor;
use bofn_core::select::{self, Level, Portfolio, SelectionPolicy, TrackerPool};
use bofn_core::synth;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type PyBox = (f64, f64, f64, f64);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dataset_err(e: DatasetError) -> PyErr {
    match e {
        DatasetError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn to_box(b: PyBox) -> PyResult<BBox> {
    BBox::new(b.0, b.1, b.2, b.3).map_err(value_err)
}

fn to_traj(v: Vec<Option<PyBox>>) -> PyResult<Trajectory> {
    v.into_iter()
        .map(|b| b.map(to_box).transpose())
        .collect::<PyResult<Vec<_>>>()
        .map(Trajectory::new)
}

fn from_traj(t: &Trajectory) -> Vec<Option<PyBox>> {
    t.boxes.iter().map(|b| b.map(|b| (b.x, b.y, b.w, b.h))).collect()
}

fn metric(name: &str) -> PyResult<MetricKind> {
    name.parse().map_err(value_err)
}

fn level(name: &str, k: usize) -> PyResult<Level> {
    match name {
        "video" => Ok(Level::Video),
        "frame" if k > 0 => Ok(Level::Frame { k }),
        "frame" => Err(value_err("k must be at least 1")),
        other => Err(value_err(format!("unknown level '{other}'"))),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &MetricReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("auc", r.auc)?;
    d.set_item("precision", r.precision)?;
    d.set_item("norm_precision", r.norm_precision)?;
    d.set_item("ao", r.ao)?;
    d.set_item("sr50", r.sr50)?;
    d.set_item("sr75", r.sr75)?;
    d.set_item("eao_simplified", r.eao)?;
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("robustness", r.robustness)?;
    d.set_item("frames_evaluated", r.frames_evaluated)?;
    Ok(d)
}

/// Intersection over union of two `(x, y, w, h)` boxes.
#[pyfunction]
fn iou(a: PyBox, b: PyBox) -> PyResult<f64> {
    Ok(geometry::iou(&to_box(a)?, &to_box(b)?))
}

#[pyfunction]
fn center_error(a: PyBox, b: PyBox) -> PyResult<f64> {
    Ok(geometry::center_error(&to_box(a)?, &to_box(b)?))
}

#[pyfunction]
fn success_auc(pred: Vec<Option<PyBox>>, gt: Vec<Option<PyBox>>) -> PyResult<f64> {
    metrics::success_auc(&to_traj(pred)?, &to_traj(gt)?).map_err(value_err)
}

#[pyfunction]
fn average_overlap(pred: Vec<Option<PyBox>>, gt: Vec<Option<PyBox>>) -> PyResult<f64> {
    metrics::average_overlap(&to_traj(pred)?, &to_traj(gt)?).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, tau=0.5))]
fn success_rate(pred: Vec<Option<PyBox>>, gt: Vec<Option<PyBox>>, tau: f64) -> PyResult<f64> {
    metrics::success_rate(&to_traj(pred)?, &to_traj(gt)?, tau).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, tau_px=20.0))]
fn precision(pred: Vec<Option<PyBox>>, gt: Vec<Option<PyBox>>, tau_px: f64) -> PyResult<f64> {
    metrics::precision_at(&to_traj(pred)?, &to_traj(gt)?, tau_px).map_err(value_err)
}

#[pyfunction]
fn norm_precision(pred: Vec<Option<PyBox>>, gt: Vec<Option<PyBox>>) -> PyResult<f64> {
    metrics::norm_precision(&to_traj(pred)?, &to_traj(gt)?).map_err(value_err)
}

/// Every measure for one trajectory as a dict.
#[pyfunction]
fn metric_report<'py>(
    py: Python<'py>,
    pred: Vec<Option<PyBox>>,
    gt: Vec<Option<PyBox>>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = MetricReport::compute(&to_traj(pred)?, &to_traj(gt)?).map_err(value_err)?;
    report_dict(py, &r)
}

/// `(unit vector, degenerate flag)`.
#[pyfunction]
fn normalize(scores: Vec<f64>) -> (Vec<f64>, bool) {
    labelgen::normalize(&scores)
}

/// `(one-hot list, winner index)`.
#[pyfunction]
fn onehot(probs: Vec<f64>) -> PyResult<(Vec<u32>, usize)> {
    if probs.is_empty() {
        return Err(value_err("empty score vector"));
    }
    let (hot, winner) = labelgen::onehot(&probs);
    Ok((hot.into_iter().map(u32::from).collect(), winner))
}

#[pyfunction]
fn parse_trajectory(text: &str) -> PyResult<Vec<Option<PyBox>>> {
    ds::parse_trajectory(text).map(|t| from_traj(&t)).map_err(value_err)
}

#[pyfunction]
fn format_trajectory(boxes: Vec<Option<PyBox>>) -> PyResult<String> {
    Ok(ds::format_trajectory(&to_traj(boxes)?))
}

/// Selector evaluations for an `m`-frame sequence; `k=None` means video level.
#[pyfunction]
#[pyo3(signature = (m, k=None))]
fn n_evaluations(m: usize, k: Option<usize>) -> PyResult<usize> {
    let level = match k {
        None => Level::Video,
        Some(k) => level("frame", k)?,
    };
    Ok(select::n_evaluations(m, level))
}

#[pyfunction]
fn overhead_seconds(n_e: usize) -> f64 {
    select::overhead_seconds(n_e)
}

/// Validates an interchange file and returns its records as dicts.
#[pyfunction]
fn load_external_predictions<'py>(
    py: Python<'py>,
    path: PathBuf,
    trackers: Vec<String>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let records = predictor::load_external_predictions(&path, &trackers).map_err(value_err)?;
    records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("sequence_id", &r.sequence_id)?;
            d.set_item("frame_index", r.frame_index)?;
            d.set_item("trackers", &r.tracker_ids)?;
            d.set_item("scores", &r.scores)?;
            d.set_item("chosen", &r.chosen)?;
            Ok(d)
        })
        .collect()
}

/// Writes a synthetic dataset with results under `out` and returns the
/// manifest path.
#[pyfunction]
#[pyo3(signature = (out, scenario="separable", attributes=4, sequences=40, trackers=6, seed=0))]
fn generate_synthetic(
    out: PathBuf,
    scenario: &str,
    attributes: usize,
    sequences: usize,
    trackers: usize,
    seed: u64,
) -> PyResult<PathBuf> {
    let sc = match scenario {
        "separable" if (1..=6).contains(&attributes) => synth::separable_scenario_with(attributes),
        "separable" => return Err(value_err("attributes must be between 1 and 6")),
        "random" => synth::random_scenario(sequences, trackers, seed),
        other => return Err(value_err(format!("unknown scenario '{other}'"))),
    };
    let (manifest, seqs) = synth::generate_dataset(&sc, &out).map_err(value_err)?;
    let results = manifest.results_dir().expect("synthetic manifest has results");
    synth::generate_results(&sc, &seqs, &results).map_err(value_err)?;
    Ok(out.join("manifest.txt"))
}

/// A loaded manifest with its sequences and tracker results.
#[pyclass(module = "bofn")]
struct Dataset {
    inner: ds::Dataset,
    results: Vec<ds::ResultSet>,
}

impl Dataset {
    fn sequences(&self, split: &str) -> PyResult<Vec<SequenceRecord>> {
        let keep = |s: &&SequenceRecord| match split {
            "all" => true,
            "train" => s.split == Split::Train,
            _ => s.split == Split::Test,
        };
        if !matches!(split, "all" | "train" | "test") {
            return Err(value_err(format!("unknown split '{split}'")));
        }
        Ok(self.inner.sequences.iter().filter(keep).cloned().collect())
    }

    fn labels(&self, metric_name: &str, split: &str) -> PyResult<Vec<BofnLabel>> {
        let seqs = self.sequences(split)?;
        build_label_set(&seqs, &self.results, metric(metric_name)?).map_err(value_err)
    }
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (manifest, results=None))]
    fn new(manifest: PathBuf, results: Option<PathBuf>) -> PyResult<Self> {
        let inner = ds::Dataset::load(&manifest).map_err(dataset_err)?;
        let root = results
            .or_else(|| inner.manifest.results_dir())
            .ok_or_else(|| value_err("manifest has no results entry; pass results="))?;
        let results = inner.load_results(&root).map_err(dataset_err)?;
        Ok(Self { inner, results })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.manifest.name.clone()
    }

    #[getter]
    fn tracker_ids(&self) -> Vec<String> {
        self.inner.manifest.tracker_ids()
    }

    #[getter]
    fn attributes(&self) -> Vec<String> {
        self.inner.manifest.attributes.clone()
    }

    #[pyo3(signature = (split="all"))]
    fn sequence_ids(&self, split: &str) -> PyResult<Vec<String>> {
        Ok(self.sequences(split)?.into_iter().map(|s| s.id).collect())
    }

    fn ground_truth(&self, sequence_id: &str) -> PyResult<Vec<Option<PyBox>>> {
        self.inner
            .sequences
            .iter()
            .find(|s| s.id == sequence_id)
            .map(|s| from_traj(&s.gt))
            .ok_or_else(|| value_err(format!("unknown sequence '{sequence_id}'")))
    }

    /// Labels as dicts with `video_id`, `scores`, `probs`, `onehot`, `winner`, `degenerate`.
    #[pyo3(signature = (metric="auc", split="all"))]
    fn build_labels<'py>(&self, py: Python<'py>, metric: &str, split: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.labels(metric, split)?
            .iter()
            .map(|l| {
                let d = PyDict::new(py);
                d.set_item("video_id", &l.video_id)?;
                d.set_item("scores", &l.scores)?;
                d.set_item("probs", &l.probs)?;
                d.set_item("onehot", l.onehot.iter().map(|&v| u32::from(v)).collect::<Vec<_>>())?;
                d.set_item("winner", l.winner_id())?;
                d.set_item("degenerate", l.degenerate)?;
                Ok(d)
            })
            .collect()
    }

    /// Label file contents (JSON lines).
    #[pyo3(signature = (metric="auc", split="all"))]
    fn labels_jsonl(&self, metric: &str, split: &str) -> PyResult<String> {
        Ok(format_labels(&self.labels(metric, split)?))
    }

    /// Evaluates a selection policy; returns the dataset report plus timing
    /// and the chosen tracker per interval.
    #[pyo3(signature = (policy="oracle", level="video", k=5, pool="all", split="all"))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        policy: &str,
        level: &str,
        k: usize,
        pool: &str,
        split: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.inner.manifest;
        let ids = m.tracker_ids();
        let policy = SelectionPolicy::parse(policy, &ids).map_err(value_err)?;
        let pool = TrackerPool::parse(pool, &ids, &m.rank_indices()).map_err(value_err)?;
        let lv = self::level(level, k)?;
        let seqs = self.sequences(split)?;
        let e = select::evaluate_bofn(
            &seqs,
            &Portfolio::new(&self.results),
            &m.frame_costs(),
            &pool,
            &policy,
            lv,
        )
        .map_err(value_err)?;
        let d = report_dict(py, &e.report)?;
        d.set_item("fps", e.timing.fps)?;
        d.set_item("tracker_time_s", e.timing.tracker_time_s)?;
        d.set_item("overhead_s", e.timing.overhead_s)?;
        d.set_item("total_frames", e.timing.total_frames)?;
        let plans = PyDict::new(py);
        for p in &e.plans {
            let picks: Vec<(usize, usize, String)> = p
                .intervals
                .iter()
                .map(|iv| (iv.start, iv.end, iv.tracker.clone()))
                .collect();
            plans.set_item(&p.sequence_id, picks)?;
        }
        d.set_item("plans", plans)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, sequences={}, trackers={})",
            self.inner.manifest.name,
            self.inner.sequences.len(),
            self.results.len()
        )
    }
}

#[pymodule]
#[pyo3(name = "bofn")]
pub fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(center_error, m)?)?;
    m.add_function(wrap_pyfunction!(success_auc, m)?)?;
    m.add_function(wrap_pyfunction!(average_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(success_rate, m)?)?;
    m.add_function(wrap_pyfunction!(precision, m)?)?;
    m.add_function(wrap_pyfunction!(norm_precision, m)?)?;
    m.add_function(wrap_pyfunction!(metric_report, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(onehot, m)?)?;
    m.add_function(wrap_pyfunction!(parse_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(format_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(n_evaluations, m)?)?;
    m.add_function(wrap_pyfunction!(overhead_seconds, m)?)?;
    m.add_function(wrap_pyfunction!(load_external_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_class::<Dataset>()?;
    m.add("OVERHEAD_PER_EVAL_S", select::OVERHEAD_PER_EVAL_S)?;
    Ok(())
}
