//! Report bundles: summary tables, per-sequence rows, curve data and the
//! attribute/winner histogram, written byte-deterministically.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{write_text, DatasetError, SequenceRecord};
use crate::labelgen::BofnLabel;
use crate::metrics::{precision_curve, success_curve, FrameScore, MetricKind, MetricReport};
use crate::select::{AblationTable, BofnEvaluation};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] DatasetError),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Hex SHA-256 of a manifest's text.
pub fn manifest_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset: String,
    pub manifest_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub pool: Vec<String>,
    pub policy: String,
    pub level: String,
    pub k: Option<usize>,
    pub metric: MetricKind,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub auc: f64,
    pub precision: f64,
    pub norm_precision: f64,
    pub ao: f64,
    pub sr50: f64,
    pub sr75: f64,
    /// Simplified expected average overlap (no re-initialization protocol).
    pub eao_simplified: f64,
    pub accuracy: f64,
    pub robustness: f64,
    pub frames: usize,
    pub n_e: usize,
    pub overhead_s: f64,
    /// `None` when no runtime was accounted.
    pub fps: Option<f64>,
}

impl SummaryRow {
    fn from_report(label: &str, r: &MetricReport) -> Self {
        Self {
            label: label.to_string(),
            auc: r.auc,
            precision: r.precision,
            norm_precision: r.norm_precision,
            ao: r.ao,
            sr50: r.sr50,
            sr75: r.sr75,
            eao_simplified: r.eao,
            accuracy: r.accuracy,
            robustness: r.robustness,
            frames: 0,
            n_e: 0,
            overhead_s: 0.0,
            fps: None,
        }
    }

    pub fn from_evaluation(label: &str, eval: &BofnEvaluation) -> Self {
        let t = eval.timing;
        Self {
            frames: t.total_frames,
            n_e: eval.plans.iter().map(|p| p.n_e).sum(),
            overhead_s: t.overhead_s,
            fps: t.fps.is_finite().then_some(t.fps),
            ..Self::from_report(label, &eval.report)
        }
    }

    /// Row for a single tracker run on its own: no selection overhead.
    pub fn baseline(label: &str, report: &MetricReport, frames: usize, frame_cost_s: f64) -> Self {
        Self {
            frames,
            fps: (frame_cost_s > 0.0).then(|| 1.0 / frame_cost_s),
            ..Self::from_report(label, report)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub label: String,
    pub sequence_id: String,
    pub frames: usize,
    /// Trackers used, in order of first use.
    pub trackers: Vec<String>,
    pub auc: f64,
    pub ao: f64,
    pub sr50: f64,
    pub sr75: f64,
    pub precision: f64,
    pub norm_precision: f64,
}

pub fn sequence_rows(label: &str, eval: &BofnEvaluation) -> Vec<SequenceSummary> {
    eval.rows
        .iter()
        .map(|r| SequenceSummary {
            label: label.to_string(),
            sequence_id: r.sequence_id.clone(),
            frames: r.frames,
            trackers: r.trackers.clone(),
            auc: r.report.auc,
            ao: r.report.ao,
            sr50: r.report.sr50,
            sr75: r.report.sr75,
            precision: r.report.precision,
            norm_precision: r.report.norm_precision,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub label: String,
    /// `(overlap threshold, success rate)` pairs.
    pub success: Vec<(f64, f64)>,
    /// `(pixel threshold, precision)` pairs.
    pub precision: Vec<(f64, f64)>,
}

impl CurveSet {
    /// Curves pooled over every scored frame.
    pub fn from_frames(label: &str, frames: &[Vec<FrameScore>]) -> Self {
        let all = frames.iter().flatten();
        let ious: Vec<f64> = all.clone().map(|f| f.iou).collect();
        let errs: Vec<f64> = all.map(|f| f.center_error).collect();
        Self {
            label: label.to_string(),
            success: success_curve(&ious),
            precision: precision_curve(&errs),
        }
    }
}

pub type AttributeHistogram = BTreeMap<String, BTreeMap<String, usize>>;

/// Per attribute, how often each tracker is the label winner. Every
/// (attribute, tracker) cell is present, zeros included.
pub fn attribute_histogram(
    labels: &[BofnLabel],
    sequences: &[SequenceRecord],
    vocabulary: &[String],
) -> AttributeHistogram {
    let by_id: BTreeMap<&str, &SequenceRecord> = sequences.iter().map(|s| (s.id.as_str(), s)).collect();
    let trackers: BTreeSet<&str> = labels
        .iter()
        .flat_map(|l| l.trackers.iter().map(String::as_str))
        .collect();
    let mut hist: AttributeHistogram = vocabulary
        .iter()
        .map(|a| (a.clone(), trackers.iter().map(|t| (t.to_string(), 0)).collect()))
        .collect();
    for label in labels {
        let Some(seq) = by_id.get(label.video_id.as_str()) else {
            continue;
        };
        for attr in &seq.attributes {
            *hist
                .entry(attr.clone())
                .or_default()
                .entry(label.winner_id().to_string())
                .or_default() += 1;
        }
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub meta: ReportMeta,
    pub summary: Vec<SummaryRow>,
    pub sequences: Vec<SequenceSummary>,
    pub attribute_histogram: AttributeHistogram,
    pub curves: Vec<CurveSet>,
    pub ablation: Option<AblationTable>,
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

impl ReportBundle {
    pub fn new(meta: ReportMeta) -> Self {
        Self {
            meta,
            summary: Vec::new(),
            sequences: Vec::new(),
            attribute_histogram: BTreeMap::new(),
            curves: Vec::new(),
            ablation: None,
        }
    }

    /// Adds summary, per-sequence rows and curves for one evaluation.
    pub fn add_evaluation(&mut self, label: &str, eval: &BofnEvaluation) {
        self.summary.push(SummaryRow::from_evaluation(label, eval));
        self.sequences.extend(sequence_rows(label, eval));
        self.curves.push(CurveSet::from_frames(label, &eval.frame_scores));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "label,auc,precision,norm_precision,ao,sr50,sr75,eao_simplified,accuracy,robustness,frames,n_e,overhead_s,fps\n",
        );
        for r in &self.summary {
            let fps = r.fps.map(f).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.label,
                f(r.auc),
                f(r.precision),
                f(r.norm_precision),
                f(r.ao),
                f(r.sr50),
                f(r.sr75),
                f(r.eao_simplified),
                f(r.accuracy),
                f(r.robustness),
                r.frames,
                r.n_e,
                f(r.overhead_s),
                fps
            );
        }
        out
    }

    pub fn sequences_csv(&self) -> String {
        let mut out = String::from("label,sequence_id,frames,trackers,auc,ao,sr50,sr75,precision,norm_precision\n");
        for r in &self.sequences {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.label,
                r.sequence_id,
                r.frames,
                r.trackers.join("+"),
                f(r.auc),
                f(r.ao),
                f(r.sr50),
                f(r.sr75),
                f(r.precision),
                f(r.norm_precision)
            );
        }
        out
    }

    /// Long-format curve data: `label,threshold,value`.
    pub fn curve_csv(&self, success: bool) -> String {
        let mut out = String::from("label,threshold,value\n");
        for c in &self.curves {
            let pts = if success { &c.success } else { &c.precision };
            for (t, v) in pts {
                let _ = writeln!(out, "{},{},{}", c.label, f(*t), f(*v));
            }
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("attribute,tracker,count\n");
        for (attr, row) in &self.attribute_histogram {
            for (tracker, n) in row {
                let _ = writeln!(out, "{attr},{tracker},{n}");
            }
        }
        out
    }

    pub fn ablation_csv(&self) -> Option<String> {
        let table = self.ablation.as_ref()?;
        let mut out = format!("size,pool,video_{m},frame_k{k}_{m}\n", m = table.metric, k = table.k);
        for r in &table.rows {
            let _ = writeln!(out, "{},{},{},{}", r.size, r.pool.join("+"), f(r.video), f(r.frame));
        }
        Some(out)
    }

    /// Writes every artifact under `dir` and returns the paths written.
    pub fn emit(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        let mut files = vec![
            ("report.json", self.to_json()),
            ("summary.csv", self.summary_csv()),
            ("sequences.csv", self.sequences_csv()),
            ("success_curve.csv", self.curve_csv(true)),
            ("precision_curve.csv", self.curve_csv(false)),
            ("attribute_histogram.csv", self.histogram_csv()),
        ];
        if let Some(a) = self.ablation_csv() {
            files.push(("ablation.csv", a));
        }
        files
            .into_iter()
            .map(|(name, text)| {
                let p = dir.join(name);
                write_text(&p, &text)?;
                Ok(p)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelgen::build_label_set;
    use crate::select::{evaluate_bofn, Level, Portfolio, SelectionPolicy, TrackerPool};
    use crate::synth::separable_scenario_with;

    fn bundle() -> ReportBundle {
        let sc = separable_scenario_with(2);
        let seqs = sc.sequences().unwrap();
        let sets = sc.results(&seqs);
        let portfolio = Portfolio::new(&sets);
        let metric = MetricKind::SuccessAuc;
        let eval = evaluate_bofn(
            &seqs,
            &portfolio,
            &[0.02, 0.02],
            &TrackerPool::all(2),
            &SelectionPolicy::Oracle(metric),
            Level::Video,
        )
        .unwrap();
        let labels = build_label_set(&seqs, &sets, metric).unwrap();
        let mut b = ReportBundle::new(ReportMeta {
            dataset: "separable".into(),
            manifest_sha256: manifest_digest("x"),
            seeds: BTreeMap::from([("scenario".into(), sc.spec.seed)]),
            pool: portfolio.tracker_ids(),
            policy: "oracle:auc".into(),
            level: "video".into(),
            k: None,
            metric,
            split: "all".into(),
        });
        b.add_evaluation("oracle-video", &eval);
        b.attribute_histogram = attribute_histogram(&labels, &seqs, &sc.spec.attributes);
        b
    }

    #[test]
    fn json_round_trip_and_deterministic_emit() {
        let b = bundle();
        assert_eq!(ReportBundle::from_json(&b.to_json()).unwrap(), b);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = b.emit(d1.path()).unwrap();
        let p2 = bundle().emit(d2.path()).unwrap();
        for (a, c) in p1.iter().zip(&p2) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(c).unwrap());
        }
        assert!(b.summary_csv().contains("eao_simplified"));
    }

    #[test]
    fn histogram_counts_winners_per_attribute() {
        let b = bundle();
        let h = &b.attribute_histogram;
        assert_eq!(h.len(), 2);
        let total: usize = h.values().flat_map(|r| r.values()).sum();
        assert_eq!(total, b.sequences.len());
        let first = &h["illumination-variation"];
        assert!(first["T01"] > first["T02"]);
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            manifest_digest("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
