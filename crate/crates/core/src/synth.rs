//! Deterministic synthetic benchmarks: random-walk ground truth, attribute
//! tags, and trackers whose per-frame overlap follows an attribute-dependent
//! skill profile.
//!
//! Every random draw comes from a stream keyed by `(seed, ..., sequence,
//! frame)`, so generation order and parallelism never change the output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    write_results, write_sequences, write_text, DatasetError, Manifest, ResultSet, SequenceRecord, Split, TrackerEntry,
};
use crate::geometry::{BBox, MaybeBox};
use crate::metrics::Trajectory;
use crate::rng::keyed_rng;

const GT_STREAM: u64 = 0x6774;
const SPLIT_STREAM: u64 = 0x7370;
const TRACKER_STREAM: u64 = 0x7472;
const PROFILE_STREAM: u64 = 0x7066;
const MIN_SIDE: f64 = 4.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("scenario file: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    /// Target per-frame overlap with ground truth.
    pub mean_iou: f64,
    /// Standard deviation of the per-frame overlap around `mean_iou`.
    pub jitter: f64,
    /// Per-frame probability of an absent box.
    pub failure: f64,
}

impl Skill {
    pub fn new(mean_iou: f64, jitter: f64, failure: f64) -> Self {
        Self {
            mean_iou,
            jitter,
            failure,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let ok = (0.0..=1.0).contains(&self.mean_iou)
            && (0.0..=1.0).contains(&self.failure)
            && self.jitter >= 0.0
            && self.jitter.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(format!("bad skill {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillProfile {
    pub tracker_id: String,
    pub base: Skill,
    /// Overrides keyed by attribute tag.
    pub per_attribute: BTreeMap<String, Skill>,
    pub frame_cost_s: Option<f64>,
}

impl SkillProfile {
    /// Skill on a sequence: the override for the sequence's first tagged
    /// attribute (vocabulary order) if any, else the base skill.
    pub fn skill_for(&self, attributes: &BTreeSet<String>, vocabulary: &[String]) -> Skill {
        vocabulary
            .iter()
            .find(|a| attributes.contains(*a))
            .and_then(|a| self.per_attribute.get(a))
            .copied()
            .unwrap_or(self.base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum AttributeRule {
    /// Sequence `i` gets exactly attribute `i mod |vocabulary|`.
    RoundRobin,
    /// Between 1 and `max` distinct random attributes.
    Random { max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub attributes: Vec<String>,
    pub rule: AttributeRule,
    pub image: (f64, f64),
    /// Initial box side range as a fraction of the image width.
    pub box_fraction: (f64, f64),
    /// Per-frame center step, relative to the box size.
    pub step: f64,
    /// Per-frame log-scale drift standard deviation.
    pub scale_drift: f64,
    pub test_fraction: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            seed: 0,
            sequences: 40,
            min_len: 30,
            max_len: 120,
            attributes: [
                "illumination-variation",
                "fast-motion",
                "occlusion",
                "scale-variation",
                "view-change",
            ]
            .map(String::from)
            .to_vec(),
            rule: AttributeRule::Random { max: 2 },
            image: (640.0, 480.0),
            box_fraction: (0.08, 0.3),
            step: 0.05,
            scale_drift: 0.02,
            test_fraction: 0.5,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.sequences == 0 {
            return bad("sequence count must be positive");
        }
        if self.min_len < 2 || self.min_len > self.max_len {
            return bad("length range must satisfy 2 <= min_len <= max_len");
        }
        if !(self.image.0 > 2.0 * MIN_SIDE && self.image.1 > 2.0 * MIN_SIDE) {
            return bad("image extent too small");
        }
        let (lo, hi) = self.box_fraction;
        if !(lo > 0.0 && lo <= hi && hi <= 0.9) {
            return bad("box fraction must satisfy 0 < lo <= hi <= 0.9");
        }
        if !(self.step >= 0.0 && self.scale_drift >= 0.0) {
            return bad("motion parameters must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return bad("test fraction must be in [0, 1]");
        }
        match self.rule {
            _ if self.attributes.is_empty() => {}
            AttributeRule::Random { max } if max == 0 || max > self.attributes.len() => {
                return bad("random attribute count out of range")
            }
            _ => {}
        }
        Ok(())
    }
}

/// A scenario together with its tracker profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub profiles: Vec<SkillProfile>,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn sequence_id(i: usize) -> String {
    format!("seq-{:04}", i + 1)
}

fn walk(spec: &ScenarioSpec, index: usize, len: usize) -> Trajectory {
    let (iw, ih) = spec.image;
    let key = |f: usize| keyed_rng(spec.seed, &[GT_STREAM, index as u64, f as u64]);
    let mut rng = key(0);
    let side = rng.random_range(spec.box_fraction.0..=spec.box_fraction.1) * iw;
    let aspect: f64 = rng.random_range(0.5..2.0);
    let max_w = 0.9 * iw;
    let max_h = 0.9 * ih;
    let mut w = side.clamp(MIN_SIDE, max_w);
    let mut h = (side * aspect).clamp(MIN_SIDE, max_h);
    let mut cx = rng.random_range(w / 2.0..=iw - w / 2.0);
    let mut cy = rng.random_range(h / 2.0..=ih - h / 2.0);
    let mut boxes = Vec::with_capacity(len);
    for f in 0..len {
        if f > 0 {
            let mut r = key(f);
            let scale = (w * h).sqrt() * spec.step;
            cx += scale * normal(&mut r);
            cy += scale * normal(&mut r);
            let g = (spec.scale_drift * normal(&mut r)).exp();
            w = (w * g).clamp(MIN_SIDE, max_w);
            h = (h * g).clamp(MIN_SIDE, max_h);
        }
        cx = cx.clamp(w / 2.0, iw - w / 2.0);
        cy = cy.clamp(h / 2.0, ih - h / 2.0);
        let rw = round2(w);
        let rh = round2(h);
        let x = round2(cx - w / 2.0).clamp(0.0, round2(iw - rw).max(0.0));
        let y = round2(cy - h / 2.0).clamp(0.0, round2(ih - rh).max(0.0));
        boxes.push(Some(BBox { x, y, w: rw, h: rh }));
    }
    Trajectory::new(boxes)
}

/// Ground-truth sequences for `spec`, in id order.
pub fn build_sequences(spec: &ScenarioSpec) -> Result<Vec<SequenceRecord>, SynthError> {
    spec.validate()?;
    Ok((0..spec.sequences)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_rng(spec.seed, &[SPLIT_STREAM, i as u64]);
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let attributes: BTreeSet<String> = match spec.rule {
                _ if spec.attributes.is_empty() => BTreeSet::new(),
                AttributeRule::RoundRobin => BTreeSet::from([spec.attributes[i % spec.attributes.len()].clone()]),
                AttributeRule::Random { max } => {
                    let count = rng.random_range(1..=max);
                    let mut pool = spec.attributes.clone();
                    (0..count)
                        .map(|_| pool.swap_remove(rng.random_range(0..pool.len())))
                        .collect()
                }
            };
            let f = spec.test_fraction;
            let test = ((i + 1) as f64 * f).floor() > (i as f64 * f).floor();
            let gt = walk(spec, i, len);
            SequenceRecord {
                id: sequence_id(i),
                frame_count: len,
                gt,
                attributes,
                split: if test { Split::Test } else { Split::Train },
                frame_size: Some(spec.image),
                history: Vec::new(),
            }
        })
        .collect())
}

/// A box with the same size as `gt` offset along one axis so that its
/// overlap with `gt` equals `target` exactly (up to rounding).
pub fn box_with_iou<R: Rng>(gt: &BBox, target: f64, rng: &mut R) -> BBox {
    let u = target.clamp(0.0, 1.0);
    let d = (1.0 - u) / (1.0 + u);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    if rng.random_bool(0.5) {
        gt.translated(sign * d * gt.w, 0.0)
    } else {
        gt.translated(0.0, sign * d * gt.h)
    }
}

/// Output of one synthetic tracker on one sequence. Frame 0 is the init box.
pub fn tracker_trajectory(
    seq: &SequenceRecord,
    seq_index: usize,
    tracker_index: usize,
    skill: Skill,
    seed: u64,
) -> Trajectory {
    seq.gt
        .boxes
        .iter()
        .enumerate()
        .map(|(f, gt)| -> MaybeBox {
            let gt = (*gt)?;
            if f == 0 {
                return Some(gt);
            }
            let mut rng = keyed_rng(
                seed,
                &[TRACKER_STREAM, tracker_index as u64, seq_index as u64, f as u64],
            );
            if skill.failure > 0.0 && rng.random::<f64>() < skill.failure {
                return None;
            }
            let target = skill.mean_iou + skill.jitter * normal(&mut rng);
            Some(box_with_iou(&gt, target, &mut rng))
        })
        .collect()
}

/// One result set per profile, in profile order.
pub fn synth_results(
    sequences: &[SequenceRecord],
    profiles: &[SkillProfile],
    vocabulary: &[String],
    seed: u64,
) -> Vec<ResultSet> {
    profiles
        .par_iter()
        .enumerate()
        .map(|(t, p)| ResultSet {
            tracker_id: p.tracker_id.clone(),
            entries: sequences
                .iter()
                .enumerate()
                .map(|(s, seq)| {
                    let skill = p.skill_for(&seq.attributes, vocabulary);
                    (seq.id.clone(), tracker_trajectory(seq, s, t, skill, seed))
                })
                .collect(),
        })
        .collect()
}

/// `n` profiles with random base skills and one or two attribute
/// specialties each.
pub fn random_profiles(n: usize, attributes: &[String], seed: u64) -> Vec<SkillProfile> {
    (0..n)
        .map(|t| {
            let mut rng = keyed_rng(seed, &[PROFILE_STREAM, t as u64]);
            let base = Skill::new(
                rng.random_range(0.35..0.7),
                rng.random_range(0.08..0.25),
                rng.random_range(0.0..0.08),
            );
            let mut per_attribute = BTreeMap::new();
            if !attributes.is_empty() {
                for _ in 0..rng.random_range(1..=2) {
                    let a = &attributes[rng.random_range(0..attributes.len())];
                    let skill = Skill::new(
                        rng.random_range(0.2..0.9),
                        rng.random_range(0.05..0.25),
                        rng.random_range(0.0..0.1),
                    );
                    per_attribute.insert(a.clone(), skill);
                }
            }
            SkillProfile {
                tracker_id: format!("T{:02}", t + 1),
                base,
                per_attribute,
                frame_cost_s: Some((rng.random_range(0.01f64..0.05) * 10_000.0).round() / 10_000.0),
            }
        })
        .collect()
}

/// Synthetic suite with `sequences` sequences and `trackers` random profiles.
pub fn random_scenario(sequences: usize, trackers: usize, seed: u64) -> Scenario {
    let spec = ScenarioSpec {
        seed,
        sequences,
        ..ScenarioSpec::default()
    };
    let profiles = random_profiles(trackers, &spec.attributes, seed);
    Scenario { spec, profiles }
}

/// Scenario where tracker `i` clearly dominates on sequences tagged with
/// attribute `i` (round-robin, one attribute per sequence).
pub fn separable_scenario_with(n_attributes: usize) -> Scenario {
    let vocabulary = [
        "illumination-variation",
        "fast-motion",
        "occlusion",
        "scale-variation",
        "view-change",
        "low-resolution",
    ];
    assert!((1..=vocabulary.len()).contains(&n_attributes));
    let attributes: Vec<String> = vocabulary[..n_attributes].iter().map(|s| s.to_string()).collect();
    let spec = ScenarioSpec {
        name: "separable".into(),
        seed: 20240611,
        sequences: 60 * n_attributes,
        min_len: 40,
        max_len: 90,
        attributes: attributes.clone(),
        rule: AttributeRule::RoundRobin,
        test_fraction: 0.3,
        ..ScenarioSpec::default()
    };
    let profiles = (0..n_attributes)
        .map(|t| SkillProfile {
            tracker_id: format!("T{:02}", t + 1),
            base: Skill::new(0.45, 0.08, 0.02),
            per_attribute: BTreeMap::from([(attributes[t].clone(), Skill::new(0.8, 0.08, 0.02))]),
            frame_cost_s: Some(0.02),
        })
        .collect();
    Scenario { spec, profiles }
}

pub fn separable_scenario() -> Scenario {
    separable_scenario_with(4)
}

/// Index of the tracker planted to win `seq` in a separable scenario.
pub fn planted_winner(scenario: &Scenario, seq: &SequenceRecord) -> Option<usize> {
    let attr = scenario.spec.attributes.iter().find(|a| seq.attributes.contains(*a))?;
    scenario
        .profiles
        .iter()
        .position(|p| p.per_attribute.contains_key(attr))
}

impl Scenario {
    pub fn sequences(&self) -> Result<Vec<SequenceRecord>, SynthError> {
        for p in &self.profiles {
            p.base.validate()?;
            for s in p.per_attribute.values() {
                s.validate()?;
            }
        }
        build_sequences(&self.spec)
    }

    pub fn results(&self, sequences: &[SequenceRecord]) -> Vec<ResultSet> {
        synth_results(sequences, &self.profiles, &self.spec.attributes, self.spec.seed)
    }

    /// Trackers sorted by base skill, best first (ties by id).
    pub fn ranking(&self) -> Vec<String> {
        let mut r: Vec<&SkillProfile> = self.profiles.iter().collect();
        r.sort_by(|a, b| {
            b.base
                .mean_iou
                .total_cmp(&a.base.mean_iou)
                .then_with(|| a.tracker_id.cmp(&b.tracker_id))
        });
        r.into_iter().map(|p| p.tracker_id.clone()).collect()
    }

    pub fn manifest(&self, root: &Path, sequences: &[SequenceRecord]) -> Result<Manifest, SynthError> {
        let mut m = Manifest::new(self.spec.name.clone(), root);
        m.results = Some(PathBuf::from("results"));
        m.attributes = self.spec.attributes.clone();
        m.trackers = self
            .profiles
            .iter()
            .map(|p| TrackerEntry {
                id: p.tracker_id.clone(),
                frame_cost_s: p.frame_cost_s,
            })
            .collect();
        m.ranking = self.ranking();
        m.sequences = write_sequences(root, sequences)?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    pub fn from_text(text: &str) -> Result<Self, SynthError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes ground truth, attributes, `manifest.txt` and `scenario.spec`
/// under `out`. Returns the manifest and the sequences.
pub fn generate_dataset(scenario: &Scenario, out: &Path) -> Result<(Manifest, Vec<SequenceRecord>), SynthError> {
    let sequences = scenario.sequences()?;
    let manifest = scenario.manifest(out, &sequences)?;
    write_text(&out.join("manifest.txt"), &manifest.render())?;
    write_text(&out.join("scenario.spec"), &scenario.to_text())?;
    Ok((manifest, sequences))
}

/// Writes one result file per (tracker, sequence) under `results_root`.
pub fn generate_results(
    scenario: &Scenario,
    sequences: &[SequenceRecord],
    results_root: &Path,
) -> Result<Vec<ResultSet>, SynthError> {
    let sets = scenario.results(sequences);
    write_results(results_root, &sets)?;
    Ok(sets)
}
