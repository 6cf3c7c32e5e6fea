//! Annotation, result and manifest files.
//!
//! Trajectory files hold one `x,y,w,h` line per frame. Result files live at
//! `<results_root>/<tracker_id>/<sequence_id>.txt`. The manifest is a
//! line-oriented `key = value` file with `[section]` headers; see the README
//! for the full grammar.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentSpec;
use crate::geometry::BBox;
use crate::metrics::Trajectory;

/// Per-frame tracker cost used when the manifest gives none (50 fps).
pub const DEFAULT_FRAME_COST_S: f64 = 1.0 / 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryParseError {
    #[error("line {line}: malformed box")]
    Malformed { line: usize },
    #[error("line {line}: negative width or height")]
    NegativeSize { line: usize },
    #[error("trajectory has no frames")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResultIssue {
    #[error("missing result file for tracker '{tracker}', sequence '{sequence}'")]
    MissingFile { tracker: String, sequence: String },
    #[error("tracker '{tracker}', sequence '{sequence}': expected {expected} frames, got {got}")]
    LengthMismatch {
        tracker: String,
        sequence: String,
        expected: usize,
        got: usize,
    },
    #[error("tracker '{tracker}', sequence '{sequence}': {error}")]
    Parse {
        tracker: String,
        sequence: String,
        error: TrajectoryParseError,
    },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{path}: {source}")]
    Trajectory {
        path: PathBuf,
        #[source]
        source: TrajectoryParseError,
    },
    #[error("sequence '{sequence}': attribute '{tag}' is not declared in the manifest")]
    UnknownAttribute { sequence: String, tag: String },
    #[error("sequence '{sequence}' has {frames} frames, at least 2 required")]
    TooShort { sequence: String, frames: usize },
    #[error("{} result problem(s):\n{}", .0.len(), join_issues(.0))]
    Results(Vec<ResultIssue>),
}

fn join_issues(issues: &[ResultIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Trajectory files
// ---------------------------------------------------------------------------

fn parse_line(raw: &str, line: usize) -> Result<Option<BBox>, TrajectoryParseError> {
    let text = raw.trim();
    if text.is_empty() || text == "0" {
        return Ok(None);
    }
    let fields: Vec<&str> = text.split([',', '\t']).map(str::trim).collect();
    if fields.len() != 4 {
        return Err(TrajectoryParseError::Malformed { line });
    }
    if fields.iter().all(|f| f.eq_ignore_ascii_case("nan")) {
        return Ok(None);
    }
    let mut v = [0.0f64; 4];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or(TrajectoryParseError::Malformed { line })?;
    }
    if v[2] < 0.0 || v[3] < 0.0 {
        return Err(TrajectoryParseError::NegativeSize { line });
    }
    Ok(Some(BBox {
        x: v[0],
        y: v[1],
        w: v[2],
        h: v[3],
    }))
}

/// Parses a trajectory file. Empty lines, a lone `0` and `nan,nan,nan,nan`
/// mark an absent box. Line numbers in errors are 1-based.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, TrajectoryParseError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Err(TrajectoryParseError::Empty);
    }
    body.split('\n')
        .enumerate()
        .map(|(i, l)| parse_line(l, i + 1))
        .collect()
}

/// Canonical text form; absent boxes are written as `nan,nan,nan,nan`.
pub fn format_trajectory(t: &Trajectory) -> String {
    let mut out = String::new();
    for b in &t.boxes {
        match b {
            Some(b) => writeln!(out, "{},{},{},{}", b.x, b.y, b.w, b.h),
            None => writeln!(out, "nan,nan,nan,nan"),
        }
        .expect("write to string");
    }
    out
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, DatasetError> {
    parse_trajectory(&read_text(path)?).map_err(|source| DatasetError::Trajectory {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub frame_count: usize,
    pub gt: Trajectory,
    pub attributes: BTreeSet<String>,
    pub split: Split,
    /// Image width and height in pixels, when known.
    pub frame_size: Option<(f64, f64)>,
    /// Augmentations applied to produce this record, oldest first.
    pub history: Vec<String>,
}

impl SequenceRecord {
    pub fn new(id: impl Into<String>, gt: Trajectory) -> Self {
        Self {
            id: id.into(),
            frame_count: gt.len(),
            gt,
            attributes: BTreeSet::new(),
            split: Split::Test,
            frame_size: None,
            history: Vec::new(),
        }
    }

    /// Id of the sequence this record was derived from.
    pub fn base_id(&self) -> &str {
        self.id.split('#').next().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub tracker_id: String,
    pub entries: BTreeMap<String, Trajectory>,
}

impl ResultSet {
    pub fn get(&self, sequence: &str) -> Option<&Trajectory> {
        self.entries.get(sequence)
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerEntry {
    pub id: String,
    pub frame_cost_s: Option<f64>,
}

impl TrackerEntry {
    pub fn frame_cost(&self) -> f64 {
        self.frame_cost_s.unwrap_or(DEFAULT_FRAME_COST_S)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    pub id: String,
    pub gt: PathBuf,
    pub attributes: Option<PathBuf>,
    pub split: Split,
    pub frame_size: Option<(f64, f64)>,
    pub history: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
    pub results: Option<PathBuf>,
    pub attributes: Vec<String>,
    /// Ordered; this order breaks every tie.
    pub trackers: Vec<TrackerEntry>,
    /// Per-dataset tracker ranking for nested pools. Empty means tracker order.
    pub ranking: Vec<String>,
    pub augment: Vec<AugmentSpec>,
    pub augment_seed: Option<u64>,
    pub sequences: Vec<SequenceEntry>,
}

pub fn valid_tracker_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '+'))
}

pub fn valid_sequence_id(id: &str) -> bool {
    !id.is_empty() && !id.contains(['/', '\\', ',']) && !id.chars().any(char::is_whitespace)
}

fn parse_size(s: &str) -> Option<(f64, f64)> {
    let (w, h) = s.split_once('x')?;
    let w: f64 = w.parse().ok()?;
    let h: f64 = h.parse().ok()?;
    (w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()).then_some((w, h))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Attributes,
    Trackers,
    Ranking,
    Augment,
    Sequences,
}

impl Manifest {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            root: root.into(),
            results: None,
            attributes: Vec::new(),
            trackers: Vec::new(),
            ranking: Vec::new(),
            augment: Vec::new(),
            augment_seed: None,
            sequences: Vec::new(),
        }
    }

    pub fn tracker_ids(&self) -> Vec<String> {
        self.trackers.iter().map(|t| t.id.clone()).collect()
    }

    pub fn tracker_index(&self, id: &str) -> Option<usize> {
        self.trackers.iter().position(|t| t.id == id)
    }

    /// Ranking used for nested pools, falling back to tracker order.
    pub fn rank_list(&self) -> Vec<String> {
        if self.ranking.is_empty() {
            self.tracker_ids()
        } else {
            self.ranking.clone()
        }
    }

    /// [`Manifest::rank_list`] as tracker indices.
    pub fn rank_indices(&self) -> Vec<usize> {
        self.rank_list()
            .iter()
            .filter_map(|id| self.tracker_index(id))
            .collect()
    }

    pub fn frame_costs(&self) -> Vec<f64> {
        self.trackers.iter().map(TrackerEntry::frame_cost).collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn results_dir(&self) -> Option<PathBuf> {
        self.results.as_deref().map(|p| self.resolve(p))
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut m = Manifest::new("", root);
        let mut section = Section::Header;
        let err = |line: usize, message: String| DatasetError::Manifest { line, message };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let line = if section == Section::Sequences {
                // sequence ids and history tokens may contain '#'
                raw.trim()
            } else {
                line
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "attributes" => Section::Attributes,
                    "trackers" => Section::Trackers,
                    "ranking" => Section::Ranking,
                    "augment" => Section::Augment,
                    "sequences" => Section::Sequences,
                    other => return Err(err(line_no, format!("unknown section [{other}]"))),
                };
                continue;
            }
            match section {
                Section::Header => {
                    let (k, v) = line
                        .split_once('=')
                        .ok_or_else(|| err(line_no, "expected 'key = value'".into()))?;
                    match k.trim() {
                        "name" => m.name = v.trim().to_string(),
                        "results" => m.results = Some(PathBuf::from(v.trim())),
                        other => return Err(err(line_no, format!("unknown key '{other}'"))),
                    }
                }
                Section::Attributes => {
                    if m.attributes.iter().any(|a| a == line) {
                        return Err(err(line_no, format!("duplicate attribute '{line}'")));
                    }
                    m.attributes.push(line.to_string());
                }
                Section::Trackers => {
                    let mut tokens = line.split_whitespace();
                    let id = tokens.next().unwrap_or_default();
                    if !valid_tracker_id(id) {
                        return Err(err(line_no, format!("invalid tracker id '{id}'")));
                    }
                    if m.tracker_index(id).is_some() {
                        return Err(err(line_no, format!("duplicate tracker '{id}'")));
                    }
                    let mut entry = TrackerEntry {
                        id: id.to_string(),
                        frame_cost_s: None,
                    };
                    for tok in tokens {
                        match tok.split_once('=') {
                            Some(("frame_cost", v)) => {
                                let c: f64 = v
                                    .parse()
                                    .ok()
                                    .filter(|c: &f64| c.is_finite() && *c >= 0.0)
                                    .ok_or_else(|| err(line_no, format!("bad frame_cost '{v}'")))?;
                                entry.frame_cost_s = Some(c);
                            }
                            _ => return Err(err(line_no, format!("unknown tracker option '{tok}'"))),
                        }
                    }
                    m.trackers.push(entry);
                }
                Section::Ranking => {
                    if m.tracker_index(line).is_none() {
                        return Err(err(line_no, format!("ranking names unknown tracker '{line}'")));
                    }
                    if m.ranking.iter().any(|r| r == line) {
                        return Err(err(line_no, format!("tracker '{line}' ranked twice")));
                    }
                    m.ranking.push(line.to_string());
                }
                Section::Augment => {
                    if let Some((k, v)) = line.split_once('=') {
                        if k.trim() != "seed" {
                            return Err(err(line_no, format!("unknown key '{}'", k.trim())));
                        }
                        let seed = v
                            .trim()
                            .parse()
                            .map_err(|_| err(line_no, format!("bad seed '{}'", v.trim())))?;
                        m.augment_seed = Some(seed);
                    } else {
                        let spec: AugmentSpec = line.parse().map_err(|e| err(line_no, e))?;
                        m.augment.push(spec);
                    }
                }
                Section::Sequences => {
                    let mut tokens = line.split_whitespace();
                    let id = tokens.next().unwrap_or_default();
                    if !valid_sequence_id(id) {
                        return Err(err(line_no, format!("invalid sequence id '{id}'")));
                    }
                    if m.sequences.iter().any(|s| s.id == id) {
                        return Err(err(line_no, format!("duplicate sequence '{id}'")));
                    }
                    let mut entry = SequenceEntry {
                        id: id.to_string(),
                        gt: PathBuf::new(),
                        attributes: None,
                        split: Split::Test,
                        frame_size: None,
                        history: Vec::new(),
                    };
                    for tok in tokens {
                        let (k, v) = tok
                            .split_once('=')
                            .ok_or_else(|| err(line_no, format!("expected key=value, got '{tok}'")))?;
                        match k {
                            "gt" => entry.gt = PathBuf::from(v),
                            "attributes" => entry.attributes = Some(PathBuf::from(v)),
                            "split" => entry.split = v.parse().map_err(|e| err(line_no, e))?,
                            "size" => {
                                entry.frame_size =
                                    Some(parse_size(v).ok_or_else(|| err(line_no, format!("bad size '{v}'")))?)
                            }
                            "history" => entry.history = v.split('+').map(String::from).collect(),
                            other => return Err(err(line_no, format!("unknown sequence key '{other}'"))),
                        }
                    }
                    if entry.gt.as_os_str().is_empty() {
                        return Err(err(line_no, format!("sequence '{id}' has no gt= path")));
                    }
                    m.sequences.push(entry);
                }
            }
        }
        if m.trackers.is_empty() {
            return Err(err(0, "manifest declares no trackers".into()));
        }
        if let Some(seed) = m.augment_seed {
            for spec in &mut m.augment {
                spec.seed = Some(seed);
            }
        }
        Ok(m)
    }

    /// Canonical text form; `parse(render())` reproduces the manifest.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut w = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        w(format!("name = {}", self.name));
        if let Some(r) = &self.results {
            w(format!("results = {}", r.display()));
        }
        w(String::new());
        w("[attributes]".into());
        for a in &self.attributes {
            w(a.clone());
        }
        w(String::new());
        w("[trackers]".into());
        for t in &self.trackers {
            match t.frame_cost_s {
                Some(c) => w(format!("{} frame_cost={c}", t.id)),
                None => w(t.id.clone()),
            }
        }
        if !self.ranking.is_empty() {
            w(String::new());
            w("[ranking]".into());
            for r in &self.ranking {
                w(r.clone());
            }
        }
        if !self.augment.is_empty() || self.augment_seed.is_some() {
            w(String::new());
            w("[augment]".into());
            if let Some(s) = self.augment_seed {
                w(format!("seed = {s}"));
            }
            for a in &self.augment {
                w(a.to_string());
            }
        }
        w(String::new());
        w("[sequences]".into());
        for s in &self.sequences {
            let mut line = format!("{} gt={}", s.id, s.gt.display());
            if let Some(a) = &s.attributes {
                line.push_str(&format!(" attributes={}", a.display()));
            }
            line.push_str(&format!(" split={}", s.split.as_str()));
            if let Some((fw, fh)) = s.frame_size {
                line.push_str(&format!(" size={fw}x{fh}"));
            }
            if !s.history.is_empty() {
                line.push_str(&format!(" history={}", s.history.join("+")));
            }
            w(line);
        }
        out
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = read_text(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Manifest::parse(&text, root)
}

/// Reads one tag per line, ignoring blank lines.
pub fn parse_attributes(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Loads and validates every sequence in manifest order.
pub fn load_sequences(manifest: &Manifest) -> Result<Vec<SequenceRecord>, DatasetError> {
    manifest
        .sequences
        .par_iter()
        .map(|entry| {
            let gt = read_trajectory(&manifest.resolve(&entry.gt))?;
            if gt.len() < 2 {
                return Err(DatasetError::TooShort {
                    sequence: entry.id.clone(),
                    frames: gt.len(),
                });
            }
            let attributes = match &entry.attributes {
                Some(p) => parse_attributes(&read_text(&manifest.resolve(p))?),
                None => BTreeSet::new(),
            };
            if let Some(tag) = attributes.iter().find(|t| !manifest.attributes.contains(t)) {
                return Err(DatasetError::UnknownAttribute {
                    sequence: entry.id.clone(),
                    tag: tag.clone(),
                });
            }
            Ok(SequenceRecord {
                id: entry.id.clone(),
                frame_count: gt.len(),
                gt,
                attributes,
                split: entry.split,
                frame_size: entry.frame_size,
                history: entry.history.clone(),
            })
        })
        .collect()
}

pub fn result_path(results_root: &Path, tracker: &str, sequence: &str) -> PathBuf {
    results_root.join(tracker).join(format!("{sequence}.txt"))
}

/// Loads one result set per manifest tracker, in manifest order. Every
/// missing or inconsistent file is collected before failing.
pub fn load_results(
    manifest: &Manifest,
    sequences: &[SequenceRecord],
    results_root: &Path,
) -> Result<Vec<ResultSet>, DatasetError> {
    let pairs: Vec<(usize, usize)> = (0..manifest.trackers.len())
        .flat_map(|t| (0..sequences.len()).map(move |s| (t, s)))
        .collect();
    let loaded: Vec<Result<Trajectory, ResultIssue>> = pairs
        .par_iter()
        .map(|&(t, s)| {
            let tracker = &manifest.trackers[t].id;
            let seq = &sequences[s];
            let path = result_path(results_root, tracker, &seq.id);
            let text = std::fs::read_to_string(&path).map_err(|_| ResultIssue::MissingFile {
                tracker: tracker.clone(),
                sequence: seq.id.clone(),
            })?;
            let traj = parse_trajectory(&text).map_err(|error| ResultIssue::Parse {
                tracker: tracker.clone(),
                sequence: seq.id.clone(),
                error,
            })?;
            if traj.len() != seq.frame_count {
                return Err(ResultIssue::LengthMismatch {
                    tracker: tracker.clone(),
                    sequence: seq.id.clone(),
                    expected: seq.frame_count,
                    got: traj.len(),
                });
            }
            Ok(traj)
        })
        .collect();

    let mut issues = Vec::new();
    let mut sets: Vec<ResultSet> = manifest
        .trackers
        .iter()
        .map(|t| ResultSet {
            tracker_id: t.id.clone(),
            entries: BTreeMap::new(),
        })
        .collect();
    for (&(t, s), r) in pairs.iter().zip(loaded) {
        match r {
            Ok(traj) => {
                sets[t].entries.insert(sequences[s].id.clone(), traj);
            }
            Err(issue) => issues.push(issue),
        }
    }
    if issues.is_empty() {
        Ok(sets)
    } else {
        Err(DatasetError::Results(issues))
    }
}

pub fn write_results(results_root: &Path, sets: &[ResultSet]) -> Result<(), DatasetError> {
    for set in sets {
        for (seq, traj) in &set.entries {
            write_text(
                &result_path(results_root, &set.tracker_id, seq),
                &format_trajectory(traj),
            )?;
        }
    }
    Ok(())
}

/// Writes ground truth and attribute files for `sequences` under `root` and
/// returns the matching manifest entries (paths relative to `root`).
pub fn write_sequences(root: &Path, sequences: &[SequenceRecord]) -> Result<Vec<SequenceEntry>, DatasetError> {
    sequences
        .iter()
        .map(|s| {
            let gt = PathBuf::from("sequences").join(&s.id).join("groundtruth.txt");
            let attrs = PathBuf::from("sequences").join(&s.id).join("attributes.txt");
            write_text(&root.join(&gt), &format_trajectory(&s.gt))?;
            let tags: String = s.attributes.iter().map(|a| format!("{a}\n")).collect();
            write_text(&root.join(&attrs), &tags)?;
            Ok(SequenceEntry {
                id: s.id.clone(),
                gt,
                attributes: Some(attrs),
                split: s.split,
                frame_size: s.frame_size,
                history: s.history.clone(),
            })
        })
        .collect()
}

/// Manifest plus its loaded sequences.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub sequences: Vec<SequenceRecord>,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self, DatasetError> {
        let manifest = load_manifest(manifest_path)?;
        let sequences = load_sequences(&manifest)?;
        Ok(Self { manifest, sequences })
    }

    pub fn split(&self, split: Split) -> Vec<SequenceRecord> {
        self.sequences.iter().filter(|s| s.split == split).cloned().collect()
    }

    pub fn load_results(&self, results_root: &Path) -> Result<Vec<ResultSet>, DatasetError> {
        load_results(&self.manifest, &self.sequences, results_root)
    }
}
