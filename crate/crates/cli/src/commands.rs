use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bofn_core::augment::{default_specs, expand_training_set};
use bofn_core::dataset::{
    load_results, read_text, write_sequences, write_text, Dataset, Manifest, ResultSet, SequenceRecord, Split,
};
use bofn_core::labelgen::{build_label_set, format_labels, parse_labels};
use bofn_core::metrics::{frame_scores, MetricKind, MetricReport};
use bofn_core::predictor::{format_predictions, train as fit, training_pairs, ClassifierModel, Featurizer, Hyper};
use bofn_core::report::{attribute_histogram, manifest_digest, CurveSet, ReportBundle, ReportMeta, SummaryRow};
use bofn_core::select::{
    ablate_pool_size, evaluate_bofn, format_plans, model_predictions, select as plan, BofnEvaluation, Level, Portfolio,
    SelectionPolicy, TrackerPool, DEFAULT_POOL_SIZES,
};
use bofn_core::synth::{generate_dataset, generate_results, random_scenario, separable_scenario_with, Scenario};

use crate::{DataArgs, LevelArg, ScenarioArg, SelectArgs, SplitArg};

struct Loaded {
    dataset: Dataset,
    manifest_text: String,
    sequences: Vec<SequenceRecord>,
    results: Vec<ResultSet>,
}

fn split_filter(seqs: &[SequenceRecord], split: SplitArg) -> Vec<SequenceRecord> {
    seqs.iter()
        .filter(|s| match split {
            SplitArg::All => true,
            SplitArg::Train => s.split == Split::Train,
            SplitArg::Test => s.split == Split::Test,
        })
        .cloned()
        .collect()
}

fn load_dataset(path: &Path) -> Result<(Dataset, String)> {
    let text = read_text(path)?;
    let dataset = Dataset::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok((dataset, text))
}

fn load(data: &DataArgs, keep: impl Fn(&SequenceRecord) -> bool) -> Result<Loaded> {
    let (dataset, manifest_text) = load_dataset(&data.manifest)?;
    let sequences: Vec<SequenceRecord> = split_filter(&dataset.sequences, data.split)
        .into_iter()
        .filter(|s| keep(s))
        .collect();
    if sequences.is_empty() {
        bail!("no sequences selected from {}", data.manifest.display());
    }
    let root = match &data.results {
        Some(r) => r.clone(),
        None => dataset
            .manifest
            .results_dir()
            .context("manifest has no 'results' entry; pass --results")?,
    };
    let results = load_results(&dataset.manifest, &sequences, &root)?;
    Ok(Loaded {
        dataset,
        manifest_text,
        sequences,
        results,
    })
}

fn level(arg: LevelArg, k: usize) -> Result<Level> {
    Ok(match arg {
        LevelArg::Video => Level::Video,
        LevelArg::Frame if k == 0 => bail!("--interval must be at least 1"),
        LevelArg::Frame => Level::Frame { k },
    })
}

fn parse_pool(spec: &str, manifest: &Manifest) -> Result<TrackerPool> {
    Ok(TrackerPool::parse(
        spec,
        &manifest.tracker_ids(),
        &manifest.rank_indices(),
    )?)
}

fn parse_policy(spec: &str, manifest: &Manifest) -> Result<SelectionPolicy> {
    Ok(SelectionPolicy::parse(spec, &manifest.tracker_ids())?)
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<32} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>8}",
        "label", "AUC", "P", "P_norm", "AO", "SR50", "SR75", "EAO-s", "fps"
    );
    for r in rows {
        let fps = r.fps.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<32} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>8}",
            r.label, r.auc, r.precision, r.norm_precision, r.ao, r.sr50, r.sr75, r.eao_simplified, fps
        );
    }
}

pub fn synth(
    scenario: ScenarioArg,
    sequences: usize,
    trackers: usize,
    attributes: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let sc: Scenario = match scenario {
        ScenarioArg::Separable => {
            if !(1..=6).contains(&attributes) {
                bail!("--attributes must be between 1 and 6");
            }
            separable_scenario_with(attributes)
        }
        ScenarioArg::Random => random_scenario(sequences, trackers, seed),
    };
    let (manifest, seqs) = generate_dataset(&sc, out)?;
    generate_results(
        &sc,
        &seqs,
        &manifest.results_dir().expect("synthetic manifest has results"),
    )?;
    println!(
        "wrote {} sequences and {} trackers to {}",
        seqs.len(),
        sc.profiles.len(),
        out.display()
    );
    Ok(())
}

pub fn label(data: &DataArgs, metric: MetricKind, relabel_augmented: bool, out: &Path) -> Result<()> {
    let l = load(data, |s| relabel_augmented || s.history.is_empty())?;
    let labels = build_label_set(&l.sequences, &l.results, metric)?;
    write_text(out, &format_labels(&labels))?;
    let degenerate = labels.iter().filter(|l| l.degenerate).count();
    println!("{} labels ({degenerate} degenerate) -> {}", labels.len(), out.display());
    Ok(())
}

pub fn augment(manifest_path: &Path, split: SplitArg, seed: Option<u64>, out: &Path) -> Result<()> {
    let (ds, _) = load_dataset(manifest_path)?;
    let m = &ds.manifest;
    let seed = seed.or(m.augment_seed);
    let specs = if m.augment.is_empty() {
        default_specs(seed)
    } else {
        m.augment
            .iter()
            .map(|s| {
                let s = s.clone();
                if s.seed.is_some() {
                    s
                } else {
                    s.with_seed(seed)
                }
            })
            .collect()
    };
    let source = split_filter(&ds.sequences, split);
    let exp = expand_training_set(&source, &specs)?;
    let mut out_manifest = Manifest::new(format!("{}-augmented", m.name), out);
    if let Some(r) = m.results_dir() {
        let abs = std::fs::canonicalize(&r).unwrap_or(r);
        out_manifest.results = Some(abs);
    }
    out_manifest.attributes = m.attributes.clone();
    out_manifest.trackers = m.trackers.clone();
    out_manifest.ranking = m.ranking.clone();
    out_manifest.sequences = write_sequences(out, &exp.records)?;
    write_text(&out.join("manifest.txt"), &out_manifest.render())?;
    for (id, spec) in &exp.skipped {
        eprintln!("skipped {id} with {spec}: too few frames");
    }
    println!(
        "{} -> {} sequences ({:.1}x) in {}",
        source.len(),
        exp.records.len(),
        exp.records.len() as f64 / source.len().max(1) as f64,
        out.join("manifest.txt").display()
    );
    Ok(())
}

pub fn train(
    manifest: &Path,
    labels_path: &Path,
    split: SplitArg,
    hyper: Hyper,
    window: usize,
    out: &Path,
) -> Result<()> {
    if window == 0 {
        bail!("--window must be at least 1");
    }
    let (ds, _) = load_dataset(manifest)?;
    let labels =
        parse_labels(&read_text(labels_path)?).with_context(|| format!("reading labels {}", labels_path.display()))?;
    let ids = ds.manifest.tracker_ids();
    let seqs = split_filter(&ds.sequences, split);
    let fz = Featurizer::new(ds.manifest.attributes.clone(), window);
    let (xs, ys) = training_pairs(&fz, &seqs, &labels, &ids)?;
    let model = fit(&xs, &ys, ids, fz, hyper)?;
    write_text(out, &model.to_json())?;
    let hits = xs
        .iter()
        .zip(&ys)
        .filter(|(x, &y)| {
            model
                .predict(x, "", 0)
                .map(|r| r.chosen == model.tracker_ids[y])
                .unwrap_or(false)
        })
        .count();
    println!(
        "trained on {} examples: loss {:.4} -> {:.4}, train top-1 {:.3} -> {}",
        xs.len(),
        model.loss_curve.first().copied().unwrap_or(f64::NAN),
        model.loss_curve.last().copied().unwrap_or(f64::NAN),
        hits as f64 / xs.len() as f64,
        out.display()
    );
    Ok(())
}

pub fn predict(data: &DataArgs, model: &Path, lv: LevelArg, k: usize, out: &Path) -> Result<()> {
    let l = load(data, |_| true)?;
    let model = ClassifierModel::from_json(&read_text(model)?)?;
    let portfolio = Portfolio::new(&l.results);
    let level = level(lv, k)?;
    let mut records = Vec::new();
    for s in &l.sequences {
        records.extend(model_predictions(s, &portfolio, &model, level)?);
    }
    write_text(out, &format_predictions(&records))?;
    println!("{} predictions -> {}", records.len(), out.display());
    Ok(())
}

pub fn select(data: &DataArgs, args: &SelectArgs, out: &Path) -> Result<()> {
    let l = load(data, |_| true)?;
    let m = &l.dataset.manifest;
    let pool = parse_pool(&args.pool, m)?;
    let policy = parse_policy(&args.policy, m)?;
    let level = level(args.level, args.interval)?;
    let portfolio = Portfolio::new(&l.results);
    let plans = l
        .sequences
        .iter()
        .map(|s| plan(s, &portfolio, &pool, &policy, level))
        .collect::<Result<Vec<_>, _>>()?;
    write_text(out, &format_plans(&plans))?;
    println!("{} plans -> {}", plans.len(), out.display());
    Ok(())
}

fn run(l: &Loaded, pool: &TrackerPool, policy: &SelectionPolicy, level: Level) -> Result<BofnEvaluation> {
    let portfolio = Portfolio::new(&l.results);
    Ok(evaluate_bofn(
        &l.sequences,
        &portfolio,
        &l.dataset.manifest.frame_costs(),
        pool,
        policy,
        level,
    )?)
}

fn meta(
    l: &Loaded,
    data: &DataArgs,
    pool: &TrackerPool,
    policy: &str,
    level: &str,
    k: Option<usize>,
    metric: MetricKind,
    seed: u64,
) -> ReportMeta {
    ReportMeta {
        dataset: l.dataset.manifest.name.clone(),
        manifest_sha256: manifest_digest(&l.manifest_text),
        seeds: BTreeMap::from([("run".to_string(), seed)]),
        pool: pool.ids(&l.dataset.manifest.tracker_ids()),
        policy: policy.to_string(),
        level: level.to_string(),
        k,
        metric,
        split: match data.split {
            SplitArg::Train => "train",
            SplitArg::Test => "test",
            SplitArg::All => "all",
        }
        .to_string(),
    }
}

pub fn eval(data: &DataArgs, args: &SelectArgs, out: Option<&Path>) -> Result<()> {
    let l = load(data, |_| true)?;
    let m = &l.dataset.manifest;
    let pool = parse_pool(&args.pool, m)?;
    let policy = parse_policy(&args.policy, m)?;
    let level = level(args.level, args.interval)?;
    let e = run(&l, &pool, &policy, level)?;
    let label = format!("{}@{}", policy.describe(), level);
    let k = matches!(level, Level::Frame { .. }).then_some(args.interval);
    let mut bundle = ReportBundle::new(meta(
        &l,
        data,
        &pool,
        &policy.describe(),
        &level.to_string(),
        k,
        MetricKind::default(),
        0,
    ));
    bundle.add_evaluation(&label, &e);
    print_summary(&bundle.summary);
    println!(
        "frames {}  tracker time {:.3}s  overhead {:.3}s",
        e.timing.total_frames, e.timing.tracker_time_s, e.timing.overhead_s
    );
    if let Some(dir) = out {
        bundle.emit(dir)?;
        println!("report -> {}", dir.display());
    }
    Ok(())
}

fn pool_sizes(spec: Option<&str>, n: usize) -> Result<Vec<usize>> {
    match spec {
        Some(s) => s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .with_context(|| format!("bad pool size '{v}'"))
            })
            .collect(),
        None => {
            let mut v: Vec<usize> = DEFAULT_POOL_SIZES.iter().copied().filter(|&s| s <= n).collect();
            if v.last() != Some(&n) {
                v.push(n);
            }
            Ok(v)
        }
    }
}

pub fn ablate(
    data: &DataArgs,
    policy: &str,
    metric: MetricKind,
    k: usize,
    sizes: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let l = load(data, |_| true)?;
    let m = &l.dataset.manifest;
    let policy = parse_policy(policy, m)?;
    let sizes = pool_sizes(sizes, m.trackers.len())?;
    let portfolio = Portfolio::new(&l.results);
    let table = ablate_pool_size(
        &l.sequences,
        &portfolio,
        &m.frame_costs(),
        &m.rank_indices(),
        &sizes,
        &policy,
        metric,
        level(LevelArg::Frame, k).map(|_| k)?,
    )?;
    let mut bundle = ReportBundle::new(meta(
        &l,
        data,
        &TrackerPool::all(m.trackers.len()),
        &policy.describe(),
        "video+frame",
        Some(k),
        metric,
        0,
    ));
    bundle.ablation = Some(table);
    let csv = bundle.ablation_csv().expect("ablation present");
    print!("{csv}");
    if let Some(p) = out {
        write_text(p, &csv)?;
    }
    Ok(())
}

pub fn report(data: &DataArgs, args: &SelectArgs, metric: MetricKind, seed: u64, out: &Path) -> Result<()> {
    let l = load(data, |_| true)?;
    let m = &l.dataset.manifest;
    let ids = m.tracker_ids();
    let pool = parse_pool(&args.pool, m)?;
    let policy = parse_policy(&args.policy, m)?;
    level(LevelArg::Frame, args.interval)?;
    let k = args.interval;
    let mut bundle = ReportBundle::new(meta(
        &l,
        data,
        &pool,
        &policy.describe(),
        "video+frame",
        Some(k),
        metric,
        seed,
    ));

    let mut configs = vec![(policy.describe(), policy)];
    if !matches!(configs[0].1, SelectionPolicy::Oracle(o) if o == metric) {
        configs.push((format!("oracle:{metric}"), SelectionPolicy::Oracle(metric)));
    }
    for (name, p) in &configs {
        for lv in [Level::Video, Level::Frame { k }] {
            let e = run(&l, &pool, p, lv)?;
            bundle.add_evaluation(&format!("{name}@{lv}"), &e);
        }
    }
    let costs = m.frame_costs();
    for (t, set) in l.results.iter().enumerate() {
        let frames = l
            .sequences
            .iter()
            .map(|s| frame_scores(&set.entries[&s.id], &s.gt))
            .collect::<Result<Vec<_>, _>>()?;
        let report = MetricReport::aggregate(&frames)?;
        let total = l.sequences.iter().map(|s| s.frame_count).sum();
        bundle
            .summary
            .push(SummaryRow::baseline(&ids[t], &report, total, costs[t]));
        bundle.curves.push(CurveSet::from_frames(&ids[t], &frames));
    }

    let originals: Vec<SequenceRecord> = l.sequences.iter().filter(|s| s.history.is_empty()).cloned().collect();
    let labels = build_label_set(&originals, &l.results, metric)?;
    bundle.attribute_histogram = attribute_histogram(&labels, &originals, &m.attributes);
    if ids.len() > 1 {
        let portfolio = Portfolio::new(&l.results);
        bundle.ablation = Some(ablate_pool_size(
            &l.sequences,
            &portfolio,
            &costs,
            &m.rank_indices(),
            &pool_sizes(None, ids.len())?,
            &SelectionPolicy::Oracle(metric),
            metric,
            k,
        )?);
    }
    let written = bundle.emit(out)?;
    print_summary(&bundle.summary);
    println!("{} files -> {}", written.len(), out.display());
    Ok(())
}
