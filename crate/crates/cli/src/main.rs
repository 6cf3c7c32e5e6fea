use std::path::PathBuf;
use std::process::ExitCode;

use bofn_core::metrics::MetricKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(
    name = "bofn",
    version,
    about = "Evaluate tracker portfolios and best-of-N selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LevelArg {
    Video,
    Frame,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    Separable,
    Random,
}

#[derive(Args)]
pub struct DataArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Results root (`<root>/<tracker>/<sequence>.txt`); defaults to the manifest's.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
}

#[derive(Args)]
pub struct SelectArgs {
    /// `all`, `top:N` (manifest ranking) or a comma-separated id list.
    #[arg(long, default_value = "all")]
    pub pool: String,
    /// `oracle[:METRIC]`, `fixed:ID`, `random:SEED`, `model:PATH` or `external:PATH`.
    #[arg(long, default_value = "oracle")]
    pub policy: String,
    #[arg(long, value_enum, default_value_t = LevelArg::Video)]
    pub level: LevelArg,
    /// Frames per selection interval at frame level.
    #[arg(long, default_value_t = bofn_core::select::DEFAULT_INTERVAL)]
    pub interval: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with tracker results.
    Synth {
        #[arg(long, value_enum, default_value_t = ScenarioArg::Separable)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 40)]
        sequences: usize,
        #[arg(long, default_value_t = 6)]
        trackers: usize,
        /// Attribute count for the separable scenario.
        #[arg(long, default_value_t = 4)]
        attributes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build best-tracker labels as JSON lines.
    Label {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = MetricKind::SuccessAuc)]
        metric: MetricKind,
        /// Also label augmented sequences from their own results.
        #[arg(long)]
        relabel_augmented: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an expanded training manifest with augmented sequences.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        /// Overrides the manifest's augmentation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the built-in classifier.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[arg(long, default_value_t = 1e-4)]
        l2: f64,
        #[arg(long, default_value_t = bofn_core::predictor::DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export model predictions in the interchange format.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = LevelArg::Video)]
        level: LevelArg,
        #[arg(long, default_value_t = bofn_core::select::DEFAULT_INTERVAL)]
        interval: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write selection plans.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a selection policy and print the summary.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
        /// Write the per-sequence table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nested-pool ablation at both levels.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "oracle")]
        policy: String,
        #[arg(long, default_value_t = MetricKind::SuccessAuc)]
        metric: MetricKind,
        #[arg(long, default_value_t = bofn_core::select::DEFAULT_INTERVAL)]
        interval: usize,
        /// Comma-separated pool sizes; defaults to 3,6,9,12,15,17 capped at the tracker count.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full report bundle: policy at both levels, oracle, every tracker.
    Report {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[arg(long, default_value_t = MetricKind::SuccessAuc)]
        metric: MetricKind,
        /// Seed recorded in the report metadata.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            scenario,
            sequences,
            trackers,
            attributes,
            seed,
            out,
        } => commands::synth(scenario, sequences, trackers, attributes, seed, &out),
        Command::Label {
            data,
            metric,
            relabel_augmented,
            out,
        } => commands::label(&data, metric, relabel_augmented, &out),
        Command::Augment {
            manifest,
            split,
            seed,
            out,
        } => commands::augment(&manifest, split, seed, &out),
        Command::Train {
            manifest,
            labels,
            split,
            epochs,
            lr,
            l2,
            window,
            seed,
            out,
        } => {
            let hyper = bofn_core::predictor::Hyper { epochs, lr, l2, seed };
            commands::train(&manifest, &labels, split, hyper, window, &out)
        }
        Command::Predict {
            data,
            model,
            level,
            interval,
            out,
        } => commands::predict(&data, &model, level, interval, &out),
        Command::Select { data, select, out } => commands::select(&data, &select, &out),
        Command::Eval { data, select, out } => commands::eval(&data, &select, out.as_deref()),
        Command::Ablate {
            data,
            policy,
            metric,
            interval,
            sizes,
            out,
        } => commands::ablate(&data, &policy, metric, interval, sizes.as_deref(), out.as_deref()),
        Command::Report {
            data,
            select,
            metric,
            seed,
            out,
        } => commands::report(&data, &select, metric, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::FAILURE
        }
    }
}
