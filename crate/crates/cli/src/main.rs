//! `fallwatch`: command-line front end for the radar fall-detection
//! pipeline. Subcommands follow the data's life cycle: simulate a dataset,
//! preprocess it into windows, augment and train detectors, evaluate and
//! compare them, and finally serve or replay live record streams.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fallwatch_core::data::{AgeGroup, HealthCondition, ResidentContext, ResourceAvailability};
use fallwatch_core::imbalance::{Strategy, WeightMethod};
use fallwatch_core::models::{Architecture, TrainConfig, TrainedDetector};
use fallwatch_core::pipeline::{
    apply_strategy, evaluate_detector, grid_train_config, prepare_dataset, run_grid,
    train_with_strategy, GridSpec, DEFAULT_DATASET_SEED, DEFAULT_DIFFICULTY, DEFAULT_PARTICIPANTS,
    DEFAULT_SPLIT_SEED, TRAIN_FRACTION,
};
use fallwatch_core::preprocess::{
    apply_standardizer, fit_standardizer, load_window_set, save_window_set, stratified_split,
    windows_from_sessions, WindowSet,
};
use fallwatch_core::selection::select_model;
use fallwatch_core::service::{run_service, InputSource, ServiceConfig};
use fallwatch_core::sim::{default_script, generate_dataset, load_dataset, write_dataset, ProtocolScript};

#[derive(Parser)]
#[command(name = "fallwatch", version, about = "Radar fall detection: simulation, training, and the edge service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic radar dataset from the scripted protocol
    Simulate(SimulateArgs),
    /// Slice sessions into labeled 8-second windows, split, and standardize
    Preprocess(PreprocessArgs),
    /// Apply an imbalance strategy to a training window set
    Augment(AugmentArgs),
    /// Train a detector on a window set
    Train(TrainArgs),
    /// Score a detector on a labeled window set
    Evaluate(EvaluateArgs),
    /// Run the architecture-by-strategy comparison grid
    Report(ReportArgs),
    /// Choose a detector architecture for a resident's context
    Select(SelectArgs),
    /// Run the streaming detection service on stdin or a TCP listener
    Serve(ServeArgs),
    /// Replay a recorded session through the service at a time multiplier
    Replay(ReplayArgs),
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    Architecture::from_str(s).map_err(|e| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_str(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of participants, one session each
    #[arg(long, default_value_t = DEFAULT_PARTICIPANTS)]
    participants: usize,
    /// Near-miss severity and noise inflation, 0.0 to 1.0
    #[arg(long, default_value_t = DEFAULT_DIFFICULTY)]
    difficulty: f64,
    #[arg(long, default_value_t = DEFAULT_DATASET_SEED)]
    seed: u64,
    /// Idle seconds between scripted activities (default: the protocol's 10)
    #[arg(long)]
    buffer_s: Option<usize>,
    /// Output directory for records, annotations, and manifest.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Dataset manifest written by `simulate`
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_SPLIT_SEED)]
    seed: u64,
    /// Output directory for the `train` and `test` window sets
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// Path stem of the training window set (no extension)
    #[arg(long)]
    train: PathBuf,
    /// none, ins, ens, ros, smote, or gan
    #[arg(long, value_parser = parse_strategy)]
    strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem for the prepared set
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Path stem of the training window set
    #[arg(long)]
    train: PathBuf,
    /// fcn, resnet, lstm, or inceptiontime
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    /// Imbalance strategy applied before or during training
    #[arg(long, value_parser = parse_strategy, default_value = "none")]
    augment: Strategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Detector artifact output path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Detector artifact from `train`
    #[arg(long)]
    detector: PathBuf,
    /// Path stem of the test window set
    #[arg(long)]
    test: PathBuf,
    /// Strategy label stamped into the report row (defaults to the
    /// detector's loss weighting, or "none")
    #[arg(long)]
    strategy: Option<String>,
    /// Where to write the metrics report JSON
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Dataset manifest to prepare and evaluate on
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SPLIT_SEED)]
    seed: u64,
    /// Restrict to specific architectures (repeatable; default all four)
    #[arg(long = "arch", value_parser = parse_arch)]
    architectures: Vec<Architecture>,
    /// Restrict to specific strategies (repeatable; default all six)
    #[arg(long = "strategy", value_parser = parse_strategy)]
    strategies: Vec<Strategy>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Grid report JSON output path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgeGroupArg {
    Elderly80Plus,
    Other,
}

#[derive(Clone, Copy, ValueEnum)]
enum HealthConditionArg {
    Critical,
    Stable,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResourcesArg {
    Limited,
    Ample,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long, value_enum)]
    age_group: AgeGroupArg,
    #[arg(long, value_enum)]
    health_condition: HealthConditionArg,
    /// Compute available on the resident's edge device
    #[arg(long, value_enum)]
    resources: ResourcesArg,
    /// Emit the full decision as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Service TOML config
    #[arg(long)]
    config: PathBuf,
    /// Listen for record lines on this address instead of stdin
    #[arg(long)]
    tcp: Option<String>,
    /// Stop after this many seconds (mostly for smoke tests)
    #[arg(long)]
    duration_s: Option<u64>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Service TOML config
    #[arg(long)]
    config: PathBuf,
    /// Session records file, one reading per line
    #[arg(long)]
    session: PathBuf,
    /// Resident to route the session to
    #[arg(long)]
    resident: String,
    /// Time multiplier; 1.0 replays in real time
    #[arg(long, default_value_t = 60.0)]
    rate: f64,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Preprocess(args) => preprocess(args),
        Command::Augment(args) => augment(args),
        Command::Train(args) => train_cmd(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Report(args) => report(args),
        Command::Select(args) => select(args),
        Command::Serve(args) => serve(args),
        Command::Replay(args) => replay(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let script = match args.buffer_s {
        Some(buffer) => ProtocolScript::new(default_script().entries().to_vec(), buffer)?,
        None => default_script(),
    };
    let sessions = generate_dataset(args.participants, &script, args.difficulty, args.seed)?;
    let falls: usize = sessions.iter().map(|s| s.fall_annotations().count()).sum();
    let seconds: usize = sessions.iter().map(|s| s.timeline().1.len()).sum();
    write_dataset(&args.out, &sessions, args.seed, args.difficulty)?;
    println!(
        "wrote {} sessions ({seconds} readings, {falls} falls) to {}",
        sessions.len(),
        args.out.join("manifest.json").display()
    );
    Ok(())
}

fn preprocess(args: PreprocessArgs) -> Result<()> {
    let sessions = load_dataset(&args.data)?;
    let (windows, dropped_falls) = windows_from_sessions(&sessions)?;
    let split = stratified_split(windows, args.train_fraction, args.seed)?;
    let stats = fit_standardizer(&split.train, "train")?;
    let train = WindowSet {
        windows: apply_standardizer(&stats, &split.train),
        stats: Some(stats.clone()),
        role: "train".to_string(),
        dropped_falls,
    };
    let test = WindowSet {
        windows: apply_standardizer(&stats, &split.test),
        stats: Some(stats),
        role: "test".to_string(),
        dropped_falls,
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    save_window_set(&args.out.join("train"), &train)?;
    save_window_set(&args.out.join("test"), &test)?;
    let (train_adl, train_falls) = train.class_counts();
    let (test_adl, test_falls) = test.class_counts();
    println!(
        "train: {train_adl} ADL / {train_falls} fall; test: {test_adl} ADL / {test_falls} fall; \
         dropped boundary falls: {dropped_falls}"
    );
    println!("wrote {}/{{train,test}}.{{fwin,meta.json}}", args.out.display());
    Ok(())
}

fn augment(args: AugmentArgs) -> Result<()> {
    let set = load_window_set(&args.train)?;
    let (before_adl, before_falls) = set.class_counts();
    let (prepared, config) = apply_strategy(&set, args.strategy, &TrainConfig::default(), args.seed)?;
    save_window_set(&args.out, &prepared)?;
    let (adl, falls) = prepared.class_counts();
    println!(
        "{}: {before_adl}/{before_falls} ADL/fall -> {adl}/{falls}, wrote {}",
        args.strategy,
        args.out.display()
    );
    if let Some(w) = &config.class_weights {
        println!(
            "loss weights: adl {:.6}, fall {:.6} (focal gamma {})",
            w.adl, w.fall, config.gamma
        );
    }
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let set = load_window_set(&args.train)?;
    let mut base = TrainConfig {
        seed: args.seed,
        ..TrainConfig::default()
    };
    if let Some(e) = args.epochs {
        base.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        base.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        base.batch_size = b;
    }
    if let Some(w) = args.weight_decay {
        base.weight_decay = w;
    }
    let epochs = base.epochs;
    let mut detector = train_with_strategy(&set, args.arch, args.augment, &base, args.seed)?;
    detector.save(&args.out)?;
    println!(
        "trained {} on {} windows ({} strategy, {epochs} epochs), wrote {}",
        args.arch,
        set.windows.len(),
        args.augment,
        args.out.display()
    );
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut detector = TrainedDetector::load(&args.detector)?;
    let set = load_window_set(&args.test)?;
    let label = args.strategy.unwrap_or_else(|| {
        match detector.config.class_weights.as_ref().map(|w| w.method) {
            Some(WeightMethod::Ins) => "ins".to_string(),
            Some(WeightMethod::Ens) => "ens".to_string(),
            None => "none".to_string(),
        }
    });
    let report = evaluate_detector(&mut detector, &set, &label)?;
    let cm = &report.confusion;
    println!(
        "{} / {} on {} windows: tp {} fp {} tn {} fn {}",
        report.architecture,
        report.strategy,
        set.windows.len(),
        cm.true_positives,
        cm.false_positives,
        cm.true_negatives,
        cm.false_negatives
    );
    println!(
        "sensitivity {}  specificity {}  f1 {}  balanced accuracy {}",
        fmt_metric(report.sensitivity),
        fmt_metric(report.specificity),
        fmt_metric(report.f1),
        fmt_metric(report.balanced_accuracy)
    );
    if let Some(path) = args.report {
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn render_table(title: &str, strategies: &[String], architectures: &[String], cells: &[Vec<Option<f64>>]) -> String {
    let name_w = architectures
        .iter()
        .map(|a| a.len())
        .max()
        .unwrap_or(0)
        .max(4);
    let mut out = format!("{title}\n{:name_w$}", "");
    for s in strategies {
        out.push_str(&format!("  {s:>7}"));
    }
    out.push('\n');
    for (a, row) in architectures.iter().zip(cells) {
        out.push_str(&format!("{a:name_w$}"));
        for cell in row {
            match cell {
                Some(v) => out.push_str(&format!("  {v:>7.4}")),
                None => out.push_str(&format!("  {:>7}", "n/a")),
            }
        }
        out.push('\n');
    }
    out
}

fn report(args: ReportArgs) -> Result<()> {
    let sessions = load_dataset(&args.data)?;
    let data = prepare_dataset(&sessions, args.seed)?;
    let mut train = grid_train_config(args.seed);
    if let Some(e) = args.epochs {
        train.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        train.learning_rate = lr;
    }
    let spec = GridSpec {
        architectures: if args.architectures.is_empty() {
            Architecture::ALL.to_vec()
        } else {
            args.architectures
        },
        strategies: if args.strategies.is_empty() {
            Strategy::ALL.to_vec()
        } else {
            args.strategies
        },
        train,
        augment_seed: args.seed,
    };
    let report = run_grid(&data, &spec)?;
    let tables = &report.tables;
    print!(
        "{}",
        render_table("f1 (sensitivity/specificity)", &tables.strategies, &tables.architectures, &tables.f1)
    );
    print!(
        "{}",
        render_table("balanced accuracy", &tables.strategies, &tables.architectures, &tables.balanced_accuracy)
    );
    for d in &report.deviations {
        println!("deviation from reference config: {d}");
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn select(args: SelectArgs) -> Result<()> {
    let context = ResidentContext::new(
        match args.age_group {
            AgeGroupArg::Elderly80Plus => AgeGroup::Elderly80Plus,
            AgeGroupArg::Other => AgeGroup::Other,
        },
        match args.health_condition {
            HealthConditionArg::Critical => HealthCondition::Critical,
            HealthConditionArg::Stable => HealthCondition::Stable,
        },
        match args.resources {
            ResourcesArg::Limited => ResourceAvailability::Limited,
            ResourcesArg::Ample => ResourceAvailability::Ample,
        },
    );
    let decision = select_model(context, None);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&decision)?);
    } else {
        println!("architecture: {}", decision.architecture);
        println!("rationale: {}", decision.rationale);
    }
    Ok(())
}

fn print_placements(config: &ServiceConfig) {
    for r in &config.residents {
        let qos = r.qos.clone().unwrap_or_else(|| config.qos.clone());
        let decision = select_model(r.context(), Some(qos));
        println!(
            "resident {} at {}: {} ({})",
            r.id,
            r.location(),
            decision.architecture,
            decision.rationale
        );
    }
}

fn finish(outcome: fallwatch_core::service::ServiceOutcome) -> Result<()> {
    for alert in &outcome.alerts {
        println!(
            "alert: resident {} ts {} p {:.3} ({}, {:.1} ms)",
            alert.resident,
            alert.timestamp,
            alert.probability,
            alert.architecture,
            alert.latency_seconds * 1e3
        );
    }
    println!("{}", serde_json::to_string_pretty(&outcome.metrics)?);
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let config = ServiceConfig::load(&args.config)?;
    print_placements(&config);
    let shutdown = Arc::new(AtomicBool::new(false));
    if let Some(seconds) = args.duration_s {
        let flag = Arc::clone(&shutdown);
        std::thread::spawn(move || {
            std::thread::sleep(std::time::Duration::from_secs(seconds));
            flag.store(true, Ordering::Relaxed);
        });
    }
    let source = match args.tcp {
        Some(bind) => InputSource::Tcp { bind },
        None => InputSource::Stdin,
    };
    finish(run_service(&config, source, &shutdown)?)
}

fn replay(args: ReplayArgs) -> Result<()> {
    let config = ServiceConfig::load(&args.config)?;
    print_placements(&config);
    let shutdown = Arc::new(AtomicBool::new(false));
    let source = InputSource::Replay {
        session: args.session,
        resident: args.resident,
        rate: args.rate,
    };
    finish(run_service(&config, source, &shutdown)?)
}
