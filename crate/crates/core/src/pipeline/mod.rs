//! End-to-end orchestration: simulated sessions to windows, splits, and
//! standardization; imbalance strategies applied to a training split; and
//! the architecture-by-strategy evaluation grid behind the comparison
//! tables.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::data::{ActivityLabel, Category, CHANNELS};
use crate::imbalance::{
    augment_to_balance, ens_weights, ins_weights, ClassCounts, EnsConfig, ImbalanceError, Strategy,
};
use crate::metrics::{confusion, GridTables, MetricsError, MetricsReport};
use crate::models::{classify, train, Architecture, ModelError, TrainConfig, TrainedDetector};
use crate::preprocess::{
    apply_standardizer, fit_standardizer, stratified_split, windows_from_sessions, LabeledWindow,
    PreprocessError, WindowSet, WINDOW_LEN,
};
use crate::sim::{
    default_script, generate_dataset, generate_profiles, simulate_session, AnnotatedSession,
    ProtocolScript, ScriptEntry, SimError, DEFAULT_FALL_SECONDS,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Imbalance(#[from] ImbalanceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Focusing exponent used whenever a weighted focal loss is in play.
pub const FOCAL_GAMMA: f64 = 2.0;
/// Train share of the stratified split.
pub const TRAIN_FRACTION: f64 = 0.8;

/// The reference dataset the comparison grid is reported on.
pub const DEFAULT_PARTICIPANTS: usize = 10;
pub const DEFAULT_DIFFICULTY: f64 = 0.5;
pub const DEFAULT_DATASET_SEED: u64 = 7;
pub const DEFAULT_SPLIT_SEED: u64 = 7;

/// Generates the reference dataset: ten participants running the full
/// protocol at difficulty 0.5.
pub fn default_dataset() -> Result<Vec<AnnotatedSession>, PipelineError> {
    Ok(generate_dataset(
        DEFAULT_PARTICIPANTS,
        &default_script(),
        DEFAULT_DIFFICULTY,
        DEFAULT_DATASET_SEED,
    )?)
}

/// A standardized train/test pair ready for training. Both sets carry the
/// stats fitted on the training split alone.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowSet,
    pub test: WindowSet,
    pub split_seed: u64,
}

/// Windows, stratified 80/20 split, and standardization in one step. The
/// dropped-fall count covers extraction over the whole dataset and is
/// recorded on both sets.
pub fn prepare_dataset(
    sessions: &[AnnotatedSession],
    split_seed: u64,
) -> Result<PreparedData, PipelineError> {
    let (windows, dropped) = windows_from_sessions(sessions)?;
    let split = stratified_split(windows, TRAIN_FRACTION, split_seed)?;
    let stats = fit_standardizer(&split.train, "train")?;
    let train = WindowSet {
        windows: apply_standardizer(&stats, &split.train),
        stats: Some(stats.clone()),
        role: "train".to_string(),
        dropped_falls: dropped,
    };
    let test = WindowSet {
        windows: apply_standardizer(&stats, &split.test),
        stats: Some(stats),
        role: "test".to_string(),
        dropped_falls: dropped,
    };
    Ok(PreparedData {
        train,
        test,
        split_seed,
    })
}

/// Applies one imbalance strategy to a training split: the weighting
/// strategies leave the windows alone and set focal-loss weights, the
/// resampling strategies rebuild the windows to class parity and leave the
/// loss plain.
pub fn apply_strategy(
    train: &WindowSet,
    strategy: Strategy,
    base: &TrainConfig,
    seed: u64,
) -> Result<(WindowSet, TrainConfig), PipelineError> {
    let mut config = base.clone();
    config.class_weights = None;
    config.gamma = 0.0;
    let windows = match strategy {
        Strategy::None => train.windows.clone(),
        Strategy::Ins | Strategy::Ens => {
            let counts = ClassCounts::of(&train.windows);
            config.class_weights = Some(match strategy {
                Strategy::Ins => ins_weights(&counts)?,
                _ => ens_weights(&counts, &EnsConfig::default())?,
            });
            config.gamma = FOCAL_GAMMA;
            train.windows.clone()
        }
        resampled => {
            let resampler = resampled
                .resampler()
                .expect("non-weighting strategies resample");
            augment_to_balance(&train.windows, resampler, seed)?
        }
    };
    Ok((
        WindowSet {
            windows,
            stats: train.stats.clone(),
            role: train.role.clone(),
            dropped_falls: train.dropped_falls,
        },
        config,
    ))
}

/// Trains one detector under one strategy.
pub fn train_with_strategy(
    train_set: &WindowSet,
    architecture: Architecture,
    strategy: Strategy,
    base: &TrainConfig,
    augment_seed: u64,
) -> Result<TrainedDetector, PipelineError> {
    let (prepared, config) = apply_strategy(train_set, strategy, base, augment_seed)?;
    Ok(train(architecture, &prepared, &config)?)
}

/// Scores a test split and folds the confusion matrix into a report row.
pub fn evaluate_detector(
    detector: &mut TrainedDetector,
    test: &WindowSet,
    strategy_label: &str,
) -> Result<MetricsReport, PipelineError> {
    let probabilities = detector.predict(test)?;
    let predicted: Vec<Category> = probabilities.iter().map(|&p| classify(p)).collect();
    let truth: Vec<Category> = test.windows.iter().map(|w| w.label).collect();
    let cm = confusion(&truth, &predicted)?;
    Ok(MetricsReport::from_confusion(
        cm,
        detector.architecture.name(),
        strategy_label,
    ))
}

/// The evaluation grid to run: which rows, which columns, and the training
/// configuration shared by every cell.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub architectures: Vec<Architecture>,
    pub strategies: Vec<Strategy>,
    pub train: TrainConfig,
    pub augment_seed: u64,
}

impl GridSpec {
    /// The full four-by-six grid under the given training configuration.
    pub fn full(train: TrainConfig, augment_seed: u64) -> Self {
        GridSpec {
            architectures: Architecture::ALL.to_vec(),
            strategies: Strategy::ALL.to_vec(),
            train,
            augment_seed,
        }
    }
}

/// Everything the `report` command serializes: per-cell reports, the two
/// comparison tables, and any departures from the default training
/// configuration.
#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub train_config: TrainConfig,
    pub augment_seed: u64,
    pub reports: Vec<MetricsReport>,
    pub tables: GridTables,
    pub deviations: Vec<String>,
}

/// Differences between a training configuration and the defaults, phrased
/// for the report's provenance section.
pub fn config_deviations(config: &TrainConfig) -> Vec<String> {
    let reference = TrainConfig::default();
    let mut out = Vec::new();
    if config.learning_rate != reference.learning_rate {
        out.push(format!(
            "learning_rate {} (default {})",
            config.learning_rate, reference.learning_rate
        ));
    }
    if config.epochs != reference.epochs {
        out.push(format!(
            "epochs {} (default {})",
            config.epochs, reference.epochs
        ));
    }
    if config.batch_size != reference.batch_size {
        out.push(format!(
            "batch_size {} (default {})",
            config.batch_size, reference.batch_size
        ));
    }
    if config.weight_decay != reference.weight_decay {
        out.push(format!(
            "weight_decay {} (default {})",
            config.weight_decay, reference.weight_decay
        ));
    }
    out
}

/// Runs the grid. Each strategy's training set is built once and shared by
/// every architecture in that column, so the resamplers (and in particular
/// the generator training behind the GAN column) run once per column.
pub fn run_grid(data: &PreparedData, spec: &GridSpec) -> Result<GridReport, PipelineError> {
    let mut reports = Vec::with_capacity(spec.architectures.len() * spec.strategies.len());
    for &strategy in &spec.strategies {
        log::info!("preparing {strategy} training set");
        let (prepared, config) = apply_strategy(&data.train, strategy, &spec.train, spec.augment_seed)?;
        for &architecture in &spec.architectures {
            log::info!("training {architecture} / {strategy}");
            let mut detector = train(architecture, &prepared, &config)?;
            let report = evaluate_detector(&mut detector, &data.test, strategy.name())?;
            log::info!(
                "{architecture} / {strategy}: f1 {:?}, balanced accuracy {:?}",
                report.f1,
                report.balanced_accuracy
            );
            reports.push(report);
        }
    }
    let architectures: Vec<String> = spec
        .architectures
        .iter()
        .map(|a| a.name().to_string())
        .collect();
    let strategies: Vec<String> = spec.strategies.iter().map(|s| s.name().to_string()).collect();
    let tables = GridTables::from_reports(&reports, &architectures, &strategies);
    Ok(GridReport {
        train_config: spec.train.clone(),
        augment_seed: spec.augment_seed,
        reports,
        tables,
        deviations: config_deviations(&spec.train),
    })
}

/// Reduced configuration for running the full grid in reasonable wall time
/// on one core. The departures from the defaults (fewer epochs, a larger
/// learning rate to compensate) are recorded in the grid report.
pub fn grid_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-4,
        epochs: 1,
        seed,
        ..TrainConfig::default()
    }
}

const SEPARABLE_TRAIN_PER_CLASS: usize = 100;
const SEPARABLE_TEST_PER_CLASS: usize = 50;

/// One toy window drawn from the same value ranges the simulator's profiles
/// cover. Fall windows splice the fall playbook (two impact readings with a
/// 0.55-0.85 m distance step, a floor hold, three seconds getting back up)
/// into an idle stream at a random sliding phase, so every 8-second view
/// that still shows an impact reading is represented. ADL windows are either
/// plain idle monitoring or the post-impact debris (hold and recovery with
/// the impact readings already slid out), which keeps "lying on the floor"
/// from being mistaken for the fall itself.
fn separable_window(rng: &mut ChaCha8Rng, fall: bool, index: usize) -> LabeledWindow {
    let hr0 = rng.gen_range(58.0..80.0);
    let br0 = rng.gen_range(11.0..18.0);
    let d0 = rng.gen_range(1.3..2.1);
    let step = rng.gen_range(0.55..0.85);
    let hold = 4 + rng.gen_range(0..2i64);
    // Seconds since the first impact reading, measured at the newest row:
    // phase 0 shows only that reading, phase 8 has it already slid out but
    // keeps the second one. Larger phases are all-debris and labeled ADL.
    let phase = if fall {
        rng.gen_range(0..=WINDOW_LEN as i64)
    } else if rng.gen_bool(0.4) {
        rng.gen_range(WINDOW_LEN as i64 + 1..=2 * WINDOW_LEN as i64)
    } else {
        i64::MIN
    };
    let mut values = Array2::zeros((WINDOW_LEN, CHANNELS));
    for t in 0..WINDOW_LEN {
        let hr_n: f64 = rng.sample(StandardNormal);
        let br_n: f64 = rng.sample(StandardNormal);
        let d_n: f64 = rng.sample(StandardNormal);
        // Position in the fall playbook; negative or past-the-end means
        // ordinary idle monitoring.
        let k = phase.saturating_add(t as i64 - (WINDOW_LEN as i64 - 1));
        let (d_off, ps, hr_delta, br_delta) = if k == 0 {
            (0.6 * step, 4.0, 10.0, 2.0)
        } else if k == 1 {
            (step, 4.0, 10.0, 2.0)
        } else if (2..2 + hold).contains(&k) {
            let ps = if rng.gen_bool(0.5) { 0.0 } else { 1.0 };
            (step, ps, 10.0 - (k - 2) as f64, 2.0)
        } else if (2 + hold..2 + hold + 3).contains(&k) {
            let r = (k - 2 - hold) as f64;
            (step * (1.0 - r / 2.0), 3.0, 6.0 - 2.0 * r, 0.0)
        } else {
            let ps = if rng.gen_bool(0.15) { 2.0 } else { 1.0 };
            (0.0, ps, 0.0, 0.0)
        };
        values[[t, 0]] = (hr0 + hr_delta + 1.2 * hr_n).clamp(40.0, 160.0);
        values[[t, 1]] = (br0 + br_delta + 0.5 * br_n).clamp(5.0, 40.0);
        values[[t, 2]] = (d0 + d_off + 0.025 * d_n).clamp(1.0, 3.0);
        values[[t, 3]] = ps;
    }
    LabeledWindow {
        values,
        label: if fall { Category::Fall } else { Category::Adl },
        code: if fall {
            ActivityLabel::Fst
        } else {
            ActivityLabel::Sta
        },
        session_id: "separable".to_string(),
        start_time: index as i64,
    }
}

/// A balanced, cleanly separable two-class benchmark: 200 training and 100
/// test windows where falls, and only falls, contain a continued-movement
/// reading, so a single threshold on the state channel's per-window maximum
/// already tells the classes apart. Models that cannot reach high accuracy
/// here are broken, not under-provisioned.
pub fn separable_dataset(seed: u64) -> (WindowSet, WindowSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let build = |n_per_class: usize, role: &str, rng: &mut ChaCha8Rng| {
        let mut windows = Vec::with_capacity(2 * n_per_class);
        for i in 0..2 * n_per_class {
            windows.push(separable_window(rng, i % 2 == 1, i));
        }
        (windows, role.to_string())
    };
    let (train_windows, train_role) = build(SEPARABLE_TRAIN_PER_CLASS, "train", &mut rng);
    let (test_windows, test_role) = build(SEPARABLE_TEST_PER_CLASS, "test", &mut rng);
    let stats = fit_standardizer(&train_windows, "train").expect("non-empty training windows");
    let train = WindowSet {
        windows: apply_standardizer(&stats, &train_windows),
        stats: Some(stats.clone()),
        role: train_role,
        dropped_falls: 0,
    };
    let test = WindowSet {
        windows: apply_standardizer(&stats, &test_windows),
        stats: Some(stats),
        role: test_role,
        dropped_falls: 0,
    };
    (train, test)
}

/// Protocol with exactly three isolated falls from standing and nothing
/// else, padded with `buffer_s` seconds of idle recovery around each one.
pub fn isolated_fall_script(buffer_s: usize) -> Result<ProtocolScript, PipelineError> {
    Ok(ProtocolScript::new(
        vec![ScriptEntry {
            label: ActivityLabel::Fst,
            duration_s: DEFAULT_FALL_SECONDS,
            repetitions: 3,
        }],
        buffer_s,
    )?)
}

/// A clean (difficulty 0) session with three well-separated falls, the
/// workload the replay path is checked against.
pub fn fall_replay_session(
    seed: u64,
    buffer_s: usize,
) -> Result<AnnotatedSession, PipelineError> {
    let profile = generate_profiles(1, seed).remove(0);
    let script = isolated_fall_script(buffer_s)?;
    Ok(simulate_session(&profile, &script, 0.0, seed)?)
}
