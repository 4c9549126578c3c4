//! The four fall-detection classifiers and their shared training loop.
//!
//! Each architecture is a small time-series network over standardized 8 x 4
//! windows: FCN and ResNet from the convolutional TSC baselines, a two-layer
//! LSTM, and a single InceptionTime network. Training minimizes an (optionally
//! class-weighted, optionally focal) softmax cross-entropy with Adam; a
//! trained detector carries its standardization stats and the fingerprint of
//! the windows it was fitted on, and refuses to score data prepared any
//! other way.

mod nets;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, ArtifactError};
use crate::data::{Category, CHANNELS};
use crate::imbalance::ClassWeights;
use crate::nn::{focal_loss, softmax_rows, Adam, FocalLossSpec, Parameterized};
use crate::preprocess::{StandardizationStats, WindowSet, WINDOW_LEN};

use nets::{batch_windows, FcnNet, InceptionNet, LstmNet, Network, ResNetNet};

const DETECTOR_MAGIC: &[u8; 4] = b"FDET";
const DETECTOR_VERSION: u32 = 1;

/// Fall probability at or above which a window is classified as a fall.
pub const FALL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown architecture `{name}`")]
    UnknownArchitecture { name: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set has no {class} windows and no class weights were supplied")]
    MissingClass { class: &'static str },
    #[error("window set is not standardized")]
    NotStandardized,
    #[error("training loss became non-finite in epoch {epoch}")]
    DivergedTraining { epoch: usize },
    #[error("expected {expected_rows}x{expected_cols} windows, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("standardization stats do not match the stats the detector was trained with")]
    StatsMismatch,
    #[error("invalid training config: {reason}")]
    InvalidConfig { reason: String },
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// The four classifier families compared in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Fcn,
    ResNet,
    Lstm,
    InceptionTime,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Fcn,
        Architecture::ResNet,
        Architecture::Lstm,
        Architecture::InceptionTime,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Fcn => "fcn",
            Architecture::ResNet => "resnet",
            Architecture::Lstm => "lstm",
            Architecture::InceptionTime => "inceptiontime",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fcn" => Ok(Architecture::Fcn),
            "resnet" => Ok(Architecture::ResNet),
            "lstm" => Ok(Architecture::Lstm),
            "inceptiontime" => Ok(Architecture::InceptionTime),
            _ => Err(ModelError::UnknownArchitecture { name: s.to_string() }),
        }
    }
}

/// Layer dimensions for every architecture. The defaults are the canonical
/// configurations from the corresponding architecture papers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchShape {
    pub fcn_filters: [usize; 3],
    pub fcn_kernels: [usize; 3],
    pub resnet_filters: [usize; 3],
    pub resnet_kernels: [usize; 3],
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub inception_modules: usize,
    pub inception_residual_every: usize,
    pub inception_bottleneck: usize,
    pub inception_filters: usize,
    pub inception_kernels: [usize; 3],
}

impl Default for ArchShape {
    fn default() -> Self {
        Self {
            fcn_filters: [128, 256, 128],
            fcn_kernels: [8, 5, 3],
            resnet_filters: [64, 128, 128],
            resnet_kernels: [8, 5, 3],
            lstm_hidden: 64,
            lstm_layers: 2,
            inception_modules: 6,
            inception_residual_every: 3,
            inception_bottleneck: 32,
            inception_filters: 32,
            inception_kernels: [10, 20, 40],
        }
    }
}

impl ArchShape {
    fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            self.fcn_filters.as_slice(),
            self.fcn_kernels.as_slice(),
            self.resnet_filters.as_slice(),
            self.resnet_kernels.as_slice(),
            self.inception_kernels.as_slice(),
            &[self.lstm_hidden, self.lstm_layers],
            &[
                self.inception_modules,
                self.inception_residual_every,
                self.inception_bottleneck,
                self.inception_filters,
            ],
        ];
        if dims.iter().any(|d| d.iter().any(|&n| n == 0)) {
            return Err(ModelError::InvalidConfig {
                reason: "all layer dimensions must be positive".into(),
            });
        }
        if self.inception_modules % self.inception_residual_every != 0 {
            return Err(ModelError::InvalidConfig {
                reason: format!(
                    "inception_modules ({}) must be a multiple of inception_residual_every ({})",
                    self.inception_modules, self.inception_residual_every
                ),
            });
        }
        Ok(())
    }
}

/// Optimization hyperparameters. The defaults are the published training
/// setup: Adam at 1e-5 with weight decay 1e-4, batch 64, 100 epochs, plain
/// cross-entropy. Weighted strategies supply `class_weights` and a focal
/// `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Seed for the per-epoch batch shuffle; defaults to `seed` so training
    /// is fully determined by one number, but can be varied independently to
    /// probe batch-order stability.
    pub order_seed: Option<u64>,
    pub class_weights: Option<ClassWeights>,
    pub gamma: f64,
    pub shape: ArchShape,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-5,
            weight_decay: 1e-4,
            epochs: 100,
            seed: 0,
            order_seed: None,
            class_weights: None,
            gamma: 0.0,
            shape: ArchShape::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ModelError::InvalidConfig {
                reason: "batch_size and epochs must be positive".into(),
            });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig {
                reason: format!("learning_rate must be positive, got {}", self.learning_rate),
            });
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(ModelError::InvalidConfig {
                reason: format!("weight_decay must be non-negative, got {}", self.weight_decay),
            });
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(ModelError::InvalidConfig {
                reason: format!("gamma must be non-negative, got {}", self.gamma),
            });
        }
        if let Some(w) = &self.class_weights {
            if !(w.adl.is_finite() && w.fall.is_finite() && w.adl > 0.0 && w.fall > 0.0) {
                return Err(ModelError::InvalidConfig {
                    reason: "class weights must be positive and finite".into(),
                });
            }
        }
        self.shape.validate()
    }

    fn loss_spec(&self) -> FocalLossSpec {
        FocalLossSpec {
            class_weights: self
                .class_weights
                .as_ref()
                .map(|w| w.as_vec())
                .unwrap_or_else(|| vec![1.0, 1.0]),
            gamma: self.gamma,
        }
    }
}

fn build_network(architecture: Architecture, shape: &ArchShape, rng: &mut ChaCha8Rng) -> Network {
    match architecture {
        Architecture::Fcn => Network::Fcn(FcnNet::new(shape, rng)),
        Architecture::ResNet => Network::ResNet(ResNetNet::new(shape, rng)),
        Architecture::Lstm => Network::Lstm(LstmNet::new(shape, rng)),
        Architecture::InceptionTime => Network::Inception(InceptionNet::new(shape, rng)),
    }
}

/// A trained classifier bound to the exact standardization it was fitted
/// under.
#[derive(Debug, Clone)]
pub struct TrainedDetector {
    pub architecture: Architecture,
    pub config: TrainConfig,
    pub stats: StandardizationStats,
    pub train_fingerprint: String,
    /// Mean training loss per epoch, in order.
    pub epoch_losses: Vec<f64>,
    network: Network,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectorMeta {
    architecture: Architecture,
    config: TrainConfig,
    stats: StandardizationStats,
    train_fingerprint: String,
    epoch_losses: Vec<f64>,
}

/// Trains one detector on a standardized training set.
pub fn train(
    architecture: Architecture,
    train: &WindowSet,
    config: &TrainConfig,
) -> Result<TrainedDetector, ModelError> {
    config.validate()?;
    if train.windows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let stats = train.stats.clone().ok_or(ModelError::NotStandardized)?;
    if config.class_weights.is_none() {
        let falls = train.windows.iter().filter(|w| w.label == Category::Fall).count();
        if falls == 0 {
            return Err(ModelError::MissingClass { class: "fall" });
        }
        if falls == train.windows.len() {
            return Err(ModelError::MissingClass { class: "adl" });
        }
    }
    for w in &train.windows {
        check_window_shape(&w.values)?;
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.order_seed.unwrap_or(config.seed));
    let mut network = build_network(architecture, &config.shape, &mut init_rng);
    let mut adam = Adam::new(config.learning_rate, config.weight_decay);
    let spec = config.loss_spec();

    network.set_training(true);
    let n = train.windows.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = batch_windows(chunk.iter().map(|&i| &train.windows[i].values));
            let labels: Vec<usize> = chunk.iter().map(|&i| train.windows[i].class_index()).collect();
            let logits = network.forward(&x);
            let (loss, dlogits) = focal_loss(&logits, &labels, &spec);
            if !loss.is_finite() {
                return Err(ModelError::DivergedTraining { epoch: epoch + 1 });
            }
            network.zero_grads();
            network.backward(&dlogits);
            adam.step(&mut network);
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean = epoch_loss / n as f64;
        log::debug!("{architecture} epoch {}/{}: loss {mean:.6}", epoch + 1, config.epochs);
        epoch_losses.push(mean);
    }
    network.set_training(false);

    Ok(TrainedDetector {
        architecture,
        config: config.clone(),
        stats,
        train_fingerprint: train.fingerprint(),
        epoch_losses,
        network,
    })
}

fn check_window_shape(values: &Array2<f64>) -> Result<(), ModelError> {
    let (rows, cols) = values.dim();
    if rows != WINDOW_LEN || cols != CHANNELS {
        return Err(ModelError::ShapeMismatch {
            expected_rows: WINDOW_LEN,
            expected_cols: CHANNELS,
            rows,
            cols,
        });
    }
    Ok(())
}

/// Classifies one probability with the fixed decision threshold.
pub fn classify(probability: f64) -> Category {
    if probability >= FALL_THRESHOLD {
        Category::Fall
    } else {
        Category::Adl
    }
}

impl TrainedDetector {
    /// Scores a window set standardized with this detector's own stats.
    pub fn predict(&mut self, set: &WindowSet) -> Result<Vec<f64>, ModelError> {
        let stats = set.stats.as_ref().ok_or(ModelError::NotStandardized)?;
        if stats.fingerprint() != self.stats.fingerprint() {
            return Err(ModelError::StatsMismatch);
        }
        let values: Vec<&Array2<f64>> = set.windows.iter().map(|w| &w.values).collect();
        self.score_standardized(&values)
    }

    /// Fall probabilities for windows that are already standardized. The
    /// caller vouches for the stats; `predict` is the checked path.
    pub fn score_standardized(&mut self, values: &[&Array2<f64>]) -> Result<Vec<f64>, ModelError> {
        for v in values {
            check_window_shape(v)?;
        }
        self.network.set_training(false);
        let mut probs = Vec::with_capacity(values.len());
        for chunk in values.chunks(self.config.batch_size.max(1)) {
            let x = batch_windows(chunk.iter().copied());
            let p = softmax_rows(&self.network.forward(&x));
            probs.extend(p.column(1).iter().copied());
        }
        Ok(probs)
    }

    /// Scores a single standardized window tensor.
    pub fn score_one(&mut self, values: &Array2<f64>) -> Result<f64, ModelError> {
        Ok(self.score_standardized(&[values])?[0])
    }

    pub fn param_count(&mut self) -> usize {
        self.network.param_count()
    }

    pub fn save(&mut self, path: &Path) -> Result<(), ModelError> {
        let meta = DetectorMeta {
            architecture: self.architecture,
            config: self.config.clone(),
            stats: self.stats.clone(),
            train_fingerprint: self.train_fingerprint.clone(),
            epoch_losses: self.epoch_losses.clone(),
        };
        let tensors = artifact::snapshot_params(&mut self.network);
        artifact::write_artifact(path, DETECTOR_MAGIC, DETECTOR_VERSION, &meta, &tensors)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (meta, tensors) =
            artifact::read_artifact::<DetectorMeta>(path, DETECTOR_MAGIC, DETECTOR_VERSION)?;
        meta.config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(meta.config.seed);
        let mut network = build_network(meta.architecture, &meta.config.shape, &mut rng);
        artifact::restore_params(&mut network, &tensors)?;
        network.set_training(false);
        Ok(Self {
            architecture: meta.architecture,
            config: meta.config,
            stats: meta.stats,
            train_fingerprint: meta.train_fingerprint,
            epoch_losses: meta.epoch_losses,
            network,
        })
    }
}

/// Forward pass at a raw network for shape and gradient tests.
#[cfg(test)]
pub(crate) fn raw_network(architecture: Architecture, shape: &ArchShape, seed: u64) -> Network {
    build_network(architecture, shape, &mut ChaCha8Rng::seed_from_u64(seed))
}
