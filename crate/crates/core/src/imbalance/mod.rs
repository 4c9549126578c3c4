//! The five strategies for the 35:1 ADL/fall imbalance: two weighted losses
//! (INS, ENS), two resamplers (random oversampling, SMOTE), and a
//! transformer GAN that synthesizes minority windows.
//!
//! Weighted strategies leave the data alone and emit [`ClassWeights`] for
//! the training loss; resamplers return a new training set with the class
//! counts at parity. Everything takes a seed and is deterministic.

mod gan;

pub use gan::{train_ts_generator, GanConfig, GeneratorArtifact};

use crate::artifact::ArtifactError;
use crate::data::Category;
use crate::nn::{focal_loss, FocalLossSpec};
use crate::preprocess::LabeledWindow;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImbalanceError {
    #[error("class {class} has zero samples")]
    ZeroCount { class: &'static str },
    #[error("training set is missing the {class} class")]
    MissingClass { class: &'static str },
    #[error("SMOTE needs more than {k} minority windows, found {minority}")]
    TooFewMinority { minority: usize, k: usize },
    #[error("GAN training needs at least {need} fall windows, found {have}")]
    InsufficientFalls { have: usize, need: usize },
    #[error("GAN training diverged at epoch {epoch} ({which} loss non-finite)")]
    DivergedTraining { epoch: usize, which: &'static str },
    #[error("invalid GAN config: {reason}")]
    InvalidConfig { reason: String },
    #[error("{strategy} does not resample; it only produces class weights")]
    NotAResampler { strategy: Strategy },
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// The six columns of the comparison tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    Ins,
    Ens,
    Ros,
    Smote,
    Gan,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::None,
        Strategy::Ins,
        Strategy::Ens,
        Strategy::Ros,
        Strategy::Smote,
        Strategy::Gan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Ins => "ins",
            Strategy::Ens => "ens",
            Strategy::Ros => "ros",
            Strategy::Smote => "smote",
            Strategy::Gan => "gan",
        }
    }

    /// The resampling strategies rebuild the training set; the rest do not.
    pub fn resampler(self) -> Option<ResamplingStrategy> {
        match self {
            Strategy::Ros => Some(ResamplingStrategy::Ros),
            Strategy::Smote => Some(ResamplingStrategy::Smote),
            Strategy::Gan => Some(ResamplingStrategy::Gan),
            _ => None,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResamplingStrategy {
    Ros,
    Smote,
    Gan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMethod {
    Ins,
    Ens,
}

/// Per-class loss weights, normalized so the count-weighted mean is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub adl: f64,
    pub fall: f64,
    pub method: WeightMethod,
}

impl ClassWeights {
    pub fn weight_for(&self, category: Category) -> f64 {
        match category {
            Category::Adl => self.adl,
            Category::Fall => self.fall,
        }
    }

    /// Weights indexed by class (ADL = 0, Fall = 1), the layout the loss
    /// functions take.
    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.adl, self.fall]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub adl: usize,
    pub fall: usize,
}

impl ClassCounts {
    pub fn of(windows: &[LabeledWindow]) -> Self {
        let fall = windows
            .iter()
            .filter(|w| w.label == Category::Fall)
            .count();
        ClassCounts {
            adl: windows.len() - fall,
            fall,
        }
    }

    fn checked(&self) -> Result<(), ImbalanceError> {
        if self.adl == 0 {
            return Err(ImbalanceError::ZeroCount { class: "ADL" });
        }
        if self.fall == 0 {
            return Err(ImbalanceError::ZeroCount { class: "fall" });
        }
        Ok(())
    }
}

/// ENS hyperparameters; the defaults mirror the evaluation setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsConfig {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for EnsConfig {
    fn default() -> Self {
        EnsConfig {
            beta: 0.9999,
            gamma: 2.0,
        }
    }
}

impl EnsConfig {
    pub fn validate(&self) -> Result<(), ImbalanceError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ImbalanceError::InvalidConfig {
                reason: format!("beta must lie in (0, 1), got {}", self.beta),
            });
        }
        if self.gamma < 0.0 {
            return Err(ImbalanceError::InvalidConfig {
                reason: format!("gamma must be >= 0, got {}", self.gamma),
            });
        }
        Ok(())
    }
}

/// Scales raw per-class weights so Σ n_c w_c / Σ n_c = 1.
fn normalize(raw_adl: f64, raw_fall: f64, counts: &ClassCounts, method: WeightMethod) -> ClassWeights {
    let n = (counts.adl + counts.fall) as f64;
    let scale = n / (counts.adl as f64 * raw_adl + counts.fall as f64 * raw_fall);
    ClassWeights {
        adl: raw_adl * scale,
        fall: raw_fall * scale,
        method,
    }
}

/// Inverse of Number of Samples: weight_c ∝ 1/n_c.
pub fn ins_weights(counts: &ClassCounts) -> Result<ClassWeights, ImbalanceError> {
    counts.checked()?;
    Ok(normalize(
        1.0 / counts.adl as f64,
        1.0 / counts.fall as f64,
        counts,
        WeightMethod::Ins,
    ))
}

/// Effective Number of Samples: weight_c ∝ (1 − β) / (1 − β^{n_c}).
pub fn ens_weights(counts: &ClassCounts, config: &EnsConfig) -> Result<ClassWeights, ImbalanceError> {
    counts.checked()?;
    config.validate()?;
    let effective = |n: usize| (1.0 - config.beta.powi(n as i32)) / (1.0 - config.beta);
    Ok(normalize(
        1.0 / effective(counts.adl),
        1.0 / effective(counts.fall),
        counts,
        WeightMethod::Ens,
    ))
}

/// Class-balanced focal loss over two-class logits; returns the mean loss
/// and its logit gradient.
pub fn weighted_focal_loss(
    logits: &Array2<f64>,
    labels: &[usize],
    weights: &ClassWeights,
    gamma: f64,
) -> (f64, Array2<f64>) {
    let spec = FocalLossSpec {
        class_weights: weights.as_vec(),
        gamma,
    };
    focal_loss(logits, labels, &spec)
}

fn split_by_class(train: &[LabeledWindow]) -> Result<(Vec<usize>, Vec<usize>), ImbalanceError> {
    let mut adl = Vec::new();
    let mut fall = Vec::new();
    for (i, w) in train.iter().enumerate() {
        match w.label {
            Category::Adl => adl.push(i),
            Category::Fall => fall.push(i),
        }
    }
    if adl.is_empty() {
        return Err(ImbalanceError::MissingClass { class: "ADL" });
    }
    if fall.is_empty() {
        return Err(ImbalanceError::MissingClass { class: "fall" });
    }
    Ok((adl, fall))
}

/// Duplicates random minority windows (with replacement) until the classes
/// are the same size. Copies are exact; the majority class is untouched.
pub fn random_oversample(
    train: &[LabeledWindow],
    seed: u64,
) -> Result<Vec<LabeledWindow>, ImbalanceError> {
    let (adl, fall) = split_by_class(train)?;
    let (minority, majority) = if fall.len() <= adl.len() {
        (fall, adl)
    } else {
        (adl, fall)
    };
    let mut out = train.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..majority.len() - minority.len() {
        let pick = minority[rng.gen_range(0..minority.len())];
        out.push(train[pick].clone());
    }
    Ok(out)
}

pub const SMOTE_DEFAULT_K: usize = 5;

/// Where a SMOTE window came from: indices into the minority windows (in
/// training-set order) and the interpolation weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteSynthesis {
    pub base: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

/// Interpolates new minority windows between nearest neighbors until the
/// classes balance: x + λ·(x_nn − x) with λ ~ U[0, 1), Euclidean distance on
/// the flattened 32 values.
pub fn smote(
    train: &[LabeledWindow],
    k_neighbors: usize,
    seed: u64,
) -> Result<(Vec<LabeledWindow>, Vec<SmoteSynthesis>), ImbalanceError> {
    let (adl, fall) = split_by_class(train)?;
    let (minority, majority) = if fall.len() <= adl.len() {
        (fall, adl)
    } else {
        (adl, fall)
    };
    if k_neighbors < 1 || minority.len() <= k_neighbors {
        return Err(ImbalanceError::TooFewMinority {
            minority: minority.len(),
            k: k_neighbors,
        });
    }

    let flat: Vec<Vec<f64>> = minority
        .iter()
        .map(|&i| train[i].values.iter().copied().collect())
        .collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    // k nearest minority neighbors per minority window, ties broken by index.
    let neighbors: Vec<Vec<usize>> = (0..flat.len())
        .map(|i| {
            let mut order: Vec<usize> = (0..flat.len()).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                dist(&flat[i], &flat[a])
                    .total_cmp(&dist(&flat[i], &flat[b]))
                    .then(a.cmp(&b))
            });
            order.truncate(k_neighbors);
            order
        })
        .collect();

    let mut out = train.to_vec();
    let mut synthesis = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..majority.len() - minority.len() {
        let base = rng.gen_range(0..minority.len());
        let neighbor = neighbors[base][rng.gen_range(0..k_neighbors)];
        let lambda: f64 = rng.gen();
        let bw = &train[minority[base]];
        let nw = &train[minority[neighbor]];
        let values = &bw.values + &(lambda * (&nw.values - &bw.values));
        out.push(LabeledWindow {
            values,
            label: bw.label,
            code: bw.code,
            session_id: format!("smote:{}", bw.session_id),
            start_time: bw.start_time,
        });
        synthesis.push(SmoteSynthesis {
            base,
            neighbor,
            lambda,
        });
    }
    Ok((out, synthesis))
}

/// Rebalances the training split to class parity with the chosen resampler.
/// The GAN path trains a fresh generator on the fall windows.
pub fn augment_to_balance(
    train: &[LabeledWindow],
    strategy: ResamplingStrategy,
    seed: u64,
) -> Result<Vec<LabeledWindow>, ImbalanceError> {
    match strategy {
        ResamplingStrategy::Ros => random_oversample(train, seed),
        ResamplingStrategy::Smote => {
            let counts = ClassCounts::of(train);
            let minority = counts.fall.min(counts.adl);
            let k = SMOTE_DEFAULT_K.min(minority.saturating_sub(1));
            if k == 0 {
                return Err(ImbalanceError::TooFewMinority { minority, k: 1 });
            }
            Ok(smote(train, k, seed)?.0)
        }
        ResamplingStrategy::Gan => {
            let falls: Vec<LabeledWindow> = train
                .iter()
                .filter(|w| w.label == Category::Fall)
                .cloned()
                .collect();
            let mut artifact = train_ts_generator(
                &falls,
                GanConfig {
                    seed,
                    ..GanConfig::default()
                },
            )?;
            augment_with_generator(train, &mut artifact, seed)
        }
    }
}

/// Balances with fall windows sampled from an already-trained generator.
pub fn augment_with_generator(
    train: &[LabeledWindow],
    artifact: &mut GeneratorArtifact,
    seed: u64,
) -> Result<Vec<LabeledWindow>, ImbalanceError> {
    let (adl, fall) = split_by_class(train)?;
    if fall.len() >= adl.len() {
        return Ok(train.to_vec());
    }
    let deficit = adl.len() - fall.len();
    let samples = artifact.sample_windows(deficit, seed);
    let mut out = train.to_vec();
    for (i, values) in samples.into_iter().enumerate() {
        // Reuse real fall codes round-robin so per-code stats stay sane.
        let donor = &train[fall[i % fall.len()]];
        out.push(LabeledWindow {
            values,
            label: Category::Fall,
            code: donor.code,
            session_id: "ttsgan".to_string(),
            start_time: i as i64,
        });
    }
    Ok(out)
}
