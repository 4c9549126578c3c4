//! Statistical feature vectors and the cosine-similarity fidelity score
//! used to judge synthetic fall windows.

use super::MetricsError;
use crate::data::CHANNELS;
use crate::preprocess::LabeledWindow;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const STATS_PER_CHANNEL: usize = 7;
pub const FEATURE_DIM: usize = STATS_PER_CHANNEL * CHANNELS;

/// 7 statistics per channel, channel-major:
/// (mean, median, std, variance, rms, min, max) for hr, then br, d, ps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn channel_stats(values: &[f64]) -> [f64; STATS_PER_CHANNEL] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = variance.sqrt();
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    [mean, median, std, variance, rms, min, max]
}

/// Feature vector of a T×4 window (T ≥ 1; the pipeline uses T = 8).
pub fn feature_vector(window: &Array2<f64>) -> FeatureVector {
    assert_eq!(window.ncols(), CHANNELS, "expected a T x 4 window");
    assert!(window.nrows() >= 1, "expected at least one timestep");
    let mut out = [0.0; FEATURE_DIM];
    for c in 0..CHANNELS {
        let column: Vec<f64> = window.column(c).iter().copied().collect();
        out[c * STATS_PER_CHANNEL..(c + 1) * STATS_PER_CHANNEL]
            .copy_from_slice(&channel_stats(&column));
    }
    FeatureVector(out)
}

pub fn cosine_similarity(fa: &FeatureVector, fb: &FeatureVector) -> Result<f64, MetricsError> {
    let dot: f64 = fa.0.iter().zip(&fb.0).map(|(a, b)| a * b).sum();
    let na: f64 = fa.0.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = fb.0.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok(dot / (na * nb))
}

/// How real windows are matched to synthetic ones before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Pair index i with index i over the first min(|real|, |synth|) windows.
    Identity,
    /// Seeded random one-to-one matchings, averaged over `rounds` draws.
    Random { rounds: usize },
}

impl Default for Pairing {
    fn default() -> Self {
        Pairing::Random { rounds: 10 }
    }
}

/// Mean cosine similarity between paired real/synthetic feature vectors.
pub fn avg_cosine_similarity(
    real: &[LabeledWindow],
    synthetic: &[LabeledWindow],
    pairing: Pairing,
    seed: u64,
) -> Result<f64, MetricsError> {
    if real.is_empty() || synthetic.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let fr: Vec<FeatureVector> = real.iter().map(|w| feature_vector(&w.values)).collect();
    let fs: Vec<FeatureVector> = synthetic
        .iter()
        .map(|w| feature_vector(&w.values))
        .collect();
    let n = fr.len().min(fs.len());

    let mean_over = |ri: &[usize], si: &[usize]| -> Result<f64, MetricsError> {
        let mut acc = 0.0;
        for (&a, &b) in ri.iter().zip(si) {
            acc += cosine_similarity(&fr[a], &fs[b])?;
        }
        Ok(acc / n as f64)
    };

    match pairing {
        Pairing::Identity => {
            let idx: Vec<usize> = (0..n).collect();
            mean_over(&idx, &idx)
        }
        Pairing::Random { rounds } => {
            assert!(rounds > 0, "need at least one pairing round");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            for _ in 0..rounds {
                let mut ri: Vec<usize> = (0..fr.len()).collect();
                let mut si: Vec<usize> = (0..fs.len()).collect();
                ri.shuffle(&mut rng);
                si.shuffle(&mut rng);
                acc += mean_over(&ri[..n], &si[..n])?;
            }
            Ok(acc / rounds as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActivityLabel, Category};

    fn window_from(f: impl Fn(usize, usize) -> f64) -> Array2<f64> {
        Array2::from_shape_fn((8, 4), |(r, c)| f(r, c))
    }

    #[test]
    fn constant_channel_stats() {
        let fv = feature_vector(&window_from(|_, _| 2.0));
        for c in 0..4 {
            let s = &fv.0[c * 7..(c + 1) * 7];
            assert_eq!(s, &[2.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
        }
    }

    #[test]
    fn one_to_eight_channel_stats() {
        let fv = feature_vector(&window_from(|r, _| (r + 1) as f64));
        let s = &fv.0[..7];
        assert!((s[0] - 4.5).abs() < 1e-12); // mean
        assert!((s[1] - 4.5).abs() < 1e-12); // median = (4 + 5) / 2
        assert!((s[2] - 5.25f64.sqrt()).abs() < 1e-12); // population std
        assert!((s[3] - 5.25).abs() < 1e-12); // population variance
        assert!((s[4] - 25.5f64.sqrt()).abs() < 1e-12); // rms = sqrt(204/8)
        assert_eq!(s[5], 1.0);
        assert_eq!(s[6], 8.0);
    }

    #[test]
    fn negating_a_channel_flips_odd_stats_only() {
        let base = window_from(|r, c| ((r * 4 + c) as f64 * 0.7).sin() + 0.3);
        let mut negated = base.clone();
        for v in negated.column_mut(2).iter_mut() {
            *v = -*v;
        }
        let a = feature_vector(&base);
        let b = feature_vector(&negated);
        let sa = &a.0[14..21];
        let sb = &b.0[14..21];
        assert!((sa[0] + sb[0]).abs() < 1e-12); // mean negates
        assert!((sa[1] + sb[1]).abs() < 1e-12); // median negates
        assert!((sa[2] - sb[2]).abs() < 1e-12); // std preserved
        assert!((sa[3] - sb[3]).abs() < 1e-12); // variance preserved
        assert!((sa[4] - sb[4]).abs() < 1e-12); // rms preserved
        assert!((sa[5] + sb[6]).abs() < 1e-12); // min <-> -max
        assert!((sa[6] + sb[5]).abs() < 1e-12);
        // Other channels untouched.
        assert_eq!(a.0[..14], b.0[..14]);
    }

    #[test]
    fn cosine_reference_values() {
        let mut a = [0.0; FEATURE_DIM];
        let mut b = [0.0; FEATURE_DIM];
        a[0] = 1.0;
        b[1] = 1.0;
        let (fa, fb) = (FeatureVector(a), FeatureVector(b));
        assert_eq!(cosine_similarity(&fa, &fa).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&fa, &fb).unwrap(), 0.0);

        let mut c = [0.0; FEATURE_DIM];
        c[0] = 1.0;
        c[1] = 1.0;
        let fc = FeatureVector(c);
        assert!((cosine_similarity(&fc, &fa).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_scale_invariant_and_rejects_zero() {
        let fa = feature_vector(&window_from(|r, c| (r as f64 + 1.0) * (c as f64 + 0.5)));
        let fb = feature_vector(&window_from(|r, c| ((r + c) as f64 * 0.31).cos()));
        let mut scaled = fa.clone();
        for v in scaled.0.iter_mut() {
            *v *= 7.25;
        }
        let plain = cosine_similarity(&fa, &fb).unwrap();
        let stretched = cosine_similarity(&scaled, &fb).unwrap();
        assert!((plain - stretched).abs() < 1e-12);

        let zero = FeatureVector([0.0; FEATURE_DIM]);
        assert!(matches!(
            cosine_similarity(&zero, &fa),
            Err(MetricsError::ZeroVector)
        ));
    }

    fn windows(n: usize, offset: f64) -> Vec<LabeledWindow> {
        (0..n)
            .map(|i| LabeledWindow {
                values: window_from(|r, c| {
                    offset + (i as f64 * 0.4 + r as f64 * 0.9 + c as f64).sin() + 2.0
                }),
                label: Category::Fall,
                code: ActivityLabel::Fst,
                session_id: "s".to_string(),
                start_time: i as i64,
            })
            .collect()
    }

    #[test]
    fn identity_pairing_of_a_copy_is_one() {
        let real = windows(12, 0.0);
        let v = avg_cosine_similarity(&real, &real.clone(), Pairing::Identity, 1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_pairing_is_seed_deterministic() {
        let real = windows(15, 0.0);
        let synth = windows(11, 0.05);
        let a = avg_cosine_similarity(&real, &synth, Pairing::default(), 42).unwrap();
        let b = avg_cosine_similarity(&real, &synth, Pairing::default(), 42).unwrap();
        let c = avg_cosine_similarity(&real, &synth, Pairing::default(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a > 0.9, "near-copies should score high, got {a}");
    }

    #[test]
    fn empty_sets_are_rejected() {
        let real = windows(3, 0.0);
        assert!(matches!(
            avg_cosine_similarity(&real, &[], Pairing::Identity, 0),
            Err(MetricsError::EmptySet)
        ));
        assert!(matches!(
            avg_cosine_similarity(&[], &real, Pairing::Identity, 0),
            Err(MetricsError::EmptySet)
        ));
    }

    #[test]
    fn standardized_set_has_near_zero_mean_slots() {
        use crate::preprocess::{apply_standardizer, fit_standardizer};
        let raw = windows(40, 0.0);
        let stats = fit_standardizer(&raw, "train").unwrap();
        let std = apply_standardizer(&stats, &raw);
        // Concatenate every standardized window along time.
        let mut all = Array2::<f64>::zeros((std.len() * 8, 4));
        for (i, w) in std.iter().enumerate() {
            all.slice_mut(ndarray::s![i * 8..(i + 1) * 8, ..])
                .assign(&w.values);
        }
        let fv = feature_vector(&all);
        for c in 0..4 {
            assert!(fv.0[c * 7].abs() < 1e-6, "channel {c} mean slot");
        }
    }
}
