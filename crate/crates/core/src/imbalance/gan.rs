//! A transformer GAN over 8×4 fall windows.
//!
//! Generator: latent vector → dense → 8 embedded timesteps (+ learned
//! positions) → pre-LN encoder blocks → per-timestep linear head.
//! Discriminator: per-timestep patch embedding, a class token, encoder
//! blocks, and a linear real/fake head on the class token. Both train with
//! the non-saturating sigmoid BCE objective.

use super::ImbalanceError;
use crate::artifact::{read_artifact, restore_params, snapshot_params, write_artifact};
use crate::data::CHANNELS;
use crate::nn::{
    sigmoid_bce_with_logits, uniform_fan_in, Adam, Dense, Gelu, LayerNorm,
    MultiHeadSelfAttention, Param, Parameterized,
};
use crate::preprocess::{LabeledWindow, WINDOW_LEN};
use ndarray::{s, Array1, Array2, Array3, Axis, Ix2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

const GAN_MAGIC: &[u8; 4] = b"FGEN";
const GAN_VERSION: u32 = 1;

/// Adversarial training setup. The optimizer hyperparameters default to the
/// evaluation configuration; the architecture knobs are free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub batch_size: usize,
    pub weight_decay: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub epochs: usize,
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub ff_dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            batch_size: 16,
            weight_decay: 1e-3,
            lr_generator: 2e-4,
            lr_discriminator: 2e-4,
            epochs: 60,
            latent_dim: 64,
            embed_dim: 64,
            ff_dim: 128,
            blocks: 2,
            heads: 4,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), ImbalanceError> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("latent_dim", self.latent_dim),
            ("embed_dim", self.embed_dim),
            ("ff_dim", self.ff_dim),
            ("blocks", self.blocks),
            ("heads", self.heads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ImbalanceError::InvalidConfig {
                    reason: format!("{name} must be positive"),
                });
            }
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ImbalanceError::InvalidConfig {
                    reason: format!("{name} must be positive and finite"),
                });
            }
        }
        if self.embed_dim % self.heads != 0 {
            return Err(ImbalanceError::InvalidConfig {
                reason: format!(
                    "heads ({}) must divide embed_dim ({})",
                    self.heads, self.embed_dim
                ),
            });
        }
        Ok(())
    }
}

fn flatten(x: &Array3<f64>) -> Array2<f64> {
    let (b, t, d) = x.dim();
    x.to_shape((b * t, d)).expect("contiguous").to_owned()
}

fn unflatten(x: Array2<f64>, b: usize, t: usize) -> Array3<f64> {
    let d = x.ncols();
    assert_eq!(x.nrows(), b * t, "expected a [b*t, d] matrix");
    x.to_shape((b, t, d)).expect("contiguous").to_owned()
}

/// Pre-LN transformer encoder block: x + Attn(LN(x)), then h + FF(LN(h)).
struct EncoderBlock {
    ln1: LayerNorm,
    attn: MultiHeadSelfAttention,
    ln2: LayerNorm,
    ff1: Dense,
    gelu: Gelu,
    ff2: Dense,
}

impl EncoderBlock {
    fn new(name: &str, d: usize, ff: usize, heads: usize, rng: &mut impl Rng) -> Self {
        EncoderBlock {
            ln1: LayerNorm::new(&format!("{name}.ln1"), d),
            attn: MultiHeadSelfAttention::new(&format!("{name}.attn"), d, heads, rng),
            ln2: LayerNorm::new(&format!("{name}.ln2"), d),
            ff1: Dense::new(&format!("{name}.ff1"), d, ff, rng),
            gelu: Gelu::new(),
            ff2: Dense::new(&format!("{name}.ff2"), ff, d, rng),
        }
    }

    fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = x.dim();
        let h = x + &self.attn.forward(&self.ln1.forward(x));
        let n2 = flatten(&self.ln2.forward(&h));
        let f = self.ff1.forward(&n2);
        let f = self.gelu.forward(&f.into_dyn());
        let f = self
            .ff2
            .forward(&f.into_dimensionality::<Ix2>().expect("2-d"));
        &h + &unflatten(f, b, t)
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = dy.dim();
        let dg = self.ff2.backward(&flatten(dy));
        let df = self.gelu.backward(&dg.into_dyn());
        let dn2 = self
            .ff1
            .backward(&df.into_dimensionality::<Ix2>().expect("2-d"));
        let dh = dy + &self.ln2.backward(&unflatten(dn2, b, t));
        let dn1 = self.attn.backward(&dh);
        &dh + &self.ln1.backward(&dn1)
    }
}

impl Parameterized for EncoderBlock {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.ln1.visit_params(f);
        self.attn.visit_params(f);
        self.ln2.visit_params(f);
        self.ff1.visit_params(f);
        self.ff2.visit_params(f);
    }
}

pub(crate) struct TsGenerator {
    latent_dim: usize,
    embed_dim: usize,
    dense_in: Dense,
    pos: Param,
    blocks: Vec<EncoderBlock>,
    out: Dense,
}

impl TsGenerator {
    fn new(config: &GanConfig, rng: &mut impl Rng) -> Self {
        TsGenerator {
            latent_dim: config.latent_dim,
            embed_dim: config.embed_dim,
            dense_in: Dense::new(
                "g.in",
                config.latent_dim,
                WINDOW_LEN * config.embed_dim,
                rng,
            ),
            pos: Param::new(
                "g.pos",
                uniform_fan_in(rng, &[WINDOW_LEN, config.embed_dim], config.embed_dim),
            ),
            blocks: (0..config.blocks)
                .map(|i| {
                    EncoderBlock::new(
                        &format!("g.block{i}"),
                        config.embed_dim,
                        config.ff_dim,
                        config.heads,
                        rng,
                    )
                })
                .collect(),
            out: Dense::new("g.out", config.embed_dim, CHANNELS, rng),
        }
    }

    fn forward(&mut self, z: &Array2<f64>) -> Array3<f64> {
        let b = z.nrows();
        let mut h = self
            .dense_in
            .forward(z)
            .to_shape((b, WINDOW_LEN, self.embed_dim))
            .expect("contiguous")
            .to_owned();
        h += &self
            .pos
            .w
            .view()
            .into_dimensionality::<Ix2>()
            .expect("pos 2-d");
        for block in &mut self.blocks {
            h = block.forward(&h);
        }
        let y = self.out.forward(&flatten(&h));
        unflatten(y, b, WINDOW_LEN)
    }

    fn backward(&mut self, dy: &Array3<f64>) {
        let (b, _, _) = dy.dim();
        let dh2 = self.out.backward(&flatten(dy));
        let mut dh = unflatten(dh2, b, WINDOW_LEN);
        for block in self.blocks.iter_mut().rev() {
            dh = block.backward(&dh);
        }
        self.pos.g += &dh.sum_axis(Axis(0)).into_dyn();
        self.dense_in
            .backward(&dh.to_shape((b, WINDOW_LEN * self.embed_dim)).expect("contiguous").to_owned());
    }

    fn sample(&mut self, n: usize, rng: &mut impl Rng) -> Array3<f64> {
        let z = Array2::from_shape_fn((n, self.latent_dim), |_| rng.sample(StandardNormal));
        self.forward(&z)
    }
}

impl Parameterized for TsGenerator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.dense_in.visit_params(f);
        f(&mut self.pos);
        for block in &mut self.blocks {
            block.visit_params(f);
        }
        self.out.visit_params(f);
    }
}

struct TsDiscriminator {
    embed_dim: usize,
    patch: Dense,
    cls: Param,
    pos: Param,
    blocks: Vec<EncoderBlock>,
    ln: LayerNorm,
    head: Dense,
}

impl TsDiscriminator {
    fn new(config: &GanConfig, rng: &mut impl Rng) -> Self {
        TsDiscriminator {
            embed_dim: config.embed_dim,
            patch: Dense::new("d.patch", CHANNELS, config.embed_dim, rng),
            cls: Param::new(
                "d.cls",
                uniform_fan_in(rng, &[1, config.embed_dim], config.embed_dim),
            ),
            pos: Param::new(
                "d.pos",
                uniform_fan_in(rng, &[WINDOW_LEN + 1, config.embed_dim], config.embed_dim),
            ),
            blocks: (0..config.blocks)
                .map(|i| {
                    EncoderBlock::new(
                        &format!("d.block{i}"),
                        config.embed_dim,
                        config.ff_dim,
                        config.heads,
                        rng,
                    )
                })
                .collect(),
            ln: LayerNorm::new("d.ln", config.embed_dim),
            head: Dense::new("d.head", config.embed_dim, 1, rng),
        }
    }

    fn forward(&mut self, x: &Array3<f64>) -> Array1<f64> {
        let (b, t, _) = x.dim();
        let patches = unflatten(self.patch.forward(&flatten(x)), b, t);
        let mut tokens = Array3::<f64>::zeros((b, t + 1, self.embed_dim));
        let cls = self
            .cls
            .w
            .view()
            .into_dimensionality::<Ix2>()
            .expect("cls 2-d");
        for bi in 0..b {
            tokens.slice_mut(s![bi, 0..1, ..]).assign(&cls);
        }
        tokens.slice_mut(s![.., 1.., ..]).assign(&patches);
        tokens += &self
            .pos
            .w
            .view()
            .into_dimensionality::<Ix2>()
            .expect("pos 2-d");
        let mut h = tokens;
        for block in &mut self.blocks {
            h = block.forward(&h);
        }
        let normed = self.ln.forward(&h);
        let cls_out = normed.slice(s![.., 0, ..]).to_owned();
        let logits = self.head.forward(&cls_out);
        logits.column(0).to_owned()
    }

    fn backward(&mut self, dlogits: &Array1<f64>) -> Array3<f64> {
        let b = dlogits.len();
        let dl2 = dlogits.view().to_shape((b, 1)).expect("column").to_owned();
        let dcls_out = self.head.backward(&dl2);
        let (t1, d) = (WINDOW_LEN + 1, self.embed_dim);
        let mut dnormed = Array3::<f64>::zeros((b, t1, d));
        dnormed.slice_mut(s![.., 0, ..]).assign(&dcls_out);
        let mut dh = self.ln.backward(&dnormed);
        for block in self.blocks.iter_mut().rev() {
            dh = block.backward(&dh);
        }
        self.pos.g += &dh.sum_axis(Axis(0)).into_dyn();
        self.cls.g += &dh
            .slice(s![.., 0..1, ..])
            .sum_axis(Axis(0))
            .into_dyn();
        let dpatches = dh.slice(s![.., 1.., ..]).to_owned();
        let dx2 = self.patch.backward(&flatten(&dpatches));
        unflatten(dx2, b, WINDOW_LEN)
    }
}

impl Parameterized for TsDiscriminator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.patch.visit_params(f);
        f(&mut self.cls);
        f(&mut self.pos);
        for block in &mut self.blocks {
            block.visit_params(f);
        }
        self.ln.visit_params(f);
        self.head.visit_params(f);
    }
}

/// A trained fall-window generator plus everything needed to reproduce it.
pub struct GeneratorArtifact {
    pub config: GanConfig,
    pub data_fingerprint: String,
    generator: TsGenerator,
}

#[derive(Serialize, Deserialize)]
struct GanMeta {
    config: GanConfig,
    data_fingerprint: String,
}

impl GeneratorArtifact {
    /// Draws `n` windows from seeded latent noise.
    pub fn sample_windows(&mut self, n: usize, seed: u64) -> Vec<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = self.generator.sample(n, &mut rng);
        (0..n)
            .map(|i| batch.slice(s![i, .., ..]).to_owned())
            .collect()
    }

    pub fn save(&mut self, path: &Path) -> Result<(), ImbalanceError> {
        let meta = GanMeta {
            config: self.config,
            data_fingerprint: self.data_fingerprint.clone(),
        };
        let tensors = snapshot_params(&mut self.generator);
        write_artifact(path, GAN_MAGIC, GAN_VERSION, &meta, &tensors)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ImbalanceError> {
        let (meta, tensors): (GanMeta, _) = read_artifact(path, GAN_MAGIC, GAN_VERSION)?;
        meta.config.validate()?;
        let mut generator =
            TsGenerator::new(&meta.config, &mut ChaCha8Rng::seed_from_u64(meta.config.seed));
        restore_params(&mut generator, &tensors)?;
        Ok(GeneratorArtifact {
            config: meta.config,
            data_fingerprint: meta.data_fingerprint,
            generator,
        })
    }
}

fn batch_tensor(windows: &[LabeledWindow], idx: &[usize]) -> Array3<f64> {
    let mut x = Array3::<f64>::zeros((idx.len(), WINDOW_LEN, CHANNELS));
    for (row, &i) in idx.iter().enumerate() {
        x.slice_mut(s![row, .., ..]).assign(&windows[i].values);
    }
    x
}

/// Adversarial training on fall windows. The discriminator is dropped once
/// training ends; only the generator persists.
pub fn train_ts_generator(
    train_falls: &[LabeledWindow],
    config: GanConfig,
) -> Result<GeneratorArtifact, ImbalanceError> {
    config.validate()?;
    if train_falls.len() < config.batch_size {
        return Err(ImbalanceError::InsufficientFalls {
            have: train_falls.len(),
            need: config.batch_size,
        });
    }
    let data_fingerprint = crate::fingerprint::fingerprint_f64s(
        train_falls.iter().flat_map(|w| w.values.iter().copied()),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut generator = TsGenerator::new(&config, &mut rng);
    let mut discriminator = TsDiscriminator::new(&config, &mut rng);
    // Lower first-moment decay, the usual stabilizer for adversarial
    // gradients whose sign flips as the opponent adapts.
    let mut adam_g = Adam::with_betas(config.lr_generator, config.weight_decay, 0.5, 0.999);
    let mut adam_d = Adam::with_betas(config.lr_discriminator, config.weight_decay, 0.5, 0.999);

    let check = |loss: f64, epoch: usize, which: &'static str| {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(ImbalanceError::DivergedTraining { epoch, which })
        }
    };

    let mut order: Vec<usize> = (0..train_falls.len()).collect();
    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_d = 0.0;
        let mut epoch_g = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let bs = chunk.len();
            let real = batch_tensor(train_falls, chunk);
            let ones = Array1::<f64>::ones(bs);
            let zeros = Array1::<f64>::zeros(bs);

            // Discriminator: push real logits up, generated logits down.
            discriminator.zero_grads();
            let logits_real = discriminator.forward(&real);
            let (loss_real, dreal) = sigmoid_bce_with_logits(&logits_real, &ones);
            discriminator.backward(&dreal);
            let fake = generator.sample(bs, &mut rng);
            let logits_fake = discriminator.forward(&fake);
            let (loss_fake, dfake) = sigmoid_bce_with_logits(&logits_fake, &zeros);
            discriminator.backward(&dfake);
            check(loss_real + loss_fake, epoch, "discriminator")?;
            adam_d.step(&mut discriminator);

            // Generator: make fresh samples read as real. The discriminator
            // accumulates junk gradients here; they are zeroed next batch.
            generator.zero_grads();
            discriminator.zero_grads();
            let fake = generator.sample(bs, &mut rng);
            let logits = discriminator.forward(&fake);
            let (loss_g, dlogits) = sigmoid_bce_with_logits(&logits, &ones);
            check(loss_g, epoch, "generator")?;
            let dfake = discriminator.backward(&dlogits);
            generator.backward(&dfake);
            adam_g.step(&mut generator);

            epoch_d += loss_real + loss_fake;
            epoch_g += loss_g;
            batches += 1;
        }
        log::debug!(
            "gan epoch {epoch}: d {:.4} g {:.4}",
            epoch_d / batches as f64,
            epoch_g / batches as f64
        );
    }

    Ok(GeneratorArtifact {
        config,
        data_fingerprint,
        generator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActivityLabel, Category};

    fn tiny_config() -> GanConfig {
        GanConfig {
            batch_size: 16,
            epochs: 2,
            latent_dim: 16,
            embed_dim: 16,
            ff_dim: 32,
            blocks: 1,
            heads: 2,
            seed: 5,
            ..GanConfig::default()
        }
    }

    fn fall_window(values: Array2<f64>) -> LabeledWindow {
        LabeledWindow {
            values,
            label: Category::Fall,
            code: ActivityLabel::Fob,
            session_id: "s".to_string(),
            start_time: 0,
        }
    }

    fn varied_falls(n: usize) -> Vec<LabeledWindow> {
        (0..n)
            .map(|i| {
                fall_window(Array2::from_shape_fn((8, 4), |(r, c)| {
                    (i as f64 * 0.711 + r as f64 * 0.37 + c as f64 * 1.3).sin()
                }))
            })
            .collect()
    }

    #[test]
    fn samples_have_window_shape_and_finite_values() {
        let mut artifact = train_ts_generator(&varied_falls(32), tiny_config()).unwrap();
        let samples = artifact.sample_windows(10, 3);
        assert_eq!(samples.len(), 10);
        for s in &samples {
            assert_eq!(s.dim(), (8, 4));
            assert!(s.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let falls = varied_falls(32);
        let mut a = train_ts_generator(&falls, tiny_config()).unwrap();
        let mut b = train_ts_generator(&falls, tiny_config()).unwrap();
        let sa = a.sample_windows(4, 11);
        let sb = b.sample_windows(4, 11);
        assert_eq!(sa, sb);
        let mut c = train_ts_generator(
            &falls,
            GanConfig {
                seed: 6,
                ..tiny_config()
            },
        )
        .unwrap();
        assert_ne!(sa, c.sample_windows(4, 11));
    }

    #[test]
    fn too_few_falls_and_bad_config_are_rejected() {
        assert!(matches!(
            train_ts_generator(&varied_falls(7), tiny_config()),
            Err(ImbalanceError::InsufficientFalls { have: 7, need: 16 })
        ));
        let bad = GanConfig {
            heads: 3,
            ..tiny_config()
        };
        assert!(matches!(
            train_ts_generator(&varied_falls(32), bad),
            Err(ImbalanceError::InvalidConfig { .. })
        ));
    }

    #[test]
    fn non_finite_data_reports_divergence() {
        let mut falls = varied_falls(16);
        falls[3].values[(2, 1)] = f64::NAN;
        assert!(matches!(
            train_ts_generator(&falls, tiny_config()),
            Err(ImbalanceError::DivergedTraining { epoch: 0, .. })
        ));
    }

    #[test]
    fn generator_learns_a_degenerate_constant_distribution() {
        let constant = Array2::from_elem((8, 4), 0.5);
        let falls: Vec<LabeledWindow> =
            (0..48).map(|_| fall_window(constant.clone())).collect();
        let config = GanConfig {
            epochs: 60,
            lr_generator: 1e-3,
            lr_discriminator: 1e-3,
            latent_dim: 16,
            embed_dim: 16,
            ff_dim: 32,
            blocks: 1,
            heads: 2,
            seed: 1,
            ..GanConfig::default()
        };
        let mut artifact = train_ts_generator(&falls, config).unwrap();
        let samples = artifact.sample_windows(32, 9);
        let mae: f64 = samples
            .iter()
            .flat_map(|s| s.iter().map(|v| (v - 0.5).abs()))
            .sum::<f64>()
            / (32.0 * 32.0);
        assert!(mae < 0.2, "generator should approach the constant, MAE {mae}");
    }

    #[test]
    fn artifact_roundtrip_preserves_sampling() {
        let mut artifact = train_ts_generator(&varied_falls(24), tiny_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("falls.fgen");
        artifact.save(&path).unwrap();
        let mut loaded = GeneratorArtifact::load(&path).unwrap();
        assert_eq!(loaded.config, artifact.config);
        assert_eq!(loaded.data_fingerprint, artifact.data_fingerprint);
        assert_eq!(loaded.sample_windows(6, 2), artifact.sample_windows(6, 2));
    }
}
