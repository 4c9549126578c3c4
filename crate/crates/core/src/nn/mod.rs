//! A small f64 neural-network engine with exact analytic backward passes.
//!
//! Everything the detectors and the time-series GAN need, and nothing more:
//!
//! - dense, 1-D convolution (same padding), batch norm, layer norm
//! - ReLU, GELU, global average pooling, max pooling
//! - LSTM with full backpropagation through time
//! - multi-head self-attention
//! - softmax cross-entropy / focal losses and sigmoid BCE, each returning
//!   the loss together with its logit gradient
//! - Adam with L2-style weight decay
//!
//! Layers are plain structs that cache whatever their backward pass needs;
//! networks wire forward/backward by hand. All math is f64 so finite
//! difference checks can run at tight tolerances. Shape misuse inside the
//! engine is a programmer error and panics; user-facing validation lives in
//! the model layer.

mod act;
mod adam;
mod attention;
mod conv;
mod dense;
mod gradcheck;
mod init;
mod loss;
mod lstm;
mod norm;

pub use act::{Gelu, Relu};
pub use adam::Adam;
pub use attention::MultiHeadSelfAttention;
pub use conv::{Conv1d, GlobalAvgPool1d, MaxPool1dSame};
pub use dense::Dense;
pub use gradcheck::{check_gradients, GradCheckReport, GradCheckResult};
pub use init::uniform_fan_in;
pub use loss::{focal_loss, sigmoid_bce_with_logits, softmax_rows, FocalLossSpec};
pub use lstm::Lstm;
pub use norm::{BatchNorm1d, LayerNorm};

use ndarray::{ArrayD, ArrayView1, ArrayView2, Ix1, Ix2};

/// A learnable tensor with its gradient accumulator. Non-trainable buffers
/// (batch-norm running statistics) reuse the same container so one visitor
/// covers optimization, persistence, and gradient checks.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub w: ArrayD<f64>,
    pub g: ArrayD<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, w: ArrayD<f64>) -> Self {
        let g = ArrayD::zeros(w.raw_dim());
        Self {
            name: name.into(),
            w,
            g,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, w: ArrayD<f64>) -> Self {
        let mut p = Self::new(name, w);
        p.trainable = false;
        p
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Anything exposing an ordered list of learnable parameters. Visit order
/// must be stable across calls; the optimizer and the artifact format key
/// state by it.
pub trait Parameterized {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }
}

pub(crate) fn view2(w: &ArrayD<f64>) -> ArrayView2<'_, f64> {
    w.view().into_dimensionality::<Ix2>().expect("2-d param")
}

pub(crate) fn view1(w: &ArrayD<f64>) -> ArrayView1<'_, f64> {
    w.view().into_dimensionality::<Ix1>().expect("1-d param")
}
