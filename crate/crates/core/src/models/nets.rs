//! The four detector networks.
//!
//! Every network consumes a time-major batch `[batch, 8, 4]` and produces
//! two-class logits `[batch, 2]`. Convolutional architectures transpose to
//! channel-major internally. Backward passes stop at the input; windows are
//! data, not parameters.

use ndarray::{concatenate, s, Array2, Array3, Axis};
use rand::Rng;

use super::ArchShape;
use crate::data::CHANNELS;
use crate::nn::{
    BatchNorm1d, Conv1d, Dense, GlobalAvgPool1d, Lstm, MaxPool1dSame, Param, Parameterized, Relu,
};
use crate::preprocess::WINDOW_LEN;

pub(crate) const N_CLASSES: usize = 2;

fn relu3(relu: &mut Relu, x: Array3<f64>) -> Array3<f64> {
    relu.forward(&x.into_dyn())
        .into_dimensionality()
        .expect("3-d activation")
}

fn relu3_back(relu: &mut Relu, dy: &Array3<f64>) -> Array3<f64> {
    relu.backward(&dy.clone().into_dyn())
        .into_dimensionality()
        .expect("3-d activation gradient")
}

fn to_channel_major(x: &Array3<f64>) -> Array3<f64> {
    x.view()
        .permuted_axes([0, 2, 1])
        .as_standard_layout()
        .to_owned()
}

/// Conv → batch norm → ReLU, the repeating unit of the convolutional
/// detectors.
#[derive(Debug, Clone)]
struct ConvBnRelu {
    conv: Conv1d,
    bn: BatchNorm1d,
    relu: Relu,
}

impl ConvBnRelu {
    fn new(name: &str, c_in: usize, c_out: usize, k: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv: Conv1d::new(&format!("{name}.conv"), c_in, c_out, k, rng),
            bn: BatchNorm1d::new(&format!("{name}.bn"), c_out),
            relu: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let y = self.bn.forward(&self.conv.forward(x));
        relu3(&mut self.relu, y)
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let d = relu3_back(&mut self.relu, dy);
        self.conv.backward(&self.bn.backward(&d))
    }

    fn set_training(&mut self, on: bool) {
        self.bn.set_training(on);
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FcnNet {
    blocks: [ConvBnRelu; 3],
    gap: GlobalAvgPool1d,
    head: Dense,
}

impl FcnNet {
    pub fn new(shape: &ArchShape, rng: &mut impl Rng) -> Self {
        let f = shape.fcn_filters;
        let k = shape.fcn_kernels;
        Self {
            blocks: [
                ConvBnRelu::new("fcn.b1", CHANNELS, f[0], k[0], rng),
                ConvBnRelu::new("fcn.b2", f[0], f[1], k[1], rng),
                ConvBnRelu::new("fcn.b3", f[1], f[2], k[2], rng),
            ],
            gap: GlobalAvgPool1d::new(),
            head: Dense::new("fcn.head", f[2], N_CLASSES, rng),
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array2<f64> {
        let mut h = to_channel_major(x);
        for b in &mut self.blocks {
            h = b.forward(&h);
        }
        self.head.forward(&self.gap.forward(&h))
    }

    pub fn backward(&mut self, dlogits: &Array2<f64>) {
        let mut d = self.gap.backward(&self.head.backward(dlogits));
        for b in self.blocks.iter_mut().rev() {
            d = b.backward(&d);
        }
    }

    pub fn set_training(&mut self, on: bool) {
        for b in &mut self.blocks {
            b.set_training(on);
        }
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for b in &mut self.blocks {
            b.visit(f);
        }
        self.head.visit_params(f);
    }
}

/// One ResNet block: three conv/batch-norm stages plus a projected or
/// identity shortcut, ReLU after the sum.
#[derive(Debug, Clone)]
struct ResidualBlock {
    s1: ConvBnRelu,
    s2: ConvBnRelu,
    conv3: Conv1d,
    bn3: BatchNorm1d,
    shortcut_conv: Option<Conv1d>,
    shortcut_bn: BatchNorm1d,
    out: Relu,
}

impl ResidualBlock {
    fn new(name: &str, c_in: usize, c_out: usize, kernels: [usize; 3], rng: &mut impl Rng) -> Self {
        let shortcut_conv = (c_in != c_out)
            .then(|| Conv1d::new(&format!("{name}.sc.conv"), c_in, c_out, 1, rng));
        Self {
            s1: ConvBnRelu::new(&format!("{name}.s1"), c_in, c_out, kernels[0], rng),
            s2: ConvBnRelu::new(&format!("{name}.s2"), c_out, c_out, kernels[1], rng),
            conv3: Conv1d::new(&format!("{name}.s3.conv"), c_out, c_out, kernels[2], rng),
            bn3: BatchNorm1d::new(&format!("{name}.s3.bn"), c_out),
            shortcut_conv,
            shortcut_bn: BatchNorm1d::new(&format!("{name}.sc.bn"), c_out),
            out: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let main = self.bn3.forward(&self.conv3.forward(&self.s2.forward(&self.s1.forward(x))));
        let shortcut = match &mut self.shortcut_conv {
            Some(conv) => self.shortcut_bn.forward(&conv.forward(x)),
            None => self.shortcut_bn.forward(x),
        };
        relu3(&mut self.out, main + shortcut)
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let d = relu3_back(&mut self.out, dy);
        let dmain = self.s1.backward(&self.s2.backward(&self.conv3.backward(&self.bn3.backward(&d))));
        let dshort = {
            let d = self.shortcut_bn.backward(&d);
            match &mut self.shortcut_conv {
                Some(conv) => conv.backward(&d),
                None => d,
            }
        };
        dmain + dshort
    }

    fn set_training(&mut self, on: bool) {
        self.s1.set_training(on);
        self.s2.set_training(on);
        self.bn3.set_training(on);
        self.shortcut_bn.set_training(on);
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.s1.visit(f);
        self.s2.visit(f);
        self.conv3.visit_params(f);
        self.bn3.visit_params(f);
        if let Some(conv) = &mut self.shortcut_conv {
            conv.visit_params(f);
        }
        self.shortcut_bn.visit_params(f);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ResNetNet {
    blocks: Vec<ResidualBlock>,
    gap: GlobalAvgPool1d,
    head: Dense,
}

impl ResNetNet {
    pub fn new(shape: &ArchShape, rng: &mut impl Rng) -> Self {
        let f = shape.resnet_filters;
        let k = shape.resnet_kernels;
        let mut blocks = Vec::with_capacity(3);
        let mut c_in = CHANNELS;
        for (i, &c_out) in f.iter().enumerate() {
            blocks.push(ResidualBlock::new(&format!("resnet.rb{}", i + 1), c_in, c_out, k, rng));
            c_in = c_out;
        }
        Self {
            blocks,
            gap: GlobalAvgPool1d::new(),
            head: Dense::new("resnet.head", f[2], N_CLASSES, rng),
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array2<f64> {
        let mut h = to_channel_major(x);
        for b in &mut self.blocks {
            h = b.forward(&h);
        }
        self.head.forward(&self.gap.forward(&h))
    }

    pub fn backward(&mut self, dlogits: &Array2<f64>) {
        let mut d = self.gap.backward(&self.head.backward(dlogits));
        for b in self.blocks.iter_mut().rev() {
            d = b.backward(&d);
        }
    }

    pub fn set_training(&mut self, on: bool) {
        for b in &mut self.blocks {
            b.set_training(on);
        }
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for b in &mut self.blocks {
            b.visit(f);
        }
        self.head.visit_params(f);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LstmNet {
    layers: Vec<Lstm>,
    head: Dense,
    cached: Option<(usize, usize, usize)>,
}

impl LstmNet {
    pub fn new(shape: &ArchShape, rng: &mut impl Rng) -> Self {
        let h = shape.lstm_hidden;
        let mut layers = Vec::with_capacity(shape.lstm_layers);
        let mut d_in = CHANNELS;
        for i in 0..shape.lstm_layers {
            layers.push(Lstm::new(&format!("lstm.l{}", i + 1), d_in, h, rng));
            d_in = h;
        }
        Self {
            layers,
            head: Dense::new("lstm.head", h, N_CLASSES, rng),
            cached: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h);
        }
        let (b, t, d) = h.dim();
        self.cached = Some((b, t, d));
        let last = h.slice(s![.., t - 1, ..]).to_owned();
        self.head.forward(&last)
    }

    pub fn backward(&mut self, dlogits: &Array2<f64>) {
        let (b, t, d) = self.cached.expect("forward before backward");
        let dlast = self.head.backward(dlogits);
        let mut dh = Array3::<f64>::zeros((b, t, d));
        dh.slice_mut(s![.., t - 1, ..]).assign(&dlast);
        for l in self.layers.iter_mut().rev() {
            dh = l.backward(&dh);
        }
    }

    pub fn set_training(&mut self, _on: bool) {}

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for l in &mut self.layers {
            l.visit_params(f);
        }
        self.head.visit_params(f);
    }
}

/// One inception module: bottleneck feeding three parallel kernel widths,
/// plus a max-pool branch, concatenated then batch-normed.
#[derive(Debug, Clone)]
struct InceptionModule {
    bottleneck: Conv1d,
    branches: [Conv1d; 3],
    pool: MaxPool1dSame,
    pool_conv: Conv1d,
    bn: BatchNorm1d,
    relu: Relu,
    filters: usize,
}

impl InceptionModule {
    fn new(name: &str, c_in: usize, shape: &ArchShape, rng: &mut impl Rng) -> Self {
        let nb = shape.inception_bottleneck;
        let nf = shape.inception_filters;
        let k = shape.inception_kernels;
        Self {
            bottleneck: Conv1d::new(&format!("{name}.bottleneck"), c_in, nb, 1, rng),
            branches: [
                Conv1d::new(&format!("{name}.k1"), nb, nf, k[0], rng),
                Conv1d::new(&format!("{name}.k2"), nb, nf, k[1], rng),
                Conv1d::new(&format!("{name}.k3"), nb, nf, k[2], rng),
            ],
            pool: MaxPool1dSame::new(3),
            pool_conv: Conv1d::new(&format!("{name}.pool"), c_in, nf, 1, rng),
            bn: BatchNorm1d::new(&format!("{name}.bn"), 4 * nf),
            relu: Relu::new(),
            filters: nf,
        }
    }

    fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let bott = self.bottleneck.forward(x);
        let pooled = self.pool_conv.forward(&self.pool.forward(x));
        let ys: Vec<Array3<f64>> = self.branches.iter_mut().map(|c| c.forward(&bott)).collect();
        let cat = concatenate(
            Axis(1),
            &[ys[0].view(), ys[1].view(), ys[2].view(), pooled.view()],
        )
        .expect("branch shapes agree");
        relu3(&mut self.relu, self.bn.forward(&cat))
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let d = self.bn.backward(&relu3_back(&mut self.relu, dy));
        let nf = self.filters;
        let mut dbott: Option<Array3<f64>> = None;
        for (i, conv) in self.branches.iter_mut().enumerate() {
            let db = conv.backward(&d.slice(s![.., i * nf..(i + 1) * nf, ..]).to_owned());
            dbott = Some(match dbott {
                Some(acc) => acc + db,
                None => db,
            });
        }
        let dpool = self
            .pool
            .backward(&self.pool_conv.backward(&d.slice(s![.., 3 * nf..4 * nf, ..]).to_owned()));
        self.bottleneck.backward(&dbott.expect("three branches")) + dpool
    }

    fn set_training(&mut self, on: bool) {
        self.bn.set_training(on);
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.bottleneck.visit_params(f);
        for c in &mut self.branches {
            c.visit_params(f);
        }
        self.pool_conv.visit_params(f);
        self.bn.visit_params(f);
    }
}

/// A run of inception modules closed by a projected residual connection.
#[derive(Debug, Clone)]
struct InceptionSegment {
    modules: Vec<InceptionModule>,
    shortcut_conv: Conv1d,
    shortcut_bn: BatchNorm1d,
    out: Relu,
}

impl InceptionSegment {
    fn new(name: &str, c_in: usize, shape: &ArchShape, rng: &mut impl Rng) -> Self {
        let width = 4 * shape.inception_filters;
        let mut modules = Vec::with_capacity(shape.inception_residual_every);
        let mut c = c_in;
        for i in 0..shape.inception_residual_every {
            modules.push(InceptionModule::new(&format!("{name}.m{}", i + 1), c, shape, rng));
            c = width;
        }
        Self {
            modules,
            shortcut_conv: Conv1d::new(&format!("{name}.sc.conv"), c_in, width, 1, rng),
            shortcut_bn: BatchNorm1d::new(&format!("{name}.sc.bn"), width),
            out: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let mut h = x.clone();
        for m in &mut self.modules {
            h = m.forward(&h);
        }
        let shortcut = self.shortcut_bn.forward(&self.shortcut_conv.forward(x));
        relu3(&mut self.out, h + shortcut)
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let d = relu3_back(&mut self.out, dy);
        let mut dm = d.clone();
        for m in self.modules.iter_mut().rev() {
            dm = m.backward(&dm);
        }
        dm + self.shortcut_conv.backward(&self.shortcut_bn.backward(&d))
    }

    fn set_training(&mut self, on: bool) {
        for m in &mut self.modules {
            m.set_training(on);
        }
        self.shortcut_bn.set_training(on);
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for m in &mut self.modules {
            m.visit(f);
        }
        self.shortcut_conv.visit_params(f);
        self.shortcut_bn.visit_params(f);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct InceptionNet {
    segments: Vec<InceptionSegment>,
    gap: GlobalAvgPool1d,
    head: Dense,
}

impl InceptionNet {
    pub fn new(shape: &ArchShape, rng: &mut impl Rng) -> Self {
        let width = 4 * shape.inception_filters;
        let n_segments = shape.inception_modules / shape.inception_residual_every;
        let mut segments = Vec::with_capacity(n_segments);
        let mut c_in = CHANNELS;
        for i in 0..n_segments {
            segments.push(InceptionSegment::new(
                &format!("inception.s{}", i + 1),
                c_in,
                shape,
                rng,
            ));
            c_in = width;
        }
        Self {
            segments,
            gap: GlobalAvgPool1d::new(),
            head: Dense::new("inception.head", width, N_CLASSES, rng),
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array2<f64> {
        let mut h = to_channel_major(x);
        for seg in &mut self.segments {
            h = seg.forward(&h);
        }
        self.head.forward(&self.gap.forward(&h))
    }

    pub fn backward(&mut self, dlogits: &Array2<f64>) {
        let mut d = self.gap.backward(&self.head.backward(dlogits));
        for seg in self.segments.iter_mut().rev() {
            d = seg.backward(&d);
        }
    }

    pub fn set_training(&mut self, on: bool) {
        for seg in &mut self.segments {
            seg.set_training(on);
        }
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for seg in &mut self.segments {
            seg.visit(f);
        }
        self.head.visit_params(f);
    }
}

/// Architecture-erased network wrapper so training, persistence, and
/// inference share one code path.
#[derive(Debug, Clone)]
pub(crate) enum Network {
    Fcn(FcnNet),
    ResNet(ResNetNet),
    Lstm(LstmNet),
    Inception(InceptionNet),
}

impl Network {
    pub fn forward(&mut self, x: &Array3<f64>) -> Array2<f64> {
        match self {
            Network::Fcn(n) => n.forward(x),
            Network::ResNet(n) => n.forward(x),
            Network::Lstm(n) => n.forward(x),
            Network::Inception(n) => n.forward(x),
        }
    }

    pub fn backward(&mut self, dlogits: &Array2<f64>) {
        match self {
            Network::Fcn(n) => n.backward(dlogits),
            Network::ResNet(n) => n.backward(dlogits),
            Network::Lstm(n) => n.backward(dlogits),
            Network::Inception(n) => n.backward(dlogits),
        }
    }

    pub fn set_training(&mut self, on: bool) {
        match self {
            Network::Fcn(n) => n.set_training(on),
            Network::ResNet(n) => n.set_training(on),
            Network::Lstm(n) => n.set_training(on),
            Network::Inception(n) => n.set_training(on),
        }
    }
}

impl Parameterized for Network {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            Network::Fcn(n) => n.visit(f),
            Network::ResNet(n) => n.visit(f),
            Network::Lstm(n) => n.visit(f),
            Network::Inception(n) => n.visit(f),
        }
    }
}

/// Stacks standardized `[8, 4]` windows into one time-major batch tensor.
pub(crate) fn batch_windows<'a>(values: impl Iterator<Item = &'a Array2<f64>> + ExactSizeIterator) -> Array3<f64> {
    let b = values.len();
    let mut x = Array3::<f64>::zeros((b, WINDOW_LEN, CHANNELS));
    for (i, w) in values.enumerate() {
        x.slice_mut(s![i, .., ..]).assign(w);
    }
    x
}
