use super::{init::uniform_fan_in, view1, view2, Param, Parameterized};
use ndarray::{Array2, Array3, ArrayD, Axis};
use rand::Rng;

/// Temporal convolution with stride 1 and "same" output length.
///
/// Total padding is K−1, split as left = (K−1)/2 and right = K/2, matching
/// the framework convention for even kernels. Implemented as im2col plus one
/// matrix product; the weight is stored flattened as `[c_out, c_in * k]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    c_in: usize,
    c_out: usize,
    k: usize,
    cache: Option<(Array2<f64>, usize, usize)>,
}

impl Conv1d {
    pub fn new(name: &str, c_in: usize, c_out: usize, k: usize, rng: &mut impl Rng) -> Self {
        let fan_in = c_in * k;
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                uniform_fan_in(rng, &[c_out, fan_in], fan_in),
            ),
            bias: Param::new(format!("{name}.bias"), uniform_fan_in(rng, &[c_out], fan_in)),
            c_in,
            c_out,
            k,
            cache: None,
        }
    }

    pub fn kernel(&self) -> usize {
        self.k
    }

    fn pad_left(&self) -> usize {
        (self.k - 1) / 2
    }

    /// `[batch, c_in, t]` to `[batch, c_out, t]`.
    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (b, c_in, t) = x.dim();
        assert_eq!(c_in, self.c_in, "conv input channels");
        let pl = self.pad_left() as isize;

        let mut x_col = Array2::<f64>::zeros((self.c_in * self.k, b * t));
        for bi in 0..b {
            for c in 0..self.c_in {
                for k in 0..self.k {
                    let shift = k as isize - pl;
                    let t0 = (-shift).max(0) as usize;
                    let t1 = (t as isize - shift).min(t as isize).max(0) as usize;
                    if t0 >= t1 {
                        continue;
                    }
                    let src = x.slice(ndarray::s![
                        bi,
                        c,
                        (t0 as isize + shift) as usize..(t1 as isize + shift) as usize
                    ]);
                    let mut dst = x_col.slice_mut(ndarray::s![
                        c * self.k + k,
                        bi * t + t0..bi * t + t1
                    ]);
                    dst.assign(&src);
                }
            }
        }

        let w = view2(&self.weight.w);
        let y_mat = w.dot(&x_col);
        let bias = view1(&self.bias.w);
        let mut y = Array3::<f64>::zeros((b, self.c_out, t));
        for bi in 0..b {
            for co in 0..self.c_out {
                let row = y_mat.slice(ndarray::s![co, bi * t..(bi + 1) * t]);
                let mut dst = y.slice_mut(ndarray::s![bi, co, ..]);
                dst.assign(&row);
                dst += bias[co];
            }
        }
        self.cache = Some((x_col, b, t));
        y
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let (x_col, b, t) = self.cache.as_ref().expect("forward before backward");
        let (b, t) = (*b, *t);
        let mut dy_mat = Array2::<f64>::zeros((self.c_out, b * t));
        for bi in 0..b {
            for co in 0..self.c_out {
                dy_mat
                    .slice_mut(ndarray::s![co, bi * t..(bi + 1) * t])
                    .assign(&dy.slice(ndarray::s![bi, co, ..]));
            }
        }

        let dw = dy_mat.dot(&x_col.t());
        self.weight.g += &dw.into_dyn();
        let db: ArrayD<f64> = dy_mat.sum_axis(Axis(1)).into_dyn();
        self.bias.g += &db;

        let w = view2(&self.weight.w);
        let dx_col = w.t().dot(&dy_mat);
        let pl = self.pad_left() as isize;
        let mut dx = Array3::<f64>::zeros((b, self.c_in, t));
        for bi in 0..b {
            for c in 0..self.c_in {
                for k in 0..self.k {
                    let shift = k as isize - pl;
                    let t0 = (-shift).max(0) as usize;
                    let t1 = (t as isize - shift).min(t as isize).max(0) as usize;
                    if t0 >= t1 {
                        continue;
                    }
                    let src = dx_col.slice(ndarray::s![
                        c * self.k + k,
                        bi * t + t0..bi * t + t1
                    ]);
                    let mut dst = dx.slice_mut(ndarray::s![
                        bi,
                        c,
                        (t0 as isize + shift) as usize..(t1 as isize + shift) as usize
                    ]);
                    dst += &src;
                }
            }
        }
        dx
    }
}

impl Parameterized for Conv1d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Mean over the time axis: `[b, c, t]` to `[b, c]`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool1d {
    t: usize,
}

impl GlobalAvgPool1d {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array2<f64> {
        self.t = x.dim().2;
        x.mean_axis(Axis(2)).expect("non-empty time axis")
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array3<f64> {
        let (b, c) = dy.dim();
        let scale = 1.0 / self.t as f64;
        let mut dx = Array3::<f64>::zeros((b, c, self.t));
        for bi in 0..b {
            for ci in 0..c {
                dx.slice_mut(ndarray::s![bi, ci, ..]).fill(dy[(bi, ci)] * scale);
            }
        }
        dx
    }
}

/// Max pooling with stride 1 and same-length output (pad value −inf).
#[derive(Debug, Clone)]
pub struct MaxPool1dSame {
    k: usize,
    argmax: Option<Vec<usize>>,
    dim: (usize, usize, usize),
}

impl MaxPool1dSame {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            argmax: None,
            dim: (0, 0, 0),
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (b, c, t) = x.dim();
        self.dim = (b, c, t);
        let pl = ((self.k - 1) / 2) as isize;
        let mut y = Array3::<f64>::zeros((b, c, t));
        let mut argmax = vec![0usize; b * c * t];
        for bi in 0..b {
            for ci in 0..c {
                for to in 0..t {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = to;
                    for k in 0..self.k {
                        let ti = to as isize + k as isize - pl;
                        if ti < 0 || ti >= t as isize {
                            continue;
                        }
                        let v = x[(bi, ci, ti as usize)];
                        if v > best {
                            best = v;
                            best_i = ti as usize;
                        }
                    }
                    y[(bi, ci, to)] = best;
                    argmax[(bi * c + ci) * t + to] = best_i;
                }
            }
        }
        self.argmax = Some(argmax);
        y
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let (b, c, t) = self.dim;
        let argmax = self.argmax.as_ref().expect("forward before backward");
        let mut dx = Array3::<f64>::zeros((b, c, t));
        for bi in 0..b {
            for ci in 0..c {
                for to in 0..t {
                    let src = argmax[(bi * c + ci) * t + to];
                    dx[(bi, ci, src)] += dy[(bi, ci, to)];
                }
            }
        }
        dx
    }
}
