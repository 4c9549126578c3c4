use super::{view1, Param, Parameterized};
use ndarray::{Array1, Array3, ArrayD, IxDyn};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `[batch, channel, time]`.
///
/// Training mode normalizes with batch statistics (biased variance) and
/// updates running statistics with momentum 0.1, storing the unbiased
/// variance as the running estimate. Eval mode normalizes with the running
/// buffers.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    training: bool,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Array3<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm1d {
    pub fn new(name: &str, c: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::from_elem(IxDyn(&[c]), 1.0)),
            beta: Param::new(format!("{name}.beta"), ArrayD::zeros(IxDyn(&[c]))),
            running_mean: Param::buffer(
                format!("{name}.running_mean"),
                ArrayD::zeros(IxDyn(&[c])),
            ),
            running_var: Param::buffer(
                format!("{name}.running_var"),
                ArrayD::from_elem(IxDyn(&[c]), 1.0),
            ),
            training: true,
            cache: None,
        }
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (b, c, t) = x.dim();
        let n = (b * t) as f64;
        let gamma = view1(&self.gamma.w).to_owned();
        let beta = view1(&self.beta.w).to_owned();
        let mut y = Array3::<f64>::zeros((b, c, t));

        if self.training {
            let mut x_hat = Array3::<f64>::zeros((b, c, t));
            let mut inv_std = Array1::<f64>::zeros(c);
            for ci in 0..c {
                let ch = x.slice(ndarray::s![.., ci, ..]);
                let mu = ch.sum() / n;
                let var = ch.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
                let istd = 1.0 / (var + BN_EPS).sqrt();
                inv_std[ci] = istd;
                for bi in 0..b {
                    for ti in 0..t {
                        let xh = (x[(bi, ci, ti)] - mu) * istd;
                        x_hat[(bi, ci, ti)] = xh;
                        y[(bi, ci, ti)] = gamma[ci] * xh + beta[ci];
                    }
                }
                let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
                let rm = &mut self.running_mean.w[[ci]];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mu;
                let rv = &mut self.running_var.w[[ci]];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * unbiased;
            }
            self.cache = Some(BnCache { x_hat, inv_std });
        } else {
            for ci in 0..c {
                let mu = self.running_mean.w[[ci]];
                let istd = 1.0 / (self.running_var.w[[ci]] + BN_EPS).sqrt();
                for bi in 0..b {
                    for ti in 0..t {
                        y[(bi, ci, ti)] = gamma[ci] * (x[(bi, ci, ti)] - mu) * istd + beta[ci];
                    }
                }
            }
            self.cache = None;
        }
        y
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let BnCache { x_hat, inv_std } = self
            .cache
            .as_ref()
            .expect("backward requires a training-mode forward");
        let (b, c, t) = dy.dim();
        let n = (b * t) as f64;
        let gamma = view1(&self.gamma.w).to_owned();
        let mut dx = Array3::<f64>::zeros((b, c, t));
        for ci in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for bi in 0..b {
                for ti in 0..t {
                    sum_dy += dy[(bi, ci, ti)];
                    sum_dy_xhat += dy[(bi, ci, ti)] * x_hat[(bi, ci, ti)];
                }
            }
            self.gamma.g[[ci]] += sum_dy_xhat;
            self.beta.g[[ci]] += sum_dy;
            let scale = gamma[ci] * inv_std[ci] / n;
            for bi in 0..b {
                for ti in 0..t {
                    dx[(bi, ci, ti)] = scale
                        * (n * dy[(bi, ci, ti)] - sum_dy - x_hat[(bi, ci, ti)] * sum_dy_xhat);
                }
            }
        }
        dx
    }
}

impl Parameterized for BatchNorm1d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

const LN_EPS: f64 = 1e-5;

/// Layer normalization over the last axis of `[batch, time, features]`.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    cache: Option<(Array3<f64>, Array1<f64>, (usize, usize, usize))>,
}

impl LayerNorm {
    pub fn new(name: &str, d: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::from_elem(IxDyn(&[d]), 1.0)),
            beta: Param::new(format!("{name}.beta"), ArrayD::zeros(IxDyn(&[d]))),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, d) = x.dim();
        let dn = d as f64;
        let gamma = view1(&self.gamma.w).to_owned();
        let beta = view1(&self.beta.w).to_owned();
        let mut y = Array3::<f64>::zeros((b, t, d));
        let mut x_hat = Array3::<f64>::zeros((b, t, d));
        let mut inv_std = Array1::<f64>::zeros(b * t);
        for bi in 0..b {
            for ti in 0..t {
                let row = x.slice(ndarray::s![bi, ti, ..]);
                let mu = row.sum() / dn;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / dn;
                let istd = 1.0 / (var + LN_EPS).sqrt();
                inv_std[bi * t + ti] = istd;
                for di in 0..d {
                    let xh = (x[(bi, ti, di)] - mu) * istd;
                    x_hat[(bi, ti, di)] = xh;
                    y[(bi, ti, di)] = gamma[di] * xh + beta[di];
                }
            }
        }
        self.cache = Some((x_hat, inv_std, (b, t, d)));
        y
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let (x_hat, inv_std, dims) = self.cache.as_ref().expect("forward before backward");
        let (b, t, d) = *dims;
        let dn = d as f64;
        let gamma = view1(&self.gamma.w).to_owned();
        let mut dx = Array3::<f64>::zeros((b, t, d));
        for bi in 0..b {
            for ti in 0..t {
                let mut sum_dxh = 0.0;
                let mut sum_dxh_xh = 0.0;
                for di in 0..d {
                    let dxh = dy[(bi, ti, di)] * gamma[di];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * x_hat[(bi, ti, di)];
                    self.gamma.g[[di]] += dy[(bi, ti, di)] * x_hat[(bi, ti, di)];
                    self.beta.g[[di]] += dy[(bi, ti, di)];
                }
                let istd = inv_std[bi * t + ti];
                for di in 0..d {
                    let dxh = dy[(bi, ti, di)] * gamma[di];
                    dx[(bi, ti, di)] =
                        istd / dn * (dn * dxh - sum_dxh - x_hat[(bi, ti, di)] * sum_dxh_xh);
                }
            }
        }
        dx
    }
}

impl Parameterized for LayerNorm {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn sample() -> Array3<f64> {
        Array3::from_shape_fn((3, 2, 5), |(b, c, t)| {
            (b as f64 * 1.7 - c as f64 * 0.9 + t as f64 * 0.31).cos() * 2.0 + c as f64
        })
    }

    #[test]
    fn bn_training_output_is_standardized() {
        let mut bn = BatchNorm1d::new("bn", 2);
        let y = bn.forward(&sample());
        for ci in 0..2 {
            let ch = y.slice(ndarray::s![.., ci, ..]);
            let n = ch.len() as f64;
            let mean = ch.sum() / n;
            let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn bn_eval_uses_running_stats() {
        let mut bn = BatchNorm1d::new("bn", 2);
        let x = sample();
        for _ in 0..200 {
            bn.forward(&x);
        }
        bn.set_training(false);
        let y = bn.forward(&x);
        // After convergence of the running stats the eval output is close to
        // the train-mode normalization (up to the biased/unbiased factor).
        for ci in 0..2 {
            let ch = y.slice(ndarray::s![.., ci, ..]);
            let mean = ch.sum() / ch.len() as f64;
            assert!(mean.abs() < 1e-6, "channel {ci} mean {mean}");
        }
    }

    #[test]
    fn bn_backward_matches_finite_difference() {
        let x = sample();
        let mut bn = BatchNorm1d::new("bn", 2);
        bn.gamma.w[[0]] = 1.3;
        bn.beta.w[[1]] = -0.4;
        let y = bn.forward(&x);
        let dy = Array3::from_shape_fn(y.raw_dim(), |(b, c, t)| {
            0.1 * (b as f64 + 2.0 * c as f64 - t as f64)
        });
        let dx = bn.backward(&dy);

        let h = 1e-6;
        for &(b, c, t) in &[(0, 0, 0), (2, 1, 4), (1, 0, 2)] {
            let mut fresh = BatchNorm1d::new("bn", 2);
            fresh.gamma.w[[0]] = 1.3;
            fresh.beta.w[[1]] = -0.4;
            let mut xp = x.clone();
            xp[(b, c, t)] += h;
            let lp = (&fresh.forward(&xp) * &dy).sum();
            let mut xm = x.clone();
            xm[(b, c, t)] -= h;
            let lm = (&fresh.forward(&xm) * &dy).sum();
            let fd = (lp - lm) / (2.0 * h);
            assert!((dx[(b, c, t)] - fd).abs() < 1e-6, "at {b},{c},{t}");
        }
    }

    #[test]
    fn layernorm_rows_are_standardized_and_backward_checks() {
        let x = Array3::from_shape_fn((2, 3, 6), |(b, t, d)| {
            (b as f64 - t as f64 * 0.5 + d as f64 * 1.1).sin() * 3.0
        });
        let mut ln = LayerNorm::new("ln", 6);
        let y = ln.forward(&x);
        for bi in 0..2 {
            for ti in 0..3 {
                let row = y.slice(ndarray::s![bi, ti, ..]);
                let mean = row.sum() / 6.0;
                assert!(mean.abs() < 1e-12);
            }
        }
        let dy = Array3::from_shape_fn(y.raw_dim(), |(b, t, d)| {
            ((b + t + d) as f64 * 0.37).cos()
        });
        let dx = ln.backward(&dy);
        let h = 1e-6;
        for &(b, t, d) in &[(0, 0, 0), (1, 2, 5), (0, 1, 3)] {
            let mut fresh = LayerNorm::new("ln", 6);
            let mut xp = x.clone();
            xp[(b, t, d)] += h;
            let lp = (&fresh.forward(&xp) * &dy).sum();
            let mut xm = x.clone();
            xm[(b, t, d)] -= h;
            let lm = (&fresh.forward(&xm) * &dy).sum();
            assert!((dx[(b, t, d)] - (lp - lm) / (2.0 * h)).abs() < 1e-6);
        }
    }
}
