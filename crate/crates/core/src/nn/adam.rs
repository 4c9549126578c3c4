use super::{Param, Parameterized};
use ndarray::ArrayD;

/// Adam with decoupled-from-nothing L2 weight decay: the decay term is added
/// to the gradient before the moment updates, the convention the paper's
/// framework uses. Moment state is keyed by parameter visit order, so the
/// same optimizer instance must always step the same network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self::with_betas(lr, weight_decay, 0.9, 0.999)
    }

    pub fn with_betas(lr: f64, weight_decay: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, net: &mut impl Parameterized) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        let lr = self.lr;
        let eps = self.eps;
        let wd = self.weight_decay;

        let mut idx = 0;
        let m = &mut self.m;
        let v = &mut self.v;
        net.visit_params(&mut |p: &mut Param| {
            if idx == m.len() {
                m.push(ArrayD::zeros(p.w.raw_dim()));
                v.push(ArrayD::zeros(p.w.raw_dim()));
            }
            if p.trainable {
                let mi = &mut m[idx];
                let vi = &mut v[idx];
                ndarray::Zip::from(&mut p.w)
                    .and(&p.g)
                    .and(mi)
                    .and(vi)
                    .for_each(|w, &g, m, v| {
                        let g = g + wd * *w;
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let m_hat = *m / bias1;
                        let v_hat = *v / bias2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    });
            }
            idx += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, IxDyn};

    struct One {
        p: Param,
    }
    impl Parameterized for One {
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
            f(&mut self.p);
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction, step 1 is lr · g/|g| regardless of magnitude.
        let mut net = One {
            p: Param::new("w", array![10.0].into_dyn()),
        };
        net.p.g = array![0.3].into_dyn();
        let mut opt = Adam::new(0.01, 0.0);
        opt.step(&mut net);
        assert!((net.p.w[[0]] - (10.0 - 0.01)).abs() < 1e-9);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut net = One {
            p: Param::new("w", array![5.0].into_dyn()),
        };
        net.p.g = ArrayD::zeros(IxDyn(&[1]));
        let mut opt = Adam::new(0.1, 1.0);
        for _ in 0..50 {
            net.p.zero_grad();
            opt.step(&mut net);
        }
        assert!(net.p.w[[0]] < 5.0);
    }

    #[test]
    fn buffers_are_left_alone() {
        let mut net = One {
            p: Param::buffer("rm", array![2.0].into_dyn()),
        };
        net.p.g = array![1.0].into_dyn();
        let mut opt = Adam::new(0.1, 0.0);
        opt.step(&mut net);
        assert_eq!(net.p.w[[0]], 2.0);
    }

    #[test]
    fn converges_on_quadratic() {
        // Minimize (w-3)^2 by hand-fed gradients.
        let mut net = One {
            p: Param::new("w", array![0.0].into_dyn()),
        };
        let mut opt = Adam::new(0.05, 0.0);
        for _ in 0..2000 {
            net.p.g = array![2.0 * (net.p.w[[0]] - 3.0)].into_dyn();
            opt.step(&mut net);
        }
        assert!((net.p.w[[0]] - 3.0).abs() < 1e-3);
    }
}
