use super::{init::uniform_fan_in, view1, view2, Param, Parameterized};
use ndarray::{Array2, ArrayD, Axis};
use rand::Rng;

/// Fully connected layer: y = x · W + b with W of shape `[in, out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    cache_x: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                uniform_fan_in(rng, &[d_in, d_out], d_in),
            ),
            bias: Param::new(format!("{name}.bias"), uniform_fan_in(rng, &[d_out], d_in)),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let w = view2(&self.weight.w);
        let mut y = x.dot(&w);
        y += &view1(&self.bias.w);
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.as_ref().expect("forward before backward");
        let w = view2(&self.weight.w);
        let dx = dy.dot(&w.t());
        let dw = x.t().dot(dy);
        self.weight.g += &dw.into_dyn();
        let db: ArrayD<f64> = dy.sum_axis(Axis(0)).into_dyn();
        self.bias.g += &db;
        dx
    }
}

impl Parameterized for Dense {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = Dense::new("fc", 2, 2, &mut rng);
        layer.weight.w = array![[1.0, 2.0], [3.0, 4.0]].into_dyn();
        layer.bias.w = array![0.5, -0.5].into_dyn();
        let y = layer.forward(&array![[1.0, 1.0]]);
        assert_eq!(y, array![[4.5, 5.5]]);
    }

    #[test]
    fn backward_gradients_match_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = Dense::new("fc", 2, 1, &mut rng);
        layer.weight.w = array![[2.0], [3.0]].into_dyn();
        layer.bias.w = array![0.0].into_dyn();
        layer.forward(&array![[1.0, 4.0]]);
        let dx = layer.backward(&array![[1.0]]);
        assert_eq!(dx, array![[2.0, 3.0]]);
        assert_eq!(layer.weight.g, array![[1.0], [4.0]].into_dyn());
        assert_eq!(layer.bias.g, array![1.0].into_dyn());
    }
}
