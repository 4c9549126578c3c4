use ndarray::ArrayD;

/// Elementwise max(0, x).
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<ArrayD<f64>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        dy * self.mask.as_ref().expect("forward before backward")
    }
}

const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
const GELU_CUBIC: f64 = 0.044715;

/// GELU with the tanh approximation used by transformer stacks.
#[derive(Debug, Clone, Default)]
pub struct Gelu {
    cache_x: Option<ArrayD<f64>>,
}

impl Gelu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let y = x.mapv(gelu);
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let x = self.cache_x.as_ref().expect("forward before backward");
        dy * &x.mapv(gelu_deriv)
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_CUBIC * x.powi(3))).tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x.powi(3));
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relu_masks_negatives() {
        let mut relu = Relu::new();
        let y = relu.forward(&array![[-1.0, 0.0, 2.0]].into_dyn());
        assert_eq!(y, array![[0.0, 0.0, 2.0]].into_dyn());
        let dx = relu.backward(&array![[5.0, 5.0, 5.0]].into_dyn());
        assert_eq!(dx, array![[0.0, 0.0, 5.0]].into_dyn());
    }

    #[test]
    fn gelu_reference_values() {
        assert!((gelu(0.0)).abs() < 1e-15);
        assert!((gelu(1.0) - 0.8411919906082768).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.1588080093917232).abs() < 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        for &x in &[-2.5, -0.7, 0.0, 0.3, 1.9] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_deriv(x) - fd).abs() < 1e-8, "x={x}");
        }
    }
}
