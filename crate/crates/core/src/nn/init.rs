use ndarray::{ArrayD, IxDyn};
use rand::Rng;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization, the PyTorch
/// default for dense and convolution weights and biases.
pub fn uniform_fan_in(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> ArrayD<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut w = ArrayD::zeros(IxDyn(shape));
    for v in w.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bounds_respected_and_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = uniform_fan_in(&mut rng, &[64, 16], 16);
        assert!(w.iter().all(|v| v.abs() < 0.25));
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(w, uniform_fan_in(&mut rng2, &[64, 16], 16));
    }
}
