use ndarray::{Array1, Array2};

/// Row-wise softmax with the usual max-shift for stability.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Class-weighted focal loss configuration. `gamma = 0` with unit weights is
/// plain cross-entropy.
#[derive(Debug, Clone)]
pub struct FocalLossSpec {
    pub class_weights: Vec<f64>,
    pub gamma: f64,
}

impl FocalLossSpec {
    pub fn cross_entropy(n_classes: usize) -> Self {
        Self {
            class_weights: vec![1.0; n_classes],
            gamma: 0.0,
        }
    }
}

/// Mean of w_y · (1−p_y)^γ · (−log p_y) over the batch, with its exact
/// gradient w.r.t. the logits (the 1/batch factor included).
pub fn focal_loss(
    logits: &Array2<f64>,
    labels: &[usize],
    spec: &FocalLossSpec,
) -> (f64, Array2<f64>) {
    let (b, c) = logits.dim();
    assert_eq!(labels.len(), b, "one label per row");
    let gamma = spec.gamma;
    let mut total = 0.0;
    let mut dlogits = Array2::<f64>::zeros((b, c));

    for (i, &y) in labels.iter().enumerate() {
        assert!(y < c, "label out of range");
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let logp_y = row[y] - lse;
        let p_y = logp_y.exp();
        let w = spec.class_weights[y];
        let one_minus = 1.0 - p_y;

        if gamma == 0.0 {
            total += -w * logp_y;
            for j in 0..c {
                let s_j = (row[j] - lse).exp();
                let delta = if j == y { 1.0 } else { 0.0 };
                dlogits[(i, j)] = w * (s_j - delta);
            }
        } else {
            total += w * one_minus.powf(gamma) * (-logp_y);
            // d/dz_j = w·[γ·p·(1−p)^{γ−1}·log p − (1−p)^γ]·(δ_{jy} − s_j);
            // at p = 1 every factor vanishes, so force 0 instead of 0·inf.
            let factor = if one_minus == 0.0 {
                0.0
            } else {
                w * (gamma * p_y * one_minus.powf(gamma - 1.0) * logp_y
                    - one_minus.powf(gamma))
            };
            for j in 0..c {
                let s_j = (row[j] - lse).exp();
                let delta = if j == y { 1.0 } else { 0.0 };
                dlogits[(i, j)] = factor * (delta - s_j);
            }
        }
    }

    let scale = 1.0 / b as f64;
    (total * scale, dlogits * scale)
}

/// Numerically stable binary cross-entropy on logits, mean-reduced, with its
/// logit gradient.
pub fn sigmoid_bce_with_logits(logits: &Array1<f64>, targets: &Array1<f64>) -> (f64, Array1<f64>) {
    assert_eq!(logits.len(), targets.len());
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Array1::<f64>::zeros(logits.len());
    for i in 0..logits.len() {
        let z = logits[i];
        let t = targets[i];
        total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        let sig = 1.0 / (1.0 + (-z).exp());
        grad[i] = (sig - t) / n;
    }
    (total / n, grad)
}
