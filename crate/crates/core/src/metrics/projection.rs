//! 2-D views of feature vectors for real-vs-synthetic scatter plots.
//!
//! PCA projects onto the top two eigenvectors of the feature covariance
//! (sign-fixed so the largest-magnitude component is positive). t-SNE is the
//! exact O(n²) variant, seeded, which is plenty for the few hundred windows
//! a plot holds.

use super::{feature_vector, FeatureVector, MetricsError, FEATURE_DIM};
use crate::preprocess::LabeledWindow;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

/// PCA basis and scores, kept around so callers can reconstruct.
#[derive(Debug, Clone)]
pub struct Pca2d {
    pub points: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

pub fn project_2d(
    windows: &[LabeledWindow],
    method: ProjectionMethod,
    seed: u64,
) -> Result<Vec<[f64; 2]>, MetricsError> {
    if windows.len() < 3 {
        return Err(MetricsError::TooFewPoints {
            needed: 3,
            got: windows.len(),
        });
    }
    let features: Vec<FeatureVector> = windows.iter().map(|w| feature_vector(&w.values)).collect();
    match method {
        ProjectionMethod::Pca => Ok(pca_2d(&features)?.points),
        ProjectionMethod::Tsne => Ok(tsne_2d(&features, seed)),
    }
}

pub fn pca_2d(features: &[FeatureVector]) -> Result<Pca2d, MetricsError> {
    if features.len() < 3 {
        return Err(MetricsError::TooFewPoints {
            needed: 3,
            got: features.len(),
        });
    }
    let n = features.len();
    let mut mean = vec![0.0; FEATURE_DIM];
    for f in features {
        for (m, v) in mean.iter_mut().zip(&f.0) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let mut cov = DMatrix::<f64>::zeros(FEATURE_DIM, FEATURE_DIM);
    for f in features {
        for i in 0..FEATURE_DIM {
            let di = f.0[i] - mean[i];
            for j in i..FEATURE_DIM {
                cov[(i, j)] += di * (f.0[j] - mean[j]);
            }
        }
    }
    for i in 0..FEATURE_DIM {
        for j in i..FEATURE_DIM {
            cov[(i, j)] /= n as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }

    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..FEATURE_DIM).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut components: [Vec<f64>; 2] = [vec![0.0; FEATURE_DIM], vec![0.0; FEATURE_DIM]];
    for (k, &col) in order[..2].iter().enumerate() {
        let mut v: Vec<f64> = eigen.eigenvectors.column(col).iter().copied().collect();
        // Fix the sign: largest-magnitude entry points positive.
        let dominant = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap();
        if dominant < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        components[k] = v;
    }

    let points = features
        .iter()
        .map(|f| {
            let mut p = [0.0; 2];
            for (k, comp) in components.iter().enumerate() {
                p[k] = f
                    .0
                    .iter()
                    .zip(&mean)
                    .zip(comp)
                    .map(|((x, m), c)| (x - m) * c)
                    .sum();
            }
            p
        })
        .collect();

    Ok(Pca2d {
        points,
        components,
        mean,
    })
}

const TSNE_ITERS: usize = 500;
const TSNE_EXAGGERATION_ITERS: usize = 100;
const TSNE_EXAGGERATION: f64 = 4.0;
const TSNE_LR: f64 = 50.0;

fn pairwise_sq_dists(features: &[FeatureVector]) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist: f64 = features[i]
                .0
                .iter()
                .zip(&features[j].0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    d
}

/// Binary-search the Gaussian precision for row i so the conditional
/// distribution hits the target entropy.
fn conditional_probs(dists: &[f64], i: usize, target_entropy: f64) -> Vec<f64> {
    let n = dists.len();
    let mut beta = 1.0;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut p = vec![0.0; n];
    for _ in 0..50 {
        let mut sum = 0.0;
        for j in 0..n {
            p[j] = if j == i { 0.0 } else { (-dists[j] * beta).exp() };
            sum += p[j];
        }
        if sum <= 0.0 {
            sum = f64::MIN_POSITIVE;
        }
        let mut entropy = 0.0;
        for pj in p.iter_mut() {
            *pj /= sum;
            if *pj > 1e-300 {
                entropy -= *pj * pj.ln();
            }
        }
        if (entropy - target_entropy).abs() < 1e-5 {
            break;
        }
        if entropy > target_entropy {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    p
}

pub fn tsne_2d(features: &[FeatureVector], seed: u64) -> Vec<[f64; 2]> {
    let n = features.len();
    let dists = pairwise_sq_dists(features);
    let perplexity = 30.0f64.min(((n - 1) as f64 / 3.0).max(1.0));
    let target_entropy = perplexity.ln();

    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        let row = conditional_probs(&dists[i], i, target_entropy);
        for j in 0..n {
            p[i][j] = row[j];
        }
    }
    // Symmetrize and normalize over all pairs.
    let mut pij = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            pij[i][j] = ((p[i][j] + p[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a: f64 = rng.sample(normal);
            let b: f64 = rng.sample(normal);
            [a * 1e-4, b * 1e-4]
        })
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];

    for iter in 0..TSNE_ITERS {
        let exaggeration = if iter < TSNE_EXAGGERATION_ITERS {
            TSNE_EXAGGERATION
        } else {
            1.0
        };
        let momentum = if iter < 20 { 0.5 } else { 0.8 };

        // Student-t affinities in the embedding.
        let mut num = vec![vec![0.0; n]; n];
        let mut qsum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let t = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i][j] = t;
                num[j][i] = t;
                qsum += 2.0 * t;
            }
        }

        for i in 0..n {
            let mut grad = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i][j] / qsum).max(1e-12);
                let mult = (exaggeration * pij[i][j] - q) * num[i][j];
                grad[0] += mult * (y[i][0] - y[j][0]);
                grad[1] += mult * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                gains[i][d] = if grad[d].signum() != velocity[i][d].signum() {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                velocity[i][d] = momentum * velocity[i][d] - TSNE_LR * gains[i][d] * grad[d];
                y[i][d] += velocity[i][d];
            }
        }

        // Re-center so the embedding doesn't drift.
        let cx = y.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        for p in y.iter_mut() {
            p[0] -= cx;
            p[1] -= cy;
        }
    }
    y
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Writes an SVG scatter plot, one color per distinct group name in order of
/// first appearance.
pub fn render_scatter(
    points: &[[f64; 2]],
    groups: &[String],
    title: &str,
    path: &Path,
) -> Result<(), MetricsError> {
    assert_eq!(points.len(), groups.len(), "one group tag per point");
    let (width, height, margin) = (640.0, 480.0, 48.0);

    let mut group_names: Vec<&String> = Vec::new();
    for g in groups {
        if !group_names.contains(&g) {
            group_names.push(g);
        }
    }

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let span = |lo: f64, hi: f64| if hi - lo < 1e-12 { 1.0 } else { hi - lo };
    let sx = (width - 2.0 * margin) / span(min_x, max_x);
    let sy = (height - 2.0 * margin) / span(min_y, max_y);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        width / 2.0
    ));
    for (p, g) in points.iter().zip(groups) {
        let gi = group_names.iter().position(|n| *n == g).unwrap();
        let x = margin + (p[0] - min_x) * sx;
        let y = height - margin - (p[1] - min_y) * sy;
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
            PALETTE[gi % PALETTE.len()]
        ));
    }
    for (gi, name) in group_names.iter().enumerate() {
        let y = 40.0 + gi as f64 * 18.0;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            width - 150.0,
            y - 10.0,
            PALETTE[gi % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>\n",
            width - 132.0
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActivityLabel, Category};
    use ndarray::Array2;

    fn feature(seed_val: f64) -> FeatureVector {
        let mut v = [0.0; FEATURE_DIM];
        for (i, x) in v.iter_mut().enumerate() {
            *x = (seed_val + i as f64 * 0.713).sin();
        }
        FeatureVector(v)
    }

    #[test]
    fn pca_reconstructs_a_planar_cloud_exactly() {
        // Build an orthonormal pair and scatter points inside their span.
        let mut u = feature(1.0).0;
        let mut v = feature(2.0).0;
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in u.iter_mut() {
            *x /= nu;
        }
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        for (x, &uu) in v.iter_mut().zip(&u) {
            *x -= dot * uu;
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= nv;
        }

        let features: Vec<FeatureVector> = (0..40)
            .map(|i| {
                let a = (i as f64 * 0.37).sin() * 3.0;
                let b = (i as f64 * 0.53).cos() * 2.0;
                let mut f = [0.0; FEATURE_DIM];
                for k in 0..FEATURE_DIM {
                    f[k] = 5.0 + a * u[k] + b * v[k];
                }
                FeatureVector(f)
            })
            .collect();

        let pca = pca_2d(&features).unwrap();
        for (f, p) in features.iter().zip(&pca.points) {
            for k in 0..FEATURE_DIM {
                let rebuilt =
                    pca.mean[k] + p[0] * pca.components[0][k] + p[1] * pca.components[1][k];
                assert!((rebuilt - f.0[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pca_scores_are_ordering_invariant() {
        let features: Vec<FeatureVector> = (0..25).map(|i| feature(i as f64 * 0.91)).collect();
        let forward = pca_2d(&features).unwrap();
        let mut reversed_input = features.clone();
        reversed_input.reverse();
        let backward = pca_2d(&reversed_input).unwrap();
        for (i, p) in forward.points.iter().enumerate() {
            let q = backward.points[features.len() - 1 - i];
            for d in 0..2 {
                assert!(
                    (p[d] - q[d]).abs() < 1e-9 || (p[d] + q[d]).abs() < 1e-9,
                    "axis {d}: {} vs {}",
                    p[d],
                    q[d]
                );
            }
        }
    }

    fn toy_windows(n: usize) -> Vec<LabeledWindow> {
        (0..n)
            .map(|i| LabeledWindow {
                values: Array2::from_shape_fn((8, 4), |(r, c)| {
                    let base = if i % 2 == 0 { 0.0 } else { 10.0 };
                    base + (r as f64 * 0.3 + c as f64).sin() * 0.1
                }),
                label: Category::Adl,
                code: ActivityLabel::Sta,
                session_id: "s".to_string(),
                start_time: i as i64,
            })
            .collect()
    }

    #[test]
    fn tsne_is_seed_deterministic_and_separates_clusters() {
        let windows = toy_windows(30);
        let a = project_2d(&windows, ProjectionMethod::Tsne, 7).unwrap();
        let b = project_2d(&windows, ProjectionMethod::Tsne, 7).unwrap();
        assert_eq!(a, b);
        let c = project_2d(&windows, ProjectionMethod::Tsne, 8).unwrap();
        assert_ne!(a, c);

        // The two interleaved value levels should land in separate blobs.
        let centroid = |pts: &[[f64; 2]], parity: usize| {
            let sel: Vec<&[f64; 2]> = pts.iter().skip(parity).step_by(2).collect();
            let n = sel.len() as f64;
            [
                sel.iter().map(|p| p[0]).sum::<f64>() / n,
                sel.iter().map(|p| p[1]).sum::<f64>() / n,
            ]
        };
        let c0 = centroid(&a, 0);
        let c1 = centroid(&a, 1);
        let between = ((c0[0] - c1[0]).powi(2) + (c0[1] - c1[1]).powi(2)).sqrt();
        let spread = a
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let c = if i % 2 == 0 { c0 } else { c1 };
                ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
            })
            .fold(0.0f64, f64::max);
        assert!(
            between > spread,
            "clusters should separate: between {between}, spread {spread}"
        );
    }

    #[test]
    fn projection_rejects_tiny_inputs() {
        let windows = toy_windows(2);
        assert!(matches!(
            project_2d(&windows, ProjectionMethod::Pca, 0),
            Err(MetricsError::TooFewPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn scatter_svg_has_a_circle_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        let points = vec![[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]];
        let groups = vec!["real".to_string(), "real".to_string(), "synthetic".to_string()];
        render_scatter(&points, &groups, "pca", &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("synthetic"));
    }
}
