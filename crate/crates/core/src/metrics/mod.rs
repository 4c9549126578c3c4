//! Evaluation formulas for the imbalanced two-class problem.
//!
//! The headline score is the harmonic mean of sensitivity and specificity
//! (named [`f1_sens_spec`] to keep it apart from the precision-based F1,
//! which is also exported). Metrics with a zero denominator are reported as
//! absent, never as 0.

mod features;
mod projection;

pub use features::{
    avg_cosine_similarity, cosine_similarity, feature_vector, FeatureVector, Pairing,
    FEATURE_DIM, STATS_PER_CHANNEL,
};
pub use projection::{pca_2d, project_2d, render_scatter, tsne_2d, Pca2d, ProjectionMethod};

use crate::data::Category;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label vectors differ in length: {truth} vs {predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("cannot evaluate an empty label set")]
    Empty,
    #[error("{metric} is undefined for this confusion matrix")]
    UndefinedMetric { metric: &'static str },
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("both window sets must be non-empty")]
    EmptySet,
    #[error("projection needs at least {needed} windows, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Counts with Fall as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }
}

pub fn confusion(
    truth: &[Category],
    predicted: &[Category],
) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (Category::Fall, Category::Fall) => cm.true_positives += 1,
            (Category::Fall, Category::Adl) => cm.false_negatives += 1,
            (Category::Adl, Category::Fall) => cm.false_positives += 1,
            (Category::Adl, Category::Adl) => cm.true_negatives += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, denom: u64, metric: &'static str) -> Result<f64, MetricsError> {
    if denom == 0 {
        Err(MetricsError::UndefinedMetric { metric })
    } else {
        Ok(num as f64 / denom as f64)
    }
}

/// TP / (TP + FN): the fraction of falls detected.
pub fn sensitivity(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    ratio(
        cm.true_positives,
        cm.true_positives + cm.false_negatives,
        "sensitivity",
    )
}

/// TN / (TN + FP): the fraction of ADL windows left alone.
pub fn specificity(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    ratio(
        cm.true_negatives,
        cm.true_negatives + cm.false_positives,
        "specificity",
    )
}

/// Harmonic mean of sensitivity and specificity. This is deliberately not
/// the precision-based F1; see [`f1_precision_recall`] for that one.
pub fn f1_sens_spec(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let sens = sensitivity(cm)?;
    let spec = specificity(cm)?;
    if sens + spec == 0.0 {
        return Err(MetricsError::UndefinedMetric { metric: "f1" });
    }
    Ok(2.0 * sens * spec / (sens + spec))
}

/// (sensitivity + specificity) / 2.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    Ok((sensitivity(cm)? + specificity(cm)?) / 2.0)
}

/// TP / (TP + FP).
pub fn precision(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    ratio(
        cm.true_positives,
        cm.true_positives + cm.false_positives,
        "precision",
    )
}

/// The conventional F1 over precision and recall, exported for completeness.
pub fn f1_precision_recall(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let p = precision(cm)?;
    let r = sensitivity(cm)?;
    if p + r == 0.0 {
        return Err(MetricsError::UndefinedMetric { metric: "f1_pr" });
    }
    Ok(2.0 * p * r / (p + r))
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    ratio(
        cm.true_positives + cm.true_negatives,
        cm.total(),
        "accuracy",
    )
}

/// One evaluated (architecture, strategy) cell. Undefined metrics serialize
/// as absent fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub architecture: String,
    pub strategy: String,
    pub confusion: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specificity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_precision_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix, architecture: &str, strategy: &str) -> Self {
        MetricsReport {
            architecture: architecture.to_string(),
            strategy: strategy.to_string(),
            confusion: cm,
            sensitivity: sensitivity(&cm).ok(),
            specificity: specificity(&cm).ok(),
            f1: f1_sens_spec(&cm).ok(),
            balanced_accuracy: balanced_accuracy(&cm).ok(),
            f1_precision_recall: f1_precision_recall(&cm).ok(),
            accuracy: accuracy(&cm).ok(),
        }
    }
}

/// Architecture-by-strategy matrices in the shape of the comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTables {
    pub architectures: Vec<String>,
    pub strategies: Vec<String>,
    /// `balanced_accuracy[a][s]` for architecture `a`, strategy `s`.
    pub balanced_accuracy: Vec<Vec<Option<f64>>>,
    pub f1: Vec<Vec<Option<f64>>>,
}

impl GridTables {
    /// Arranges reports into the given row/column order; missing cells stay
    /// `None`, duplicate cells keep the last report.
    pub fn from_reports(
        reports: &[MetricsReport],
        architectures: &[String],
        strategies: &[String],
    ) -> Self {
        let mut ba = vec![vec![None; strategies.len()]; architectures.len()];
        let mut f1 = vec![vec![None; strategies.len()]; architectures.len()];
        for report in reports {
            let (Some(a), Some(s)) = (
                architectures.iter().position(|x| *x == report.architecture),
                strategies.iter().position(|x| *x == report.strategy),
            ) else {
                continue;
            };
            ba[a][s] = report.balanced_accuracy;
            f1[a][s] = report.f1;
        }
        GridTables {
            architectures: architectures.to_vec(),
            strategies: strategies.to_vec(),
            balanced_accuracy: ba,
            f1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(spec: &[(Category, Category, usize)]) -> (Vec<Category>, Vec<Category>) {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for &(truth, pred, n) in spec {
            t.extend(std::iter::repeat(truth).take(n));
            p.extend(std::iter::repeat(pred).take(n));
        }
        (t, p)
    }

    #[test]
    fn confusion_counts_fall_as_positive() {
        let (t, p) = labels(&[
            (Category::Fall, Category::Fall, 200),
            (Category::Fall, Category::Adl, 50),
            (Category::Adl, Category::Adl, 8000),
            (Category::Adl, Category::Fall, 880),
        ]);
        let cm = confusion(&t, &p).unwrap();
        assert_eq!(cm.true_positives, 200);
        assert_eq!(cm.false_negatives, 50);
        assert_eq!(cm.true_negatives, 8000);
        assert_eq!(cm.false_positives, 880);
        assert_eq!(cm.total(), 9130);

        assert!((sensitivity(&cm).unwrap() - 0.8).abs() < 1e-12);
        assert!((specificity(&cm).unwrap() - 8000.0 / 8880.0).abs() < 1e-12);
        assert!((f1_sens_spec(&cm).unwrap() - 0.8474576271186439).abs() < 1e-10);
        assert!((balanced_accuracy(&cm).unwrap() - 0.8504504504504504).abs() < 1e-10);
    }

    #[test]
    fn inverting_predictions_swaps_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t: Vec<Category> = (0..500)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    Category::Fall
                } else {
                    Category::Adl
                }
            })
            .collect();
        let p: Vec<Category> = (0..500)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Category::Fall
                } else {
                    Category::Adl
                }
            })
            .collect();
        let inv: Vec<Category> = p
            .iter()
            .map(|&c| match c {
                Category::Fall => Category::Adl,
                Category::Adl => Category::Fall,
            })
            .collect();
        let cm = confusion(&t, &p).unwrap();
        let cmi = confusion(&t, &inv).unwrap();
        assert_eq!(cm.true_positives, cmi.false_negatives);
        assert_eq!(cm.false_negatives, cmi.true_positives);
        assert_eq!(cm.true_negatives, cmi.false_positives);
        assert_eq!(cm.false_positives, cmi.true_negatives);
    }

    #[test]
    fn length_and_empty_errors() {
        let (t, _) = labels(&[(Category::Adl, Category::Adl, 3)]);
        assert!(matches!(
            confusion(&t, &t[..2]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(confusion(&[], &[]), Err(MetricsError::Empty)));
    }

    #[test]
    fn undefined_denominators_are_errors_not_zero() {
        let cm = ConfusionMatrix {
            true_positives: 5,
            false_negatives: 2,
            ..Default::default()
        };
        assert!(matches!(
            specificity(&cm),
            Err(MetricsError::UndefinedMetric { metric: "specificity" })
        ));
        assert!(f1_sens_spec(&cm).is_err());
        assert!(balanced_accuracy(&cm).is_err());
        let report = MetricsReport::from_confusion(cm, "fcn", "none");
        assert_eq!(report.specificity, None);
        let json = serde_json::to_string(&report).unwrap();
        assert!(!json.contains("specificity"));
    }

    #[test]
    fn zero_sum_f1_is_undefined_but_one_sided_zero_is_zero() {
        // sens = 0, spec = 1 is a legal 0.0.
        let cm = ConfusionMatrix {
            false_negatives: 3,
            true_negatives: 10,
            ..Default::default()
        };
        assert_eq!(f1_sens_spec(&cm).unwrap(), 0.0);
        // sens = 0, spec = 0 has no harmonic mean.
        let cm = ConfusionMatrix {
            false_negatives: 3,
            false_positives: 10,
            ..Default::default()
        };
        assert!(matches!(
            f1_sens_spec(&cm),
            Err(MetricsError::UndefinedMetric { .. })
        ));
    }

    #[test]
    fn metrics_match_brute_force_on_random_label_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..60);
            let fall_rate = rng.gen_range(0.0..1.0);
            let hit_rate = rng.gen_range(0.0..1.0);
            let t: Vec<Category> = (0..n)
                .map(|_| {
                    if rng.gen_bool(fall_rate) {
                        Category::Fall
                    } else {
                        Category::Adl
                    }
                })
                .collect();
            let p: Vec<Category> = (0..n)
                .map(|_| {
                    if rng.gen_bool(hit_rate) {
                        Category::Fall
                    } else {
                        Category::Adl
                    }
                })
                .collect();
            let cm = confusion(&t, &p).unwrap();

            let count = |tc, pc| {
                t.iter()
                    .zip(&p)
                    .filter(|&(&a, &b)| a == tc && b == pc)
                    .count() as f64
            };
            let tp = count(Category::Fall, Category::Fall);
            let fn_ = count(Category::Fall, Category::Adl);
            let tn = count(Category::Adl, Category::Adl);
            let fp = count(Category::Adl, Category::Fall);

            match sensitivity(&cm) {
                Ok(v) => assert_eq!(v, tp / (tp + fn_)),
                Err(_) => assert_eq!(tp + fn_, 0.0),
            }
            match specificity(&cm) {
                Ok(v) => assert_eq!(v, tn / (tn + fp)),
                Err(_) => assert_eq!(tn + fp, 0.0),
            }
            if let (Ok(s), Ok(c)) = (sensitivity(&cm), specificity(&cm)) {
                if s + c > 0.0 {
                    assert_eq!(f1_sens_spec(&cm).unwrap(), 2.0 * s * c / (s + c));
                }
                assert_eq!(balanced_accuracy(&cm).unwrap(), (s + c) / 2.0);
                // AM >= HM, equal only when the two rates coincide.
                let ba = (s + c) / 2.0;
                if let Ok(f1) = f1_sens_spec(&cm) {
                    assert!(ba >= f1 - 1e-15);
                    if (s - c).abs() > 1e-12 {
                        assert!(ba > f1);
                    }
                }
            }
        }
    }

    #[test]
    fn grid_tables_place_cells_by_label() {
        let cm = ConfusionMatrix {
            true_positives: 1,
            true_negatives: 1,
            ..Default::default()
        };
        let reports = vec![
            MetricsReport::from_confusion(cm, "fcn", "ros"),
            MetricsReport::from_confusion(cm, "lstm", "none"),
        ];
        let archs = vec!["fcn".to_string(), "lstm".to_string()];
        let strats = vec!["none".to_string(), "ros".to_string()];
        let tables = GridTables::from_reports(&reports, &archs, &strats);
        assert_eq!(tables.balanced_accuracy[0][1], Some(1.0));
        assert_eq!(tables.balanced_accuracy[1][0], Some(1.0));
        assert_eq!(tables.balanced_accuracy[0][0], None);
        assert_eq!(tables.f1[1][1], None);
    }
}
