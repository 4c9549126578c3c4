//! From annotated sessions to model-ready windows.
//!
//! Falls become one 8-second window anchored on the annotation start (four
//! seconds before, four at/after). ADL segments are slid with stride 1,
//! yielding T−7 windows each. Windows standardize per channel with
//! statistics fitted on the training split only, and split stratified so
//! both sides keep the ADL:fall ratio.

mod store;

pub use store::{load_window_set, save_window_set};

use crate::data::{ActivityLabel, Annotation, Category, CHANNELS};
use crate::sim::AnnotatedSession;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Window length in seconds / timesteps.
pub const WINDOW_LEN: usize = 8;

/// Added to the standard deviation denominator to avoid division by zero.
pub const EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("annotation {code} is not a fall")]
    NotAFall { code: ActivityLabel },
    #[error("annotation {code} is not an ADL")]
    NotAnAdl { code: ActivityLabel },
    #[error("fall at {start_time} in session {session_id} lacks 4 seconds of context on a side")]
    InsufficientContext {
        session_id: String,
        start_time: i64,
    },
    #[error("annotation [{start}, {end}) lies outside the session timeline")]
    OutsideSession { start: i64, end: i64 },
    #[error("cannot fit a standardizer on an empty training set")]
    EmptyTrainingSet,
    #[error("split requires at least one {which} window")]
    MissingClass { which: &'static str },
    #[error("train fraction must lie in (0, 1), got {value}")]
    InvalidFraction { value: f64 },
    #[error("corrupt window file: {reason}")]
    Corrupt { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One 8×4 training example with its label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    /// 8 timesteps × 4 channels (hr, br, d, ps).
    pub values: Array2<f64>,
    pub label: Category,
    pub code: ActivityLabel,
    pub session_id: String,
    /// Timestamp of the first reading in the window.
    pub start_time: i64,
}

impl LabeledWindow {
    pub fn class_index(&self) -> usize {
        self.label.class_index()
    }
}

/// Per-channel standardization parameters plus where they were fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
    /// Provenance tag; downstream training asserts this is "train".
    pub fitted_on: String,
}

impl StandardizationStats {
    /// Content hash used to match detectors to the stats they were trained
    /// against.
    pub fn fingerprint(&self) -> String {
        crate::fingerprint::fingerprint_f64s(
            self.mean.iter().chain(self.std.iter()).copied(),
        )
    }
}

/// A stratified train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
    pub seed: u64,
}

/// A window collection with its processing provenance, the unit the window
/// store persists.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<LabeledWindow>,
    /// Present once the set has been standardized.
    pub stats: Option<StandardizationStats>,
    /// "train", "test", or "raw".
    pub role: String,
    /// Fall annotations dropped for lacking boundary context.
    pub dropped_falls: usize,
}

impl WindowSet {
    pub fn class_counts(&self) -> (usize, usize) {
        let falls = self
            .windows
            .iter()
            .filter(|w| w.label == Category::Fall)
            .count();
        (self.windows.len() - falls, falls)
    }

    /// Content hash over values and labels, order-sensitive.
    pub fn fingerprint(&self) -> String {
        crate::fingerprint::fingerprint_f64s(self.windows.iter().flat_map(|w| {
            w.values
                .iter()
                .copied()
                .chain(std::iter::once(w.class_index() as f64))
        }))
    }
}

fn window_at(
    session: &AnnotatedSession,
    readings: &[crate::data::RadarReading],
    t0: i64,
    start: i64,
    label: Category,
    code: ActivityLabel,
) -> LabeledWindow {
    let i = (start - t0) as usize;
    let mut values = Array2::<f64>::zeros((WINDOW_LEN, CHANNELS));
    for (row, reading) in readings[i..i + WINDOW_LEN].iter().enumerate() {
        let ch = reading.channels();
        for c in 0..CHANNELS {
            values[(row, c)] = ch[c];
        }
    }
    LabeledWindow {
        values,
        label,
        code,
        session_id: session.session_id.clone(),
        start_time: start,
    }
}

/// The fall window: `[event_start − 4, event_start + 4)`, anchored on the
/// annotation start, never slid.
pub fn extract_fall_window(
    session: &AnnotatedSession,
    annotation: &Annotation,
) -> Result<LabeledWindow, PreprocessError> {
    if !annotation.label.is_fall() {
        return Err(PreprocessError::NotAFall {
            code: annotation.label,
        });
    }
    let (t0, readings) = session.timeline();
    let end_ts = t0 + readings.len() as i64;
    let half = (WINDOW_LEN / 2) as i64;
    let start = annotation.start_time - half;
    if start < t0 || annotation.start_time + half > end_ts {
        return Err(PreprocessError::InsufficientContext {
            session_id: session.session_id.clone(),
            start_time: annotation.start_time,
        });
    }
    Ok(window_at(
        session,
        &readings,
        t0,
        start,
        Category::Fall,
        annotation.label,
    ))
}

/// Stride-1 sliding windows over one ADL segment: exactly max(0, T−7)
/// windows for a T-second segment.
pub fn slide_adl_windows(
    session: &AnnotatedSession,
    annotation: &Annotation,
) -> Result<Vec<LabeledWindow>, PreprocessError> {
    if annotation.label.is_fall() {
        return Err(PreprocessError::NotAnAdl {
            code: annotation.label,
        });
    }
    let (t0, readings) = session.timeline();
    let end_ts = t0 + readings.len() as i64;
    if annotation.start_time < t0 || annotation.end_time > end_ts {
        return Err(PreprocessError::OutsideSession {
            start: annotation.start_time,
            end: annotation.end_time,
        });
    }
    let t = annotation.duration() as usize;
    if t < WINDOW_LEN {
        return Ok(Vec::new());
    }
    Ok((0..=(t - WINDOW_LEN))
        .map(|offset| {
            window_at(
                session,
                &readings,
                t0,
                annotation.start_time + offset as i64,
                Category::Adl,
                annotation.label,
            )
        })
        .collect())
}

/// All windows of one session. Boundary falls without full context are
/// dropped and counted, not padded.
pub fn windows_from_session(
    session: &AnnotatedSession,
) -> Result<(Vec<LabeledWindow>, usize), PreprocessError> {
    let mut windows = Vec::new();
    let mut dropped = 0usize;
    for annotation in &session.annotations {
        if annotation.label.is_fall() {
            match extract_fall_window(session, annotation) {
                Ok(w) => windows.push(w),
                Err(PreprocessError::InsufficientContext { .. }) => {
                    log::warn!(
                        "dropping boundary fall at {} in {}",
                        annotation.start_time,
                        session.session_id
                    );
                    dropped += 1;
                }
                Err(e) => return Err(e),
            }
        } else {
            windows.extend(slide_adl_windows(session, annotation)?);
        }
    }
    Ok((windows, dropped))
}

/// Windows for a whole dataset, pooled in session order.
pub fn windows_from_sessions(
    sessions: &[AnnotatedSession],
) -> Result<(Vec<LabeledWindow>, usize), PreprocessError> {
    let mut all = Vec::new();
    let mut dropped = 0;
    for session in sessions {
        let (mut w, d) = windows_from_session(session)?;
        all.append(&mut w);
        dropped += d;
    }
    Ok((all, dropped))
}

/// Per-channel mean and population standard deviation over every timestep of
/// every window.
pub fn fit_standardizer(
    train: &[LabeledWindow],
    provenance: &str,
) -> Result<StandardizationStats, PreprocessError> {
    if train.is_empty() {
        return Err(PreprocessError::EmptyTrainingSet);
    }
    let n = (train.len() * WINDOW_LEN) as f64;
    let mut mean = [0.0; CHANNELS];
    for w in train {
        for row in w.values.rows() {
            for c in 0..CHANNELS {
                mean[c] += row[c];
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = [0.0; CHANNELS];
    for w in train {
        for row in w.values.rows() {
            for c in 0..CHANNELS {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
    }
    let mut std = [0.0; CHANNELS];
    for c in 0..CHANNELS {
        std[c] = (var[c] / n).sqrt();
    }
    Ok(StandardizationStats {
        mean,
        std,
        fitted_on: provenance.to_string(),
    })
}

/// out[t][c] = (in[t][c] − mean_c) / (std_c + ε), applied out of place.
pub fn apply_standardizer(
    stats: &StandardizationStats,
    windows: &[LabeledWindow],
) -> Vec<LabeledWindow> {
    windows
        .iter()
        .map(|w| {
            let mut out = w.clone();
            for mut row in out.values.rows_mut() {
                for c in 0..CHANNELS {
                    row[c] = (row[c] - stats.mean[c]) / (stats.std[c] + EPSILON);
                }
            }
            out
        })
        .collect()
}

/// Standardizes a single raw window in place, the per-reading path the
/// streaming service uses.
pub fn standardize_values(stats: &StandardizationStats, values: &mut Array2<f64>) {
    for mut row in values.rows_mut() {
        for c in 0..CHANNELS {
            row[c] = (row[c] - stats.mean[c]) / (stats.std[c] + EPSILON);
        }
    }
}

/// Per-class shuffled 80/20 (by default) partition, deterministic per seed.
pub fn stratified_split(
    windows: Vec<LabeledWindow>,
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, PreprocessError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(PreprocessError::InvalidFraction {
            value: train_fraction,
        });
    }
    let mut adl = Vec::new();
    let mut fall = Vec::new();
    for w in windows {
        match w.label {
            Category::Adl => adl.push(w),
            Category::Fall => fall.push(w),
        }
    }
    if adl.is_empty() {
        return Err(PreprocessError::MissingClass { which: "ADL" });
    }
    if fall.is_empty() {
        return Err(PreprocessError::MissingClass { which: "fall" });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut class in [adl, fall] {
        class.shuffle(&mut rng);
        let n = class.len();
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(
            1,
            if n > 1 { n - 1 } else { 1 },
        );
        let rest = class.split_off(n_train);
        train.extend(class);
        test.extend(rest);
    }
    Ok(DatasetSplit { train, test, seed })
}
