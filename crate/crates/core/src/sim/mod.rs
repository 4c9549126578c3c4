//! Seeded synthetic session generator.
//!
//! The real bedroom-monitoring dataset is private, so experiments run on
//! synthetic sessions that follow the same collection protocol: a scripted
//! sequence of ADLs and falls, repeated per participant, with idle buffers
//! between spans and manual-style annotations marking each span. Signals are
//! piecewise templates plus seeded Gaussian noise; see [`templates`] for the
//! shapes. Everything is deterministic given (profile, script, seed).

mod templates;

use crate::data::{
    validate_annotations, ActivityLabel, Annotation, DataError, DatasetManifest, EventSequence,
    HealthSensingEvent, PhysiologicalState, RadarReading, SessionEntry,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::path::Path;
use templates::{adl_trace, buffer_trace, fall_trace, segment_start_offset, Aftermath, Trace};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("profile field {field} out of range: {value}")]
    InvalidProfile { field: &'static str, value: f64 },
    #[error("invalid protocol script: {reason}")]
    InvalidScript { reason: String },
    #[error("difficulty must lie in [0, 1], got {value}")]
    InvalidDifficulty { value: f64 },
    #[error("dataset needs at least one participant")]
    NoParticipants,
    #[error("session timeline has gaps")]
    NonContiguous,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Physical and noise characteristics of one monitored person.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantProfile {
    pub id: String,
    pub resting_hr: f64,
    pub resting_br: f64,
    pub baseline_distance: f64,
    pub noise_hr: f64,
    pub noise_br: f64,
    pub noise_d: f64,
}

impl ParticipantProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        let checks = [
            ("resting_hr", self.resting_hr, 40.0, 120.0),
            ("resting_br", self.resting_br, 5.0, 30.0),
            ("baseline_distance", self.baseline_distance, 1.0, 3.0),
            ("noise_hr", self.noise_hr, 0.0, 10.0),
            ("noise_br", self.noise_br, 0.0, 5.0),
            ("noise_d", self.noise_d, 0.0, 0.5),
        ];
        for (field, value, lo, hi) in checks {
            if !(lo..=hi).contains(&value) {
                return Err(SimError::InvalidProfile { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptEntry {
    pub label: ActivityLabel,
    pub duration_s: usize,
    pub repetitions: u32,
}

/// Ordered collection protocol: every entry runs `repetitions` times with an
/// idle buffer before and after each span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolScript {
    entries: Vec<ScriptEntry>,
    buffer_s: usize,
}

impl ProtocolScript {
    pub fn new(entries: Vec<ScriptEntry>, buffer_s: usize) -> Result<Self, SimError> {
        if entries.is_empty() {
            return Err(SimError::InvalidScript {
                reason: "empty script".to_string(),
            });
        }
        if buffer_s < 10 {
            return Err(SimError::InvalidScript {
                reason: format!("buffer {buffer_s}s violates the 10-second fall buffer"),
            });
        }
        for e in &entries {
            if e.repetitions < 3 {
                return Err(SimError::InvalidScript {
                    reason: format!("{} repeated {} times, need at least 3", e.label, e.repetitions),
                });
            }
            if e.duration_s == 0 {
                return Err(SimError::InvalidScript {
                    reason: format!("{} has zero duration", e.label),
                });
            }
        }
        Ok(Self { entries, buffer_s })
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn buffer_s(&self) -> usize {
        self.buffer_s
    }
}

/// Duration constants for the default protocol. The source protocol does not
/// publish per-activity durations; these are declared defaults.
pub const DEFAULT_ADL_SECONDS: usize = 20;
pub const DEFAULT_FALL_SECONDS: usize = 2;
pub const DEFAULT_BUFFER_SECONDS: usize = 10;

/// All 19 activity codes, three repetitions each, 20-second ADLs and
/// 2-second fall impacts with 10-second buffers.
pub fn default_script() -> ProtocolScript {
    let entries = ActivityLabel::ALL
        .iter()
        .map(|&label| ScriptEntry {
            label,
            duration_s: if label.is_fall() {
                DEFAULT_FALL_SECONDS
            } else {
                DEFAULT_ADL_SECONDS
            },
            repetitions: 3,
        })
        .collect();
    ProtocolScript::new(entries, DEFAULT_BUFFER_SECONDS).expect("default script is valid")
}

/// A generated session: contiguous 1 Hz readings plus span annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSession {
    pub session_id: String,
    pub sequence: EventSequence,
    pub annotations: Vec<Annotation>,
}

impl AnnotatedSession {
    pub fn new(
        session_id: impl Into<String>,
        sequence: EventSequence,
        annotations: Vec<Annotation>,
    ) -> Result<Self, SimError> {
        if !sequence.is_contiguous() {
            return Err(SimError::NonContiguous);
        }
        validate_annotations(&annotations)?;
        let start = sequence.events().first().map(|e| e.start_ts()).unwrap_or(0);
        let end = sequence.events().last().map(|e| e.end_ts()).unwrap_or(0);
        for a in &annotations {
            if a.start_time < start || a.end_time > end {
                return Err(DataError::InvalidAnnotation {
                    start: a.start_time,
                    end: a.end_time,
                }
                .into());
            }
        }
        Ok(Self {
            session_id: session_id.into(),
            sequence,
            annotations,
        })
    }

    pub fn start_ts(&self) -> i64 {
        self.sequence
            .events()
            .first()
            .map(|e| e.start_ts())
            .unwrap_or(0)
    }

    pub fn end_ts(&self) -> i64 {
        self.sequence
            .events()
            .last()
            .map(|e| e.end_ts())
            .unwrap_or(0)
    }

    /// The contiguous reading timeline: (first timestamp, readings).
    pub fn timeline(&self) -> (i64, Vec<RadarReading>) {
        let readings = self
            .sequence
            .flatten()
            .map(|(_, r)| *r)
            .collect::<Vec<_>>();
        (self.start_ts(), readings)
    }

    pub fn fall_annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(|a| a.label.is_fall())
    }
}

enum Span {
    Buffer { len: usize },
    Activity { label: ActivityLabel, len: usize },
}

/// Simulates one participant session. Spans expand pass-wise (the whole
/// protocol repeated), mirroring volunteers repeating the experiment.
pub fn simulate_session(
    profile: &ParticipantProfile,
    script: &ProtocolScript,
    difficulty: f64,
    seed: u64,
) -> Result<AnnotatedSession, SimError> {
    profile.validate()?;
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(SimError::InvalidDifficulty { value: difficulty });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let max_reps = script
        .entries()
        .iter()
        .map(|e| e.repetitions)
        .max()
        .unwrap_or(0);
    let mut spans = Vec::new();
    for rep in 0..max_reps {
        for entry in script.entries() {
            if rep < entry.repetitions {
                spans.push(Span::Buffer {
                    len: script.buffer_s(),
                });
                spans.push(Span::Activity {
                    label: entry.label,
                    len: entry.duration_s,
                });
            }
        }
    }
    spans.push(Span::Buffer {
        len: script.buffer_s(),
    });

    // Phase one: clean traces for activity spans, in protocol order.
    let mut activity_traces: Vec<Option<(Trace, Option<Aftermath>)>> =
        Vec::with_capacity(spans.len());
    for span in &spans {
        match span {
            Span::Buffer { .. } => activity_traces.push(None),
            Span::Activity { label, len } => {
                let built = if templates::is_fall(*label) {
                    let (t, a) = fall_trace(*label, *len, difficulty, &mut rng);
                    (t, Some(a))
                } else {
                    (adl_trace(*label, *len, difficulty, &mut rng), None)
                };
                activity_traces.push(Some(built));
            }
        }
    }

    // Phase two: stitch buffers between the activity postures.
    let mut traces: Vec<Trace> = Vec::with_capacity(spans.len());
    for (i, span) in spans.iter().enumerate() {
        match span {
            Span::Activity { .. } => {
                traces.push(activity_traces[i].as_ref().unwrap().0.clone());
            }
            Span::Buffer { len } => {
                let (from, aftermath) = if i == 0 {
                    (0.0, None)
                } else {
                    match &activity_traces[i - 1] {
                        Some((t, a)) => (t.end_offset(), *a),
                        None => (0.0, None),
                    }
                };
                let to = match spans.get(i + 1) {
                    Some(Span::Activity { label, .. }) => {
                        let (t, _) = activity_traces[i + 1].as_ref().unwrap();
                        segment_start_offset(*label, t)
                    }
                    _ => 0.0,
                };
                traces.push(buffer_trace(*len, from, to, aftermath, &mut rng));
            }
        }
    }

    // Phase three: noise, clipping, events, annotations.
    let noise_mul = 1.0 + difficulty;
    let n_hr = Normal::new(0.0, profile.noise_hr * noise_mul).expect("hr noise");
    let n_br = Normal::new(0.0, profile.noise_br * noise_mul).expect("br noise");
    let n_d = Normal::new(0.0, profile.noise_d * noise_mul).expect("d noise");
    let hr_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let br_phase = rng.gen_range(0.0..std::f64::consts::TAU);

    let mut events = Vec::with_capacity(spans.len());
    let mut annotations = Vec::new();
    let mut ts: i64 = 0;
    for (i, (span, trace)) in spans.iter().zip(&traces).enumerate() {
        let mut readings = Vec::with_capacity(trace.len());
        for k in 0..trace.len() {
            let t_abs = (ts + k as i64) as f64;
            let hr = (profile.resting_hr
                + 1.5 * (std::f64::consts::TAU * t_abs / 600.0 + hr_phase).sin()
                + trace.hr_delta[k]
                + n_hr.sample(&mut rng))
            .clamp(40.0, 160.0);
            let br = (profile.resting_br
                + 0.5 * (std::f64::consts::TAU * t_abs / 420.0 + br_phase).sin()
                + trace.br_delta[k]
                + n_br.sample(&mut rng))
            .clamp(5.0, 40.0);
            let d = (profile.baseline_distance + trace.d_offset[k] + n_d.sample(&mut rng))
                .clamp(1.0, 3.0);
            let mut ps = trace.ps[k];
            if difficulty > 0.0 && rng.gen_bool((0.05 * difficulty).min(1.0)) {
                ps = if rng.gen_bool(0.5) {
                    ps.saturating_sub(1)
                } else {
                    (ps + 1).min(4)
                };
            }
            readings.push(
                RadarReading::new(hr, br, d, PhysiologicalState::from_u8(ps)?)
                    .expect("template values are finite and non-negative"),
            );
        }
        let len = readings.len() as i64;
        events.push(HealthSensingEvent::new(
            format!("e{i:03}"),
            "bedroom",
            ts,
            readings,
        ));
        if let Span::Activity { label, .. } = span {
            annotations.push(Annotation::new(*label, ts, ts + len)?);
        }
        ts += len;
    }

    AnnotatedSession::new(
        profile.id.clone(),
        EventSequence::new(events)?,
        annotations,
    )
}

/// Deterministic participant roster for a dataset seed.
pub fn generate_profiles(n: usize, seed: u64) -> Vec<ParticipantProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| ParticipantProfile {
            id: format!("p{i:02}"),
            resting_hr: rng.gen_range(58.0..80.0),
            resting_br: rng.gen_range(11.0..18.0),
            baseline_distance: rng.gen_range(1.3..2.1),
            noise_hr: rng.gen_range(0.8..1.6),
            noise_br: rng.gen_range(0.3..0.7),
            noise_d: rng.gen_range(0.015..0.035),
        })
        .collect()
}

/// Generates the full dataset: one session per participant, in parallel,
/// each from a seed derived up front so the output is order-independent.
pub fn generate_dataset(
    n_participants: usize,
    script: &ProtocolScript,
    difficulty: f64,
    seed: u64,
) -> Result<Vec<AnnotatedSession>, SimError> {
    if n_participants == 0 {
        return Err(SimError::NoParticipants);
    }
    let profiles = generate_profiles(n_participants, seed);
    let mut seed_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e55_1011);
    let session_seeds: Vec<u64> = (0..n_participants).map(|_| seed_rng.gen()).collect();
    profiles
        .par_iter()
        .zip(session_seeds)
        .map(|(profile, s)| simulate_session(profile, script, difficulty, s))
        .collect()
}

/// Writes record, annotation, and manifest files for a generated dataset.
pub fn write_dataset(
    dir: &Path,
    sessions: &[AnnotatedSession],
    seed: u64,
    difficulty: f64,
) -> Result<DatasetManifest, SimError> {
    std::fs::create_dir_all(dir).map_err(DataError::from)?;
    let mut entries = Vec::with_capacity(sessions.len());
    for s in sessions {
        let session_file = format!("{}.records", s.session_id);
        let annotation_file = format!("{}.annotations", s.session_id);
        std::fs::write(
            dir.join(&session_file),
            crate::data::serialize_event_stream(&s.sequence),
        )
        .map_err(DataError::from)?;
        crate::data::write_annotation_file(&dir.join(&annotation_file), &s.annotations)?;
        entries.push(SessionEntry {
            participant_id: s.session_id.clone(),
            session_file,
            annotation_file,
        });
    }
    let manifest = DatasetManifest {
        seed,
        difficulty,
        sessions: entries,
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Loads every session a manifest points at. Paths resolve relative to the
/// manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<AnnotatedSession>, SimError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .sessions
        .iter()
        .map(|entry| {
            let text = std::fs::read_to_string(dir.join(&entry.session_file))
                .map_err(DataError::from)?;
            let sequence = crate::data::parse_event_stream(&text)?;
            let annotations =
                crate::data::read_annotation_file(&dir.join(&entry.annotation_file))?;
            AnnotatedSession::new(entry.participant_id.clone(), sequence, annotations)
        })
        .collect()
}
