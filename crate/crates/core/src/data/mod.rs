//! Core sensing data model: radar readings, sensing events and their
//! chronological sequences, the activity taxonomy, and the canonical
//! line-delimited record format shared by the simulator, the preprocessing
//! pipeline, and the streaming service.

mod label;
mod manifest;
mod record;
mod types;

pub use label::{ActivityLabel, Category};
pub use manifest::{
    parse_annotation_file, read_annotation_file, serialize_annotation_file, validate_annotations,
    write_annotation_file, Annotation, DatasetManifest, SessionEntry,
};
pub use record::{
    parse_event_stream, parse_record_line, serialize_event_stream, serialize_record_line,
    RecordLine,
};
pub use types::{
    AgeGroup, EventSequence, FdaasQos, HealthCondition, HealthSensingEvent, HealthSensingService,
    PhysiologicalState, PrivacyLevel, RadarReading, ResidentContext, ResourceAvailability,
    CHANNELS,
};

use thiserror::Error;

/// Errors produced while constructing or parsing sensing data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("non-monotonic or gapped timestamps in event {hse_id}")]
    NonMonotonicTimestamps { hse_id: String },
    #[error("invalid physiological state category {value} (expected 0..=4)")]
    InvalidCategory { value: i64 },
    #[error("duplicate event id {hse_id}")]
    DuplicateEventId { hse_id: String },
    #[error("events not ordered by first timestamp (at event {hse_id})")]
    UnorderedEvents { hse_id: String },
    #[error("unknown activity code {code:?}")]
    UnknownCode { code: String },
    #[error("invalid value for {field}: {value}")]
    InvalidValue { field: &'static str, value: f64 },
    #[error("invalid service duration: start {start} must precede end {end}")]
    InvalidDuration { start: i64, end: i64 },
    #[error("stream length {actual} does not match service duration of {expected} seconds")]
    StreamLengthMismatch { expected: usize, actual: usize },
    #[error("event {hse_id} lies outside the service duration")]
    EventOutsideDuration { hse_id: String },
    #[error("annotation [{start}, {end}) is invalid or overlaps another annotation")]
    InvalidAnnotation { start: i64, end: i64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
