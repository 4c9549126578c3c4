use super::DataError;
use serde::{Deserialize, Serialize};

/// Categorical activity-intensity level reported by the radar once a second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum PhysiologicalState {
    /// No subject in the sensing range.
    NoPresence = 0,
    /// Subject present and still.
    ConstantCalm = 1,
    /// Occasional small movements.
    Intermittent = 2,
    /// Minor sustained movement.
    MinorMovement = 3,
    /// Continued high-intensity movement.
    Continued = 4,
}

impl PhysiologicalState {
    pub fn from_u8(value: u8) -> Result<Self, DataError> {
        match value {
            0 => Ok(Self::NoPresence),
            1 => Ok(Self::ConstantCalm),
            2 => Ok(Self::Intermittent),
            3 => Ok(Self::MinorMovement),
            4 => Ok(Self::Continued),
            other => Err(DataError::InvalidCategory {
                value: other as i64,
            }),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// One per-second radar sample: heart rate, breathing rate, distance to the
/// subject, and the physiological state category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarReading {
    /// Heartbeats per minute.
    pub hr: f64,
    /// Breaths per minute.
    pub br: f64,
    /// Distance from the radar to the subject in meters.
    pub d: f64,
    /// Activity-intensity category.
    pub ps: PhysiologicalState,
}

impl RadarReading {
    pub fn new(hr: f64, br: f64, d: f64, ps: PhysiologicalState) -> Result<Self, DataError> {
        for (field, value) in [("hr", hr), ("br", br), ("d", d)] {
            if !value.is_finite() || value < 0.0 {
                return Err(DataError::InvalidValue { field, value });
            }
        }
        Ok(Self { hr, br, d, ps })
    }

    /// Channel values in canonical order: hr, br, d, ps.
    pub fn channels(&self) -> [f64; 4] {
        [self.hr, self.br, self.d, self.ps.as_u8() as f64]
    }
}

/// Number of channels in a radar reading (hr, br, d, ps).
pub const CHANNELS: usize = 4;

/// A discrete snapshot of health data captured over a contiguous span of
/// seconds at one location. Timestamps are integer epoch seconds with exact
/// 1-second spacing, so only the first timestamp is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthSensingEvent {
    hse_id: String,
    location: String,
    start_ts: i64,
    readings: Vec<RadarReading>,
}

impl HealthSensingEvent {
    pub fn new(
        hse_id: impl Into<String>,
        location: impl Into<String>,
        start_ts: i64,
        readings: Vec<RadarReading>,
    ) -> Self {
        Self {
            hse_id: hse_id.into(),
            location: location.into(),
            start_ts,
            readings,
        }
    }

    /// Builds an event from explicit timestamps, enforcing strictly
    /// increasing 1-second spacing.
    pub fn from_timestamps(
        hse_id: impl Into<String>,
        location: impl Into<String>,
        timestamps: &[i64],
        readings: Vec<RadarReading>,
    ) -> Result<Self, DataError> {
        let hse_id = hse_id.into();
        if timestamps.len() != readings.len() {
            return Err(DataError::NonMonotonicTimestamps { hse_id });
        }
        if let Some(&first) = timestamps.first() {
            for (i, &ts) in timestamps.iter().enumerate() {
                if ts != first + i as i64 {
                    return Err(DataError::NonMonotonicTimestamps { hse_id });
                }
            }
        }
        Ok(Self {
            hse_id,
            location: location.into(),
            start_ts: timestamps.first().copied().unwrap_or(0),
            readings,
        })
    }

    pub fn hse_id(&self) -> &str {
        &self.hse_id
    }

    pub fn location(&self) -> &str {
        &self.location
    }

    pub fn start_ts(&self) -> i64 {
        self.start_ts
    }

    /// Timestamp one past the last reading.
    pub fn end_ts(&self) -> i64 {
        self.start_ts + self.readings.len() as i64
    }

    pub fn readings(&self) -> &[RadarReading] {
        &self.readings
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.readings.len() as i64).map(move |i| self.start_ts + i)
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }
}

/// A chronological record of sensing events: ordered by first timestamp,
/// with unique event ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSequence {
    events: Vec<HealthSensingEvent>,
}

impl EventSequence {
    pub fn new(events: Vec<HealthSensingEvent>) -> Result<Self, DataError> {
        let mut seen = std::collections::HashSet::new();
        let mut last_start = i64::MIN;
        for event in &events {
            if !seen.insert(event.hse_id().to_string()) {
                return Err(DataError::DuplicateEventId {
                    hse_id: event.hse_id().to_string(),
                });
            }
            if event.start_ts() < last_start {
                return Err(DataError::UnorderedEvents {
                    hse_id: event.hse_id().to_string(),
                });
            }
            last_start = event.start_ts();
        }
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[HealthSensingEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Total reading count across all events.
    pub fn reading_count(&self) -> usize {
        self.events.iter().map(|e| e.len()).sum()
    }

    /// All readings with their timestamps, in stream order.
    pub fn flatten(&self) -> impl Iterator<Item = (i64, &RadarReading)> + '_ {
        self.events
            .iter()
            .flat_map(|e| e.timestamps().zip(e.readings().iter()))
    }

    /// True when consecutive events leave no gap in the 1 Hz timeline.
    pub fn is_contiguous(&self) -> bool {
        self.events
            .windows(2)
            .all(|pair| pair[1].start_ts() == pair[0].end_ts())
    }
}

/// An IoT health sensing service: who is monitored, where, for how long, and
/// the 1 Hz reading stream collected over that duration.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthSensingService {
    pub id: String,
    pub resident_id: String,
    pub location: String,
    pub start_time: i64,
    pub end_time: i64,
    stream: Vec<RadarReading>,
}

impl HealthSensingService {
    pub fn new(
        id: impl Into<String>,
        resident_id: impl Into<String>,
        location: impl Into<String>,
        start_time: i64,
        end_time: i64,
        stream: Vec<RadarReading>,
    ) -> Result<Self, DataError> {
        if start_time >= end_time {
            return Err(DataError::InvalidDuration {
                start: start_time,
                end: end_time,
            });
        }
        let expected = (end_time - start_time) as usize;
        if stream.len() != expected {
            return Err(DataError::StreamLengthMismatch {
                expected,
                actual: stream.len(),
            });
        }
        Ok(Self {
            id: id.into(),
            resident_id: resident_id.into(),
            location: location.into(),
            start_time,
            end_time,
            stream,
        })
    }

    pub fn stream(&self) -> &[RadarReading] {
        &self.stream
    }

    /// Checks that every event of `seq` falls inside this service's duration.
    /// Event files can also stand alone; this is only enforced when a stream
    /// is wrapped in a service.
    pub fn validate_events(&self, seq: &EventSequence) -> Result<(), DataError> {
        for event in seq.events() {
            if event.start_ts() < self.start_time || event.end_ts() > self.end_time {
                return Err(DataError::EventOutsideDuration {
                    hse_id: event.hse_id().to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Privacy level a fall-detection service operates under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivacyLevel {
    /// All readings are processed on the edge device; nothing leaves the
    /// process except emitted alerts.
    LocalOnly,
    Anonymized,
}

/// Non-functional requirements of a fall-detection service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdaasQos {
    /// Required accuracy level, as a fraction.
    pub accuracy_target: f64,
    /// Required F1 score, as a fraction.
    pub f1_target: f64,
    /// Acceptable detection latency in seconds.
    pub max_latency_seconds: f64,
    pub privacy_level: PrivacyLevel,
    /// Required uptime fraction.
    pub reliability_target: f64,
}

impl FdaasQos {
    pub fn validate(&self) -> Result<(), DataError> {
        for (field, value) in [
            ("accuracy_target", self.accuracy_target),
            ("f1_target", self.f1_target),
            ("reliability_target", self.reliability_target),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DataError::InvalidValue { field, value });
            }
        }
        if !(self.max_latency_seconds > 0.0) {
            return Err(DataError::InvalidValue {
                field: "max_latency_seconds",
                value: self.max_latency_seconds,
            });
        }
        Ok(())
    }
}

impl Default for FdaasQos {
    fn default() -> Self {
        Self {
            accuracy_target: 0.90,
            f1_target: 0.85,
            max_latency_seconds: 2.0,
            privacy_level: PrivacyLevel::LocalOnly,
            reliability_target: 0.999,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgeGroup {
    /// 80 years or older.
    Elderly80Plus,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HealthCondition {
    Critical,
    Stable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceAvailability {
    Limited,
    Ample,
}

/// Resident-specific context driving detector selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResidentContext {
    pub age_group: AgeGroup,
    pub health_condition: HealthCondition,
    pub resource_availability: ResourceAvailability,
}

impl ResidentContext {
    pub fn new(
        age_group: AgeGroup,
        health_condition: HealthCondition,
        resource_availability: ResourceAvailability,
    ) -> Self {
        Self {
            age_group,
            health_condition,
            resource_availability,
        }
    }

    /// All 2x2x2 context combinations, in a fixed enumeration order.
    pub fn all() -> Vec<ResidentContext> {
        let mut contexts = Vec::with_capacity(8);
        for age in [AgeGroup::Elderly80Plus, AgeGroup::Other] {
            for health in [HealthCondition::Critical, HealthCondition::Stable] {
                for resources in [ResourceAvailability::Limited, ResourceAvailability::Ample] {
                    contexts.push(ResidentContext::new(age, health, resources));
                }
            }
        }
        contexts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reading(d: f64) -> RadarReading {
        RadarReading::new(70.0, 14.0, d, PhysiologicalState::ConstantCalm).unwrap()
    }

    #[test]
    fn ps_out_of_range_rejected() {
        assert!(matches!(
            PhysiologicalState::from_u8(5),
            Err(DataError::InvalidCategory { value: 5 })
        ));
    }

    #[test]
    fn reading_rejects_negative_values() {
        let err = RadarReading::new(-1.0, 14.0, 1.5, PhysiologicalState::ConstantCalm);
        assert!(matches!(err, Err(DataError::InvalidValue { field: "hr", .. })));
    }

    #[test]
    fn event_timestamps_must_be_contiguous() {
        let readings = vec![reading(1.5), reading(1.5)];
        assert!(HealthSensingEvent::from_timestamps("e1", "bedroom", &[10, 11], readings.clone())
            .is_ok());
        assert!(matches!(
            HealthSensingEvent::from_timestamps("e1", "bedroom", &[10, 12], readings),
            Err(DataError::NonMonotonicTimestamps { .. })
        ));
    }

    #[test]
    fn sequence_rejects_duplicate_ids() {
        let e1 = HealthSensingEvent::new("e1", "bedroom", 0, vec![reading(1.5)]);
        let e2 = HealthSensingEvent::new("e1", "bedroom", 1, vec![reading(1.5)]);
        assert!(matches!(
            EventSequence::new(vec![e1, e2]),
            Err(DataError::DuplicateEventId { .. })
        ));
    }

    #[test]
    fn sequence_rejects_unordered_events() {
        let e1 = HealthSensingEvent::new("e1", "bedroom", 10, vec![reading(1.5)]);
        let e2 = HealthSensingEvent::new("e2", "bedroom", 5, vec![reading(1.5)]);
        assert!(matches!(
            EventSequence::new(vec![e1, e2]),
            Err(DataError::UnorderedEvents { .. })
        ));
    }

    #[test]
    fn service_enforces_one_hz_contract() {
        let stream = vec![reading(1.5); 10];
        assert!(HealthSensingService::new("hs1", "r1", "bedroom", 0, 10, stream.clone()).is_ok());
        assert!(matches!(
            HealthSensingService::new("hs1", "r1", "bedroom", 0, 11, stream),
            Err(DataError::StreamLengthMismatch { expected: 11, actual: 10 })
        ));
        assert!(matches!(
            HealthSensingService::new("hs1", "r1", "bedroom", 10, 10, vec![]),
            Err(DataError::InvalidDuration { .. })
        ));
    }

    #[test]
    fn service_validates_event_bounds() {
        let service =
            HealthSensingService::new("hs1", "r1", "bedroom", 0, 10, vec![reading(1.5); 10])
                .unwrap();
        let inside = EventSequence::new(vec![HealthSensingEvent::new(
            "e1",
            "bedroom",
            2,
            vec![reading(1.5); 3],
        )])
        .unwrap();
        assert!(service.validate_events(&inside).is_ok());
        let outside = EventSequence::new(vec![HealthSensingEvent::new(
            "e1",
            "bedroom",
            8,
            vec![reading(1.5); 3],
        )])
        .unwrap();
        assert!(matches!(
            service.validate_events(&outside),
            Err(DataError::EventOutsideDuration { .. })
        ));
    }

    #[test]
    fn qos_bounds_checked() {
        let qos = FdaasQos::default();
        assert!(qos.validate().is_ok());
        let bad = FdaasQos {
            accuracy_target: 1.2,
            ..FdaasQos::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn context_enumeration_is_total() {
        assert_eq!(ResidentContext::all().len(), 8);
    }
}
