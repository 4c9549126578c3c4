//! Line-oriented storage for radar streams.
//!
//! One record per second:
//!
//! ```text
//! hse_id,ts,location,hr,br,d,ps
//! ```
//!
//! Consecutive lines sharing an `hse_id` form one sensing event. Fields never
//! contain commas, so no quoting is needed.

use super::types::{EventSequence, HealthSensingEvent, PhysiologicalState, RadarReading};
use super::DataError;

/// A single parsed record line.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordLine {
    pub hse_id: String,
    pub ts: i64,
    pub location: String,
    pub reading: RadarReading,
}

/// Parses one record line. `line_no` is 1-based and only used for error
/// reporting.
pub fn parse_record_line(line: &str, line_no: usize) -> Result<RecordLine, DataError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 7 {
        return Err(DataError::MalformedRecord {
            line: line_no,
            reason: format!("expected 7 fields, got {}", fields.len()),
        });
    }
    let ts: i64 = fields[1].parse().map_err(|_| DataError::MalformedRecord {
        line: line_no,
        reason: format!("bad timestamp {:?}", fields[1]),
    })?;
    let mut floats = [0.0f64; 3];
    for (slot, (name, raw)) in floats
        .iter_mut()
        .zip([("hr", fields[3]), ("br", fields[4]), ("d", fields[5])])
    {
        *slot = raw.parse().map_err(|_| DataError::MalformedRecord {
            line: line_no,
            reason: format!("bad {name} {raw:?}"),
        })?;
    }
    let ps_raw: u8 = fields[6].parse().map_err(|_| DataError::MalformedRecord {
        line: line_no,
        reason: format!("bad ps {:?}", fields[6]),
    })?;
    let ps = PhysiologicalState::from_u8(ps_raw)?;
    let reading = RadarReading::new(floats[0], floats[1], floats[2], ps)?;
    Ok(RecordLine {
        hse_id: fields[0].to_string(),
        ts,
        location: fields[2].to_string(),
        reading,
    })
}

pub fn serialize_record_line(line: &RecordLine) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        line.hse_id,
        line.ts,
        line.location,
        line.reading.hr,
        line.reading.br,
        line.reading.d,
        line.reading.ps.as_u8()
    )
}

/// Parses a whole stream into an event sequence. Blank lines are skipped.
/// Runs of equal `hse_id` become one event; an id reappearing after a
/// different one is a duplicate.
pub fn parse_event_stream(input: &str) -> Result<EventSequence, DataError> {
    let mut events: Vec<HealthSensingEvent> = Vec::new();
    let mut current: Option<(String, String, Vec<i64>, Vec<RadarReading>)> = None;

    for (idx, raw) in input.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let rec = parse_record_line(line, idx + 1)?;
        match current.as_mut() {
            Some((id, _, timestamps, readings)) if *id == rec.hse_id => {
                timestamps.push(rec.ts);
                readings.push(rec.reading);
            }
            _ => {
                if let Some((id, location, timestamps, readings)) = current.take() {
                    events.push(HealthSensingEvent::from_timestamps(
                        id, location, &timestamps, readings,
                    )?);
                }
                current = Some((rec.hse_id, rec.location, vec![rec.ts], vec![rec.reading]));
            }
        }
    }
    if let Some((id, location, timestamps, readings)) = current {
        events.push(HealthSensingEvent::from_timestamps(
            id, location, &timestamps, readings,
        )?);
    }
    EventSequence::new(events)
}

pub fn serialize_event_stream(seq: &EventSequence) -> String {
    let mut out = String::new();
    for event in seq.events() {
        for (ts, reading) in event.timestamps().zip(event.readings()) {
            out.push_str(&serialize_record_line(&RecordLine {
                hse_id: event.hse_id().to_string(),
                ts,
                location: event.location().to_string(),
                reading: *reading,
            }));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
e1,100,bedroom,72.5,14.2,1.8,1
e1,101,bedroom,73,14.1,1.82,1
e2,102,bedroom,75,15,1.4,3
";

    #[test]
    fn parses_and_groups_events() {
        let seq = parse_event_stream(SAMPLE).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.events()[0].hse_id(), "e1");
        assert_eq!(seq.events()[0].len(), 2);
        assert_eq!(seq.events()[1].start_ts(), 102);
        assert_eq!(seq.events()[1].readings()[0].ps, PhysiologicalState::MinorMovement);
        assert!(seq.is_contiguous());
    }

    #[test]
    fn serialize_parse_identity() {
        let seq = parse_event_stream(SAMPLE).unwrap();
        let text = serialize_event_stream(&seq);
        let reparsed = parse_event_stream(&text).unwrap();
        assert_eq!(seq, reparsed);
    }

    #[test]
    fn empty_input_is_empty_sequence() {
        let seq = parse_event_stream("").unwrap();
        assert!(seq.is_empty());
        assert_eq!(serialize_event_stream(&seq), "");
    }

    #[test]
    fn out_of_range_ps_rejected() {
        let err = parse_event_stream("e1,100,bedroom,72,14,1.8,5");
        assert!(matches!(err, Err(DataError::InvalidCategory { value: 5 })));
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = parse_event_stream("e1,100,bedroom,72,14,1.8,1\ne1,101,bedroom,oops,14,1.8,1");
        match err {
            Err(DataError::MalformedRecord { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("hr"));
            }
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn field_count_checked() {
        let err = parse_record_line("e1,100,bedroom,72,14,1.8", 1);
        assert!(matches!(err, Err(DataError::MalformedRecord { .. })));
    }

    #[test]
    fn reused_id_after_gap_is_duplicate() {
        let input = "\
e1,100,bedroom,72,14,1.8,1
e2,101,bedroom,72,14,1.8,1
e1,102,bedroom,72,14,1.8,1
";
        assert!(matches!(
            parse_event_stream(input),
            Err(DataError::DuplicateEventId { .. })
        ));
    }
}
