//! Dataset manifest and annotation files.
//!
//! A manifest is a JSON document tying each session record file to its
//! annotation file. Annotations are line-delimited `code,start_time,end_time`
//! segments marking where each scripted activity ran.

use super::label::ActivityLabel;
use super::DataError;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One labeled segment of a session: the activity ran over
/// `[start_time, end_time)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: ActivityLabel,
    pub start_time: i64,
    pub end_time: i64,
}

impl Annotation {
    pub fn new(label: ActivityLabel, start_time: i64, end_time: i64) -> Result<Self, DataError> {
        if start_time >= end_time {
            return Err(DataError::InvalidAnnotation {
                start: start_time,
                end: end_time,
            });
        }
        Ok(Self {
            label,
            start_time,
            end_time,
        })
    }

    pub fn duration(&self) -> i64 {
        self.end_time - self.start_time
    }
}

/// Checks annotations are sorted by start and non-overlapping.
pub fn validate_annotations(annotations: &[Annotation]) -> Result<(), DataError> {
    for pair in annotations.windows(2) {
        if pair[1].start_time < pair[0].end_time {
            return Err(DataError::InvalidAnnotation {
                start: pair[1].start_time,
                end: pair[1].end_time,
            });
        }
    }
    Ok(())
}

pub fn parse_annotation_file(input: &str) -> Result<Vec<Annotation>, DataError> {
    let mut annotations = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(DataError::MalformedRecord {
                line: idx + 1,
                reason: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let label: ActivityLabel = fields[0].parse()?;
        let start_time: i64 = fields[1].parse().map_err(|_| DataError::MalformedRecord {
            line: idx + 1,
            reason: format!("bad start_time {:?}", fields[1]),
        })?;
        let end_time: i64 = fields[2].parse().map_err(|_| DataError::MalformedRecord {
            line: idx + 1,
            reason: format!("bad end_time {:?}", fields[2]),
        })?;
        annotations.push(Annotation::new(label, start_time, end_time)?);
    }
    validate_annotations(&annotations)?;
    Ok(annotations)
}

pub fn serialize_annotation_file(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&format!("{},{},{}\n", a.label.code(), a.start_time, a.end_time));
    }
    out
}

pub fn read_annotation_file(path: &Path) -> Result<Vec<Annotation>, DataError> {
    parse_annotation_file(&std::fs::read_to_string(path)?)
}

pub fn write_annotation_file(path: &Path, annotations: &[Annotation]) -> Result<(), DataError> {
    Ok(std::fs::write(path, serialize_annotation_file(annotations))?)
}

/// One session in a dataset: where its record stream and annotations live,
/// relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub participant_id: String,
    pub session_file: String,
    pub annotation_file: String,
}

/// Top-level description of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub difficulty: f64,
    pub sessions: Vec<SessionEntry>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String, DataError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(input: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(input)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        Ok(std::fs::write(path, self.to_json()? + "\n")?)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotation_rejects_empty_interval() {
        assert!(matches!(
            Annotation::new(ActivityLabel::Wlk, 10, 10),
            Err(DataError::InvalidAnnotation { start: 10, end: 10 })
        ));
    }

    #[test]
    fn annotation_file_roundtrip() {
        let annotations = vec![
            Annotation::new(ActivityLabel::Wlk, 0, 20).unwrap(),
            Annotation::new(ActivityLabel::Ftr, 30, 32).unwrap(),
        ];
        let text = serialize_annotation_file(&annotations);
        assert_eq!(text, "WLK,0,20\nFTR,30,32\n");
        assert_eq!(parse_annotation_file(&text).unwrap(), annotations);
    }

    #[test]
    fn overlapping_annotations_rejected() {
        let text = "WLK,0,20\nFTR,15,17\n";
        assert!(matches!(
            parse_annotation_file(text),
            Err(DataError::InvalidAnnotation { .. })
        ));
    }

    #[test]
    fn unknown_code_in_annotation_rejected() {
        assert!(matches!(
            parse_annotation_file("ZZZ,0,20\n"),
            Err(DataError::UnknownCode { .. })
        ));
    }

    #[test]
    fn manifest_json_roundtrip() {
        let manifest = DatasetManifest {
            seed: 42,
            difficulty: 0.5,
            sessions: vec![SessionEntry {
                participant_id: "p00".to_string(),
                session_file: "p00.records".to_string(),
                annotation_file: "p00.annotations".to_string(),
            }],
        };
        let json = manifest.to_json().unwrap();
        assert_eq!(DatasetManifest::from_json(&json).unwrap(), manifest);
    }
}
