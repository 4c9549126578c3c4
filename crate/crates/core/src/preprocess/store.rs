//! On-disk window sets: a little-endian binary tensor file (`.fwin`) and a
//! JSON sidecar (`.meta.json`) carrying labels aside, counts, and the
//! standardization provenance.

use super::{LabeledWindow, PreprocessError, StandardizationStats, WindowSet, WINDOW_LEN};
use crate::data::{ActivityLabel, Category, CHANNELS};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

const MAGIC: &[u8; 4] = b"FWIN";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct WindowMeta {
    code: String,
    session_id: String,
    start_time: i64,
    label: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct SetMeta {
    role: String,
    count: usize,
    adl: usize,
    falls: usize,
    dropped_falls: usize,
    stats: Option<StandardizationStats>,
    windows: Vec<WindowMeta>,
}

/// Writes `{stem}.fwin` and `{stem}.meta.json` next to each other.
pub fn save_window_set(stem: &Path, set: &WindowSet) -> Result<(), PreprocessError> {
    let mut buf = Vec::with_capacity(16 + set.windows.len() * WINDOW_LEN * CHANNELS * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.windows.len() as u64).to_le_bytes());
    for w in &set.windows {
        for v in w.values.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(stem.with_extension("fwin"))?.write_all(&buf)?;

    let (adl, falls) = set.class_counts();
    let meta = SetMeta {
        role: set.role.clone(),
        count: set.windows.len(),
        adl,
        falls,
        dropped_falls: set.dropped_falls,
        stats: set.stats.clone(),
        windows: set
            .windows
            .iter()
            .map(|w| WindowMeta {
                code: w.code.code().to_string(),
                session_id: w.session_id.clone(),
                start_time: w.start_time,
                label: w.label.class_index() as u8,
            })
            .collect(),
    };
    fs::write(
        stem.with_extension("meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

pub fn load_window_set(stem: &Path) -> Result<WindowSet, PreprocessError> {
    let meta: SetMeta =
        serde_json::from_str(&fs::read_to_string(stem.with_extension("meta.json"))?)?;

    let mut file = fs::File::open(stem.with_extension("fwin"))?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header).map_err(|_| PreprocessError::Corrupt {
        reason: "truncated header".to_string(),
    })?;
    if &header[..4] != MAGIC {
        return Err(PreprocessError::Corrupt {
            reason: "bad magic".to_string(),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(PreprocessError::Corrupt {
            reason: format!("unsupported version {version}"),
        });
    }
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    if count != meta.count || count != meta.windows.len() {
        return Err(PreprocessError::Corrupt {
            reason: format!(
                "tensor holds {count} windows but sidecar describes {}",
                meta.windows.len()
            ),
        });
    }

    let mut body = Vec::new();
    file.read_to_end(&mut body)?;
    let expected = count * WINDOW_LEN * CHANNELS * 8;
    if body.len() != expected {
        return Err(PreprocessError::Corrupt {
            reason: format!("expected {expected} tensor bytes, found {}", body.len()),
        });
    }

    let mut windows = Vec::with_capacity(count);
    for (i, wm) in meta.windows.iter().enumerate() {
        let base = i * WINDOW_LEN * CHANNELS * 8;
        let mut values = Array2::<f64>::zeros((WINDOW_LEN, CHANNELS));
        for (j, v) in values.iter_mut().enumerate() {
            let at = base + j * 8;
            *v = f64::from_le_bytes(body[at..at + 8].try_into().unwrap());
        }
        let code = ActivityLabel::from_str(&wm.code).map_err(|_| PreprocessError::Corrupt {
            reason: format!("unknown code {}", wm.code),
        })?;
        let label = match wm.label {
            0 => Category::Adl,
            1 => Category::Fall,
            other => {
                return Err(PreprocessError::Corrupt {
                    reason: format!("bad label {other}"),
                })
            }
        };
        windows.push(LabeledWindow {
            values,
            label,
            code,
            session_id: wm.session_id.clone(),
            start_time: wm.start_time,
        });
    }
    Ok(WindowSet {
        windows,
        stats: meta.stats,
        role: meta.role,
        dropped_falls: meta.dropped_falls,
    })
}
