//! Versioned binary container for trained networks: a JSON metadata header
//! followed by named f64 tensors in visit order. Both the detectors (.fdet)
//! and the fall generator (.fgen) persist through this format.

use crate::nn::{Param, Parameterized};
use ndarray::ArrayD;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("corrupt artifact: {reason}")]
    Corrupt { reason: String },
    #[error("artifact version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("artifact does not fit this network: {reason}")]
    ParameterMismatch { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
pub struct NamedTensor {
    pub name: String,
    pub data: ArrayD<f64>,
}

/// Snapshot of a network's parameters (trainable and buffers) in visit order.
pub fn snapshot_params(net: &mut dyn Parameterized) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    net.visit_params(&mut |p: &mut Param| {
        out.push(NamedTensor {
            name: p.name.clone(),
            data: p.w.clone(),
        });
    });
    out
}

/// Writes tensors back into a network, matching by visit order and checking
/// name and shape at every slot.
pub fn restore_params(
    net: &mut dyn Parameterized,
    tensors: &[NamedTensor],
) -> Result<(), ArtifactError> {
    let mut idx = 0;
    let mut error: Option<ArtifactError> = None;
    net.visit_params(&mut |p: &mut Param| {
        if error.is_some() {
            return;
        }
        let Some(t) = tensors.get(idx) else {
            error = Some(ArtifactError::ParameterMismatch {
                reason: format!("network expects more than the {} stored tensors", tensors.len()),
            });
            return;
        };
        if t.name != p.name || t.data.shape() != p.w.shape() {
            error = Some(ArtifactError::ParameterMismatch {
                reason: format!(
                    "slot {idx}: stored {} {:?}, network has {} {:?}",
                    t.name,
                    t.data.shape(),
                    p.name,
                    p.w.shape()
                ),
            });
            return;
        }
        p.w.assign(&t.data);
        idx += 1;
    });
    if let Some(e) = error {
        return Err(e);
    }
    if idx != tensors.len() {
        return Err(ArtifactError::ParameterMismatch {
            reason: format!("{} stored tensors, network consumed {idx}", tensors.len()),
        });
    }
    Ok(())
}

pub fn write_artifact<M: Serialize>(
    path: &Path,
    magic: &[u8; 4],
    version: u32,
    meta: &M,
    tensors: &[NamedTensor],
) -> Result<(), ArtifactError> {
    let meta_bytes = serde_json::to_vec(meta)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&version.to_le_bytes());
    buf.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_bytes);
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(t.data.ndim() as u8);
        for &d in t.data.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        if self.at + n > self.buf.len() {
            return Err(ArtifactError::Corrupt {
                reason: "unexpected end of file".to_string(),
            });
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_artifact<M: DeserializeOwned>(
    path: &Path,
    magic: &[u8; 4],
    expected_version: u32,
) -> Result<(M, Vec<NamedTensor>), ArtifactError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { buf: &bytes, at: 0 };

    if cur.take(4)? != magic {
        return Err(ArtifactError::Corrupt {
            reason: format!("not a {} artifact", String::from_utf8_lossy(magic)),
        });
    }
    let version = cur.u32()?;
    if version != expected_version {
        return Err(ArtifactError::VersionMismatch {
            found: version,
            expected: expected_version,
        });
    }
    let meta_len = cur.u64()? as usize;
    let meta: M = serde_json::from_slice(cur.take(meta_len)?)?;

    let n_tensors = cur.u64()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec()).map_err(|_| {
            ArtifactError::Corrupt {
                reason: "tensor name is not UTF-8".to_string(),
            }
        })?;
        let ndim = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = cur.take(len * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let data = ArrayD::from_shape_vec(shape, values).map_err(|e| ArtifactError::Corrupt {
            reason: format!("bad tensor shape: {e}"),
        })?;
        tensors.push(NamedTensor { name, data });
    }
    if cur.at != bytes.len() {
        return Err(ArtifactError::Corrupt {
            reason: "trailing bytes after last tensor".to_string(),
        });
    }
    Ok((meta, tensors))
}
