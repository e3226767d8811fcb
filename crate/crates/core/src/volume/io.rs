//! Raw payload + JSON sidecar volume format.
//!
//! `<name>.json` holds `{"dims", "spacing_mm", "dtype", "order"}` and
//! `<name>.raw` holds exactly `nx*ny*nz` little-endian samples, x-fastest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{voxel_count, LabelMask, Volume3D};
use crate::error::{Error, Result};

const ORDER: &str = "x-fastest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Dtype {
    #[serde(rename = "f32le")]
    F32Le,
    #[serde(rename = "u8")]
    U8,
}

impl Dtype {
    fn sample_bytes(self) -> usize {
        match self {
            Dtype::F32Le => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: Dtype,
    order: String,
}

/// Resolves the sidecar and payload paths for `path`, which may name either
/// file or the shared stem.
pub(crate) fn pair_paths(path: &Path) -> (PathBuf, PathBuf) {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => (path.with_extension("json"), path.with_extension("raw")),
        _ => {
            let mut json = path.as_os_str().to_owned();
            json.push(".json");
            let mut raw = path.as_os_str().to_owned();
            raw.push(".raw");
            (json.into(), raw.into())
        }
    }
}

fn read_pair(path: &Path) -> Result<(Sidecar, Vec<u8>, PathBuf)> {
    let (json_path, raw_path) = pair_paths(path);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let header: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", json_path.display())))?;
    if header.order != ORDER {
        return Err(Error::Parse(format!(
            "{}: unsupported voxel order {:?}",
            json_path.display(),
            header.order
        )));
    }
    let payload = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = voxel_count(header.dims) * header.dtype.sample_bytes();
    if payload.len() != expected {
        return Err(Error::HeaderMismatch {
            path: raw_path,
            expected,
            found: payload.len(),
        });
    }
    Ok((header, payload, raw_path))
}

fn write_pair(path: &Path, header: &Sidecar, payload: &[u8]) -> Result<()> {
    let (json_path, raw_path) = pair_paths(path);
    let text = serde_json::to_string(header)?;
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    fs::write(&raw_path, payload).map_err(|e| Error::io(&raw_path, e))?;
    Ok(())
}

/// Reads a volume. `u8` payloads are widened to `f32`.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let (header, payload, _) = read_pair(path.as_ref())?;
    let values: Vec<f32> = match header.dtype {
        Dtype::F32Le => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
        Dtype::U8 => payload.iter().map(|&b| b as f32).collect(),
    };
    Volume3D::new(header.dims, header.spacing_mm, values)
}

pub fn save_volume(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    if let Some(index) = vol.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteVoxel { index });
    }
    let header = Sidecar {
        dims: vol.dims(),
        spacing_mm: vol.spacing_mm(),
        dtype: Dtype::F32Le,
        order: ORDER.into(),
    };
    let mut payload = Vec::with_capacity(vol.values().len() * 4);
    for v in vol.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_pair(path.as_ref(), &header, &payload)
}

/// Reads a `u8` mask; every value must be 0 or 1.
pub fn load_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let (header, payload, raw_path) = read_pair(path.as_ref())?;
    if header.dtype != Dtype::U8 {
        return Err(Error::Parse(format!(
            "{}: masks must be stored as u8",
            raw_path.display()
        )));
    }
    LabelMask::new(header.dims, header.spacing_mm, payload)
}

pub fn save_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let header = Sidecar {
        dims: mask.dims(),
        spacing_mm: mask.spacing_mm(),
        dtype: Dtype::U8,
        order: ORDER.into(),
    };
    write_pair(path.as_ref(), &header, mask.values())
}
