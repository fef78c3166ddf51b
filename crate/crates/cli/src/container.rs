//! JSON-header + raw-payload volume containers.
//!
//! `name.json` holds the header and `name.raw` the voxel payload, x-fastest
//! and little-endian. Headers are validated before the payload is touched.

use std::fs;
use std::path::{Path, PathBuf};

use dentvox_core::volume::{Grid, GridGeometry, LabelMap, Volume};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const ORDER: &str = "x-fastest";
pub const ENDIAN: &str = "little";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U16,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U16 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub dtype: Dtype,
    pub order: String,
    pub endian: String,
}

impl VolumeHeader {
    pub fn new(geometry: &GridGeometry, dtype: Dtype) -> Self {
        Self {
            dims: geometry.dims,
            spacing_mm: geometry.spacing,
            origin_mm: geometry.origin,
            dtype,
            order: ORDER.into(),
            endian: ENDIAN.into(),
        }
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        if self.order != ORDER {
            return Err(CliError::Validation(format!("unsupported order '{}', expected '{ORDER}'", self.order)));
        }
        if self.endian != ENDIAN {
            return Err(CliError::Validation(format!("unsupported endian '{}', expected '{ENDIAN}'", self.endian)));
        }
        Ok(GridGeometry::new(self.dims, self.spacing_mm, self.origin_mm)?)
    }

    pub fn payload_len(&self) -> usize {
        self.dims.iter().product::<usize>() * self.dtype.size()
    }
}

/// Payload file belonging to a header path.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let h: VolumeHeader = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
    h.geometry()?;
    Ok(h)
}

fn read_payload(path: &Path, h: &VolumeHeader) -> Result<Vec<u8>> {
    let raw = payload_path(path);
    let len = fs::metadata(&raw).map_err(|e| CliError::io(&raw, e))?.len();
    if len != h.payload_len() as u64 {
        return Err(CliError::Validation(format!(
            "{}: payload is {len} bytes, header {:?} x {:?} needs {}",
            raw.display(),
            h.dims,
            h.dtype,
            h.payload_len()
        )));
    }
    fs::read(&raw).map_err(|e| CliError::io(&raw, e))
}

fn write_parts(path: &Path, header: &VolumeHeader, payload: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(header).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    let raw = payload_path(path);
    fs::write(&raw, payload).map_err(|e| CliError::io(&raw, e))
}

pub fn write_volume(path: &Path, v: &Volume) -> Result<()> {
    let payload: Vec<u8> = v.data().iter().flat_map(|x| x.to_le_bytes()).collect();
    write_parts(path, &VolumeHeader::new(v.geometry(), Dtype::F32), &payload)
}

pub fn write_labels(path: &Path, v: &LabelMap) -> Result<()> {
    let payload: Vec<u8> = v.data().iter().flat_map(|x| x.to_le_bytes()).collect();
    write_parts(path, &VolumeHeader::new(v.geometry(), Dtype::U16), &payload)
}

/// Reads a scalar volume; `u16` payloads are widened to `f32`.
pub fn read_volume(path: &Path) -> Result<Volume> {
    let h = read_header(path)?;
    let bytes = read_payload(path, &h)?;
    let data: Vec<f32> = match h.dtype {
        Dtype::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        Dtype::U16 => bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as f32).collect(),
    };
    Ok(Grid::from_vec(h.geometry()?, data)?)
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let h = read_header(path)?;
    if h.dtype != Dtype::U16 {
        return Err(CliError::Validation(format!("{}: label maps must be u16", path.display())));
    }
    let bytes = read_payload(path, &h)?;
    let data = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    Ok(Grid::from_vec(h.geometry()?, data)?)
}
