//! SemanticKITTI-style scan and label files.
//!
//! ```text
//! .bin    per point: x:f32 | y:f32 | z:f32 | intensity:f32   (little-endian, 16 B)
//! .label  per point: u32, bits 0..16 semantic raw id, bits 16..32 instance id
//! .prov   per point: u32 index into the source scan, u32::MAX for injected noise
//! ```

use std::fs;
use std::path::Path;

use crate::augment::Origin;
use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::labels::{is_valid_train_id, LabelMap, TrainId};

pub const POINT_RECORD_BYTES: usize = 16;
pub const LABEL_RECORD_BYTES: usize = 4;
const NOISE_ORIGIN: u32 = u32::MAX;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_scan(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(POINT_RECORD_BYTES) {
        return Err(Error::Format(format!(
            "scan length {} is not a multiple of {POINT_RECORD_BYTES}",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_RECORD_BYTES);
    for (i, rec) in bytes.chunks_exact(POINT_RECORD_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let p = Point::new(f(0), f(1), f(2), f(3));
        if !p.is_finite() {
            return Err(Error::Format(format!("point {i} has a non-finite value")));
        }
        points.push(p);
    }
    PointCloud::new(points, None)
}

pub fn encode_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_RECORD_BYTES);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Reads a `.bin` scan. The result carries no labels.
pub fn read_scan(path: impl AsRef<Path>) -> Result<PointCloud> {
    decode_scan(&read_bytes(path.as_ref())?)
}

pub fn write_scan(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_scan(cloud))
}

pub fn decode_labels(bytes: &[u8], map: &LabelMap) -> Result<Vec<TrainId>> {
    if !bytes.len().is_multiple_of(LABEL_RECORD_BYTES) {
        return Err(Error::Format(format!(
            "label length {} is not a multiple of {LABEL_RECORD_BYTES}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(LABEL_RECORD_BYTES)
        .map(|w| map.to_train(u32::from_le_bytes(w.try_into().unwrap()) & 0xFFFF))
        .collect())
}

pub fn encode_labels(labels: &[TrainId], map: &LabelMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(labels.len() * LABEL_RECORD_BYTES);
    for (i, &label) in labels.iter().enumerate() {
        if !is_valid_train_id(label) {
            return Err(Error::Argument(format!(
                "label {label} at index {i} is not a train-id"
            )));
        }
        let raw = map.canonical_raw(label).ok_or_else(|| {
            Error::Argument(format!("train-id {label} has no raw id in the label map"))
        })?;
        out.extend_from_slice(&raw.to_le_bytes());
    }
    Ok(out)
}

/// Reads a `.label` file, discarding instance ids and remapping semantic ids.
pub fn read_labels(path: impl AsRef<Path>, map: &LabelMap) -> Result<Vec<TrainId>> {
    decode_labels(&read_bytes(path.as_ref())?, map)
}

/// Writes each train-id as its canonical raw id with a zero instance id.
pub fn write_labels(labels: &[TrainId], path: impl AsRef<Path>, map: &LabelMap) -> Result<()> {
    let bytes = encode_labels(labels, map)?;
    write_bytes(path.as_ref(), &bytes)
}

/// Reads a scan and its label file into one labeled cloud.
pub fn read_labeled_scan(
    scan: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    map: &LabelMap,
) -> Result<PointCloud> {
    let cloud = read_scan(scan)?;
    let labels = read_labels(labels, map)?;
    cloud.with_labels(labels)
}

pub fn write_provenance(origins: &[Origin], path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(origins.len() * 4);
    for o in origins {
        let word = match *o {
            Origin::Source(i) => u32::try_from(i)
                .ok()
                .filter(|&i| i != NOISE_ORIGIN)
                .ok_or_else(|| Error::Argument(format!("source index {i} exceeds u32")))?,
            Origin::Noise => NOISE_ORIGIN,
        };
        out.extend_from_slice(&word.to_le_bytes());
    }
    write_bytes(path.as_ref(), &out)
}

pub fn read_provenance(path: impl AsRef<Path>) -> Result<Vec<Origin>> {
    let bytes = read_bytes(path.as_ref())?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format("provenance length is not a multiple of 4".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|w| match u32::from_le_bytes(w.try_into().unwrap()) {
            NOISE_ORIGIN => Origin::Noise,
            i => Origin::Source(i as usize),
        })
        .collect())
}
