//! KITTI-style scan, label and box-annotation files.
//!
//! Scans are packed little-endian `f32` quadruples `(x, y, z, intensity)`.
//! Label files hold one little-endian `u32` per point whose low 16 bits are
//! the semantic class. Box annotations are whitespace-separated text lines
//! `class cx cy cz l w h yaw`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{OrientedBox, Point, PointCloud};

use super::LabelMap;

/// A decoded scan and the number of non-finite points that were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct VelodyneScan {
    pub cloud: PointCloud,
    pub dropped: usize,
}

pub fn parse_velodyne(bytes: &[u8]) -> Result<VelodyneScan> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::Truncated {
            expected: bytes.len().div_ceil(16) * 16,
            found: bytes.len(),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    let mut dropped = 0;
    for rec in bytes.chunks_exact(16) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        let p = Point::new(f(0), f(1), f(2), f(3));
        if p.is_finite() {
            points.push(Point {
                intensity: p.intensity.clamp(0.0, 1.0),
                ..p
            });
        } else {
            dropped += 1;
        }
    }
    Ok(VelodyneScan {
        cloud: PointCloud::new(points),
        dropped,
    })
}

pub fn read_velodyne_bin(path: impl AsRef<Path>) -> Result<VelodyneScan> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut scan = parse_velodyne(&bytes)?;
    if let Some(stem) = path.file_stem() {
        scan.cloud.frame_id = stem.to_string_lossy().into_owned();
    }
    Ok(scan)
}

pub fn velodyne_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_velodyne_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, velodyne_bytes(cloud)).map_err(|e| Error::io(path, e))
}

/// Semantic classes of `n` points.
pub fn parse_labels(bytes: &[u8], n: usize) -> Result<Vec<u16>> {
    if bytes.len() != 4 * n {
        return Err(Error::LengthMismatch {
            expected: 4 * n,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| (u32::from_le_bytes(b.try_into().unwrap()) & 0xffff) as u16)
        .collect())
}

pub fn read_labels(path: impl AsRef<Path>, n: usize) -> Result<Vec<u16>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&bytes, n)
}

/// Raw label words; the high 16 bits carry the instance id.
pub fn label_bytes(ids: &[u32]) -> Vec<u8> {
    ids.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn write_labels(path: impl AsRef<Path>, ids: &[u32]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, label_bytes(ids)).map_err(|e| Error::io(path, e))
}

/// Parses box annotations; the class column is a name from `map` or a
/// numeric id. Blank lines and `#` comments are skipped.
pub fn parse_boxes(text: &str, map: &LabelMap) -> Result<Vec<(OrientedBox, u16)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", fields.len())));
        }
        let class = map
            .resolve(fields[0])
            .ok_or_else(|| err(format!("unknown class {:?}", fields[0])))?;
        let mut v = [0.0; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| err(format!("bad number {f:?}")))?;
        }
        let b = OrientedBox::new([v[0], v[1], v[2]], v[3], v[4], v[5], v[6]).map_err(|e| err(e.to_string()))?;
        out.push((b, class));
    }
    Ok(out)
}

pub fn read_boxes(path: impl AsRef<Path>, map: &LabelMap) -> Result<Vec<(OrientedBox, u16)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(&text, map)
}

pub fn boxes_to_text(boxes: &[(OrientedBox, u16)], map: &LabelMap) -> String {
    let mut s = String::new();
    for (b, class) in boxes {
        let name = map.name(*class).map(str::to_owned).unwrap_or_else(|| class.to_string());
        let _ = writeln!(
            s,
            "{name} {} {} {} {} {} {} {}",
            b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw
        );
    }
    s
}
