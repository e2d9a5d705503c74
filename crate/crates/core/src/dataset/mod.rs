//! Scan ingestion and training-set construction.

mod kitti;
mod synthetic;
mod triples;

pub use kitti::{
    boxes_to_text, label_bytes, parse_boxes, parse_labels, parse_velodyne, read_boxes, read_labels, read_velodyne_bin,
    velodyne_bytes, write_labels, write_velodyne_bin, VelodyneScan,
};
pub use synthetic::{synthetic_scene, SceneSpec, GROUND_Z};
pub use triples::{
    build_training_example, instance_mask, read_triples, synthetic_training_set, write_triples, ExampleConfig,
    InstanceSelector, MaskMode,
};

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{OrientedBox, PointCloud};

/// Semantic id of cars.
pub const CAR: u16 = 26;
/// Semantic id of road surface, used for synthetic ground.
pub const GROUND: u16 = 7;

/// One scan with optional per-point classes and box annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub cloud: PointCloud,
    pub labels: Option<Vec<u16>>,
    pub boxes: Option<Vec<(OrientedBox, u16)>>,
}

impl ScanRecord {
    pub fn new(cloud: PointCloud) -> Self {
        ScanRecord {
            cloud,
            labels: None,
            boxes: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.cloud.len() {
                return Err(Error::LengthMismatch {
                    expected: self.cloud.len(),
                    actual: labels.len(),
                });
            }
        }
        Ok(())
    }

    /// Reads `<stem>.bin` with optional sibling `<stem>.label` and
    /// `<stem>.boxes.txt`. Returns the record and the dropped-point count.
    pub fn load(bin: impl AsRef<Path>, map: &LabelMap) -> Result<(ScanRecord, usize)> {
        let bin = bin.as_ref();
        let scan = read_velodyne_bin(bin)?;
        let label_path = bin.with_extension("label");
        let box_path = bin.with_extension("boxes.txt");
        let labels = if label_path.exists() {
            if scan.dropped > 0 {
                return Err(Error::InvalidConfig(format!(
                    "{}: cannot align labels after dropping {} non-finite points",
                    bin.display(),
                    scan.dropped
                )));
            }
            Some(read_labels(&label_path, scan.cloud.len())?)
        } else {
            None
        };
        let boxes = box_path.exists().then(|| read_boxes(&box_path, map)).transpose()?;
        let rec = ScanRecord {
            cloud: scan.cloud,
            labels,
            boxes,
        };
        Ok((rec, scan.dropped))
    }

    /// Writes the record as `<stem>.bin` plus `.label` and `.boxes.txt` when
    /// present.
    pub fn save(&self, bin: impl AsRef<Path>, map: &LabelMap) -> Result<()> {
        self.validate()?;
        let bin = bin.as_ref();
        write_velodyne_bin(bin, &self.cloud)?;
        if let Some(labels) = &self.labels {
            let ids: Vec<u32> = labels.iter().map(|&l| l as u32).collect();
            write_labels(bin.with_extension("label"), &ids)?;
        }
        if let Some(boxes) = &self.boxes {
            let path = bin.with_extension("boxes.txt");
            std::fs::write(&path, boxes_to_text(boxes, map)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Class names and ids for one label scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    entries: Vec<(String, u16)>,
}

impl LabelMap {
    pub fn new(entries: impl IntoIterator<Item = (String, u16)>) -> Self {
        LabelMap {
            entries: entries.into_iter().collect(),
        }
    }

    /// A subset of the KITTI-360 semantic ids.
    pub fn kitti360() -> Self {
        let names = [
            ("road", 7),
            ("sidewalk", 8),
            ("building", 11),
            ("vegetation", 21),
            ("terrain", 22),
            ("person", 24),
            ("car", CAR),
            ("truck", 27),
            ("bicycle", 33),
        ];
        LabelMap::new(names.into_iter().map(|(n, id)| (n.to_string(), id)))
    }

    pub fn id(&self, name: &str) -> Option<u16> {
        self.entries.iter().find(|(n, _)| n == name).map(|e| e.1)
    }

    pub fn name(&self, id: u16) -> Option<&str> {
        self.entries.iter().find(|e| e.1 == id).map(|e| e.0.as_str())
    }

    /// A known name or a numeric id.
    pub fn resolve(&self, token: &str) -> Option<u16> {
        self.id(token).or_else(|| token.parse().ok())
    }
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap::kitti360()
    }
}
