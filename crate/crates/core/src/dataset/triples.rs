//! Training triples: range image, instance mask, masked image.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::diffusion::{TrainExample, BLOCK};
use crate::error::{Error, Result};
use crate::image::{RangeImage, SemanticMask};
use crate::mask::{hull_mask, mask_from_labeled_points};
use crate::projection::{project, Projection, ProjectionConfig};
use crate::tensor_file;
use crate::window::Window;

use super::{synthetic_scene, ScanRecord, SceneSpec};

/// Which points make up the instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstanceSelector {
    /// Every point of the class.
    Class(u16),
    /// Points of the box's class inside annotated box `index`, grown by
    /// `margin` meters.
    Box { index: usize, margin: f64 },
}

/// Mask regularization used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Convex hull of the instance pixels.
    Hull,
    /// The instance pixels as projected.
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleConfig {
    pub projection: ProjectionConfig,
    pub mask_mode: MaskMode,
    /// Window around the instance; `None` keeps the full image.
    pub crop: Option<(usize, usize)>,
    pub box_margin: f64,
}

impl Default for ExampleConfig {
    fn default() -> Self {
        ExampleConfig {
            projection: ProjectionConfig::default(),
            mask_mode: MaskMode::Hull,
            crop: Some((32, 256)),
            box_margin: 0.1,
        }
    }
}

/// Raw instance pixels, before hull regularization.
pub fn instance_mask(scan: &ScanRecord, selector: InstanceSelector, projection: &Projection) -> Result<SemanticMask> {
    scan.validate()?;
    let labels = scan
        .labels
        .as_ref()
        .ok_or(Error::Empty("instance selection needs per-point labels"))?;
    match selector {
        InstanceSelector::Class(class) => mask_from_labeled_points(&scan.cloud, labels, class, projection),
        InstanceSelector::Box { index, margin } => {
            let (b, class) = scan
                .boxes
                .as_ref()
                .and_then(|bs| bs.get(index))
                .ok_or_else(|| Error::InvalidConfig(format!("no annotated box {index}")))?;
            let picked: Vec<u16> = scan
                .cloud
                .points
                .iter()
                .zip(labels)
                .map(|(p, l)| u16::from(*l == *class && b.contains(p.x, p.y, p.z, margin)))
                .collect();
            mask_from_labeled_points(&scan.cloud, &picked, 1, projection)
        }
    }
}

/// Projects the scan, masks the selected instance and builds the triple.
/// `Ok(None)` signals a skip: no in-view instance pixels, or an instance
/// that does not fit the crop window.
pub fn build_training_example(
    scan: &ScanRecord,
    selector: InstanceSelector,
    cfg: &ExampleConfig,
) -> Result<Option<TrainExample>> {
    let projection = project(&scan.cloud, &cfg.projection);
    let raw = instance_mask(scan, selector, &projection)?;
    if raw.is_empty() {
        return Ok(None);
    }
    let mask = match cfg.mask_mode {
        MaskMode::Hull => hull_mask(&raw),
        MaskMode::Points => raw,
    };
    let (image, mask) = match cfg.crop {
        None => (projection.image, mask),
        Some(size) => {
            let Some(win) = Window::around(&mask, size, BLOCK)? else {
                return Ok(None);
            };
            if !win.covers(&mask) {
                return Ok(None);
            }
            (win.crop_image(&projection.image)?, win.crop_mask(&mask)?)
        }
    };
    TrainExample::new(image, mask).map(Some)
}

/// Examples from every annotated box of consecutive synthetic scenes
/// seeded from `template.seed`, until `count` are collected. Scenes are
/// generated in parallel; the result order depends only on the seeds.
pub fn synthetic_training_set(count: usize, template: &SceneSpec, cfg: &ExampleConfig) -> Result<Vec<TrainExample>> {
    const CHUNK: u64 = 8;
    const MAX_SCENES: u64 = 100_000;
    let mut out = Vec::with_capacity(count);
    let mut next = 0u64;
    while out.len() < count {
        if next >= MAX_SCENES {
            return Err(Error::InvalidConfig("scene template yields no usable instances".into()));
        }
        let per_scene: Vec<Vec<TrainExample>> = (next..next + CHUNK)
            .into_par_iter()
            .map(|k| {
                let spec = SceneSpec {
                    seed: template.seed.wrapping_add(k),
                    ..template.clone()
                };
                let scan = synthetic_scene(&spec)?;
                let n = scan.boxes.as_ref().map_or(0, Vec::len);
                let mut v = Vec::new();
                for index in 0..n {
                    let sel = InstanceSelector::Box {
                        index,
                        margin: cfg.box_margin,
                    };
                    if let Some(ex) = build_training_example(&scan, sel, cfg)? {
                        v.push(ex);
                    }
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        out.extend(per_scene.into_iter().flatten());
        next += CHUNK;
    }
    out.truncate(count);
    Ok(out)
}

const MANIFEST: &str = "manifest.txt";

/// Writes each example as three tensor files plus a tab-separated manifest
/// `id  x  mask  x_m`.
pub fn write_triples(dir: impl AsRef<Path>, examples: &[TrainExample]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# id\tx\tmask\tx_m\n");
    for (i, ex) in examples.iter().enumerate() {
        let id = format!("{i:05}");
        let names = [
            format!("{id}.x.rvimg"),
            format!("{id}.mask.rvimg"),
            format!("{id}.xm.rvimg"),
        ];
        tensor_file::save(dir.join(&names[0]), &ex.x.to_tensor())?;
        tensor_file::save(dir.join(&names[1]), &ex.mask.to_tensor())?;
        tensor_file::save(dir.join(&names[2]), &ex.x_m.to_tensor())?;
        let _ = writeln!(manifest, "{id}\t{}\t{}\t{}", names[0], names[1], names[2]);
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Reads a directory written by [`write_triples`], checking that each
/// stored masked image matches its image and mask.
pub fn read_triples(dir: impl AsRef<Path>) -> Result<Vec<TrainExample>> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 4 tab-separated fields, found {}", f.len()),
            });
        }
        let x = RangeImage::from_tensor(&tensor_file::load(dir.join(f[1]))?)?;
        let mask = SemanticMask::from_tensor(&tensor_file::load(dir.join(f[2]))?)?;
        let x_m = RangeImage::from_tensor(&tensor_file::load(dir.join(f[3]))?)?;
        let ex = TrainExample::new(x, mask)?;
        if ex.x_m != x_m {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("{}: masked image disagrees with image and mask", f[0]),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CAR;
    use crate::types::PointCloud;

    #[test]
    fn scan_without_cars_is_skipped() {
        let scan = synthetic_scene(&SceneSpec {
            cars: 0,
            ..SceneSpec::with_seed(1)
        })
        .unwrap();
        let cfg = ExampleConfig::default();
        assert_eq!(
            build_training_example(&scan, InstanceSelector::Class(CAR), &cfg).unwrap(),
            None
        );
    }

    #[test]
    fn unlabeled_scan_is_an_error() {
        let scan = ScanRecord::new(PointCloud::default());
        let cfg = ExampleConfig::default();
        assert!(build_training_example(&scan, InstanceSelector::Class(CAR), &cfg).is_err());
    }
}
