#![allow(dead_code)]

use std::path::Path;

use rangeforge::dataset::{synthetic_scene, LabelMap, ScanRecord, SceneSpec};
use rangeforge::diffusion::{checkpoint, Denoiser, TrainConfig};
use rangeforge::edit::Generator;
use rangeforge::ProjectionConfig;

/// Small untrained model; enough to exercise every code path quickly.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        steps_t: 4,
        beta_1: 1e-3,
        beta_t: 0.2,
        width: 6,
        time_dim: 8,
        ..TrainConfig::default()
    }
}

pub fn write_checkpoint(dir: &Path) -> Generator {
    let cfg = tiny_config();
    let model = Denoiser::new(cfg.denoiser_config(), 9).unwrap();
    checkpoint::save(dir, &model, &cfg).unwrap();
    Generator::from_checkpoint(dir, ProjectionConfig::default()).unwrap()
}

pub fn write_scene(dir: &Path, name: &str, seed: u64) -> ScanRecord {
    let rec = synthetic_scene(&SceneSpec::with_seed(seed)).unwrap();
    rec.save(dir.join(format!("{name}.bin")), &LabelMap::kitti360())
        .unwrap();
    rec
}

/// First car of `rec` as a `--box` argument.
pub fn box_arg(rec: &ScanRecord, k: usize) -> String {
    let (b, _) = rec.boxes.as_ref().unwrap()[k];
    format!(
        "{},{},{},{},{},{},{}",
        b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw
    )
}
