//! Model checkpoints: one tensor file per parameter plus a manifest.
//!
//! ```text
//! <dir>/model.cfg          training configuration (key = value)
//! <dir>/manifest.txt       name <TAB> HxWxC <TAB> payload byte offset <TAB> file
//! <dir>/<name>.rvimg       parameter as an rows x cols x 1 tensor
//! ```
//!
//! Parameters are stored as 32-bit floats, so a reloaded model matches the
//! in-memory one to single precision.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tensor_file::{self, Tensor, HEADER_LEN};

use super::denoiser::{Denoiser, Params};
use super::train::TrainConfig;

pub const MANIFEST: &str = "manifest.txt";
pub const MODEL_CONFIG: &str = "model.cfg";

pub fn save(dir: impl AsRef<Path>, model: &Denoiser, config: &TrainConfig) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for ((name, (rows, cols)), t) in model
        .config()
        .parameter_shapes()
        .into_iter()
        .zip(&model.params().tensors)
    {
        let file = format!("{name}.rvimg");
        let data = t.iter().map(|v| *v as f32).collect();
        tensor_file::save(dir.join(&file), &Tensor::new((rows, cols, 1), data)?)?;
        manifest.push_str(&format!("{name}\t{rows}x{cols}x1\t{HEADER_LEN}\t{file}\n"));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(MODEL_CONFIG);
    fs::write(&path, config.to_text()).map_err(|e| Error::io(&path, e))
}

pub fn load(dir: impl AsRef<Path>) -> Result<(Denoiser, TrainConfig)> {
    let dir = dir.as_ref();
    let config = TrainConfig::load(dir.join(MODEL_CONFIG))?;
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let shapes = config.denoiser_config().parameter_shapes();
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != shapes.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, model needs {}",
            lines.len(),
            shapes.len()
        )));
    }
    let mut tensors = Vec::with_capacity(shapes.len());
    for (line, (name, (rows, cols))) in lines.iter().zip(shapes) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 || fields[0] != name {
            return Err(Error::Checkpoint(format!(
                "bad manifest line {line:?}, expected {name}"
            )));
        }
        let t = tensor_file::load(dir.join(fields[3]))?;
        if t.dims() != (rows, cols, 1) {
            return Err(Error::Checkpoint(format!(
                "{name}: dims {:?}, expected {rows}x{cols}x1",
                t.dims()
            )));
        }
        let data: Vec<f64> = t.data().iter().map(|v| *v as f64).collect();
        tensors.push(Array2::from_shape_vec((rows, cols), data).expect("dims checked"));
    }
    let model = Denoiser::from_params(config.denoiser_config(), Params { tensors })?;
    Ok((model, config))
}
