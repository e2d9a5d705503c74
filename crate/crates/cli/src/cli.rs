//! Command-line front end.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use rangeforge::dataset::write_velodyne_bin;
use rangeforge::dataset::{
    build_training_example, read_triples, synthetic_scene, synthetic_training_set, write_triples, ExampleConfig,
    InstanceSelector, LabelMap, MaskMode, ScanRecord, SceneSpec,
};
use rangeforge::diffusion::{checkpoint, TrainConfig, Trainer};
use rangeforge::edit::Generator;
use rangeforge::mask::{apply_mask, box_mask, hull_mask, mask_from_box, DEFAULT_SAMPLES_PER_FACE};
use rangeforge::metrics::{evaluate, EvalPair, DEFAULT_BEV_BINS};
use rangeforge::tensor_file;
use rangeforge::{invert, project, OrientedBox, ProjectionConfig, RangeImage, SemanticMask};

use crate::service;

/// Failure of a subcommand, reported as one line on stderr.
#[derive(Debug)]
pub struct Failure(pub String);

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // diagnostics must stay on one line
        f.write_str(&self.0.replace('\n', " "))
    }
}

impl From<rangeforge::Error> for Failure {
    fn from(e: rangeforge::Error) -> Self {
        Failure(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "rangeforge", version, about = "Range-view LiDAR scene editing")]
pub struct Cli {
    #[command(flatten)]
    pub projection: ProjectionArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Range-view raster shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct ProjectionArgs {
    #[arg(long, global = true, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, global = true, default_value_t = 1024)]
    pub cols: usize,
    /// Lower elevation limit, degrees.
    #[arg(long, global = true, default_value_t = -24.8, allow_negative_numbers = true)]
    pub fov_down: f64,
    /// Upper elevation limit, degrees.
    #[arg(long, global = true, default_value_t = 2.0, allow_negative_numbers = true)]
    pub fov_up: f64,
    #[arg(long, global = true, default_value_t = 80.0)]
    pub r_max: f64,
}

impl ProjectionArgs {
    pub fn config(&self) -> CliResult<ProjectionConfig> {
        let cfg = ProjectionConfig {
            height: self.rows,
            width: self.cols,
            phi_min: self.fov_down.to_radians(),
            phi_max: self.fov_up.to_radians(),
            r_max: self.r_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskModeArg {
    Hull,
    Points,
}

impl From<MaskModeArg> for MaskMode {
    fn from(m: MaskModeArg) -> Self {
        match m {
            MaskModeArg::Hull => MaskMode::Hull,
            MaskModeArg::Points => MaskMode::Points,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project a velodyne scan to a range image.
    Project {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Back-project a range image to a velodyne scan.
    Invert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a mask from a box or from labeled scan points.
    Mask {
        /// Box as "cx,cy,cz,l,w,h,yaw".
        #[arg(long = "box", allow_hyphen_values = true, conflicts_with = "scan")]
        bbox: Option<OrientedBox>,
        /// Scan with a sibling .label file.
        #[arg(long, required_unless_present = "bbox")]
        scan: Option<PathBuf>,
        /// Class name or id selected from the scan labels.
        #[arg(long, default_value = "car")]
        class: String,
        /// Keep the raw pixel set instead of its convex hull.
        #[arg(long)]
        no_hull: bool,
        #[arg(long)]
        out: PathBuf,
        /// Range image to mask; the result is written to --masked-out.
        #[arg(long, requires = "masked_out")]
        image: Option<PathBuf>,
        #[arg(long, requires = "image")]
        masked_out: Option<PathBuf>,
    },
    /// Write training triples from labeled scans or synthetic scenes.
    MakeDataset {
        /// Directory of .bin scans with .label and .boxes.txt siblings.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        scans: Option<PathBuf>,
        /// Number of synthetic examples to generate instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = MaskModeArg::Hull)]
        mask_mode: MaskModeArg,
        /// Crop rows and columns around each instance.
        #[arg(long, num_args = 2, value_names = ["ROWS", "COLS"], default_values_t = [32, 256])]
        crop: Vec<usize>,
        /// Keep full images.
        #[arg(long)]
        no_crop: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoiser on a triple directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// key = value training configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply box edits to a scan or range image.
    Generate {
        #[arg(long)]
        model: PathBuf,
        /// Velodyne .bin scan or range image tensor.
        #[arg(long)]
        input: PathBuf,
        /// Box as "cx,cy,cz,l,w,h,yaw"; repeat to apply several in order.
        #[arg(long = "box", required = true, allow_hyphen_values = true)]
        boxes: Vec<OrientedBox>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Union of the edit masks.
        #[arg(long)]
        mask_out: Option<PathBuf>,
        /// Edited scan as a velodyne .bin.
        #[arg(long)]
        cloud_out: Option<PathBuf>,
    },
    /// Score generated range images against references.
    Evaluate {
        /// Range image, or directory of range images.
        #[arg(long)]
        reference: PathBuf,
        /// Range image, or directory with the same file names.
        #[arg(long)]
        generated: PathBuf,
        /// Mask, or directory with the same file names.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BEV_BINS)]
        bins: usize,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic scan with labels and boxes.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        cars: usize,
        /// Output .bin; .label and .boxes.txt are written alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP editing service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        model: PathBuf,
        /// Scene directory.
        #[arg(long, env = "RANGEFORGE_DATA")]
        data: PathBuf,
        #[arg(long, default_value_t = 16)]
        queue_depth: usize,
    },
}

fn read_image(path: &Path) -> CliResult<RangeImage> {
    Ok(RangeImage::from_tensor(&tensor_file::load(path)?)?)
}

fn read_mask(path: &Path) -> CliResult<SemanticMask> {
    Ok(SemanticMask::from_tensor(&tensor_file::load(path)?)?)
}

fn is_scan(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

/// Range image from either a velodyne scan or a tensor file.
pub fn load_scene_image(path: &Path, cfg: &ProjectionConfig) -> CliResult<RangeImage> {
    if is_scan(path) {
        let scan = rangeforge::dataset::read_velodyne_bin(path)?;
        Ok(project(&scan.cloud, cfg).image)
    } else {
        let img = read_image(path)?;
        if img.dims() != (cfg.height, cfg.width) {
            return Err(Failure(format!(
                "{}: image is {}x{}, projection is {}x{}",
                path.display(),
                img.height(),
                img.width(),
                cfg.height,
                cfg.width
            )));
        }
        Ok(img)
    }
}

/// Sorted `.rvimg` file names of a directory, or the file itself.
fn tensor_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Failure(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "rvimg"))
        .collect();
    out.sort();
    Ok(out)
}

fn counterpart(path: &Path, reference: &Path, file: &Path) -> PathBuf {
    if path.is_dir() && reference.is_dir() {
        path.join(file.file_name().expect("listed files have names"))
    } else {
        path.to_path_buf()
    }
}

fn stdout_line(text: &str) -> CliResult {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult {
    let cfg = cli.projection.config()?;
    let map = LabelMap::kitti360();
    match cli.command {
        Command::Project { input, out } => {
            let scan = rangeforge::dataset::read_velodyne_bin(&input)?;
            let proj = project(&scan.cloud, &cfg);
            tensor_file::save(&out, &proj.image.to_tensor())?;
            let placed = proj.assignment.iter().filter(|a| a.is_some()).count();
            stdout_line(&format!(
                "points = {}\nin_view = {placed}\nreturns = {}\ndropped = {}\n",
                scan.cloud.len(),
                proj.image.return_count(),
                scan.dropped
            ))
        }
        Command::Invert { input, out } => {
            let img = load_scene_image(&input, &cfg)?;
            let cloud = invert(&img, &cfg)?;
            write_velodyne_bin(&out, &cloud)?;
            stdout_line(&format!("points = {}\n", cloud.len()))
        }
        Command::Mask {
            bbox,
            scan,
            class,
            no_hull,
            out,
            image,
            masked_out,
        } => {
            let mask = match (bbox, scan) {
                (Some(b), _) if no_hull => mask_from_box(&b, &cfg, DEFAULT_SAMPLES_PER_FACE)?,
                (Some(b), _) => box_mask(&b, &cfg, DEFAULT_SAMPLES_PER_FACE)?,
                (None, Some(scan)) => {
                    let (rec, _) = ScanRecord::load(&scan, &map)?;
                    let target = map
                        .resolve(&class)
                        .ok_or_else(|| Failure(format!("unknown class {class:?}")))?;
                    let proj = project(&rec.cloud, &cfg);
                    let raw = rangeforge::dataset::instance_mask(&rec, InstanceSelector::Class(target), &proj)?;
                    if no_hull {
                        raw
                    } else {
                        hull_mask(&raw)
                    }
                }
                (None, None) => unreachable!("clap requires --box or --scan"),
            };
            tensor_file::save(&out, &mask.to_tensor())?;
            if let (Some(image), Some(masked_out)) = (image, masked_out) {
                let img = load_scene_image(&image, &cfg)?;
                tensor_file::save(&masked_out, &apply_mask(&img, &mask)?.to_tensor())?;
            }
            stdout_line(&format!("pixels = {}\n", mask.count()))
        }
        Command::MakeDataset {
            scans,
            synthetic,
            seed,
            mask_mode,
            crop,
            no_crop,
            out,
        } => {
            let ecfg = ExampleConfig {
                projection: cfg,
                mask_mode: mask_mode.into(),
                crop: (!no_crop).then(|| (crop[0], crop[1])),
                ..ExampleConfig::default()
            };
            let examples = match (scans, synthetic) {
                (_, Some(count)) => {
                    let template = SceneSpec {
                        projection: cfg,
                        ..SceneSpec::with_seed(seed)
                    };
                    synthetic_training_set(count, &template, &ecfg)?
                }
                (Some(dir), None) => scan_examples(&dir, &map, &ecfg)?,
                (None, None) => unreachable!("clap requires --scans or --synthetic"),
            };
            write_triples(&out, &examples)?;
            stdout_line(&format!("examples = {}\n", examples.len()))
        }
        Command::Train {
            data,
            config,
            steps,
            seed,
            lr,
            out,
        } => {
            let mut tc = match config {
                Some(p) => TrainConfig::load(p)?,
                None => TrainConfig::default(),
            };
            tc.steps = steps.unwrap_or(tc.steps);
            tc.seed = seed.unwrap_or(tc.seed);
            tc.lr = lr.unwrap_or(tc.lr);
            tc.validate()?;
            let examples = read_triples(&data)?;
            let latents = examples
                .iter()
                .map(|e| e.to_latent(&cfg))
                .collect::<rangeforge::Result<Vec<_>>>()?;
            let mut trainer = Trainer::new(tc.clone())?;
            trainer.run(&latents, |_, _| {})?;
            checkpoint::save(&out, &trainer.sampling_model(), &tc)?;
            let losses = trainer.losses();
            let text: String = losses.iter().map(|l| format!("{l}\n")).collect();
            let path = out.join("losses.txt");
            fs::write(&path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            let last = losses.last().copied().unwrap_or(f64::NAN);
            stdout_line(&format!("steps = {}\nfinal_loss = {last}\n", losses.len()))
        }
        Command::Generate {
            model,
            input,
            boxes,
            seed,
            out,
            mask_out,
            cloud_out,
        } => {
            let generator = Generator::from_checkpoint(&model, cfg)?;
            let img = load_scene_image(&input, &cfg)?;
            let outcome = generator.generate(&img, &boxes, seed)?;
            tensor_file::save(&out, &outcome.image.to_tensor())?;
            let union = outcome.union_mask();
            if let Some(p) = mask_out {
                tensor_file::save(&p, &union.to_tensor())?;
            }
            if let Some(p) = cloud_out {
                write_velodyne_bin(&p, &invert(&outcome.image, &cfg)?)?;
            }
            let mut text = format!("edits = {}\nmask_pixels = {}\n", boxes.len(), union.count());
            for (k, m) in outcome.masks.iter().enumerate() {
                text.push_str(&format!("edit.{k}.mask_pixels = {}\n", m.count()));
            }
            stdout_line(&text)
        }
        Command::Evaluate {
            reference,
            generated,
            mask,
            bins,
            json,
        } => {
            let files = tensor_files(&reference)?;
            if files.is_empty() {
                return Err(Failure(format!("{}: no range images", reference.display())));
            }
            let mut triples = Vec::with_capacity(files.len());
            for f in &files {
                let r = read_image(f)?;
                let g = read_image(&counterpart(&generated, &reference, f))?;
                let m = read_mask(&counterpart(&mask, &reference, f))?;
                triples.push((r, g, m));
            }
            let pairs: Vec<EvalPair<'_>> = triples
                .iter()
                .map(|(r, g, m)| EvalPair {
                    reference: r,
                    generated: g,
                    mask: m,
                })
                .collect();
            let report = evaluate(&pairs, &cfg, bins)?;
            if json {
                stdout_line(&report.to_json_line())
            } else {
                stdout_line(&report.to_kv().to_string())
            }
        }
        Command::Synth { seed, cars, out } => {
            let spec = SceneSpec {
                cars,
                projection: cfg,
                ..SceneSpec::with_seed(seed)
            };
            let rec = synthetic_scene(&spec)?;
            rec.save(&out, &map)?;
            stdout_line(&format!(
                "points = {}\nboxes = {}\n",
                rec.cloud.len(),
                rec.boxes.as_ref().map_or(0, Vec::len)
            ))
        }
        Command::Serve {
            port,
            bind,
            model,
            data,
            queue_depth,
        } => {
            let generator = Generator::from_checkpoint(&model, cfg)?;
            if !data.is_dir() {
                return Err(Failure(format!("{}: not a directory", data.display())));
            }
            let addr: SocketAddr = format!("{bind}:{port}")
                .parse()
                .map_err(|e| Failure(format!("bad address {bind}:{port}: {e}")))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let state = service::AppState::new(generator, data, queue_depth);
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, service::router(state)).await?;
                Ok(())
            })
        }
    }
}

/// Every annotated box of every labeled scan in `dir`, in file-name order.
fn scan_examples(
    dir: &Path,
    map: &LabelMap,
    ecfg: &ExampleConfig,
) -> CliResult<Vec<rangeforge::diffusion::TrainExample>> {
    let mut bins: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_scan(p))
        .collect();
    bins.sort();
    let mut out = Vec::new();
    for bin in bins {
        let (rec, _) = ScanRecord::load(&bin, map)?;
        if rec.labels.is_none() {
            continue;
        }
        let n = rec.boxes.as_ref().map_or(0, Vec::len);
        for index in 0..n {
            let sel = InstanceSelector::Box {
                index,
                margin: ecfg.box_margin,
            };
            if let Some(ex) = build_training_example(&rec, sel, ecfg)? {
                out.push(ex);
            }
        }
    }
    Ok(out)
}
