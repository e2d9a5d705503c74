//! Edit jobs and the single-worker queue that runs them.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use tokio::sync::mpsc;

use rangeforge::edit::{bev_occupancy, BevConfig, Generator};
use rangeforge::kv::KeyValues;
use rangeforge::metrics::{extract_masked_points, mae};
use rangeforge::tensor_file::Tensor;
use rangeforge::{invert, OrientedBox, RangeImage, SemanticMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Queued => "queued",
            JobStatus::Running => "running",
            JobStatus::Done => "done",
            JobStatus::Failed => "failed",
        }
    }
}

/// Scores of one box edit, measured against the image before that edit.
#[derive(Debug, Clone, PartialEq)]
pub struct EditMetrics {
    pub mask_pixels: usize,
    pub before_points: usize,
    pub after_points: usize,
    /// Normalized mean absolute change inside the mask, 0 for empty masks.
    pub mae: f64,
}

/// Artifacts of a finished job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    pub image: RangeImage,
    pub mask: SemanticMask,
    pub bev: Tensor,
    pub edits: Vec<EditMetrics>,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub id: String,
    pub scene: String,
    pub boxes: Vec<OrientedBox>,
    pub seed: u64,
    pub status: JobStatus,
    pub result: Option<Arc<JobResult>>,
    pub error: Option<String>,
}

impl Job {
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("id", &self.id)
            .push("scene", &self.scene)
            .push("seed", self.seed)
            .push("boxes", self.boxes.len())
            .push("status", self.status.as_str());
        if let Some(r) = &self.result {
            kv.push("image", format!("/jobs/{}/image", self.id))
                .push("bev", format!("/jobs/{}/bev", self.id))
                .push("mask", format!("/jobs/{}/mask", self.id))
                .push("mask_pixels", r.mask.count());
            for (k, e) in r.edits.iter().enumerate() {
                kv.push(format!("edit.{k}.mask_pixels"), e.mask_pixels)
                    .push(format!("edit.{k}.before_points"), e.before_points)
                    .push(format!("edit.{k}.after_points"), e.after_points)
                    .push(format!("edit.{k}.mae"), e.mae);
            }
        }
        if let Some(e) = &self.error {
            kv.push("error", e);
        }
        kv
    }
}

/// Applies `boxes` to `image` one at a time, box `k` with seed `seed + k`,
/// recording per-edit metrics. Same inputs give bit-identical results.
pub fn run_job(
    generator: &Generator,
    image: &RangeImage,
    boxes: &[OrientedBox],
    seed: u64,
) -> rangeforge::Result<JobResult> {
    let cfg = &generator.projection;
    let mut current = image.clone();
    let mut union = SemanticMask::zeros(cfg.height, cfg.width);
    let mut edits = Vec::with_capacity(boxes.len());
    for (k, b) in boxes.iter().enumerate() {
        let mask = generator.box_mask(b)?;
        let next = generator.inpaint(&current, &mask, seed.wrapping_add(k as u64))?;
        let (before_points, after_points, change) = if mask.is_empty() {
            (0, 0, 0.0)
        } else {
            (
                extract_masked_points(&current, &mask, cfg)?.len(),
                extract_masked_points(&next, &mask, cfg)?.len(),
                mae(&current, &next, cfg, Some(&mask))?,
            )
        };
        edits.push(EditMetrics {
            mask_pixels: mask.count(),
            before_points,
            after_points,
            mae: change,
        });
        union = union.union(&mask)?;
        current = next;
    }
    let bev = bev_occupancy(&invert(&current, cfg)?, &BevConfig::default())?;
    Ok(JobResult {
        image: current,
        mask: union,
        bev,
        edits,
    })
}

/// Why a job could not be removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeleteError {
    NotFound,
    Running,
}

/// Job table. Writers take the lock briefly; readers get cloned snapshots.
#[derive(Debug, Default)]
pub struct JobStore {
    jobs: RwLock<HashMap<String, Job>>,
    next: RwLock<u64>,
}

impl JobStore {
    pub fn insert(&self, scene: String, boxes: Vec<OrientedBox>, seed: u64) -> Job {
        let id = {
            let mut n = self.next.write().expect("job counter lock");
            *n += 1;
            format!("job-{:06}", *n)
        };
        let job = Job {
            id: id.clone(),
            scene,
            boxes,
            seed,
            status: JobStatus::Queued,
            result: None,
            error: None,
        };
        self.jobs.write().expect("job table lock").insert(id, job.clone());
        job
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.read().expect("job table lock").get(id).cloned()
    }

    /// Moves a queued job to running; `None` when it was deleted meanwhile.
    fn start(&self, id: &str) -> Option<Job> {
        let mut jobs = self.jobs.write().expect("job table lock");
        let job = jobs.get_mut(id)?;
        if job.status != JobStatus::Queued {
            return None;
        }
        job.status = JobStatus::Running;
        Some(job.clone())
    }

    fn finish(&self, id: &str, outcome: Result<JobResult, String>) {
        let mut jobs = self.jobs.write().expect("job table lock");
        if let Some(job) = jobs.get_mut(id) {
            match outcome {
                Ok(r) => {
                    job.status = JobStatus::Done;
                    job.result = Some(Arc::new(r));
                }
                Err(e) => {
                    job.status = JobStatus::Failed;
                    job.error = Some(e);
                }
            }
        }
    }

    /// Removes a job unless it is running.
    pub fn delete(&self, id: &str) -> Result<(), DeleteError> {
        let mut jobs = self.jobs.write().expect("job table lock");
        match jobs.get(id).map(|j| j.status) {
            None => Err(DeleteError::NotFound),
            Some(JobStatus::Running) => Err(DeleteError::Running),
            Some(_) => {
                jobs.remove(id);
                Ok(())
            }
        }
    }

    pub fn remove(&self, id: &str) {
        self.jobs.write().expect("job table lock").remove(id);
    }
}

/// Loads the base image of a job's scene.
pub type SceneLoader = Arc<dyn Fn(&str) -> Result<RangeImage, String> + Send + Sync>;

/// Starts the worker and returns the queue sender. Jobs run one at a time
/// in submission order.
pub fn spawn_worker(
    store: Arc<JobStore>,
    generator: Arc<Generator>,
    load_scene: SceneLoader,
    depth: usize,
) -> mpsc::Sender<String> {
    let (tx, mut rx) = mpsc::channel::<String>(depth.max(1));
    tokio::spawn(async move {
        while let Some(id) = rx.recv().await {
            let Some(job) = store.start(&id) else { continue };
            let generator = generator.clone();
            let load_scene = load_scene.clone();
            let outcome = tokio::task::spawn_blocking(move || {
                let image = load_scene(&job.scene)?;
                run_job(&generator, &image, &job.boxes, job.seed).map_err(|e| e.to_string())
            })
            .await
            .unwrap_or_else(|e| Err(format!("worker panicked: {e}")));
            store.finish(&id, outcome);
        }
    });
    tx
}
