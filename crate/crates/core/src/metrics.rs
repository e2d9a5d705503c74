//! Instance-level generation metrics.
//!
//! Point-cloud metrics run on the returns inside an evaluation mask,
//! normalized to the unit sphere. JSD compares bird's-eye-view occupancy
//! histograms, CD is the two-sided mean squared nearest-neighbor distance,
//! and MMD is the mean over references of the closest generated cloud by CD.
//! MAE compares normalized range images.

use std::fmt::Write as _;

use serde::Serialize;

use crate::diffusion::normalize_image;
use crate::error::{Error, Result};
use crate::image::{check_dims, RangeImage, SemanticMask};
use crate::kv::KeyValues;
use crate::projection::{pixel_point, ProjectionConfig};
use crate::types::{Point, PointCloud};

pub const DEFAULT_BEV_BINS: usize = 50;

/// Returns of masked, non-sentinel pixels at their bin-center directions.
pub fn extract_masked_points(img: &RangeImage, mask: &SemanticMask, cfg: &ProjectionConfig) -> Result<PointCloud> {
    check_dims(img.dims(), mask.dims())?;
    check_dims(img.dims(), (cfg.height, cfg.width))?;
    let points = mask
        .pixels()
        .into_iter()
        .filter_map(|p| {
            let (r, i) = img.get(p.row, p.col);
            (r > 0.0).then(|| pixel_point(p.row, p.col, r as f64, i as f64, cfg))
        })
        .collect();
    Ok(PointCloud::new(points))
}

/// Centers on the centroid and scales the farthest point to radius 1. A
/// cloud of identical points collapses to the origin.
pub fn normalize_unit_sphere(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::Empty("unit-sphere normalization of an empty cloud"));
    }
    let n = cloud.len() as f64;
    let (mut cx, mut cy, mut cz) = (0.0, 0.0, 0.0);
    for p in &cloud.points {
        cx += p.x;
        cy += p.y;
        cz += p.z;
    }
    let c = Point::new(cx / n, cy / n, cz / n, 0.0);
    let radius = cloud.points.iter().map(|p| p.dist_sq(&c)).fold(0.0, f64::max).sqrt();
    let scale = if radius > 0.0 { 1.0 / radius } else { 0.0 };
    let points = cloud
        .points
        .iter()
        .map(|p| {
            Point::new(
                (p.x - c.x) * scale,
                (p.y - c.y) * scale,
                (p.z - c.z) * scale,
                p.intensity,
            )
        })
        .collect();
    Ok(PointCloud::with_frame(points, cloud.frame_id.clone()))
}

fn mean_nearest(from: &[Point], to: &[Point]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|a| to.iter().map(|b| a.dist_sq(b)).fold(f64::INFINITY, f64::min))
        .sum();
    total / from.len() as f64
}

/// `mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer distance needs two non-empty clouds"));
    }
    Ok(mean_nearest(&a.points, &b.points) + mean_nearest(&b.points, &a.points))
}

/// Mean over `refs` of the smallest chamfer distance to any of `gens`.
pub fn mmd(refs: &[PointCloud], gens: &[PointCloud]) -> Result<f64> {
    if refs.is_empty() || gens.is_empty() {
        return Err(Error::Empty("mmd needs non-empty reference and generated sets"));
    }
    let mut total = 0.0;
    for r in refs {
        let mut best = f64::INFINITY;
        for g in gens {
            best = best.min(chamfer(r, g)?);
        }
        total += best;
    }
    Ok(total / refs.len() as f64)
}

/// `B x B` probabilities over `[-1, 1]^2` in `(x, y)`, row index from `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevHistogram {
    pub bins: usize,
    pub probs: Vec<f64>,
}

fn bin_index(v: f64, bins: usize) -> Result<usize> {
    const SLACK: f64 = 1e-9;
    if !(-1.0 - SLACK..=1.0 + SLACK).contains(&v) {
        return Err(Error::OutOfUnitSquare(v));
    }
    let k = ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * bins as f64).floor() as usize;
    Ok(k.min(bins - 1))
}

/// Occupancy histogram of a unit-sphere-normalized cloud.
pub fn bev_histogram(cloud: &PointCloud, bins: usize) -> Result<BevHistogram> {
    if cloud.is_empty() {
        return Err(Error::Empty("histogram of an empty cloud"));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let mut probs = vec![0.0; bins * bins];
    for p in &cloud.points {
        probs[bin_index(p.y, bins)? * bins + bin_index(p.x, bins)?] += 1.0;
    }
    let n = cloud.len() as f64;
    probs.iter_mut().for_each(|v| *v /= n);
    Ok(BevHistogram { bins, probs })
}

/// Jensen-Shannon divergence, natural log, of two probability vectors.
pub fn jsd_probs(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    let kl_to_mid = |a: f64, m: f64| if a > 0.0 { a * (a / m).ln() } else { 0.0 };
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        total += 0.5 * kl_to_mid(a, m) + 0.5 * kl_to_mid(b, m);
    }
    Ok(total.max(0.0))
}

pub fn jsd(p: &BevHistogram, q: &BevHistogram) -> Result<f64> {
    if p.bins != q.bins {
        return Err(Error::LengthMismatch {
            expected: p.bins,
            actual: q.bins,
        });
    }
    jsd_probs(&p.probs, &q.probs)
}

/// Mean absolute difference of the normalized images, over both channels,
/// restricted to `mask` when one is given.
pub fn mae(a: &RangeImage, b: &RangeImage, cfg: &ProjectionConfig, mask: Option<&SemanticMask>) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    if let Some(m) = mask {
        check_dims(a.dims(), m.dims())?;
    }
    let na = normalize_image(a, cfg)?;
    let nb = normalize_image(b, cfg)?;
    let (h, w) = a.dims();
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            if mask.is_some_and(|m| !m.get(r, c)) {
                continue;
            }
            for ch in 0..2 {
                total += (na[[r, c, ch]] - nb[[r, c, ch]]).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Empty("mae over an empty mask"));
    }
    Ok(total / count as f64)
}

/// Scores for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub jsd: f64,
    pub mmd: f64,
    pub cd: f64,
    pub mae: f64,
    pub reference_points: usize,
    pub generated_points: usize,
    pub pairs: usize,
    pub bev_bins: usize,
}

impl MetricReport {
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("jsd", self.jsd)
            .push("mmd", self.mmd)
            .push("cd", self.cd)
            .push("mae", self.mae)
            .push("reference_points", self.reference_points)
            .push("generated_points", self.generated_points)
            .push("pairs", self.pairs)
            .push("bev_bins", self.bev_bins);
        kv
    }

    /// Single-line JSON record.
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report serializes");
        let _ = writeln!(s);
        s
    }
}

/// One reference/generated image pair with its evaluation mask.
pub struct EvalPair<'a> {
    pub reference: &'a RangeImage,
    pub generated: &'a RangeImage,
    pub mask: &'a SemanticMask,
}

/// Metrics over paired edits. JSD pools the normalized instance points of
/// all pairs into one histogram per side; CD and MAE are means over pairs;
/// MMD matches each reference instance against every generated instance.
/// Pairs whose masked region has no returns on either side are skipped for
/// the point metrics.
pub fn evaluate(pairs: &[EvalPair<'_>], cfg: &ProjectionConfig, bins: usize) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation needs at least one pair"));
    }
    let mut refs = Vec::new();
    let mut gens = Vec::new();
    let mut mae_total = 0.0;
    let (mut ref_points, mut gen_points) = (0, 0);
    for p in pairs {
        mae_total += mae(p.reference, p.generated, cfg, Some(p.mask))?;
        let r = extract_masked_points(p.reference, p.mask, cfg)?;
        let g = extract_masked_points(p.generated, p.mask, cfg)?;
        ref_points += r.len();
        gen_points += g.len();
        if !r.is_empty() && !g.is_empty() {
            refs.push(normalize_unit_sphere(&r)?);
            gens.push(normalize_unit_sphere(&g)?);
        }
    }
    if refs.is_empty() {
        return Err(Error::Empty("no pair has returns inside its mask"));
    }
    let pool = |clouds: &[PointCloud]| PointCloud::new(clouds.iter().flat_map(|c| c.points.clone()).collect());
    let jsd_v = jsd(&bev_histogram(&pool(&refs), bins)?, &bev_histogram(&pool(&gens), bins)?)?;
    let mut cd = 0.0;
    for (r, g) in refs.iter().zip(&gens) {
        cd += chamfer(r, g)?;
    }
    Ok(MetricReport {
        jsd: jsd_v,
        mmd: mmd(&refs, &gens)?,
        cd: cd / refs.len() as f64,
        mae: mae_total / pairs.len() as f64,
        reference_points: ref_points,
        generated_points: gen_points,
        pairs: refs.len(),
        bev_bins: bins,
    })
}
