//! Deterministic ray-cast toy scenes: a flat ground patch and car-sized
//! boxes standing on it.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::projection::ProjectionConfig;
use crate::types::{OrientedBox, Point, PointCloud};

use super::{ScanRecord, CAR, GROUND};

/// Height of the ground plane below the sensor.
pub const GROUND_Z: f64 = -1.7;

/// Parameters of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    /// Half side of the square ground patch, meters.
    pub ground_extent: f64,
    pub cars: usize,
    /// Car center distance from the sensor, meters.
    pub radius: (f64, f64),
    /// Car center bearing, radians.
    pub bearing: (f64, f64),
    pub yaw: (f64, f64),
    /// Standard deviation of the range jitter, meters.
    pub sigma: f64,
    /// Probability that a ray returns nothing.
    pub drop_prob: f64,
    /// Angular grid the rays are cast over.
    pub projection: ProjectionConfig,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            ground_extent: 30.0,
            cars: 3,
            radius: (10.0, 25.0),
            bearing: (-PI, PI),
            yaw: (-PI, PI),
            sigma: 0.02,
            drop_prob: 0.0,
            projection: ProjectionConfig::default(),
        }
    }
}

impl SceneSpec {
    pub fn with_seed(seed: u64) -> Self {
        SceneSpec {
            seed,
            ..SceneSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !(self.sigma >= 0.0 && self.sigma.is_finite())
            || !(self.ground_extent > 0.0 && self.ground_extent.is_finite())
            || !(0.0..1.0).contains(&self.drop_prob)
            || !ordered(self.radius)
            || !ordered(self.bearing)
            || !ordered(self.yaw)
            || self.radius.0 < 0.0
        {
            return Err(Error::InvalidConfig(format!("invalid scene spec {self:?}")));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn place_cars(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<OrientedBox>> {
    const ATTEMPTS: usize = 1000;
    let mut cars: Vec<OrientedBox> = Vec::with_capacity(spec.cars);
    for _ in 0..spec.cars {
        let mut placed = false;
        for _ in 0..ATTEMPTS {
            let r = uniform(rng, spec.radius);
            let bearing = uniform(rng, spec.bearing);
            let yaw = uniform(rng, spec.yaw);
            let length = rng.random_range(3.8..4.8);
            let width = rng.random_range(1.6..2.0);
            let height = rng.random_range(1.4..1.7);
            let b = OrientedBox::new(
                [r * bearing.cos(), r * bearing.sin(), GROUND_Z + height / 2.0],
                length,
                width,
                height,
                yaw,
            )?;
            let reach = |b: &OrientedBox| 0.5 * b.length.hypot(b.width);
            let clear = cars
                .iter()
                .all(|o| (o.cx - b.cx).hypot(o.cy - b.cy) > reach(o) + reach(&b) + 0.5);
            // the sensor must stay outside every car
            if clear && b.cx.hypot(b.cy) > reach(&b) + 1.0 {
                cars.push(b);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidConfig(format!(
                "could not place {} non-overlapping cars",
                spec.cars
            )));
        }
    }
    Ok(cars)
}

/// Distance along the unit ray `d` from the origin to the box surface, and
/// the cosine between the ray and the normal of the face it enters.
fn ray_box(b: &OrientedBox, d: [f64; 3]) -> Option<(f64, f64)> {
    let o = b.to_local(0.0, 0.0, 0.0);
    let (s, c) = b.yaw.sin_cos();
    let dl = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
    let h = b.half_extents();
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut face = 0;
    for i in 0..3 {
        if dl[i].abs() < 1e-12 {
            if o[i].abs() > h[i] {
                return None;
            }
            continue;
        }
        let a = (-h[i] - o[i]) / dl[i];
        let z = (h[i] - o[i]) / dl[i];
        if a.min(z) > t0 {
            t0 = a.min(z);
            face = i;
        }
        t1 = t1.min(a.max(z));
    }
    (t0 <= t1 && t0 > 0.0).then_some((t0, dl[face].abs()))
}

/// Casts one ray per pixel of `spec.projection`, each at a uniformly
/// jittered direction strictly inside its angular bin.
///
/// Random draws, in order: car placements; then per ray (row-major) the
/// azimuth and elevation jitter, the drop test, and for hits the range
/// noise and intensity.
pub fn synthetic_scene(spec: &SceneSpec) -> Result<ScanRecord> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cars = place_cars(spec, &mut rng)?;
    let cfg = &spec.projection;
    let noise = Normal::new(0.0, spec.sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let (da, de) = (cfg.azimuth_step(), cfg.elevation_step());
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let theta = cfg.column_center(col) + da * rng.random_range(-0.45..0.45);
            let phi = cfg.row_center(row) + de * rng.random_range(-0.45..0.45);
            let dropped = rng.random::<f64>() < spec.drop_prob;
            let (st, ct) = theta.sin_cos();
            let (sp, cp) = phi.sin_cos();
            let d = [cp * ct, cp * st, sp];
            let mut hit: Option<(f64, f64, u16)> = None;
            if d[2] < 0.0 {
                let t = GROUND_Z / d[2];
                if (t * d[0]).abs() <= spec.ground_extent && (t * d[1]).abs() <= spec.ground_extent {
                    hit = Some((t, -d[2], GROUND));
                }
            }
            for b in &cars {
                if let Some((t, cos)) = ray_box(b, d) {
                    if hit.is_none_or(|(best, _, _)| t < best) {
                        hit = Some((t, cos, CAR));
                    }
                }
            }
            let Some((t, cos, label)) = hit else { continue };
            let jitter = if spec.sigma > 0.0 {
                let v: f64 = noise.sample(&mut rng);
                v.clamp(-3.0 * spec.sigma, 3.0 * spec.sigma)
            } else {
                0.0
            };
            let u: f64 = rng.random();
            if dropped {
                continue;
            }
            let r = t + jitter;
            if r <= 0.0 || r > cfg.r_max {
                continue;
            }
            // brighter at normal incidence, with a little speckle
            let base = if label == CAR { 0.3 + 0.5 * cos } else { 0.1 + 0.4 * cos };
            let intensity = (base + 0.04 * (u - 0.5)).clamp(0.0, 1.0);
            points.push(Point::new(r * d[0], r * d[1], r * d[2], intensity));
            labels.push(label);
        }
    }
    Ok(ScanRecord {
        cloud: PointCloud::with_frame(points, format!("synthetic-{}", spec.seed)),
        labels: Some(labels),
        boxes: Some(cars.into_iter().map(|b| (b, CAR)).collect()),
    })
}
