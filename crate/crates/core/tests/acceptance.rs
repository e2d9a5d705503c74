//! Acceptance checks, one PASS/FAIL line each. Exits non-zero when any
//! check fails. `RANGEFORGE_ACCEPT=name,name` runs a subset.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rangeforge::dataset::{
    label_bytes, parse_labels, parse_velodyne, synthetic_scene, synthetic_training_set, velodyne_bytes, ExampleConfig,
    MaskMode, SceneSpec,
};
use rangeforge::diffusion::{
    checkpoint, forward_diffuse, region_loss, region_loss_with_grad, Denoiser, DenoiserConfig, LatentExample,
    TrainConfig, TrainExample, Trainer,
};
use rangeforge::edit::{noise_inpaint, Generator};
use rangeforge::kv::KeyValues;
use rangeforge::mask::{convex_hull, rasterize_hull, GridPoint, Hull};
use rangeforge::metrics::{
    bev_histogram, chamfer, evaluate, extract_masked_points, jsd, jsd_probs, mmd, normalize_unit_sphere, EvalPair,
};
use rangeforge::tensor_file::Tensor;
use rangeforge::{invert, project, Pixel, Point, PointCloud, ProjectionConfig, RangeImage, SemanticMask};

const DESK_CONFIG: &str = include_str!("../../../configs/desk.cfg");

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn desk_config() -> TrainConfig {
    TrainConfig::from_kv(&KeyValues::parse(DESK_CONFIG).expect("desk config parses")).expect("desk config is valid")
}

// ---------------------------------------------------------------------------
// projection

fn round_trip() -> Check {
    let start = Instant::now();
    let cfg = ProjectionConfig::default();
    let bound = cfg.quantization_bound();
    let (mut close, mut visible) = (0usize, 0usize);
    let mut counts = Vec::new();
    for seed in 0..20 {
        let spec = SceneSpec {
            drop_prob: 0.15,
            ..SceneSpec::with_seed(seed)
        };
        let cloud = synthetic_scene(&spec).map_err(|e| e.to_string())?.cloud;
        counts.push(cloud.len());
        let p = project(&cloud, &cfg);
        let back = invert(&p.image, &cfg).map_err(|e| e.to_string())?;
        let again = project(&back, &cfg).image;
        if again != p.image {
            return Err(format!("scene {seed}: re-projection differs"));
        }
        // recovered point of each pixel
        let mut by_pixel = BTreeMap::new();
        for (q, px) in back.points.iter().zip(project(&back, &cfg).assignment) {
            let px = px.ok_or("inverted point falls outside the image")?;
            by_pixel.insert((px.row, px.col), *q);
        }
        for (pt, px) in cloud.points.iter().zip(&p.assignment) {
            let Some(px) = px else { continue };
            let (range, _) = p.image.get(px.row, px.col);
            // a point that lost its pixel to a nearer one is occluded
            if range != pt.norm() as f32 {
                continue;
            }
            visible += 1;
            let q = by_pixel[&(px.row, px.col)];
            if pt.dist_sq(&q).sqrt() <= pt.norm() * bound {
                close += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let frac = close as f64 / visible as f64;
    let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
    ensure(
        frac >= 0.99 && lo >= 10_000 && hi <= 50_000 && elapsed < Duration::from_secs(10),
        format!(
            "20 scenes of {lo}..{hi} points, {:.4}% of {visible} visible points within r*delta, re-projection bit-exact, {:.2?}",
            100.0 * frac,
            elapsed
        ),
    )
}

// ---------------------------------------------------------------------------
// hull

fn turn(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Extreme points by testing every ordered pair as a candidate edge.
fn brute_hull(pts: &[(i64, i64)]) -> BTreeSet<(i64, i64)> {
    let uniq: Vec<_> = pts.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if uniq.len() == 1 {
        return uniq.into_iter().collect();
    }
    let within = |a: (i64, i64), b: (i64, i64), p: (i64, i64)| {
        p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
    };
    let mut out = BTreeSet::new();
    for &a in &uniq {
        for &b in &uniq {
            if a == b {
                continue;
            }
            let edge = uniq.iter().all(|&p| {
                let t = turn(a, b, p);
                t > 0 || (t == 0 && within(a, b, p))
            });
            if edge {
                out.insert(a);
                out.insert(b);
            }
        }
    }
    out
}

fn lattice_segment(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    let (dr, dc) = (b.0 - a.0, b.1 - a.1);
    let g = gcd(dr, dc).max(1);
    (0..=g).map(|k| (a.0 + dr / g * k, a.1 + dc / g * k)).collect()
}

/// Pixels whose centers lie inside or on the hull polygon; degenerate hulls
/// cover the 3x3 neighborhoods of their lattice points.
fn inclusion_oracle(verts: &[(i64, i64)], h: usize, w: usize) -> SemanticMask {
    let mut m = SemanticMask::zeros(h, w);
    let mut put = |r: i64, c: i64| {
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            m.set(r as usize, c as usize, true);
        }
    };
    if verts.len() <= 2 {
        let (a, b) = (verts[0], *verts.last().unwrap());
        for (r, c) in lattice_segment(a, b) {
            for dr in -1..=1 {
                for dc in -1..=1 {
                    put(r + dr, c + dc);
                }
            }
        }
        return m;
    }
    let n = verts.len();
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let turns: Vec<i64> = (0..n).map(|i| turn(verts[i], verts[(i + 1) % n], (r, c))).collect();
            if turns.iter().all(|&t| t >= 0) || turns.iter().all(|&t| t <= 0) {
                put(r, c);
            }
        }
    }
    m
}

fn hull_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x48_55_4c_4c);
    let (h, w) = (24usize, 40usize);
    let mut degenerate = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=64);
        // a few sets are forced onto a line to exercise the degenerate path
        let pts: Vec<(i64, i64)> = if case % 10 == 0 {
            let (r0, c0) = (rng.random_range(0..h as i64 / 2), rng.random_range(0..w as i64 / 2));
            let (dr, dc) = (rng.random_range(0..=1i64), rng.random_range(0..=2i64));
            (0..n.min(10))
                .map(|k| (r0 + dr * k as i64, c0 + dc * k as i64))
                .collect()
        } else {
            let (r0, c0) = (rng.random_range(0..h as i64 / 2), rng.random_range(0..w as i64 / 2));
            let (rh, cw) = (rng.random_range(1..=h as i64 / 2), rng.random_range(1..=w as i64 / 2));
            (0..n)
                .map(|_| (r0 + rng.random_range(0..rh), c0 + rng.random_range(0..cw)))
                .collect()
        };
        let grid: Vec<GridPoint> = pts.iter().map(|&(r, c)| GridPoint::new(r, c)).collect();
        let hull = convex_hull(&grid).map_err(|e| e.to_string())?;
        if hull.is_degenerate() {
            degenerate += 1;
        }
        let got: BTreeSet<(i64, i64)> = hull.vertices().iter().map(|g| (g.row, g.col)).collect();
        let want = brute_hull(&pts);
        if got != want {
            return Err(format!("case {case}: hull {got:?} != brute force {want:?}"));
        }
        let ordered: Vec<(i64, i64)> = match &hull {
            Hull::Polygon(p) => p.vertices().iter().map(|g| (g.row, g.col)).collect(),
            Hull::Point(a) => vec![(a.row, a.col)],
            Hull::Segment(a, b) => vec![(a.row, a.col), (b.row, b.col)],
        };
        let filled = rasterize_hull(&hull, h, w);
        let oracle = inclusion_oracle(&ordered, h, w);
        if filled != oracle {
            let diff = (0..h * w).filter(|&i| filled.bits()[i] != oracle.bits()[i]).count();
            return Err(format!(
                "case {case}: raster differs from inclusion oracle at {diff} pixels"
            ));
        }
        if !pts.iter().all(|&(r, c)| filled.get(r as usize, c as usize)) {
            return Err(format!("case {case}: fill misses an input pixel"));
        }
    }
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(30),
        format!("100 sets ({degenerate} degenerate) match brute-force hull and inclusion oracle, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------------------
// loss, gradients, forward process

fn loss_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dims = (4, 6, 5);
    let a = Array3::from_shape_fn(dims, |_| rng.random_range(-3.0..3.0));
    let b = Array3::from_shape_fn(dims, |_| rng.random_range(-3.0..3.0));
    let full = region_loss(&a, &b, &SemanticMask::ones(4, 6)).map_err(|e| e.to_string())?;
    let mse = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    let rel = (full - mse).abs() / mse;
    if rel > 1e-12 {
        return Err(format!("full-mask loss {full} vs mse {mse}"));
    }
    if region_loss(&a, &b, &SemanticMask::zeros(4, 6)).is_ok() {
        return Err("empty mask accepted".into());
    }
    // masked half off by 2 everywhere, unmasked half off by 100
    let eps = Array3::zeros((2, 2, 3));
    let mut eps_hat = Array3::from_elem((2, 2, 3), 100.0);
    let mut half = SemanticMask::zeros(2, 2);
    for c in 0..2 {
        half.set(0, c, true);
        for k in 0..3 {
            eps_hat[[0, c, k]] = 2.0;
        }
    }
    let v = region_loss(&eps, &eps_hat, &half).map_err(|e| e.to_string())?;
    ensure(
        v == 4.0,
        format!("full mask = mse (rel {rel:.1e}), empty mask rejected, half mask = {v}"),
    )
}

fn gradient_check() -> Check {
    let tc = desk_config();
    let cfg = tc.denoiser_config();
    let mut model = Denoiser::new(cfg, 23).map_err(|e| e.to_string())?;
    let proj = ProjectionConfig::default();
    let set =
        synthetic_training_set(2, &SceneSpec::with_seed(500), &ExampleConfig::default()).map_err(|e| e.to_string())?;
    let sched = tc.schedule().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let batch: Vec<(LatentExample, usize, Array3<f64>)> = set
        .iter()
        .map(|ex| {
            let l = ex.to_latent(&proj).unwrap();
            let eps = l.z0.mapv(|_| StandardNormal.sample(&mut rng));
            (l, rng.random_range(1..=sched.steps()), eps)
        })
        .collect();
    let loss = |m: &Denoiser| -> f64 {
        batch
            .iter()
            .map(|(ex, t, eps)| {
                let zt = forward_diffuse(&ex.z0, *t, eps, &sched).unwrap();
                let out = m.predict(&zt, *t, &ex.cond, &ex.latent_mask).unwrap();
                region_loss(eps, &out, &ex.latent_mask).unwrap()
            })
            .sum::<f64>()
            / batch.len() as f64
    };
    let mut grads: Option<rangeforge::diffusion::Params> = None;
    for (ex, t, eps) in &batch {
        let zt = forward_diffuse(&ex.z0, *t, eps, &sched).unwrap();
        let (out, cache) = model.forward(&zt, *t, &ex.cond, &ex.latent_mask).unwrap();
        let (_, gout) = region_loss_with_grad(eps, &out, &ex.latent_mask).unwrap();
        let mut g = model.backward(&cache, &gout);
        g.scale(1.0 / batch.len() as f64);
        match &mut grads {
            None => grads = Some(g),
            Some(acc) => acc.add_assign(&g),
        }
    }
    let grads = grads.unwrap();
    let h = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let i = rng.random_range(0..model.parameter_count());
        let orig = model.params().get_flat(i);
        model.params_mut().set_flat(i, orig + h);
        let up = loss(&model);
        model.params_mut().set_flat(i, orig - h);
        let down = loss(&model);
        model.params_mut().set_flat(i, orig);
        let fd = (up - down) / (2.0 * h);
        let an = grads.get_flat(i);
        let scale = fd.abs().max(an.abs());
        let rel = if scale == 0.0 { 0.0 } else { (fd - an).abs() / scale };
        worst = worst.max(rel);
    }
    ensure(
        worst <= 1e-3,
        format!(
            "25 of {} parameters, worst relative error {worst:.2e}",
            model.parameter_count()
        ),
    )
}

fn forward_variance() -> Check {
    let sched = desk_config().schedule().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dims = (10, 100, 100);
    let z0 = Array3::from_shape_fn(dims, |_| rng.random_range(-1.0..1.0));
    let mut parts = Vec::new();
    let mut ok = true;
    for t in [1, sched.steps() / 2, sched.steps()] {
        let eps = Array3::from_shape_fn(dims, |_| StandardNormal.sample(&mut rng));
        let zt = forward_diffuse(&z0, t, &eps, &sched).map_err(|e| e.to_string())?;
        let ab = sched.alpha_bar(t).map_err(|e| e.to_string())?;
        let resid: Vec<f64> = zt.iter().zip(z0.iter()).map(|(z, x)| z - ab.sqrt() * x).collect();
        let m = mean(&resid);
        let var = resid.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (resid.len() - 1) as f64;
        let rel = (var - (1.0 - ab)).abs() / (1.0 - ab);
        ok &= rel <= 0.03;
        parts.push(format!(
            "t={t}: {var:.5} vs {:.5} ({:+.2}%)",
            1.0 - ab,
            100.0 * (var / (1.0 - ab) - 1.0)
        ));
    }
    ensure(ok, format!("1e5 draws, {}", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// training and generation

struct DeskRun {
    generator: Generator,
}

fn held_out(n: usize, seed: u64, mode: MaskMode) -> Vec<TrainExample> {
    let cfg = ExampleConfig {
        crop: None,
        mask_mode: mode,
        ..ExampleConfig::default()
    };
    synthetic_training_set(n, &SceneSpec::with_seed(seed), &cfg).expect("held-out scenes")
}

fn train(tc: &TrainConfig, data: &[TrainExample]) -> (Trainer, Vec<f64>) {
    let proj = ProjectionConfig::default();
    let latents: Vec<LatentExample> = data.iter().map(|e| e.to_latent(&proj).unwrap()).collect();
    let mut trainer = Trainer::new(tc.clone()).unwrap();
    trainer.run(&latents, |_, _| {}).unwrap();
    let losses = trainer.losses().to_vec();
    (trainer, losses)
}

fn chamfer_normalized(a: &PointCloud, b: &PointCloud) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    chamfer(&normalize_unit_sphere(a).ok()?, &normalize_unit_sphere(b).ok()?).ok()
}

fn desk_training(out: &mut Option<DeskRun>) -> Check {
    let start = Instant::now();
    let tc = desk_config();
    let proj = ProjectionConfig::default();
    let data =
        synthetic_training_set(200, &SceneSpec::default(), &ExampleConfig::default()).map_err(|e| e.to_string())?;
    if data.len() != 200 || data.iter().any(|e| e.x.dims() != (32, 256)) {
        return Err("training set is not 200 crops of 32x256".into());
    }
    let (trainer, losses) = train(&tc, &data);
    let first = mean(&losses[..100]);
    let last = mean(&losses[losses.len() - 100..]);
    // score the stored checkpoint, which is what deployment loads
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    checkpoint::save(dir.path(), &trainer.sampling_model(), &tc).map_err(|e| e.to_string())?;
    let generator = Generator::from_checkpoint(dir.path(), proj).map_err(|e| e.to_string())?;

    let test = held_out(20, 10_000, MaskMode::Hull);
    let (mut cd_model, mut cd_noise, mut raw_model, mut raw_noise) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, ex) in test.iter().enumerate() {
        let edited = generator
            .inpaint(&ex.x, &ex.mask, k as u64)
            .map_err(|e| e.to_string())?;
        let noise = noise_inpaint(&ex.x, &ex.mask, &proj, k as u64).map_err(|e| e.to_string())?;
        let truth = extract_masked_points(&ex.x, &ex.mask, &proj).map_err(|e| e.to_string())?;
        let a = extract_masked_points(&edited, &ex.mask, &proj).map_err(|e| e.to_string())?;
        let b = extract_masked_points(&noise, &ex.mask, &proj).map_err(|e| e.to_string())?;
        // an edit without returns in its mask scores as the worst case
        cd_model.push(chamfer_normalized(&truth, &a).unwrap_or(f64::INFINITY));
        cd_noise.push(chamfer_normalized(&truth, &b).unwrap_or(f64::INFINITY));
        raw_model.push(chamfer(&truth, &a).unwrap_or(f64::INFINITY));
        raw_noise.push(chamfer(&truth, &b).unwrap_or(f64::INFINITY));
    }
    let (m, n) = (mean(&cd_model), mean(&cd_noise));
    let elapsed = start.elapsed();
    let ratio = last / first;
    let detail = format!(
        "loss {first:.4} -> {last:.4} ({:.1}%), CD model {m:.4} vs noise {n:.4} ({:.2}x; unnormalized {:.2}x) over 20 edits, {:.0?}",
        100.0 * ratio,
        n / m,
        mean(&raw_noise) / mean(&raw_model),
        elapsed
    );
    *out = Some(DeskRun { generator });
    ensure(
        ratio <= 0.5 && n >= 2.0 * m && elapsed <= Duration::from_secs(30 * 60),
        detail,
    )
}

fn ablation() -> Check {
    const SEEDS: [u64; 3] = [101, 202, 303];
    let proj = ProjectionConfig::default();
    let desk = desk_config();
    let tc = TrainConfig {
        steps: 1000,
        width: 32,
        time_dim: 64,
        ema: 0.99,
        ..desk
    };
    let hull_eval = held_out(12, 30_000, MaskMode::Hull);
    let point_eval = held_out(12, 30_000, MaskMode::Points);
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let mut scores = Vec::new();
        for mode in [MaskMode::Hull, MaskMode::Points] {
            let ecfg = ExampleConfig {
                mask_mode: mode,
                ..ExampleConfig::default()
            };
            let data =
                synthetic_training_set(96, &SceneSpec::with_seed(seed * 1000), &ecfg).map_err(|e| e.to_string())?;
            let (trainer, _) = train(&TrainConfig { seed, ..tc.clone() }, &data);
            let generator = Generator::new(trainer.sampling_model(), trainer.schedule.clone(), proj);
            let score = |eval: &[TrainExample]| -> Result<(f64, f64), String> {
                let edited: Vec<RangeImage> = eval
                    .iter()
                    .enumerate()
                    .map(|(k, ex)| {
                        generator
                            .inpaint(&ex.x, &ex.mask, seed + k as u64)
                            .map_err(|e| e.to_string())
                    })
                    .collect::<Result<_, _>>()?;
                let pairs: Vec<EvalPair> = eval
                    .iter()
                    .zip(&edited)
                    .map(|(ex, g)| EvalPair {
                        reference: &ex.x,
                        generated: g,
                        mask: &ex.mask,
                    })
                    .collect();
                let r = evaluate(&pairs, &proj, 50).map_err(|e| e.to_string())?;
                Ok((r.jsd, r.cd))
            };
            let own = if mode == MaskMode::Hull {
                &hull_eval
            } else {
                &point_eval
            };
            scores.push((score(&hull_eval)?, score(own)?));
        }
        let ((hull, hull_own), (points, points_own)) = (scores[0], scores[1]);
        let win = hull.0 <= points.0 && hull.1 <= points.1;
        wins += win as usize;
        lines.push(format!(
            "seed {seed}: hull jsd {:.4} cd {:.4} / points jsd {:.4} cd {:.4}{} (own masks: {:.4}/{:.4} vs {:.4}/{:.4})",
            hull.0,
            hull.1,
            points.0,
            points.1,
            if win { "" } else { " [points better]" },
            hull_own.0,
            hull_own.1,
            points_own.0,
            points_own.1
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    ensure(
        wins >= 2,
        format!("hull no worse on JSD and CD in {wins} of 3 seeds {SEEDS:?}"),
    )
}

// ---------------------------------------------------------------------------
// metrics

fn oracle_chamfer(a: &[Point], b: &[Point]) -> f64 {
    let one_way = |from: &[Point], to: &[Point]| {
        let mut s = 0.0;
        for p in from {
            let mut best = f64::MAX;
            for q in to {
                let d = (p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2);
                if d < best {
                    best = d;
                }
            }
            s += best;
        }
        s / from.len() as f64
    };
    one_way(a, b) + one_way(b, a)
}

fn oracle_jsd(a: &[Point], b: &[Point], bins: usize) -> f64 {
    let hist = |pts: &[Point]| {
        let mut counts = vec![0usize; bins * bins];
        for p in pts {
            let cell = |v: f64| (((v + 1.0) * 0.5 * bins as f64) as usize).min(bins - 1);
            counts[cell(p.y) * bins + cell(p.x)] += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / pts.len() as f64)
            .collect::<Vec<_>>()
    };
    let (p, q) = (hist(a), hist(b));
    let mut total = 0.0;
    for i in 0..p.len() {
        let m = (p[i] + q[i]) / 2.0;
        if p[i] > 0.0 {
            total += p[i] / 2.0 * (p[i] / m).ln();
        }
        if q[i] > 0.0 {
            total += q[i] / 2.0 * (q[i] / m).ln();
        }
    }
    total
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cloud = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(1..=50);
        let pts = (0..n)
            .map(|_| {
                Point::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-2.0..2.0),
                    0.0,
                )
            })
            .collect();
        normalize_unit_sphere(&PointCloud::new(pts)).unwrap()
    };
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let refs: Vec<PointCloud> = (0..3).map(|_| cloud(&mut rng)).collect();
        let gens: Vec<PointCloud> = (0..4).map(|_| cloud(&mut rng)).collect();
        let (a, b) = (&refs[0], &gens[0]);
        let cd = chamfer(a, b).map_err(|e| e.to_string())?;
        worst = worst.max((cd - oracle_chamfer(&a.points, &b.points)).abs());
        let j = jsd(&bev_histogram(a, 50).unwrap(), &bev_histogram(b, 50).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max((j - oracle_jsd(&a.points, &b.points, 50)).abs());
        let m = mmd(&refs, &gens).map_err(|e| e.to_string())?;
        let want = refs
            .iter()
            .map(|r| {
                gens.iter()
                    .map(|g| oracle_chamfer(&r.points, &g.points))
                    .fold(f64::MAX, f64::min)
            })
            .sum::<f64>()
            / refs.len() as f64;
        worst = worst.max((m - want).abs());
    }
    let hand = jsd_probs(&[1.0, 0.0], &[0.5, 0.5]).map_err(|e| e.to_string())?;
    ensure(
        worst <= 1e-9 && (hand - 0.215761).abs() <= 1e-6,
        format!("40 instance sets, worst deviation {worst:.1e}; jsd((1,0),(0.5,0.5)) = {hand:.6}"),
    )
}

// ---------------------------------------------------------------------------
// locality and formats

fn points_by_pixel(img: &RangeImage, cfg: &ProjectionConfig) -> BTreeMap<(usize, usize), Vec<u8>> {
    let cloud = invert(img, cfg).unwrap();
    let assignment = project(&cloud, cfg).assignment;
    cloud
        .points
        .iter()
        .zip(assignment)
        .map(|(p, px)| {
            let Pixel { row, col } = px.expect("inverted points stay in view");
            ((row, col), velodyne_bytes(&PointCloud::new(vec![*p])))
        })
        .collect()
}

fn edit_locality(desk: Option<&DeskRun>) -> Check {
    let cfg = ProjectionConfig::default();
    let fallback;
    let generator = match desk {
        Some(d) => &d.generator,
        None => {
            let tc = desk_config();
            let model = Denoiser::new(
                DenoiserConfig {
                    width: 8,
                    time_dim: 8,
                    ..tc.denoiser_config()
                },
                3,
            )
            .unwrap();
            fallback = Generator::new(model, tc.schedule().unwrap(), cfg);
            &fallback
        }
    };
    let mut changed_total = 0;
    for (job, seed) in [(0u64, 5u64), (1, 77), (2, 1234)] {
        let scan = synthetic_scene(&SceneSpec::with_seed(40_000 + job)).map_err(|e| e.to_string())?;
        let before = project(&scan.cloud, &cfg).image;
        let boxes: Vec<_> = scan.boxes.as_ref().unwrap()[..2].iter().map(|(b, _)| *b).collect();
        let out = generator.generate(&before, &boxes, seed).map_err(|e| e.to_string())?;
        let union = out.union_mask();
        let expected = generator
            .box_mask(&boxes[0])
            .unwrap()
            .union(&generator.box_mask(&boxes[1]).unwrap())
            .unwrap();
        if union != expected {
            return Err(format!("job {job}: union differs from the rasterized hull masks"));
        }
        let a = points_by_pixel(&before, &cfg);
        let b = points_by_pixel(&out.image, &cfg);
        let pixels: BTreeSet<_> = a.keys().chain(b.keys()).copied().collect();
        for (r, c) in pixels {
            let same = a.get(&(r, c)) == b.get(&(r, c));
            if !union.get(r, c) && !same {
                return Err(format!(
                    "job {job}: point at pixel ({r}, {c}) changed outside the masks"
                ));
            }
            changed_total += (!same) as usize;
        }
    }
    ensure(
        changed_total > 0,
        format!(
            "3 seeded 2-box jobs, {changed_total} points changed, all inside the mask union; outside byte-identical"
        ),
    )
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).expect("fixture")
}

fn format_goldens() -> Check {
    let bytes = fixture("tensor_2x3x2.rvimg");
    let t = Tensor::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let want = [
        0.0f32, 1.5, -2.25, 3.125, 80.0, 0.5, 0.001, -0.0, 7.75, 0.25, 12.0, 0.875,
    ];
    if t.dims() != (2, 3, 2) || t.data().iter().zip(&want).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(format!("tensor fixture decoded as {:?} {:?}", t.dims(), t.data()));
    }
    if t.to_bytes() != bytes {
        return Err("tensor fixture does not re-encode byte for byte".into());
    }

    let bytes = fixture("scan.bin");
    let scan = parse_velodyne(&bytes).map_err(|e| e.to_string())?;
    let want = [
        (1.0, 2.0, -1.5, 0.25),
        (-10.5, 0.125, 0.0, 1.0),
        (33.0, -4.0, -1.75, 0.0),
    ];
    let got: Vec<_> = scan.cloud.points.iter().map(|p| (p.x, p.y, p.z, p.intensity)).collect();
    if got != want {
        return Err(format!("scan fixture decoded as {got:?}"));
    }
    if velodyne_bytes(&scan.cloud) != bytes {
        return Err("scan fixture does not re-encode byte for byte".into());
    }

    let bytes = fixture("scan.label");
    let labels = parse_labels(&bytes, 3).map_err(|e| e.to_string())?;
    if labels != [26, 7, 11] {
        return Err(format!("label fixture decoded as {labels:?}"));
    }
    let raw: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if raw != [26 | 5 << 16, 7, 11 | 1 << 16] || label_bytes(&raw) != bytes {
        return Err("label fixture does not round-trip".into());
    }
    Ok("tensor, velodyne and label fixtures decode to the listed values and re-encode byte for byte".into())
}

fn main() -> ExitCode {
    let only: Option<Vec<String>> = std::env::var("RANGEFORGE_ACCEPT")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let wanted = |name: &str| only.as_ref().is_none_or(|o| o.iter().any(|n| n == name));
    let mut desk = None;
    let mut failed = 0;
    let mut report = |name: &str, check: &mut dyn FnMut() -> Check| {
        if !wanted(name) {
            return;
        }
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    };
    report("projection_round_trip", &mut round_trip);
    report("convex_hull_oracle", &mut hull_oracle);
    report("loss_identities", &mut loss_identities);
    report("gradient_check", &mut gradient_check);
    report("forward_process_variance", &mut forward_variance);
    report("desk_training", &mut || desk_training(&mut desk));
    report("hull_ablation", &mut ablation);
    report("metric_oracles", &mut metric_oracles);
    report("edit_locality", &mut || edit_locality(desk.as_ref()));
    report("format_goldens", &mut format_goldens);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
