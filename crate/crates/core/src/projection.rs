//! Spherical projection between point clouds and range images.
//!
//! Azimuth `theta = atan2(y, x)` maps to columns, decreasing left to right so
//! that `theta = 0` (straight ahead) lands in the middle column. Elevation
//! `phi = atan2(z, sqrt(x^2 + y^2))` maps to rows with uniform bins, row 0 at
//! `phi_max`. Collisions keep the nearest return.

use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{check_dims, Pixel, RangeImage};
use crate::types::{Point, PointCloud};

/// Raster geometry of the range view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub height: usize,
    pub width: usize,
    /// Lower elevation limit, radians.
    pub phi_min: f64,
    /// Upper elevation limit, radians.
    pub phi_max: f64,
    /// Returns farther than this are dropped.
    pub r_max: f64,
}

impl Default for ProjectionConfig {
    /// 64 x 1024, elevation -24.8 to +2.0 degrees, 80 m.
    fn default() -> Self {
        ProjectionConfig {
            height: 64,
            width: 1024,
            phi_min: (-24.8f64).to_radians(),
            phi_max: 2.0f64.to_radians(),
            r_max: 80.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return Err(Error::InvalidConfig(format!(
                "raster must be at least 2x2, got {}x{}",
                self.height, self.width
            )));
        }
        if !(self.phi_min < self.phi_max) || !self.phi_min.is_finite() || !self.phi_max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "need phi_min < phi_max, got {} and {}",
                self.phi_min, self.phi_max
            )));
        }
        if !(self.r_max > 0.0) || !self.r_max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "r_max must be positive, got {}",
                self.r_max
            )));
        }
        Ok(())
    }

    pub fn fov(&self) -> f64 {
        self.phi_max - self.phi_min
    }

    pub fn azimuth_step(&self) -> f64 {
        2.0 * PI / self.width as f64
    }

    pub fn elevation_step(&self) -> f64 {
        self.fov() / self.height as f64
    }

    /// Angular quantization bound `sqrt(dtheta^2 + dphi^2)`; a round-tripped
    /// return at range `r` moves by at most `r` times this.
    pub fn quantization_bound(&self) -> f64 {
        self.azimuth_step().hypot(self.elevation_step())
    }

    /// Azimuth at the center of column `col`.
    pub fn column_center(&self, col: usize) -> f64 {
        PI * (1.0 - (2 * col + 1) as f64 / self.width as f64)
    }

    /// Elevation at the center of row `row`.
    pub fn row_center(&self, row: usize) -> f64 {
        self.phi_max - (row as f64 + 0.5) * self.elevation_step()
    }
}

/// `(r, theta, phi)` with `theta` in `(-pi, pi]` and `phi` in `[-pi/2, pi/2]`.
pub fn cartesian_to_spherical(p: &Point) -> Result<(f64, f64, f64)> {
    let rho = p.x.hypot(p.y);
    let r = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
    if r == 0.0 {
        return Err(Error::OriginPoint);
    }
    let mut theta = p.y.atan2(p.x);
    if theta == -PI {
        theta = PI;
    }
    let phi = p.z.atan2(rho);
    Ok((r, theta, phi))
}

/// Pixel for a direction, or `None` when the elevation is outside the FOV.
pub fn pixel_of(theta: f64, phi: f64, cfg: &ProjectionConfig) -> Option<Pixel> {
    if !(phi >= cfg.phi_min && phi <= cfg.phi_max) || !theta.is_finite() {
        return None;
    }
    let w = cfg.width as f64;
    let col = (w * (0.5 - theta / (2.0 * PI))).floor() as i64;
    let col = col.rem_euclid(cfg.width as i64) as usize;
    let row = (cfg.height as f64 * (cfg.phi_max - phi) / cfg.fov()).floor() as i64;
    let row = row.clamp(0, cfg.height as i64 - 1) as usize;
    Some(Pixel::new(row, col))
}

/// Range image plus, for every input point, the pixel it fell into (`None`
/// when it was dropped: origin, non-finite, out of FOV or beyond `r_max`).
/// Occluded points keep their pixel.
#[derive(Debug, Clone)]
pub struct Projection {
    pub image: RangeImage,
    pub assignment: Vec<Option<Pixel>>,
}

fn candidate_order(a: &(f64, Point), b: &(f64, Point)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.x.total_cmp(&b.1.x))
        .then(a.1.y.total_cmp(&b.1.y))
        .then(a.1.z.total_cmp(&b.1.z))
        .then(a.1.intensity.total_cmp(&b.1.intensity))
}

/// Rasterizes a cloud. The winner of each pixel is the minimum of
/// `(r, x, y, z, intensity)` in total order, so the result does not depend on
/// input ordering.
pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig) -> Projection {
    let n_pix = cfg.height * cfg.width;
    let mut best: Vec<Option<(f64, Point)>> = vec![None; n_pix];
    let mut assignment = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        if !p.is_finite() {
            assignment.push(None);
            continue;
        }
        let Ok((r, theta, phi)) = cartesian_to_spherical(p) else {
            assignment.push(None);
            continue;
        };
        // compared at the stored precision so that r_max itself survives invert
        if r as f32 > cfg.r_max as f32 {
            assignment.push(None);
            continue;
        }
        let Some(px) = pixel_of(theta, phi, cfg) else {
            assignment.push(None);
            continue;
        };
        assignment.push(Some(px));
        let slot = &mut best[px.row * cfg.width + px.col];
        let cand = (r, *p);
        match slot {
            Some(cur) if candidate_order(&cand, cur) != Ordering::Less => {}
            _ => *slot = Some(cand),
        }
    }
    let mut range = vec![0.0f32; n_pix];
    let mut intensity = vec![0.0f32; n_pix];
    for (i, b) in best.iter().enumerate() {
        if let Some((r, p)) = b {
            let rf = *r as f32;
            if rf > 0.0 {
                range[i] = rf;
                intensity[i] = p.intensity.clamp(0.0, 1.0) as f32;
            }
        }
    }
    let image =
        RangeImage::from_parts(cfg.height, cfg.width, range, intensity).expect("projection produces a valid image");
    Projection { image, assignment }
}

/// Point for one pixel at its bin-center angles.
pub fn pixel_point(row: usize, col: usize, range: f64, intensity: f64, cfg: &ProjectionConfig) -> Point {
    let theta = cfg.column_center(col);
    let phi = cfg.row_center(row);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Point::new(range * cp * ct, range * cp * st, range * sp, intensity)
}

/// One point per returning pixel, row-major, at bin-center angles.
pub fn invert(img: &RangeImage, cfg: &ProjectionConfig) -> Result<PointCloud> {
    check_dims(img.dims(), (cfg.height, cfg.width))?;
    let mut points = Vec::with_capacity(img.return_count());
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let (r, i) = img.get(row, col);
            if r > 0.0 {
                points.push(pixel_point(row, col, r as f64, i as f64, cfg));
            }
        }
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn spherical_axis_cases() {
        let (r, t, p) = cartesian_to_spherical(&Point::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(close(r, 1.0) && close(t, 0.0) && close(p, 0.0));
        let (r, t, p) = cartesian_to_spherical(&Point::new(0.0, 1.0, 0.0, 0.0)).unwrap();
        assert!(close(r, 1.0) && close(t, PI / 2.0) && close(p, 0.0));
        let (r, t, p) = cartesian_to_spherical(&Point::new(1.0, 1.0, 2f64.sqrt(), 0.0)).unwrap();
        assert!(close(r, 2.0) && close(t, PI / 4.0) && close(p, PI / 4.0));
        assert!(matches!(
            cartesian_to_spherical(&Point::new(0.0, 0.0, 0.0, 0.0)),
            Err(Error::OriginPoint)
        ));
    }

    #[test]
    fn theta_range_is_half_open() {
        let (_, t, _) = cartesian_to_spherical(&Point::new(-1.0, -0.0, 0.0, 0.0)).unwrap();
        assert_eq!(t, PI);
    }

    #[test]
    fn pixel_of_boundaries() {
        let cfg = ProjectionConfig::default();
        assert_eq!(pixel_of(0.0, cfg.phi_max, &cfg), Some(Pixel::new(0, 512)));
        assert_eq!(pixel_of(0.0, cfg.phi_min + 1e-9, &cfg).unwrap().row, 63);
        assert_eq!(pixel_of(0.0, cfg.phi_min, &cfg).unwrap().row, 63);
        assert_eq!(pixel_of(0.0, cfg.phi_max + 1f64.to_radians(), &cfg), None);
        assert_eq!(pixel_of(PI, 0.0, &cfg).unwrap().col, 0);
        assert_eq!(pixel_of(-PI + 1e-12, 0.0, &cfg).unwrap().col, 1023);
    }

    #[test]
    fn bin_centers_map_back_to_their_bin() {
        let cfg = ProjectionConfig::default();
        for row in 0..cfg.height {
            for col in (0..cfg.width).step_by(7) {
                let got = pixel_of(cfg.column_center(col), cfg.row_center(row), &cfg);
                assert_eq!(got, Some(Pixel::new(row, col)));
            }
        }
    }

    #[test]
    fn nearest_return_wins() {
        let cfg = ProjectionConfig::default();
        let cloud = PointCloud::new(vec![Point::new(7.0, 0.0, 0.0, 0.9), Point::new(5.0, 0.0, 0.0, 0.2)]);
        let proj = project(&cloud, &cfg);
        assert_eq!(proj.image.return_count(), 1);
        let px = proj.assignment[0].unwrap();
        assert_eq!(proj.assignment[1], Some(px));
        assert_eq!(proj.image.get(px.row, px.col), (5.0, 0.2));
    }

    #[test]
    fn empty_cloud_gives_sentinel_image() {
        let cfg = ProjectionConfig::default();
        let proj = project(&PointCloud::default(), &cfg);
        assert_eq!(proj.image.return_count(), 0);
        assert!(invert(&proj.image, &cfg).unwrap().is_empty());
    }

    #[test]
    fn dropped_points_have_no_assignment() {
        let cfg = ProjectionConfig::default();
        let cloud = PointCloud::new(vec![
            Point::new(0.0, 0.0, 0.0, 0.5),
            Point::new(100.0, 0.0, 0.0, 0.5),
            Point::new(1.0, 0.0, 5.0, 0.5),
            Point::new(f64::NAN, 0.0, 0.0, 0.5),
        ]);
        let proj = project(&cloud, &cfg);
        assert!(proj.assignment.iter().all(Option::is_none));
    }

    #[test]
    fn single_pixel_inverts_to_bin_center() {
        let cfg = ProjectionConfig::default();
        let mut img = RangeImage::empty(64, 1024);
        img.set(0, 512, 10.0, 0.5);
        let cloud = invert(&img, &cfg).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = cloud.points[0];
        assert!((p.norm() - 10.0).abs() < 1e-12);
        let (_, t, ph) = cartesian_to_spherical(&p).unwrap();
        // col 512 spans theta in (-2pi/1024, 0]; row 0 spans the top elevation bin
        assert!((t + PI / 1024.0).abs() < 1e-12);
        assert!((ph - (cfg.phi_max - cfg.elevation_step() / 2.0)).abs() < 1e-12);
        assert_eq!(p.intensity, 0.5);
    }

    #[test]
    fn invert_rejects_dim_mismatch() {
        let cfg = ProjectionConfig::default();
        assert!(invert(&RangeImage::empty(32, 1024), &cfg).is_err());
    }

    #[test]
    fn max_range_pixels_survive_invert() {
        let cfg = ProjectionConfig::default();
        let mut img = RangeImage::empty(cfg.height, cfg.width);
        for (k, (row, col)) in [(0, 0), (13, 517), (63, 1023), (40, 300)].into_iter().enumerate() {
            img.set(row, col, cfg.r_max as f32, 0.25 * k as f32);
        }
        let back = project(&invert(&img, &cfg).unwrap(), &cfg);
        assert!(back.assignment.iter().all(Option::is_some));
        assert_eq!(back.image, img);
    }
}
