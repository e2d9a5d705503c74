//! Point, cloud and box types shared by every stage of the pipeline.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A single LiDAR return in the ego-centered frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Return intensity in `[0, 1]`.
    pub intensity: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Point { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }
}

/// An unordered set of returns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud {
            points,
            frame_id: String::new(),
        }
    }

    pub fn with_frame(points: Vec<Point>, frame_id: impl Into<String>) -> Self {
        PointCloud {
            points,
            frame_id: frame_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Object placement used to author masks: center, extents and heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    /// Extent along the heading direction.
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Heading about +z, kept in `(-pi, pi]`.
    pub yaw: f64,
}

impl OrientedBox {
    /// Validates extents and wraps `yaw` into `(-pi, pi]`.
    pub fn new(center: [f64; 3], length: f64, width: f64, height: f64, yaw: f64) -> Result<Self> {
        let b = OrientedBox {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            length,
            width,
            height,
            yaw: wrap_angle(yaw),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cx,
            self.cy,
            self.cz,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBox("non-finite field".into()));
        }
        if self.length <= 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "extents must be positive, got {}x{}x{}",
                self.length, self.width, self.height
            )));
        }
        if !(self.yaw > -PI && self.yaw <= PI) {
            return Err(Error::InvalidBox(format!("yaw {} outside (-pi, pi]", self.yaw)));
        }
        Ok(())
    }

    /// Maps a world point into the box frame (x along length, y along width).
    pub fn to_local(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        [c * dx + s * dy, -s * dx + c * dy, z - self.cz]
    }

    pub fn to_world(&self, lx: f64, ly: f64, lz: f64) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [self.cx + c * lx - s * ly, self.cy + s * lx + c * ly, self.cz + lz]
    }

    pub fn half_extents(&self) -> [f64; 3] {
        [self.length / 2.0, self.width / 2.0, self.height / 2.0]
    }

    /// True when the point lies inside the box grown by `margin` on every side.
    pub fn contains(&self, x: f64, y: f64, z: f64, margin: f64) -> bool {
        let l = self.to_local(x, y, z);
        let h = self.half_extents();
        (0..3).all(|i| l[i].abs() <= h[i] + margin)
    }

    /// The eight corners in world coordinates.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let h = self.half_extents();
        let mut out = [[0.0; 3]; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.to_world(sx * h[0], sy * h[1], sz * h[2]);
        }
        out
    }
}

/// Parses `"cx,cy,cz,l,w,h,yaw"`.
impl FromStr for OrientedBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidBox(format!("{s:?}: {e}")))?;
        if vals.len() != 7 {
            return Err(Error::InvalidBox(format!(
                "expected 7 comma-separated values, got {}",
                vals.len()
            )));
        }
        OrientedBox::new([vals[0], vals[1], vals[2]], vals[3], vals[4], vals[5], vals[6])
    }
}

impl fmt::Display for OrientedBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{}",
            self.cx, self.cy, self.cz, self.length, self.width, self.height, self.yaw
        )
    }
}
