//! Monotone-chain convex hull over integer pixel centers.

use crate::error::{Error, Result};

/// Pixel-center coordinate. Signed and unbounded so hulls can live in
/// column-unwrapped space past the image width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPoint {
    pub row: i64,
    pub col: i64,
}

impl GridPoint {
    pub const fn new(row: i64, col: i64) -> Self {
        GridPoint { row, col }
    }
}

/// Twice the signed area of `(o, a, b)`; positive for a counter-clockwise
/// turn with rows as the first axis and columns as the second.
#[inline]
pub fn cross(o: GridPoint, a: GridPoint, b: GridPoint) -> i64 {
    (a.row - o.row) * (b.col - o.col) - (a.col - o.col) * (b.row - o.row)
}

/// Convex polygon, counter-clockwise, no three consecutive vertices collinear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelPolygon {
    vertices: Vec<GridPoint>,
}

impl PixelPolygon {
    pub fn vertices(&self) -> &[GridPoint] {
        &self.vertices
    }

    /// All consecutive-edge cross products are strictly positive.
    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        n >= 3 && (0..n).all(|i| cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Hull {
    Polygon(PixelPolygon),
    /// Every input pixel is the same point.
    Point(GridPoint),
    /// All input pixels are collinear; endpoints of their span.
    Segment(GridPoint, GridPoint),
}

impl Hull {
    pub fn vertices(&self) -> Vec<GridPoint> {
        match self {
            Hull::Polygon(p) => p.vertices.clone(),
            Hull::Point(a) => vec![*a],
            Hull::Segment(a, b) => vec![*a, *b],
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !matches!(self, Hull::Polygon(_))
    }
}

/// Hull of a pixel set. Duplicates are ignored; collinear boundary pixels are
/// not reported as vertices.
pub fn convex_hull(pixels: &[GridPoint]) -> Result<Hull> {
    if pixels.is_empty() {
        return Err(Error::Empty("convex hull of an empty pixel set"));
    }
    let mut pts = pixels.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() == 1 {
        return Ok(Hull::Point(pts[0]));
    }

    let mut hull: Vec<GridPoint> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    if hull.len() < 3 {
        return Ok(Hull::Segment(pts[0], pts[pts.len() - 1]));
    }
    Ok(Hull::Polygon(PixelPolygon { vertices: hull }))
}
