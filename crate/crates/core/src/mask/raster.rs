//! Scanline fill of hull polygons on the pixel grid.

use crate::image::SemanticMask;

use super::hull::{GridPoint, Hull};

fn floor_div(num: i64, den: i64) -> i64 {
    num.div_euclid(den)
}

fn ceil_div(num: i64, den: i64) -> i64 {
    -(-num).div_euclid(den)
}

/// Inclusive column span of the polygon on scanline `row`, computed with
/// exact rational arithmetic.
fn row_span(vertices: &[GridPoint], row: i64) -> Option<(i64, i64)> {
    let n = vertices.len();
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if a.row == b.row {
            if a.row == row {
                lo = lo.min(a.col.min(b.col));
                hi = hi.max(a.col.max(b.col));
            }
            continue;
        }
        if row < a.row.min(b.row) || row > a.row.max(b.row) {
            continue;
        }
        let (a, b) = if a.row < b.row { (a, b) } else { (b, a) };
        let den = b.row - a.row;
        let num = a.col * den + (row - a.row) * (b.col - a.col);
        lo = lo.min(ceil_div(num, den));
        hi = hi.max(floor_div(num, den));
    }
    (lo <= hi).then_some((lo, hi))
}

/// Lattice points on a segment, endpoints included.
fn segment_lattice(a: GridPoint, b: GridPoint) -> Vec<GridPoint> {
    let dr = b.row - a.row;
    let dc = b.col - a.col;
    let g = gcd(dr.abs(), dc.abs()).max(1);
    (0..=g)
        .map(|k| GridPoint::new(a.row + dr / g * k, a.col + dc / g * k))
        .collect()
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Fills `hull` into an `height x width` mask. Pixels whose centers lie inside
/// or on the polygon are set. Degenerate hulls (a point or a segment) set the
/// covered lattice pixels dilated to 3x3. With `wrap_columns` columns are
/// taken modulo `width`; otherwise anything outside the grid is clipped.
pub(crate) fn fill(hull: &Hull, height: usize, width: usize, wrap_columns: bool) -> SemanticMask {
    let mut mask = SemanticMask::zeros(height, width);
    let (h, w) = (height as i64, width as i64);
    let mut put = |row: i64, col: i64| {
        if row < 0 || row >= h {
            return;
        }
        let col = if wrap_columns {
            col.rem_euclid(w)
        } else if col < 0 || col >= w {
            return;
        } else {
            col
        };
        mask.set(row as usize, col as usize, true);
    };
    match hull {
        Hull::Polygon(poly) => {
            let v = poly.vertices();
            let r0 = v.iter().map(|p| p.row).min().unwrap();
            let r1 = v.iter().map(|p| p.row).max().unwrap();
            for row in r0..=r1 {
                if let Some((lo, hi)) = row_span(v, row) {
                    let hi = if wrap_columns { hi.min(lo + w - 1) } else { hi };
                    for col in lo..=hi {
                        put(row, col);
                    }
                }
            }
        }
        Hull::Point(a) => dilate(&[*a], &mut put),
        Hull::Segment(a, b) => dilate(&segment_lattice(*a, *b), &mut put),
    }
    mask
}

fn dilate(points: &[GridPoint], put: &mut impl FnMut(i64, i64)) {
    for p in points {
        for dr in -1..=1 {
            for dc in -1..=1 {
                put(p.row + dr, p.col + dc);
            }
        }
    }
}

/// Rasterizes a hull whose vertices lie inside the `height x width` grid.
/// Degenerate hulls become 3x3 dilations clipped at the borders.
pub fn rasterize_hull(hull: &Hull, height: usize, width: usize) -> SemanticMask {
    fill(hull, height, width, false)
}

#[cfg(test)]
mod tests {
    use super::super::hull::convex_hull;
    use super::*;

    #[test]
    fn single_pixel_dilates_and_clips() {
        let hull = Hull::Point(GridPoint::new(0, 0));
        let m = rasterize_hull(&hull, 5, 5);
        assert_eq!(m.count(), 4);
        let m = rasterize_hull(&Hull::Point(GridPoint::new(2, 2)), 5, 5);
        assert_eq!(m.count(), 9);
    }

    #[test]
    fn segment_fills_between_endpoints() {
        let hull = convex_hull(&[GridPoint::new(2, 2), GridPoint::new(2, 6)]).unwrap();
        let m = rasterize_hull(&hull, 5, 10);
        // rows 1..=3, cols 1..=7
        assert_eq!(m.count(), 21);
    }

    #[test]
    fn right_triangle_count() {
        let hull = convex_hull(&[GridPoint::new(0, 0), GridPoint::new(0, 10), GridPoint::new(10, 0)]).unwrap();
        let m = rasterize_hull(&hull, 12, 12);
        // row r holds cols 0..=10-r
        assert_eq!(m.count(), (1..=11).sum::<usize>());
        assert!(m.get(5, 5) && !m.get(5, 6));
    }

    #[test]
    fn wrapped_fill_folds_columns() {
        let hull = convex_hull(&[
            GridPoint::new(0, 6),
            GridPoint::new(1, 6),
            GridPoint::new(0, 9),
            GridPoint::new(1, 9),
        ])
        .unwrap();
        let m = fill(&hull, 2, 8, true);
        let cols: Vec<_> = m.pixels().iter().filter(|p| p.row == 0).map(|p| p.col).collect();
        assert_eq!(cols, vec![0, 1, 6, 7]);
    }
}
