//! Azimuth wraparound for pixel sets that straddle the column seam.

use crate::image::Pixel;

use super::hull::GridPoint;

/// Pixel set in hull space. When `shifted`, columns left of the widest gap
/// were moved right by the image width so the set is contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unwrapped {
    pub points: Vec<GridPoint>,
    pub shifted: bool,
}

/// Unwraps a pixel set whose column extent exceeds `width / 2` when that
/// makes it contiguous: the widest gap between occupied columns becomes the
/// cut instead of the image seam. Sets already contiguous across the seam
/// stay as they are, including full rings.
pub fn seam_unwrap(pixels: &[Pixel], width: usize) -> Unwrapped {
    let points: Vec<GridPoint> = pixels
        .iter()
        .map(|p| GridPoint::new(p.row as i64, p.col as i64))
        .collect();
    let mut cols: Vec<i64> = points.iter().map(|p| p.col).collect();
    cols.sort_unstable();
    cols.dedup();
    let (Some(&lo), Some(&hi)) = (cols.first(), cols.last()) else {
        return Unwrapped { points, shifted: false };
    };
    let w = width as i64;
    if 2 * (hi - lo) <= w {
        return Unwrapped { points, shifted: false };
    }
    let wrap_gap = lo + w - hi;
    let (gap, cut) = cols
        .windows(2)
        .map(|p| (p[1] - p[0], p[0]))
        .max_by_key(|&(g, c)| (g, -c))
        .unwrap_or((0, lo));
    if wrap_gap >= gap {
        return Unwrapped { points, shifted: false };
    }
    let points = points
        .into_iter()
        .map(|p| {
            if p.col <= cut {
                GridPoint::new(p.row, p.col + w)
            } else {
                p
            }
        })
        .collect();
    Unwrapped { points, shifted: true }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols_of(u: &Unwrapped) -> Vec<i64> {
        let mut c: Vec<i64> = u.points.iter().map(|p| p.col).collect();
        c.sort_unstable();
        c
    }

    #[test]
    fn straddling_set_unwraps() {
        let px: Vec<Pixel> = (1020..1024).chain(0..5).map(|c| Pixel::new(3, c)).collect();
        let u = seam_unwrap(&px, 1024);
        assert!(u.shifted);
        assert_eq!(cols_of(&u), (1020..=1028).collect::<Vec<_>>());
    }

    #[test]
    fn compact_set_unchanged() {
        let px: Vec<Pixel> = (500..=520).map(|c| Pixel::new(3, c)).collect();
        let u = seam_unwrap(&px, 1024);
        assert!(!u.shifted);
        assert_eq!(cols_of(&u), (500..=520).collect::<Vec<_>>());
    }

    #[test]
    fn full_ring_unchanged() {
        let px: Vec<Pixel> = (0..1024).map(|c| Pixel::new(0, c)).collect();
        let u = seam_unwrap(&px, 1024);
        assert!(!u.shifted);
        assert_eq!(cols_of(&u).last(), Some(&1023));
    }
}
