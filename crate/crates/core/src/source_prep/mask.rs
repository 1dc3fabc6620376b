//! Polygon rasterization and morphological dilation.
//!
//! A pixel belongs to the polygon when its centre is inside under the
//! even-odd rule, or lies exactly on an edge.

use super::{FaceContour, SourcePrepError};
use crate::model::FaceMask;

/// Area below which a contour counts as degenerate.
const MIN_AREA: f64 = 1e-12;

/// Fills `contour` on a `width x height` grid and dilates it by `dilation_px`.
pub fn build_mask(
    contour: &FaceContour,
    (width, height): (usize, usize),
    dilation_px: u32,
) -> Result<FaceMask, SourcePrepError> {
    if width == 0 || height == 0 {
        return Err(SourcePrepError::InvalidContour("empty frame".into()));
    }
    if !contour.within_bounds((width, height)) {
        return Err(SourcePrepError::InvalidContour(format!(
            "contour leaves the {width}x{height} frame"
        )));
    }
    if contour.area() < MIN_AREA {
        return Err(SourcePrepError::DegenerateContour);
    }
    let filled = rasterize_polygon(contour.points(), width, height);
    if !filled.iter().any(|b| *b) {
        return Err(SourcePrepError::EmptyMask);
    }
    let bits = dilate(&filled, width, height, dilation_px);
    FaceMask::new(width, height, bits, dilation_px)
        .map_err(|e| SourcePrepError::InvalidContour(e.to_string()))
}

/// Scanline fill at pixel centres with edge pixels added explicitly.
pub fn rasterize_polygon(points: &[(f64, f64)], width: usize, height: usize) -> Vec<bool> {
    let mut bits = vec![false; width * height];
    let n = points.len();
    let mut crossings = Vec::with_capacity(n);

    for row in 0..height {
        let y = row as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (x0, y0) = points[i];
            let (x1, y1) = points[(i + 1) % n];
            // Half-open rule: each vertex is counted for exactly one of its edges.
            if (y0 > y) != (y1 > y) {
                crossings.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            // Centres strictly inside the span; the boundary pass adds the rest.
            let first = (span[0] - 0.5).floor() as i64 + 1;
            let last = (span[1] - 0.5).ceil() as i64 - 1;
            for col in first.max(0)..=last.min(width as i64 - 1) {
                bits[row * width + col as usize] = true;
            }
        }
    }

    for i in 0..n {
        mark_edge_pixels(points[i], points[(i + 1) % n], width, height, &mut bits);
    }
    bits
}

/// Marks every pixel whose centre lies exactly on segment `a`-`b`.
fn mark_edge_pixels(a: (f64, f64), b: (f64, f64), width: usize, height: usize, bits: &mut [bool]) {
    let col_range = centre_range(a.0.min(b.0), a.0.max(b.0), width);
    let row_range = centre_range(a.1.min(b.1), a.1.max(b.1), height);
    for row in row_range {
        let py = row as f64 + 0.5;
        for col in col_range.clone() {
            let px = col as f64 + 0.5;
            let cross = (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0);
            if cross == 0.0 {
                bits[row * width + col] = true;
            }
        }
    }
}

/// Indices whose pixel centre falls in `[lo, hi]`.
fn centre_range(lo: f64, hi: f64, len: usize) -> std::ops::Range<usize> {
    let start = (lo - 0.5).ceil().max(0.0) as usize;
    let end = ((hi - 0.5).floor() + 1.0).clamp(0.0, len as f64) as usize;
    start.min(end)..end
}

/// Dilation with a Euclidean disk of radius `radius` pixels.
pub fn dilate(bits: &[bool], width: usize, height: usize, radius: u32) -> Vec<bool> {
    if radius == 0 {
        return bits.to_vec();
    }
    let r = radius as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let mut out = vec![false; bits.len()];
    for row in 0..height as i64 {
        for col in 0..width as i64 {
            if !bits[(row * width as i64 + col) as usize] {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (x, y) = (col + dx, row + dy);
                if x >= 0 && y >= 0 && x < width as i64 && y < height as i64 {
                    out[(y * width as i64 + x) as usize] = true;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contour(points: &[(f64, f64)]) -> FaceContour {
        FaceContour::new(points.to_vec()).unwrap()
    }

    #[test]
    fn right_triangle_matches_hand_count() {
        // Centres (c+0.5, r+0.5) with x + y <= 4: c + r <= 3, i.e. 10 cells.
        let m = build_mask(&contour(&[(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)]), (8, 8), 0).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(m.get(c, r), c + r <= 3, "cell ({c},{r})");
            }
        }
        assert_eq!(m.area(), 10);
    }

    #[test]
    fn collinear_contour_is_degenerate() {
        let err = build_mask(&contour(&[(0.0, 0.0), (2.0, 2.0), (4.0, 4.0)]), (8, 8), 0);
        assert_eq!(err, Err(SourcePrepError::DegenerateContour));
    }

    #[test]
    fn sliver_without_centres_is_empty() {
        let err = build_mask(&contour(&[(0.0, 0.0), (0.4, 0.0), (0.0, 0.4)]), (8, 8), 0);
        assert_eq!(err, Err(SourcePrepError::EmptyMask));
    }

    #[test]
    fn out_of_bounds_contour_is_rejected() {
        let err = build_mask(&contour(&[(0.0, 0.0), (9.0, 0.0), (0.0, 4.0)]), (8, 8), 0);
        assert!(matches!(err, Err(SourcePrepError::InvalidContour(_))));
    }

    #[test]
    fn dilation_grows_monotonically() {
        let c = contour(&[(10.0, 10.0), (20.0, 12.0), (15.0, 22.0)]);
        let mut prev = build_mask(&c, (32, 32), 0).unwrap();
        for d in 1..6 {
            let next = build_mask(&c, (32, 32), d).unwrap();
            assert!(prev.is_subset_of(&next));
            assert!(next.area() > prev.area());
            assert_eq!(next.dilation_px, d);
            prev = next;
        }
    }

    #[test]
    fn single_pixel_dilates_to_disk() {
        let mut bits = vec![false; 49];
        bits[3 * 7 + 3] = true;
        let out = dilate(&bits, 7, 7, 2);
        // Disk of radius 2: 13 lattice points.
        assert_eq!(out.iter().filter(|b| **b).count(), 13);
        assert!(out[3 * 7 + 1] && out[7 + 3] && !out[7 + 1]);
    }

    #[test]
    fn horizontal_edge_through_centres_is_included() {
        // The top edge y = 0.5 passes through the row-0 centres.
        let m = build_mask(
            &contour(&[(0.5, 0.5), (3.5, 0.5), (3.5, 2.5), (0.5, 2.5)]),
            (5, 4),
            0,
        )
        .unwrap();
        for c in 0..4 {
            assert!(m.get(c, 0) && m.get(c, 2));
        }
        assert!(!m.get(4, 0) && !m.get(0, 3));
    }
}
