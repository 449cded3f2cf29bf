//! Polygon area, centroid, triangulation, and exact clipping.
//!
//! Intersection areas are computed by ear-clipping both simple polygons into
//! triangles and summing convex triangle/triangle clips, which is exact up to
//! floating point and needs no general polygon-boolean machinery.

use super::Point;

const EPS: f64 = 1e-12;

/// Signed area of an open ring (positive when counter-clockwise).
fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// Absolute area of an open ring.
pub fn polygon_area(ring: &[Point]) -> f64 {
    signed_area(ring).abs()
}

/// Area centroid of an open ring.
pub fn ring_centroid(ring: &[Point]) -> Point {
    let a = signed_area(ring);
    if a.abs() < EPS {
        // Degenerate rings are rejected upstream; fall back to the vertex mean.
        let n = ring.len() as f64;
        let sx: f64 = ring.iter().map(|p| p.x).sum();
        let sy: f64 = ring.iter().map(|p| p.y).sum();
        return Point::new(sx / n, sy / n);
    }
    let n = ring.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    Point::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Cross product of (b - a) x (c - a); sign gives the turn direction.
fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Strips a closing duplicate and consecutive duplicates, checks finiteness,
/// and orients the ring counter-clockwise. Returns the open ring.
pub(super) fn normalize_open_ring(ring: &[Point]) -> std::result::Result<Vec<Point>, String> {
    let mut pts: Vec<Point> = Vec::with_capacity(ring.len());
    for p in ring {
        if !p.is_finite() {
            return Err("non-finite coordinate".into());
        }
        if pts.last() != Some(p) {
            pts.push(*p);
        }
    }
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() < 3 {
        return Err(format!("ring has {} distinct vertices, need at least 3", pts.len()));
    }
    if signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    Ok(pts)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) - EPS
        && p.x <= a.x.max(b.x) + EPS
        && p.y >= a.y.min(b.y) - EPS
        && p.y <= a.y.max(b.y) + EPS
}

/// True when segments ab and cd intersect (including endpoint touching).
fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS))
        && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS))
    {
        return true;
    }
    (d1.abs() <= EPS && on_segment(c, d, a))
        || (d2.abs() <= EPS && on_segment(c, d, b))
        || (d3.abs() <= EPS && on_segment(a, b, c))
        || (d4.abs() <= EPS && on_segment(a, b, d))
}

/// Validates that an open ring is a simple polygon with positive area.
/// Non-adjacent edges must not intersect at all; adjacent edges may only
/// share their common endpoint.
pub fn validate_ring(ring: &[Point]) -> std::result::Result<(), String> {
    if polygon_area(ring) < EPS {
        return Err("zero-area ring".into());
    }
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared endpoint is fine; collinear overlap beyond it is not.
                let shared = if j == i + 1 { b } else { a };
                let (other1, other2) = if j == i + 1 { (a, d) } else { (b, c) };
                if cross(shared, other1, other2).abs() <= EPS
                    && (other1.x - shared.x) * (other2.x - shared.x)
                        + (other1.y - shared.y) * (other2.y - shared.y)
                        > EPS
                {
                    return Err("adjacent edges fold back on each other".into());
                }
            } else if segments_intersect(a, b, c, d) {
                return Err("self-intersecting ring".into());
            }
        }
    }
    Ok(())
}

/// Ear-clipping triangulation of a simple CCW open ring.
/// Returns triangles as vertex triples.
pub(crate) fn triangulate(ring: &[Point]) -> Vec<[Point; 3]> {
    let mut pts: Vec<Point> = ring.to_vec();
    if signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    let mut tris = Vec::with_capacity(pts.len().saturating_sub(2));
    'outer: while pts.len() > 3 {
        let n = pts.len();
        for i in 0..n {
            let prev = pts[(i + n - 1) % n];
            let cur = pts[i];
            let next = pts[(i + 1) % n];
            let turn = cross(prev, cur, next);
            if turn < -EPS {
                continue; // reflex vertex
            }
            if turn <= EPS {
                // Collinear: the triangle is empty, drop the vertex.
                pts.remove(i);
                continue 'outer;
            }
            let mut is_ear = true;
            for (j, p) in pts.iter().enumerate() {
                if j == (i + n - 1) % n || j == i || j == (i + 1) % n {
                    continue;
                }
                if point_in_triangle(*p, prev, cur, next) {
                    is_ear = false;
                    break;
                }
            }
            if is_ear {
                tris.push([prev, cur, next]);
                pts.remove(i);
                continue 'outer;
            }
        }
        // No ear found: numerically degenerate leftover; drop the vertex with
        // the flattest turn so progress is guaranteed.
        let n = pts.len();
        let flattest = (0..n)
            .min_by(|&a, &b| {
                let ta = cross(pts[(a + n - 1) % n], pts[a], pts[(a + 1) % n]).abs();
                let tb = cross(pts[(b + n - 1) % n], pts[b], pts[(b + 1) % n]).abs();
                ta.partial_cmp(&tb).unwrap()
            })
            .unwrap();
        pts.remove(flattest);
    }
    if pts.len() == 3 && cross(pts[0], pts[1], pts[2]).abs() > EPS {
        tris.push([pts[0], pts[1], pts[2]]);
    }
    tris
}

fn point_in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    d1 >= -EPS && d2 >= -EPS && d3 >= -EPS
}

/// Area of the intersection of a convex subject polygon with a convex CCW
/// clip triangle, via Sutherland-Hodgman.
fn clip_convex_area(subject: &[Point], clip: &[Point; 3]) -> f64 {
    let mut poly: Vec<Point> = subject.to_vec();
    for i in 0..3 {
        if poly.is_empty() {
            return 0.0;
        }
        let a = clip[i];
        let b = clip[(i + 1) % 3];
        let mut out: Vec<Point> = Vec::with_capacity(poly.len() + 2);
        for k in 0..poly.len() {
            let cur = poly[k];
            let next = poly[(k + 1) % poly.len()];
            let cur_in = cross(a, b, cur) >= -EPS;
            let next_in = cross(a, b, next) >= -EPS;
            if cur_in {
                out.push(cur);
            }
            if cur_in != next_in {
                // Edge crosses the clip line: add the intersection point.
                let dc = cross(a, b, cur);
                let dn = cross(a, b, next);
                let t = dc / (dc - dn);
                out.push(Point::new(cur.x + t * (next.x - cur.x), cur.y + t * (next.y - cur.y)));
            }
        }
        poly = out;
    }
    if poly.len() < 3 {
        0.0
    } else {
        polygon_area(&poly)
    }
}

/// Exact area of the intersection of two simple polygons (open rings).
pub fn intersection_area(a: &[Point], b: &[Point]) -> f64 {
    let tris_a = triangulate(a);
    let tris_b = triangulate(b);
    let mut total = 0.0;
    for ta in &tris_a {
        for tb in &tris_b {
            let mut ccw_b = *tb;
            if cross(ccw_b[0], ccw_b[1], ccw_b[2]) < 0.0 {
                ccw_b.swap(0, 2);
            }
            total += clip_convex_area(ta, &ccw_b);
        }
    }
    total
}

/// Jaccard similarity of two simple polygons: area(a n b) / area(a u b).
/// Errors when either input has zero area.
pub fn jaccard_area(a: &[Point], b: &[Point]) -> crate::error::Result<f64> {
    let area_a = polygon_area(a);
    let area_b = polygon_area(b);
    if area_a < EPS || area_b < EPS {
        return Err(crate::error::Error::Geometry("jaccard of zero-area shape".into()));
    }
    let inter = intersection_area(a, b);
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, side: f64) -> Vec<Point> {
        vec![
            Point::new(x, y),
            Point::new(x + side, y),
            Point::new(x + side, y + side),
            Point::new(x, y + side),
        ]
    }

    #[test]
    fn identical_squares_jaccard_one() {
        let a = square(0.0, 0.0, 1.0);
        assert!((jaccard_area(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_squares_jaccard_zero() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(5.0, 5.0, 1.0);
        assert_eq!(jaccard_area(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn offset_squares_jaccard_third() {
        // Unit squares offset by 0.5 in x: intersection 0.5, union 1.5.
        let a = square(0.0, 0.0, 1.0);
        let b = square(0.5, 0.0, 1.0);
        assert!((jaccard_area(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_area_input_is_error() {
        let line = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        let b = square(0.0, 0.0, 1.0);
        assert!(jaccard_area(&line, &b).is_err());
    }

    #[test]
    fn jaccard_symmetric_and_monotone_on_nested_shapes() {
        let outer = square(0.0, 0.0, 4.0);
        // Shrinking inner squares shrink the intersection, so Jaccard decays.
        let mut last = 1.0;
        for side in [4.0, 3.0, 2.0, 1.0] {
            let inner = square(0.0, 0.0, side);
            let j = jaccard_area(&outer, &inner).unwrap();
            let j_swapped = jaccard_area(&inner, &outer).unwrap();
            assert!((j - j_swapped).abs() < 1e-12);
            assert!(j <= last + 1e-12);
            last = j;
        }
    }

    #[test]
    fn concave_polygon_intersection() {
        // L-shape covering 3 of the 4 unit cells of a 2x2 square.
        let ell = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        let sq = square(0.0, 0.0, 2.0);
        assert!((polygon_area(&ell) - 3.0).abs() < 1e-12);
        assert!((intersection_area(&ell, &sq) - 3.0).abs() < 1e-9);
        assert!((jaccard_area(&ell, &sq).unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn triangulation_preserves_area() {
        let ell = vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 3.0),
            Point::new(0.0, 3.0),
        ];
        let total: f64 = triangulate(&ell)
            .iter()
            .map(|t| cross(t[0], t[1], t[2]).abs() / 2.0)
            .sum();
        assert!((total - polygon_area(&ell)).abs() < 1e-9);
    }

    #[test]
    fn centroid_of_square() {
        let c = ring_centroid(&square(2.0, 4.0, 2.0));
        assert!((c.x - 3.0).abs() < 1e-12);
        assert!((c.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn clockwise_input_is_normalized() {
        let mut ring = square(0.0, 0.0, 1.0);
        ring.reverse();
        let open = normalize_open_ring(&ring).unwrap();
        assert!(signed_area(&open) > 0.0);
    }
}
