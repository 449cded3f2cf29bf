//! Segment buffers: the corridor of all points within half the buffer width
//! of a polyline.
//!
//! Membership is tested exactly against the distance definition. The
//! polygonal realization (needed for area similarity between two segments)
//! approximates the end caps and joins with short arcs.

use super::{Point, Segment};

/// Distance from `p` to the segment ab.
fn point_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let len2 = abx * abx + aby * aby;
    if len2 == 0.0 {
        return p.dist(&a);
    }
    let t = (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0);
    p.dist(&Point::new(a.x + t * abx, a.y + t * aby))
}

/// Distance from `p` to a polyline.
pub fn point_to_polyline_distance(p: Point, polyline: &[Point]) -> f64 {
    if polyline.len() == 1 {
        return p.dist(&polyline[0]);
    }
    polyline
        .windows(2)
        .map(|w| point_to_segment(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// True when `p` lies within `lambda_buf / 2` of the segment's polyline.
pub fn point_in_buffer(segment: &Segment, lambda_buf: f64, p: Point) -> bool {
    point_to_polyline_distance(p, &segment.points) <= lambda_buf / 2.0
}

/// Number of arc points used per semicircular cap/join of the buffer outline.
const ARC_STEPS: usize = 16;

/// Polygonal outline (open ring) of the buffer around a polyline: one offset
/// side out, an arc cap, the other side back, and a closing arc cap. Joins at
/// interior vertices are rounded on the outer side.
///
/// The outline is a faithful simple polygon as long as the corridor does not
/// self-overlap, which holds for the gently bending split segments this
/// pipeline produces (sharp bends become terminal points upstream).
pub fn buffer_polygon(polyline: &[Point], lambda_buf: f64) -> Vec<Point> {
    let r = lambda_buf / 2.0;
    assert!(polyline.len() >= 2, "buffer of a single point");
    let mut left: Vec<Point> = Vec::new();
    let mut right: Vec<Point> = Vec::new();

    let normals: Vec<(f64, f64)> = polyline
        .windows(2)
        .map(|w| {
            let dx = w[1].x - w[0].x;
            let dy = w[1].y - w[0].y;
            let len = dx.hypot(dy);
            (-dy / len, dx / len)
        })
        .collect();

    for (i, w) in polyline.windows(2).enumerate() {
        let (nx, ny) = normals[i];
        left.push(Point::new(w[0].x + r * nx, w[0].y + r * ny));
        left.push(Point::new(w[1].x + r * nx, w[1].y + r * ny));
        right.push(Point::new(w[0].x - r * nx, w[0].y - r * ny));
        right.push(Point::new(w[1].x - r * nx, w[1].y - r * ny));
        if i + 1 < normals.len() {
            // Round the join at the shared vertex on both sides.
            let v = w[1];
            let (nx2, ny2) = normals[i + 1];
            left.extend(arc(v, r, (nx, ny), (nx2, ny2)));
            right.extend(arc(v, r, (-nx, -ny), (-nx2, -ny2)));
        }
    }

    let mut ring = Vec::with_capacity(left.len() + right.len() + 2 * ARC_STEPS);
    ring.extend(left.iter().copied());
    // Cap at the far end: sweep from the left offset to the right offset
    // through the forward tangent so the cap bulges outward.
    let last = *polyline.last().unwrap();
    let prev = polyline[polyline.len() - 2];
    let tangent_end = unit(last.x - prev.x, last.y - prev.y);
    let (nx, ny) = *normals.last().unwrap();
    ring.extend(arc_via(last, r, (nx, ny), tangent_end, (-nx, -ny)));
    ring.extend(right.iter().rev().copied());
    // Cap at the start, bulging backward.
    let first = polyline[0];
    let second = polyline[1];
    let tangent_start = unit(first.x - second.x, first.y - second.y);
    let (nx0, ny0) = normals[0];
    ring.extend(arc_via(first, r, (-nx0, -ny0), tangent_start, (nx0, ny0)));

    // Drop near-duplicate consecutive points introduced by straight joins.
    let mut out: Vec<Point> = Vec::with_capacity(ring.len());
    for p in ring {
        if out.last().map_or(true, |q: &Point| q.dist(&p) > 1e-9 * (1.0 + r)) {
            out.push(p);
        }
    }
    if out.len() > 1 && out[0].dist(out.last().unwrap()) <= 1e-9 * (1.0 + r) {
        out.pop();
    }
    out
}

fn unit(dx: f64, dy: f64) -> (f64, f64) {
    let len = dx.hypot(dy);
    (dx / len, dy / len)
}

/// Half-circle cap: two short-way arcs through the `via` direction, which
/// disambiguates the sweep for the 180-degree turn.
fn arc_via(
    center: Point,
    r: f64,
    from: (f64, f64),
    via: (f64, f64),
    to: (f64, f64),
) -> Vec<Point> {
    let mut pts = arc(center, r, from, via);
    pts.push(Point::new(center.x + r * via.0, center.y + r * via.1));
    pts.extend(arc(center, r, via, to));
    pts
}

/// Arc points (exclusive of the endpoints' own offsets) sweeping from
/// direction `from` to direction `to` around `center`, the short way.
fn arc(center: Point, r: f64, from: (f64, f64), to: (f64, f64)) -> Vec<Point> {
    let a0 = from.1.atan2(from.0);
    let mut a1 = to.1.atan2(to.0);
    let mut sweep = a1 - a0;
    while sweep > std::f64::consts::PI {
        sweep -= 2.0 * std::f64::consts::PI;
        a1 = a0 + sweep;
    }
    while sweep < -std::f64::consts::PI {
        sweep += 2.0 * std::f64::consts::PI;
        a1 = a0 + sweep;
    }
    let _ = a1;
    let mut pts = Vec::with_capacity(ARC_STEPS);
    for k in 1..ARC_STEPS {
        let t = k as f64 / ARC_STEPS as f64;
        let a = a0 + t * sweep;
        pts.push(Point::new(center.x + r * a.cos(), center.y + r * a.sin()));
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::poly::polygon_area;

    fn seg(points: Vec<Point>) -> Segment {
        Segment::new("s", "w", points).unwrap()
    }

    #[test]
    fn horizontal_corridor_membership() {
        let s = seg(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)]);
        assert!(point_in_buffer(&s, 2.0, Point::new(5.0, 0.9)));
        assert!(!point_in_buffer(&s, 2.0, Point::new(5.0, 1.1)));
    }

    #[test]
    fn endpoint_cap_is_distance_to_endpoint() {
        let s = seg(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)]);
        // Diagonally off the end: contained iff within lambda/2 of the endpoint.
        let near = Point::new(10.0 + 0.6, 0.6); // dist ~0.849 < 1
        let far = Point::new(10.0 + 0.8, 0.8); // dist ~1.131 > 1
        assert!(point_in_buffer(&s, 2.0, near));
        assert!(!point_in_buffer(&s, 2.0, far));
    }

    #[test]
    fn l_shape_corridor_follows_both_legs() {
        let s = seg(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(10.0, 10.0)]);
        assert!(point_in_buffer(&s, 2.0, Point::new(2.0, 0.5)));
        assert!(point_in_buffer(&s, 2.0, Point::new(9.5, 5.0)));
        // Near the inner corner, within lambda/2 of the bend point.
        assert!(point_in_buffer(&s, 2.0, Point::new(9.3, 0.7)));
        assert!(!point_in_buffer(&s, 2.0, Point::new(5.0, 5.0)));
    }

    /// Dense-sampling oracle: polygon area must agree with the measure of the
    /// distance-based region.
    #[test]
    fn outline_area_matches_sampled_region() {
        let pl = vec![Point::new(0.0, 0.0), Point::new(8.0, 0.0), Point::new(8.0, 6.0)];
        let lambda = 2.0;
        let ring = buffer_polygon(&pl, lambda);
        let poly_area = polygon_area(&ring);

        let (x0, x1, y0, y1) = (-2.0, 10.0, -2.0, 8.0);
        let n = 400;
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                let p = Point::new(
                    x0 + (x1 - x0) * (i as f64 + 0.5) / n as f64,
                    y0 + (y1 - y0) * (j as f64 + 0.5) / n as f64,
                );
                if point_to_polyline_distance(p, &pl) <= lambda / 2.0 {
                    hits += 1;
                }
            }
        }
        let sampled = hits as f64 / (n * n) as f64 * (x1 - x0) * (y1 - y0);
        assert!(
            (poly_area - sampled).abs() < 0.05 * sampled,
            "outline area {poly_area} vs sampled {sampled}"
        );
    }
}
