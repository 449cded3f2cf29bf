//! Symmetric Hausdorff distance between polylines.
//!
//! The directed distance sup_{p in A} dist(p, B) can peak in the interior of
//! an edge of A, so each edge is refined by branch and bound. Two certified
//! upper bounds drive the pruning: the Lipschitz peak bound (dist(., B) is
//! 1-Lipschitz along the edge), and the endpoint maximum of the distance to
//! any single feature of B, which dominates dist(., B) and is convex along
//! the edge. The second bound collapses plateaus (e.g. parallel segments)
//! immediately. Results are accurate to `TOL`.

use super::Point;

const TOL: f64 = 1e-10;

fn lerp(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
}

/// Distance from `p` to one feature (edge, or the lone point) of a polyline.
fn feature_distance(p: Point, polyline: &[Point], feature: usize) -> f64 {
    if polyline.len() == 1 {
        return p.dist(&polyline[0]);
    }
    let a = polyline[feature];
    let b = polyline[feature + 1];
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let len2 = abx * abx + aby * aby;
    if len2 == 0.0 {
        return p.dist(&a);
    }
    let t = (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0);
    p.dist(&Point::new(a.x + t * abx, a.y + t * aby))
}

/// Distance to the polyline plus the index of the nearest feature.
fn nearest_feature(p: Point, polyline: &[Point]) -> (usize, f64) {
    if polyline.len() == 1 {
        return (0, p.dist(&polyline[0]));
    }
    let mut best = (0usize, f64::INFINITY);
    for f in 0..polyline.len() - 1 {
        let d = feature_distance(p, polyline, f);
        if d < best.1 {
            best = (f, d);
        }
    }
    best
}

/// Max of dist(., other) over the edge ab, to within TOL.
fn edge_max_distance(a: Point, b: Point, other: &[Point]) -> f64 {
    let len = a.dist(&b);
    let fa = nearest_feature(a, other).1;
    let fb = nearest_feature(b, other).1;
    let mut best = fa.max(fb);
    let mut stack = vec![(0.0_f64, 1.0_f64, fa, fb)];
    while let Some((t0, t1, f0, f1)) = stack.pop() {
        let seg_len = (t1 - t0) * len;
        // Lipschitz peak bound over the subinterval.
        let lipschitz = (f0 + f1) / 2.0 + seg_len / 2.0;
        if lipschitz <= best + TOL {
            continue;
        }
        let tm = (t0 + t1) / 2.0;
        let pm = lerp(a, b, tm);
        let (feat, fm) = nearest_feature(pm, other);
        best = best.max(fm);
        // Convex bound: dist(., B) <= dist(., feat), and the latter peaks at
        // an endpoint of the subinterval.
        let convex = feature_distance(lerp(a, b, t0), other, feat)
            .max(feature_distance(lerp(a, b, t1), other, feat));
        if convex <= best + TOL {
            continue;
        }
        stack.push((t0, tm, f0, fm));
        stack.push((tm, t1, fm, f1));
    }
    best
}

fn directed(from: &[Point], to: &[Point]) -> f64 {
    if from.len() == 1 {
        return nearest_feature(from[0], to).1;
    }
    from.windows(2)
        .map(|w| edge_max_distance(w[0], w[1], to))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two non-empty point sequences.
pub fn hausdorff_distance(a: &[Point], b: &[Point]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "hausdorff of empty sequence");
    directed(a, b).max(directed(b, a))
}
