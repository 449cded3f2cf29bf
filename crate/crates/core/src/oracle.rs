//! Brute-force reference implementations shared by the unit and acceptance
//! suites. These deliberately avoid the accelerated code paths they are used
//! to check: no spatial index, no Hungarian reduction.

use crate::geom::{point_to_polyline_distance, Gdb, GeoConfig};
use crate::kgraph::{classify_grid_relation, RelationType, Triple};

/// All-pairs knowledge-graph construction: every polygon against every
/// entity, every segment against every polygon and segment. Returns the
/// sorted, deduplicated triple set.
pub fn kg_triples_brute_force(g: &Gdb, cfg: &GeoConfig) -> Vec<Triple> {
    let mut centers = Vec::new();
    for e in &g.entities {
        centers.push((e.id.clone(), e.center));
    }
    for s in &g.segments {
        centers.push((s.id.clone(), s.midpoint()));
    }

    let mut triples = Vec::new();
    for e in &g.entities {
        for (uid, ucenter) in &centers {
            if *uid == e.id {
                continue;
            }
            if let Some(rel) = classify_grid_relation(e.center, *ucenter, cfg.mu) {
                triples.push(Triple { head: e.id.clone(), rel, tail: uid.clone() });
            }
        }
    }
    for s in &g.segments {
        for e in &g.entities {
            if point_to_polyline_distance(e.center, &s.points) <= cfg.lambda_buf / 2.0 {
                triples.push(Triple { head: s.id.clone(), rel: RelationType::Inside, tail: e.id.clone() });
            }
        }
        for other in &g.segments {
            if other.id == s.id {
                continue;
            }
            let ea = [s.start(), s.end()];
            let eb = [other.start(), other.end()];
            if ea.iter().any(|p| eb.iter().any(|q| p.dist(q) <= cfg.delta)) {
                triples.push(Triple {
                    head: s.id.clone(),
                    rel: RelationType::Connected,
                    tail: other.id.clone(),
                });
            }
        }
    }
    triples.sort();
    triples.dedup();
    triples
}

/// Maximum-total-similarity 1:1 assignment by enumerating all permutations.
/// Only sensible for matrices up to about 8x8. `sim[i][j]` is the similarity
/// of left item `i` with right item `j`; unmatched items contribute zero.
/// Returns (best total, matched pairs).
pub fn max_assignment_brute_force(sim: &[Vec<f64>]) -> (f64, Vec<(usize, usize)>) {
    let n_left = sim.len();
    let n_right = if n_left == 0 { 0 } else { sim[0].len() };
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut used = vec![false; n_right];
    let mut current: Vec<(usize, usize)> = Vec::new();

    fn recurse(
        i: usize,
        n_left: usize,
        n_right: usize,
        sim: &[Vec<f64>],
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        total: f64,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        if i == n_left {
            if total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        // Leave left item i unmatched.
        recurse(i + 1, n_left, n_right, sim, used, current, total, best);
        for j in 0..n_right {
            if !used[j] {
                used[j] = true;
                current.push((i, j));
                recurse(i + 1, n_left, n_right, sim, used, current, total + sim[i][j], best);
                current.pop();
                used[j] = false;
            }
        }
    }

    recurse(0, n_left, n_right, sim, &mut used, &mut current, 0.0, &mut best);
    best.1.sort_unstable();
    best
}
