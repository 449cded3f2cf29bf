//! Knowledge-graph construction with spatial-index candidate pruning.

use super::{KnowledgeGraph, RelationType, Triple};
use crate::error::Result;
use crate::geom::{point_to_polyline_distance, Gdb, GeoConfig, Mbr, Point};
use crate::index::SpatialIndex;

/// Classifies the grid relation of a neighbor centered at `u_center` relative
/// to an entity centered at `e_center`, for a 3x3 grid of total width `mu`.
///
/// Cell boundaries sit at offsets of mu/6 and mu/2 with strict inequalities;
/// a point outside the grid or exactly on a boundary line yields `None`.
pub fn classify_grid_relation(e_center: Point, u_center: Point, mu: f64) -> Option<RelationType> {
    let dx = u_center.x - e_center.x;
    let dy = u_center.y - e_center.y;
    let near = mu / 6.0;
    let far = mu / 2.0;

    // Column: -1 = left band, 0 = center band, 1 = right band.
    let col = if near < dx && dx < far {
        1
    } else if -near < dx && dx < near {
        0
    } else if -far < dx && dx < -near {
        -1
    } else {
        return None;
    };
    let row = if near < dy && dy < far {
        1
    } else if -near < dy && dy < near {
        0
    } else if -far < dy && dy < -near {
        -1
    } else {
        return None;
    };

    Some(match (col, row) {
        (1, 1) => RelationType::TopRight,
        (1, 0) => RelationType::Right,
        (1, -1) => RelationType::BottomRight,
        (0, 1) => RelationType::Top,
        (0, 0) => RelationType::Close,
        (0, -1) => RelationType::Bottom,
        (-1, 1) => RelationType::TopLeft,
        (-1, 0) => RelationType::Left,
        (-1, -1) => RelationType::BottomLeft,
        _ => unreachable!(),
    })
}

/// Center used when an entity appears as a grid neighbor: polygon centroid or
/// segment midpoint.
fn centers(g: &Gdb) -> Vec<(String, Point)> {
    let mut out = Vec::with_capacity(g.len());
    for e in &g.entities {
        out.push((e.id.clone(), e.center));
    }
    for s in &g.segments {
        out.push((s.id.clone(), s.midpoint()));
    }
    out
}

/// Builds the knowledge graph of a Gdb.
///
/// For every polygon `e`: a triple `(e, r, u)` per entity or segment `u`
/// whose center falls in `e`'s grid, `r` from [`classify_grid_relation`].
/// For every segment `s`: `(s, Inside, u)` per polygon `u` whose centroid is
/// inside `s`'s buffer, and `(s, Connected, s0)` per segment `s0` with an
/// endpoint within `delta` of an endpoint of `s`.
pub fn build_knowledge_graph(g: &Gdb, cfg: &GeoConfig) -> Result<KnowledgeGraph> {
    cfg.validate()?;
    g.validate()?;

    let centers = centers(g);
    let center_index = SpatialIndex::build(
        centers
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (i, Mbr { x_min: p.x, x_max: p.x, y_min: p.y, y_max: p.y }))
            .collect(),
    );
    let n_polygons = g.entities.len();

    let mut triples: Vec<Triple> = Vec::new();

    // Grid relations around each polygon.
    let half = cfg.mu / 2.0;
    for e in &g.entities {
        let grid = Mbr {
            x_min: e.center.x - half,
            x_max: e.center.x + half,
            y_min: e.center.y - half,
            y_max: e.center.y + half,
        };
        for cand in center_index.query_box(&grid) {
            let (ref uid, ucenter) = centers[cand];
            if *uid == e.id {
                continue;
            }
            if let Some(rel) = classify_grid_relation(e.center, ucenter, cfg.mu) {
                triples.push(Triple { head: e.id.clone(), rel, tail: uid.clone() });
            }
        }
    }

    // Inside and Connected relations around each segment.
    let poly_centroids = SpatialIndex::build(
        g.entities
            .iter()
            .enumerate()
            .map(|(i, e)| {
                (i, Mbr { x_min: e.center.x, x_max: e.center.x, y_min: e.center.y, y_max: e.center.y })
            })
            .collect(),
    );
    let seg_index = SpatialIndex::build(
        g.segments.iter().enumerate().map(|(i, s)| (i, s.mbr())).collect(),
    );
    let half_buf = cfg.lambda_buf / 2.0;
    for s in &g.segments {
        let buffer_box = s.mbr().inflate(half_buf);
        for cand in poly_centroids.query_box(&buffer_box) {
            let poly = &g.entities[cand];
            if point_to_polyline_distance(poly.center, &s.points) <= half_buf {
                triples.push(Triple {
                    head: s.id.clone(),
                    rel: RelationType::Inside,
                    tail: poly.id.clone(),
                });
            }
        }
        let connect_box = s.mbr().inflate(cfg.delta);
        for cand in seg_index.query_box(&connect_box) {
            let other = &g.segments[cand];
            if other.id == s.id {
                continue;
            }
            if endpoints_within(s, other, cfg.delta) {
                triples.push(Triple {
                    head: s.id.clone(),
                    rel: RelationType::Connected,
                    tail: other.id.clone(),
                });
            }
        }
    }

    let ids: Vec<String> = centers.iter().map(|(id, _)| id.clone()).collect();
    let features: Vec<Vec<f64>> = ids.iter().map(|id| g.features[id].clone()).collect();
    KnowledgeGraph::new(ids, n_polygons, triples, features, g.feature_names.clone())
}

/// Either endpoint of `a` within `delta` of either endpoint of `b`.
pub(crate) fn endpoints_within(a: &crate::geom::Segment, b: &crate::geom::Segment, delta: f64) -> bool {
    let ea = [a.start(), a.end()];
    let eb = [b.start(), b.end()];
    ea.iter().any(|p| eb.iter().any(|q| p.dist(q) <= delta))
}
