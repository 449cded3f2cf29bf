//! Pairwise similarity, optimal 1:1 assignment, and threshold filtering.
//!
//! The similarity of a candidate pair blends embedding agreement with shape
//! overlap: tau * (1 + cosine)/2 + (1 - tau) * Jaccard. Matching maximizes
//! total similarity by solving minimum-weight perfect matching on the
//! square-padded weight matrix W = 1 - Sim; dummy assignments and pairs
//! without candidate evidence come back as unmatched. Polygons and segments
//! are matched in separate pools; a threshold then drops weak assigned pairs.

mod hungarian;

pub use hungarian::solve_min_cost;

use crate::encoder::EmbeddingSet;
use crate::error::{Error, Result};
use crate::geom::{buffer_polygon, jaccard_area, EntityId, Gdb, GeoConfig, PolyEntity, Segment};
use crate::index::SpatialIndex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Matching knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    /// Mixing weight between embedding similarity and area similarity.
    pub tau: f64,
    /// Acceptance threshold on assigned pair scores.
    pub threshold: f64,
    /// Candidate radius in map units; `None` falls back to the grid width.
    pub candidate_radius: Option<f64>,
    /// Score every pair regardless of distance (small inputs, oracle runs).
    pub dense: bool,
    /// Apply the threshold before assignment instead of after.
    pub filter_before_assignment: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            tau: 0.5,
            threshold: 0.5,
            candidate_radius: None,
            dense: false,
            filter_before_assignment: false,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must be in [0, 1], got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// A shape participating in similarity: only like kinds are comparable.
#[derive(Debug, Clone, Copy)]
pub enum ShapeRef<'a> {
    Polygon(&'a PolyEntity),
    Segment(&'a Segment),
}

/// Candidate-pair scores for one pool (polygons or segments).
#[derive(Debug, Clone)]
pub struct SimilarityTable {
    pub left_ids: Vec<EntityId>,
    pub right_ids: Vec<EntityId>,
    /// (left row, right row) -> score in [0, 1]; only candidate pairs.
    pub scores: BTreeMap<(usize, usize), f64>,
    pub tau: f64,
    pub candidate_radius: Option<f64>,
}

/// Accepted pairs plus the leftovers on both sides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
    pub threshold: f64,
    pub unmatched_source: Vec<EntityId>,
    pub unmatched_target: Vec<EntityId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchPair {
    pub source: EntityId,
    pub target: EntityId,
    pub score: f64,
}

impl MatchSet {
    pub fn matched_source_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.pairs.iter().map(|p| &p.source)
    }

    pub fn matched_target_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.pairs.iter().map(|p| &p.target)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Blended pair similarity in [0, 1]:
/// tau * (1 + cos(h_s, h_t))/2 + (1 - tau) * Jaccard(shape_s, shape_t).
/// Segments are compared through their buffer polygons. Cross-kind pairs are
/// an error.
pub fn pair_similarity(
    shape_s: ShapeRef,
    shape_t: ShapeRef,
    emb_s: &[f64],
    emb_t: &[f64],
    tau: f64,
    lambda_buf: f64,
) -> Result<f64> {
    let sim_area = match (shape_s, shape_t) {
        (ShapeRef::Polygon(a), ShapeRef::Polygon(b)) => {
            jaccard_area(a.vertices(), b.vertices())?
        }
        (ShapeRef::Segment(a), ShapeRef::Segment(b)) => {
            // Skip the clip when corridors cannot touch.
            if a.mbr().inflate(lambda_buf / 2.0).intersects(&b.mbr().inflate(lambda_buf / 2.0)) {
                let ba = buffer_polygon(&a.points, lambda_buf);
                let bb = buffer_polygon(&b.points, lambda_buf);
                jaccard_area(&ba, &bb)?
            } else {
                0.0
            }
        }
        _ => {
            return Err(Error::Matcher(
                "cannot compare a segment with a polygon".into(),
            ))
        }
    };
    let sim_kg = (1.0 + cosine(emb_s, emb_t)) / 2.0;
    Ok((tau * sim_kg + (1.0 - tau) * sim_area).clamp(0.0, 1.0))
}

/// Maximum-total-similarity 1:1 assignment over a similarity table.
///
/// The weight matrix W = 1 - Sim is padded to a square with weight-1 dummies
/// and solved by minimum-cost perfect matching; maximizing total similarity
/// and minimizing total weight coincide because every row is assigned.
/// Pairs without candidate evidence are reported unmatched.
pub fn assignment(table: &SimilarityTable) -> Vec<(usize, usize, f64)> {
    let n_left = table.left_ids.len();
    let n_right = table.right_ids.len();
    let n = n_left.max(n_right);
    if n == 0 {
        return Vec::new();
    }
    let mut cost = vec![vec![1.0_f64; n]; n];
    for (&(i, j), &s) in &table.scores {
        cost[i][j] = 1.0 - s;
    }
    let asg = solve_min_cost(&cost);
    let mut out = Vec::new();
    for (i, &j) in asg.iter().enumerate() {
        if i < n_left && j < n_right {
            if let Some(&s) = table.scores.get(&(i, j)) {
                out.push((i, j, s));
            }
        }
    }
    out
}

/// Builds the similarity table for one pool with candidate pruning by
/// bounding-rectangle distance.
fn build_table(
    left: &[ShapeRef],
    left_ids: Vec<EntityId>,
    left_emb: &[&[f64]],
    right: &[ShapeRef],
    right_ids: Vec<EntityId>,
    right_emb: &[&[f64]],
    cfg: &MatchConfig,
    geo: &GeoConfig,
) -> Result<SimilarityTable> {
    let radius = if cfg.dense { None } else { Some(cfg.candidate_radius.unwrap_or(geo.mu)) };
    let mbr_of = |s: &ShapeRef| match s {
        ShapeRef::Polygon(p) => p.mbr(),
        ShapeRef::Segment(sg) => sg.mbr(),
    };
    let right_index =
        SpatialIndex::build(right.iter().enumerate().map(|(j, s)| (j, mbr_of(s))).collect());

    let mut scores = BTreeMap::new();
    for (i, ls) in left.iter().enumerate() {
        let candidates: Vec<usize> = match radius {
            Some(r) => right_index.query_box(&mbr_of(ls).inflate(r)),
            None => (0..right.len()).collect(),
        };
        for j in candidates {
            let s =
                pair_similarity(*ls, right[j], left_emb[i], right_emb[j], cfg.tau, geo.lambda_buf)?;
            if !cfg.filter_before_assignment || s >= cfg.threshold {
                scores.insert((i, j), s);
            }
        }
    }
    Ok(SimilarityTable { left_ids, right_ids, scores, tau: cfg.tau, candidate_radius: radius })
}

/// Full matching: candidate similarity over both pools, assignment per pool,
/// threshold filtering, unmatched remainder accounting.
pub fn match_entities(
    g_s: &Gdb,
    g_t: &Gdb,
    embeddings: &EmbeddingSet,
    geo: &GeoConfig,
    cfg: &MatchConfig,
) -> Result<MatchSet> {
    cfg.validate()?;
    fn lookup<'a>(
        map: &'a BTreeMap<EntityId, Vec<f64>>,
        id: &EntityId,
    ) -> Result<&'a [f64]> {
        map.get(id)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Matcher(format!("missing embedding for {id}")))
    }

    let mut pairs = Vec::new();
    let mut matched_s = std::collections::BTreeSet::new();
    let mut matched_t = std::collections::BTreeSet::new();

    // Polygons and segments are assigned independently.
    for kind in 0..2 {
        let (left, left_ids): (Vec<ShapeRef>, Vec<EntityId>) = if kind == 0 {
            (
                g_s.entities.iter().map(ShapeRef::Polygon).collect(),
                g_s.entities.iter().map(|e| e.id.clone()).collect(),
            )
        } else {
            (
                g_s.segments.iter().map(ShapeRef::Segment).collect(),
                g_s.segments.iter().map(|s| s.id.clone()).collect(),
            )
        };
        let (right, right_ids): (Vec<ShapeRef>, Vec<EntityId>) = if kind == 0 {
            (
                g_t.entities.iter().map(ShapeRef::Polygon).collect(),
                g_t.entities.iter().map(|e| e.id.clone()).collect(),
            )
        } else {
            (
                g_t.segments.iter().map(ShapeRef::Segment).collect(),
                g_t.segments.iter().map(|s| s.id.clone()).collect(),
            )
        };
        let left_emb: Vec<&[f64]> = left_ids
            .iter()
            .map(|id| lookup(&embeddings.source, id))
            .collect::<Result<_>>()?;
        let right_emb: Vec<&[f64]> = right_ids
            .iter()
            .map(|id| lookup(&embeddings.target, id))
            .collect::<Result<_>>()?;
        let table =
            build_table(&left, left_ids, &left_emb, &right, right_ids, &right_emb, cfg, geo)?;
        for (i, j, score) in assignment(&table) {
            if score >= cfg.threshold {
                matched_s.insert(table.left_ids[i].clone());
                matched_t.insert(table.right_ids[j].clone());
                pairs.push(MatchPair {
                    source: table.left_ids[i].clone(),
                    target: table.right_ids[j].clone(),
                    score,
                });
            }
        }
    }

    let unmatched_source = g_s.ids().filter(|id| !matched_s.contains(id)).collect();
    let unmatched_target = g_t.ids().filter(|id| !matched_t.contains(id)).collect();
    Ok(MatchSet { pairs, threshold: cfg.threshold, unmatched_source, unmatched_target })
}

/// Writes `matches.csv` (source_id,target_id,score) plus the two unmatched
/// lists into `dir`.
pub fn write_match_csv(ms: &MatchSet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("matches.csv"))?);
    writeln!(out, "source_id,target_id,score")?;
    for p in &ms.pairs {
        writeln!(out, "{},{},{}", p.source, p.target, p.score)?;
    }
    out.flush()?;
    for (name, list) in [
        ("unmatched_source.csv", &ms.unmatched_source),
        ("unmatched_target.csv", &ms.unmatched_target),
    ] {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
        writeln!(f, "id")?;
        for id in list {
            writeln!(f, "{id}")?;
        }
        f.flush()?;
    }
    Ok(())
}
