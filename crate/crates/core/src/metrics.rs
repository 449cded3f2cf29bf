//! Evaluation measures: match accounting, cumulative normalized
//! inconsistency, displacement of merged segments, dataset statistics, and
//! the grid/buffer width sweep harness.

use crate::encoder::TrainConfig;
use crate::error::{Error, Result};
use crate::geom::{hausdorff_distance, intersection_area, EntityId, Gdb, GeoConfig};
use crate::index::SpatialIndex;
use crate::kgraph::{build_knowledge_graph, RelationType};
use crate::matcher::{match_entities, MatchConfig, MatchSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

/// Correct/incorrect/missing fractions with precision and recall.
///
/// Fractions are over the union of predicted and true pairs, so they sum to
/// one; precision and recall are the usual count ratios (an empty prediction
/// set reports precision zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    pub correct: f64,
    pub incorrect: f64,
    pub missing: f64,
    pub precision: f64,
    pub recall: f64,
    pub correct_count: usize,
    pub incorrect_count: usize,
    pub missing_count: usize,
}

impl MatchReport {
    pub fn f1(&self) -> f64 {
        if self.precision + self.recall == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / (self.precision + self.recall)
        }
    }
}

/// Scores a predicted match set against ground-truth pairs.
pub fn match_report(predicted: &MatchSet, truth: &[(EntityId, EntityId)]) -> Result<MatchReport> {
    if truth.is_empty() {
        return Err(Error::Metrics("empty ground truth".into()));
    }
    let truth_set: BTreeSet<(&str, &str)> =
        truth.iter().map(|(s, t)| (s.as_str(), t.as_str())).collect();
    let pred_set: BTreeSet<(&str, &str)> =
        predicted.pairs.iter().map(|p| (p.source.as_str(), p.target.as_str())).collect();

    let correct = pred_set.intersection(&truth_set).count();
    let incorrect = pred_set.difference(&truth_set).count();
    let missing = truth_set.difference(&pred_set).count();
    let z = (correct + incorrect + missing) as f64;
    let precision =
        if correct + incorrect == 0 { 0.0 } else { correct as f64 / (correct + incorrect) as f64 };
    let recall = correct as f64 / (correct + missing) as f64;
    Ok(MatchReport {
        correct: correct as f64 / z,
        incorrect: incorrect as f64 / z,
        missing: missing as f64 / z,
        precision,
        recall,
        correct_count: correct,
        incorrect_count: incorrect,
        missing_count: missing,
    })
}

/// Cumulative normalized inconsistency: the sum of intersection-over-union
/// over unordered overlapping polygon pairs. Polygon-segment bounding-box
/// overlaps are counted separately as a coarse diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CniReport {
    pub total: f64,
    pub overlapping_pairs: usize,
    pub segment_polygon_mbr_overlaps: usize,
}

pub fn cni(g: &Gdb) -> Result<CniReport> {
    let index = SpatialIndex::build(
        g.entities.iter().enumerate().map(|(i, e)| (i, e.mbr())).collect(),
    );
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, e) in g.entities.iter().enumerate() {
        for j in index.query_box(&e.mbr()) {
            if j <= i {
                continue;
            }
            let other = &g.entities[j];
            let inter = intersection_area(e.vertices(), other.vertices());
            if inter > 1e-12 {
                let union = e.area() + other.area() - inter;
                total += inter / union;
                pairs += 1;
            }
        }
    }
    let seg_index = SpatialIndex::build(
        g.segments.iter().enumerate().map(|(i, s)| (i, s.mbr())).collect(),
    );
    let mut aux = 0usize;
    for e in &g.entities {
        for j in seg_index.query_box(&e.mbr()) {
            if e.mbr().overlap_area(&g.segments[j].mbr()) > 1e-12 {
                aux += 1;
            }
        }
    }
    Ok(CniReport { total, overlapping_pairs: pairs, segment_polygon_mbr_overlaps: aux })
}

/// CNI before/after merging: the new inconsistency is measured against the
/// source map's own baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CniDelta {
    pub merged_total: f64,
    pub source_total: f64,
    pub new_cni: f64,
    pub new_cni_percent: f64,
}

pub fn cni_delta(merged: &Gdb, source: &Gdb) -> Result<CniDelta> {
    let merged_total = cni(merged)?.total;
    let source_total = cni(source)?.total;
    let new_cni = merged_total - source_total;
    let new_cni_percent = if new_cni.abs() < 1e-12 {
        0.0
    } else if source_total == 0.0 {
        f64::INFINITY
    } else {
        100.0 * new_cni / source_total
    };
    Ok(CniDelta { merged_total, source_total, new_cni, new_cni_percent })
}

/// Fraction of merged target segments whose Hausdorff distance to their
/// original geometry is within each eta threshold. Correspondence is by id:
/// merged maps keep the target ids of the entities they absorbed.
pub fn displacement_within(
    merged: &Gdb,
    original_targets: &Gdb,
    eta: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut distances = Vec::new();
    for s in &merged.segments {
        if let Some(orig) = original_targets.segment(&s.id) {
            distances.push(hausdorff_distance(&s.points, &orig.points));
        }
    }
    if distances.is_empty() {
        return Err(Error::Metrics("no merged segments correspond to target originals".into()));
    }
    Ok(eta
        .iter()
        .map(|&e| {
            let within = distances.iter().filter(|&&d| d <= e).count();
            (e, within as f64 / distances.len() as f64)
        })
        .collect())
}

/// Table-style dataset statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub ways: usize,
    pub terminal_nodes: usize,
    pub intermediate_nodes: usize,
    pub segments: usize,
    pub buildings: usize,
}

pub fn dataset_stats(g: &Gdb) -> DatasetStats {
    let key = |p: &crate::geom::Point| -> (u64, u64) {
        let norm = |v: f64| if v == 0.0 { 0.0_f64.to_bits() } else { v.to_bits() };
        (norm(p.x), norm(p.y))
    };
    let mut ways = BTreeSet::new();
    let mut terminals = BTreeSet::new();
    let mut intermediates = BTreeSet::new();
    for s in &g.segments {
        ways.insert(s.way_id.clone());
        terminals.insert(key(&s.start()));
        terminals.insert(key(&s.end()));
        for p in &s.points[1..s.points.len() - 1] {
            intermediates.insert(key(p));
        }
    }
    let intermediate_nodes = intermediates.difference(&terminals).count();
    DatasetStats {
        ways: ways.len(),
        terminal_nodes: terminals.len(),
        intermediate_nodes,
        segments: g.segments.len(),
        buildings: g.entities.len(),
    }
}

/// Which width the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    GridWidth,
    BufferWidth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub width: f64,
    pub mean_neighbors: f64,
    pub f1: f64,
}

/// Runs knowledge-graph construction, training, and matching per width and
/// reports the mean neighbor count alongside the matching F1.
///
/// For the grid sweep, neighbors are the grid-relation out-edges per
/// polygon; for the buffer sweep, the polygons inside each segment's buffer.
#[allow(clippy::too_many_arguments)]
pub fn width_sweep(
    g_s: &Gdb,
    g_t: &Gdb,
    train_pairs: &[(EntityId, EntityId)],
    truth: &[(EntityId, EntityId)],
    widths: &[f64],
    param: SweepParam,
    geo: &GeoConfig,
    train_cfg: &TrainConfig,
    match_cfg: &MatchConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(widths.len());
    for &w in widths {
        let mut geo_w = geo.clone();
        match param {
            SweepParam::GridWidth => geo_w.mu = w,
            SweepParam::BufferWidth => geo_w.lambda_buf = w,
        }
        let kg_s = build_knowledge_graph(g_s, &geo_w)?;
        let kg_t = build_knowledge_graph(g_t, &geo_w)?;

        let mean_neighbors = {
            let (count_of, heads): (usize, Box<dyn Fn(&crate::kgraph::Triple) -> bool>) =
                match param {
                    SweepParam::GridWidth => (
                        g_s.entities.len(),
                        Box::new(|t| {
                            !matches!(t.rel, RelationType::Inside | RelationType::Connected)
                        }),
                    ),
                    SweepParam::BufferWidth => (
                        g_s.segments.len(),
                        Box::new(|t| t.rel == RelationType::Inside),
                    ),
                };
            if count_of == 0 {
                0.0
            } else {
                kg_s.triples.iter().filter(|t| heads(t)).count() as f64 / count_of as f64
            }
        };

        let out = crate::encoder::train(&kg_s, &kg_t, train_pairs, train_cfg)?;
        let ms = match_entities(g_s, g_t, &out.embeddings, &geo_w, match_cfg)?;
        let report = match_report(&ms, truth)?;
        rows.push(SweepRow { width: w, mean_neighbors, f1: report.f1() });
    }
    Ok(rows)
}

/// Plot-ready CSV: width,mean_neighbors,f1.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "width,mean_neighbors,f1")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.width, r.mean_neighbors, r.f1)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point, PolyEntity, Segment};
    use crate::matcher::MatchPair;
    use std::collections::BTreeMap;

    fn square(id: &str, x: f64, y: f64, side: f64) -> PolyEntity {
        PolyEntity::new(
            id,
            vec![
                Point::new(x, y),
                Point::new(x + side, y),
                Point::new(x + side, y + side),
                Point::new(x, y + side),
            ],
        )
        .unwrap()
    }

    fn gdb(entities: Vec<PolyEntity>, segments: Vec<Segment>) -> Gdb {
        let mut features = BTreeMap::new();
        for e in &entities {
            features.insert(e.id.clone(), vec![0.0]);
        }
        for s in &segments {
            features.insert(s.id.clone(), vec![0.0]);
        }
        Gdb::new(entities, segments, features, vec!["f".into()]).unwrap()
    }

    fn match_set(pairs: &[(&str, &str)]) -> MatchSet {
        MatchSet {
            pairs: pairs
                .iter()
                .map(|&(s, t)| MatchPair { source: s.into(), target: t.into(), score: 1.0 })
                .collect(),
            threshold: 0.5,
            unmatched_source: vec![],
            unmatched_target: vec![],
        }
    }

    #[test]
    fn perfect_prediction() {
        let truth = vec![("a".to_string(), "x".to_string()), ("b".to_string(), "y".to_string())];
        let r = match_report(&match_set(&[("a", "x"), ("b", "y")]), &truth).unwrap();
        assert_eq!((r.correct, r.incorrect, r.missing), (1.0, 0.0, 0.0));
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
    }

    #[test]
    fn empty_prediction_zero_recall() {
        let truth = vec![("a".to_string(), "x".to_string())];
        let r = match_report(&match_set(&[]), &truth).unwrap();
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.missing, 1.0);
    }

    #[test]
    fn half_correct_hand_counted() {
        // 2 correct, 1 incorrect, 1 missing: union of 4 pairs.
        let truth = vec![
            ("a".to_string(), "x".to_string()),
            ("b".to_string(), "y".to_string()),
            ("c".to_string(), "z".to_string()),
        ];
        let r = match_report(&match_set(&[("a", "x"), ("b", "y"), ("d", "w")]), &truth).unwrap();
        assert_eq!(r.correct_count, 2);
        assert_eq!(r.incorrect_count, 1);
        assert_eq!(r.missing_count, 1);
        assert!((r.correct - 0.5).abs() < 1e-12);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        // Identities hold by construction.
        let p = r.correct_count as f64 / (r.correct_count + r.incorrect_count) as f64;
        let rec = r.correct_count as f64 / (r.correct_count + r.missing_count) as f64;
        assert_eq!(r.precision, p);
        assert_eq!(r.recall, rec);
    }

    #[test]
    fn empty_truth_is_error() {
        assert!(match_report(&match_set(&[("a", "x")]), &[]).is_err());
    }

    #[test]
    fn cni_disjoint_scene_zero() {
        let g = gdb(vec![square("a", 0.0, 0.0, 1.0), square("b", 5.0, 5.0, 1.0)], vec![]);
        assert_eq!(cni(&g).unwrap().total, 0.0);
    }

    #[test]
    fn cni_offset_pair_plus_disjoint() {
        // Two unit squares offset by half overlap with IoU 1/3; a third far away.
        let g = gdb(
            vec![
                square("a", 0.0, 0.0, 1.0),
                square("b", 0.5, 0.0, 1.0),
                square("c", 50.0, 50.0, 1.0),
            ],
            vec![],
        );
        let r = cni(&g).unwrap();
        assert!((r.total - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(r.overlapping_pairs, 1);
    }

    #[test]
    fn cni_identical_pair_is_one() {
        let g = gdb(vec![square("a", 0.0, 0.0, 2.0), square("b", 0.0, 0.0, 2.0)], vec![]);
        assert!((cni(&g).unwrap().total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cni_additive_over_disjoint_clusters_and_permutation_invariant() {
        let cluster1 = vec![square("a", 0.0, 0.0, 1.0), square("b", 0.5, 0.0, 1.0)];
        let cluster2 = vec![square("c", 100.0, 0.0, 2.0), square("d", 101.0, 0.0, 2.0)];
        let both: Vec<PolyEntity> =
            cluster1.iter().cloned().chain(cluster2.iter().cloned()).collect();
        let mut reversed = both.clone();
        reversed.reverse();
        let c1 = cni(&gdb(cluster1, vec![])).unwrap().total;
        let c2 = cni(&gdb(cluster2, vec![])).unwrap().total;
        let c_both = cni(&gdb(both, vec![])).unwrap().total;
        let c_rev = cni(&gdb(reversed, vec![])).unwrap().total;
        assert!((c_both - (c1 + c2)).abs() < 1e-12);
        assert!((c_both - c_rev).abs() < 1e-12);
    }

    #[test]
    fn displacement_zero_shift_all_within() {
        let s = Segment::new("s", "w", vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)]).unwrap();
        let g = gdb(vec![], vec![s.clone()]);
        let fractions = displacement_within(&g, &g, &[5.0, 10.0]).unwrap();
        assert_eq!(fractions, vec![(5.0, 1.0), (10.0, 1.0)]);
    }

    #[test]
    fn displacement_seven_unit_shift() {
        let orig = Segment::new("s", "w", vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)]).unwrap();
        let moved = Segment::new("s", "w", vec![Point::new(0.0, 7.0), Point::new(10.0, 7.0)]).unwrap();
        let g_orig = gdb(vec![], vec![orig]);
        let g_moved = gdb(vec![], vec![moved]);
        let fractions = displacement_within(&g_moved, &g_orig, &[5.0, 10.0]).unwrap();
        assert_eq!(fractions, vec![(5.0, 0.0), (10.0, 1.0)]);
    }

    #[test]
    fn displacement_mixed_hand_counted() {
        let mk = |id: &str, y: f64| {
            Segment::new(id, "w", vec![Point::new(0.0, y), Point::new(10.0, y)]).unwrap()
        };
        let g_orig = gdb(vec![], vec![mk("s1", 0.0), mk("s2", 0.0)]);
        let g_moved = gdb(vec![], vec![mk("s1", 3.0), mk("s2", 8.0)]);
        let fractions = displacement_within(&g_moved, &g_orig, &[5.0, 10.0]).unwrap();
        assert_eq!(fractions, vec![(5.0, 0.5), (10.0, 1.0)]);
    }

    #[test]
    fn stats_on_bend_and_junction_network() {
        use crate::geom::{split_ways_into_segments, Way};
        // A sharp bend, a run of intermediates, and a 3-way junction:
        // four segments, five terminal nodes, three intermediates.
        let ways = vec![
            Way::new(
                "a",
                vec![
                    Point::new(-1.0, 2.0),
                    Point::new(0.0, 0.0),
                    Point::new(1.0, 0.0),
                    Point::new(2.0, 0.0),
                    Point::new(3.0, 0.0),
                    Point::new(4.0, 0.0),
                ],
            )
            .unwrap(),
            Way::new("b", vec![Point::new(4.0, 0.0), Point::new(5.0, 1.0)]).unwrap(),
            Way::new("c", vec![Point::new(4.0, 0.0), Point::new(5.0, -1.0)]).unwrap(),
        ];
        let segments = split_ways_into_segments(&ways, &GeoConfig::default()).unwrap();
        let g = gdb(vec![], segments);
        let stats = dataset_stats(&g);
        assert_eq!(stats.segments, 4);
        assert_eq!(stats.terminal_nodes, 5);
        assert_eq!(stats.intermediate_nodes, 3);
        assert_eq!(stats.ways, 3);
        assert_eq!(stats.buildings, 0);
    }

    #[test]
    fn empty_gdb_stats_are_zero() {
        let g = gdb(vec![], vec![]);
        let stats = dataset_stats(&g);
        assert_eq!(
            stats,
            DatasetStats {
                ways: 0,
                terminal_nodes: 0,
                intermediate_nodes: 0,
                segments: 0,
                buildings: 0
            }
        );
    }
}
