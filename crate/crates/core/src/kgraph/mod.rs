//! Knowledge-graph representation of a geospatial database.
//!
//! Entities are the polygons and segments of the Gdb. Each polygon gets a
//! 3x3 grid of width `mu` centered on its centroid; every entity whose center
//! falls strictly inside a cell yields a directed triple labeled with that
//! cell's relation. Each segment links to polygons whose centroid lies inside
//! its buffer (`Inside`) and to segments with an endpoint within `delta` of
//! one of its endpoints (`Connected`).

mod build;
mod io;

pub use build::{build_knowledge_graph, classify_grid_relation};
pub use io::{load_knowledge_graph, save_knowledge_graph};

use crate::error::{Error, Result};
use crate::geom::EntityId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// The eleven relation types: nine grid cells plus buffer containment and
/// endpoint connectivity. Codes are stable for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationType {
    Bottom = 0,
    BottomRight = 1,
    Right = 2,
    TopRight = 3,
    Top = 4,
    TopLeft = 5,
    Left = 6,
    BottomLeft = 7,
    Close = 8,
    Inside = 9,
    Connected = 10,
}

impl RelationType {
    pub const ALL: [RelationType; 11] = [
        RelationType::Bottom,
        RelationType::BottomRight,
        RelationType::Right,
        RelationType::TopRight,
        RelationType::Top,
        RelationType::TopLeft,
        RelationType::Left,
        RelationType::BottomLeft,
        RelationType::Close,
        RelationType::Inside,
        RelationType::Connected,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<RelationType> {
        RelationType::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::Bottom => "Bottom",
            RelationType::BottomRight => "BottomRight",
            RelationType::Right => "Right",
            RelationType::TopRight => "TopRight",
            RelationType::Top => "Top",
            RelationType::TopLeft => "TopLeft",
            RelationType::Left => "Left",
            RelationType::BottomLeft => "BottomLeft",
            RelationType::Close => "Close",
            RelationType::Inside => "Inside",
            RelationType::Connected => "Connected",
        }
    }

    pub fn from_name(name: &str) -> Option<RelationType> {
        RelationType::ALL.iter().copied().find(|r| r.name() == name)
    }
}

/// A directed, typed edge between two entities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub rel: RelationType,
    pub tail: EntityId,
}

/// Immutable knowledge graph: entity rows, deduplicated triples, the feature
/// matrix, and per-relation triple buckets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    /// Entity ids in row order: polygons first, then segments.
    pub ids: Vec<EntityId>,
    /// Rows `0..n_polygons` are polygon entities.
    pub n_polygons: usize,
    /// Sorted, deduplicated triples.
    pub triples: Vec<Triple>,
    /// Feature matrix, one row per entity, uniform dimension.
    pub features: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
}

impl KnowledgeGraph {
    pub(crate) fn new(
        ids: Vec<EntityId>,
        n_polygons: usize,
        mut triples: Vec<Triple>,
        features: Vec<Vec<f64>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        triples.sort();
        triples.dedup();
        let kg = KnowledgeGraph { ids, n_polygons, triples, features, feature_names };
        kg.validate()?;
        Ok(kg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.features.len() {
            return Err(Error::Kg("feature matrix row count != entity count".into()));
        }
        let d = self.feature_names.len();
        let rows = self.row_map();
        for (id, f) in self.ids.iter().zip(&self.features) {
            if f.len() != d {
                return Err(Error::Kg(format!("feature row for {id} has dim {}, want {d}", f.len())));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::Kg(format!("non-finite feature for {id}")));
            }
        }
        for t in &self.triples {
            if t.head == t.tail {
                return Err(Error::Kg(format!("self-loop triple on {}", t.head)));
            }
            if !rows.contains_key(&t.head) || !rows.contains_key(&t.tail) {
                return Err(Error::Kg(format!("triple references unknown id {} or {}", t.head, t.tail)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row_map(&self) -> BTreeMap<EntityId, usize> {
        self.ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect()
    }

    /// Triple indices bucketed by relation; relations with no triples are
    /// absent.
    pub fn relation_buckets(&self) -> BTreeMap<RelationType, Vec<usize>> {
        let mut buckets: BTreeMap<RelationType, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.triples.iter().enumerate() {
            buckets.entry(t.rel).or_default().push(i);
        }
        buckets
    }

    /// Undirected adjacency over rows (relation labels dropped), deduplicated
    /// and sorted.
    pub fn adjacency_rows(&self) -> Vec<Vec<usize>> {
        let rows = self.row_map();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.ids.len()];
        for t in &self.triples {
            let h = rows[&t.head];
            let l = rows[&t.tail];
            adj[h].insert(l);
            adj[l].insert(h);
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Rows at unweighted undirected graph distance exactly `k` from each row.
    pub fn k_hop_rows(&self, k: usize) -> Vec<Vec<usize>> {
        let adj = self.adjacency_rows();
        let n = self.ids.len();
        let mut result = Vec::with_capacity(n);
        for start in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[start] = 0;
            let mut queue = VecDeque::from([start]);
            let mut at_k = Vec::new();
            while let Some(v) = queue.pop_front() {
                if dist[v] == k {
                    at_k.push(v);
                    continue; // no need to expand past distance k
                }
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            result.push(at_k);
        }
        result
    }

    /// Entities at graph distance exactly `k` from `id` (edges undirected).
    pub fn k_hop_neighbors(&self, id: &str, k: usize) -> Result<BTreeSet<EntityId>> {
        let rows = self.row_map();
        let &start = rows
            .get(id)
            .ok_or_else(|| Error::Kg(format!("unknown entity id {id}")))?;
        if k == 0 {
            return Err(Error::Kg("hop count must be at least 1".into()));
        }
        let adj = self.adjacency_rows();
        let mut dist = vec![usize::MAX; self.ids.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut out = BTreeSet::new();
        while let Some(v) = queue.pop_front() {
            if dist[v] == k {
                out.insert(self.ids[v].clone());
                continue;
            }
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(out)
    }
}
