//! Read-only spatial index over bounding rectangles.
//!
//! Bulk-loaded with sort-tile-recursive packing; queries use closed
//! (boundary-inclusive) intersection and over-approximate on purpose: exact
//! grid membership and buffer tests happen downstream. Query results are
//! returned in insertion order so every consumer is deterministic.

use crate::geom::Mbr;

const NODE_CAPACITY: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    mbr: Mbr,
    /// Child node indices for inner nodes, item indices for leaves.
    children: Vec<usize>,
    leaf: bool,
}

/// Packed R-tree keyed by item position; callers keep their own id list.
#[derive(Debug, Clone)]
pub struct SpatialIndex<T> {
    items: Vec<(T, Mbr)>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl<T: Clone> SpatialIndex<T> {
    /// Bulk-loads the index. Item order is preserved in query results.
    pub fn build(items: Vec<(T, Mbr)>) -> Self {
        let mut idx = SpatialIndex { items, nodes: Vec::new(), root: None };
        if idx.items.is_empty() {
            return idx;
        }

        // Sort-tile-recursive leaf packing: slice by x, tile by y.
        let n = idx.items.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let ca = idx.items[a].1.center();
            let cb = idx.items[b].1.center();
            ca.x.partial_cmp(&cb.x).unwrap().then(a.cmp(&b))
        });
        let leaf_count = n.div_ceil(NODE_CAPACITY);
        let slice_count = (leaf_count as f64).sqrt().ceil() as usize;
        let slice_size = n.div_ceil(slice_count);

        let mut level: Vec<usize> = Vec::new();
        for slice in order.chunks(slice_size) {
            let mut slice = slice.to_vec();
            slice.sort_by(|&a, &b| {
                let ca = idx.items[a].1.center();
                let cb = idx.items[b].1.center();
                ca.y.partial_cmp(&cb.y).unwrap().then(a.cmp(&b))
            });
            for chunk in slice.chunks(NODE_CAPACITY) {
                let mbr = enclosing(chunk.iter().map(|&i| idx.items[i].1));
                idx.nodes.push(Node { mbr, children: chunk.to_vec(), leaf: true });
                level.push(idx.nodes.len() - 1);
            }
        }

        // Pack upward until a single root remains.
        while level.len() > 1 {
            let mut next = Vec::new();
            for chunk in level.chunks(NODE_CAPACITY) {
                let mbr = enclosing(chunk.iter().map(|&i| idx.nodes[i].mbr));
                idx.nodes.push(Node { mbr, children: chunk.to_vec(), leaf: false });
                next.push(idx.nodes.len() - 1);
            }
            level = next;
        }
        idx.root = Some(level[0]);
        idx
    }

    /// All items whose rectangle intersects `query` (closed semantics),
    /// in insertion order.
    pub fn query_box(&self, query: &Mbr) -> Vec<T> {
        let mut hits: Vec<usize> = Vec::new();
        if let Some(root) = self.root {
            let mut stack = vec![root];
            while let Some(ni) = stack.pop() {
                let node = &self.nodes[ni];
                if !node.mbr.intersects(query) {
                    continue;
                }
                if node.leaf {
                    for &item in &node.children {
                        if self.items[item].1.intersects(query) {
                            hits.push(item);
                        }
                    }
                } else {
                    stack.extend(&node.children);
                }
            }
        }
        hits.sort_unstable();
        hits.into_iter().map(|i| self.items[i].0.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn enclosing(mut mbrs: impl Iterator<Item = Mbr>) -> Mbr {
    let first = mbrs.next().expect("non-empty node");
    mbrs.fold(first, |acc, m| Mbr {
        x_min: acc.x_min.min(m.x_min),
        x_max: acc.x_max.max(m.x_max),
        y_min: acc.y_min.min(m.y_min),
        y_max: acc.y_max.max(m.y_max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn mbr(x0: f64, x1: f64, y0: f64, y1: f64) -> Mbr {
        Mbr::new(x0, x1, y0, y1).unwrap()
    }

    #[test]
    fn empty_index_answers_nothing() {
        let idx: SpatialIndex<u32> = SpatialIndex::build(vec![]);
        assert!(idx.query_box(&mbr(-1e9, 1e9, -1e9, 1e9)).is_empty());
    }

    #[test]
    fn disjoint_squares_hit_exactly_one() {
        let idx = SpatialIndex::build(vec![
            (0u32, mbr(0.0, 1.0, 0.0, 1.0)),
            (1, mbr(10.0, 11.0, 0.0, 1.0)),
            (2, mbr(20.0, 21.0, 0.0, 1.0)),
        ]);
        assert_eq!(idx.query_box(&mbr(10.0, 11.0, 0.0, 1.0)), vec![1]);
    }

    #[test]
    fn edge_touch_is_included() {
        let idx = SpatialIndex::build(vec![(7u32, mbr(0.0, 1.0, 0.0, 1.0))]);
        assert_eq!(idx.query_box(&mbr(1.0, 2.0, 0.0, 1.0)), vec![7]);
    }

    #[test]
    fn matches_linear_scan_on_random_rectangles() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let items: Vec<(usize, Mbr)> = (0..1000)
            .map(|i| {
                let x = rng.gen_range(-100.0..100.0);
                let y = rng.gen_range(-100.0..100.0);
                let w = rng.gen_range(0.0..10.0);
                let h = rng.gen_range(0.0..10.0);
                (i, mbr(x, x + w, y, y + h))
            })
            .collect();
        let idx = SpatialIndex::build(items.clone());
        for _ in 0..100 {
            let x = rng.gen_range(-120.0..100.0);
            let y = rng.gen_range(-120.0..100.0);
            let q = mbr(x, x + rng.gen_range(0.0..40.0), y, y + rng.gen_range(0.0..40.0));
            let got = idx.query_box(&q);
            let want: Vec<usize> =
                items.iter().filter(|(_, m)| m.intersects(&q)).map(|(i, _)| *i).collect();
            assert_eq!(got, want);
        }
    }
}
