//! Loss terms: contrastive alignment, translational relation encodings, and
//! the per-relation semantic loss.

use crate::autodiff::{Graph, Matrix, Var};
use crate::error::Result;
use crate::kgraph::{KnowledgeGraph, RelationType};
use std::collections::BTreeMap;
use std::rc::Rc;

/// Tape nodes for the three loss components.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub contrastive: Var,
    pub semantic: Var,
    pub total: Var,
}

/// Sum of L2 distances between gathered row pairs of two embedding matrices.
fn pair_distance_sum(
    g: &mut Graph,
    emb_a: Var,
    emb_b: Var,
    idx_a: Vec<usize>,
    idx_b: Vec<usize>,
) -> Result<Var> {
    let a = g.gather_rows(emb_a, Rc::new(idx_a))?;
    let b = g.gather_rows(emb_b, Rc::new(idx_b))?;
    let diff = g.sub(a, b)?;
    let dists = g.l2_norm_rows(diff)?;
    g.sum(dists)
}

/// Contrastive alignment loss:
/// sum of positive-pair distances plus beta times the hinge
/// max(0, margin - distance) over negative pairs.
#[allow(clippy::too_many_arguments)]
pub fn contrastive_loss(
    g: &mut Graph,
    emb_s: Var,
    emb_t: Var,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
    beta: f64,
    margin: f64,
) -> Result<Var> {
    let pos = pair_distance_sum(
        g,
        emb_s,
        emb_t,
        positives.iter().map(|p| p.0).collect(),
        positives.iter().map(|p| p.1).collect(),
    )?;
    if negatives.is_empty() {
        return Ok(pos);
    }
    let a = g.gather_rows(emb_s, Rc::new(negatives.iter().map(|p| p.0).collect()))?;
    let b = g.gather_rows(emb_t, Rc::new(negatives.iter().map(|p| p.1).collect()))?;
    let diff = g.sub(a, b)?;
    let dists = g.l2_norm_rows(diff)?;
    let hinge_arg = g.affine(dists, -1.0, margin)?;
    let hinge = g.relu(hinge_arg)?;
    let neg_sum = g.sum(hinge)?;
    let weighted = g.affine(neg_sum, beta, 0.0)?;
    g.add(pos, weighted)
}

/// Relation triples of a graph as (head row, tail row) lists per relation,
/// relations with no triples omitted, deterministic order.
pub fn relation_pairs(kg: &KnowledgeGraph) -> BTreeMap<RelationType, Vec<(usize, usize)>> {
    let rows = kg.row_map();
    let mut out: BTreeMap<RelationType, Vec<(usize, usize)>> = BTreeMap::new();
    for t in &kg.triples {
        out.entry(t.rel).or_default().push((rows[&t.head], rows[&t.tail]));
    }
    out
}

/// Semantic loss for one graph:
/// sum over relations r of (1/|T_r|) sum over (e, r, e') of
/// ||h_e - h_e' - Theta_r|| where Theta_r is the mean difference.
/// Gradients flow through Theta_r as well.
pub fn semantic_loss(g: &mut Graph, emb: Var, kg: &KnowledgeGraph) -> Result<Var> {
    let mut total = g.constant(Matrix::scalar(0.0));
    for (_, pairs) in relation_pairs(kg) {
        let m = pairs.len();
        let heads = g.gather_rows(emb, Rc::new(pairs.iter().map(|p| p.0).collect()))?;
        let tails = g.gather_rows(emb, Rc::new(pairs.iter().map(|p| p.1).collect()))?;
        let diffs = g.sub(heads, tails)?;
        // Theta_r = mean of diffs; replicate to m rows and subtract.
        let mean_weights = g.constant(Matrix::from_vec(1, m, vec![1.0 / m as f64; m]));
        let theta = g.matmul(mean_weights, diffs)?;
        let ones = g.constant(Matrix::from_vec(m, 1, vec![1.0; m]));
        let theta_rep = g.matmul(ones, theta)?;
        let dev = g.sub(diffs, theta_rep)?;
        let norms = g.l2_norm_rows(dev)?;
        let s = g.sum(norms)?;
        let scaled = g.affine(s, 1.0 / m as f64, 0.0)?;
        total = g.add(total, scaled)?;
    }
    Ok(total)
}

/// Total loss: contrastive + alpha * (semantic_s + semantic_t).
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    g: &mut Graph,
    emb_s: Var,
    emb_t: Var,
    kg_s: &KnowledgeGraph,
    kg_t: &KnowledgeGraph,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
    beta: f64,
    alpha: f64,
    margin: f64,
) -> Result<LossVars> {
    let contrastive = contrastive_loss(g, emb_s, emb_t, positives, negatives, beta, margin)?;
    let sem_s = semantic_loss(g, emb_s, kg_s)?;
    let sem_t = semantic_loss(g, emb_t, kg_t)?;
    let semantic = g.add(sem_s, sem_t)?;
    let weighted = g.affine(semantic, alpha, 0.0)?;
    let total = g.add(contrastive, weighted)?;
    Ok(LossVars { contrastive, semantic, total })
}

/// Relation encodings from a finished embedding matrix: the mean of
/// (h_head - h_tail) over each relation's triples. Relations with no triples
/// are omitted.
pub fn relation_encoding(
    kg: &KnowledgeGraph,
    embeddings: &Matrix,
) -> BTreeMap<RelationType, Vec<f64>> {
    let mut out = BTreeMap::new();
    for (rel, pairs) in relation_pairs(kg) {
        let mut acc = vec![0.0; embeddings.cols];
        for (h, t) in &pairs {
            for c in 0..embeddings.cols {
                acc[c] += embeddings.get(*h, c) - embeddings.get(*t, c);
            }
        }
        for v in acc.iter_mut() {
            *v /= pairs.len() as f64;
        }
        out.insert(rel, acc);
    }
    out
}
