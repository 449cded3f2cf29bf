//! Training loop: shared-parameter encoding of both graphs, Adam on the
//! total loss, per-epoch negative resampling and dropout masks.

use super::loss::{relation_encoding, total_loss};
use super::model::{forward_embeddings, EncoderParams, KgTensors, ParamVars};
use super::negatives::sample_negatives;
use super::TrainConfig;
use crate::autodiff::{Graph, Matrix};
use crate::error::{Error, Result};
use crate::geom::EntityId;
use crate::kgraph::{KnowledgeGraph, RelationType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::rc::Rc;

/// Final embeddings for every entity of both graphs, plus the per-relation
/// translational encodings. Each L-layer block of an embedding has unit norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub source: BTreeMap<EntityId, Vec<f64>>,
    pub target: BTreeMap<EntityId, Vec<f64>>,
    pub relations_source: BTreeMap<RelationType, Vec<f64>>,
    pub relations_target: BTreeMap<RelationType, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub contrastive: f64,
    pub semantic: f64,
    pub total: f64,
}

pub struct TrainOutput {
    pub params: EncoderParams,
    pub embeddings: EmbeddingSet,
    pub log: Vec<TrainLogRow>,
}

struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: usize,
    lr: f64,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(params: &EncoderParams, lr: f64) -> Adam {
        let slots: Vec<Matrix> = params
            .named_tensors()
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows, m.cols))
            .collect();
        Adam { m: slots.clone(), v: slots, t: 0, lr }
    }

    fn step(&mut self, params: &mut EncoderParams, grads: &[Option<Matrix>]) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_B1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_B2.powi(self.t as i32);
        for (slot, (_, tensor)) in params.named_tensors_mut().into_iter().enumerate() {
            let zero;
            let g = match &grads[slot] {
                Some(g) => g,
                None => {
                    zero = Matrix::zeros(tensor.rows, tensor.cols);
                    &zero
                }
            };
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for i in 0..tensor.data.len() {
                m.data[i] = ADAM_B1 * m.data[i] + (1.0 - ADAM_B1) * g.data[i];
                v.data[i] = ADAM_B2 * v.data[i] + (1.0 - ADAM_B2) * g.data[i] * g.data[i];
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                tensor.data[i] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}

fn positives_to_rows(
    kg_s: &KnowledgeGraph,
    kg_t: &KnowledgeGraph,
    positives: &[(EntityId, EntityId)],
) -> Result<Vec<(usize, usize)>> {
    let rows_s = kg_s.row_map();
    let rows_t = kg_t.row_map();
    positives
        .iter()
        .map(|(s, t)| {
            let rs = rows_s
                .get(s)
                .ok_or_else(|| Error::Encoder(format!("aligned pair references unknown source id {s}")))?;
            let rt = rows_t
                .get(t)
                .ok_or_else(|| Error::Encoder(format!("aligned pair references unknown target id {t}")))?;
            Ok((*rs, *rt))
        })
        .collect()
}

fn dropout_masks(n: usize, dims: &[usize], rate: f64, rng: &mut ChaCha8Rng) -> Vec<Rc<Matrix>> {
    let keep = 1.0 - rate;
    dims.iter()
        .map(|&d| {
            let mut m = Matrix::zeros(n, d);
            for v in m.data.iter_mut() {
                *v = if rng.gen_range(0.0..1.0) < keep { 1.0 / keep } else { 0.0 };
            }
            Rc::new(m)
        })
        .collect()
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::Tensor(msg) if msg.contains("non-finite") => {
            Error::TrainingDiverged(format!("epoch {epoch}: {msg}"))
        }
        other => other,
    }
}

/// Trains the shared encoder on two graphs and a seed alignment, returning
/// the parameters, final embeddings of every entity, and the loss log.
pub fn train(
    kg_s: &KnowledgeGraph,
    kg_t: &KnowledgeGraph,
    positives: &[(EntityId, EntityId)],
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::Encoder("no aligned pairs to train on".into()));
    }
    if kg_s.feature_names != kg_t.feature_names {
        return Err(Error::Encoder(
            "source and target graphs must share a feature schema".into(),
        ));
    }
    let d = kg_s.feature_names.len();
    if d == 0 {
        return Err(Error::Encoder("feature dimension is zero".into()));
    }

    let pos_rows = positives_to_rows(kg_s, kg_t, positives)?;
    let kt_s = KgTensors::build(kg_s, cfg.k_hop)?;
    let kt_t = KgTensors::build(kg_t, cfg.k_hop)?;

    let mut params = EncoderParams::seeded(d, cfg);
    let mut adam = Adam::new(&params, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E3779B97F4A7C15));
    let mut log = Vec::with_capacity(cfg.epochs);

    let mask_dims: Vec<usize> = vec![cfg.hidden_dim; 2 * cfg.layers];

    for epoch in 0..cfg.epochs {
        let negatives =
            sample_negatives(&pos_rows, kt_s.n, kt_t.n, cfg.negatives_per_pair, &mut rng)?;
        let masks_s = if cfg.dropout_rate > 0.0 {
            Some(dropout_masks(kt_s.n, &mask_dims, cfg.dropout_rate, &mut rng))
        } else {
            None
        };
        let masks_t = if cfg.dropout_rate > 0.0 {
            Some(dropout_masks(kt_t.n, &mask_dims, cfg.dropout_rate, &mut rng))
        } else {
            None
        };

        let mut g = Graph::new();
        let pv = ParamVars::register(&mut g, &params);
        let emb_s = forward_embeddings(&mut g, &pv, &kt_s, masks_s.as_deref())
            .map_err(|e| diverged(e, epoch))?;
        let emb_t = forward_embeddings(&mut g, &pv, &kt_t, masks_t.as_deref())
            .map_err(|e| diverged(e, epoch))?;
        let lv = total_loss(
            &mut g, emb_s, emb_t, kg_s, kg_t, &pos_rows, &negatives, cfg.beta, cfg.alpha,
            cfg.margin,
        )
        .map_err(|e| diverged(e, epoch))?;

        let total = g.scalar_value(lv.total);
        if !total.is_finite() {
            return Err(Error::TrainingDiverged(format!("epoch {epoch}: loss is {total}")));
        }
        log.push(TrainLogRow {
            epoch,
            contrastive: g.scalar_value(lv.contrastive),
            semantic: g.scalar_value(lv.semantic),
            total,
        });

        let grads = g.backward(lv.total).map_err(|e| diverged(e, epoch))?;
        let param_grads: Vec<Option<Matrix>> =
            pv.all.iter().map(|v| grads[var_index(*v)].clone()).collect();
        adam.step(&mut params, &param_grads);
    }

    let embeddings = embedding_set(&params, kg_s, kg_t, &kt_s, &kt_t)?;
    Ok(TrainOutput { params, embeddings, log })
}

// Var is an opaque index; expose it for gradient lookup.
fn var_index(v: crate::autodiff::Var) -> usize {
    // Vars are created densely; their Debug form is "Var(i)". The autodiff
    // module guarantees index stability, exposed via this accessor.
    v.index()
}

/// Eval-mode embeddings for one graph under fixed parameters.
pub fn compute_embeddings(
    params: &EncoderParams,
    kg: &KnowledgeGraph,
    k_hop: usize,
) -> Result<Matrix> {
    let kt = KgTensors::build(kg, k_hop)?;
    let mut g = Graph::new();
    let pv = ParamVars::register(&mut g, params);
    let emb = forward_embeddings(&mut g, &pv, &kt, None)?;
    Ok(g.value(emb).clone())
}

fn embedding_set(
    params: &EncoderParams,
    kg_s: &KnowledgeGraph,
    kg_t: &KnowledgeGraph,
    kt_s: &KgTensors,
    kt_t: &KgTensors,
) -> Result<EmbeddingSet> {
    let mut g = Graph::new();
    let pv = ParamVars::register(&mut g, params);
    let emb_s = forward_embeddings(&mut g, &pv, kt_s, None)?;
    let emb_t = forward_embeddings(&mut g, &pv, kt_t, None)?;
    let ms = g.value(emb_s).clone();
    let mt = g.value(emb_t).clone();

    let to_map = |kg: &KnowledgeGraph, m: &Matrix| -> BTreeMap<EntityId, Vec<f64>> {
        kg.ids.iter().enumerate().map(|(r, id)| (id.clone(), m.row(r).to_vec())).collect()
    };
    Ok(EmbeddingSet {
        dim: ms.cols,
        source: to_map(kg_s, &ms),
        target: to_map(kg_t, &mt),
        relations_source: relation_encoding(kg_s, &ms),
        relations_target: relation_encoding(kg_t, &mt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::Triple;

    fn grid_kg(prefix: &str, jitter: f64) -> KnowledgeGraph {
        // 3x3 grid of entities with positional features and a few relations.
        let mut ids = Vec::new();
        let mut features = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                ids.push(format!("{prefix}{i}_{j}"));
                features.push(vec![
                    i as f64 / 2.0 + jitter * ((i * 3 + j) as f64).sin() * 0.05,
                    j as f64 / 2.0 + jitter * ((i * 3 + j) as f64).cos() * 0.05,
                ]);
            }
        }
        let mut triples = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if i + 1 < 3 {
                    triples.push(Triple {
                        head: format!("{prefix}{i}_{j}"),
                        rel: RelationType::Right,
                        tail: format!("{prefix}{}_{j}", i + 1),
                    });
                }
                if j + 1 < 3 {
                    triples.push(Triple {
                        head: format!("{prefix}{i}_{j}"),
                        rel: RelationType::Top,
                        tail: format!("{prefix}{i}_{}", j + 1),
                    });
                }
            }
        }
        KnowledgeGraph::new(ids, 9, triples, features, vec!["x".into(), "y".into()]).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden_dim: 8,
            epochs: 60,
            dropout_rate: 0.0,
            negatives_per_pair: 4,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn identical_graphs_align_perfectly() {
        let kg_s = grid_kg("s", 0.0);
        let kg_t = {
            // Same geometry and structure under different ids.
            let mut kg = grid_kg("t", 0.0);
            kg.triples.sort();
            kg
        };
        let positives: Vec<(String, String)> =
            (0..3).map(|i| (format!("s{i}_{i}"), format!("t{i}_{i}"))).collect();
        let out = train(&kg_s, &kg_t, &positives, &small_cfg()).unwrap();

        // Identical inputs through shared weights give identical embeddings,
        // so every source entity's nearest target is its copy.
        for (i, sid) in kg_s.ids.iter().enumerate() {
            let se = &out.embeddings.source[sid];
            let mut best = (f64::INFINITY, String::new());
            for tid in &kg_t.ids {
                let te = &out.embeddings.target[tid];
                let d: f64 =
                    se.iter().zip(te).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if d < best.0 {
                    best = (d, tid.clone());
                }
            }
            assert_eq!(best.1, kg_t.ids[i], "source {sid} should match its copy");
            assert!(best.0 < 1e-9);
        }
    }

    #[test]
    fn contrastive_positive_term_is_zero_on_identical_graphs_at_any_params() {
        // Structural identity: shared weights on identical graphs give
        // coinciding embeddings before any training.
        let kg_s = grid_kg("s", 0.0);
        let kg_t = grid_kg("t", 0.0);
        let cfg = TrainConfig { hidden_dim: 6, epochs: 0, ..small_cfg() };
        let params = EncoderParams::seeded(2, &cfg);
        let es = compute_embeddings(&params, &kg_s, cfg.k_hop).unwrap();
        let et = compute_embeddings(&params, &kg_t, cfg.k_hop).unwrap();
        for r in 0..es.rows {
            for c in 0..es.cols {
                assert!((es.get(r, c) - et.get(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_decreases_on_noisy_pair() {
        let kg_s = grid_kg("s", 0.0);
        let kg_t = grid_kg("t", 1.0);
        let positives: Vec<(String, String)> = kg_s
            .ids
            .iter()
            .zip(&kg_t.ids)
            .take(5)
            .map(|(a, b)| (a.clone(), b.clone()))
            .collect();
        let cfg = TrainConfig { epochs: 50, ..small_cfg() };
        let out = train(&kg_s, &kg_t, &positives, &cfg).unwrap();
        let first = out.log.first().unwrap().total;
        let last = out.log.last().unwrap().total;
        assert!(last < first, "loss should decrease: {first} -> {last}");
    }

    #[test]
    fn empty_positives_is_error() {
        let kg = grid_kg("s", 0.0);
        assert!(train(&kg, &kg, &[], &small_cfg()).is_err());
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let kg_s = grid_kg("s", 0.0);
        let kg_t = grid_kg("t", 1.0);
        let positives = vec![("s0_0".to_string(), "t0_0".to_string())];
        let cfg = TrainConfig { epochs: 5, dropout_rate: 0.2, ..small_cfg() };
        let a = train(&kg_s, &kg_t, &positives, &cfg).unwrap();
        let b = train(&kg_s, &kg_t, &positives, &cfg).unwrap();
        for (ra, rb) in a.log.iter().zip(&b.log) {
            assert_eq!(ra.total, rb.total);
        }
        assert_eq!(a.embeddings.source, b.embeddings.source);
    }
}
