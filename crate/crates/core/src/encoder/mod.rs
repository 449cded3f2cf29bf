//! The knowledge-graph alignment encoder.
//!
//! Four sub-encoders produce per-layer entity representations that a gate
//! blends and a final concatenation normalizes:
//!
//! * a 1-hop GNN with self-feature modeling and symmetric degree
//!   normalization (ReLU),
//! * a multi-hop attention layer over exact-k-hop neighborhoods with
//!   separate linear maps for center and neighbor (tanh aggregation,
//!   LeakyReLU scores),
//! * a feature mixer: residual token and channel MLP blocks over the raw
//!   feature matrix (GeLU) plus an output projection,
//! * a ReLU gate that combines the three streams per layer.
//!
//! One shared parameter set encodes both graphs so their embeddings live in
//! a common space. Training minimizes a margin-based contrastive loss over
//! seed alignments plus a translational semantic loss over relation triples,
//! with Adam, on the in-repo gradient engine.

mod checkpoint;
mod loss;
mod model;
mod negatives;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{
    contrastive_loss, relation_encoding, relation_pairs, semantic_loss, total_loss, LossVars,
};
pub use model::{
    attention_weights, forward_embeddings, gate_combine, gnn_layer, mixer_forward,
    multi_hop_layer, EncoderParams, GateParams, KgTensors, LayerParams, MixerParams, ParamVars,
};
pub use negatives::sample_negatives;
pub use train::{compute_embeddings, train, EmbeddingSet, TrainLogRow, TrainOutput};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub hidden_dim: usize,
    /// Number of encoder layers (L).
    pub layers: usize,
    /// Multi-hop distance (k) for the attention encoder.
    pub k_hop: usize,
    /// Negative-sample weight in the contrastive loss.
    pub beta: f64,
    /// Semantic-loss weight in the total loss.
    pub alpha: f64,
    /// Contrastive margin: how far apart unaligned pairs should sit.
    pub margin: f64,
    pub negatives_per_pair: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            hidden_dim: 300,
            layers: 2,
            k_hop: 2,
            beta: 0.4,
            alpha: 0.05,
            margin: 1.0,
            negatives_per_pair: 10,
            dropout_rate: 0.2,
            epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.beta < 0.0 || self.alpha < 0.0 {
            return Err(Error::Config("beta and alpha must be non-negative".into()));
        }
        if self.negatives_per_pair < 1 {
            return Err(Error::Config("negatives_per_pair must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        if self.layers < 1 || self.hidden_dim < 1 || self.k_hop < 1 {
            return Err(Error::Config("layers, hidden_dim, k_hop must be at least 1".into()));
        }
        Ok(())
    }
}
