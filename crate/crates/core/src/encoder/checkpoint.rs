//! Checkpoint format: JSON with shape-annotated flat arrays per named
//! parameter, the training configuration, and the feature vocabulary.

use super::model::{EncoderParams, GateParams, LayerParams, MixerParams};
use super::TrainConfig;
use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct TensorJson {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub feature_names: Vec<String>,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    tensors: BTreeMap<String, TensorJson>,
}

impl Checkpoint {
    pub fn from_params(
        params: &EncoderParams,
        config: &TrainConfig,
        feature_names: &[String],
    ) -> Checkpoint {
        let tensors = params
            .named_tensors()
            .into_iter()
            .map(|(name, m)| {
                (name, TensorJson { shape: [m.rows, m.cols], data: m.data.clone() })
            })
            .collect();
        Checkpoint {
            config: config.clone(),
            feature_names: feature_names.to_vec(),
            feature_dim: params.feature_dim,
            hidden_dim: params.hidden_dim,
            layers: params.layers.len(),
            tensors,
        }
    }

    pub fn to_params(&self) -> Result<EncoderParams> {
        let get = |name: &str| -> Result<Matrix> {
            let t = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::Encoder(format!("checkpoint missing tensor {name}")))?;
            if t.shape[0] * t.shape[1] != t.data.len() {
                return Err(Error::Encoder(format!("checkpoint tensor {name} shape mismatch")));
            }
            Ok(Matrix::from_vec(t.shape[0], t.shape[1], t.data.clone()))
        };
        let mut layers = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            layers.push(LayerParams {
                w_self: get(&format!("layer{l}.w_self"))?,
                w_neigh: get(&format!("layer{l}.w_neigh"))?,
                b_neigh: get(&format!("layer{l}.b_neigh"))?,
                w_hop: get(&format!("layer{l}.w_hop"))?,
                b_hop: get(&format!("layer{l}.b_hop"))?,
                m_center: get(&format!("layer{l}.m_center"))?,
                m_neigh: get(&format!("layer{l}.m_neigh"))?,
            });
        }
        let mixer = MixerParams {
            ln_token_gamma: get("mixer.ln_token_gamma")?,
            ln_token_beta: get("mixer.ln_token_beta")?,
            w_token1: get("mixer.w_token1")?,
            w_token2: get("mixer.w_token2")?,
            ln_channel_gamma: get("mixer.ln_channel_gamma")?,
            ln_channel_beta: get("mixer.ln_channel_beta")?,
            w_channel1: get("mixer.w_channel1")?,
            w_channel2: get("mixer.w_channel2")?,
            w_out: get("mixer.w_out")?,
            b_out: get("mixer.b_out")?,
        };
        let gate =
            GateParams { w1: get("gate.w1")?, w2: get("gate.w2")?, b: get("gate.b")? };
        Ok(EncoderParams {
            feature_dim: self.feature_dim,
            hidden_dim: self.hidden_dim,
            layers,
            mixer,
            gate,
        })
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &EncoderParams,
    config: &TrainConfig,
    feature_names: &[String],
) -> Result<()> {
    let ckpt = Checkpoint::from_params(params, config, feature_names);
    std::fs::write(path, serde_json::to_string_pretty(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
