//! Parameter tensors and the forward pass of the alignment encoder.

use super::TrainConfig;
use crate::autodiff::{Graph, Matrix, Var};
use crate::error::{Error, Result};
use crate::kgraph::KnowledgeGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::rc::Rc;

const LEAKY_SLOPE: f64 = 0.2;

/// Per-layer weights: the 1-hop GNN (self map, neighbor map, neighbor bias),
/// the multi-hop layer (shared hop map, hop bias), and the attention score
/// maps for center and neighbor. All matrices right-multiply row vectors.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub w_self: Matrix,
    pub w_neigh: Matrix,
    pub b_neigh: Matrix,
    pub w_hop: Matrix,
    pub b_hop: Matrix,
    pub m_center: Matrix,
    pub m_neigh: Matrix,
}

/// Feature-mixer weights: residual token and channel MLP blocks with their
/// layer norms, plus the output projection to the hidden dimension.
#[derive(Debug, Clone)]
pub struct MixerParams {
    pub ln_token_gamma: Matrix,
    pub ln_token_beta: Matrix,
    pub w_token1: Matrix,
    pub w_token2: Matrix,
    pub ln_channel_gamma: Matrix,
    pub ln_channel_beta: Matrix,
    pub w_channel1: Matrix,
    pub w_channel2: Matrix,
    pub w_out: Matrix,
    pub b_out: Matrix,
}

/// Gate weights shared across layers.
#[derive(Debug, Clone)]
pub struct GateParams {
    pub w1: Matrix,
    pub w2: Matrix,
    pub b: Matrix,
}

/// All learnable parameters. Layer 1 maps the feature dimension to the
/// hidden dimension; later layers are hidden-to-hidden. The mixer and gate
/// are shared across layers, as is the whole set across the two graphs.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub layers: Vec<LayerParams>,
    pub mixer: MixerParams,
    pub gate: GateParams,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect())
}

impl EncoderParams {
    pub fn init(feature_dim: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let h = cfg.hidden_dim;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let d_in = if l == 0 { feature_dim } else { h };
            layers.push(LayerParams {
                w_self: glorot(rng, d_in, h),
                w_neigh: glorot(rng, d_in, h),
                b_neigh: Matrix::zeros(1, h),
                w_hop: glorot(rng, d_in, h),
                b_hop: Matrix::zeros(1, h),
                m_center: glorot(rng, d_in, d_in),
                m_neigh: glorot(rng, d_in, d_in),
            });
        }
        let d = feature_dim;
        let mixer = MixerParams {
            ln_token_gamma: Matrix::from_vec(1, d, vec![1.0; d]),
            ln_token_beta: Matrix::zeros(1, d),
            w_token1: glorot(rng, d, d),
            w_token2: glorot(rng, d, d),
            ln_channel_gamma: Matrix::from_vec(1, d, vec![1.0; d]),
            ln_channel_beta: Matrix::zeros(1, d),
            w_channel1: glorot(rng, d, d),
            w_channel2: glorot(rng, d, d),
            w_out: glorot(rng, d, h),
            b_out: Matrix::zeros(1, h),
        };
        let gate = GateParams { w1: glorot(rng, h, h), w2: glorot(rng, h, h), b: Matrix::zeros(1, h) };
        EncoderParams { feature_dim, hidden_dim: h, layers, mixer, gate }
    }

    pub fn seeded(feature_dim: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        EncoderParams::init(feature_dim, cfg, &mut rng)
    }

    /// Named views of every tensor, in a stable order. The names are the
    /// checkpoint keys and the gradient/optimizer slot keys.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = Vec::new();
        for (l, lp) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_self"), &lp.w_self));
            out.push((format!("layer{l}.w_neigh"), &lp.w_neigh));
            out.push((format!("layer{l}.b_neigh"), &lp.b_neigh));
            out.push((format!("layer{l}.w_hop"), &lp.w_hop));
            out.push((format!("layer{l}.b_hop"), &lp.b_hop));
            out.push((format!("layer{l}.m_center"), &lp.m_center));
            out.push((format!("layer{l}.m_neigh"), &lp.m_neigh));
        }
        let m = &self.mixer;
        out.push(("mixer.ln_token_gamma".into(), &m.ln_token_gamma));
        out.push(("mixer.ln_token_beta".into(), &m.ln_token_beta));
        out.push(("mixer.w_token1".into(), &m.w_token1));
        out.push(("mixer.w_token2".into(), &m.w_token2));
        out.push(("mixer.ln_channel_gamma".into(), &m.ln_channel_gamma));
        out.push(("mixer.ln_channel_beta".into(), &m.ln_channel_beta));
        out.push(("mixer.w_channel1".into(), &m.w_channel1));
        out.push(("mixer.w_channel2".into(), &m.w_channel2));
        out.push(("mixer.w_out".into(), &m.w_out));
        out.push(("mixer.b_out".into(), &m.b_out));
        out.push(("gate.w1".into(), &self.gate.w1));
        out.push(("gate.w2".into(), &self.gate.w2));
        out.push(("gate.b".into(), &self.gate.b));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = Vec::new();
        for (l, lp) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.w_self"), &mut lp.w_self));
            out.push((format!("layer{l}.w_neigh"), &mut lp.w_neigh));
            out.push((format!("layer{l}.b_neigh"), &mut lp.b_neigh));
            out.push((format!("layer{l}.w_hop"), &mut lp.w_hop));
            out.push((format!("layer{l}.b_hop"), &mut lp.b_hop));
            out.push((format!("layer{l}.m_center"), &mut lp.m_center));
            out.push((format!("layer{l}.m_neigh"), &mut lp.m_neigh));
        }
        let m = &mut self.mixer;
        out.push(("mixer.ln_token_gamma".into(), &mut m.ln_token_gamma));
        out.push(("mixer.ln_token_beta".into(), &mut m.ln_token_beta));
        out.push(("mixer.w_token1".into(), &mut m.w_token1));
        out.push(("mixer.w_token2".into(), &mut m.w_token2));
        out.push(("mixer.ln_channel_gamma".into(), &mut m.ln_channel_gamma));
        out.push(("mixer.ln_channel_beta".into(), &mut m.ln_channel_beta));
        out.push(("mixer.w_channel1".into(), &mut m.w_channel1));
        out.push(("mixer.w_channel2".into(), &mut m.w_channel2));
        out.push(("mixer.w_out".into(), &mut m.w_out));
        out.push(("mixer.b_out".into(), &mut m.b_out));
        out.push(("gate.w1".into(), &mut self.gate.w1));
        out.push(("gate.w2".into(), &mut self.gate.w2));
        out.push(("gate.b".into(), &mut self.gate.b));
        out
    }
}

/// Parameter tensors registered on a tape, mirroring [`EncoderParams`].
pub struct ParamVars {
    pub all: Vec<Var>,
    pub layers: Vec<LayerVars>,
    pub mixer: MixerVars,
    pub gate: GateVars,
}

pub struct LayerVars {
    pub w_self: Var,
    pub w_neigh: Var,
    pub b_neigh: Var,
    pub w_hop: Var,
    pub b_hop: Var,
    pub m_center: Var,
    pub m_neigh: Var,
}

pub struct MixerVars {
    pub ln_token_gamma: Var,
    pub ln_token_beta: Var,
    pub w_token1: Var,
    pub w_token2: Var,
    pub ln_channel_gamma: Var,
    pub ln_channel_beta: Var,
    pub w_channel1: Var,
    pub w_channel2: Var,
    pub w_out: Var,
    pub b_out: Var,
}

pub struct GateVars {
    pub w1: Var,
    pub w2: Var,
    pub b: Var,
}

impl ParamVars {
    /// Registers every tensor as a tape param in [`EncoderParams::named_tensors`]
    /// order, so gradient slots line up with optimizer slots.
    pub fn register(g: &mut Graph, params: &EncoderParams) -> ParamVars {
        let mut all = Vec::new();
        let mut layers = Vec::new();
        for lp in &params.layers {
            let v = LayerVars {
                w_self: g.param(lp.w_self.clone()),
                w_neigh: g.param(lp.w_neigh.clone()),
                b_neigh: g.param(lp.b_neigh.clone()),
                w_hop: g.param(lp.w_hop.clone()),
                b_hop: g.param(lp.b_hop.clone()),
                m_center: g.param(lp.m_center.clone()),
                m_neigh: g.param(lp.m_neigh.clone()),
            };
            all.extend([v.w_self, v.w_neigh, v.b_neigh, v.w_hop, v.b_hop, v.m_center, v.m_neigh]);
            layers.push(v);
        }
        let m = &params.mixer;
        let mixer = MixerVars {
            ln_token_gamma: g.param(m.ln_token_gamma.clone()),
            ln_token_beta: g.param(m.ln_token_beta.clone()),
            w_token1: g.param(m.w_token1.clone()),
            w_token2: g.param(m.w_token2.clone()),
            ln_channel_gamma: g.param(m.ln_channel_gamma.clone()),
            ln_channel_beta: g.param(m.ln_channel_beta.clone()),
            w_channel1: g.param(m.w_channel1.clone()),
            w_channel2: g.param(m.w_channel2.clone()),
            w_out: g.param(m.w_out.clone()),
            b_out: g.param(m.b_out.clone()),
        };
        all.extend([
            mixer.ln_token_gamma,
            mixer.ln_token_beta,
            mixer.w_token1,
            mixer.w_token2,
            mixer.ln_channel_gamma,
            mixer.ln_channel_beta,
            mixer.w_channel1,
            mixer.w_channel2,
            mixer.w_out,
            mixer.b_out,
        ]);
        let gate = GateVars {
            w1: g.param(params.gate.w1.clone()),
            w2: g.param(params.gate.w2.clone()),
            b: g.param(params.gate.b.clone()),
        };
        all.extend([gate.w1, gate.w2, gate.b]);
        ParamVars { all, layers, mixer, gate }
    }
}

/// Constant per-graph tensors derived once from a knowledge graph: the raw
/// feature matrix, degree-normalized 1-hop aggregation matrix, neighbor
/// counts, and the exact-k-hop mask with its normalization.
#[derive(Debug, Clone)]
pub struct KgTensors {
    pub n: usize,
    pub features: Matrix,
    /// S[e, e'] = 1/sqrt(p_e p_e') for e' in N(e), else 0; p = |N| + 1.
    pub adj_norm: Matrix,
    /// Column of |N(e)| values (the neighbor bias is added once per
    /// neighbor, so isolated entities receive none).
    pub deg1: Matrix,
    /// 0/1 mask of exact-k-hop neighborhoods.
    pub khop_mask: Rc<Matrix>,
    /// 1/sqrt(p^k_e p^k_e') on the mask, else 0.
    pub khop_norm: Rc<Matrix>,
    pub degk: Matrix,
}

impl KgTensors {
    pub fn build(kg: &KnowledgeGraph, k_hop: usize) -> Result<KgTensors> {
        let n = kg.len();
        if n == 0 {
            return Err(Error::Encoder("empty knowledge graph".into()));
        }
        let d = kg.feature_names.len();
        let mut features = Matrix::zeros(n, d);
        for (r, row) in kg.features.iter().enumerate() {
            features.data[r * d..(r + 1) * d].copy_from_slice(row);
        }

        let adj = kg.adjacency_rows();
        let p: Vec<f64> = adj.iter().map(|ns| ns.len() as f64 + 1.0).collect();
        let mut adj_norm = Matrix::zeros(n, n);
        let mut deg1 = Matrix::zeros(n, 1);
        for (e, ns) in adj.iter().enumerate() {
            deg1.set(e, 0, ns.len() as f64);
            for &e2 in ns {
                adj_norm.set(e, e2, 1.0 / (p[e] * p[e2]).sqrt());
            }
        }

        let khop = kg.k_hop_rows(k_hop);
        let pk: Vec<f64> = khop.iter().map(|ns| ns.len() as f64 + 1.0).collect();
        let mut mask = Matrix::zeros(n, n);
        let mut norm = Matrix::zeros(n, n);
        let mut degk = Matrix::zeros(n, 1);
        for (e, ns) in khop.iter().enumerate() {
            degk.set(e, 0, ns.len() as f64);
            for &e2 in ns {
                mask.set(e, e2, 1.0);
                norm.set(e, e2, 1.0 / (pk[e] * pk[e2]).sqrt());
            }
        }

        Ok(KgTensors {
            n,
            features,
            adj_norm,
            deg1,
            khop_mask: Rc::new(mask),
            khop_norm: Rc::new(norm),
            degk,
        })
    }
}

/// One 1-hop GNN layer:
/// relu(h W_self + S (h W_neigh) + |N| b_neigh), then dropout in train mode.
pub fn gnn_layer(
    g: &mut Graph,
    h: Var,
    adj_norm: Var,
    deg1: Var,
    w_self: Var,
    w_neigh: Var,
    b_neigh: Var,
    dropout: Option<&Rc<Matrix>>,
) -> Result<Var> {
    let self_term = g.matmul(h, w_self)?;
    let neigh = g.matmul(h, w_neigh)?;
    let agg = g.matmul(adj_norm, neigh)?;
    let bias = g.matmul(deg1, b_neigh)?;
    let s = g.add(self_term, agg)?;
    let s = g.add(s, bias)?;
    let act = g.relu(s)?;
    match dropout {
        Some(mask) => g.mul_const(act, mask.clone()),
        None => Ok(act),
    }
}

/// Attention weights over exact-k-hop neighborhoods:
/// softmax over e' of leaky_relu((psi_e M_center) . (psi_e' M_neigh)).
pub fn attention_weights(
    g: &mut Graph,
    psi: Var,
    m_center: Var,
    m_neigh: Var,
    khop_mask: Rc<Matrix>,
) -> Result<Var> {
    let qc = g.matmul(psi, m_center)?;
    let qn = g.matmul(psi, m_neigh)?;
    let scores = g.matmul_nt_op(qc, qn)?;
    let scores = g.leaky_relu(scores, LEAKY_SLOPE)?;
    g.masked_softmax_rows(scores, khop_mask)
}

/// One multi-hop layer:
/// tanh(psi W_hop + (alpha ⊙ norm) psi W_hop + |N_k| b_hop), dropout in train.
#[allow(clippy::too_many_arguments)]
pub fn multi_hop_layer(
    g: &mut Graph,
    psi: Var,
    alpha: Var,
    khop_norm: Rc<Matrix>,
    degk: Var,
    w_hop: Var,
    b_hop: Var,
    dropout: Option<&Rc<Matrix>>,
) -> Result<Var> {
    let weighted = g.mul_const(alpha, khop_norm)?;
    let gathered = g.matmul(weighted, psi)?;
    let agg = g.matmul(gathered, w_hop)?;
    let self_term = g.matmul(psi, w_hop)?;
    let bias = g.matmul(degk, b_hop)?;
    let s = g.add(self_term, agg)?;
    let s = g.add(s, bias)?;
    g.tanh(s)
        .and_then(|act| match dropout {
            Some(mask) => g.mul_const(act, mask.clone()),
            None => Ok(act),
        })
}

/// Feature mixer: token block, channel block (both residual, GeLU), then the
/// output projection to the hidden dimension.
pub fn mixer_forward(g: &mut Graph, f: Var, mv: &MixerVars, ones_n1: Var) -> Result<Var> {
    let ln1 = g.layer_norm(f, mv.ln_token_gamma, mv.ln_token_beta)?;
    let t = g.matmul(ln1, mv.w_token1)?;
    let t = g.gelu(t)?;
    let t = g.matmul(t, mv.w_token2)?;
    let h_token = g.add(f, t)?;

    let ln2 = g.layer_norm(h_token, mv.ln_channel_gamma, mv.ln_channel_beta)?;
    let c = g.matmul(ln2, mv.w_channel1)?;
    let c = g.gelu(c)?;
    let c = g.matmul(c, mv.w_channel2)?;
    let h_channel = g.add(h_token, c)?;

    let out = g.matmul(h_channel, mv.w_out)?;
    let bias = g.matmul(ones_n1, mv.b_out)?;
    g.add(out, bias)
}

/// Gate combination:
/// zeta = relu(psi W1 + phi W2 + b), eta = relu(h W1 + phi W2 + b),
/// out = zeta ⊙ h + eta ⊙ psi + (1 - (zeta + eta)/2) ⊙ phi.
pub fn gate_combine(
    g: &mut Graph,
    h: Var,
    psi: Var,
    phi: Var,
    gate_w1: Var,
    gate_w2: Var,
    gate_b: Var,
    ones_n1: Var,
) -> Result<Var> {
    let phi_term = g.matmul(phi, gate_w2)?;
    let bias = g.matmul(ones_n1, gate_b)?;
    let zeta = {
        let a = g.matmul(psi, gate_w1)?;
        let s = g.add(a, phi_term)?;
        let s = g.add(s, bias)?;
        g.relu(s)?
    };
    let eta = {
        let a = g.matmul(h, gate_w1)?;
        let s = g.add(a, phi_term)?;
        let s = g.add(s, bias)?;
        g.relu(s)?
    };
    let h_part = g.mul(zeta, h)?;
    let psi_part = g.mul(eta, psi)?;
    let gate_sum = g.add(zeta, eta)?;
    let phi_coef = g.affine(gate_sum, -0.5, 1.0)?;
    let phi_part = g.mul(phi_coef, phi)?;
    let s = g.add(h_part, psi_part)?;
    g.add(s, phi_part)
}

/// Full forward pass over one graph: returns the final embedding matrix
/// (concatenation of unit-normalized per-layer gate outputs, n x (L * hidden)).
pub fn forward_embeddings(
    g: &mut Graph,
    pv: &ParamVars,
    kt: &KgTensors,
    dropout_masks: Option<&[Rc<Matrix>]>,
) -> Result<Var> {
    let f = g.constant(kt.features.clone());
    let adj = g.constant(kt.adj_norm.clone());
    let deg1 = g.constant(kt.deg1.clone());
    let degk = g.constant(kt.degk.clone());
    let ones = g.constant(Matrix::from_vec(kt.n, 1, vec![1.0; kt.n]));

    let phi = mixer_forward(g, f, &pv.mixer, ones)?;

    let mut h = f;
    let mut psi = f;
    let mut blocks: Vec<Var> = Vec::with_capacity(pv.layers.len());
    for (l, lv) in pv.layers.iter().enumerate() {
        let (mask_h, mask_psi) = match dropout_masks {
            Some(masks) => (Some(&masks[2 * l]), Some(&masks[2 * l + 1])),
            None => (None, None),
        };
        let h_new = gnn_layer(g, h, adj, deg1, lv.w_self, lv.w_neigh, lv.b_neigh, mask_h)?;
        let alpha = attention_weights(g, psi, lv.m_center, lv.m_neigh, kt.khop_mask.clone())?;
        let psi_new = multi_hop_layer(
            g,
            psi,
            alpha,
            kt.khop_norm.clone(),
            degk,
            lv.w_hop,
            lv.b_hop,
            mask_psi,
        )?;
        let ups = gate_combine(g, h_new, psi_new, phi, pv.gate.w1, pv.gate.w2, pv.gate.b, ones)?;
        blocks.push(g.normalize_rows(ups)?);
        h = h_new;
        psi = psi_new;
    }

    let mut out = blocks[0];
    for b in &blocks[1..] {
        out = g.concat_cols(out, *b)?;
    }
    Ok(out)
}
