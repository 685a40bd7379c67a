//! The relational graph network: embedding lookup, duration-aware relational
//! message passing, type embeddings, a self-attention encoder, mean pooling
//! and a sigmoid head.

mod pipeline;
mod prepare;
mod train;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use pipeline::{apply_pretrained_embeddings, prepare_examples, Detector, DetectorDocument, Example, SeenEntities};
pub use prepare::{prepare, PreparedGraph};
pub use train::{predict_prepared, train, EarlyStopping, EpochLog, StopDecision, TrainOutcome};

use crate::autodiff::{ParamCheckpoint, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Relation;
use crate::rng::{mix_seed, substream};
use crate::scalar::Scalar;

/// Layer-norm epsilon inside the encoder.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Duration embedding dimension.
    pub d_d: usize,
    /// Message-passing layers.
    pub layers: usize,
    pub heads: usize,
    pub encoder_blocks: usize,
    /// Feed-forward width as a multiple of `d`.
    pub ff_mult: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Plateau scheduler: epochs without improvement before the rate is halved.
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 128,
            d_d: 16,
            layers: 2,
            heads: 4,
            encoder_blocks: 1,
            ff_mult: 2,
            dropout: 0.1,
            epochs: 100,
            patience: 10,
            batch_size: 32,
            lr: 0.005,
            lr_patience: 5,
            lr_factor: 0.5,
            min_lr: 1e-5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.d_d == 0 {
            return bad("embedding dimensions must be positive".into());
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return bad(format!("d = {} is not divisible by {} heads", self.d, self.heads));
        }
        if self.layers == 0 {
            return bad("at least one message-passing layer is required".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.ff_mult == 0 {
            return bad("batch size, epochs and feed-forward multiple must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.min_lr > 0.0) || !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad("learning-rate settings must be positive with factor in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BlockIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    c1: ParamId,
    w2: ParamId,
    c2: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct ParamIds {
    title_emb: ParamId,
    company_emb: ParamId,
    desc_w: ParamId,
    desc_b: ParamId,
    dur_w: ParamId,
    dur_b: ParamId,
    /// `[layer][relation index]`
    rel: Vec<Vec<ParamId>>,
    type_emb: ParamId,
    blocks: Vec<BlockIds>,
    head_w: ParamId,
    head_b: ParamId,
}

/// Every trainable tensor of the network plus the bookkeeping needed to
/// address them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub cfg: ModelConfig,
    pub params: ParamSet<T>,
    ids: ParamIds,
    desc_dim: usize,
}

fn uniform<T: Scalar>(rng: &mut impl Rng, shape: (usize, usize), bound: f64) -> Array2<T> {
    Array2::from_shape_simple_fn(shape, || T::of((rng.random::<f64>() * 2.0 - 1.0) * bound))
}

fn xavier<T: Scalar>(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Array2<T> {
    uniform(rng, (fan_in, fan_out), (6.0 / (fan_in + fan_out) as f64).sqrt())
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh parameters. Embedding tables have one row per vocabulary entry,
    /// row 0 being UNK. The head starts at zero so an untrained model outputs 0.5.
    pub fn new(cfg: ModelConfig, n_titles: usize, n_companies: usize, desc_dim: usize) -> Result<Self> {
        cfg.validate()?;
        if n_titles == 0 || n_companies == 0 || desc_dim == 0 {
            return Err(Error::Config("vocabularies and description dimension must be non-empty".into()));
        }
        let d = cfg.d;
        let mut rng = substream(mix_seed(cfg.seed, 0x1417), 0);
        let mut p = ParamSet::new();
        let emb_bound = (3.0 / d as f64).sqrt();
        let title_emb = p.add("title_emb", uniform(&mut rng, (n_titles, d), emb_bound));
        let company_emb = p.add("company_emb", uniform(&mut rng, (n_companies, d), emb_bound));
        let desc_w = p.add("desc_proj.w", xavier(&mut rng, desc_dim, d));
        let desc_b = p.add("desc_proj.b", Array2::zeros((1, d)));
        let dur_w = p.add("duration.w", uniform(&mut rng, (1, cfg.d_d), 1.0));
        let dur_b = p.add("duration.b", uniform(&mut rng, (1, cfg.d_d), 0.1));
        let rel = (0..cfg.layers)
            .map(|l| {
                Relation::ALL
                    .iter()
                    .map(|r| {
                        let fan_in = if r.carries_duration() { d + cfg.d_d } else { d };
                        p.add(format!("mp{l}.{}", r.name()), xavier(&mut rng, fan_in, d))
                    })
                    .collect()
            })
            .collect();
        let type_emb = p.add("type_emb", uniform(&mut rng, (3, d), 0.1));
        let ff = cfg.ff_mult * d;
        let blocks = (0..cfg.encoder_blocks)
            .map(|b| {
                let mut add = |name: &str, v: Array2<T>| p.add(format!("enc{b}.{name}"), v);
                BlockIds {
                    ln1_g: add("ln1.g", Array2::ones((1, d))),
                    ln1_b: add("ln1.b", Array2::zeros((1, d))),
                    wq: add("wq", xavier(&mut rng, d, d)),
                    wk: add("wk", xavier(&mut rng, d, d)),
                    wv: add("wv", xavier(&mut rng, d, d)),
                    wo: add("wo", xavier(&mut rng, d, d)),
                    bo: add("bo", Array2::zeros((1, d))),
                    ln2_g: add("ln2.g", Array2::ones((1, d))),
                    ln2_b: add("ln2.b", Array2::zeros((1, d))),
                    w1: add("ff.w1", xavier(&mut rng, d, ff)),
                    c1: add("ff.b1", Array2::zeros((1, ff))),
                    w2: add("ff.w2", xavier(&mut rng, ff, d)),
                    c2: add("ff.b2", Array2::zeros((1, d))),
                }
            })
            .collect();
        let head_w = p.add("head.w", Array2::zeros((d, 1)));
        let head_b = p.add("head.b", Array2::zeros((1, 1)));
        Ok(ModelParams {
            cfg,
            params: p,
            ids: ParamIds {
                title_emb,
                company_emb,
                desc_w,
                desc_b,
                dur_w,
                dur_b,
                rel,
                type_emb,
                blocks,
                head_w,
                head_b,
            },
            desc_dim,
        })
    }

    pub fn desc_dim(&self) -> usize {
        self.desc_dim
    }

    pub fn title_rows(&self) -> usize {
        self.params.value(self.ids.title_emb).nrows()
    }

    pub fn company_rows(&self) -> usize {
        self.params.value(self.ids.company_emb).nrows()
    }

    pub fn title_table(&self) -> ParamId {
        self.ids.title_emb
    }

    pub fn company_table(&self) -> ParamId {
        self.ids.company_emb
    }

    pub fn relation_weight(&self, layer: usize, relation: Relation) -> Result<ParamId> {
        self.ids
            .rel
            .get(layer)
            .map(|ws| ws[relation.index()])
            .ok_or_else(|| Error::MissingParameter(format!("mp{layer}.{}", relation.name())))
    }

    pub fn head(&self) -> (ParamId, ParamId) {
        (self.ids.head_w, self.ids.head_b)
    }

    pub fn duration_params(&self) -> (ParamId, ParamId) {
        (self.ids.dur_w, self.ids.dur_b)
    }

    pub fn description_projector(&self) -> (ParamId, ParamId) {
        (self.ids.desc_w, self.ids.desc_b)
    }

    /// Parameter ids of the attention output and feed-forward output of
    /// each block; zeroing them turns the encoder into the identity.
    pub fn encoder_output_params(&self) -> Vec<ParamId> {
        self.ids.blocks.iter().flat_map(|b| [b.wo, b.bo, b.w2, b.c2]).collect()
    }

    pub fn type_embeddings(&self) -> ParamId {
        self.ids.type_emb
    }

    /// Overwrites values from a checkpoint whose tensors must match by name and shape.
    pub fn load(&mut self, ck: &ParamCheckpoint) -> Result<()> {
        let loaded = ParamSet::<T>::from_checkpoint(ck, Some(&self.params.names()))?;
        for (id, t) in loaded.iter() {
            let slot = self.params.get_mut(id);
            if slot.value.dim() != t.value.dim() {
                return Err(Error::DimensionMismatch {
                    expected: slot.value.len(),
                    got: t.value.len(),
                    context: format!("checkpoint tensor `{}` shape {:?}", t.name, t.value.dim()),
                });
            }
            slot.value = t.value.clone();
            slot.trainable = t.trainable;
        }
        if ck.params.len() != self.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, model has {}",
                ck.params.len(),
                self.params.len()
            )));
        }
        Ok(())
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardState {
    /// `h^(0) … h^(L)`, each n×d.
    pub layers: Vec<Var>,
    /// Encoder output before pooling.
    pub encoded: Var,
    /// 1×d.
    pub pooled: Var,
    pub logit: Var,
    /// 1×1 probability of being machine-generated.
    pub prob: Var,
}

/// h^(0): table rows for titles and companies (UNK for unseen entities) and
/// projected vectors for descriptions.
pub fn init_embeddings<T: Scalar>(tape: &mut Tape<'_, T>, model: &ModelParams<T>, g: &PreparedGraph<T>) -> Result<Var> {
    let n = g.len();
    let d = model.cfg.d;
    let mut parts = Vec::with_capacity(3);
    if !g.title_pos.is_empty() {
        let rows = tape.gather_param(model.ids.title_emb, &g.title_rows)?;
        parts.push(tape.scatter_rows(rows, &g.title_pos, n)?);
    }
    if !g.company_pos.is_empty() {
        let rows = tape.gather_param(model.ids.company_emb, &g.company_rows)?;
        parts.push(tape.scatter_rows(rows, &g.company_pos, n)?);
    }
    if !g.desc_pos.is_empty() {
        if g.desc_vectors.ncols() != model.desc_dim {
            return Err(Error::DimensionMismatch {
                expected: model.desc_dim,
                got: g.desc_vectors.ncols(),
                context: "description vectors".into(),
            });
        }
        let x = tape.constant(g.desc_vectors.clone())?;
        let w = tape.param(model.ids.desc_w);
        let b = tape.param(model.ids.desc_b);
        let proj = tape.matmul(x, w)?;
        let proj = tape.add_row(proj, b)?;
        parts.push(tape.scatter_rows(proj, &g.desc_pos, n)?);
    }
    let Some(mut h) = parts.first().copied() else {
        return tape.constant(Array2::zeros((0, d)));
    };
    for &p in &parts[1..] {
        h = tape.add(h, p)?;
    }
    Ok(h)
}

/// Affine map of log-durations: one d_d row per duration.
pub fn duration_embed<T: Scalar>(tape: &mut Tape<'_, T>, model: &ModelParams<T>, durations: &[f64]) -> Result<Var> {
    if let Some(bad) = durations.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Config(format!("duration {bad} must be positive")));
    }
    let logs = Array2::from_shape_fn((durations.len(), 1), |(i, _)| T::of(durations[i].ln()));
    duration_from_logs(tape, model, logs)
}

fn duration_from_logs<T: Scalar>(tape: &mut Tape<'_, T>, model: &ModelParams<T>, logs: Array2<T>) -> Result<Var> {
    let x = tape.constant(logs)?;
    let w = tape.param(model.ids.dur_w);
    let b = tape.param(model.ids.dur_b);
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// h^(l+1)_v = ReLU( Σ_r Σ_{u ∈ N_r(v)} W_r [h_u ‖ dur(d_uv)] / |N_r(v)| ).
///
/// The duration part is present only for worked-at relations. By linearity
/// the mean over neighbours of the concatenated message equals the
/// concatenation of the neighbour means, which is what is computed.
pub fn message_passing_layer<T: Scalar>(
    tape: &mut Tape<'_, T>,
    model: &ModelParams<T>,
    g: &PreparedGraph<T>,
    h: Var,
    layer: usize,
) -> Result<Var> {
    let n = g.len();
    let mut total: Option<Var> = None;
    for block in &g.relations {
        let w = tape.param(model.relation_weight(layer, block.relation)?);
        let mut agg = tape.sparse_matmul(block.aggregate.clone(), h)?;
        if let Some(logs) = &block.mean_log_duration {
            let dur = duration_from_logs(tape, model, logs.clone())?;
            agg = tape.concat_cols(&[agg, dur])?;
        }
        let msg = tape.matmul(agg, w)?;
        let placed = tape.scatter_rows(msg, &block.dst, n)?;
        total = Some(match total {
            Some(t) => tape.add(t, placed)?,
            None => placed,
        });
    }
    let sum = match total {
        Some(t) => t,
        None => tape.constant(Array2::zeros((n, model.cfg.d)))?,
    };
    tape.relu(sum)
}

fn attention_block<T: Scalar>(
    tape: &mut Tape<'_, T>,
    model: &ModelParams<T>,
    b: &BlockIds,
    x: Var,
    train: bool,
    seed: u64,
) -> Result<Var> {
    let cfg = &model.cfg;
    let eps = T::of(LN_EPS);
    let n1 = tape.layer_norm_rows(x, eps)?;
    let g1 = tape.param(b.ln1_g);
    let b1 = tape.param(b.ln1_b);
    let n1 = tape.mul_row(n1, g1)?;
    let n1 = tape.add_row(n1, b1)?;
    let (wq, wk, wv) = (tape.param(b.wq), tape.param(b.wk), tape.param(b.wv));
    let q = tape.matmul(n1, wq)?;
    let k = tape.matmul(n1, wk)?;
    let v = tape.matmul(n1, wv)?;
    let dh = cfg.d / cfg.heads;
    let inv_sqrt = T::of(1.0 / (dh as f64).sqrt());
    let mut heads = Vec::with_capacity(cfg.heads);
    for hd in 0..cfg.heads {
        let (lo, hi) = (hd * dh, (hd + 1) * dh);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let scores = tape.matmul_t(qh, kh)?;
        let scores = tape.scale(scores, inv_sqrt)?;
        let attn = tape.softmax_rows(scores)?;
        heads.push(tape.matmul(attn, vh)?);
    }
    let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    let (wo, bo) = (tape.param(b.wo), tape.param(b.bo));
    let o = tape.matmul(cat, wo)?;
    let o = tape.add_row(o, bo)?;
    let o = tape.dropout(o, cfg.dropout, train, seed)?;
    let x2 = tape.add(x, o)?;

    let n2 = tape.layer_norm_rows(x2, eps)?;
    let g2 = tape.param(b.ln2_g);
    let b2 = tape.param(b.ln2_b);
    let n2 = tape.mul_row(n2, g2)?;
    let n2 = tape.add_row(n2, b2)?;
    let (w1, c1, w2, c2) = (tape.param(b.w1), tape.param(b.c1), tape.param(b.w2), tape.param(b.c2));
    let f = tape.matmul(n2, w1)?;
    let f = tape.add_row(f, c1)?;
    let f = tape.relu(f)?;
    let f = tape.matmul(f, w2)?;
    let f = tape.add_row(f, c2)?;
    tape.add(x2, f)
}

/// Adds type embeddings, runs the encoder, mean-pools and applies the head.
/// Returns `(encoded, pooled, logit, prob)`.
pub fn encode_and_classify<T: Scalar>(
    tape: &mut Tape<'_, T>,
    model: &ModelParams<T>,
    g: &PreparedGraph<T>,
    h: Var,
    train: bool,
    seed: u64,
) -> Result<(Var, Var, Var, Var)> {
    if g.is_empty() {
        return Err(Error::Empty(format!("subgraph `{}`", g.id)));
    }
    let types = tape.gather_param(model.ids.type_emb, &g.kinds)?;
    let mut x = tape.add(h, types)?;
    for (i, b) in model.ids.blocks.iter().enumerate() {
        x = attention_block(tape, model, b, x, train, mix_seed(seed, 100 + i as u64))?;
    }
    let pooled = tape.mean_rows(x)?;
    let w = tape.param(model.ids.head_w);
    let bias = tape.param(model.ids.head_b);
    let logit = tape.matmul(pooled, w)?;
    let logit = tape.add(logit, bias)?;
    let prob = tape.sigmoid(logit)?;
    Ok((x, pooled, logit, prob))
}

/// Full forward pass. Dropout is active only when `train` is set; `seed`
/// selects the dropout masks.
pub fn forward<T: Scalar>(
    tape: &mut Tape<'_, T>,
    model: &ModelParams<T>,
    g: &PreparedGraph<T>,
    train: bool,
    seed: u64,
) -> Result<ForwardState> {
    if g.is_empty() {
        return Err(Error::Empty(format!("subgraph `{}`", g.id)));
    }
    let mut h = init_embeddings(tape, model, g)?;
    let mut layers = vec![h];
    for l in 0..model.cfg.layers {
        let input = tape.dropout(h, model.cfg.dropout, train, mix_seed(seed, l as u64))?;
        h = message_passing_layer(tape, model, g, input, l)?;
        layers.push(h);
    }
    let (encoded, pooled, logit, prob) = encode_and_classify(tape, model, g, h, train, seed)?;
    Ok(ForwardState {
        layers,
        encoded,
        pooled,
        logit,
        prob,
    })
}

/// Mean BCE with probabilities clamped to [1e-7, 1 − 1e-7].
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: predictions.len(),
            context: "predictions vs labels".into(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("predictions".into()));
    }
    Ok(crate::autodiff::bce_value(predictions.iter().copied(), labels.iter().copied()))
}
