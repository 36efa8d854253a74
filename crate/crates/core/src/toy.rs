//! A small pointer-attention model for attribute-free spatial grounding.
//!
//! The input sequence is one relation token followed by one token per
//! scene object (ordered by `object_id`). Object tokens carry their
//! category embedding, plus a learned "anchor" marker when the query names
//! them as an anchor. `L` residual layers of multi-head attention run over
//! the sequence, with logits taken from [`crate::igre`]; the readout scores
//! every object token against the final state of the relation token.
//!
//! Gradients are derived by hand. The 3-D extension of the logits is a
//! constant for a given scene (it depends on positions only), so parameter
//! gradients reach the attention only through the base query/key portion.
//!
//! All parameters live in one flat `Vec<f64>` laid out block by block; the
//! same layout serves as the gradient, the checkpoint payload and the unit
//! of finite-difference checking.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::igre::{
    attention_logits_qk, lang_rope, rotate_pairs, AttentionConfig, ExtensionEncoding, MaskKind,
    TokenRole,
};
use crate::quaternion::FrequencySpec;
use crate::scenegen::{
    generate_record, query_delta, GenConfig, Relation, Scene, SceneRecord, SpatialQuery,
};
use crate::seeds::{derive_seed, rng_for};

/// Vocabulary index of the anchor marker, after the eight relations.
pub const ANCHOR_TOKEN: usize = 8;
/// Relations plus the anchor marker.
pub const QUERY_VOCAB: usize = 9;
/// Training aborts once the batch loss exceeds this.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalMode {
    /// Positions never enter the computation.
    None,
    /// `(x, y, z)` added to the first three components of object embeddings.
    RawCoordsAdd,
    /// Gated extension rotated independently per axis.
    PerAxis,
    /// Gated extension rotated by the quaternion rotor.
    QuatropeIgre,
}

impl PositionalMode {
    pub const ALL: [PositionalMode; 4] = [
        PositionalMode::None,
        PositionalMode::RawCoordsAdd,
        PositionalMode::PerAxis,
        PositionalMode::QuatropeIgre,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PositionalMode::None => "none",
            PositionalMode::RawCoordsAdd => "raw_coords_add",
            PositionalMode::PerAxis => "per_axis",
            PositionalMode::QuatropeIgre => "quatrope_igre",
        }
    }
}

impl std::str::FromStr for PositionalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown positional mode {s:?}")))
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    /// Extension width per head in the two gated modes.
    pub ext_dim: usize,
    pub frequency: f64,
    pub lang_rope_base: f64,
    pub base_vector: [f64; 3],
    pub max_objects: usize,
    pub n_categories: u32,
    /// Half-width of the uniform initialisation, in units of `1/sqrt(d)`.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            heads: 2,
            layers: 2,
            ext_dim: 9,
            frequency: FrequencySpec::DEFAULT,
            lang_rope_base: AttentionConfig::DEFAULT_LANG_ROPE_BASE,
            base_vector: AttentionConfig::DEFAULT_BASE_VECTOR,
            max_objects: 16,
            n_categories: 8,
            init_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.d_model < 3 {
            return Err(Error::Config("d_model must be at least 3".into()));
        }
        if self.max_objects == 0 || self.n_categories == 0 {
            return Err(Error::Config(
                "max_objects and n_categories must be positive".into(),
            ));
        }
        self.attention(PositionalMode::QuatropeIgre)?;
        self.attention(PositionalMode::PerAxis)?;
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads.max(1)
    }

    /// Per-head attention settings for `mode`.
    pub fn attention(&self, mode: PositionalMode) -> Result<AttentionConfig> {
        let ext = match mode {
            PositionalMode::PerAxis | PositionalMode::QuatropeIgre => self.ext_dim,
            PositionalMode::None | PositionalMode::RawCoordsAdd => 0,
        };
        let mut cfg = AttentionConfig::new(self.head_dim(), ext)?
            .with_frequency(FrequencySpec::uniform(self.frequency)?);
        cfg.lang_rope_base = self.lang_rope_base;
        cfg.base_vector = self.base_vector;
        if mode == PositionalMode::PerAxis {
            cfg = cfg.with_extension(ExtensionEncoding::PerAxis);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Training hyper-parameters. The optimiser is plain SGD with a fixed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub mode: PositionalMode,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            learning_rate: 0.01,
            steps: 3000,
            batch_size: 16,
            mode: PositionalMode::QuatropeIgre,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Sizes that determine the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub n_categories: usize,
    pub vocab: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
}

impl ParamShape {
    pub fn of(cfg: &ModelConfig) -> Self {
        Self {
            n_categories: cfg.n_categories as usize,
            vocab: QUERY_VOCAB,
            d_model: cfg.d_model,
            heads: cfg.heads,
            layers: cfg.layers,
        }
    }

    fn square(&self) -> usize {
        self.d_model * self.d_model
    }

    pub fn len(&self) -> usize {
        (self.n_categories + self.vocab) * self.d_model + (4 * self.layers + 1) * self.square()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn category_embedding(&self) -> Range<usize> {
        0..self.n_categories * self.d_model
    }

    pub fn query_embedding(&self) -> Range<usize> {
        let start = self.category_embedding().end;
        start..start + self.vocab * self.d_model
    }

    /// `which`: 0 = W_q, 1 = W_k, 2 = W_v, 3 = W_o.
    pub fn layer_matrix(&self, layer: usize, which: usize) -> Range<usize> {
        let start = self.query_embedding().end + (4 * layer + which) * self.square();
        start..start + self.square()
    }

    pub fn readout(&self) -> Range<usize> {
        let start = self.query_embedding().end + 4 * self.layers * self.square();
        start..start + self.square()
    }

    /// Named blocks in storage order.
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut out = vec![
            ("category_embedding".to_string(), self.category_embedding()),
            ("query_embedding".to_string(), self.query_embedding()),
        ];
        for l in 0..self.layers {
            for (w, name) in ["w_q", "w_k", "w_v", "w_o"].iter().enumerate() {
                out.push((format!("layer{l}.{name}"), self.layer_matrix(l, w)));
            }
        }
        out.push(("readout".to_string(), self.readout()));
        out
    }
}

/// Model parameters, or a gradient with the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelParams {
    pub shape: ParamShape,
    pub data: Vec<f64>,
}

impl ToyModelParams {
    pub fn zeros(shape: ParamShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Uniform initialisation, deterministic in `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let shape = ParamShape::of(cfg);
        let mut p = Self::zeros(shape);
        let mut rng = rng_for(seed, "toy/init");
        let emb = cfg.init_scale;
        let mat = cfg.init_scale * (3.0 / cfg.d_model as f64).sqrt();
        for (name, range) in shape.blocks() {
            let half = if name.ends_with("embedding") {
                emb
            } else {
                mat
            };
            for x in &mut p.data[range] {
                *x = rng.gen_range(-half..=half);
            }
        }
        p
    }

    pub fn block(&self, range: Range<usize>) -> &[f64] {
        &self.data[range]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn add_scaled(&mut self, other: &ToyModelParams, s: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }
}

/// What a token's embedding was assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TokenSource {
    Relation(usize),
    Object { category: u32, anchor: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyToken {
    pub embedding: Vec<f64>,
    pub role: TokenRole,
    pub seq_index: usize,
    pub source: TokenSource,
}

/// Number of non-object tokens at the head of every sequence.
pub const RELATION_TOKENS: usize = 1;

/// Token sequence for `query` over `scene`: the relation token, then one
/// object token per object in `object_id` order.
pub fn encode_scene(
    scene: &Scene,
    query: &SpatialQuery,
    params: &ToyModelParams,
    cfg: &TrainConfig,
) -> Result<Vec<ToyToken>> {
    let m = &cfg.model;
    if scene.len() > m.max_objects {
        return Err(Error::Config(format!(
            "scene has {} objects, model allows {}",
            scene.len(),
            m.max_objects
        )));
    }
    let d = params.shape.d_model;
    let cat = params.block(params.shape.category_embedding());
    let voc = params.block(params.shape.query_embedding());
    let rel = query.relation.index();
    let mut tokens = vec![ToyToken {
        embedding: voc[rel * d..(rel + 1) * d].to_vec(),
        role: TokenRole::NonObject,
        seq_index: 0,
        source: TokenSource::Relation(rel),
    }];
    for a in &query.anchor_ids {
        scene
            .object(*a)
            .ok_or(Error::Config(format!("anchor {a} not in scene")))?;
    }
    let mut objects: Vec<_> = scene.objects.iter().collect();
    objects.sort_by_key(|o| o.object_id);
    for o in objects {
        let c = o.category as usize;
        if c >= params.shape.n_categories {
            return Err(Error::UnknownCategory(o.category));
        }
        let anchor = query.anchor_ids.contains(&o.object_id);
        let mut e = cat[c * d..(c + 1) * d].to_vec();
        if anchor {
            for (x, y) in e
                .iter_mut()
                .zip(&voc[ANCHOR_TOKEN * d..(ANCHOR_TOKEN + 1) * d])
            {
                *x += y;
            }
        }
        if cfg.mode == PositionalMode::RawCoordsAdd {
            for (x, p) in e.iter_mut().zip(o.center.to_array()) {
                *x += p;
            }
        }
        tokens.push(ToyToken {
            embedding: e,
            role: TokenRole::Object {
                position: o.center,
                object_id: o.object_id,
            },
            seq_index: tokens.len(),
            source: TokenSource::Object {
                category: o.category,
                anchor,
            },
        });
    }
    Ok(tokens)
}

fn matvec(w: &[f64], x: &[f64], d: usize) -> Vec<f64> {
    (0..d)
        .map(|r| {
            let row = &w[r * d..(r + 1) * d];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            acc
        })
        .collect()
}

/// `out += W^T y`.
fn matvec_t_acc(w: &[f64], y: &[f64], out: &mut [f64], d: usize) {
    for (r, &yr) in y.iter().enumerate() {
        let row = &w[r * d..(r + 1) * d];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `G += y x^T`.
fn outer_acc(g: &mut [f64], y: &[f64], x: &[f64], d: usize) {
    for (r, &yr) in y.iter().enumerate() {
        let row = &mut g[r * d..(r + 1) * d];
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += yr * xv;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

struct LayerCache {
    input: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// `[head][token]`, after sequence rotary embedding.
    q_rot: Vec<Vec<Vec<f64>>>,
    k_rot: Vec<Vec<Vec<f64>>>,
    /// `[head]`, row-major `T x T`.
    attn: Vec<Vec<f64>>,
    mixed: Vec<Vec<f64>>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    states: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn check_finite(v: &[Vec<f64>], stage: &'static str, layer: usize) -> Result<()> {
    if v.iter().flatten().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFault { stage, layer })
    }
}

fn forward_cached(
    tokens: &[ToyToken],
    params: &ToyModelParams,
    cfg: &TrainConfig,
) -> Result<ForwardCache> {
    let shape = params.shape;
    let d = shape.d_model;
    let dh = d / shape.heads;
    let att = cfg.model.attention(cfg.mode)?;
    let roles: Vec<TokenRole> = tokens.iter().map(|t| t.role).collect();
    let seq: Vec<usize> = tokens.iter().map(|t| t.seq_index).collect();
    let mut x: Vec<Vec<f64>> = tokens.iter().map(|t| t.embedding.clone()).collect();
    check_finite(&x, "embedding", 0)?;
    let mut layers = Vec::with_capacity(shape.layers);
    for l in 0..shape.layers {
        let w = |which| params.block(shape.layer_matrix(l, which));
        let q: Vec<Vec<f64>> = x.iter().map(|xt| matvec(w(0), xt, d)).collect();
        let k: Vec<Vec<f64>> = x.iter().map(|xt| matvec(w(1), xt, d)).collect();
        let v: Vec<Vec<f64>> = x.iter().map(|xt| matvec(w(2), xt, d)).collect();
        let t = x.len();
        let mut mixed = vec![vec![0.0; d]; t];
        let mut q_rot = Vec::with_capacity(shape.heads);
        let mut k_rot = Vec::with_capacity(shape.heads);
        let mut attn = Vec::with_capacity(shape.heads);
        for h in 0..shape.heads {
            let span = h * dh..(h + 1) * dh;
            let qh: Vec<Vec<f64>> = q.iter().map(|r| r[span.clone()].to_vec()).collect();
            let kh: Vec<Vec<f64>> = k.iter().map(|r| r[span.clone()].to_vec()).collect();
            let scores = attention_logits_qk(&qh, &kh, &roles, &seq, &att, MaskKind::Full)?;
            let mut a = Vec::with_capacity(t * t);
            for i in 0..t {
                a.extend(softmax(scores.row(i)));
            }
            for i in 0..t {
                let out = &mut mixed[i][span.clone()];
                for j in 0..t {
                    let aij = a[i * t + j];
                    for (o, vj) in out.iter_mut().zip(&v[j][span.clone()]) {
                        *o += aij * vj;
                    }
                }
            }
            q_rot.push(
                qh.iter()
                    .zip(&seq)
                    .map(|(r, &s)| lang_rope(r, s, att.lang_rope_base))
                    .collect::<Result<Vec<_>>>()?,
            );
            k_rot.push(
                kh.iter()
                    .zip(&seq)
                    .map(|(r, &s)| lang_rope(r, s, att.lang_rope_base))
                    .collect::<Result<Vec<_>>>()?,
            );
            attn.push(a);
        }
        check_finite(&mixed, "attention", l)?;
        let next: Vec<Vec<f64>> = x
            .iter()
            .zip(&mixed)
            .map(|(xt, mt)| {
                let o = matvec(w(3), mt, d);
                xt.iter().zip(o).map(|(a, b)| a + b).collect()
            })
            .collect();
        check_finite(&next, "residual", l)?;
        layers.push(LayerCache {
            input: std::mem::replace(&mut x, next),
            v,
            q_rot,
            k_rot,
            attn,
            mixed,
        });
    }
    let wr = params.block(shape.readout());
    let pooled = matvec(wr, &x[0], d);
    let logits: Vec<f64> = x[RELATION_TOKENS..]
        .iter()
        .map(|h| dot(h, &pooled))
        .collect();
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFault {
            stage: "readout",
            layer: shape.layers,
        });
    }
    Ok(ForwardCache {
        layers,
        states: x,
        logits,
    })
}

/// One selection logit per object token, in sequence order.
pub fn forward(
    tokens: &[ToyToken],
    params: &ToyModelParams,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    Ok(forward_cached(tokens, params, cfg)?.logits)
}

/// Attention weights of every layer and head (`[layer][head]`, row-major).
pub fn attention_weights(
    tokens: &[ToyToken],
    params: &ToyModelParams,
    cfg: &TrainConfig,
) -> Result<Vec<Vec<Vec<f64>>>> {
    Ok(forward_cached(tokens, params, cfg)?
        .layers
        .into_iter()
        .map(|l| l.attn)
        .collect())
}

pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

/// Cross-entropy loss and its gradient with respect to every parameter.
///
/// `target` indexes the object tokens (0 = first object token).
pub fn loss_and_grad(
    tokens: &[ToyToken],
    target: usize,
    params: &ToyModelParams,
    cfg: &TrainConfig,
) -> Result<(f64, ToyModelParams)> {
    let n_obj = tokens.len() - RELATION_TOKENS;
    if target >= n_obj {
        return Err(Error::Config(format!(
            "target {target} out of {n_obj} objects"
        )));
    }
    let cache = forward_cached(tokens, params, cfg)?;
    let shape = params.shape;
    let d = shape.d_model;
    let dh = d / shape.heads;
    let t = tokens.len();
    let att = cfg.model.attention(cfg.mode)?;
    let scale = att.scale();
    let loss = cross_entropy(&cache.logits, target);
    let mut grad = ToyModelParams::zeros(shape);

    // Readout: z_j = h_j . (W_r h_0).
    let mut dz = softmax(&cache.logits);
    dz[target] -= 1.0;
    let wr = params.block(shape.readout());
    let h0 = &cache.states[0];
    let pooled = matvec(wr, h0, d);
    let mut dx = vec![vec![0.0; d]; t];
    let mut dpooled = vec![0.0; d];
    for (j, &g) in dz.iter().enumerate() {
        let h = &cache.states[RELATION_TOKENS + j];
        for c in 0..d {
            dx[RELATION_TOKENS + j][c] += g * pooled[c];
            dpooled[c] += g * h[c];
        }
    }
    outer_acc(&mut grad.data[shape.readout()], &dpooled, h0, d);
    let mut dh0 = vec![0.0; d];
    matvec_t_acc(wr, &dpooled, &mut dh0, d);
    for (a, b) in dx[0].iter_mut().zip(dh0) {
        *a += b;
    }

    for l in (0..shape.layers).rev() {
        let lc = &cache.layers[l];
        let w = |which| params.block(shape.layer_matrix(l, which));
        // Residual: y = x + W_o m.
        let mut dmixed = vec![vec![0.0; d]; t];
        for i in 0..t {
            outer_acc(
                &mut grad.data[shape.layer_matrix(l, 3)],
                &dx[i],
                &lc.mixed[i],
                d,
            );
            matvec_t_acc(w(3), &dx[i], &mut dmixed[i], d);
        }
        let mut dq = vec![vec![0.0; d]; t];
        let mut dk = vec![vec![0.0; d]; t];
        let mut dv = vec![vec![0.0; d]; t];
        for h in 0..shape.heads {
            let span = h * dh..(h + 1) * dh;
            let a = &lc.attn[h];
            let mut ds = vec![0.0; t * t];
            for i in 0..t {
                let dmi = &dmixed[i][span.clone()];
                let da: Vec<f64> = (0..t).map(|j| dot(dmi, &lc.v[j][span.clone()])).collect();
                let mut inner = 0.0;
                for j in 0..t {
                    inner += a[i * t + j] * da[j];
                }
                for j in 0..t {
                    let aij = a[i * t + j];
                    ds[i * t + j] = aij * (da[j] - inner);
                    for (g, m) in dv[j][span.clone()].iter_mut().zip(dmi) {
                        *g += aij * m;
                    }
                }
            }
            let (qr, kr) = (&lc.q_rot[h], &lc.k_rot[h]);
            for i in 0..t {
                let mut dqr = vec![0.0; dh];
                let mut dkr = vec![0.0; dh];
                for j in 0..t {
                    let sij = ds[i * t + j] / scale;
                    let sji = ds[j * t + i] / scale;
                    for c in 0..dh {
                        dqr[c] += sij * kr[j][c];
                        dkr[c] += sji * qr[j][c];
                    }
                }
                let s = tokens[i].seq_index;
                let dq_i = rotate_pairs(&dqr, s, att.lang_rope_base, -1.0)?;
                let dk_i = rotate_pairs(&dkr, s, att.lang_rope_base, -1.0)?;
                dq[i][span.clone()].copy_from_slice(&dq_i);
                dk[i][span.clone()].copy_from_slice(&dk_i);
            }
        }
        let mut dinput = dx;
        for i in 0..t {
            let xi = &lc.input[i];
            for (which, g) in [(0, &dq[i]), (1, &dk[i]), (2, &dv[i])] {
                outer_acc(&mut grad.data[shape.layer_matrix(l, which)], g, xi, d);
                matvec_t_acc(w(which), g, &mut dinput[i], d);
            }
        }
        dx = dinput;
    }

    let cat_range = shape.category_embedding();
    let voc_range = shape.query_embedding();
    for (tok, g) in tokens.iter().zip(&dx) {
        match tok.source {
            TokenSource::Relation(r) => {
                let dst = &mut grad.data[voc_range.clone()][r * d..(r + 1) * d];
                dst.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            TokenSource::Object { category, anchor } => {
                let c = category as usize;
                let dst = &mut grad.data[cat_range.clone()][c * d..(c + 1) * d];
                dst.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                if anchor {
                    let dst =
                        &mut grad.data[voc_range.clone()][ANCHOR_TOKEN * d..(ANCHOR_TOKEN + 1) * d];
                    dst.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
        }
    }
    Ok((loss, grad))
}

/// A single grounding problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub scene: Scene,
    pub query: SpatialQuery,
}

impl Example {
    /// Index of the target among the object tokens.
    pub fn target_index(&self) -> Result<usize> {
        let mut ids: Vec<u32> = self.scene.objects.iter().map(|o| o.object_id).collect();
        ids.sort_unstable();
        ids.iter()
            .position(|&id| id == self.query.target_id)
            .ok_or_else(|| Error::Config(format!("target {} not in scene", self.query.target_id)))
    }
}

/// Flattens records into examples, keeping only `relations` (all if empty).
pub fn examples_from(records: &[SceneRecord], relations: &[Relation]) -> Vec<Example> {
    records
        .iter()
        .flat_map(|r| {
            r.queries
                .iter()
                .filter(|q| relations.is_empty() || relations.contains(&q.relation))
                .map(|q| Example {
                    scene: r.scene.clone(),
                    query: q.clone(),
                })
        })
        .collect()
}

/// Loss of one example, re-encoding the tokens from `params`.
pub fn example_loss(ex: &Example, params: &ToyModelParams, cfg: &TrainConfig) -> Result<f64> {
    let tokens = encode_scene(&ex.scene, &ex.query, params, cfg)?;
    let logits = forward(&tokens, params, cfg)?;
    Ok(cross_entropy(&logits, ex.target_index()?))
}

pub fn example_loss_and_grad(
    ex: &Example,
    params: &ToyModelParams,
    cfg: &TrainConfig,
) -> Result<(f64, ToyModelParams)> {
    let tokens = encode_scene(&ex.scene, &ex.query, params, cfg)?;
    loss_and_grad(&tokens, ex.target_index()?, params, cfg)
}

/// Trained parameters and the mean batch loss of every step.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ToyModelParams,
    pub curve: Vec<f64>,
}

/// Plain SGD. Single-threaded and deterministic in `cfg.seed`.
pub fn train(dataset: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut params = ToyModelParams::init(&cfg.model, cfg.seed);
    let mut rng = rng_for(cfg.seed, "toy/batches");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut total = ToyModelParams::zeros(params.shape);
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let (l, g) = example_loss_and_grad(&dataset[order[cursor]], &params, cfg)?;
            cursor += 1;
            loss += l;
            total.add_scaled(&g, 1.0);
        }
        loss /= cfg.batch_size as f64;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Divergence { step, loss });
        }
        curve.push(loss);
        params.add_scaled(&total, -cfg.learning_rate / cfg.batch_size as f64);
    }
    Ok(TrainOutcome { params, curve })
}

/// Whether the argmax object of each example is its target.
pub fn predictions(
    params: &ToyModelParams,
    dataset: &[Example],
    cfg: &TrainConfig,
) -> Result<Vec<bool>> {
    dataset
        .par_iter()
        .map(|ex| {
            let tokens = encode_scene(&ex.scene, &ex.query, params, cfg)?;
            let logits = forward(&tokens, params, cfg)?;
            Ok(argmax(&logits) == ex.target_index()?)
        })
        .collect()
}

/// Fraction of examples whose argmax object is the target.
pub fn evaluate(params: &ToyModelParams, dataset: &[Example], cfg: &TrainConfig) -> Result<f64> {
    Ok(accuracy(&predictions(params, dataset, cfg)?))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(hits: &[bool]) -> f64 {
    if hits.is_empty() {
        return 0.0;
    }
    hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64
}

/// Mean of `1 / (objects - anchors)`: the accuracy of guessing uniformly
/// among the non-anchor objects.
pub fn chance_level(dataset: &[Example]) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    dataset
        .iter()
        .map(|ex| 1.0 / (ex.scene.len() - ex.query.anchor_ids.len()) as f64)
        .sum::<f64>()
        / dataset.len() as f64
}

/// Indices of single-anchor examples whose anchor-target aspect ratio is at
/// most `threshold`.
pub fn low_delta_subset(dataset: &[Example], threshold: f64) -> Vec<usize> {
    dataset
        .iter()
        .enumerate()
        .filter(|(_, ex)| query_delta(&ex.scene, &ex.query).is_some_and(|d| d <= threshold))
        .map(|(i, _)| i)
        .collect()
}

/// Per-block relative error between the hand-derived gradient and central
/// finite differences of [`example_loss`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub analytic_norm: f64,
    pub relative_error: f64,
}

pub fn gradient_check(
    ex: &Example,
    params: &ToyModelParams,
    cfg: &TrainConfig,
    step: f64,
) -> Result<Vec<BlockCheck>> {
    let (_, analytic) = example_loss_and_grad(ex, params, cfg)?;
    let mut probe = params.clone();
    let mut numeric = vec![0.0; params.data.len()];
    for (i, slot) in numeric.iter_mut().enumerate() {
        let orig = probe.data[i];
        probe.data[i] = orig + step;
        let up = example_loss(ex, &probe, cfg)?;
        probe.data[i] = orig - step;
        let down = example_loss(ex, &probe, cfg)?;
        probe.data[i] = orig;
        *slot = (up - down) / (2.0 * step);
    }
    Ok(params
        .shape
        .blocks()
        .into_iter()
        .map(|(name, range)| {
            let a = &analytic.data[range.clone()];
            let n = &numeric[range];
            let diff = a
                .iter()
                .zip(n)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
            let denom = na.max(nn);
            BlockCheck {
                block: name,
                analytic_norm: na,
                relative_error: if denom < 1e-300 { 0.0 } else { diff / denom },
            }
        })
        .collect())
}

/// Settings for the paired multi-seed comparison of positional modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub modes: Vec<PositionalMode>,
    pub relations: Vec<Relation>,
    pub train_scenes: usize,
    pub eval_queries: usize,
    pub low_delta: f64,
    pub gen: GenConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            modes: PositionalMode::ALL.to_vec(),
            relations: vec![Relation::NearestTo, Relation::Between],
            train_scenes: 1500,
            eval_queries: 2000,
            low_delta: 0.1,
            gen: GenConfig {
                max_objects: 12,
                ..GenConfig::default()
            },
            train: TrainConfig::default(),
        }
    }
}

/// Training and held-out examples for one seed. Shared by every mode.
pub fn experiment_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    let gen = GenConfig {
        relations: cfg.relations.clone(),
        ..cfg.gen.clone()
    };
    gen.validate()?;
    let train_seed = derive_seed(seed, "experiment/train");
    let records = (0..cfg.train_scenes)
        .map(|i| generate_record(train_seed, i, &gen))
        .collect::<Result<Vec<_>>>()?;
    let train = examples_from(&records, &cfg.relations);
    let eval_seed = derive_seed(seed, "experiment/eval");
    let mut eval = Vec::with_capacity(cfg.eval_queries);
    let mut i = 0;
    while eval.len() < cfg.eval_queries {
        let r = generate_record(eval_seed, i, &gen)?;
        eval.extend(examples_from(std::slice::from_ref(&r), &cfg.relations));
        i += 1;
        if i > 100 * cfg.eval_queries + 100 {
            return Err(Error::SceneGen(
                "could not collect enough held-out queries".into(),
            ));
        }
    }
    eval.truncate(cfg.eval_queries);
    Ok((train, eval))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub mode: PositionalMode,
    pub accuracy: f64,
    pub low_delta_accuracy: f64,
    pub low_delta_n: usize,
    pub final_loss: f64,
    pub chance: f64,
}

/// Trains every (seed, mode) pair and scores it on that seed's held-out set.
///
/// Runs are independent and each one trains single-threaded, so results do
/// not depend on how many run in parallel.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let data = cfg
        .seeds
        .par_iter()
        .map(|&s| experiment_data(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, PositionalMode)> = (0..cfg.seeds.len())
        .flat_map(|i| cfg.modes.iter().map(move |&m| (i, m)))
        .collect();
    jobs.par_iter()
        .map(|&(i, mode)| {
            let seed = cfg.seeds[i];
            let (train_set, eval_set) = &data[i];
            let tc = TrainConfig {
                seed,
                mode,
                ..cfg.train.clone()
            };
            let out = train(train_set, &tc)?;
            let hits = predictions(&out.params, eval_set, &tc)?;
            let low: Vec<bool> = low_delta_subset(eval_set, cfg.low_delta)
                .into_iter()
                .map(|j| hits[j])
                .collect();
            let tail = out.curve.len().min(100);
            let final_loss =
                out.curve[out.curve.len() - tail..].iter().sum::<f64>() / tail.max(1) as f64;
            Ok(RunResult {
                seed,
                mode,
                accuracy: accuracy(&hits),
                low_delta_accuracy: accuracy(&low),
                low_delta_n: low.len(),
                final_loss,
                chance: chance_level(eval_set),
            })
        })
        .collect()
}

/// Paired per-seed comparison of two modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub better: PositionalMode,
    pub worse: PositionalMode,
    /// `better - worse` for each seed, in seed order.
    pub differences: Vec<f64>,
    pub mean_difference: f64,
    pub wins: usize,
    pub losses: usize,
    /// One-sided sign-test p-value for `better > worse` (ties dropped).
    pub sign_test_p: f64,
}

/// `P(X >= wins)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut c = 1.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

/// Compares `better` against `worse` on overall accuracy, or on the
/// low-delta subset when `low_delta` is set.
pub fn paired_comparison(
    results: &[RunResult],
    better: PositionalMode,
    worse: PositionalMode,
    low_delta: bool,
) -> PairedComparison {
    let pick = |r: &RunResult| {
        if low_delta {
            r.low_delta_accuracy
        } else {
            r.accuracy
        }
    };
    let mut seeds: Vec<u64> = results.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let differences: Vec<f64> = seeds
        .iter()
        .filter_map(|&s| {
            let a = results.iter().find(|r| r.seed == s && r.mode == better)?;
            let b = results.iter().find(|r| r.seed == s && r.mode == worse)?;
            Some(pick(a) - pick(b))
        })
        .collect();
    let wins = differences.iter().filter(|d| **d > 0.0).count();
    let losses = differences.iter().filter(|d| **d < 0.0).count();
    PairedComparison {
        better,
        worse,
        mean_difference: differences.iter().sum::<f64>() / differences.len().max(1) as f64,
        sign_test_p: sign_test_p(wins, wins + losses),
        differences,
        wins,
        losses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quaternion::Position3;
    use crate::scenegen::{Aabb, SceneObject};

    fn small_cfg(mode: PositionalMode) -> TrainConfig {
        TrainConfig {
            mode,
            model: ModelConfig {
                d_model: 12,
                heads: 2,
                layers: 2,
                ext_dim: 9,
                n_categories: 3,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn four_objects() -> Example {
        let pts = [
            (0.5, 1.0, 0.2),
            (-2.0, 0.3, 1.1),
            (1.7, -2.2, 2.0),
            (3.0, 2.5, 0.4),
        ];
        let objects = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z))| SceneObject {
                object_id: i as u32,
                category: [0, 1, 1, 2][i],
                center: Position3::new(x, y, z),
            })
            .collect();
        Example {
            scene: Scene {
                scene_id: 0,
                objects,
                extent: Aabb::default(),
            },
            query: SpatialQuery {
                relation: Relation::NearestTo,
                anchor_ids: vec![0],
                target_id: 2,
                margin: 0.5,
            },
        }
    }

    #[test]
    fn layout_covers_everything_once() {
        let shape = ParamShape::of(&ModelConfig::default());
        let mut next = 0;
        for (_, r) in shape.blocks() {
            assert_eq!(r.start, next);
            next = r.end;
        }
        assert_eq!(next, shape.len());
    }

    #[test]
    fn sequence_is_relation_then_objects() {
        let ex = four_objects();
        let cfg = small_cfg(PositionalMode::QuatropeIgre);
        let p = ToyModelParams::init(&cfg.model, 1);
        let toks = encode_scene(&ex.scene, &ex.query, &p, &cfg).unwrap();
        assert_eq!(toks.len(), RELATION_TOKENS + 4);
        assert!(!toks[0].role.is_object());
        assert!(toks[1..].iter().all(|t| t.role.is_object()));
        assert!(matches!(
            toks[1].source,
            TokenSource::Object { anchor: true, .. }
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ex = four_objects();
        for mode in PositionalMode::ALL {
            let cfg = small_cfg(mode);
            let p = ToyModelParams::init(&cfg.model, 3);
            for b in gradient_check(&ex, &p, &cfg, 1e-5).unwrap() {
                assert!(b.relative_error < 1e-5, "{mode:?} {b:?}");
            }
        }
    }

    #[test]
    fn sign_test_tail() {
        assert_eq!(sign_test_p(5, 5), 1.0 / 32.0);
        assert_eq!(sign_test_p(0, 5), 1.0);
        assert!((sign_test_p(4, 5) - 6.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_give_log_o() {
        assert!((cross_entropy(&[0.3; 7], 2) - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let ex = four_objects();
        let cfg = small_cfg(PositionalMode::QuatropeIgre);
        let p = ToyModelParams::init(&cfg.model, 5);
        let toks = encode_scene(&ex.scene, &ex.query, &p, &cfg).unwrap();
        let t = toks.len();
        for layer in attention_weights(&toks, &p, &cfg).unwrap() {
            for head in layer {
                for row in head.chunks(t) {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let ex = four_objects();
        let mut cfg = small_cfg(PositionalMode::QuatropeIgre);
        cfg.learning_rate = 0.0;
        cfg.steps = 5;
        let out = train(std::slice::from_ref(&ex), &cfg).unwrap();
        assert_eq!(out.params, ToyModelParams::init(&cfg.model, cfg.seed));
        assert!(out.curve.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn readout_only_ignores_positions() {
        let ex = four_objects();
        let mut cfg = small_cfg(PositionalMode::QuatropeIgre);
        cfg.model.layers = 0;
        cfg.model.heads = 1;
        let p = ToyModelParams::init(&cfg.model, 2);
        let a = forward(
            &encode_scene(&ex.scene, &ex.query, &p, &cfg).unwrap(),
            &p,
            &cfg,
        )
        .unwrap();
        cfg.mode = PositionalMode::None;
        let b = forward(
            &encode_scene(&ex.scene, &ex.query, &p, &cfg).unwrap(),
            &p,
            &cfg,
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
