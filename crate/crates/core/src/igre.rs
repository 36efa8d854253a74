//! Gated composition of sequence rotary embedding with the 3-D encoding.
//!
//! Every query/key keeps its `base_dim` components, rotated only by the
//! ordinary sequence rotary embedding. Object tokens get `ext_dim` extra
//! components holding rotated copies of a fixed base vector; all other
//! tokens get zeros there. Because one side of each extension product is
//! zero unless both tokens are objects, the 3-D term only ever reaches
//! object-object logits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{
    apply_per_axis_baseline, apply_quatrope, SegmentFrequencyPlan, SegmentedVector,
};
use crate::error::{Error, Result};
use crate::quaternion::{FrequencySpec, Position3};

/// Value written into masked logit cells.
pub const MASK_SENTINEL: f64 = -1.0e30;
/// Rows at or above this length are filled in parallel.
const PARALLEL_ROWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum TokenRole {
    Object { position: Position3, object_id: u32 },
    NonObject,
}

impl TokenRole {
    pub fn position(&self) -> Option<Position3> {
        match self {
            TokenRole::Object { position, .. } => Some(*position),
            TokenRole::NonObject => None,
        }
    }

    pub fn is_object(&self) -> bool {
        matches!(self, TokenRole::Object { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Divide by `sqrt(base_dim)` even after extension.
    #[default]
    BaseOnly,
    /// Divide by `sqrt(base_dim + ext_dim)`.
    Total,
}

/// How the extension segments of object tokens are rotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionEncoding {
    #[default]
    Quatrope,
    /// Independent planar rotation per axis (comparator).
    PerAxis,
}

/// What non-object tokens receive in the extension slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonObjectExtension {
    #[default]
    ZeroPad,
    /// Treat non-object tokens as objects sitting at the origin. Only useful
    /// as a negative control: it leaks the 3-D term into every logit.
    Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub base_dim: usize,
    pub ext_dim: usize,
    pub freq_plan: SegmentFrequencyPlan,
    pub lang_rope_base: f64,
    pub base_vector: [f64; 3],
    pub scale_mode: ScaleMode,
    #[serde(default)]
    pub extension: ExtensionEncoding,
    #[serde(default)]
    pub non_object: NonObjectExtension,
}

impl AttentionConfig {
    pub const DEFAULT_EXT_DIM: usize = 6;
    pub const DEFAULT_LANG_ROPE_BASE: f64 = 10_000.0;
    pub const DEFAULT_BASE_VECTOR: [f64; 3] = [1.0, 0.0, 0.0];

    /// Defaults: constant 0.3 plan, base vector `(1, 0, 0)`, base-only scale.
    pub fn new(base_dim: usize, ext_dim: usize) -> Result<Self> {
        let cfg = Self {
            base_dim,
            ext_dim,
            freq_plan: SegmentFrequencyPlan::constant(FrequencySpec::default(), ext_dim / 3),
            lang_rope_base: Self::DEFAULT_LANG_ROPE_BASE,
            base_vector: Self::DEFAULT_BASE_VECTOR,
            scale_mode: ScaleMode::BaseOnly,
            extension: ExtensionEncoding::Quatrope,
            non_object: NonObjectExtension::ZeroPad,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_frequency(mut self, f: FrequencySpec) -> Self {
        self.freq_plan = SegmentFrequencyPlan::constant(f, self.ext_dim / 3);
        self
    }

    pub fn with_scale_mode(mut self, mode: ScaleMode) -> Self {
        self.scale_mode = mode;
        self
    }

    pub fn with_extension(mut self, ext: ExtensionEncoding) -> Self {
        self.extension = ext;
        self
    }

    pub fn with_non_object(mut self, policy: NonObjectExtension) -> Self {
        self.non_object = policy;
        self
    }

    /// Same settings with the extension removed.
    pub fn without_extension(&self) -> Self {
        let mut c = self.clone();
        c.ext_dim = 0;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_dim == 0 || !self.base_dim.is_multiple_of(2) {
            return Err(Error::OddDimension(self.base_dim));
        }
        if !self.ext_dim.is_multiple_of(3) {
            return Err(Error::Config(format!(
                "ext_dim must be divisible by 3, got {}",
                self.ext_dim
            )));
        }
        if self.ext_dim > 0 && self.freq_plan.len() != self.ext_dim / 3 {
            return Err(Error::PlanMismatch {
                plan: self.freq_plan.len(),
                segments: self.ext_dim / 3,
            });
        }
        if self.extension == ExtensionEncoding::PerAxis && !(self.ext_dim / 3).is_multiple_of(3) {
            return Err(Error::AxisGrouping {
                segments: self.ext_dim / 3,
            });
        }
        if !(self.lang_rope_base.is_finite() && self.lang_rope_base > 0.0) {
            return Err(Error::Config("lang_rope_base must be positive".into()));
        }
        if !self.base_vector.iter().all(|v| v.is_finite())
            || self.base_vector.iter().all(|&v| v == 0.0)
        {
            return Err(Error::Config(
                "base_vector must be finite and nonzero".into(),
            ));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        match self.scale_mode {
            ScaleMode::BaseOnly => (self.base_dim as f64).sqrt(),
            ScaleMode::Total => ((self.base_dim + self.ext_dim) as f64).sqrt(),
        }
    }

    pub fn total_dim(&self) -> usize {
        self.base_dim + self.ext_dim
    }
}

/// Rotation angle of component pair `pair` at `seq_index`.
pub fn lang_rope_angle(seq_index: usize, pair: usize, dim: usize, base: f64) -> f64 {
    seq_index as f64 * base.powf(-2.0 * pair as f64 / dim as f64)
}

/// Rotates pairs `(2i, 2i+1)` by `sign * angle_i`. `sign = -1` is the inverse.
pub fn rotate_pairs(v: &[f64], seq_index: usize, base: f64, sign: f64) -> Result<Vec<f64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::OddDimension(v.len()));
    }
    let dim = v.len();
    let mut out = Vec::with_capacity(dim);
    for (i, pair) in v.chunks_exact(2).enumerate() {
        let (s, c) = (sign * lang_rope_angle(seq_index, i, dim, base)).sin_cos();
        out.push(pair[0] * c - pair[1] * s);
        out.push(pair[0] * s + pair[1] * c);
    }
    Ok(out)
}

/// Standard sequence rotary embedding.
pub fn lang_rope(v: &[f64], seq_index: usize, base: f64) -> Result<Vec<f64>> {
    rotate_pairs(v, seq_index, base, 1.0)
}

/// The `ext_dim` extension slots for a token with `role`.
pub fn extension(role: &TokenRole, cfg: &AttentionConfig) -> Vec<f64> {
    if cfg.ext_dim == 0 {
        return Vec::new();
    }
    let position = match (role, cfg.non_object) {
        (TokenRole::Object { position, .. }, _) => *position,
        (TokenRole::NonObject, NonObjectExtension::Origin) => Position3::ORIGIN,
        (TokenRole::NonObject, NonObjectExtension::ZeroPad) => return vec![0.0; cfg.ext_dim],
    };
    let tiled = SegmentedVector::tiled(cfg.base_vector, cfg.ext_dim / 3)
        .expect("validated config has ext_dim divisible by 3");
    let rotated = match cfg.extension {
        ExtensionEncoding::Quatrope => apply_quatrope(&tiled, position, &cfg.freq_plan),
        ExtensionEncoding::PerAxis => apply_per_axis_baseline(&tiled, position, &cfg.freq_plan),
    };
    rotated.expect("validated config matches plan").into_inner()
}

/// `v ++ extension(role)`. The base part is copied through untouched.
pub fn extend_qk(v: &[f64], role: &TokenRole, cfg: &AttentionConfig) -> Result<Vec<f64>> {
    if v.len() != cfg.base_dim {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: cfg.base_dim,
        });
    }
    let mut out = Vec::with_capacity(cfg.total_dim());
    out.extend_from_slice(v);
    out.extend(extension(role, cfg));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    #[default]
    Full,
    Causal,
}

impl MaskKind {
    pub fn allows(self, row: usize, col: usize) -> bool {
        match self {
            MaskKind::Full => true,
            MaskKind::Causal => col <= row,
        }
    }
}

/// Dense `T x T` logits, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub size: usize,
    pub logits: Vec<f64>,
    /// `true` where the entry is visible.
    pub mask: Vec<bool>,
    pub sentinel: f64,
}

impl ScoreMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.logits[row * self.size + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.logits[row * self.size..(row + 1) * self.size]
    }

    /// Fills every cell with `entry(row, col)` or the sentinel.
    pub fn build<F>(size: usize, mask: MaskKind, entry: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let mut logits = vec![0.0; size * size];
        let fill = |(r, row): (usize, &mut [f64])| {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = if mask.allows(r, c) {
                    entry(r, c)
                } else {
                    MASK_SENTINEL
                };
            }
        };
        if size >= PARALLEL_ROWS {
            logits
                .par_chunks_mut(size.max(1))
                .enumerate()
                .for_each(fill);
        } else {
            logits.chunks_mut(size.max(1)).enumerate().for_each(fill);
        }
        let mask = (0..size * size)
            .map(|i| mask.allows(i / size.max(1), i % size.max(1)))
            .collect();
        Self {
            size,
            logits,
            mask,
            sentinel: MASK_SENTINEL,
        }
    }
}

/// One attention input: the vector serves as both query and key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub vector: Vec<f64>,
    pub role: TokenRole,
    pub seq_index: usize,
}

/// Left-to-right dot product. The fixed order keeps logits bit-identical
/// however rows are scheduled.
pub fn ordered_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn check_sequence(seq: &[usize], roles: &[TokenRole]) -> Result<()> {
    if seq.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "seq_index must be strictly increasing".into(),
        ));
    }
    let mut ids: Vec<u32> = roles
        .iter()
        .filter_map(|r| match r {
            TokenRole::Object { object_id, .. } => Some(*object_id),
            TokenRole::NonObject => None,
        })
        .collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("object_id repeated within a sequence".into()));
    }
    for r in roles {
        if let Some(p) = r.position() {
            if !p.is_finite() {
                return Err(Error::NonFinite("token position"));
            }
        }
    }
    Ok(())
}

/// Rotated-and-extended query/key rows for every token.
pub fn prepare(
    vectors: &[Vec<f64>],
    roles: &[TokenRole],
    seq: &[usize],
    cfg: &AttentionConfig,
) -> Result<Vec<Vec<f64>>> {
    vectors
        .iter()
        .zip(roles)
        .zip(seq)
        .map(|((v, role), &s)| {
            if v.len() != cfg.base_dim {
                return Err(Error::LengthMismatch {
                    left: v.len(),
                    right: cfg.base_dim,
                });
            }
            extend_qk(&lang_rope(v, s, cfg.lang_rope_base)?, role, cfg)
        })
        .collect()
}

/// Logits with separate query and key vectors per token.
pub fn attention_logits_qk(
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    roles: &[TokenRole],
    seq: &[usize],
    cfg: &AttentionConfig,
    mask: MaskKind,
) -> Result<ScoreMatrix> {
    cfg.validate()?;
    let t = queries.len();
    if keys.len() != t || roles.len() != t || seq.len() != t {
        return Err(Error::LengthMismatch {
            left: t,
            right: keys.len().min(roles.len()).min(seq.len()),
        });
    }
    check_sequence(seq, roles)?;
    let q = prepare(queries, roles, seq, cfg)?;
    let k = prepare(keys, roles, seq, cfg)?;
    let scale = cfg.scale();
    Ok(ScoreMatrix::build(t, mask, |i, j| {
        ordered_dot(&q[i], &k[j]) / scale
    }))
}

/// `logits[i][j] = <ext(rope(v_i)), ext(rope(v_j))> / scale`.
pub fn attention_logits(
    tokens: &[Token],
    cfg: &AttentionConfig,
    mask: MaskKind,
) -> Result<ScoreMatrix> {
    let vectors: Vec<Vec<f64>> = tokens.iter().map(|t| t.vector.clone()).collect();
    let roles: Vec<TokenRole> = tokens.iter().map(|t| t.role).collect();
    let seq: Vec<usize> = tokens.iter().map(|t| t.seq_index).collect();
    attention_logits_qk(&vectors, &vectors, &roles, &seq, cfg, mask)
}

/// Change in every logit caused by the extension, at the base-only scale.
///
/// Returns a row-major `T x T` matrix. Entries touching a zero-padded token
/// are exactly `0.0`.
pub fn gating_delta(tokens: &[Token], cfg: &AttentionConfig) -> Result<Vec<f64>> {
    let with = cfg.clone().with_scale_mode(ScaleMode::BaseOnly);
    let without = with.without_extension();
    let a = attention_logits(tokens, &with, MaskKind::Full)?;
    let b = attention_logits(tokens, &without, MaskKind::Full)?;
    Ok(a.logits.iter().zip(&b.logits).map(|(x, y)| x - y).collect())
}

/// Heatmap-ready JSON form of a score matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreMatrixExport {
    pub header: ScoreHeader,
    pub logits: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreHeader {
    pub size: usize,
    pub sentinel: f64,
    pub scale: f64,
    pub tokens: Vec<TokenEcho>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenEcho {
    pub index: usize,
    pub seq_index: usize,
    #[serde(flatten)]
    pub role: TokenRole,
}

impl ScoreMatrixExport {
    pub fn new(m: &ScoreMatrix, roles: &[TokenRole], seq: &[usize], scale: f64) -> Self {
        let tokens = roles
            .iter()
            .zip(seq)
            .enumerate()
            .map(|(index, (role, &seq_index))| TokenEcho {
                index,
                seq_index,
                role: *role,
            })
            .collect();
        Self {
            header: ScoreHeader {
                size: m.size,
                sentinel: m.sentinel,
                scale,
                tokens,
            },
            logits: (0..m.size).map(|r| m.row(r).to_vec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn obj(id: u32, x: f64, y: f64, z: f64) -> TokenRole {
        TokenRole::Object {
            position: Position3::new(x, y, z),
            object_id: id,
        }
    }

    #[test]
    fn rope_basics() {
        let v = vec![0.3, -0.7, 1.1, 2.0];
        assert_eq!(lang_rope(&v, 0, 10_000.0).unwrap(), v);
        assert!(matches!(
            lang_rope(&[1.0, 2.0, 3.0], 1, 10_000.0),
            Err(Error::OddDimension(3))
        ));
        // base 1: every pair turns by seq_index * sign radians
        let out = rotate_pairs(&[1.0, 0.0], 1, 1.0, FRAC_PI_2).unwrap();
        assert!(out[0].abs() < 1e-15 && (out[1] - 1.0).abs() < 1e-15);
        let back = rotate_pairs(&lang_rope(&v, 7, 100.0).unwrap(), 7, 100.0, -1.0).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn extension_layout() {
        let cfg = AttentionConfig::new(4, 6).unwrap();
        let v = vec![1.0, 2.0, 3.0, 4.0];
        let e = extend_qk(&v, &TokenRole::NonObject, &cfg).unwrap();
        assert_eq!(e, vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let e = extend_qk(&v, &obj(0, 0.0, 0.0, 0.0), &cfg).unwrap();
        assert_eq!(e, vec![1.0, 2.0, 3.0, 4.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let p = obj(1, 1.5, -2.0, 0.7);
        let e = extension(&p, &cfg);
        assert!((ordered_dot(&e, &e) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(AttentionConfig::new(5, 6).is_err());
        assert!(AttentionConfig::new(4, 4).is_err());
        assert!(AttentionConfig::new(4, 0).is_ok());
        let mut c = AttentionConfig::new(4, 6).unwrap();
        c.base_vector = [0.0; 3];
        assert!(c.validate().is_err());
        let c = AttentionConfig::new(4, 6)
            .unwrap()
            .with_extension(ExtensionEncoding::PerAxis);
        assert!(matches!(c.validate(), Err(Error::AxisGrouping { .. })));
    }

    #[test]
    fn sequence_checks() {
        let cfg = AttentionConfig::new(2, 3).unwrap();
        let tokens = vec![
            Token {
                vector: vec![1.0, 0.0],
                role: obj(0, 0.0, 0.0, 0.0),
                seq_index: 1,
            },
            Token {
                vector: vec![0.0, 1.0],
                role: obj(0, 1.0, 0.0, 0.0),
                seq_index: 2,
            },
        ];
        assert!(attention_logits(&tokens, &cfg, MaskKind::Full).is_err());
        let mut t2 = tokens.clone();
        t2[1].role = obj(1, 1.0, 0.0, 0.0);
        t2[1].seq_index = 1;
        assert!(attention_logits(&t2, &cfg, MaskKind::Full).is_err());
        t2[1].seq_index = 2;
        let m = attention_logits(&t2, &cfg, MaskKind::Causal).unwrap();
        assert_eq!(m.get(0, 1), MASK_SENTINEL);
        assert!(!m.mask[1]);
        assert!(m.get(1, 0).is_finite() && m.get(1, 0) != MASK_SENTINEL);
    }

    #[test]
    fn export_echoes_roles() {
        let cfg = AttentionConfig::new(2, 3).unwrap();
        let tokens = vec![
            Token {
                vector: vec![1.0, 0.0],
                role: TokenRole::NonObject,
                seq_index: 0,
            },
            Token {
                vector: vec![0.0, 1.0],
                role: obj(3, 1.0, 2.0, 0.5),
                seq_index: 1,
            },
        ];
        let m = attention_logits(&tokens, &cfg, MaskKind::Full).unwrap();
        let roles: Vec<_> = tokens.iter().map(|t| t.role).collect();
        let ex = ScoreMatrixExport::new(&m, &roles, &[0, 1], cfg.scale());
        let json = serde_json::to_value(&ex).unwrap();
        assert_eq!(json["header"]["tokens"][0]["role"], "non_object");
        assert_eq!(json["header"]["tokens"][1]["object_id"], 3);
        assert_eq!(json["logits"].as_array().unwrap().len(), 2);
    }
}
