//! 3-D rotary positional encoding for object tokens.
//!
//! Object positions become unit quaternions (`Qz * Qy * Qx` Euler rotors)
//! that rotate 3-component segments of query/key vectors, so attention dot
//! products see relative rather than absolute positions. The [`igre`]
//! module gates that signal to object-object logits by appending rotated
//! base vectors to object tokens and zeros to everything else.
//!
//! Beyond the encoders the crate carries a synthetic attribute-free
//! grounding generator ([`scenegen`]), a small hand-differentiated attention
//! model ([`toy`]) and the diagnostics that compare the holistic encoding
//! against independent per-axis rotation.

pub mod checkpoint;
pub mod diagnose;
pub mod encoding;
pub mod error;
pub mod igre;
pub mod oracle;
pub mod quaternion;
pub mod scenegen;
pub mod seeds;
pub mod selftest;
pub mod toy;

pub use encoding::{
    apply_per_axis_baseline, apply_quatrope, pair_score, SegmentFrequencyPlan, SegmentedVector,
};
pub use error::{Error, Result};
pub use igre::{AttentionConfig, ScoreMatrix, TokenRole};
pub use quaternion::{
    axis_rotor, compose_rotor, hamilton_product, rotate_pure, Axis, FrequencySpec, Position3,
    Quaternion, UnitQuaternion,
};
