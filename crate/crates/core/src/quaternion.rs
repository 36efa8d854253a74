//! Quaternion arithmetic and the Euler-ordered rotor used to encode 3-D
//! positions.
//!
//! Conventions: scalar-first `(w, x, y, z)`, Hamilton product with
//! `ij = k`, `jk = i`, `ki = j`. A position `p` with per-axis frequencies
//! `f` maps to the rotor `Q(p) = Qz(pz) * Qy(py) * Qx(px)` where each factor
//! is a half-angle rotor about its own axis.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pure-quaternion outputs with `|w|` below this are snapped to exactly zero.
pub const PURE_CLAMP: f64 = 1e-12;
/// Composition renormalizes once the norm has drifted further than this.
pub const RENORM_DRIFT: f64 = 1e-13;
/// `rotate_pure` rejects rotors whose norm is further than this from one.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i % 3]
    }

    pub fn label(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// An object's bounding-box center in scene units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const ORIGIN: Position3 = Position3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn get(self, axis: Axis) -> f64 {
        self.to_array()[axis.index()]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(self, other: Position3) -> f64 {
        (self - other).norm()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn with_axis(self, axis: Axis, value: f64) -> Self {
        let mut a = self.to_array();
        a[axis.index()] = value;
        Self::from_array(a)
    }
}

impl Add for Position3 {
    type Output = Position3;
    fn add(self, o: Position3) -> Position3 {
        Position3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Position3 {
    type Output = Position3;
    fn sub(self, o: Position3) -> Position3 {
        Position3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Per-axis rotation frequencies in radians per scene unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySpec {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
}

impl FrequencySpec {
    /// The default frequency on every axis.
    pub const DEFAULT: f64 = 0.3;

    pub fn new(fx: f64, fy: f64, fz: f64) -> Result<Self> {
        for (axis, value) in [('x', fx), ('y', fy), ('z', fz)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidFrequency { axis, value });
            }
        }
        Ok(Self { fx, fy, fz })
    }

    pub fn uniform(f: f64) -> Result<Self> {
        Self::new(f, f, f)
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.fx,
            Axis::Y => self.fy,
            Axis::Z => self.fz,
        }
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.fx * s, self.fy * s, self.fz * s)
    }

    /// Axes on which `frequency * span` exceeds pi, i.e. where two
    /// coordinates inside the span can alias onto the same half-circle.
    pub fn wrapping_axes(&self, span: [f64; 3]) -> Vec<Axis> {
        Axis::ALL
            .into_iter()
            .filter(|&a| self.get(a) * span[a.index()].abs() > std::f64::consts::PI)
            .collect()
    }

    /// True when every axis satisfies the half-circle constraint for `span`.
    pub fn is_valid_for_span(&self, span: [f64; 3]) -> bool {
        self.wrapping_axes(span).is_empty()
    }
}

impl Default for FrequencySpec {
    fn default() -> Self {
        Self {
            fx: Self::DEFAULT,
            fy: Self::DEFAULT,
            fz: Self::DEFAULT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn pure(x: f64, y: f64, z: f64) -> Self {
        Self { w: 0.0, x, y, z }
    }

    pub fn from_vector(v: [f64; 3]) -> Self {
        Self::pure(v[0], v[1], v[2])
    }

    pub fn vector(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_pure(&self) -> bool {
        self.w == 0.0
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_squared(&self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Four-component Euclidean inner product.
    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Snaps a tiny real part to exactly zero so the result is tagged pure.
    pub fn clamp_pure(mut self) -> Self {
        if self.w.abs() <= PURE_CLAMP {
            self.w = 0.0;
        }
        self
    }
}

/// Hamilton product `a * b`.
pub fn hamilton_product(a: Quaternion, b: Quaternion) -> Quaternion {
    #[cfg(not(feature = "mutate-hamilton"))]
    let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
    #[cfg(feature = "mutate-hamilton")]
    let z = a.w * b.z - a.x * b.y - a.y * b.x + a.z * b.w;
    Quaternion {
        w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        z,
    }
}

/// `(w, -x, -y, -z)`.
pub fn conjugate(q: Quaternion) -> Quaternion {
    q.conjugate()
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        hamilton_product(self, rhs)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

/// A quaternion of unit norm, used as a rotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Quaternion", try_from = "Quaternion")]
pub struct UnitQuaternion(Quaternion);

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion(Quaternion::IDENTITY);

    /// Accepts `q` if its norm is within [`UNIT_TOLERANCE`] of one.
    pub fn try_new(q: Quaternion) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::NonFinite("rotor"));
        }
        let norm = q.norm();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitRotor { norm });
        }
        Ok(Self(q).renormalized())
    }

    /// Scales `q` to unit length.
    pub fn normalize(q: Quaternion) -> Result<Self> {
        let norm = q.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonUnitRotor { norm });
        }
        Ok(Self(q.scale(1.0 / norm)))
    }

    fn renormalized(self) -> Self {
        let norm = self.0.norm();
        if (norm - 1.0).abs() > RENORM_DRIFT {
            Self(self.0.scale(1.0 / norm))
        } else {
            self
        }
    }

    pub fn quaternion(&self) -> Quaternion {
        self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.conjugate())
    }

    /// Sandwich product `Q v Q^-1` on a 3-vector.
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let out = hamilton_product(
            hamilton_product(self.0, Quaternion::from_vector(v)),
            self.0.conjugate(),
        );
        out.vector()
    }

    /// Component-wise distance with `q` and `-q` identified: `min(|a - b|, |a + b|)`.
    pub fn antipodal_distance(&self, other: &UnitQuaternion) -> f64 {
        let d = (self.0 - other.0).norm();
        let s = (self.0 + other.0).norm();
        d.min(s)
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion(hamilton_product(self.0, rhs.0)).renormalized()
    }
}

impl From<UnitQuaternion> for Quaternion {
    fn from(u: UnitQuaternion) -> Quaternion {
        u.0
    }
}

impl TryFrom<Quaternion> for UnitQuaternion {
    type Error = Error;
    fn try_from(q: Quaternion) -> Result<Self> {
        UnitQuaternion::try_new(q)
    }
}

/// Single-axis rotor `cos(a/2) + u sin(a/2)` with `a = coordinate * frequency`.
pub fn axis_rotor(axis: Axis, coordinate: f64, frequency: f64) -> UnitQuaternion {
    let half = 0.5 * coordinate * frequency;
    let (s, c) = half.sin_cos();
    let q = match axis {
        Axis::X => Quaternion::new(c, s, 0.0, 0.0),
        Axis::Y => Quaternion::new(c, 0.0, s, 0.0),
        Axis::Z => Quaternion::new(c, 0.0, 0.0, s),
    };
    UnitQuaternion(q)
}

/// `Qz(pz) * Qy(py) * Qx(px)`, in exactly that order.
pub fn compose_rotor(p: Position3, f: &FrequencySpec) -> UnitQuaternion {
    let qx = axis_rotor(Axis::X, p.x, f.fx);
    let qy = axis_rotor(Axis::Y, p.y, f.fy);
    let qz = axis_rotor(Axis::Z, p.z, f.fz);
    qz * qy * qx
}

/// Rotates pure quaternion `v` by the sandwich product `rotor * v * rotor^-1`.
///
/// Fails if `rotor` is not unit length or `v` is not pure. The output real
/// part is clamped to exactly zero.
pub fn rotate_pure(rotor: Quaternion, v: Quaternion) -> Result<Quaternion> {
    let rotor = UnitQuaternion::try_new(rotor)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("pure quaternion"));
    }
    if !v.is_pure() {
        return Err(Error::NotPure { w: v.w });
    }
    let q = rotor.quaternion();
    Ok(hamilton_product(hamilton_product(q, v), q.conjugate()).clamp_pure())
}

/// How far the Euler-ordered rotor is from the exact relative-position
/// identity `Q(m - n) = Q(n)^-1 Q(m)`, measured in quaternion space with
/// `q` and `-q` identified.
pub fn relative_rotor_residual(m: Position3, n: Position3, f: &FrequencySpec) -> f64 {
    let direct = compose_rotor(m - n, f);
    let composed = compose_rotor(n, f).inverse() * compose_rotor(m, f);
    direct.antipodal_distance(&composed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
        (a - b).to_array().iter().all(|d| d.abs() <= tol)
    }

    #[test]
    fn basis_products() {
        let i = Quaternion::pure(1.0, 0.0, 0.0);
        let j = Quaternion::pure(0.0, 1.0, 0.0);
        let k = Quaternion::pure(0.0, 0.0, 1.0);
        assert_eq!(i * j, k);
        assert_eq!(j * k, i);
        assert_eq!(k * i, j);
        assert_eq!(i * i, Quaternion::new(-1.0, 0.0, 0.0, 0.0));
        assert_eq!(j * i, -k);
        let q = Quaternion::new(0.3, -1.2, 2.5, 0.7);
        assert_eq!(Quaternion::IDENTITY * q, q);
        assert_eq!(q * Quaternion::IDENTITY, q);
    }

    #[test]
    fn conjugate_flips_vector_part() {
        let q = Quaternion::new(0.0, 1.0, 2.0, 3.0);
        assert_eq!(conjugate(q), Quaternion::new(0.0, -1.0, -2.0, -3.0));
        assert_eq!(conjugate(conjugate(q)), q);
        let r = compose_rotor(Position3::new(1.3, -2.0, 0.4), &FrequencySpec::default());
        let prod = r.quaternion() * r.quaternion().conjugate();
        assert!(close(prod, Quaternion::IDENTITY, 1e-12));
    }

    #[test]
    fn axis_rotor_values() {
        let r = axis_rotor(Axis::Z, PI, 1.0).quaternion();
        assert!(close(r, Quaternion::new(0.0, 0.0, 0.0, 1.0), 1e-15));
        for a in Axis::ALL {
            assert_eq!(axis_rotor(a, 0.0, 0.3).quaternion(), Quaternion::IDENTITY);
        }
        let r = axis_rotor(Axis::X, 2.0, 0.3).quaternion();
        // 0.5 * 2.0 * 0.3 evaluated independently
        let half = 0.3_f64;
        assert!(close(
            r,
            Quaternion::new(half.cos(), half.sin(), 0.0, 0.0),
            1e-16
        ));
    }

    #[test]
    fn compose_reduces_to_single_axis() {
        let f = FrequencySpec::uniform(0.3).unwrap();
        assert_eq!(
            compose_rotor(Position3::ORIGIN, &f).quaternion(),
            Quaternion::IDENTITY
        );
        let r = compose_rotor(Position3::new(1.0, 0.0, 0.0), &f);
        assert!(close(
            r.quaternion(),
            axis_rotor(Axis::X, 1.0, 0.3).quaternion(),
            1e-16
        ));
    }

    #[test]
    fn quarter_turn_about_z() {
        let rotor = axis_rotor(Axis::Z, FRAC_PI_2, 1.0).quaternion();
        let out = rotate_pure(rotor, Quaternion::pure(1.0, 0.0, 0.0)).unwrap();
        assert!(close(out, Quaternion::pure(0.0, 1.0, 0.0), 1e-15));
        assert!(out.is_pure());
    }

    #[test]
    fn rotate_pure_rejects_bad_inputs() {
        let v = Quaternion::pure(1.0, 0.0, 0.0);
        assert!(matches!(
            rotate_pure(Quaternion::new(1.0, 0.1, 0.0, 0.0), v),
            Err(Error::NonUnitRotor { .. })
        ));
        assert!(matches!(
            rotate_pure(Quaternion::IDENTITY, Quaternion::new(0.5, 1.0, 0.0, 0.0)),
            Err(Error::NotPure { .. })
        ));
        let id = rotate_pure(Quaternion::IDENTITY, v).unwrap();
        assert_eq!(id, v);
    }

    #[test]
    fn residual_vanishes_on_shared_axis() {
        let f = FrequencySpec::uniform(0.3).unwrap();
        let m = Position3::new(2.5, -1.0, 0.7);
        assert!(relative_rotor_residual(m, m, &f) <= 1e-15);
        for axis in Axis::ALL {
            let m = Position3::ORIGIN.with_axis(axis, 3.1);
            let n = Position3::ORIGIN.with_axis(axis, -1.7);
            assert!(relative_rotor_residual(m, n, &f) <= 1e-12);
        }
    }

    #[test]
    fn frequency_validation() {
        assert!(FrequencySpec::new(0.3, 0.0, 0.3).is_err());
        assert!(FrequencySpec::new(0.3, f64::NAN, 0.3).is_err());
        let f = FrequencySpec::default();
        assert!(f.is_valid_for_span([10.0, 10.0, 3.0]));
        assert_eq!(f.wrapping_axes([11.0, 10.0, 3.0]), vec![Axis::X]);
    }

    #[test]
    fn unit_quaternion_serde_checks_norm() {
        let ok: UnitQuaternion =
            serde_json::from_str(r#"{"w":1.0,"x":0.0,"y":0.0,"z":0.0}"#).unwrap();
        assert_eq!(ok, UnitQuaternion::IDENTITY);
        let bad: std::result::Result<UnitQuaternion, _> =
            serde_json::from_str(r#"{"w":2.0,"x":0.0,"y":0.0,"z":0.0}"#);
        assert!(bad.is_err());
    }
}
