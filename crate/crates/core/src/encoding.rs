//! Segment-wise 3-D rotary encoding of query/key vectors.
//!
//! A vector is split into consecutive 3-component segments, each treated as
//! a pure quaternion and rotated by the rotor of the token's position. The
//! per-axis baseline instead assigns each segment to one coordinate axis and
//! applies an ordinary planar rotation to its first two components, which
//! is how grouped multi-axis rotary schemes encode positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quaternion::{compose_rotor, Axis, FrequencySpec, Position3};

/// A vector made of consecutive 3-component segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SegmentedVector(Vec<f64>);

impl SegmentedVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(3) {
            return Err(Error::NotSegmented { len: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("segmented vector"));
        }
        Ok(Self(values))
    }

    /// `count` copies of the 3-vector `base`.
    pub fn tiled(base: [f64; 3], count: usize) -> Result<Self> {
        Self::new(base.iter().copied().cycle().take(3 * count).collect())
    }

    /// Three segments holding the standard basis `e_x, e_y, e_z`.
    pub fn identity_probe() -> Self {
        Self(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        self.0.len() / 3
    }

    pub fn segments(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.0.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Plain Euclidean dot product, summed left to right.
    pub fn dot(&self, other: &SegmentedVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for SegmentedVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SegmentedVector::new(v)
    }
}

impl From<SegmentedVector> for Vec<f64> {
    fn from(v: SegmentedVector) -> Vec<f64> {
        v.0
    }
}

/// One frequency triple per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFrequencyPlan(Vec<FrequencySpec>);

impl SegmentFrequencyPlan {
    pub fn new(specs: Vec<FrequencySpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("frequency plan must not be empty".into()));
        }
        Ok(Self(specs))
    }

    /// The same triple on every one of `segments` segments.
    pub fn constant(spec: FrequencySpec, segments: usize) -> Self {
        Self(vec![spec; segments.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn specs(&self) -> &[FrequencySpec] {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Ok(Self(
            self.0.iter().map(|f| f.scaled(s)).collect::<Result<_>>()?,
        ))
    }

    fn check(&self, v: &SegmentedVector) -> Result<()> {
        if self.0.len() != v.segment_count() {
            return Err(Error::PlanMismatch {
                plan: self.0.len(),
                segments: v.segment_count(),
            });
        }
        Ok(())
    }
}

/// Rotates every segment of `v` by the rotor of `p` under its plan entry.
pub fn apply_quatrope(
    v: &SegmentedVector,
    p: Position3,
    plan: &SegmentFrequencyPlan,
) -> Result<SegmentedVector> {
    plan.check(v)?;
    let mut out = Vec::with_capacity(v.len());
    let mut cached: Option<(FrequencySpec, crate::quaternion::UnitQuaternion)> = None;
    for (seg, spec) in v.segments().zip(plan.specs()) {
        let rotor = match cached {
            Some((f, r)) if f == *spec => r,
            _ => {
                let r = compose_rotor(p, spec);
                cached = Some((*spec, r));
                r
            }
        };
        out.extend_from_slice(&rotor.rotate(seg));
    }
    Ok(SegmentedVector(out))
}

/// `<f(q, m), f(k, n)>` summed over segments.
pub fn pair_score(
    q: &SegmentedVector,
    k: &SegmentedVector,
    m: Position3,
    n: Position3,
    plan: &SegmentFrequencyPlan,
) -> Result<f64> {
    if q.len() != k.len() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: k.len(),
        });
    }
    let rq = apply_quatrope(q, m, plan)?;
    let rk = apply_quatrope(k, n, plan)?;
    Ok(rq.dot(&rk))
}

/// Axis that segment `i` encodes under the per-axis baseline.
pub fn baseline_axis(segment: usize) -> Axis {
    Axis::from_index(segment)
}

/// Independent planar rotary encoding per axis.
///
/// Segments are assigned to x, y, z round-robin. Components 0 and 1 of a
/// segment rotate by `coordinate * frequency` of its axis; component 2 is
/// passed through.
pub fn apply_per_axis_baseline(
    v: &SegmentedVector,
    p: Position3,
    plan: &SegmentFrequencyPlan,
) -> Result<SegmentedVector> {
    plan.check(v)?;
    if !v.segment_count().is_multiple_of(3) {
        return Err(Error::AxisGrouping {
            segments: v.segment_count(),
        });
    }
    let mut out = Vec::with_capacity(v.len());
    for (i, (seg, spec)) in v.segments().zip(plan.specs()).enumerate() {
        let axis = baseline_axis(i);
        let angle = p.get(axis) * spec.get(axis);
        let (s, c) = angle.sin_cos();
        out.push(seg[0] * c - seg[1] * s);
        out.push(seg[0] * s + seg[1] * c);
        out.push(seg[2]);
    }
    Ok(SegmentedVector(out))
}

pub fn per_axis_pair_score(
    q: &SegmentedVector,
    k: &SegmentedVector,
    m: Position3,
    n: Position3,
    plan: &SegmentFrequencyPlan,
) -> Result<f64> {
    if q.len() != k.len() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: k.len(),
        });
    }
    let rq = apply_per_axis_baseline(q, m, plan)?;
    let rk = apply_per_axis_baseline(k, n, plan)?;
    Ok(rq.dot(&rk))
}

/// `min(|dx|, |dy|) / max(|dx|, |dy|)`; `None` when both are zero.
pub fn aspect_ratio_delta(displacement: Position3) -> Option<f64> {
    let dx = displacement.x.abs();
    let dy = displacement.y.abs();
    let hi = dx.max(dy);
    if hi == 0.0 {
        None
    } else {
        Some(dx.min(dy) / hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScoreReport {
    pub quatrope_score: f64,
    pub per_axis_score: f64,
    pub true_distance: f64,
    /// `None` when the displacement has no horizontal component.
    pub aspect_ratio_delta: Option<f64>,
}

impl PairScoreReport {
    pub fn delta_undefined(&self) -> bool {
        self.aspect_ratio_delta.is_none()
    }
}

pub fn pair_report(
    q: &SegmentedVector,
    k: &SegmentedVector,
    m: Position3,
    n: Position3,
    plan: &SegmentFrequencyPlan,
) -> Result<PairScoreReport> {
    Ok(PairScoreReport {
        quatrope_score: pair_score(q, k, m, n, plan)?,
        per_axis_score: per_axis_pair_score(q, k, m, n, plan)?,
        true_distance: m.distance(n),
        aspect_ratio_delta: aspect_ratio_delta(m - n),
    })
}

/// Two position pairs probing the false-nearby failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalseNearbyCase {
    /// Far apart overall, but identical on the shared axis.
    pub pair_a: (Position3, Position3),
    /// Truly near, displacement spread evenly over all three axes.
    pub pair_b: (Position3, Position3),
    pub shared_axis: Axis,
}

/// Builds pair A at `far_distance` with zero displacement on `shared_axis`
/// and pair B at `near_distance` with equal displacement on every axis.
/// Both pairs start at the origin.
pub fn false_nearby_case(
    near_distance: f64,
    far_distance: f64,
    shared_axis: Axis,
) -> Result<FalseNearbyCase> {
    if !(near_distance > 0.0 && near_distance < far_distance && far_distance.is_finite()) {
        return Err(Error::Config(format!(
            "need 0 < near < far, got near={near_distance} far={far_distance}"
        )));
    }
    let spread = far_distance / 2f64.sqrt();
    let mut a = [spread; 3];
    a[shared_axis.index()] = 0.0;
    let even = near_distance / 3f64.sqrt();
    Ok(FalseNearbyCase {
        pair_a: (Position3::ORIGIN, Position3::from_array(a)),
        pair_b: (Position3::ORIGIN, Position3::new(even, even, even)),
        shared_axis,
    })
}

/// Score of `q` against itself as the key position moves along `axis`.
///
/// The probe is a unit segment orthogonal to `axis`, so a displacement
/// `delta` yields exactly `cos(delta * f_axis)`.
pub fn decay_profile(axis: Axis, deltas: &[f64], f: FrequencySpec) -> Vec<(f64, f64)> {
    let mut probe = [0.0; 3];
    probe[(axis.index() + 1) % 3] = 1.0;
    let v = SegmentedVector(probe.to_vec());
    let plan = SegmentFrequencyPlan::constant(f, 1);
    deltas
        .iter()
        .map(|&d| {
            let n = Position3::ORIGIN.with_axis(axis, d);
            let s = pair_score(&v, &v, Position3::ORIGIN, n, &plan)
                .expect("probe vector and plan are consistent");
            (d, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use std::f64::consts::FRAC_PI_2;

    fn plan1() -> SegmentFrequencyPlan {
        SegmentFrequencyPlan::constant(FrequencySpec::default(), 1)
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(
            SegmentedVector::new(vec![1.0, 2.0]),
            Err(Error::NotSegmented { len: 2 })
        ));
        assert!(SegmentedVector::new(vec![]).is_err());
        let v = SegmentedVector::new(vec![1.0; 6]).unwrap();
        assert!(matches!(
            apply_quatrope(&v, Position3::ORIGIN, &plan1()),
            Err(Error::PlanMismatch { .. })
        ));
        let k = SegmentedVector::new(vec![1.0; 3]).unwrap();
        let plan2 = SegmentFrequencyPlan::constant(FrequencySpec::default(), 2);
        assert!(matches!(
            pair_score(&v, &k, Position3::ORIGIN, Position3::ORIGIN, &plan2),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn origin_is_identity() {
        let v = SegmentedVector::new(vec![0.3, -1.0, 2.0, 4.0, 0.5, -0.25]).unwrap();
        let plan = SegmentFrequencyPlan::constant(FrequencySpec::default(), 2);
        assert_eq!(apply_quatrope(&v, Position3::ORIGIN, &plan).unwrap(), v);
        let v3 = SegmentedVector::new(vec![0.5; 9]).unwrap();
        let plan3 = SegmentFrequencyPlan::constant(FrequencySpec::default(), 3);
        assert_eq!(
            apply_per_axis_baseline(&v3, Position3::ORIGIN, &plan3).unwrap(),
            v3
        );
    }

    #[test]
    fn z_displacement_rotates_in_plane() {
        let t = 2.7;
        let f = FrequencySpec::new(0.3, 0.2, 0.45).unwrap();
        let plan = SegmentFrequencyPlan::constant(f, 1);
        let v = SegmentedVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let out = apply_quatrope(&v, Position3::new(0.0, 0.0, t), &plan).unwrap();
        let expected = [(t * 0.45).cos(), (t * 0.45).sin(), 0.0];
        let via_matrix = oracle::mat3_apply(
            &oracle::euler_matrix(Position3::new(0.0, 0.0, t), [0.3, 0.2, 0.45]),
            [1.0, 0.0, 0.0],
        );
        for i in 0..3 {
            assert!((out.as_slice()[i] - expected[i]).abs() < 1e-15);
            assert!((out.as_slice()[i] - via_matrix[i]).abs() < 1e-15);
        }
        let s = pair_score(
            &v,
            &v,
            Position3::new(0.0, 0.0, t),
            Position3::ORIGIN,
            &plan,
        )
        .unwrap();
        assert!((s - (t * 0.45).cos()).abs() < 1e-15);
        let m = Position3::new(0.4, -1.0, 2.0);
        let n = Position3::new(-3.0, 2.5, 0.5);
        let shift = Position3::new(0.0, 0.0, 4.2);
        let base = pair_score(&v, &v, m, n, &plan).unwrap();
        let shifted = pair_score(&v, &v, m + shift, n + shift, &plan).unwrap();
        assert!((base - shifted).abs() < 1e-12);
    }

    #[test]
    fn per_axis_quarter_turn() {
        let v = SegmentedVector::new(vec![1.0, 0.0, 7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let f = FrequencySpec::default();
        let plan = SegmentFrequencyPlan::constant(f, 3);
        let p = Position3::new(FRAC_PI_2 / f.fx, 0.0, 0.0);
        let out = apply_per_axis_baseline(&v, p, &plan).unwrap();
        assert!(out.as_slice()[0].abs() < 1e-15);
        assert!((out.as_slice()[1] - 1.0).abs() < 1e-15);
        assert_eq!(out.as_slice()[2], 7.0);
        let v2 = SegmentedVector::new(vec![1.0; 6]).unwrap();
        let plan2 = SegmentFrequencyPlan::constant(f, 2);
        assert!(matches!(
            apply_per_axis_baseline(&v2, p, &plan2),
            Err(Error::AxisGrouping { segments: 2 })
        ));
    }

    #[test]
    fn false_nearby_geometry() {
        let case = false_nearby_case(1.0, 5.0, Axis::X).unwrap();
        let a = case.pair_a.1 - case.pair_a.0;
        let b = case.pair_b.1 - case.pair_b.0;
        assert_eq!(a.x, 0.0);
        assert!((a.y - 3.5355339059327378).abs() < 1e-9);
        assert!((a.z - 3.5355339059327378).abs() < 1e-9);
        assert!((b.x - 0.5773502691896258).abs() < 1e-9);
        assert!((a.norm() - 5.0).abs() < 1e-9);
        assert!((b.norm() - 1.0).abs() < 1e-9);
        assert!(false_nearby_case(1.0, 1.0, Axis::Y).is_err());
        assert!(false_nearby_case(0.0, 1.0, Axis::Y).is_err());
    }

    #[test]
    fn aspect_ratio_values() {
        assert_eq!(aspect_ratio_delta(Position3::new(3.0, 3.0, 1.0)), Some(1.0));
        assert_eq!(
            aspect_ratio_delta(Position3::new(0.1, -2.0, 0.0)),
            Some(0.05)
        );
        assert_eq!(aspect_ratio_delta(Position3::new(0.0, 0.0, 4.0)), None);
    }

    #[test]
    fn decay_profile_starts_at_one() {
        let prof = decay_profile(Axis::Y, &[0.0, 1.0], FrequencySpec::default());
        assert_eq!(prof[0], (0.0, 1.0));
        assert!((prof[1].1 - 0.3f64.cos()).abs() < 1e-15);
    }
}
