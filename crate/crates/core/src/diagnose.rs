//! False-nearby diagnostics: does an encoding let a pair that is far apart
//! in 3-D outscore a truly nearer pair?
//!
//! For every ordered pair `(anchor, far)` and every comparator object that
//! is strictly nearer to the anchor than `far`, an encoding *agrees* when it
//! scores the comparator above `far`. Agreement rates are reported per
//! aspect-ratio stratum of the `anchor -> far` displacement; low-delta
//! pairs are the ones concentrated on a single horizontal axis.
//!
//! Scores use a direction-neutral probe for each encoding: the three basis
//! segments for the quaternion rotor (the score is then the trace of the
//! relative rotation) and three `(1, 0, 0)` segments for the per-axis
//! baseline (one per axis, the sum of per-axis cosines).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{
    apply_per_axis_baseline, apply_quatrope, aspect_ratio_delta, false_nearby_case, pair_score,
    per_axis_pair_score, FalseNearbyCase, SegmentFrequencyPlan, SegmentedVector,
};
use crate::error::Result;
use crate::quaternion::{Axis, FrequencySpec, Position3};
use crate::scenegen::{gen_scene, Aabb, Scene, DELTA_THRESHOLDS};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumAgreement {
    pub threshold: f64,
    pub quatrope_agreement: f64,
    pub per_axis_agreement: f64,
    /// Number of (anchor, far, comparator) comparisons.
    pub n: u64,
    /// Number of distinct (anchor, far) pairs.
    pub pairs: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    quat: u64,
    axis: u64,
    n: u64,
    pairs: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.quat += o.quat;
        self.axis += o.axis;
        self.n += o.n;
        self.pairs += o.pairs;
        self
    }
}

/// Per-object encoded probes for both encodings.
struct Encoded {
    quat: Vec<SegmentedVector>,
    axis: Vec<SegmentedVector>,
}

fn encode_scene(scene: &Scene, f: FrequencySpec) -> Encoded {
    let plan = SegmentFrequencyPlan::constant(f, 3);
    let qprobe = SegmentedVector::identity_probe();
    let aprobe = SegmentedVector::tiled([1.0, 0.0, 0.0], 3).expect("3 segments");
    let quat = scene
        .objects
        .iter()
        .map(|o| apply_quatrope(&qprobe, o.center, &plan).expect("plan matches probe"))
        .collect();
    let axis = scene
        .objects
        .iter()
        .map(|o| apply_per_axis_baseline(&aprobe, o.center, &plan).expect("plan matches probe"))
        .collect();
    Encoded { quat, axis }
}

fn scene_tallies(scene: &Scene, f: FrequencySpec) -> Vec<Tally> {
    let enc = encode_scene(scene, f);
    let n = scene.len();
    let mut tallies = vec![Tally::default(); DELTA_THRESHOLDS.len()];
    for a in 0..n {
        let pa = scene.objects[a].center;
        for t in 0..n {
            if t == a {
                continue;
            }
            let pt = scene.objects[t].center;
            let Some(delta) = aspect_ratio_delta(pt - pa) else {
                continue;
            };
            let dist_t = pa.distance(pt);
            let q_t = enc.quat[a].dot(&enc.quat[t]);
            let x_t = enc.axis[a].dot(&enc.axis[t]);
            let mut local = Tally::default();
            for c in 0..n {
                if c == a || c == t {
                    continue;
                }
                if pa.distance(scene.objects[c].center) >= dist_t {
                    continue;
                }
                local.n += 1;
                if enc.quat[a].dot(&enc.quat[c]) > q_t {
                    local.quat += 1;
                }
                if enc.axis[a].dot(&enc.axis[c]) > x_t {
                    local.axis += 1;
                }
            }
            if local.n == 0 {
                continue;
            }
            local.pairs = 1;
            for (slot, &th) in tallies.iter_mut().zip(DELTA_THRESHOLDS.iter()) {
                if delta <= th {
                    *slot = slot.merge(local);
                }
            }
        }
    }
    tallies
}

/// Agreement rates of both encodings per delta stratum over `scenes`.
pub fn proximity_agreement(scenes: &[Scene], f: FrequencySpec) -> Vec<StratumAgreement> {
    let totals = scenes.par_iter().map(|s| scene_tallies(s, f)).reduce(
        || vec![Tally::default(); DELTA_THRESHOLDS.len()],
        |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
    );
    DELTA_THRESHOLDS
        .iter()
        .zip(totals)
        .map(|(&threshold, t)| {
            let denom = t.n.max(1) as f64;
            StratumAgreement {
                threshold,
                quatrope_agreement: t.quat as f64 / denom,
                per_axis_agreement: t.axis as f64 / denom,
                n: t.n,
                pairs: t.pairs,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub n_scenes: usize,
    pub n_objects: usize,
    pub n_categories: u32,
    pub extent: Aabb,
    pub frequency: f64,
    pub near_distance: f64,
    pub far_distance: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            n_scenes: 400,
            n_objects: 12,
            n_categories: 6,
            extent: Aabb::default(),
            frequency: FrequencySpec::DEFAULT,
            near_distance: 1.0,
            far_distance: 5.0,
        }
    }
}

pub fn diagnose_scenes(seed: u64, cfg: &DiagnoseConfig) -> Result<Vec<Scene>> {
    (0..cfg.n_scenes)
        .map(|i| {
            gen_scene(
                derive_seed(seed, &format!("diagnose/{i}")),
                cfg.n_objects,
                cfg.extent,
                cfg.n_categories,
            )
        })
        .collect()
}

/// Scores for the two pairs of a constructed case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseScores {
    pub case: FalseNearbyCase,
    pub probe: ProbeKind,
    pub quatrope_far: f64,
    pub quatrope_near: f64,
    pub per_axis_far: f64,
    pub per_axis_near: f64,
}

impl CaseScores {
    /// The holistic encoding scores the truly nearer pair higher.
    pub fn quatrope_correct(&self) -> bool {
        self.quatrope_near > self.quatrope_far
    }

    pub fn per_axis_correct(&self) -> bool {
        self.per_axis_near > self.per_axis_far
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Three all-ones segments for both encodings.
    AllOnes,
    /// The direction-neutral probes described in the module docs.
    Neutral,
}

pub fn score_case(
    case: &FalseNearbyCase,
    f: FrequencySpec,
    probe: ProbeKind,
) -> Result<CaseScores> {
    let plan = SegmentFrequencyPlan::constant(f, 3);
    let (qv, av) = match probe {
        ProbeKind::AllOnes => {
            let ones = SegmentedVector::new(vec![1.0; 9])?;
            (ones.clone(), ones)
        }
        ProbeKind::Neutral => (
            SegmentedVector::identity_probe(),
            SegmentedVector::tiled([1.0, 0.0, 0.0], 3)?,
        ),
    };
    let (a0, a1) = case.pair_a;
    let (b0, b1) = case.pair_b;
    Ok(CaseScores {
        case: *case,
        probe,
        quatrope_far: pair_score(&qv, &qv, a0, a1, &plan)?,
        quatrope_near: pair_score(&qv, &qv, b0, b1, &plan)?,
        per_axis_far: per_axis_pair_score(&av, &av, a0, a1, &plan)?,
        per_axis_near: per_axis_pair_score(&av, &av, b0, b1, &plan)?,
    })
}

/// A case where independent per-axis rotation ranks the far pair higher.
///
/// Pair A moves a half turn along `axis` alone; pair B is nearer, with an
/// even displacement of total angle `near_angle` (radians at frequency `f`).
/// With `near_angle` in roughly `(2.2, pi)` each per-axis cosine of pair B
/// is low enough that the summed per-axis score falls below pair A's, whose
/// two untouched axes contribute their full score.
pub fn saturation_case(axis: Axis, f: f64, near_angle: f64) -> Result<FalseNearbyCase> {
    let far = std::f64::consts::PI / f;
    let near = near_angle / f;
    let mut case = false_nearby_case(near, far, axis)?;
    case.pair_a = (Position3::ORIGIN, Position3::ORIGIN.with_axis(axis, far));
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturation_case_fools_per_axis_only() {
        let f = FrequencySpec::default();
        let case = saturation_case(Axis::X, f.fx, 2.6).unwrap();
        let s = score_case(&case, f, ProbeKind::Neutral).unwrap();
        assert!(s.quatrope_correct());
        assert!(!s.per_axis_correct());
    }

    #[test]
    fn agreement_counts_are_consistent() {
        let cfg = DiagnoseConfig {
            n_scenes: 4,
            n_objects: 6,
            ..DiagnoseConfig::default()
        };
        let scenes = diagnose_scenes(1, &cfg).unwrap();
        let rows = proximity_agreement(&scenes, FrequencySpec::default());
        assert_eq!(rows.len(), 6);
        for w in rows.windows(2) {
            assert!(w[0].n >= w[1].n);
        }
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.quatrope_agreement));
            assert!((0.0..=1.0).contains(&r.per_axis_agreement));
        }
    }
}
