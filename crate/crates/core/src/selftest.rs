//! Invariant suite behind `quatrope selftest`.
//!
//! The algebra and rotor checks take the Hamilton product as a parameter so
//! a broken kernel can be injected and shown to be caught.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::diagnose::{saturation_case, score_case, ProbeKind};
use crate::encoding::{decay_profile, pair_score, SegmentFrequencyPlan, SegmentedVector};
use crate::igre::{
    attention_logits, extension, gating_delta, lang_rope, AttentionConfig, MaskKind,
    NonObjectExtension, ScaleMode, Token, TokenRole,
};
use crate::oracle::{euler_matrix, log_log_slope, mat3_apply, matrix_product};
use crate::quaternion::{
    axis_rotor, compose_rotor, hamilton_product, relative_rotor_residual, Axis, FrequencySpec,
    Position3, Quaternion,
};
use crate::scenegen::{
    gen_scene, knn_relation_recall, pruning_counterexample, relation_budget, relation_oracle, Aabb,
    Relation, Scene, SceneObject,
};
use crate::seeds::rng_for;
use crate::toy::{
    gradient_check, Example, ModelConfig, PositionalMode, ToyModelParams, TrainConfig,
};

pub type HamiltonFn = fn(Quaternion, Quaternion) -> Quaternion;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub group: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_quaternion(rng: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::new(
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
    )
}

fn random_unit(rng: &mut ChaCha8Rng) -> Quaternion {
    loop {
        let q = random_quaternion(rng);
        let n = q.norm();
        if n > 1e-3 {
            return q.scale(1.0 / n);
        }
    }
}

fn random_position(rng: &mut ChaCha8Rng, span: f64) -> Position3 {
    Position3::new(
        rng.gen_range(-span..span),
        rng.gen_range(-span..span),
        rng.gen_range(-span..span),
    )
}

fn max_component_diff(a: Quaternion, b: Quaternion) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn sandwich(h: HamiltonFn, q: Quaternion, v: Quaternion) -> Quaternion {
    h(h(q, v), q.conjugate())
}

fn hamilton_basis(h: HamiltonFn) -> Outcome {
    let (i, j, k) = (
        Quaternion::pure(1.0, 0.0, 0.0),
        Quaternion::pure(0.0, 1.0, 0.0),
        Quaternion::pure(0.0, 0.0, 1.0),
    );
    let minus_one = Quaternion::new(-1.0, 0.0, 0.0, 0.0);
    let cases = [
        (h(i, j), k),
        (h(j, k), i),
        (h(k, i), j),
        (h(j, i), -k),
        (h(i, i), minus_one),
        (h(j, j), minus_one),
        (h(k, k), minus_one),
    ];
    let bad = cases.iter().filter(|(a, b)| a != b).count();
    ensure(
        bad == 0,
        format!("{bad} of {} basis products wrong", cases.len()),
    )
}

fn hamilton_matrix_oracle(h: HamiltonFn) -> Outcome {
    let mut rng = rng_for(0, "selftest/hamilton");
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (a, b) = (random_quaternion(&mut rng), random_quaternion(&mut rng));
        worst = worst.max(max_component_diff(h(a, b), matrix_product(&a, &b)));
    }
    ensure(
        worst <= 1e-13,
        format!("max diff {worst:.3e} over 10000 products"),
    )
}

fn hamilton_identity(h: HamiltonFn) -> Outcome {
    let mut rng = rng_for(1, "selftest/identity");
    let bad = (0..100)
        .filter(|_| {
            let q = random_quaternion(&mut rng);
            h(Quaternion::IDENTITY, q) != q || h(q, Quaternion::IDENTITY) != q
        })
        .count();
    ensure(
        bad == 0,
        format!("{bad} of 100 identity products changed q"),
    )
}

fn conjugate_inverse(h: HamiltonFn) -> Outcome {
    let mut rng = rng_for(2, "selftest/conjugate");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = random_unit(&mut rng);
        worst = worst.max(max_component_diff(
            h(q, q.conjugate()),
            Quaternion::IDENTITY,
        ));
        if q.conjugate().conjugate() != q {
            return Err("conjugate is not an involution".into());
        }
    }
    ensure(worst <= 1e-12, format!("max |Q Q* - 1| = {worst:.3e}"))
}

fn unit_closure(h: HamiltonFn) -> Outcome {
    let mut rng = rng_for(3, "selftest/closure");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b) = (random_unit(&mut rng), random_unit(&mut rng));
        worst = worst.max((h(a, b).norm() - 1.0).abs());
    }
    ensure(worst <= 1e-12, format!("max norm drift {worst:.3e}"))
}

fn axis_rotor_values(_: HamiltonFn) -> Outcome {
    let x = axis_rotor(Axis::X, 2.0, 0.3).quaternion();
    let want = Quaternion::new(0.3f64.cos(), 0.3f64.sin(), 0.0, 0.0);
    let z = axis_rotor(Axis::Z, PI, 1.0).quaternion();
    let dz = max_component_diff(z, Quaternion::new(0.0, 0.0, 0.0, 1.0));
    let dx = max_component_diff(x, want);
    let zero = Axis::ALL
        .iter()
        .all(|&a| axis_rotor(a, 0.0, 0.7).quaternion() == Quaternion::IDENTITY);
    ensure(
        dx <= 1e-15 && dz <= 1e-15 && zero,
        format!("x diff {dx:.1e}, z diff {dz:.1e}"),
    )
}

fn euler_matrix_oracle(h: HamiltonFn) -> Outcome {
    let mut rng = rng_for(4, "selftest/euler");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = random_position(&mut rng, 5.0);
        let f = [
            rng.gen_range(0.05..1.0),
            rng.gen_range(0.05..1.0),
            rng.gen_range(0.05..1.0),
        ];
        let spec = FrequencySpec::new(f[0], f[1], f[2]).map_err(|e| e.to_string())?;
        let q = compose_rotor(p, &spec).quaternion();
        let m = euler_matrix(p, f);
        for e in Axis::ALL {
            let mut basis = [0.0; 3];
            basis[e.index()] = 1.0;
            let got = sandwich(h, q, Quaternion::from_vector(basis)).vector();
            let want = mat3_apply(&m, basis);
            for c in 0..3 {
                worst = worst.max((got[c] - want[c]).abs());
            }
        }
    }
    ensure(worst <= 1e-12, format!("max element error {worst:.3e}"))
}

fn real_part_invariance(h: HamiltonFn) -> Outcome {
    let mut rng = rng_for(5, "selftest/realpart");
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let q = random_unit(&mut rng);
        let k = random_quaternion(&mut rng);
        let r = h(h(q.conjugate(), k), q);
        worst = worst.max((r.w - k.w).abs());
    }
    ensure(worst <= 1e-13, format!("max |Re drift| {worst:.3e}"))
}

fn rotation_orthogonality(h: HamiltonFn) -> Outcome {
    let mut rng = rng_for(6, "selftest/orthogonality");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = random_unit(&mut rng);
        let a = Quaternion::pure(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let b = Quaternion::pure(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let ra = sandwich(h, q, a);
        let rb = sandwich(h, q, b);
        worst = worst.max((ra.dot(&rb) - a.dot(&b)).abs());
    }
    ensure(worst <= 1e-12, format!("max dot drift {worst:.3e}"))
}

fn residual_quadratic_law(_: HamiltonFn) -> Outcome {
    let mut rng = rng_for(7, "selftest/residual");
    let pairs: Vec<(Position3, Position3)> = (0..100)
        .map(|_| {
            (
                random_position(&mut rng, 3.0),
                random_position(&mut rng, 3.0),
            )
        })
        .collect();
    let freqs = [0.3, 0.15, 0.075];
    let mut means = Vec::new();
    for f in freqs {
        let spec = FrequencySpec::uniform(f).map_err(|e| e.to_string())?;
        let m = pairs
            .iter()
            .map(|(a, b)| relative_rotor_residual(*a, *b, &spec))
            .sum::<f64>()
            / pairs.len() as f64;
        means.push(m);
    }
    let slope = log_log_slope(&freqs, &means);
    ensure((1.8..=2.2).contains(&slope), format!("slope {slope:.3}"))
}

fn same_position_cancellation(_: HamiltonFn) -> Outcome {
    let mut rng = rng_for(8, "selftest/cancel");
    let plan = SegmentFrequencyPlan::constant(FrequencySpec::default(), 4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = SegmentedVector::new((0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .map_err(|e| e.to_string())?;
        let k = SegmentedVector::new((0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .map_err(|e| e.to_string())?;
        let m = random_position(&mut rng, 5.0);
        let s = pair_score(&q, &k, m, m, &plan).map_err(|e| e.to_string())?;
        worst = worst.max((s - q.dot(&k)).abs());
    }
    ensure(worst <= 1e-12, format!("max diff {worst:.3e}"))
}

fn z_translation_invariance(_: HamiltonFn) -> Outcome {
    let mut rng = rng_for(9, "selftest/ztrans");
    let plan = SegmentFrequencyPlan::constant(FrequencySpec::default(), 3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = SegmentedVector::new((0..9).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .map_err(|e| e.to_string())?;
        let (m, n) = (
            random_position(&mut rng, 5.0),
            random_position(&mut rng, 5.0),
        );
        let dz = Position3::new(0.0, 0.0, rng.gen_range(-10.0..10.0));
        let a = pair_score(&q, &q, m, n, &plan).map_err(|e| e.to_string())?;
        let b = pair_score(&q, &q, m + dz, n + dz, &plan).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
    }
    ensure(worst <= 1e-12, format!("max drift {worst:.3e}"))
}

fn monotone_decay(_: HamiltonFn) -> Outcome {
    let f = FrequencySpec::default();
    for axis in Axis::ALL {
        let limit = PI / f.get(axis);
        let inside: Vec<f64> = (0..100).map(|i| limit * i as f64 / 99.0).collect();
        let prof = decay_profile(axis, &inside, f);
        if prof.windows(2).any(|w| w[1].1 > w[0].1 + 1e-12) {
            return Err(format!("increase inside the half turn on {}", axis.label()));
        }
        let beyond: Vec<f64> = (0..100).map(|i| limit * (1.0 + i as f64 / 99.0)).collect();
        let prof = decay_profile(axis, &beyond, f);
        if !prof.windows(2).any(|w| w[1].1 > w[0].1 + 1e-12) {
            return Err(format!(
                "no wrap-around beyond the half turn on {}",
                axis.label()
            ));
        }
    }
    Ok("non-increasing on [0, pi/f], rising again beyond".into())
}

fn saturation_counterexample(_: HamiltonFn) -> Outcome {
    let f = FrequencySpec::default();
    let case = saturation_case(Axis::X, f.fx, 2.6).map_err(|e| e.to_string())?;
    let s = score_case(&case, f, ProbeKind::Neutral).map_err(|e| e.to_string())?;
    ensure(
        s.quatrope_correct() && !s.per_axis_correct(),
        format!(
            "rotor near {:.3} vs far {:.3}; per-axis near {:.3} vs far {:.3}",
            s.quatrope_near, s.quatrope_far, s.per_axis_near, s.per_axis_far
        ),
    )
}

fn random_tokens(rng: &mut ChaCha8Rng, t: usize, dim: usize) -> Vec<Token> {
    (0..t)
        .map(|i| Token {
            vector: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            role: if rng.gen_bool(0.5) {
                TokenRole::Object {
                    position: random_position(rng, 5.0),
                    object_id: i as u32,
                }
            } else {
                TokenRole::NonObject
            },
            seq_index: 2 * i + 1,
        })
        .collect()
}

fn lang_rope_norm(_: HamiltonFn) -> Outcome {
    let mut rng = rng_for(10, "selftest/rope");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = lang_rope(&v, rng.gen_range(0..4096), 10_000.0).map_err(|e| e.to_string())?;
        let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n1 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max((n0 - n1).abs());
    }
    ensure(worst <= 1e-12, format!("max norm drift {worst:.3e}"))
}

fn lang_rope_shift(_: HamiltonFn) -> Outcome {
    let mut rng = rng_for(11, "selftest/shift");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (i, j, c) = (
            rng.gen_range(0..512),
            rng.gen_range(0..512),
            rng.gen_range(0..512),
        );
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let rope = |v: &[f64], s| lang_rope(v, s, 10_000.0).map_err(|e| e.to_string());
        let a = dot(&rope(&q, i)?, &rope(&k, j)?);
        let b = dot(&rope(&q, i + c)?, &rope(&k, j + c)?);
        worst = worst.max((a - b).abs());
    }
    ensure(worst <= 1e-10, format!("max drift {worst:.3e}"))
}

fn gating_exactness(_: HamiltonFn) -> Outcome {
    let mut rng = rng_for(12, "selftest/gating");
    let cfg = AttentionConfig::new(8, 6).map_err(|e| e.to_string())?;
    for _ in 0..200 {
        let t = rng.gen_range(1..10);
        let tokens = random_tokens(&mut rng, t, 8);
        let delta = gating_delta(&tokens, &cfg).map_err(|e| e.to_string())?;
        for i in 0..t {
            for j in 0..t {
                let gated = !tokens[i].role.is_object() || !tokens[j].role.is_object();
                if gated && delta[i * t + j] != 0.0 {
                    return Err(format!("entry ({i},{j}) = {:e}", delta[i * t + j]));
                }
            }
        }
    }
    Ok("all non-object entries exactly 0.0 over 200 sequences".into())
}

fn origin_padding_leaks(_: HamiltonFn) -> Outcome {
    let cfg = AttentionConfig::new(4, 3)
        .map_err(|e| e.to_string())?
        .with_non_object(NonObjectExtension::Origin);
    let tokens = vec![
        Token {
            vector: vec![0.5; 4],
            role: TokenRole::NonObject,
            seq_index: 0,
        },
        Token {
            vector: vec![0.5; 4],
            role: TokenRole::Object {
                position: Position3::new(1.0, 2.0, 0.5),
                object_id: 0,
            },
            seq_index: 1,
        },
    ];
    let delta = gating_delta(&tokens, &cfg).map_err(|e| e.to_string())?;
    ensure(
        delta[1] != 0.0,
        format!("origin placement leaks {:.3e} into a mixed logit", delta[1]),
    )
}

fn extension_matches_pair_score(_: HamiltonFn) -> Outcome {
    let mut rng = rng_for(13, "selftest/extension");
    let cfg = AttentionConfig::new(4, 6).map_err(|e| e.to_string())?;
    let tiled = SegmentedVector::tiled(cfg.base_vector, 2).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (m, n) = (
            random_position(&mut rng, 5.0),
            random_position(&mut rng, 5.0),
        );
        let role = |p, id| TokenRole::Object {
            position: p,
            object_id: id,
        };
        let a = extension(&role(m, 0), &cfg);
        let b = extension(&role(n, 1), &cfg);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let want = pair_score(&tiled, &tiled, m, n, &cfg.freq_plan).map_err(|e| e.to_string())?;
        worst = worst.max((dot - want).abs());
    }
    ensure(worst <= 1e-12, format!("max diff {worst:.3e}"))
}

fn scale_mode_argmax(_: HamiltonFn) -> Outcome {
    let mut rng = rng_for(14, "selftest/scale");
    let base = AttentionConfig::new(8, 6).map_err(|e| e.to_string())?;
    let total = base.clone().with_scale_mode(ScaleMode::Total);
    for _ in 0..100 {
        let tokens = random_tokens(&mut rng, 6, 8);
        let a = attention_logits(&tokens, &base, MaskKind::Full).map_err(|e| e.to_string())?;
        let b = attention_logits(&tokens, &total, MaskKind::Full).map_err(|e| e.to_string())?;
        let ratio = base.scale() / total.scale();
        for (x, y) in a.logits.iter().zip(&b.logits) {
            if (x * ratio - y).abs() > 1e-12 * x.abs().max(1.0) {
                return Err("logits are not a common multiple".into());
            }
        }
        for r in 0..6 {
            if crate::toy::argmax(a.row(r)) != crate::toy::argmax(b.row(r)) {
                return Err(format!("row {r} argmax changed"));
            }
        }
    }
    Ok("argmax unchanged over 100 sequences".into())
}

fn budget_arithmetic(_: HamiltonFn) -> Outcome {
    let b = relation_budget(554, 2).map_err(|e| e.to_string())?;
    if b.full_pair_count != 153_181 {
        return Err(format!("554 objects gave {}", b.full_pair_count));
    }
    for n in 2..=100u64 {
        let mut count = 0;
        for i in 0..n {
            for _ in i + 1..n {
                count += 1;
            }
        }
        let got = relation_budget(n, 1)
            .map_err(|e| e.to_string())?
            .full_pair_count;
        if got != count {
            return Err(format!("n={n}: formula {got}, enumeration {count}"));
        }
    }
    Ok("554 -> 153181; formula matches enumeration up to 100".into())
}

fn dominance_gate_example(_: HamiltonFn) -> Outcome {
    let mk = |i: u32, x, y| SceneObject {
        object_id: i,
        category: 0,
        center: Position3::new(x, y, 0.0),
    };
    let scene = Scene {
        scene_id: 0,
        objects: vec![mk(0, 0.0, 0.0), mk(1, -2.0, 0.1), mk(2, -1.0, -3.0)],
        extent: Aabb::default(),
    };
    let ranked = relation_oracle(&scene, Relation::LeftOf, &[0]).map_err(|e| e.to_string())?;
    ensure(
        ranked.first().map(|c| c.object_id) == Some(1),
        format!(
            "ranking {:?}",
            ranked.iter().map(|c| c.object_id).collect::<Vec<_>>()
        ),
    )
}

fn knn_counterexample(_: HamiltonFn) -> Outcome {
    let (scene, q) = pruning_counterexample();
    let r2 = knn_relation_recall(&scene, std::slice::from_ref(&q), 2);
    ensure(r2 == 0.0, format!("recall at k=2 is {r2}"))
}

fn scene_determinism(_: HamiltonFn) -> Outcome {
    let a = gen_scene(42, 10, Aabb::default(), 4).map_err(|e| e.to_string())?;
    let b = gen_scene(42, 10, Aabb::default(), 4).map_err(|e| e.to_string())?;
    a.validate().map_err(|e| e.to_string())?;
    ensure(a == b, "two generations from one seed differ".into())
}

fn small_model() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            d_model: 12,
            heads: 2,
            layers: 2,
            n_categories: 3,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn gradient_fidelity(_: HamiltonFn) -> Outcome {
    let (mut scene, _) = pruning_counterexample();
    scene.objects.truncate(4);
    let ex = Example {
        query: crate::scenegen::SpatialQuery {
            relation: Relation::NearestTo,
            anchor_ids: vec![0],
            target_id: 1,
            margin: 0.1,
        },
        scene,
    };
    let mut worst: f64 = 0.0;
    for mode in PositionalMode::ALL {
        let cfg = TrainConfig {
            mode,
            ..small_model()
        };
        let p = ToyModelParams::init(&cfg.model, 1);
        for b in gradient_check(&ex, &p, &cfg, 1e-5).map_err(|e| e.to_string())? {
            worst = worst.max(b.relative_error);
        }
    }
    ensure(
        worst < 1e-5,
        format!("worst block relative error {worst:.3e}"),
    )
}

fn checkpoint_round_trip(_: HamiltonFn) -> Outcome {
    let cfg = small_model();
    let p = ToyModelParams::init(&cfg.model, 4);
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &p, &cfg).map_err(|e| e.to_string())?;
    let (_, back) = read_checkpoint(buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(back == p, format!("{} bytes", buf.len()))
}

type Check = (&'static str, &'static str, fn(HamiltonFn) -> Outcome);

const CHECKS: &[Check] = &[
    ("algebra", "hamilton_basis", hamilton_basis),
    ("algebra", "hamilton_matrix_oracle", hamilton_matrix_oracle),
    ("algebra", "hamilton_identity", hamilton_identity),
    ("algebra", "conjugate_inverse", conjugate_inverse),
    ("algebra", "unit_closure", unit_closure),
    ("rotor", "axis_rotor_values", axis_rotor_values),
    ("rotor", "euler_matrix_oracle", euler_matrix_oracle),
    ("rotor", "real_part_invariance", real_part_invariance),
    ("rotor", "rotation_orthogonality", rotation_orthogonality),
    ("rotor", "residual_quadratic_law", residual_quadratic_law),
    (
        "encoding",
        "same_position_cancellation",
        same_position_cancellation,
    ),
    (
        "encoding",
        "z_translation_invariance",
        z_translation_invariance,
    ),
    ("encoding", "monotone_decay", monotone_decay),
    (
        "encoding",
        "saturation_counterexample",
        saturation_counterexample,
    ),
    ("attention", "lang_rope_norm", lang_rope_norm),
    ("attention", "lang_rope_shift", lang_rope_shift),
    ("attention", "gating_exactness", gating_exactness),
    ("attention", "origin_padding_leaks", origin_padding_leaks),
    (
        "attention",
        "extension_matches_pair_score",
        extension_matches_pair_score,
    ),
    ("attention", "scale_mode_argmax", scale_mode_argmax),
    ("scenes", "budget_arithmetic", budget_arithmetic),
    ("scenes", "dominance_gate_example", dominance_gate_example),
    ("scenes", "knn_counterexample", knn_counterexample),
    ("scenes", "scene_determinism", scene_determinism),
    ("model", "gradient_fidelity", gradient_fidelity),
    ("model", "checkpoint_round_trip", checkpoint_round_trip),
];

/// Runs every check with the crate's own Hamilton product.
pub fn run() -> Vec<CheckResult> {
    run_with(hamilton_product)
}

pub fn run_with(hamilton: HamiltonFn) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(group, name, check)| {
            let (passed, detail) = match check(hamilton) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                group,
                name,
                passed,
                detail,
            }
        })
        .collect()
}

pub fn render_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{:<4}  {:<9} {:<width$}  {}\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.group,
            r.name,
            r.detail
        ));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    out.push_str(&format!(
        "{} checks run, {} passed, {} failed\n",
        results.len(),
        results.len() - failed,
        failed
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flipped(a: Quaternion, b: Quaternion) -> Quaternion {
        let mut q = hamilton_product(a, b);
        q.z -= 2.0 * a.x * b.y;
        q
    }

    #[test]
    fn broken_kernel_is_caught_by_algebra_checks() {
        let results = run_with(flipped);
        let failed: Vec<_> = results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.name)
            .collect();
        assert!(failed.contains(&"hamilton_basis"));
        assert!(failed.contains(&"hamilton_matrix_oracle"));
    }
}
