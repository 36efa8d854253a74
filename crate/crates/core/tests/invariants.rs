use proptest::prelude::*;

use quatrope::encoding::{aspect_ratio_delta, per_axis_pair_score};
use quatrope::igre::{lang_rope, ordered_dot};
use quatrope::oracle::matrix_product;
use quatrope::scenegen::{
    generate_dataset, read_jsonl, relation_budget, write_jsonl, DatasetHeader, GenConfig,
};
use quatrope::{
    compose_rotor, hamilton_product, pair_score, rotate_pure, FrequencySpec, Position3, Quaternion,
    SegmentFrequencyPlan, SegmentedVector, UnitQuaternion,
};

fn quat() -> impl Strategy<Value = Quaternion> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64)
        .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z))
}

fn unit() -> impl Strategy<Value = UnitQuaternion> {
    quat()
        .prop_filter("not near zero", |q| q.norm() > 1e-3)
        .prop_map(|q| UnitQuaternion::normalize(q).unwrap())
}

fn position(scale: f64) -> impl Strategy<Value = Position3> {
    (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Position3::new(x, y, z))
}

fn frequency() -> impl Strategy<Value = FrequencySpec> {
    (0.01..1.0f64, 0.01..1.0f64, 0.01..1.0f64)
        .prop_map(|(x, y, z)| FrequencySpec::new(x, y, z).unwrap())
}

fn segmented(segments: usize) -> impl Strategy<Value = SegmentedVector> {
    prop::collection::vec(-1.0..1.0f64, 3 * segments).prop_map(|v| SegmentedVector::new(v).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn product_matches_matrix_form(a in quat(), b in quat()) {
        let x = hamilton_product(a, b).to_array();
        let y = matrix_product(&a, &b).to_array();
        for i in 0..4 {
            prop_assert!(close(x[i], y[i], 1e-13));
        }
    }

    #[test]
    fn norm_is_multiplicative(a in quat(), b in quat()) {
        prop_assert!(close(hamilton_product(a, b).norm(), a.norm() * b.norm(), 1e-13));
    }

    #[test]
    fn product_is_associative(a in quat(), b in quat(), c in quat()) {
        let l = hamilton_product(hamilton_product(a, b), c).to_array();
        let r = hamilton_product(a, hamilton_product(b, c)).to_array();
        for i in 0..4 {
            prop_assert!(close(l[i], r[i], 1e-12));
        }
    }

    #[test]
    fn conjugate_reverses_products(a in quat(), b in quat()) {
        let l = hamilton_product(a, b).conjugate().to_array();
        let r = hamilton_product(b.conjugate(), a.conjugate()).to_array();
        for i in 0..4 {
            prop_assert!(close(l[i], r[i], 1e-13));
        }
    }

    #[test]
    fn rotation_preserves_length_and_ignores_sign(u in unit(), v in prop::array::uniform3(-3.0..3.0f64)) {
        let q = u.quaternion();
        let a = rotate_pure(q, Quaternion::from_vector(v)).unwrap();
        let b = rotate_pure(-q, Quaternion::from_vector(v)).unwrap();
        prop_assert_eq!(a.w, 0.0);
        let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(close(a.norm(), n0, 1e-12));
        for (x, y) in a.vector().iter().zip(b.vector()) {
            prop_assert!(close(*x, y, 1e-12));
        }
    }

    #[test]
    fn composed_rotors_are_unit(p in position(20.0), f in frequency()) {
        prop_assert!((compose_rotor(p, &f).quaternion().norm() - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn same_position_gives_plain_dot(q in segmented(3), k in segmented(3), m in position(5.0), f in frequency()) {
        let plan = SegmentFrequencyPlan::constant(f, 3);
        prop_assert!(close(pair_score(&q, &k, m, m, &plan).unwrap(), q.dot(&k), 1e-12));
        prop_assert!(close(per_axis_pair_score(&q, &k, m, m, &plan).unwrap(), q.dot(&k), 1e-12));
    }

    #[test]
    fn vertical_shift_is_invisible(q in segmented(3), k in segmented(3), m in position(5.0), n in position(5.0), dz in -20.0..20.0f64, f in frequency()) {
        let plan = SegmentFrequencyPlan::constant(f, 3);
        let t = Position3::new(0.0, 0.0, dz);
        let a = pair_score(&q, &k, m, n, &plan).unwrap();
        let b = pair_score(&q, &k, m + t, n + t, &plan).unwrap();
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn per_axis_scores_depend_on_offsets_only(q in segmented(3), k in segmented(3), m in position(5.0), n in position(5.0), t in position(10.0), f in frequency()) {
        let plan = SegmentFrequencyPlan::constant(f, 3);
        let a = per_axis_pair_score(&q, &k, m, n, &plan).unwrap();
        let b = per_axis_pair_score(&q, &k, m + t, n + t, &plan).unwrap();
        prop_assert!(close(a, b, 1e-11));
    }

    #[test]
    fn lang_rope_depends_on_offset(v in prop::collection::vec(-1.0..1.0f64, 8), w in prop::collection::vec(-1.0..1.0f64, 8), a in 0usize..500, b in 0usize..500, shift in 0usize..500) {
        let s0 = ordered_dot(&lang_rope(&v, a, 1e4).unwrap(), &lang_rope(&w, b, 1e4).unwrap());
        let s1 = ordered_dot(&lang_rope(&v, a + shift, 1e4).unwrap(), &lang_rope(&w, b + shift, 1e4).unwrap());
        prop_assert!(close(s0, s1, 1e-10));
    }

    #[test]
    fn aspect_ratio_is_a_fraction(p in position(10.0)) {
        if let Some(d) = aspect_ratio_delta(p) {
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn budget_counts_are_consistent(n in 2u64..100_000, k in 1u64..64) {
        let b = relation_budget(n, k).unwrap();
        prop_assert_eq!(b.directed_pair_count, 2 * b.full_pair_count);
        prop_assert!(b.knn_edge_count <= b.directed_pair_count);
    }

    #[test]
    fn segmented_vectors_need_whole_segments(len in 0usize..20) {
        prop_assert_eq!(SegmentedVector::new(vec![0.5; len]).is_ok(), len > 0 && len % 3 == 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn datasets_round_trip_through_jsonl(seed in any::<u64>()) {
        let cfg = GenConfig { n_scenes: 3, ..GenConfig::default() };
        let records = generate_dataset(seed, &cfg).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &DatasetHeader::new(seed, cfg), &records).unwrap();
        let (header, back) = read_jsonl(buf.as_slice(), "memory").unwrap();
        prop_assert!(header.is_some());
        prop_assert_eq!(back, records);
    }
}
