use std::ffi::{c_char, CStr};
use std::process::Command;
use std::ptr;

use quatrope::{compose_rotor, FrequencySpec, Position3};
use quatrope_ffi::*;

const F: [f64; 3] = [0.3, 0.3, 0.3];

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { qr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0, "expected an error message");
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn rotor_matches_the_library() {
    let p = [1.0, -2.0, 0.5];
    let mut out = [0.0; 4];
    assert_eq!(
        unsafe { qr_compose_rotor(p.as_ptr(), F.as_ptr(), out.as_mut_ptr()) },
        QrStatus::Ok
    );
    let expect = compose_rotor(
        Position3::from_array(p),
        &FrequencySpec::uniform(0.3).unwrap(),
    );
    assert_eq!(out, expect.quaternion().to_array());
}

#[test]
fn null_and_invalid_inputs_report_status() {
    let mut out = [0.0; 4];
    let s = unsafe { qr_compose_rotor(ptr::null(), F.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(s, QrStatus::NullPointer);
    assert!(last_error().contains("pos"));

    let bad = [0.3, -1.0, 0.3];
    let p = [0.0; 3];
    let s = unsafe { qr_compose_rotor(p.as_ptr(), bad.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(s, QrStatus::InvalidArgument);
    assert!(last_error().contains("frequency"));

    let v = [1.0; 4];
    let mut o = [0.0; 4];
    let s = unsafe { qr_apply_quatrope(v.as_ptr(), 4, p.as_ptr(), F.as_ptr(), o.as_mut_ptr()) };
    assert_eq!(s, QrStatus::InvalidArgument);

    let nan = [f64::NAN, 0.0, 0.0];
    let s = unsafe { qr_compose_rotor(nan.as_ptr(), F.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(s, QrStatus::NumericalFault);
}

#[test]
fn pair_score_ignores_common_z_shift() {
    let q = [0.3, -1.0, 0.7, 1.1, 0.2, -0.4];
    let k = [-0.5, 0.9, 0.1, 0.6, -0.8, 0.3];
    let (m, n) = ([1.0, 2.0, 0.5], [-0.5, 1.0, 2.0]);
    let shift = [0.0, 0.0, 4.25];
    let ms: Vec<f64> = m.iter().zip(&shift).map(|(a, b)| a + b).collect();
    let ns: Vec<f64> = n.iter().zip(&shift).map(|(a, b)| a + b).collect();
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            qr_pair_score(
                q.as_ptr(),
                k.as_ptr(),
                6,
                m.as_ptr(),
                n.as_ptr(),
                F.as_ptr(),
                &mut a
            ),
            QrStatus::Ok
        );
        assert_eq!(
            qr_pair_score(
                q.as_ptr(),
                k.as_ptr(),
                6,
                ms.as_ptr(),
                ns.as_ptr(),
                F.as_ptr(),
                &mut b
            ),
            QrStatus::Ok
        );
    }
    assert!((a - b).abs() <= 1e-12);

    let mut same = 0.0;
    unsafe {
        qr_pair_score(
            q.as_ptr(),
            k.as_ptr(),
            6,
            m.as_ptr(),
            m.as_ptr(),
            F.as_ptr(),
            &mut same,
        )
    };
    let dot: f64 = q.iter().zip(&k).map(|(x, y)| x * y).sum();
    assert!((same - dot).abs() <= 1e-12);
}

#[test]
fn attention_handle_round_trip() {
    let mut h: *mut QrAttention = ptr::null_mut();
    assert_eq!(unsafe { qr_attention_new(4, 6, 0.3, &mut h) }, QrStatus::Ok);
    let vectors = [
        0.1, 0.2, 0.3, 0.4, //
        -0.3, 0.5, 0.2, -0.1, //
        0.7, -0.2, 0.0, 0.3,
    ];
    let positions = [0.0, 0.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.0, 0.0];
    let flags = [0u8, 1, 1];
    let mut out = [0.0; 9];
    let s = unsafe {
        qr_attention_logits(
            h,
            vectors.as_ptr(),
            positions.as_ptr(),
            flags.as_ptr(),
            3,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(s, QrStatus::Ok);
    assert!(out.iter().all(|x| x.is_finite()));
    // Logits are a symmetric bilinear form when queries equal keys.
    for i in 0..3 {
        for j in 0..3 {
            assert!((out[3 * i + j] - out[3 * j + i]).abs() <= 1e-12);
        }
    }
    unsafe { qr_attention_free(h) };

    let s = unsafe { qr_attention_new(4, 5, 0.3, &mut h) };
    assert_eq!(s, QrStatus::InvalidArgument);
}

#[test]
fn scene_handle_round_trip() {
    let mut h: *mut QrScene = ptr::null_mut();
    assert_eq!(unsafe { qr_scene_generate(7, 8, 4, &mut h) }, QrStatus::Ok);
    assert_eq!(unsafe { qr_scene_len(h) }, 8);

    let mut small = [0.0; 6];
    assert_eq!(
        unsafe { qr_scene_positions(h, small.as_mut_ptr(), small.len()) },
        QrStatus::BufferTooSmall
    );
    let mut pos = [0.0; 24];
    assert_eq!(
        unsafe { qr_scene_positions(h, pos.as_mut_ptr(), pos.len()) },
        QrStatus::Ok
    );

    let mut s: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { qr_scene_to_json(h, &mut s) }, QrStatus::Ok);
    let json = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { qr_string_free(s) };
    let scene: quatrope::scenegen::Scene = serde_json::from_str(&json).unwrap();
    assert_eq!(
        scene.objects[3].center.to_array(),
        [pos[9], pos[10], pos[11]]
    );
    unsafe { qr_scene_free(h) };
    assert_eq!(unsafe { qr_scene_len(ptr::null()) }, 0);
}

#[test]
fn budget_counts() {
    let mut b = QrBudget::default();
    assert_eq!(unsafe { qr_relation_budget(554, 2, &mut b) }, QrStatus::Ok);
    assert_eq!(b.full_pair_count, 153_181);
    assert_eq!(b.knn_edge_count, 1_108);
    assert_eq!(
        unsafe { qr_relation_budget(1, 2, &mut b) },
        QrStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { qr_relation_budget(5, 2, ptr::null_mut()) },
        QrStatus::NullPointer
    );
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/quatrope.h");
    let dir = tempfile::tempdir().unwrap();
    for (compiler, ext) in [("cc", "c"), ("c++", "cpp")] {
        if Command::new(compiler).arg("--version").output().is_err() {
            eprintln!("{compiler} not found, skipping");
            continue;
        }
        let src = dir.path().join(format!("probe.{ext}"));
        std::fs::write(
            &src,
            format!(
                "#include \"{header}\"\nint probe(void) {{ QrBudget b; return (int)qr_relation_budget(4, 1, &b); }}\n"
            ),
        )
        .unwrap();
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror"])
            .arg(&src)
            .status()
            .unwrap();
        assert!(status.success(), "{compiler} rejected the header");
    }
}
