//! C interface to the quatrope encoders, the IGRE attention logits and the
//! synthetic scene generator.
//!
//! Every entry point returns a [`QrStatus`]; results go through out-pointers.
//! On failure a message is stored per thread and can be copied out with
//! [`qr_last_error_message`]. Handles are opaque and must be released with
//! their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use quatrope::igre::{attention_logits_qk, MaskKind};
use quatrope::scenegen::{gen_scene, relation_budget, Aabb, Scene};
use quatrope::{
    compose_rotor, AttentionConfig, Error, FrequencySpec, Position3, SegmentFrequencyPlan,
    SegmentedVector, TokenRole,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalFault = 3,
    BufferTooSmall = 4,
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> QrStatus {
    match e {
        Error::NumericalFault { .. } | Error::Divergence { .. } | Error::NonFinite(_) => {
            QrStatus::NumericalFault
        }
        _ => QrStatus::InvalidArgument,
    }
}

struct Fail(QrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QrStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> QrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QrStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QrStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn triple(p: *const f64, what: &str) -> Result<[f64; 3], Fail> {
    let s = slice(p, 3, what)?;
    Ok([s[0], s[1], s[2]])
}

unsafe fn position(p: *const f64, what: &str) -> Result<Position3, Fail> {
    let p = Position3::from_array(triple(p, what)?);
    if !p.is_finite() {
        return Err(Error::NonFinite("position").into());
    }
    Ok(p)
}

unsafe fn frequency(p: *const f64) -> Result<FrequencySpec, Fail> {
    let [x, y, z] = triple(p, "frequency")?;
    Ok(FrequencySpec::new(x, y, z)?)
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length, or 0 when
/// there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Rotor `Qz * Qy * Qx` for a position; writes `(w, x, y, z)` to `out`.
///
/// # Safety
/// `pos` and `freq` point to 3 doubles, `out` to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qr_compose_rotor(
    pos: *const f64,
    freq: *const f64,
    out: *mut f64,
) -> QrStatus {
    guard(|| {
        let p = position(pos, "pos")?;
        let f = frequency(freq)?;
        let out = slice_mut(out, 4, "out")?;
        out.copy_from_slice(&compose_rotor(p, &f).quaternion().to_array());
        Ok(())
    })
}

/// Rotates every 3-component segment of `v` by the rotor of `pos`, with one
/// frequency triple shared by all segments.
///
/// # Safety
/// `v` and `out` point to `len` doubles; `pos` and `freq` to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn qr_apply_quatrope(
    v: *const f64,
    len: usize,
    pos: *const f64,
    freq: *const f64,
    out: *mut f64,
) -> QrStatus {
    guard(|| {
        let v = SegmentedVector::new(slice(v, len, "v")?.to_vec())?;
        let p = position(pos, "pos")?;
        let plan = SegmentFrequencyPlan::constant(frequency(freq)?, v.segment_count());
        let r = quatrope::apply_quatrope(&v, p, &plan)?;
        slice_mut(out, len, "out")?.copy_from_slice(r.as_slice());
        Ok(())
    })
}

/// Score `<R(m) q, R(n) k>` of two vectors at positions `m` and `n`.
///
/// # Safety
/// `q` and `k` point to `len` doubles; `m`, `n`, `freq` to 3 doubles; `out`
/// to one writable double.
#[no_mangle]
pub unsafe extern "C" fn qr_pair_score(
    q: *const f64,
    k: *const f64,
    len: usize,
    m: *const f64,
    n: *const f64,
    freq: *const f64,
    out: *mut f64,
) -> QrStatus {
    guard(|| {
        let q = SegmentedVector::new(slice(q, len, "q")?.to_vec())?;
        let k = SegmentedVector::new(slice(k, len, "k")?.to_vec())?;
        let plan = SegmentFrequencyPlan::constant(frequency(freq)?, q.segment_count());
        let s = quatrope::pair_score(&q, &k, position(m, "m")?, position(n, "n")?, &plan)?;
        *slice_mut(out, 1, "out")?.first_mut().expect("len 1") = s;
        Ok(())
    })
}

/// Attention configuration handle.
pub struct QrAttention {
    cfg: AttentionConfig,
}

/// Creates an attention configuration with a uniform frequency, base vector
/// `(1, 0, 0)` and zero padding for non-object tokens.
///
/// # Safety
/// `out` must point to a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn qr_attention_new(
    base_dim: usize,
    ext_dim: usize,
    frequency: f64,
    out: *mut *mut QrAttention,
) -> QrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let f = FrequencySpec::uniform(frequency)?;
        let cfg = AttentionConfig::new(base_dim, ext_dim)?.with_frequency(f);
        *out = Box::into_raw(Box::new(QrAttention { cfg }));
        Ok(())
    })
}

/// Scaled `t x t` logits, row-major, no mask. Token `i` uses row `i` of
/// `vectors` (`t * base_dim` doubles) as query and key, sequence index `i`,
/// and when `is_object[i] != 0` the position in row `i` of `positions`
/// (`t * 3` doubles).
///
/// # Safety
/// All pointers must be valid for the sizes above; `out` holds `t * t`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn qr_attention_logits(
    handle: *const QrAttention,
    vectors: *const f64,
    positions: *const f64,
    is_object: *const u8,
    t: usize,
    out: *mut f64,
) -> QrStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        let d = h.cfg.base_dim;
        let vectors = slice(vectors, t * d, "vectors")?;
        let positions = slice(positions, t * 3, "positions")?;
        let flags = slice(is_object, t, "is_object")?;
        let out = slice_mut(out, t * t, "out")?;
        let rows: Vec<Vec<f64>> = vectors
            .chunks_exact(d.max(1))
            .take(t)
            .map(<[f64]>::to_vec)
            .collect();
        let roles: Vec<TokenRole> = (0..t)
            .map(|i| {
                if flags[i] != 0 {
                    TokenRole::Object {
                        position: Position3::from_array([
                            positions[3 * i],
                            positions[3 * i + 1],
                            positions[3 * i + 2],
                        ]),
                        object_id: i as u32,
                    }
                } else {
                    TokenRole::NonObject
                }
            })
            .collect();
        let seq: Vec<usize> = (0..t).collect();
        let m = attention_logits_qk(&rows, &rows, &roles, &seq, &h.cfg, MaskKind::Full)?;
        for (i, row) in out.chunks_exact_mut(t.max(1)).enumerate().take(t) {
            row.copy_from_slice(m.row(i));
        }
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from [`qr_attention_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn qr_attention_free(handle: *mut QrAttention) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Generated scene handle.
pub struct QrScene {
    scene: Scene,
}

/// Generates a scene of `n_objects` objects in the default room.
///
/// # Safety
/// `out` must point to a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn qr_scene_generate(
    seed: u64,
    n_objects: usize,
    n_categories: u32,
    out: *mut *mut QrScene,
) -> QrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scene = gen_scene(seed, n_objects, Aabb::default(), n_categories)?;
        *out = Box::into_raw(Box::new(QrScene { scene }));
        Ok(())
    })
}

/// Number of objects in the scene, 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live scene handle.
#[no_mangle]
pub unsafe extern "C" fn qr_scene_len(handle: *const QrScene) -> usize {
    handle.as_ref().map_or(0, |h| h.scene.len())
}

/// Writes object centers as `x, y, z` triples in object order.
///
/// # Safety
/// `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qr_scene_positions(
    handle: *const QrScene,
    out: *mut f64,
    cap: usize,
) -> QrStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        let need = 3 * h.scene.len();
        if cap < need {
            return Err(Fail(
                QrStatus::BufferTooSmall,
                format!("need {need} doubles, got {cap}"),
            ));
        }
        let out = slice_mut(out, need, "out")?;
        for (chunk, o) in out.chunks_exact_mut(3).zip(&h.scene.objects) {
            chunk.copy_from_slice(&o.center.to_array());
        }
        Ok(())
    })
}

/// Serializes the scene as JSON. Release the string with [`qr_string_free`].
///
/// # Safety
/// `out` must point to a writable string pointer.
#[no_mangle]
pub unsafe extern "C" fn qr_scene_to_json(
    handle: *const QrScene,
    out: *mut *mut c_char,
) -> QrStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json =
            serde_json::to_string(&h.scene).map_err(|e| Fail(QrStatus::Internal, e.to_string()))?;
        let s = CString::new(json).map_err(|e| Fail(QrStatus::Internal, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from [`qr_scene_generate`], freed once.
#[no_mangle]
pub unsafe extern "C" fn qr_scene_free(handle: *mut QrScene) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QrBudget {
    pub full_pair_count: u64,
    pub directed_pair_count: u64,
    pub knn_edge_count: u64,
}

/// Relation counts for `n` objects with `k` nearest neighbours each.
///
/// # Safety
/// `out` must point to a writable [`QrBudget`].
#[no_mangle]
pub unsafe extern "C" fn qr_relation_budget(n: u64, k: u64, out: *mut QrBudget) -> QrStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let b = relation_budget(n, k)?;
        *out = QrBudget {
            full_pair_count: b.full_pair_count,
            directed_pair_count: b.directed_pair_count,
            knn_edge_count: b.knn_edge_count,
        };
        Ok(())
    })
}
