//! Reference implementations used to check the production code paths.
//!
//! Nothing here is called by the encoders themselves. Each routine takes a
//! different algebraic route (explicit matrices, finite differences) so that
//! agreement is evidence of correctness rather than of shared bugs.

use crate::quaternion::{Axis, Position3, Quaternion};

pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];

/// Left-multiplication matrix `L(a)` with `a * b = L(a) b` in `(w, x, y, z)`
/// coordinates.
pub fn left_mult_matrix(a: &Quaternion) -> Mat4 {
    let (w, x, y, z) = (a.w, a.x, a.y, a.z);
    [[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]]
}

pub fn matrix_product(a: &Quaternion, b: &Quaternion) -> Quaternion {
    let l = left_mult_matrix(a);
    let v = b.to_array();
    let mut out = [0.0; 4];
    for (r, row) in l.iter().enumerate() {
        out[r] = row.iter().zip(v.iter()).map(|(m, x)| m * x).sum();
    }
    Quaternion::new(out[0], out[1], out[2], out[3])
}

/// Right-handed rotation matrix by `angle` about a coordinate axis.
pub fn axis_matrix(axis: Axis, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    match axis {
        Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat3_apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, row) in m.iter().enumerate() {
        out[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

pub fn mat3_transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

/// `Rz(pz fz) Ry(py fy) Rx(px fx)` built from plain rotation matrices.
pub fn euler_matrix(p: Position3, f: [f64; 3]) -> Mat3 {
    let rx = axis_matrix(Axis::X, p.x * f[0]);
    let ry = axis_matrix(Axis::Y, p.y * f[1]);
    let rz = axis_matrix(Axis::Z, p.z * f[2]);
    mat3_mul(&rz, &mat3_mul(&ry, &rx))
}

/// Score of two segmented vectors rotated by their Euler matrices, summed
/// over segments.
pub fn matrix_pair_score(q: &[f64], k: &[f64], m: Position3, n: Position3, f: [f64; 3]) -> f64 {
    let rm = euler_matrix(m, f);
    let rn = euler_matrix(n, f);
    q.chunks_exact(3)
        .zip(k.chunks_exact(3))
        .map(|(a, b)| {
            let ra = mat3_apply(&rm, [a[0], a[1], a[2]]);
            let rb = mat3_apply(&rn, [b[0], b[1], b[2]]);
            ra[0] * rb[0] + ra[1] * rb[1] + ra[2] * rb[2]
        })
        .sum()
}

/// Least-squares slope of `ln(y)` against `ln(x)`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Central finite difference of `f` with respect to every entry of `x`.
pub fn central_difference<F>(x: &mut [f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(x);
        x[i] = orig - step;
        let minus = f(x);
        x[i] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
