//! Small dense complex linear algebra helpers on top of faer.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

pub type CMat = Mat<C64>;

/// Eigenvector condition number above which exponentials fall back to Padé.
pub const EIG_COND_LIMIT: f64 = 1e8;

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::zeros(r, c)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn frobenius_sqr(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s
}

pub fn norm1(a: MatRef<'_, C64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn matmul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    a * b
}

pub fn scale(a: MatRef<'_, C64>, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn inverse(a: MatRef<'_, C64>) -> Option<CMat> {
    let inv = a.partial_piv_lu().inverse();
    if inv.col_iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite())) {
        Some(inv)
    } else {
        None
    }
}

pub fn determinant(a: MatRef<'_, C64>) -> C64 {
    if a.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    a.determinant()
}

/// Solves `a x = b`.
pub fn solve(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    use faer::linalg::solvers::Solve;
    a.partial_piv_lu().solve(b)
}

pub fn is_hermitian(a: MatRef<'_, C64>, tol: f64) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| (a[(i, j)] - a[(j, i)].conj()).norm() <= tol))
}

pub fn is_symmetric(a: MatRef<'_, C64>, tol: f64) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| (a[(i, j)] - a[(j, i)]).norm() <= tol))
}

/// Eigenpairs of a general complex matrix (unsorted).
pub fn eig(a: MatRef<'_, C64>) -> Option<(Vec<C64>, CMat)> {
    let e = a.eigen().ok()?;
    let s = e.S().column_vector();
    let vals: Vec<C64> = (0..a.nrows()).map(|i| s[i]).collect();
    Some((vals, e.U().to_owned()))
}

/// Eigenpairs of a hermitian matrix, eigenvalues ascending.
pub fn eigh(a: MatRef<'_, C64>) -> Option<(Vec<f64>, CMat)> {
    let e = a.self_adjoint_eigen(Side::Lower).ok()?;
    let s = e.S().column_vector();
    let vals: Vec<f64> = (0..a.nrows()).map(|i| s[i].re).collect();
    Some((vals, e.U().to_owned()))
}

/// `exp(s·A)` and `exp(−s·A)` together.
pub struct ExpPair {
    pub forward: CMat,
    pub backward: CMat,
    pub fallback: bool,
}

/// Exponential pair by diagonalisation, Padé fallback when the eigenbasis is
/// ill-conditioned.
pub fn exp_pair(a: MatRef<'_, C64>, s: C64) -> ExpPair {
    let n = a.nrows();
    if n == 1 {
        let z = a[(0, 0)] * s;
        return ExpPair {
            forward: Mat::from_fn(1, 1, |_, _| z.exp()),
            backward: Mat::from_fn(1, 1, |_, _| (-z).exp()),
            fallback: false,
        };
    }
    if let Some((vals, v)) = eig(a) {
        if let Some(vinv) = inverse(v.as_ref()) {
            let cond = frobenius_sqr(v.as_ref()).sqrt() * frobenius_sqr(vinv.as_ref()).sqrt();
            if cond.is_finite() && cond < EIG_COND_LIMIT {
                let build = |sign: f64| {
                    let d: Vec<C64> = vals.iter().map(|&l| (l * s * sign).exp()).collect();
                    let vd = Mat::from_fn(n, n, |i, j| v[(i, j)] * d[j]);
                    &vd * &vinv
                };
                return ExpPair { forward: build(1.0), backward: build(-1.0), fallback: false };
            }
        }
    }
    let sa = scale(a, s);
    let msa = scale(a, -s);
    ExpPair { forward: expm(sa.as_ref()), backward: expm(msa.as_ref()), fallback: true }
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: MatRef<'_, C64>) -> CMat {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let nrm = norm1(a);
    let sq = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let f = C64::new(0.5f64.powi(sq), 0.0);
    let a1 = scale(a, f);
    let id = identity(n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c: [f64; 4]| {
        Mat::from_fn(n, n, |i, j| {
            a6[(i, j)] * c[0] + a4[(i, j)] * c[1] + a2[(i, j)] * c[2] + id[(i, j)] * c[3]
        })
    };
    let u_in = Mat::from_fn(n, n, |i, j| a6[(i, j)] * B[13] + a4[(i, j)] * B[11] + a2[(i, j)] * B[9]);
    let u_tail = lin([B[7], B[5], B[3], B[1]]);
    let u = &a1 * &(&(&a6 * &u_in) + &u_tail);
    let v_in = Mat::from_fn(n, n, |i, j| a6[(i, j)] * B[12] + a4[(i, j)] * B[10] + a2[(i, j)] * B[8]);
    let v_tail = lin([B[6], B[4], B[2], B[0]]);
    let v = &(&a6 * &v_in) + &v_tail;
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(q.as_ref(), p.as_ref());
    for _ in 0..sq {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { C64::new(0.3 * i as f64, -1.0 + i as f64) } else { C64::new(0.0, 0.0) });
        let e = expm(a.as_ref());
        for i in 0..3 {
            assert!((e[(i, i)] - a[(i, i)].exp()).norm() < 1e-13);
        }
    }

    #[test]
    fn expm_rotation_large_norm() {
        // exp(θ[[0,-1],[1,0]]) is a rotation
        let th = 37.3;
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => C64::new(-th, 0.0),
            (1, 0) => C64::new(th, 0.0),
            _ => C64::new(0.0, 0.0),
        });
        let e = expm(a.as_ref());
        assert!((e[(0, 0)].re - th.cos()).abs() < 1e-11);
        assert!((e[(1, 0)].re - th.sin()).abs() < 1e-11);
    }

    #[test]
    fn exp_pair_matches_pade() {
        let a = Mat::from_fn(4, 4, |i, j| C64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
        let s = C64::new(0.0, -0.7);
        let p = exp_pair(a.as_ref(), s);
        let e = expm(scale(a.as_ref(), s).as_ref());
        assert!(!p.fallback);
        let d = &p.forward - &e;
        assert!(max_abs(d.as_ref()) < 1e-11);
        let prod = &p.forward * &p.backward;
        let d = &prod - &identity(4);
        assert!(max_abs(d.as_ref()) < 1e-11);
    }

    #[test]
    fn defective_matrix_uses_fallback() {
        let a = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let p = exp_pair(a.as_ref(), C64::new(1.0, 0.0));
        assert!((p.forward[(0, 1)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((p.backward[(0, 1)] + C64::new(1.0, 0.0)).norm() < 1e-12);
    }
}
