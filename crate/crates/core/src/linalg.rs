//! Dense complex linear algebra shared by the model, the LCU construction,
//! and the exact-diagonalization oracle.
//!
//! Everything here is nalgebra-backed and deliberately small: a matrix
//! exponential (Padé 13 with scaling and squaring), Hermitian
//! eigendecomposition, general complex eigenvalues through the Schur form,
//! and padding helpers for embedding a sector Hamiltonian into the
//! power-of-two qubit space.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Complex zero/one shorthands.
pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

/// Maximum column sum (induced 1-norm).
pub fn norm_1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential `exp(A)` by the degree-13 Padé approximant with
/// scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    assert_eq!(a.nrows(), a.ncols(), "expm needs a square matrix");
    const THETA_13: f64 = 5.371920351148152;
    #[rustfmt::skip]
    const B_REAL: [f64; 14] = [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
        33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
    ];
    let b: Vec<Complex64> = B_REAL.iter().map(|&x| Complex64::new(x, 0.0)).collect();

    let n = a.nrows();
    let norm = norm_1(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let a = a / Complex64::new(2f64.powi(s as i32), 0.0);

    let id = CMat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];

    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Padé denominator is singular; matrix norm out of range");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns. Hermiticity is the caller's responsibility; only the lower
/// triangle's symmetrization is used.
pub fn hermitian_eig(h: &CMat) -> (Vec<f64>, CMat) {
    let se = h.clone().symmetric_eigen();
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Eigenvalues of a general complex matrix via the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let schur = m
        .clone()
        .try_schur(1e-14, 200_000)
        .ok_or_else(|| Error::Solver(format!("Schur iteration stalled on a {n}x{n} matrix")))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Zero-pads `m` into the top-left block of a `dim x dim` matrix.
pub fn embed(m: &CMat, dim: usize) -> CMat {
    assert!(dim >= m.nrows() && dim >= m.ncols());
    let mut out = CMat::zeros(dim, dim);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    out
}

/// Smallest power of two that is `>= d`, as (exponent, value).
pub fn pow2_ceil(d: usize) -> (usize, usize) {
    assert!(d > 0);
    let mut k = 0;
    let mut v = 1;
    while v < d {
        k += 1;
        v <<= 1;
    }
    (k, v)
}


#[cfg(test)]
mod tests {
    use super::tests_support::random_cmat;
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Plain Taylor series, adequate for small norms only.
    fn expm_series(a: &CMat, terms: usize) -> CMat {
        let n = a.nrows();
        let mut sum = CMat::identity(n, n);
        let mut term = CMat::identity(n, n);
        for k in 1..=terms {
            term = (&term * a) / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn expm_matches_series_on_random_matrix() {
        let a = random_cmat(6, 0.4, 7);
        let e1 = expm(&a);
        let e2 = expm_series(&a, 40);
        assert!(norm_1(&(&e1 - &e2)) < 1e-12);
    }

    #[test]
    fn expm_diagonal_is_elementwise() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 0)] = Complex64::new(0.0, -2.0);
        a[(1, 1)] = Complex64::new(-1.0, 0.5);
        a[(2, 2)] = Complex64::new(3.0, 1.0);
        let e = expm(&a);
        for i in 0..3 {
            assert_abs_diff_eq!(e[(i, i)].re, a[(i, i)].exp().re, epsilon = 1e-12);
            assert_abs_diff_eq!(e[(i, i)].im, a[(i, i)].exp().im, epsilon = 1e-12);
        }
        assert!(e[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn expm_group_property() {
        let a = random_cmat(5, 1.5, 13);
        let whole = expm(&(&a * Complex64::new(2.0, 0.0)));
        let half = expm(&a);
        let halves = &half * &half;
        assert!(norm_1(&(&whole - &halves)) < 1e-10 * norm_1(&whole).max(1.0));
    }

    #[test]
    fn expm_scaling_branch_used_for_large_norm() {
        // norm well above theta_13 so squaring kicks in
        let a = random_cmat(4, 4.0, 21);
        let e1 = expm(&a);
        // exp(A) = exp(A/16)^16 with the small factor handled series-style
        let small = &a / Complex64::new(16.0, 0.0);
        let mut e2 = expm_series(&small, 60);
        for _ in 0..4 {
            e2 = &e2 * &e2;
        }
        assert!(norm_1(&(&e1 - &e2)) < 1e-9 * norm_1(&e1));
    }

    #[test]
    fn hermitian_eig_reconstructs() {
        let g = random_cmat(8, 1.0, 3);
        let h = (&g + &g.adjoint()) * Complex64::new(0.5, 0.0);
        let (vals, vecs) = hermitian_eig(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let lam = CMat::from_fn(8, 8, |i, j| {
            if i == j {
                Complex64::new(vals[i], 0.0)
            } else {
                C_ZERO
            }
        });
        let rebuilt = &vecs * lam * vecs.adjoint();
        assert!(norm_1(&(&rebuilt - &h)) < 1e-10);
    }

    #[test]
    fn eigenvalues_of_known_matrix() {
        // [[0, 1], [1, -2i]] has eigenvalues -i ± sqrt(1 - 1) ... solve directly:
        // lambda^2 + 2i lambda - 1 = 0 => lambda = -i (double root)
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = C_ONE;
        m[(1, 0)] = C_ONE;
        m[(1, 1)] = Complex64::new(0.0, -2.0);
        let ev = eigenvalues(&m).unwrap();
        for e in ev {
            assert!((e - Complex64::new(0.0, -1.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn eigenvalues_match_characteristic_roots_on_random_matrix() {
        let m = random_cmat(3, 1.0, 5);
        let ev = eigenvalues(&m).unwrap();
        // the eigenvalue sum and product must match trace and determinant
        let sum: Complex64 = ev.iter().sum();
        let prod: Complex64 = ev.iter().product();
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        assert!((sum - trace).norm() < 1e-10);
        assert!((prod - m.determinant()).norm() < 1e-10);
    }

    #[test]
    fn pow2_helpers() {
        assert_eq!(pow2_ceil(1), (0, 1));
        assert_eq!(pow2_ceil(2), (1, 2));
        assert_eq!(pow2_ceil(16), (4, 16));
        assert_eq!(pow2_ceil(120), (7, 128));
        let m = CMat::identity(3, 3);
        let e = embed(&m, 4);
        assert_eq!(e.nrows(), 4);
        assert_eq!(e[(2, 2)], C_ONE);
        assert_eq!(e[(3, 3)], C_ZERO);
    }
}
