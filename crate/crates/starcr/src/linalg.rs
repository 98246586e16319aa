//! Dense complex linear algebra shared by the solvers.
//!
//! Everything here operates on small dense matrices (dimensions are antenna
//! counts or STAR element counts, at most a few dozen), so the
//! implementations favor clarity and determinism over asymptotics. Complex
//! Hermitian positive-definite systems are solved by an explicit Cholesky
//! factorization; spectral queries go through `nalgebra`'s symmetric
//! eigensolver on the realified matrix.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
/// Dense complex matrix.
pub type CMat = Array2<C64>;
/// Dense complex vector.
pub type CVec = Array1<C64>;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Hermitian part (A + A^H)/2.
pub fn hermitize(a: &CMat) -> CMat {
    let ah = adjoint(a);
    (a + &ah).mapv(|z| 0.5 * z)
}

/// Max entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let ah = adjoint(a);
    (a - &ah)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Inner product a^H b (conjugating the first argument).
pub fn cdot(a: &CVec, b: &CVec) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Outer product u v^H.
pub fn outer(u: &CVec, v: &CVec) -> CMat {
    let (m, n) = (u.len(), v.len());
    CMat::from_shape_fn((m, n), |(i, j)| u[i] * v[j].conj())
}

/// Real quadratic form x^H P x for Hermitian P (imaginary residue dropped).
pub fn quad_form(p: &CMat, x: &CVec) -> f64 {
    let px = p.dot(x);
    cdot(x, &px).re
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Frobenius norm of a complex matrix.
pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Max element modulus of a complex vector.
pub fn inf_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Cholesky factor L (lower triangular) of a Hermitian positive-definite
/// matrix, A = L L^H. The strict upper triangle of the input is ignored;
/// the diagonal must be (numerically) real.
pub fn cholesky(a: &CMat) -> Result<CMat, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut l = CMat::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solve L L^H x = b given the Cholesky factor L.
pub fn cholesky_solve(l: &CMat, b: &CVec) -> CVec {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    // Forward: L y = b.
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    // Backward: L^H x = y.
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[(k, i)].conj() * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Solve A x = b for Hermitian positive-definite A.
pub fn solve_hpd(a: &CMat, b: &CVec) -> Result<CVec, LinalgError> {
    let l = cholesky(a)?;
    Ok(cholesky_solve(&l, b))
}

/// Realification of a complex matrix: [[Re A, -Im A], [Im A, Re A]].
/// For Hermitian A the image is symmetric and satisfies
/// realify_vec(x)^T realify(A) realify_vec(x) = x^H A x.
pub fn realify(a: &CMat) -> DMatrix<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = a[(i % m, j % n)];
        match (i >= m, j >= n) {
            (false, false) | (true, true) => z.re,
            (false, true) => -z.im,
            (true, false) => z.im,
        }
    })
}

/// Realification of a complex vector: [Re x; Im x].
pub fn realify_vec(x: &CVec) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |i, _| if i < n { x[i].re } else { x[i - n].im })
}

/// Inverse of [`realify_vec`].
pub fn unrealify_vec(x: &DVector<f64>) -> CVec {
    let n = x.len() / 2;
    debug_assert_eq!(x.len(), 2 * n);
    CVec::from_shape_fn(n, |i| C64::new(x[i], x[i + n]))
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eig_sym(a: &DMatrix<f64>) -> f64 {
    let sym = nalgebra::SymmetricEigen::new(a.clone());
    sym.eigenvalues.iter().fold(f64::INFINITY, |m, &e| m.min(e))
}

/// Smallest eigenvalue of a complex Hermitian matrix (via realification;
/// the realified spectrum is the complex spectrum with doubled multiplicity).
pub fn min_eig_herm(a: &CMat) -> f64 {
    min_eig_sym(&realify(&hermitize(a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_cmat(rows: usize, cols: usize, seed: u64) -> CMat {
        // Small deterministic pseudo-random fill; quality is irrelevant here.
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        CMat::from_shape_fn((rows, cols), |_| c(next(), next()))
    }

    fn random_hpd(n: usize, seed: u64) -> CMat {
        let b = random_cmat(n, n, seed);
        let mut a = adjoint(&b).dot(&b);
        for i in 0..n {
            a[(i, i)] += c(0.5, 0.0);
        }
        hermitize(&a)
    }

    #[test]
    fn cholesky_reconstructs_the_matrix() {
        let a = random_hpd(6, 3);
        let l = cholesky(&a).unwrap();
        let rec = l.dot(&adjoint(&l));
        assert!(fro_norm(&(&rec - &a)) < 1e-12 * fro_norm(&a).max(1.0));
    }

    #[test]
    fn cholesky_rejects_indefinite_input() {
        let mut a = CMat::eye(3);
        a[(2, 2)] = c(-1.0, 0.0);
        assert!(matches!(
            cholesky(&a),
            Err(LinalgError::NotPositiveDefinite { index: 2, .. })
        ));
    }

    #[test]
    fn hpd_solve_matches_direct_substitution() {
        let a = random_hpd(5, 9);
        let b = random_cmat(5, 1, 4).column(0).to_owned();
        let x = solve_hpd(&a, &b).unwrap();
        let r = &a.dot(&x) - &b;
        assert!(inf_norm(&r) < 1e-11);
    }

    #[test]
    fn realified_quadratic_form_matches_complex_one() {
        let a = random_hpd(4, 7);
        let x = random_cmat(4, 1, 11).column(0).to_owned();
        let xr = realify_vec(&x);
        let ar = realify(&a);
        let real_form = (xr.transpose() * &ar * &xr)[(0, 0)];
        assert_relative_eq!(real_form, quad_form(&a, &x), max_relative = 1e-12);
    }

    #[test]
    fn realify_vec_round_trips() {
        let x = random_cmat(6, 1, 21).column(0).to_owned();
        let back = unrealify_vec(&realify_vec(&x));
        assert!(inf_norm(&(&back - &x)) == 0.0);
    }

    #[test]
    fn min_eig_of_known_hermitian_matrix() {
        // Eigenvalues of [[2, i], [-i, 2]] are 1 and 3.
        let mut a = CMat::eye(2);
        a[(0, 0)] = c(2.0, 0.0);
        a[(1, 1)] = c(2.0, 0.0);
        a[(0, 1)] = c(0.0, 1.0);
        a[(1, 0)] = c(0.0, -1.0);
        assert_relative_eq!(min_eig_herm(&a), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn outer_and_cdot_agree() {
        let u = random_cmat(3, 1, 31).column(0).to_owned();
        let v = random_cmat(3, 1, 32).column(0).to_owned();
        let m = outer(&u, &v);
        // (u v^H) w = u (v^H w) = u * cdot(v, w).
        let w = random_cmat(3, 1, 33).column(0).to_owned();
        let lhs = m.dot(&w);
        let rhs = u.mapv(|z| z * cdot(&v, &w));
        assert!(inf_norm(&(&lhs - &rhs)) < 1e-13);
    }
}
