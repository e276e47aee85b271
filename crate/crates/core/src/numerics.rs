//! Dense symmetric linear algebra shared by the solvers.
//!
//! Storage is `nalgebra::DMatrix`; the symmetric eigensolver is nalgebra's
//! Householder tridiagonalization followed by implicit QR sweeps. Cholesky and
//! the restricted least-squares solves are written out here so that failures can
//! report the offending pivot.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Iteration cap handed to the symmetric QR sweeps.
const EIGEN_MAX_ITER: usize = 10_000;

/// A real symmetric matrix stored in full.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T: Real> {
    inner: DMatrix<T>,
}

impl<T: Real> SymMatrix<T> {
    /// Wraps a square matrix, rejecting anything whose asymmetry exceeds
    /// `1e-12 * max|S_ij|` (or a few ulps for single precision). The stored matrix
    /// is the exact symmetric part.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix".into()));
        }
        let scale = m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let tol = T::lit(1e-12).max(T::lit(64.0) * T::eps()) * scale;
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > tol {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    /// Takes the symmetric part `(M + M^T) / 2` without checking.
    pub fn symmetrize(m: DMatrix<T>) -> Self {
        let half = T::lit(0.5);
        let t = m.transpose();
        Self { inner: (m + t) * half }
    }

    pub fn identity(n: usize) -> Self {
        Self { inner: DMatrix::identity(n, n) }
    }

    pub fn from_diagonal(d: &DVector<T>) -> Self {
        Self { inner: DMatrix::from_diagonal(d) }
    }

    pub fn order(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.inner
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.inner.norm()
    }

    /// `self - diag(d)`.
    pub fn minus_diagonal(&self, d: &DVector<T>) -> Self {
        let mut m = self.inner.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= d[i];
        }
        Self { inner: m }
    }
}

/// Eigen-pairs of a symmetric matrix with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct EigenDecomp<T: Real> {
    pub values: DVector<T>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<T>,
}

impl<T: Real> EigenDecomp<T> {
    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// `V diag(f(lambda)) V^T`.
    pub fn recompose_with(&self, f: impl Fn(T) -> T) -> DMatrix<T> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        &scaled * self.vectors.transpose()
    }
}

/// Lower-triangular `L` with `L L^T = S`.
pub fn cholesky<T: Real>(s: &SymMatrix<T>) -> Result<DMatrix<T>> {
    cholesky_dense(s.as_matrix())
}

/// Cholesky of a matrix assumed symmetric; only the lower triangle is read.
pub(crate) fn cholesky_dense<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let mut l = DMatrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        // pivots at rounding level of the diagonal count as singular
        if !(d > T::count(n) * T::eps() * a[(j, j)].abs()) {
            return Err(Error::NotPositiveDefinite(d.as_f64()));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` given the lower factor.
pub fn cholesky_solve<T: Real>(l: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut v = x[i];
        for k in 0..i {
            v -= l[(i, k)] * x[k];
        }
        x[i] = v / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut v = x[i];
        for k in (i + 1)..n {
            v -= l[(k, i)] * x[k];
        }
        x[i] = v / l[(i, i)];
    }
    x
}

/// Inverse of a lower-triangular matrix.
pub(crate) fn lower_inverse<T: Real>(l: &DMatrix<T>) -> DMatrix<T> {
    let n = l.nrows();
    let mut inv = DMatrix::<T>::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = T::one() / l[(j, j)];
        for i in (j + 1)..n {
            let mut v = T::zero();
            for k in j..i {
                v -= l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = v / l[(i, i)];
        }
    }
    inv
}

pub fn sym_eigen<T: Real>(s: &SymMatrix<T>) -> Result<EigenDecomp<T>> {
    sym_eigen_dense(s.as_matrix())
}

pub(crate) fn sym_eigen_dense<T: Real>(a: &DMatrix<T>) -> Result<EigenDecomp<T>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenDecomp { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::try_new(a.clone(), T::eps(), EIGEN_MAX_ITER)
        .ok_or(Error::EigenNoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::<T>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomp { values, vectors })
}

pub fn min_eigenvalue<T: Real>(s: &SymMatrix<T>) -> Result<T> {
    Ok(sym_eigen(s)?.min())
}

pub fn max_eigenvalue<T: Real>(s: &SymMatrix<T>) -> Result<T> {
    Ok(sym_eigen(s)?.max())
}

/// Factor `U` (m x r) with `U U^T` equal to the PSD part of `S`.
///
/// Eigenvalues in `[-tol, 0)` are clamped to zero; columns are kept only for
/// eigenvalues above the numerical-rank threshold, so `r` is the numerical rank.
pub fn psd_factor<T: Real>(s: &SymMatrix<T>, tol: T) -> Result<DMatrix<T>> {
    let eig = sym_eigen(s)?;
    let m = s.order();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if eig.min() < -tol {
        return Err(Error::NotPsd(eig.min().as_f64()));
    }
    let top = eig.max().max(T::zero());
    let cut = (T::count(m) * T::eps() * top).max(tol.min(T::lit(1e-8) * (T::one() + top)));
    let keep: Vec<usize> = (0..m).rev().filter(|&k| eig.values[k] > cut).collect();
    let mut u = DMatrix::<T>::zeros(m, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let w = eig.values[k].sqrt();
        for i in 0..m {
            u[(i, col)] = eig.vectors[(i, k)] * w;
        }
    }
    Ok(u)
}

/// Minimizer of `1/2 |Xb - y|^2 + 1/2 mu |b|^2` with `b_j = 0` off `support`.
/// Off-support entries of the result are exact zeros.
pub fn restricted_ls<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    mu: T,
    support: &[usize],
) -> Result<DVector<T>> {
    let p = x.ncols();
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "y has length {} but X has {} rows",
            y.len(),
            x.nrows()
        )));
    }
    check_support(support, p)?;
    let k = support.len();
    let mut b = DVector::zeros(p);
    if k == 0 {
        return Ok(b);
    }
    let xs = x.select_columns(support);
    let mut g = xs.transpose() * &xs;
    for i in 0..k {
        g[(i, i)] += mu;
    }
    let rhs = xs.transpose() * y;
    let l = cholesky_dense(&g)?;
    let bs = cholesky_solve(&l, &rhs);
    for (i, &j) in support.iter().enumerate() {
        b[j] = bs[i];
    }
    Ok(b)
}

/// Same minimizer as [`restricted_ls`], computed from `G = X^T X + mu I` and
/// `c = X^T y`.
pub fn restricted_ls_gram<T: Real>(
    g: &DMatrix<T>,
    c: &DVector<T>,
    support: &[usize],
) -> Result<DVector<T>> {
    let p = g.nrows();
    check_support(support, p)?;
    let mut b = DVector::zeros(p);
    if support.is_empty() {
        return Ok(b);
    }
    let gs = g.select_rows(support).select_columns(support);
    let cs = DVector::from_iterator(support.len(), support.iter().map(|&j| c[j]));
    let l = cholesky_dense(&gs)?;
    let bs = cholesky_solve(&l, &cs);
    for (i, &j) in support.iter().enumerate() {
        b[j] = bs[i];
    }
    Ok(b)
}

fn check_support(support: &[usize], p: usize) -> Result<()> {
    let mut seen = vec![false; p];
    for &j in support {
        if j >= p {
            return Err(Error::InvalidInput(format!("support index {j} out of range for p = {p}")));
        }
        if seen[j] {
            return Err(Error::InvalidInput(format!("duplicate support index {j}")));
        }
        seen[j] = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        // Small LCG keeps the tests free of RNG plumbing.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DMatrix::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn random_spd(n: usize, seed: u64) -> SymMatrix<f64> {
        let a = random_matrix(n, n, seed);
        let mut s = &a * a.transpose();
        for i in 0..n {
            s[(i, i)] += 0.1;
        }
        SymMatrix::symmetrize(s)
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&SymMatrix::<f64>::identity(3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
    }

    #[test]
    fn cholesky_hand_example() {
        let s = SymMatrix::new(dmatrix![4.0, 2.0; 2.0, 5.0]).unwrap();
        let l = cholesky(&s).unwrap();
        assert_relative_eq!(l, dmatrix![2.0, 0.0; 1.0, 2.0], epsilon = 1e-15);
        assert_relative_eq!(&l * l.transpose(), s.as_matrix().clone(), epsilon = 1e-14);
    }

    #[test]
    fn cholesky_indefinite() {
        let s = SymMatrix::new(dmatrix![1.0, 2.0; 2.0, 1.0]).unwrap();
        assert!(matches!(cholesky(&s), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn cholesky_roundtrip_random_spd() {
        for (trial, n) in [1usize, 2, 5, 17, 60, 200].into_iter().enumerate() {
            let s = random_spd(n, 100 + trial as u64);
            let l = cholesky(&s).unwrap();
            let err = (&l * l.transpose() - s.as_matrix()).norm();
            assert!(err <= 1e-10 * s.norm(), "n={n} err={err}");
        }
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(SymMatrix::new(dmatrix![1.0, 2.0; 2.1, 1.0]).is_err());
        assert!(SymMatrix::new(DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigen_diagonal_and_swap() {
        let d = SymMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let e = sym_eigen(&d).unwrap();
        assert_relative_eq!(e.values, DVector::from_vec(vec![1.0, 2.0, 3.0]), epsilon = 1e-15);

        let s = SymMatrix::new(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let e = sym_eigen(&s).unwrap();
        assert_relative_eq!(e.values[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(e.values[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(min_eigenvalue(&s).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn eigen_f32() {
        let s = SymMatrix::new(dmatrix![2.0f32, 1.0; 1.0, 2.0]).unwrap();
        let e = sym_eigen(&s).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-6);
        assert!((e.values[1] - 3.0).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn eigen_reconstructs(n in 1usize..24, seed in any::<u64>()) {
            let a = random_matrix(n, n, seed);
            let s = SymMatrix::symmetrize(a);
            let e = sym_eigen(&s).unwrap();
            let rec = e.recompose_with(|v| v);
            let err = (rec - s.as_matrix()).norm();
            prop_assert!(err <= 1e-8 * (1.0 + s.norm()));
            let orth = (e.vectors.transpose() * &e.vectors - DMatrix::identity(n, n)).norm();
            prop_assert!(orth <= 1e-10);
            for k in 1..n {
                prop_assert!(e.values[k - 1] <= e.values[k]);
            }
        }

        #[test]
        fn restricted_ls_stationarity(seed in any::<u64>(), mask in 1u32..(1 << 6), mu in 0.0f64..1.0) {
            let x = random_matrix(12, 6, seed);
            let y = DVector::from_column_slice(random_matrix(12, 1, seed ^ 0xabc).as_slice());
            let support: Vec<usize> = (0..6).filter(|j| mask & (1 << j) != 0).collect();
            let b = restricted_ls(&x, &y, mu, &support).unwrap();
            let grad = x.transpose() * (&x * &b - &y) + &b * mu;
            for &j in &support {
                prop_assert!(grad[j].abs() <= 1e-8);
            }
            for j in 0..6 {
                if !support.contains(&j) {
                    prop_assert_eq!(b[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn psd_factor_rank_one() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let s = SymMatrix::symmetrize(&v * v.transpose());
        let u = psd_factor(&s, 1e-8).unwrap();
        assert_eq!(u.ncols(), 1);
        let col = u.column(0).into_owned();
        let aligned = if col[0] * v[0] > 0.0 { col } else { -col };
        assert_relative_eq!(aligned, v, epsilon = 1e-12);
    }

    #[test]
    fn psd_factor_identity() {
        let u = psd_factor(&SymMatrix::<f64>::identity(2), 1e-8).unwrap();
        assert_eq!(u.ncols(), 2);
        assert_relative_eq!(&u * u.transpose(), DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn psd_factor_clamps_tiny_negative() {
        // Q diag(-1e-10, 1, 2) Q^T with a fixed rotation.
        let q = sym_eigen(&SymMatrix::symmetrize(random_matrix(3, 3, 7))).unwrap().vectors;
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1e-10, 1.0, 2.0]));
        let s = SymMatrix::symmetrize(&q * d * q.transpose());
        let u = psd_factor(&s, 1e-8).unwrap();
        assert_eq!(u.ncols(), 2);
        let err = (&u * u.transpose() - s.as_matrix()).norm();
        assert!(err <= 1e-8 * (1.0 + s.norm()));

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1e-3, 1.0, 2.0]));
        let s = SymMatrix::symmetrize(&q * d * q.transpose());
        assert!(matches!(psd_factor(&s, 1e-8), Err(Error::NotPsd(_))));
    }

    #[test]
    fn restricted_ls_cases() {
        let x = DMatrix::<f64>::identity(2, 2);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(restricted_ls(&x, &y, 0.0, &[]).unwrap(), DVector::zeros(2));
        assert_eq!(restricted_ls(&x, &y, 0.0, &[1]).unwrap(), DVector::from_vec(vec![0.0, 4.0]));

        let x = dmatrix![2.0, 1.0; 1.0, 3.0];
        let b = restricted_ls(&x, &y, 0.0, &[0, 1]).unwrap();
        let direct = x.clone().lu().solve(&y).unwrap();
        assert_relative_eq!(b, direct, epsilon = 1e-12);

        let g = x.transpose() * &x;
        let c = x.transpose() * &y;
        assert_relative_eq!(restricted_ls_gram(&g, &c, &[0, 1]).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn restricted_ls_singular() {
        let x = dmatrix![1.0, 1.0; 1.0, 1.0];
        let y = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(restricted_ls(&x, &y, 0.0, &[0, 1]), Err(Error::NotPositiveDefinite(_))));
        assert!(restricted_ls(&x, &y, 0.1, &[0, 1]).is_ok());
        assert!(restricted_ls(&x, &y, 0.0, &[2]).is_err());
    }
}
