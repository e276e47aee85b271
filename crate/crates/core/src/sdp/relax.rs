//! The optimal-perspective semidefinite relaxation and its dual.
//!
//! Primal variables are one block `Y = [[1, b^T], [b, B]]` of order `p + 1` and
//! `p` blocks `W_i = [[z_i, b_i], [b_i, B_ii]]`; `2p + 1` equalities fix
//! `Y_00 = 1` and tie the shared entries. Dual multipliers map to
//! `(epsilon, alpha, delta, t)` as
//!
//! ```text
//! epsilon = -2 y_0,  t = -y_b,  alpha = y_b - c,  delta = -2 y_B
//! ```
//!
//! so that the dual slack blocks are `1/2 [[epsilon, alpha^T], [alpha, G - diag(delta)]]`
//! and `[[lambda, t_i / 2], [t_i / 2, delta_i / 2]]`.

use nalgebra::{DMatrix, DVector};

use super::block::{BlockSdp, Entry, IpmConfig, LinearConstraint, SdpIterate, SolveStats, SolveStatus};
use crate::error::{Error, Result};
use crate::instance::{support_of, FitResult, GramCache, Method};
use crate::numerics::{self, cholesky_dense, lower_inverse, sym_eigen_dense, SymMatrix};
use crate::perspective::PerspectiveParams;
use crate::scalar::Real;

/// Block problem together with the data it was built from.
#[derive(Debug, Clone)]
pub struct SdpProblem<T: Real> {
    pub sdp: BlockSdp<T>,
    pub gram: GramCache<T>,
}

#[derive(Debug, Clone)]
pub struct SdpPrimal<T: Real> {
    pub b: DVector<T>,
    /// `z_i = b_i^2 / B_ii` (zero when `B_ii <= 1e-12`).
    pub z: DVector<T>,
    pub big_b: DMatrix<T>,
    /// `1/2 <G, B> - c^T b + lambda sum z + 1/2 y^T y` at the returned point.
    pub value: T,
    /// Numerical rank of `[[1, b^T], [b, B]]` at relative tolerance 1e-6.
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct DualCertificate<T: Real> {
    pub epsilon: T,
    pub alpha: DVector<T>,
    pub delta: DVector<T>,
    pub t: DVector<T>,
    /// `1/2 y^T y - 1/2 epsilon`.
    pub value: T,
}

#[derive(Debug, Clone)]
pub struct SdpSolution<T: Real> {
    pub primal: SdpPrimal<T>,
    pub dual: DualCertificate<T>,
    pub stats: SolveStats,
    pub(crate) point: SdpIterate<T>,
}

impl<T: Real> SdpSolution<T> {
    pub fn converged(&self) -> bool {
        self.stats.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone)]
pub enum Rank1Verdict<T: Real> {
    /// `b` is globally optimal for the l0 problem.
    Exact { fit: FitResult<T>, z: Vec<bool>, ratio: T },
    NotRank1 { ratio: T },
}

impl<T: Real> Rank1Verdict<T> {
    pub fn is_exact(&self) -> bool {
        matches!(self, Rank1Verdict::Exact { .. })
    }
}

pub const RANK1_TOL: f64 = 1e-6;

fn y_index(i: usize) -> usize {
    i + 1
}

pub fn build_sdp<T: Real>(gram: &GramCache<T>) -> SdpProblem<T> {
    let p = gram.p();
    let half = T::lit(0.5);
    let g = gram.g.as_matrix();
    let mut cy = DMatrix::<T>::zeros(p + 1, p + 1);
    for i in 0..p {
        cy[(0, y_index(i))] = -half * gram.c[i];
        cy[(y_index(i), 0)] = -half * gram.c[i];
        for j in 0..p {
            cy[(y_index(i), y_index(j))] = half * g[(i, j)];
        }
    }
    let mut cost = vec![cy];
    for _ in 0..p {
        let mut w = DMatrix::<T>::zeros(2, 2);
        w[(0, 0)] = gram.lambda;
        cost.push(w);
    }

    let mut constraints = Vec::with_capacity(2 * p + 1);
    constraints.push(LinearConstraint { entries: vec![Entry::new(0, 0, 0, T::one())], rhs: T::one() });
    for i in 0..p {
        constraints.push(LinearConstraint {
            entries: vec![Entry::new(i + 1, 0, 1, T::one()), Entry::new(0, 0, y_index(i), -T::one())],
            rhs: T::zero(),
        });
    }
    for i in 0..p {
        constraints.push(LinearConstraint {
            entries: vec![Entry::new(i + 1, 1, 1, T::one()), Entry::new(0, y_index(i), y_index(i), -T::one())],
            rhs: T::zero(),
        });
    }
    let mut block_orders = vec![p + 1];
    block_orders.extend(std::iter::repeat(2).take(p));
    SdpProblem {
        sdp: BlockSdp { block_orders, cost, constraints, offset: half * gram.yty },
        gram: gram.clone(),
    }
}

impl<T: Real> SdpProblem<T> {
    pub fn p(&self) -> usize {
        self.gram.p()
    }

    /// Primal `Y = I`, `W_i = [[1/2, 0], [0, 1]]`; dual `delta = 1/2 lambda_min(G)`,
    /// `t = 0` and `epsilon` just above `c^T (G - diag(delta))^{-1} c`.
    pub fn start_point(&self) -> Result<SdpIterate<T>> {
        let p = self.p();
        let half = T::lit(0.5);
        let gram = &self.gram;
        let mut x = vec![DMatrix::identity(p + 1, p + 1)];
        for _ in 0..p {
            let mut w = DMatrix::identity(2, 2);
            w[(0, 0)] = half;
            x.push(w);
        }
        let d = half * gram.lambda_min;
        let delta = DVector::from_element(p, d);
        let split = gram.g.minus_diagonal(&delta);
        let l = cholesky_dense(split.as_matrix())?;
        let sol = numerics::cholesky_solve(&l, &gram.c);
        let scale = T::one() + gram.c.norm() + gram.lambda;
        let epsilon = gram.c.dot(&sol) + scale;

        let mut y = DVector::zeros(2 * p + 1);
        y[0] = -half * epsilon;
        for i in 0..p {
            y[p + 1 + i] = -half * d;
        }
        // lambda = 0 leaves the W_i slacks singular: start them in the interior
        // and let the infeasible-start iteration restore dual feasibility.
        let lambda_floor = T::lit(1e-2) * scale;
        let ay = self.sdp.adjoint(&y);
        let mut s: Vec<DMatrix<T>> = self.sdp.cost.iter().zip(&ay).map(|(c, a)| c - a).collect();
        for blk in s.iter_mut().skip(1) {
            if blk[(0, 0)] < lambda_floor {
                blk[(0, 0)] = lambda_floor;
            }
        }
        Ok(SdpIterate { x, y, s })
    }
}

pub fn solve_sdp<T: Real>(problem: &SdpProblem<T>, config: &IpmConfig) -> Result<SdpSolution<T>> {
    let start = problem.start_point()?;
    solve_sdp_from(problem, start, config)
}

/// Runs the solver from `start`, which must be strictly positive definite.
pub fn solve_sdp_from<T: Real>(
    problem: &SdpProblem<T>,
    start: SdpIterate<T>,
    config: &IpmConfig,
) -> Result<SdpSolution<T>> {
    let sol = problem.sdp.solve_from(start, config)?;
    let primal = extract_primal(problem, &sol.point)?;
    let dual = extract_dual(problem, &sol.point.y);
    Ok(SdpSolution { primal, dual, stats: sol.stats, point: sol.point })
}

/// Convex combination `(1 - theta) previous + theta start` of two interior
/// points, a warm start for a neighbouring problem with the same structure.
pub fn blend_start<T: Real>(previous: &SdpSolution<T>, start: &SdpIterate<T>, theta: T) -> SdpIterate<T> {
    let keep = T::one() - theta;
    let mix = |a: &[DMatrix<T>], b: &[DMatrix<T>]| -> Vec<DMatrix<T>> {
        a.iter().zip(b).map(|(u, v)| u * keep + v * theta).collect()
    };
    SdpIterate {
        x: mix(&previous.point.x, &start.x),
        y: &previous.point.y * keep + &start.y * theta,
        s: mix(&previous.point.s, &start.s),
    }
}

fn extract_primal<T: Real>(problem: &SdpProblem<T>, point: &SdpIterate<T>) -> Result<SdpPrimal<T>> {
    let p = problem.p();
    let half = T::lit(0.5);
    let yb = &point.x[0];
    let y_sym = (yb + yb.transpose()) * half;
    let b = DVector::from_fn(p, |i, _| y_sym[(0, y_index(i))]);
    let big_b = DMatrix::from_fn(p, p, |i, j| y_sym[(y_index(i), y_index(j))]);
    let z = DVector::from_fn(p, |i, _| {
        let bii = big_b[(i, i)];
        if bii > T::lit(1e-12) {
            b[i] * b[i] / bii
        } else {
            T::zero()
        }
    });
    let gram = &problem.gram;
    let value = half * gram.g.as_matrix().dot(&big_b) - gram.c.dot(&b) + gram.lambda * z.sum() + half * gram.yty;
    let eig = sym_eigen_dense(&y_sym)?;
    let top = eig.max().max(T::zero());
    let rank = eig.values.iter().filter(|&&v| v > T::lit(RANK1_TOL) * top).count();
    Ok(SdpPrimal { b, z, big_b, value, rank })
}

fn extract_dual<T: Real>(problem: &SdpProblem<T>, y: &DVector<T>) -> DualCertificate<T> {
    let p = problem.p();
    let gram = &problem.gram;
    let yb = DVector::from_fn(p, |i, _| y[1 + i]);
    let epsilon = -T::lit(2.0) * y[0];
    DualCertificate {
        epsilon,
        alpha: &yb - &gram.c,
        delta: DVector::from_fn(p, |i, _| -T::lit(2.0) * y[p + 1 + i]),
        t: -yb,
        value: T::lit(0.5) * gram.yty - T::lit(0.5) * epsilon,
    }
}

/// Largest eigenvalue violation of the dual conic constraints:
/// `(lambda_min [[eps, alpha^T], [alpha, G - diag(delta)]], min_i lambda_min [[delta_i, t_i], [t_i, 2 lambda]])`.
pub fn dual_conic_margins<T: Real>(cert: &DualCertificate<T>, gram: &GramCache<T>) -> Result<(T, T)> {
    let p = gram.p();
    let g = gram.g.as_matrix();
    let big = DMatrix::from_fn(p + 1, p + 1, |i, j| match (i, j) {
        (0, 0) => cert.epsilon,
        (0, j) => cert.alpha[j - 1],
        (i, 0) => cert.alpha[i - 1],
        (i, j) if i == j => g[(i - 1, j - 1)] - cert.delta[i - 1],
        (i, j) => g[(i - 1, j - 1)],
    });
    let big_min = numerics::min_eigenvalue(&SymMatrix::symmetrize(big))?;
    let two_lambda = T::lit(2.0) * gram.lambda;
    let small_min = (0..p).fold(T::max_value().unwrap_or(T::lit(f64::MAX)), |acc, i| {
        let (a, d, off) = (cert.delta[i], two_lambda, cert.t[i]);
        let mean = T::lit(0.5) * (a + d);
        let rad = (T::lit(0.25) * (a - d) * (a - d) + off * off).sqrt();
        acc.min(mean - rad)
    });
    Ok((big_min, small_min))
}

/// `delta` from the certificate made admissible: negatives clipped to zero,
/// then scaled by `s = 1 / lambda_max(L^{-1} diag(delta) L^{-T})` (`G = L L^T`)
/// when `G - diag(delta)` is indefinite.
pub fn extract_delta_star<T: Real>(cert: &DualCertificate<T>, gram: &GramCache<T>) -> Result<PerspectiveParams<T>> {
    let delta = cert.delta.map(|d| d.max(T::zero()));
    if numerics::min_eigenvalue(&gram.g.minus_diagonal(&delta))? >= T::zero() {
        return Ok(PerspectiveParams::new(delta));
    }
    let l = cholesky_dense(gram.g.as_matrix())?;
    let linv = lower_inverse(&l);
    let mut scaled = linv.clone();
    for j in 0..delta.len() {
        for i in 0..delta.len() {
            scaled[(i, j)] *= delta[j];
        }
    }
    let m = scaled * linv.transpose();
    let top = numerics::max_eigenvalue(&SymMatrix::symmetrize(m))?;
    let s = (T::one() - T::lit(1e-12)) / top;
    Ok(PerspectiveParams::new(delta * s))
}

/// Checks whether `[[1, b^T], [b, B]]` is numerically rank one
/// (`lambda_2 <= tol * lambda_1`); if so the support of `b` is optimal and the
/// returned fit is the restricted least-squares solution on it.
pub fn rank1_certificate<T: Real>(primal: &SdpPrimal<T>, gram: &GramCache<T>, tol: T) -> Result<Rank1Verdict<T>> {
    let p = primal.b.len();
    let lifted = DMatrix::from_fn(p + 1, p + 1, |i, j| match (i, j) {
        (0, 0) => T::one(),
        (0, j) => primal.b[j - 1],
        (i, 0) => primal.b[i - 1],
        (i, j) => primal.big_b[(i - 1, j - 1)],
    });
    let eig = numerics::sym_eigen(&SymMatrix::symmetrize(lifted))?;
    let n = eig.values.len();
    let l1 = eig.values[n - 1];
    let l2 = if n >= 2 { eig.values[n - 2].max(T::zero()) } else { T::zero() };
    let ratio = if l1 > T::zero() { l2 / l1 } else { T::zero() };
    if ratio > tol {
        return Ok(Rank1Verdict::NotRank1 { ratio });
    }
    let z: Vec<bool> = primal.z.iter().map(|&v| v > T::lit(0.5)).collect();
    let support: Vec<usize> = (0..p).filter(|&i| z[i]).collect();
    let b = numerics::restricted_ls_gram(gram.g.as_matrix(), &gram.c, &support)?;
    let nnz = support_of(&b).len();
    let objective = gram.quadratic_loss(&b) + gram.lambda * T::count(nnz);
    let fit = FitResult { support: support_of(&b), b, objective, method: Method::Rank1Certificate };
    Ok(Rank1Verdict::Exact { fit, z, ratio })
}

/// Smallest `lambda` for which some `delta` has `G - diag(delta) >= 0` and
/// `[[delta_i, -c_i], [-c_i, 2 lambda]] >= 0`; the all-zero model is optimal
/// for the relaxation from there on.
pub fn lambda_max<T: Real>(gram: &GramCache<T>, config: &IpmConfig) -> Result<T> {
    let p = gram.p();
    if gram.c.iter().all(|&v| v == T::zero()) {
        return Ok(T::zero());
    }
    // dual form: maximize -lambda over y = (delta, lambda)
    let mut cost = vec![gram.g.as_matrix().clone()];
    for i in 0..p {
        let mut blk = DMatrix::<T>::zeros(2, 2);
        blk[(0, 1)] = -gram.c[i];
        blk[(1, 0)] = -gram.c[i];
        cost.push(blk);
    }
    let mut constraints: Vec<LinearConstraint<T>> = (0..p)
        .map(|i| LinearConstraint {
            entries: vec![Entry::new(0, i, i, T::one()), Entry::new(i + 1, 0, 0, -T::one())],
            rhs: T::zero(),
        })
        .collect();
    constraints.push(LinearConstraint {
        entries: (0..p).map(|i| Entry::new(i + 1, 1, 1, -T::lit(2.0))).collect(),
        rhs: -T::one(),
    });
    let mut block_orders = vec![p];
    block_orders.extend(std::iter::repeat(2).take(p));
    let sdp = BlockSdp { block_orders, cost, constraints, offset: T::zero() };
    let config = IpmConfig { gap_tol: config.gap_tol.min(1e-9), ..*config };
    let sol = sdp.solve(&config)?;
    if sol.stats.status != SolveStatus::Optimal {
        return Err(Error::NumericalFailure(format!(
            "lambda_max solve did not converge (gap {:.2e})",
            sol.stats.relative_gap
        )));
    }
    Ok(sol.point.y[p].max(T::zero()))
}
