//! Primal-dual interior point method for block-diagonal semidefinite programs
//!
//! ```text
//! min  <C, X> + offset   s.t.  <A_k, X> = b_k,  X = diag(X_1, ..., X_q) >= 0
//! max  b^T y + offset    s.t.  sum_k y_k A_k + S = C,  S >= 0
//! ```
//!
//! Constraint matrices are sparse lists of entries, the cost is dense per block.
//! Search directions use Nesterov-Todd scaling with a Mehrotra
//! predictor-corrector; the Schur complement `M_kl = <A_k, W A_l W>` is dense of
//! order `m` (number of constraints) and is assembled entrywise from `W`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky_dense, cholesky_solve, lower_inverse, sym_eigen_dense};
use crate::scalar::Real;

/// One coefficient of a linear constraint: contributes `value * X_block[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry<T: Real> {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: T,
}

impl<T: Real> Entry<T> {
    pub fn new(block: usize, row: usize, col: usize, value: T) -> Self {
        Self { block, row, col, value }
    }
}

/// `sum_e value_e * X[block_e][row_e, col_e] = rhs`, `X` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint<T: Real> {
    pub entries: Vec<Entry<T>>,
    pub rhs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSdp<T: Real> {
    pub block_orders: Vec<usize>,
    /// Symmetric cost matrix per block.
    pub cost: Vec<DMatrix<T>>,
    pub constraints: Vec<LinearConstraint<T>>,
    /// Constant added to both objectives.
    pub offset: T,
}

/// Primal-dual point.
#[derive(Debug, Clone)]
pub struct SdpIterate<T: Real> {
    pub x: Vec<DMatrix<T>>,
    pub y: DVector<T>,
    pub s: Vec<DMatrix<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    /// Factorization breakdown or stalled steps; the best iterate is returned.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// `|primal - dual| / (1 + |primal|)`.
    pub relative_gap: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub wall_time_secs: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmConfig {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Fraction of the step to the boundary.
    pub step_frac: f64,
}

impl Default for IpmConfig {
    fn default() -> Self {
        Self { gap_tol: 1e-7, feas_tol: 1e-9, max_iter: 150, step_frac: 0.98 }
    }
}

impl IpmConfig {
    /// Gap and feasibility 1e-10, for checks that read off near-zero primal entries.
    pub fn tight() -> Self {
        Self { gap_tol: 1e-10, feas_tol: 1e-10, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct IpmSolution<T: Real> {
    pub point: SdpIterate<T>,
    pub stats: SolveStats,
}

/// Symmetric expansion of a constraint: `<A_k, X> = sum v * X[a, b]` over all
/// `(a, b)` with `A_k[a, b] = v`.
#[derive(Debug, Clone)]
struct Expanded<T: Real> {
    /// `(block, a, b, v)`, both triangles present.
    entries: Vec<(usize, usize, usize, T)>,
}

/// Per-block scaling data.
struct Scaling<T: Real> {
    /// `W = G G^T`, `W S W = X`.
    w: DMatrix<T>,
    g: DMatrix<T>,
    g_inv: DMatrix<T>,
    /// Eigenvalues of the scaled point `V = G^{-1} X G^{-T} = G^T S G`.
    v: DVector<T>,
    lx: DMatrix<T>,
    ls: DMatrix<T>,
}

impl<T: Real> BlockSdp<T> {
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Total order `sum_j n_j`, the barrier parameter normalizer.
    pub fn total_order(&self) -> usize {
        self.block_orders.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost.len() != self.block_orders.len() {
            return Err(Error::DimensionMismatch("one cost matrix per block required".into()));
        }
        for (j, (c, &n)) in self.cost.iter().zip(&self.block_orders).enumerate() {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::DimensionMismatch(format!("cost block {j} must be {n}x{n}")));
            }
        }
        for (k, con) in self.constraints.iter().enumerate() {
            for e in &con.entries {
                if e.block >= self.block_orders.len()
                    || e.row >= self.block_orders[e.block]
                    || e.col >= self.block_orders[e.block]
                {
                    return Err(Error::InvalidInput(format!("constraint {k} has an out-of-range entry")));
                }
            }
        }
        Ok(())
    }

    fn expand(&self) -> Vec<Expanded<T>> {
        let half = T::lit(0.5);
        self.constraints
            .iter()
            .map(|con| {
                let mut entries = Vec::with_capacity(2 * con.entries.len());
                for e in &con.entries {
                    if e.row == e.col {
                        entries.push((e.block, e.row, e.col, e.value));
                    } else {
                        entries.push((e.block, e.row, e.col, e.value * half));
                        entries.push((e.block, e.col, e.row, e.value * half));
                    }
                }
                Expanded { entries }
            })
            .collect()
    }

    fn zeros(&self) -> Vec<DMatrix<T>> {
        self.block_orders.iter().map(|&n| DMatrix::zeros(n, n)).collect()
    }

    /// `A(X)`.
    pub fn apply(&self, x: &[DMatrix<T>]) -> DVector<T> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints
                .iter()
                .map(|con| con.entries.iter().fold(T::zero(), |acc, e| acc + e.value * x[e.block][(e.row, e.col)])),
        )
    }

    /// `A^*(y) = sum_k y_k A_k`.
    pub fn adjoint(&self, y: &DVector<T>) -> Vec<DMatrix<T>> {
        let mut out = self.zeros();
        let half = T::lit(0.5);
        for (k, con) in self.constraints.iter().enumerate() {
            for e in &con.entries {
                if e.row == e.col {
                    out[e.block][(e.row, e.col)] += y[k] * e.value;
                } else {
                    out[e.block][(e.row, e.col)] += y[k] * e.value * half;
                    out[e.block][(e.col, e.row)] += y[k] * e.value * half;
                }
            }
        }
        out
    }

    pub fn rhs(&self) -> DVector<T> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.rhs))
    }

    pub fn primal_value(&self, x: &[DMatrix<T>]) -> T {
        self.offset + inner(&self.cost, x)
    }

    pub fn dual_value(&self, y: &DVector<T>) -> T {
        self.offset + self.rhs().dot(y)
    }

    /// `C - S - A^*(y)`.
    pub fn dual_residual(&self, y: &DVector<T>, s: &[DMatrix<T>]) -> Vec<DMatrix<T>> {
        let ay = self.adjoint(y);
        self.cost.iter().zip(s).zip(&ay).map(|((c, s), a)| c - s - a).collect()
    }

    /// `X = I`, `y = 0`, `S = I`, each scaled by the data norms.
    pub fn default_start(&self) -> SdpIterate<T> {
        let n = T::count(self.total_order().max(1));
        let b_scale = self.constraints.iter().fold(T::zero(), |acc, c| acc.max(c.rhs.abs()));
        let c_scale = self.cost.iter().fold(T::zero(), |acc, c| acc.max(c.norm()));
        let xi = n.sqrt().max(T::one() + b_scale);
        let eta = n.sqrt().max(T::one() + c_scale);
        SdpIterate {
            x: self.block_orders.iter().map(|&k| DMatrix::identity(k, k) * xi).collect(),
            y: DVector::zeros(self.constraints.len()),
            s: self.block_orders.iter().map(|&k| DMatrix::identity(k, k) * eta).collect(),
        }
    }

    pub fn solve(&self, config: &IpmConfig) -> Result<IpmSolution<T>> {
        self.solve_from(self.default_start(), config)
    }

    /// Runs the interior point method from a strictly positive definite start.
    pub fn solve_from(&self, start: SdpIterate<T>, config: &IpmConfig) -> Result<IpmSolution<T>> {
        self.validate()?;
        let clock = Instant::now();
        let m = self.constraints.len();
        let nblocks = self.block_orders.len();
        let expanded = self.expand();
        let b = self.rhs();
        let b_norm = b.norm();
        let c_norm = self.cost.iter().fold(T::zero(), |acc, c| acc + c.norm_squared()).sqrt();
        let n_total = T::count(self.total_order());
        let half = T::lit(0.5);
        let step_frac = T::lit(config.step_frac);

        // constraints touching each block, for Schur assembly
        let mut touching: Vec<Vec<(usize, Vec<(usize, usize, T)>)>> = vec![Vec::new(); nblocks];
        for (k, ex) in expanded.iter().enumerate() {
            for blk in 0..nblocks {
                let ents: Vec<(usize, usize, T)> =
                    ex.entries.iter().filter(|e| e.0 == blk).map(|e| (e.1, e.2, e.3)).collect();
                if !ents.is_empty() {
                    touching[blk].push((k, ents));
                }
            }
        }

        let SdpIterate { mut x, mut y, mut s } = start;
        let mut best: Option<(T, SdpIterate<T>, SolveStats)> = None;
        let mut status = SolveStatus::MaxIterations;
        let mut iterations = 0;
        let mut stall_count = 0;

        loop {
            let rp = &b - self.apply(&x);
            let rd = self.dual_residual(&y, &s);
            let pobj = self.primal_value(&x);
            let dobj = self.dual_value(&y);
            let pinf = rp.norm() / (T::one() + b_norm);
            let dinf = rd.iter().fold(T::zero(), |acc, r| acc + r.norm_squared()).sqrt() / (T::one() + c_norm);
            let gap = (pobj - dobj).abs() / (T::one() + pobj.abs());
            let stats = SolveStats {
                iterations,
                primal_infeasibility: pinf.as_f64(),
                dual_infeasibility: dinf.as_f64(),
                relative_gap: gap.as_f64(),
                primal_value: pobj.as_f64(),
                dual_value: dobj.as_f64(),
                wall_time_secs: clock.elapsed().as_secs_f64(),
                status,
            };
            let merit = gap.max(pinf).max(dinf);
            if best.as_ref().map_or(true, |(bm, _, _)| merit < *bm) {
                best = Some((merit, SdpIterate { x: x.clone(), y: y.clone(), s: s.clone() }, stats));
            }
            if gap <= T::lit(config.gap_tol) && pinf <= T::lit(config.feas_tol) && dinf <= T::lit(config.feas_tol) {
                status = SolveStatus::Optimal;
                break;
            }
            if iterations >= config.max_iter {
                status = SolveStatus::MaxIterations;
                break;
            }
            iterations += 1;

            let mu = inner(&x, &s) / n_total;
            let scalings = match x.iter().zip(&s).map(|(xb, sb)| scaling(xb, sb)).collect::<Result<Vec<_>>>() {
                Ok(sc) => sc,
                Err(_) => {
                    status = SolveStatus::Stalled;
                    break;
                }
            };

            // Schur complement
            let mut schur = DMatrix::<T>::zeros(m, m);
            for (blk, list) in touching.iter().enumerate() {
                let w = &scalings[blk].w;
                for (ia, (k, ek)) in list.iter().enumerate() {
                    for (l, el) in list.iter().skip(ia).map(|(l, el)| (*l, el)) {
                        let mut acc = T::zero();
                        for &(a, bb, v) in ek {
                            for &(c, d, wv) in el {
                                acc += v * wv * w[(a, c)] * w[(d, bb)];
                            }
                        }
                        schur[(*k, l)] += acc;
                        if *k != l {
                            schur[(l, *k)] += acc;
                        }
                    }
                }
            }
            let schur_solver = match SchurSolver::new(schur) {
                Some(f) => f,
                None => {
                    status = SolveStatus::Stalled;
                    break;
                }
            };

            // W Rd W is shared by both directions
            let w_rd_w: Vec<DMatrix<T>> =
                scalings.iter().zip(&rd).map(|(sc, r)| &sc.w * r * &sc.w).collect();
            let a_wrdw = self.apply(&w_rd_w);

            let direction = |rc: &[DMatrix<T>]| -> (Vec<DMatrix<T>>, DVector<T>, Vec<DMatrix<T>>) {
                let h: Vec<DMatrix<T>> = scalings
                    .iter()
                    .zip(rc)
                    .map(|(sc, r)| {
                        let nb = sc.v.len();
                        let z = DMatrix::from_fn(nb, nb, |i, j| T::lit(2.0) * r[(i, j)] / (sc.v[i] + sc.v[j]));
                        &sc.g * z * sc.g.transpose()
                    })
                    .collect();
                let rhs = &rp - self.apply(&h) + &a_wrdw;
                let dy = schur_solver.solve(&rhs);
                let ady = self.adjoint(&dy);
                let ds: Vec<DMatrix<T>> = rd.iter().zip(&ady).map(|(r, a)| r - a).collect();
                let dx: Vec<DMatrix<T>> = h
                    .iter()
                    .zip(&scalings)
                    .zip(&ds)
                    .map(|((hb, sc), dsb)| {
                        let d = hb - &sc.w * dsb * &sc.w;
                        (&d + d.transpose()) * half
                    })
                    .collect();
                (dx, dy, ds)
            };

            // predictor
            let rc_aff: Vec<DMatrix<T>> =
                scalings.iter().map(|sc| DMatrix::from_diagonal(&sc.v.map(|v| -v * v))).collect();
            let (dx_a, _dy_a, ds_a) = direction(&rc_aff);
            let ap = max_step(&scalings, &dx_a, true).min(T::one());
            let ad = max_step(&scalings, &ds_a, false).min(T::one());
            let x_aff: Vec<DMatrix<T>> = x.iter().zip(&dx_a).map(|(a, d)| a + d * ap).collect();
            let s_aff: Vec<DMatrix<T>> = s.iter().zip(&ds_a).map(|(a, d)| a + d * ad).collect();
            let mu_aff = inner(&x_aff, &s_aff) / n_total;
            let ratio = (mu_aff / mu).max(T::zero());
            let sigma = (ratio * ratio * ratio).min(T::one());

            // corrector
            let rc: Vec<DMatrix<T>> = scalings
                .iter()
                .zip(&dx_a)
                .zip(&ds_a)
                .map(|((sc, dxb), dsb)| {
                    let dxs = &sc.g_inv * dxb * sc.g_inv.transpose();
                    let dss = sc.g.transpose() * dsb * &sc.g;
                    let prod = &dxs * &dss;
                    let sym = (&prod + prod.transpose()) * half;
                    let nb = sc.v.len();
                    DMatrix::from_fn(nb, nb, |i, j| {
                        let diag = if i == j { sigma * mu - sc.v[i] * sc.v[i] } else { T::zero() };
                        diag - sym[(i, j)]
                    })
                })
                .collect();
            let (dx, dy, ds) = direction(&rc);
            let ap = (step_frac * max_step(&scalings, &dx, true)).min(T::one());
            let ad = (step_frac * max_step(&scalings, &ds, false)).min(T::one());

            for (xb, d) in x.iter_mut().zip(&dx) {
                *xb += d * ap;
            }
            y += &dy * ad;
            for (sb, d) in s.iter_mut().zip(&ds) {
                *sb += d * ad;
            }
            if ap.max(ad) < T::lit(1e-9) {
                stall_count += 1;
                if stall_count >= 3 {
                    status = SolveStatus::Stalled;
                    break;
                }
            } else {
                stall_count = 0;
            }
        }

        let rp = &b - self.apply(&x);
        let rd = self.dual_residual(&y, &s);
        let pobj = self.primal_value(&x);
        let dobj = self.dual_value(&y);
        let final_stats = SolveStats {
            iterations,
            primal_infeasibility: (rp.norm() / (T::one() + b_norm)).as_f64(),
            dual_infeasibility: (rd.iter().fold(T::zero(), |acc, r| acc + r.norm_squared()).sqrt() / (T::one() + c_norm)).as_f64(),
            relative_gap: ((pobj - dobj).abs() / (T::one() + pobj.abs())).as_f64(),
            primal_value: pobj.as_f64(),
            dual_value: dobj.as_f64(),
            wall_time_secs: clock.elapsed().as_secs_f64(),
            status,
        };
        if status == SolveStatus::Optimal {
            return Ok(IpmSolution { point: SdpIterate { x, y, s }, stats: final_stats });
        }
        let (_, point, mut stats) = best.expect("at least one iterate evaluated");
        stats.status = status;
        stats.iterations = iterations;
        stats.wall_time_secs = clock.elapsed().as_secs_f64();
        Ok(IpmSolution { point, stats })
    }
}

fn inner<T: Real>(a: &[DMatrix<T>], b: &[DMatrix<T>]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.dot(y))
}

fn scaling<T: Real>(x: &DMatrix<T>, s: &DMatrix<T>) -> Result<Scaling<T>> {
    let lx = cholesky_dense(x)?;
    let ls = cholesky_dense(s)?;
    let mid = lx.transpose() * s * &lx;
    let mid = (&mid + mid.transpose()) * T::lit(0.5);
    let eig = sym_eigen_dense(&mid)?;
    if !(eig.min() > T::zero()) {
        return Err(Error::NumericalFailure("scaling matrix lost definiteness".into()));
    }
    let n = x.nrows();
    let quarter = eig.values.map(|l| l.sqrt().sqrt());
    // G = Lx Q Lambda^{-1/4}
    let mut lq = &lx * &eig.vectors;
    for j in 0..n {
        let f = T::one() / quarter[j];
        for i in 0..n {
            lq[(i, j)] *= f;
        }
    }
    let g = lq;
    let lx_inv = lower_inverse(&lx);
    // G^{-1} = Lambda^{1/4} Q^T Lx^{-1}
    let mut qt = eig.vectors.transpose() * lx_inv;
    for i in 0..n {
        for j in 0..n {
            qt[(i, j)] *= quarter[i];
        }
    }
    let w = &g * g.transpose();
    let w = (&w + w.transpose()) * T::lit(0.5);
    Ok(Scaling { w, g, g_inv: qt, v: eig.values.map(|l| l.sqrt()), lx, ls })
}

/// Largest `alpha` with `X + alpha dX >= 0` (or `S + alpha dS`), capped at 1e30.
fn max_step<T: Real>(scalings: &[Scaling<T>], d: &[DMatrix<T>], primal: bool) -> T {
    let mut alpha = T::lit(1e30);
    for (sc, db) in scalings.iter().zip(d) {
        let l = if primal { &sc.lx } else { &sc.ls };
        let linv = lower_inverse(l);
        let m = &linv * db * linv.transpose();
        let m = (&m + m.transpose()) * T::lit(0.5);
        let lo = match sym_eigen_dense(&m) {
            Ok(e) => e.min(),
            Err(_) => return T::zero(),
        };
        if lo < T::zero() {
            alpha = alpha.min(-T::one() / lo);
        }
    }
    alpha
}

/// Cholesky of the Schur complement with diagonal regularization as fallback.
struct SchurSolver<T: Real> {
    factor: DMatrix<T>,
}

impl<T: Real> SchurSolver<T> {
    fn new(m: DMatrix<T>) -> Option<Self> {
        if let Ok(factor) = cholesky_dense(&m) {
            return Some(Self { factor });
        }
        let scale = m.diagonal().iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        for bump in [1e-14, 1e-12, 1e-10] {
            let mut reg = m.clone();
            for i in 0..reg.nrows() {
                reg[(i, i)] += T::lit(bump) * (T::one() + scale);
            }
            if let Ok(factor) = cholesky_dense(&reg) {
                return Some(Self { factor });
            }
        }
        None
    }

    fn solve(&self, rhs: &DVector<T>) -> DVector<T> {
        cholesky_solve(&self.factor, rhs)
    }
}
