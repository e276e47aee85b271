//! Accelerated proximal gradient for `1/2 b^T Q b - c^T b + sum_i g_i(b_i)` with
//! `Q` symmetric PSD and each `g_i` convex with a cheap scalar prox.
//!
//! Momentum is reset whenever the objective increases.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct ProxGradConfig {
    /// Prox-gradient residual tolerance, relative to `1 + |c|`.
    pub tol: f64,
    /// Relative objective change tolerance.
    pub obj_tol: f64,
    pub max_iter: usize,
}

impl Default for ProxGradConfig {
    fn default() -> Self {
        Self { tol: 1e-8, obj_tol: 1e-10, max_iter: 50_000 }
    }
}

/// Separable convex term.
pub(crate) trait Separable<T: Real> {
    fn value(&self, i: usize, x: T) -> T;
    /// `argmin_x (x - v)^2 / (2 step) + g_i(x)`.
    fn prox(&self, i: usize, v: T, step: T) -> T;
}

#[derive(Debug, Clone)]
pub(crate) struct ProxGradOutput<T: Real> {
    pub b: DVector<T>,
    /// `1/2 b^T Q b - c^T b + g(b)`.
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
    /// `L |b - prox(b - grad/L)|`.
    pub residual: T,
}

pub(crate) fn minimize<T: Real, G: Separable<T>>(
    q: &DMatrix<T>,
    c: &DVector<T>,
    g: &G,
    lipschitz: T,
    start: DVector<T>,
    cfg: &ProxGradConfig,
) -> ProxGradOutput<T> {
    let p = c.len();
    let half = T::lit(0.5);
    let step = T::one() / lipschitz;
    let tol = T::lit(cfg.tol) * (T::one() + c.norm());
    let obj_tol = T::lit(cfg.obj_tol);

    let g_total = |b: &DVector<T>| (0..p).fold(T::zero(), |acc, i| acc + g.value(i, b[i]));
    let prox_step = |point: &DVector<T>, grad: &DVector<T>| {
        DVector::from_fn(p, |i, _| g.prox(i, point[i] - step * grad[i], step))
    };
    let objective = |b: &DVector<T>, qb: &DVector<T>| half * b.dot(qb) - c.dot(b) + g_total(b);

    // feasible start for the separable part
    let mut x = DVector::from_fn(p, |i, _| g.prox(i, start[i], T::eps() * T::eps()));
    let mut qx = q * &x;
    let mut fx = objective(&x, &qx);
    let mut yk = x.clone();
    let mut qy = qx.clone();
    let mut t = T::one();
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = T::lit(f64::INFINITY);

    while iterations < cfg.max_iter {
        iterations += 1;
        let grad = &qy - c;
        let xn = prox_step(&yk, &grad);
        let qxn = q * &xn;
        let fxn = objective(&xn, &qxn);

        if fxn > fx && t > T::one() {
            // restart from the last accepted point
            yk = x.clone();
            qy = qx.clone();
            t = T::one();
            continue;
        }

        let tn = half * (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt());
        let beta = (t - T::one()) / tn;
        let dx = &xn - &x;
        let dqx = &qxn - &qx;
        let change = (fx - fxn).abs();
        let small_change = change <= obj_tol * (T::one() + fxn.abs());

        yk = &xn + &dx * beta;
        qy = &qxn + &dqx * beta;
        x = xn;
        qx = qxn;
        fx = fxn;
        t = tn;

        if small_change || iterations % 50 == 0 {
            let grad_x = &qx - c;
            let px = prox_step(&x, &grad_x);
            residual = (&x - &px).norm() * lipschitz;
            if residual <= tol && small_change {
                converged = true;
                break;
            }
        }
    }

    ProxGradOutput { value: fx, b: x, iterations, converged, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalties::soft_threshold;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    struct L1(f64);

    impl Separable<f64> for L1 {
        fn value(&self, _i: usize, x: f64) -> f64 {
            self.0 * x.abs()
        }
        fn prox(&self, _i: usize, v: f64, step: f64) -> f64 {
            soft_threshold(v, step * self.0)
        }
    }

    #[test]
    fn scalar_lasso_closed_form() {
        // diagonal Q = I: solution is soft(c, w)
        let q = DMatrix::identity(3, 3);
        let c = DVector::from_vec(vec![2.0, -0.3, -1.5]);
        let out = minimize(&q, &c, &L1(0.5), 1.0, DVector::zeros(3), &ProxGradConfig::default());
        assert!(out.converged);
        assert_relative_eq!(out.b, DVector::from_vec(vec![1.5, 0.0, -1.0]), epsilon = 1e-10);
    }

    #[test]
    fn coupled_quadratic_no_penalty() {
        let q = dmatrix![2.0, 0.5; 0.5, 1.0];
        let c = DVector::from_vec(vec![1.0, -1.0]);
        let out = minimize(&q, &c, &L1(0.0), 2.5, DVector::zeros(2), &ProxGradConfig::default());
        let exact = q.clone().lu().solve(&c).unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.b, exact, epsilon = 1e-7);
    }
}
