//! Perspective relaxations in penalized form:
//! `min_b 1/2 |Xb - y|^2 + 1/2 mu |b|^2 + sum_i rho_{delta_i}(b_i; lambda)`,
//! convex whenever `G - diag(delta)` is PSD.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::instance::{GramCache, ProblemInstance};
use crate::numerics::{self, sym_eigen};
use crate::penalties::{mcp_prox, mcp_value, soft_threshold};
use crate::prox_grad::{self, ProxGradConfig, Separable};
use crate::scalar::Real;

pub use crate::prox_grad::ProxGradConfig as PrConfig;

/// Admissible diagonal split `delta`: `delta >= 0`, `G - diag(delta) >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveParams<T: Real> {
    pub delta: DVector<T>,
}

impl<T: Real> PerspectiveParams<T> {
    pub fn new(delta: DVector<T>) -> Self {
        Self { delta }
    }

    pub fn zeros(p: usize) -> Self {
        Self { delta: DVector::zeros(p) }
    }
}

#[derive(Debug, Clone)]
pub struct PrSolution<T: Real> {
    pub b: DVector<T>,
    /// Relaxation value, including the constant `1/2 y^T y`.
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
    pub residual: T,
}

/// `delta_i = lambda_min(G) (1 - 1e-8)` for every `i`.
pub fn delta_uniform<T: Real>(gram: &GramCache<T>) -> PerspectiveParams<T> {
    let d = gram.lambda_min * (T::one() - T::lit(1e-8));
    PerspectiveParams { delta: DVector::from_element(gram.p(), d) }
}

/// `delta = mu * 1`, which turns the relaxation into the reverse Huber one.
pub fn delta_pwg<T: Real>(instance: &ProblemInstance<T>) -> Result<PerspectiveParams<T>> {
    if instance.mu <= T::zero() {
        return Err(Error::MuZero);
    }
    Ok(PerspectiveParams { delta: DVector::from_element(instance.p(), instance.mu) })
}

/// Smallest eigenvalue of `G - diag(delta)`.
pub fn split_min_eigenvalue<T: Real>(gram: &GramCache<T>, delta: &DVector<T>) -> Result<T> {
    numerics::min_eigenvalue(&gram.g.minus_diagonal(delta))
}

pub fn admissibility_tolerance<T: Real>(gram: &GramCache<T>) -> T {
    T::lit(1e-8) * (T::one() + gram.g.norm())
}

/// `delta >= 0` and `lambda_min(G - diag(delta)) >= -1e-8 (1 + |G|)`.
pub fn check_admissible<T: Real>(gram: &GramCache<T>, delta: &DVector<T>) -> Result<bool> {
    if delta.len() != gram.p() {
        return Err(Error::DimensionMismatch(format!(
            "delta has length {} but p = {}",
            delta.len(),
            gram.p()
        )));
    }
    if delta.iter().any(|d| !(*d >= T::zero())) {
        return Ok(false);
    }
    Ok(split_min_eigenvalue(gram, delta)? >= -admissibility_tolerance(gram))
}

/// `rho_delta(b) + 1/2 delta b^2`, convex in `b`.
struct ConvexifiedMcp<'a, T: Real> {
    delta: &'a DVector<T>,
    lambda: T,
}

impl<T: Real> Separable<T> for ConvexifiedMcp<'_, T> {
    fn value(&self, i: usize, x: T) -> T {
        let d = self.delta[i];
        mcp_value(x, d, self.lambda) + T::lit(0.5) * d * x * x
    }

    fn prox(&self, i: usize, v: T, step: T) -> T {
        // (x - v)^2 / (2 s) + d x^2 / 2 = (x - v')^2 / (2 s') + const,
        // with s' = s / (1 + s d) and v' = v / (1 + s d); s' d < 1 always.
        let d = self.delta[i];
        let scale = T::one() + step * d;
        mcp_prox(v / scale, step / scale, d, self.lambda).unwrap_or(T::zero())
    }
}

/// Sum of `rho_{delta_i}(b_i; lambda)`.
pub fn mcp_total<T: Real>(b: &DVector<T>, delta: &DVector<T>, lambda: T) -> T {
    b.iter().zip(delta.iter()).fold(T::zero(), |acc, (&bi, &di)| acc + mcp_value(bi, di, lambda))
}

/// Relaxation objective at `b`.
pub fn pr_value<T: Real>(gram: &GramCache<T>, delta: &DVector<T>, b: &DVector<T>) -> T {
    gram.quadratic_loss(b) + mcp_total(b, delta, gram.lambda)
}

/// Solves the perspective relaxation for an admissible `delta`.
///
/// The smooth part is `1/2 b^T (G - diag(delta)) b - c^T b`; the separable part
/// is `rho_delta(b_i) + 1/2 delta_i b_i^2`, so both pieces are convex and the
/// step `1 / lambda_max(G - diag(delta))` is valid.
pub fn solve_pr<T: Real>(
    gram: &GramCache<T>,
    params: &PerspectiveParams<T>,
    config: &PrConfig,
) -> Result<PrSolution<T>> {
    solve_pr_from(gram, params, config, DVector::zeros(gram.p()))
}

/// [`solve_pr`] with a caller-supplied starting point.
pub fn solve_pr_from<T: Real>(
    gram: &GramCache<T>,
    params: &PerspectiveParams<T>,
    config: &PrConfig,
    start: DVector<T>,
) -> Result<PrSolution<T>> {
    let delta = &params.delta;
    if delta.len() != gram.p() || start.len() != gram.p() {
        return Err(Error::DimensionMismatch("delta/start length must equal p".into()));
    }
    if delta.iter().any(|d| !(*d >= T::zero())) {
        return Err(Error::NotAdmissible(f64::NAN));
    }
    let q = gram.g.minus_diagonal(delta);
    let eig = sym_eigen(&q)?;
    if eig.min() < -admissibility_tolerance(gram) {
        return Err(Error::NotAdmissible(eig.min().as_f64()));
    }
    let lipschitz = eig.max().max(T::lit(1e-6) * gram.lambda_max);
    let sep = ConvexifiedMcp { delta, lambda: gram.lambda };
    let out = prox_grad::minimize(q.as_matrix(), &gram.c, &sep, lipschitz, start, config);
    let value = pr_value(gram, delta, &out.b);
    Ok(PrSolution {
        b: out.b,
        value,
        iterations: out.iterations,
        converged: out.converged,
        residual: out.residual,
    })
}

struct WeightedL1<T: Real> {
    weight: T,
}

impl<T: Real> Separable<T> for WeightedL1<T> {
    fn value(&self, _i: usize, x: T) -> T {
        self.weight * x.abs()
    }

    fn prox(&self, _i: usize, v: T, step: T) -> T {
        soft_threshold(v, step * self.weight)
    }
}

/// Optimal value of the continuous big-M relaxation with `z in [0, inf)`, which
/// is the lasso with weight `lambda / M`.
pub fn lasso_equivalence_value<T: Real>(gram: &GramCache<T>, big_m: T, config: &ProxGradConfig) -> Result<T> {
    if !(big_m > T::zero()) {
        return Err(Error::InvalidInput("M must be positive".into()));
    }
    let weight = gram.lambda / big_m;
    let sep = WeightedL1 { weight };
    let out = prox_grad::minimize(gram.g.as_matrix(), &gram.c, &sep, gram.lambda_max, DVector::zeros(gram.p()), config);
    Ok(gram.quadratic_loss(&out.b) + weight * out.b.iter().fold(T::zero(), |a, v| a + v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::build_gram;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, DMatrix};

    fn orthonormal_instance(c: &[f64], lambda: f64) -> ProblemInstance<f64> {
        // X = I so X^T X = I and X^T y = y
        let p = c.len();
        ProblemInstance::new(DMatrix::identity(p, p), DVector::from_column_slice(c), lambda, 0.0).unwrap()
    }

    #[test]
    fn uniform_delta() {
        let inst = orthonormal_instance(&[1.0, 2.0], 0.5);
        let gram = build_gram(&inst).unwrap();
        let d = delta_uniform(&gram);
        assert_relative_eq!(d.delta, DVector::from_element(2, 1.0), epsilon = 1e-7);
        assert!(check_admissible(&gram, &d.delta).unwrap());

        let inst = ProblemInstance::new(dmatrix![1.0, 0.0; 0.0, 2.0], DVector::from_vec(vec![1.0, 1.0]), 0.5, 0.0).unwrap();
        let gram = build_gram(&inst).unwrap();
        assert_relative_eq!(delta_uniform(&gram).delta, DVector::from_element(2, 1.0), epsilon = 1e-7);
    }

    #[test]
    fn pwg_delta() {
        let inst = ProblemInstance::new(DMatrix::<f64>::identity(4, 4), DVector::zeros(4), 0.1, 0.3).unwrap();
        assert_eq!(delta_pwg(&inst).unwrap().delta, DVector::from_element(4, 0.3));
        let inst = inst.with_penalties(0.1, 0.0).unwrap();
        assert!(matches!(delta_pwg(&inst), Err(Error::MuZero)));
        // rank-deficient X still admissible
        let inst = ProblemInstance::new(dmatrix![1.0, 1.0, 1.0], DVector::from_vec(vec![1.0]), 0.1, 0.2).unwrap();
        let gram = build_gram(&inst).unwrap();
        assert!(check_admissible(&gram, &delta_pwg(&inst).unwrap().delta).unwrap());
    }

    #[test]
    fn admissibility_examples() {
        let inst = ProblemInstance::new(dmatrix![2.0, 1.0; 0.0, 1.0; 1.0, 1.0], DVector::from_vec(vec![1.0, 0.0, 2.0]), 0.1, 0.0).unwrap();
        let gram = build_gram(&inst).unwrap();
        assert!(check_admissible(&gram, &DVector::zeros(2)).unwrap());
        assert!(check_admissible(&gram, &DVector::from_element(2, gram.lambda_min)).unwrap());
        let big = 2.0 * gram.g.norm();
        assert!(!check_admissible(&gram, &DVector::from_element(2, big)).unwrap());
        assert!(!check_admissible(&gram, &DVector::from_vec(vec![-0.1, 0.0])).unwrap());
    }

    #[test]
    fn zero_delta_is_ridge() {
        let inst = ProblemInstance::new(
            dmatrix![1.0, 2.0; 0.5, -1.0; 3.0, 0.0],
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            0.3,
            0.2,
        )
        .unwrap();
        let gram = build_gram(&inst).unwrap();
        let sol = solve_pr(&gram, &PerspectiveParams::zeros(2), &PrConfig::default()).unwrap();
        let ridge = numerics::restricted_ls(&inst.x, &inst.y, 0.2, &[0, 1]).unwrap();
        assert!(sol.converged);
        let ridge_value = gram.quadratic_loss(&ridge);
        assert_relative_eq!(sol.value, ridge_value, epsilon = 1e-10);
    }

    #[test]
    fn orthonormal_hard_threshold() {
        let c = [3.0, 0.5, -1.9, 2.2, -0.1];
        let lambda = 2.0; // threshold c^2 > 4
        let inst = orthonormal_instance(&c, lambda);
        let gram = build_gram(&inst).unwrap();
        let sol = solve_pr(&gram, &PerspectiveParams::new(DVector::from_element(5, 1.0)), &PrConfig::default()).unwrap();
        let yty: f64 = c.iter().map(|v| v * v).sum();
        let expected = 0.5 * yty - c.iter().filter(|v| *v * *v > 2.0 * lambda).map(|v| 0.5 * v * v - lambda).sum::<f64>();
        assert_relative_eq!(sol.value, expected, epsilon = 1e-10);
        for (i, &ci) in c.iter().enumerate() {
            let want = if ci * ci > 2.0 * lambda { ci } else { 0.0 };
            assert_relative_eq!(sol.b[i], want, epsilon = 1e-8);
        }
    }

    #[test]
    fn orthonormal_by_grid() {
        // separable 1-D check of 1/2 (b - c)^2 + rho_1(b)
        let lambda = 0.8;
        for &c in &[0.3f64, 1.2, 1.3, -2.5] {
            let mut best = f64::INFINITY;
            for k in -40_000..=40_000 {
                let b = k as f64 * 1e-4;
                best = best.min(0.5 * (b - c) * (b - c) + mcp_value(b, 1.0, lambda));
            }
            let closed = if c * c > 2.0 * lambda { lambda } else { 0.5 * c * c };
            assert_relative_eq!(best, closed, epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_inadmissible() {
        let inst = orthonormal_instance(&[1.0, 1.0], 0.5);
        let gram = build_gram(&inst).unwrap();
        let err = solve_pr(&gram, &PerspectiveParams::new(DVector::from_element(2, 1.5)), &PrConfig::default());
        assert!(matches!(err, Err(Error::NotAdmissible(_))));
    }

    #[test]
    fn lasso_examples() {
        // X = I: soft thresholding at lambda / M
        let c = [3.0, -0.2, 1.0];
        let inst = orthonormal_instance(&c, 1.0);
        let gram = build_gram(&inst).unwrap();
        let m = 2.0;
        let w = 0.5;
        let expected: f64 = c
            .iter()
            .map(|&ci| {
                let b = soft_threshold(ci, w);
                0.5 * (b - ci) * (b - ci) + w * b.abs()
            })
            .sum();
        let v = lasso_equivalence_value(&gram, m, &ProxGradConfig::default()).unwrap();
        assert_relative_eq!(v, expected, epsilon = 1e-10);
        // M -> infinity: least squares value 0
        let v = lasso_equivalence_value(&gram, 1e12, &ProxGradConfig::default()).unwrap();
        assert!(v.abs() < 1e-9);
    }
}
