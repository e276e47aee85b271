//! Closed-form penalties: the perspective penalty (which is the minimax concave
//! penalty in different coordinates), the reverse Huber penalty, and l1.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A separable penalty `sum_i phi_i(b_i)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltySpec<T: Real> {
    L1 { weight: T },
    Mcp { delta: Vec<T>, lambda: T },
    ReverseHuber { mu: T, lambda: T },
    /// `lambda * 1{b != 0}`.
    Indicator { lambda: T },
}

impl<T: Real> PenaltySpec<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::L1 { weight } => *weight >= T::zero(),
            Self::Mcp { delta, lambda } => *lambda >= T::zero() && delta.iter().all(|d| *d >= T::zero()),
            Self::ReverseHuber { mu, lambda } => *mu > T::zero() && *lambda > T::zero(),
            Self::Indicator { lambda } => *lambda >= T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid penalty parameters: {self:?}")))
        }
    }

    /// Penalty of coordinate `i` at value `b`.
    pub fn value(&self, i: usize, b: T) -> T {
        match self {
            Self::L1 { weight } => *weight * b.abs(),
            Self::Mcp { delta, lambda } => mcp_value(b, delta[i], *lambda),
            Self::ReverseHuber { mu, lambda } => pwg_penalty(b, *mu, *lambda),
            Self::Indicator { lambda } => {
                if b != T::zero() {
                    *lambda
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn total(&self, b: &[T]) -> T {
        b.iter().enumerate().fold(T::zero(), |acc, (i, &v)| acc + self.value(i, v))
    }
}

/// `sqrt(2 delta lambda)|b| - delta b^2 / 2` while `delta b^2 <= 2 lambda`, else `lambda`.
pub fn mcp_value<T: Real>(b: T, delta: T, lambda: T) -> T {
    if delta == T::zero() || b == T::zero() {
        return T::zero();
    }
    let db2 = delta * b * b;
    if db2 <= T::lit(2.0) * lambda {
        (T::lit(2.0) * delta * lambda).sqrt() * b.abs() - T::lit(0.5) * db2
    } else {
        lambda
    }
}

/// Zhang's form `lt|b| - b^2/(2 gt)` for `|b| <= gt*lt`, else `gt*lt^2/2`.
pub fn mcp_value_mcp_parameterization<T: Real>(b: T, gamma_tilde: T, lambda_tilde: T) -> T {
    let t = b.abs();
    if t <= gamma_tilde * lambda_tilde {
        lambda_tilde * t - t * t / (T::lit(2.0) * gamma_tilde)
    } else {
        T::lit(0.5) * gamma_tilde * lambda_tilde * lambda_tilde
    }
}

pub fn reverse_huber<T: Real>(t: T) -> T {
    let a = t.abs();
    if a <= T::one() {
        a
    } else {
        T::lit(0.5) * (t * t + T::one())
    }
}

/// `2 lambda B(sqrt(mu / (2 lambda)) b)` with `B` the reverse Huber penalty,
/// evaluated as `sqrt(2 lambda mu)|b|` while `mu b^2 <= 2 lambda`, else
/// `mu b^2 / 2 + lambda`.
pub fn pwg_penalty<T: Real>(b: T, mu: T, lambda: T) -> T {
    let q = mu * b * b;
    let two_lambda = T::lit(2.0) * lambda;
    if q <= two_lambda {
        (two_lambda * mu).sqrt() * b.abs()
    } else {
        T::lit(0.5) * q + lambda
    }
}

/// Soft thresholding, the prox of `weight * |.|` with unit step.
pub fn soft_threshold<T: Real>(v: T, weight: T) -> T {
    if v > weight {
        v - weight
    } else if v < -weight {
        v + weight
    } else {
        T::zero()
    }
}

/// `argmin_x (x - v)^2 / (2 step) + mcp_value(x, delta, lambda)`.
///
/// Inside `|x| <= sqrt(2 lambda / delta)` the minimizer is the soft threshold
/// of `v` at `step sqrt(2 delta lambda)` rescaled by `1 / (1 - step delta)`;
/// outside it is `v` itself. Both region candidates and the region boundary are
/// compared and ties go to the smaller `|x|`.
pub fn mcp_prox<T: Real>(v: T, step: T, delta: T, lambda: T) -> Result<T> {
    if !(step > T::zero()) {
        return Err(Error::InvalidInput("prox step must be positive".into()));
    }
    let sd = step * delta;
    if sd > T::one() {
        return Err(Error::StepTooLarge(sd.as_f64()));
    }
    if delta == T::zero() || lambda == T::zero() {
        return Ok(v);
    }
    let sign = if v < T::zero() { -T::one() } else { T::one() };
    let av = v.abs();
    let knee = (T::lit(2.0) * lambda / delta).sqrt();
    let slope = (T::lit(2.0) * delta * lambda).sqrt();

    let mut candidates: [T; 4] = [T::zero(); 4];
    let mut count = 1;
    if sd < T::one() {
        let inner = ((av - step * slope).max(T::zero()) / (T::one() - sd)).min(knee);
        candidates[count] = inner;
        count += 1;
    }
    candidates[count] = knee;
    count += 1;
    if av >= knee {
        candidates[count] = av;
        count += 1;
    }
    let h = |x: T| (x - av) * (x - av) / (T::lit(2.0) * step) + mcp_value(x, delta, lambda);
    let mut cands = candidates[..count].to_vec();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = cands[0];
    let mut best_h = h(best);
    for &x in &cands[1..] {
        let hx = h(x);
        if hx < best_h {
            best = x;
            best_h = hx;
        }
    }
    Ok(sign * best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Brute-force `min 1/2 delta (s - b^2) + lambda z` over `s z >= b^2`,
    /// `z in [0, 1]`: for fixed `z > 0` the best `s` is `b^2 / z`.
    fn rho_by_grid(b: f64, delta: f64, lambda: f64) -> f64 {
        let mut best = if b == 0.0 { 0.0 } else { f64::INFINITY };
        let steps = 200_000;
        for k in 1..=steps {
            let z = k as f64 / steps as f64;
            let s = b * b / z;
            best = best.min(0.5 * delta * (s - b * b) + lambda * z);
        }
        best
    }

    #[test]
    fn mcp_examples() {
        assert_eq!(mcp_value(0.0, 1.0, 1.0), 0.0);
        assert_eq!(mcp_value(2.0, 1.0, 1.0), 1.0);
        assert_relative_eq!(mcp_value(0.5, 2.0, 1.0), 0.75, epsilon = 1e-15);
        assert_relative_eq!(rho_by_grid(0.5, 2.0, 1.0), 0.75, epsilon = 1e-5);
        assert_relative_eq!(rho_by_grid(2.0, 1.0, 1.0), 1.0, epsilon = 1e-5);
        assert_eq!(mcp_value(3.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn mcp_matches_lifted_definition() {
        for &(b, d, l) in &[(0.3, 1.0, 0.5), (-1.2, 0.4, 0.2), (0.05, 10.0, 1.0), (4.0, 0.1, 3.0)] {
            assert_relative_eq!(mcp_value(b, d, l), rho_by_grid(b, d, l), epsilon = 1e-5);
        }
    }

    #[test]
    fn mcp_parameterization_examples() {
        // gamma~ = 1, lambda~ = 2  <->  delta = 1, lambda = 2
        assert_relative_eq!(mcp_value_mcp_parameterization(1.0, 1.0, 2.0), mcp_value(1.0, 1.0, 2.0), epsilon = 1e-15);
        assert_eq!(mcp_value_mcp_parameterization(0.0, 1.0, 2.0), 0.0);
        // saturation at |b| = gt*lt = sqrt(2 lambda / delta) = 2
        let (d, l) = (1.0f64, 2.0f64);
        let (gt, lt) = (1.0 / d, (2.0 * d * l).sqrt());
        assert_relative_eq!(gt * lt, (2.0 * l / d).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(mcp_value_mcp_parameterization(2.0, gt, lt), l, epsilon = 1e-15);
        assert_relative_eq!(mcp_value(2.0, d, l), l, epsilon = 1e-15);
    }

    #[test]
    fn reverse_huber_examples() {
        assert_eq!(reverse_huber(0.0), 0.0);
        assert_eq!(reverse_huber(1.0), 1.0);
        assert_eq!(reverse_huber(-1.0), 1.0);
        assert_eq!(reverse_huber(2.0), 2.5);
    }

    #[test]
    fn pwg_examples() {
        assert_eq!(pwg_penalty(0.0, 2.0, 1.0), 0.0);
        assert_relative_eq!(pwg_penalty(1.0, 2.0, 1.0), 2.0, epsilon = 1e-15);
        assert_relative_eq!(mcp_value(1.0, 2.0, 1.0) + 0.5 * 2.0, 2.0, epsilon = 1e-15);
        assert_relative_eq!(pwg_penalty(2.0, 2.0, 1.0), 5.0, epsilon = 1e-15);
        assert_relative_eq!(mcp_value(2.0, 2.0, 1.0) + 0.5 * 2.0 * 4.0, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn pwg_matches_reverse_huber_composition() {
        for &(mu, l) in &[(0.1f64, 0.1f64), (1.0, 10.0), (10.0, 0.1), (3.0, 2.0)] {
            for k in 0..=200 {
                let b = -5.0 + 0.05 * k as f64;
                let literal = 2.0 * l * reverse_huber((mu / (2.0 * l)).sqrt() * b);
                assert_relative_eq!(pwg_penalty(b, mu, l), literal, max_relative = 1e-13, epsilon = 1e-15);
            }
        }
        // lambda = 0 leaves the ridge term
        assert_eq!(pwg_penalty(2.0, 3.0, 0.0), 6.0);
        assert_eq!(pwg_penalty(0.0, 3.0, 0.0), 0.0);
    }

    #[test]
    fn single_precision_penalties() {
        assert!((mcp_value(0.5f32, 2.0, 1.0) - 0.75).abs() < 1e-6);
        assert!((pwg_penalty(2.0f32, 2.0, 1.0) - 5.0).abs() < 1e-5);
        assert_eq!(mcp_prox(0.1f32, 0.5, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn penalty_spec() {
        let mcp = PenaltySpec::Mcp { delta: vec![2.0, 0.0], lambda: 1.0 };
        assert!(mcp.validate().is_ok());
        assert_relative_eq!(mcp.total(&[0.5, 9.0]), 0.75);
        assert!(PenaltySpec::Mcp { delta: vec![-1.0], lambda: 1.0 }.validate().is_err());
        assert!(PenaltySpec::ReverseHuber { mu: 0.0, lambda: 1.0 }.validate().is_err());
        assert_eq!(PenaltySpec::Indicator { lambda: 2.0 }.total(&[0.0, 1e-300, -3.0]), 4.0);
        assert_eq!(PenaltySpec::L1 { weight: 0.5 }.total(&[1.0, -3.0]), 2.0);
    }

    fn prox_by_grid(v: f64, step: f64, delta: f64, lambda: f64) -> (f64, f64) {
        // window around the candidates; every minimizer lies between 0 and v
        // (the penalty is even and nondecreasing in |x|).
        let lo = v.min(0.0) - 1e-9;
        let hi = v.max(0.0) + 1e-9;
        let n = 100_000;
        let h = (hi - lo) / n as f64;
        let obj = |x: f64| (x - v) * (x - v) / (2.0 * step) + mcp_value(x, delta, lambda);
        let mut best = (0.0, obj(0.0));
        for k in 0..=n {
            let x = lo + h * k as f64;
            let o = obj(x);
            if o < best.1 {
                best = (x, o);
            }
        }
        (best.0, h)
    }

    #[test]
    fn prox_edge_cases() {
        assert_eq!(mcp_prox(1.7, 0.5, 0.0, 1.0).unwrap(), 1.7);
        // |v| <= step*sqrt(2 delta lambda) -> 0
        let (step, d, l) = (0.5, 1.0, 2.0);
        let thr = step * (2.0f64 * d * l).sqrt();
        assert_eq!(mcp_prox(0.999 * thr, step, d, l).unwrap(), 0.0);
        assert_eq!(mcp_prox(-thr, step, d, l).unwrap(), 0.0);
        // saturated region: identity
        assert_eq!(mcp_prox(10.0, step, d, l).unwrap(), 10.0);
        assert_eq!(mcp_prox(-10.0, step, d, l).unwrap(), -10.0);
        assert!(matches!(mcp_prox(1.0, 2.0, 1.0, 1.0), Err(Error::StepTooLarge(_))));
        // step * delta == 1 is the hard threshold at sqrt(2 lambda)
        assert_eq!(mcp_prox(1.9, 1.0, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(mcp_prox(2.1, 1.0, 1.0, 2.0).unwrap(), 2.1);
    }

    #[test]
    fn prox_matches_grid_on_fixed_draws() {
        for &(v, s, d, l) in &[(0.7, 0.3, 1.5, 0.4), (-2.2, 0.9, 1.0, 1.0), (1.3, 0.1, 5.0, 2.0), (0.2, 0.99, 1.0, 0.01)] {
            let (xg, h) = prox_by_grid(v, s, d, l);
            let x = mcp_prox(v, s, d, l).unwrap();
            assert!((x - xg).abs() <= 2.0 * h, "v={v} s={s} d={d} l={l}: {x} vs {xg}");
        }
    }

    proptest! {
        #[test]
        fn mcp_bounded_even_monotone(b in -10.0f64..10.0, d in 0.0f64..10.0, l in 0.01f64..10.0) {
            let v = mcp_value(b, d, l);
            prop_assert!(v >= 0.0 && v <= l * (1.0 + 1e-15));
            prop_assert_eq!(v, mcp_value(-b, d, l));
            prop_assert!(mcp_value(b * 1.1, d, l) >= v - 1e-12);
            prop_assert!(mcp_value(b, d * 1.1, l) >= v - 1e-12);
        }

        #[test]
        fn mcp_concave_in_delta(b in -5.0f64..5.0, d1 in 0.0f64..5.0, d2 in 0.0f64..5.0, l in 0.01f64..5.0) {
            let mid = mcp_value(b, 0.5 * (d1 + d2), l);
            let avg = 0.5 * (mcp_value(b, d1, l) + mcp_value(b, d2, l));
            prop_assert!(mid >= avg - 1e-12);
        }

        #[test]
        fn pwg_identity(b in -5.0f64..5.0, mu in 0.01f64..10.0, l in 0.01f64..10.0) {
            let lhs = pwg_penalty(b, mu, l);
            let rhs = mcp_value(b, mu, l) + 0.5 * mu * b * b;
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + l + lhs.abs()));
        }
    }

    #[test]
    fn mcp_continuous_at_knee() {
        let (d, l) = (0.7f64, 1.3f64);
        let knee = (2.0 * l / d).sqrt();
        let below = mcp_value(knee * (1.0 - 1e-12), d, l);
        let above = mcp_value(knee * (1.0 + 1e-12), d, l);
        assert!((below - above).abs() < 1e-10);
    }
}
