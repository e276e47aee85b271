mod common;

use common::{rel_close, sim};
use l0conic::exact::brute_force_with;
use l0conic::instance::build_gram;
use l0conic::penalties::{pwg_penalty, soft_threshold};
use l0conic::perspective::{
    check_admissible, delta_pwg, delta_uniform, lasso_equivalence_value, solve_pr, PrConfig,
};
use l0conic::sdp::{build_sdp, extract_delta_star, rank1_certificate, solve_sdp, IpmConfig, Rank1Verdict, RANK1_TOL};
use l0conic::{PerspectiveParams, ProblemInstance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn pwg_objective(inst: &ProblemInstance, b: &DVector<f64>) -> f64 {
    let r = &inst.x * b - &inst.y;
    0.5 * r.norm_squared() + b.iter().map(|&v| pwg_penalty(v, inst.mu, inst.lambda)).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relaxation_chain(seed in 0u64..1_000_000, p in 3usize..8, lambda in 0.01f64..1.0, mu in 0.01f64..1.0) {
        let inst = sim(seed, 3 * p, p, lambda, mu);
        let gram = build_gram(&inst).unwrap();
        let sol = solve_sdp(&build_sdp(&gram), &IpmConfig::default()).unwrap();
        prop_assert!(sol.converged());
        let zeta = sol.primal.value;
        let best = brute_force_with(&inst, &gram).unwrap().objective;
        prop_assert!(zeta <= best + 1e-6 * (1.0 + best.abs()), "{} > {}", zeta, best);

        let cfg = PrConfig::default();
        let star = extract_delta_star(&sol.dual, &gram).unwrap();
        prop_assert!(check_admissible(&gram, &star.delta).unwrap());
        for params in [PerspectiveParams::zeros(p), delta_uniform(&gram), delta_pwg(&inst).unwrap(), star.clone()] {
            let v = solve_pr(&gram, &params, &cfg).unwrap().value;
            prop_assert!(v <= zeta + 1e-6 * (1.0 + zeta.abs()), "{} > {}", v, zeta);
        }
        let saddle = solve_pr(&gram, &star, &cfg).unwrap().value;
        prop_assert!(saddle >= zeta - 1e-4 * (1.0 + zeta.abs()), "{} < {}", saddle, zeta);

        if let Rank1Verdict::Exact { fit, .. } = rank1_certificate(&sol.primal, &gram, RANK1_TOL).unwrap() {
            prop_assert!(rel_close(fit.objective, best, 1e-6), "{} vs {}", fit.objective, best);
        }
    }

    #[test]
    fn pwg_relaxation_is_reverse_huber_minimum(seed in 0u64..1_000_000, p in 2usize..7, lambda in 0.05f64..1.0, mu in 0.05f64..1.0) {
        let inst = sim(seed, 4 * p, p, lambda, mu);
        let gram = build_gram(&inst).unwrap();
        let cfg = PrConfig { tol: 1e-11, obj_tol: 1e-15, max_iter: 200_000 };
        let sol = solve_pr(&gram, &delta_pwg(&inst).unwrap(), &cfg).unwrap();
        let at = pwg_objective(&inst, &sol.b);
        prop_assert!(rel_close(sol.value, at, 1e-9), "{} vs {}", sol.value, at);
        // convex objective: no coordinate or random move improves on the minimizer
        let mut h = DVector::zeros(p);
        for k in 0..(4 * p) {
            h.fill(0.0);
            let step = 1e-3 * (1 + k / p) as f64;
            h[k % p] = if k % 2 == 0 { step } else { -step };
            prop_assert!(pwg_objective(&inst, &(&sol.b + &h)) >= at - 1e-9 * (1.0 + at));
        }
    }
}

#[test]
fn lasso_value_on_orthonormal_design() {
    // X = I, so the big-M relaxation is a separable lasso with weight lambda / M
    let c = [3.0, -0.4, 1.2, 0.05, -2.5];
    let (lambda, mu, m) = (0.6, 0.2, 4.0);
    let inst = ProblemInstance::new(DMatrix::identity(5, 5), DVector::from_column_slice(&c), lambda, mu).unwrap();
    let gram = build_gram(&inst).unwrap();
    let value = lasso_equivalence_value(&gram, m, &PrConfig::default()).unwrap();
    let w = lambda / m;
    let expect: f64 = c
        .iter()
        .map(|&ci| {
            let b = soft_threshold(ci, w) / (1.0 + mu);
            0.5 * (b - ci) * (b - ci) + 0.5 * mu * b * b + w * b.abs()
        })
        .sum();
    assert!(rel_close(value, expect, 1e-9), "{value} vs {expect}");
}

#[test]
fn lasso_bound_is_below_optimum() {
    for seed in 0..5 {
        let inst = sim(seed, 20, 6, 0.3, 0.1);
        let gram = build_gram(&inst).unwrap();
        let best = brute_force_with(&inst, &gram).unwrap();
        let m = 1.01 * best.b.amax().max(1e-3);
        let lasso = lasso_equivalence_value(&gram, m, &PrConfig::default()).unwrap();
        assert!(lasso <= best.objective + 1e-8 * (1.0 + best.objective), "{lasso} > {}", best.objective);
    }
}
