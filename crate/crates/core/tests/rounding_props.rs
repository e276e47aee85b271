mod common;

use common::sim;
use l0conic::exact::brute_force_with;
use l0conic::instance::build_gram;
use l0conic::rounding::{build_lift, gw_round};
use l0conic::sdp::{build_sdp, solve_sdp, IpmConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rounding_is_feasible_and_reproducible(seed in 0u64..1_000_000, p in 3usize..9, lambda in 0.05f64..1.0, rseed in 0u64..1000) {
        let inst = sim(seed, 3 * p, p, lambda, 0.1);
        let gram = build_gram(&inst).unwrap();
        let sol = solve_sdp(&build_sdp(&gram), &IpmConfig::default()).unwrap();
        let a = gw_round(&inst, &gram, &sol.primal, 40, rseed).unwrap();
        let b = gw_round(&inst, &gram, &sol.primal, 40, rseed).unwrap();
        prop_assert_eq!(&a.sample_supports, &b.sample_supports);
        prop_assert_eq!(a.objective(), b.objective());
        prop_assert_eq!(a.sample_supports.len(), 40);
        prop_assert!(a.sample_supports.iter().all(|s| s.len() == p));

        let best = brute_force_with(&inst, &gram).unwrap().objective;
        let zeta = sol.primal.value;
        prop_assert!(a.objective() >= best - 1e-9 * (1.0 + best));
        prop_assert!(a.objective() >= zeta - 1e-6 * (1.0 + zeta));
        let min_sample = a.sample_objectives.iter().flatten().fold(f64::INFINITY, |m, &v| m.min(v));
        prop_assert_eq!(min_sample, a.objective());

        // the lift is a correlation-like matrix: unit diagonal, entries in [-1, 1]
        let lift = build_lift(&sol.primal).unwrap();
        for i in 0..=p {
            prop_assert!((lift.t[(i, i)] - 1.0).abs() <= 1e-6, "T[{},{}] = {}", i, i, lift.t[(i, i)]);
            for j in 0..=p {
                prop_assert!(lift.t[(i, j)].abs() <= 1.0 + 1e-6);
            }
        }
    }
}
