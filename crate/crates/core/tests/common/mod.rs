#![allow(dead_code)]

use l0conic::bench::{generate_instance, SimSpec};
use l0conic::ProblemInstance;
use nalgebra::DVector;

pub fn sim(seed: u64, n: usize, p: usize, lambda: f64, mu: f64) -> ProblemInstance {
    let spec = SimSpec { n, p, k: (p / 3).max(1), noise_sd: 0.5, seed, count: 1 };
    generate_instance(&spec, lambda, mu, 0).unwrap()
}

/// `1/2 |Xb - y|^2 + 1/2 mu |b|^2 + lambda |b|_0` straight from the data.
pub fn l0_objective(inst: &ProblemInstance, b: &DVector<f64>) -> f64 {
    let r = &inst.x * b - &inst.y;
    0.5 * r.norm_squared() + 0.5 * inst.mu * b.norm_squared() + inst.lambda * b.iter().filter(|v| **v != 0.0).count() as f64
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
