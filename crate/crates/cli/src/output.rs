//! JSON documents written by each subcommand. Their schemas live in `schemas/`.

use serde::Serialize;

use l0conic::bench::LambdaPath;
use l0conic::sdp::SolveStatus;
use l0conic::{BnbResult, FitResult};

pub fn one_based(support: &[usize]) -> Vec<usize> {
    support.iter().map(|i| i + 1).collect()
}

#[derive(Serialize)]
pub struct RelaxReport {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub mu: f64,
    pub zeta_sdp: f64,
    pub dual_value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub rank: usize,
    pub rank1_exact: bool,
    pub rank1_ratio: f64,
    pub rank1_support: Option<Vec<usize>>,
    pub rank1_objective: Option<f64>,
    pub b: Vec<f64>,
    pub z: Vec<f64>,
    pub delta_star: Vec<f64>,
}

#[derive(Serialize)]
pub struct PrReport {
    pub delta_mode: String,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub support: Vec<usize>,
    pub b: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Serialize)]
pub struct RoundReport {
    pub zeta_sdp: f64,
    pub objective: f64,
    /// `(objective - zeta_sdp) / objective` in percent.
    pub gap_pct: f64,
    pub support: Vec<usize>,
    pub b: Vec<f64>,
    pub samples: usize,
    pub best_sample: usize,
    pub distinct_supports: usize,
    pub seed: u64,
}

#[derive(Serialize)]
pub struct ExactReport {
    pub method: &'static str,
    pub objective: f64,
    pub lower_bound: f64,
    pub optimal: bool,
    pub support: Vec<usize>,
    pub b: Vec<f64>,
    pub nodes: Option<usize>,
    pub big_m: Option<f64>,
}

impl ExactReport {
    pub fn from_fit(fit: &FitResult, method: &'static str) -> Self {
        Self {
            method,
            objective: fit.objective,
            lower_bound: fit.objective,
            optimal: true,
            support: one_based(&fit.support),
            b: fit.b.as_slice().to_vec(),
            nodes: None,
            big_m: None,
        }
    }

    pub fn from_bnb(res: &BnbResult) -> Self {
        Self {
            method: "branch-and-bound",
            objective: res.incumbent.objective,
            lower_bound: res.lower_bound,
            optimal: res.optimal,
            support: one_based(&res.incumbent.support),
            b: res.incumbent.b.as_slice().to_vec(),
            nodes: Some(res.nodes),
            big_m: Some(res.big_m),
        }
    }
}

#[derive(Serialize)]
pub struct LambdaMaxReport {
    pub lambda_max: f64,
}

#[derive(Serialize)]
pub struct PathPointReport {
    pub lambda: f64,
    pub zeta_sdp: f64,
    pub nu_gw: f64,
    pub support: Vec<usize>,
    pub converged: bool,
}

#[derive(Serialize)]
pub struct PathReport {
    pub lambda_max: f64,
    pub monotone: bool,
    pub points: Vec<PathPointReport>,
}

impl From<&LambdaPath> for PathReport {
    fn from(path: &LambdaPath) -> Self {
        Self {
            lambda_max: path.lambda_max,
            monotone: path.monotone,
            points: path
                .points
                .iter()
                .map(|p| PathPointReport {
                    lambda: p.lambda,
                    zeta_sdp: p.zeta_sdp,
                    nu_gw: p.nu_gw,
                    support: one_based(&p.support),
                    converged: p.converged,
                })
                .collect(),
        }
    }
}
