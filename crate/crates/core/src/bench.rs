//! Simulation harness: synthetic instances, relative-gap tables and
//! regularization paths.
//!
//! All randomness is derived from `SimSpec::seed`; instance `i` uses ChaCha8
//! stream `i`, so the same index gives the same data in every `(lambda, mu)`
//! cell. CSV and manifest outputs contain no timings and are byte-for-byte
//! reproducible from the spec and budgets.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, BnbConfig};
use crate::instance::{build_gram, ProblemInstance};
use crate::perspective::{delta_pwg, solve_pr, PrConfig};
use crate::rounding::gw_round;
use crate::sdp::{self, blend_start, build_sdp, solve_sdp, solve_sdp_from, IpmConfig};

/// How the noise level `5` of the reference experiment is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseConvention {
    /// `N(0, 5)` is mean and variance: standard deviation `sqrt(5)`.
    #[default]
    Variance,
    /// `N(0, 5)` is mean and standard deviation.
    Sd,
}

impl NoiseConvention {
    pub fn noise_sd(self, level: f64) -> f64 {
        match self {
            NoiseConvention::Variance => level.sqrt(),
            NoiseConvention::Sd => level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    /// True sparsity.
    pub k: usize,
    pub noise_sd: f64,
    pub seed: u64,
    /// Instances per cell.
    pub count: usize,
}

impl SimSpec {
    /// `n = 100, p = 60, k = 10`, noise level 5, ten instances per cell.
    pub fn desk_scale(convention: NoiseConvention, seed: u64) -> Self {
        Self { n: 100, p: 60, k: 10, noise_sd: convention.noise_sd(5.0), seed, count: 10 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidInput("n and p must be positive".into()));
        }
        if self.k < 1 || self.k > self.p {
            return Err(Error::InvalidInput(format!("need 1 <= k <= p, got k = {}", self.k)));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidInput("noise_sd must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Instance `index` of `spec` with the given penalties, and its true coefficients.
///
/// `X` has i.i.d. `N(0, 1) / sqrt(n)` entries; the first `k` true coefficients
/// have a random sign and magnitude uniform on `[0.5, 1]`; `y = X b + eps` with
/// `eps ~ N(0, noise_sd^2)`.
pub fn generate_with_truth(spec: &SimSpec, lambda: f64, mu: f64, index: u64) -> Result<(ProblemInstance<f64>, DVector<f64>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let scale = 1.0 / (spec.n as f64).sqrt();
    let x = DMatrix::from_fn(spec.n, spec.p, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
    let mut b = DVector::zeros(spec.p);
    for i in 0..spec.k {
        let mag = rng.random_range(0.5..=1.0);
        b[i] = if rng.random::<bool>() { mag } else { -mag };
    }
    let noise = DVector::from_fn(spec.n, |_, _| rng.sample::<f64, _>(StandardNormal) * spec.noise_sd);
    let y = &x * &b + noise;
    Ok((ProblemInstance::new(x, y, lambda, mu)?, b))
}

pub fn generate_instance(spec: &SimSpec, lambda: f64, mu: f64, index: u64) -> Result<ProblemInstance<f64>> {
    Ok(generate_with_truth(spec, lambda, mu, index)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub bnb_nodes: Option<usize>,
    /// Wall-clock limit per branch-and-bound run; makes results timing dependent.
    pub bnb_secs: Option<f64>,
    pub samples: usize,
    pub rounding_seed: u64,
    pub big_m_safety: f64,
    pub sdp_gap_tol: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            bnb_nodes: Some(10_000),
            bnb_secs: None,
            samples: 1000,
            rounding_seed: 0,
            big_m_safety: exact::DEFAULT_BIG_M_SAFETY,
            sdp_gap_tol: IpmConfig::default().gap_tol,
        }
    }
}

impl Budgets {
    fn bnb_config(&self) -> BnbConfig {
        BnbConfig {
            node_budget: self.bnb_nodes,
            time_budget: self.bnb_secs.map(std::time::Duration::from_secs_f64),
            ..BnbConfig::default()
        }
    }

    fn ipm_config(&self) -> IpmConfig {
        IpmConfig { gap_tol: self.sdp_gap_tol, ..IpmConfig::default() }
    }
}

/// Bounds and timings for one instance of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub lambda: f64,
    pub mu: f64,
    pub index: u64,
    pub tau_sdp: f64,
    pub tau_pwg: f64,
    pub tau_bnb_lower: f64,
    pub tau_bnb_upper: f64,
    pub tau_gw: f64,
    pub tau_ub: f64,
    pub sdp_gap: f64,
    pub pwg_gap: f64,
    pub bnb_gap: f64,
    /// `(tau_gw - tau_ub) / tau_ub` in percent.
    pub gw_gap: f64,
    pub bnb_nodes: usize,
    pub bnb_optimal: bool,
    pub sdp_rank1: bool,
    pub sdp_converged: bool,
    pub sdp_secs: f64,
    pub bnb_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub lambda: f64,
    pub mu: f64,
    pub instances: usize,
    pub failures: usize,
    pub mean_sdp_gap: f64,
    pub mean_pwg_gap: f64,
    pub mean_bnb_gap: f64,
    pub mean_gw_gap: f64,
    pub mean_bnb_nodes: f64,
    pub rank1_count: usize,
    pub mean_sdp_secs: f64,
    pub mean_bnb_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub spec: SimSpec,
    pub budgets: Budgets,
    pub cells: Vec<CellSummary>,
    pub records: Vec<InstanceRecord>,
    /// `(lambda, mu, index, message)` for failed instances.
    pub failures: Vec<(f64, f64, u64, String)>,
}

/// `(tau_ub - tau) / tau_ub` in percent.
pub fn relative_gap_pct(tau_ub: f64, tau: f64) -> f64 {
    100.0 * (tau_ub - tau) / tau_ub
}

fn evaluate(spec: &SimSpec, lambda: f64, mu: f64, index: u64, budgets: &Budgets) -> Result<InstanceRecord> {
    let inst = generate_instance(spec, lambda, mu, index)?;
    let gram = build_gram(&inst)?;
    let sdp_sol = solve_sdp(&build_sdp(&gram), &budgets.ipm_config())?;
    let tau_sdp = sdp_sol.primal.value;
    let tau_pwg = solve_pr(&gram, &delta_pwg(&inst)?, &PrConfig::default())?.value;
    let bnb = exact::branch_and_bound_validated(&inst, &gram, budgets.big_m_safety, &budgets.bnb_config())?;
    let gw = gw_round(&inst, &gram, &sdp_sol.primal, budgets.samples, budgets.rounding_seed.wrapping_add(index))?;
    let tau_gw = gw.objective();
    let tau_ub = bnb.incumbent.objective.min(tau_gw);
    Ok(InstanceRecord {
        lambda,
        mu,
        index,
        tau_sdp,
        tau_pwg,
        tau_bnb_lower: bnb.lower_bound,
        tau_bnb_upper: bnb.incumbent.objective,
        tau_gw,
        tau_ub,
        sdp_gap: relative_gap_pct(tau_ub, tau_sdp),
        pwg_gap: relative_gap_pct(tau_ub, tau_pwg),
        bnb_gap: relative_gap_pct(tau_ub, bnb.lower_bound),
        gw_gap: -relative_gap_pct(tau_ub, tau_gw),
        bnb_nodes: bnb.nodes,
        bnb_optimal: bnb.optimal,
        sdp_rank1: sdp_sol.primal.rank == 1,
        sdp_converged: sdp_sol.converged(),
        sdp_secs: sdp_sol.stats.wall_time_secs,
        bnb_secs: bnb.time_secs,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Relaxation gaps for every `(lambda, mu)` cell; instances run on the rayon
/// pool and are reduced in a fixed order.
pub fn gap_table(spec: &SimSpec, lambda_grid: &[f64], mu_grid: &[f64], budgets: &Budgets) -> Result<GapReport> {
    spec.validate()?;
    let jobs: Vec<(f64, f64, u64)> = lambda_grid
        .iter()
        .flat_map(|&l| mu_grid.iter().flat_map(move |&m| (0..spec.count as u64).map(move |i| (l, m, i))))
        .collect();
    let outcomes: Vec<Result<InstanceRecord>> =
        jobs.par_iter().map(|&(l, m, i)| evaluate(spec, l, m, i, budgets)).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(l, m, i), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failures.push((l, m, i, e.to_string())),
        }
    }
    let mut cells = Vec::new();
    for &l in lambda_grid {
        for &m in mu_grid {
            let rs: Vec<&InstanceRecord> = records.iter().filter(|r| r.lambda == l && r.mu == m).collect();
            cells.push(CellSummary {
                lambda: l,
                mu: m,
                instances: rs.len(),
                failures: failures.iter().filter(|f| f.0 == l && f.1 == m).count(),
                mean_sdp_gap: mean(rs.iter().map(|r| r.sdp_gap)),
                mean_pwg_gap: mean(rs.iter().map(|r| r.pwg_gap)),
                mean_bnb_gap: mean(rs.iter().map(|r| r.bnb_gap)),
                mean_gw_gap: mean(rs.iter().map(|r| r.gw_gap)),
                mean_bnb_nodes: mean(rs.iter().map(|r| r.bnb_nodes as f64)),
                rank1_count: rs.iter().filter(|r| r.sdp_rank1).count(),
                mean_sdp_secs: mean(rs.iter().map(|r| r.sdp_secs)),
                mean_bnb_secs: mean(rs.iter().map(|r| r.bnb_secs)),
            });
        }
    }
    Ok(GapReport { spec: *spec, budgets: *budgets, cells, records, failures })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

impl GapReport {
    /// One row per cell: `lambda,mu,instances,failures,sdp_gap_pct,pwg_gap_pct,bnb_gap_pct,gw_gap_pct,bnb_nodes,rank1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "lambda", "mu", "instances", "failures", "sdp_gap_pct", "pwg_gap_pct", "bnb_gap_pct", "gw_gap_pct",
            "bnb_nodes", "rank1",
        ])
        .map_err(csv_err)?;
        for c in &self.cells {
            w.write_record([
                c.lambda.to_string(),
                c.mu.to_string(),
                c.instances.to_string(),
                c.failures.to_string(),
                fmt(c.mean_sdp_gap),
                fmt(c.mean_pwg_gap),
                fmt(c.mean_bnb_gap),
                fmt(c.mean_gw_gap),
                fmt(c.mean_bnb_nodes),
                c.rank1_count.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per instance with every bound; no timings.
    pub fn write_instances_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "lambda", "mu", "index", "tau_sdp", "tau_pwg", "tau_bnb_lower", "tau_bnb_upper", "tau_gw", "tau_ub",
            "bnb_nodes", "bnb_optimal", "sdp_rank1",
        ])
        .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.lambda.to_string(),
                r.mu.to_string(),
                r.index.to_string(),
                fmt(r.tau_sdp),
                fmt(r.tau_pwg),
                fmt(r.tau_bnb_lower),
                fmt(r.tau_bnb_upper),
                fmt(r.tau_gw),
                fmt(r.tau_ub),
                r.bnb_nodes.to_string(),
                r.bnb_optimal.to_string(),
                r.sdp_rank1.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean solver wall times per cell; not reproducible across runs.
    pub fn write_timings_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "mu", "sdp_secs", "bnb_secs"]).map_err(csv_err)?;
        for c in &self.cells {
            w.write_record([c.lambda.to_string(), c.mu.to_string(), fmt(c.mean_sdp_secs), fmt(c.mean_bnb_secs)])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingCell {
    pub lambda: f64,
    pub mu: f64,
    pub instances: usize,
    /// Mean of `(tau_gw - tau_ub) / tau_ub` in percent.
    pub mean_gap_pct: f64,
    pub max_gap_pct: f64,
    /// Instances where rounding reached `tau_ub` (relative 1e-9).
    pub exact_matches: usize,
    /// Whether `tau_ub` came from full enumeration.
    pub enumerated: bool,
}

/// Quality of rounding against the best known value: enumeration for
/// `p <= 20`, branch-and-bound (under `budgets`) otherwise.
pub fn rounding_quality_table(
    spec: &SimSpec,
    lambda_grid: &[f64],
    mu_grid: &[f64],
    budgets: &Budgets,
) -> Result<Vec<RoundingCell>> {
    spec.validate()?;
    let enumerated = spec.p <= exact::BRUTE_FORCE_MAX_P;
    let jobs: Vec<(f64, f64, u64)> = lambda_grid
        .iter()
        .flat_map(|&l| mu_grid.iter().flat_map(move |&m| (0..spec.count as u64).map(move |i| (l, m, i))))
        .collect();
    let gaps: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(l, m, i)| {
            let inst = generate_instance(spec, l, m, i)?;
            let gram = build_gram(&inst)?;
            let sol = solve_sdp(&build_sdp(&gram), &budgets.ipm_config())?;
            let gw = gw_round(&inst, &gram, &sol.primal, budgets.samples, budgets.rounding_seed.wrapping_add(i))?;
            let best = if enumerated {
                exact::brute_force_with(&inst, &gram)?.objective
            } else {
                exact::branch_and_bound_validated(&inst, &gram, budgets.big_m_safety, &budgets.bnb_config())?
                    .incumbent
                    .objective
            };
            let tau_ub = best.min(gw.objective());
            Ok(-relative_gap_pct(tau_ub, gw.objective()))
        })
        .collect();
    let mut cells = Vec::new();
    for &l in lambda_grid {
        for &m in mu_grid {
            let vals: Vec<f64> = jobs
                .iter()
                .zip(&gaps)
                .filter(|((jl, jm, _), _)| *jl == l && *jm == m)
                .filter_map(|(_, g)| g.as_ref().ok().copied())
                .collect();
            cells.push(RoundingCell {
                lambda: l,
                mu: m,
                instances: vals.len(),
                mean_gap_pct: mean(vals.iter().copied()),
                max_gap_pct: vals.iter().copied().fold(0.0, f64::max),
                exact_matches: vals.iter().filter(|&&g| g <= 1e-7).count(),
                enumerated,
            });
        }
    }
    Ok(cells)
}

pub fn write_rounding_csv<W: Write>(cells: &[RoundingCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "mu", "instances", "gw_gap_pct", "max_gw_gap_pct", "exact_matches", "enumerated"])
        .map_err(csv_err)?;
    for c in cells {
        w.write_record([
            c.lambda.to_string(),
            c.mu.to_string(),
            c.instances.to_string(),
            fmt(c.mean_gap_pct),
            fmt(c.max_gap_pct),
            c.exact_matches.to_string(),
            c.enumerated.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub zeta_sdp: f64,
    pub nu_gw: f64,
    pub support: Vec<usize>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub lambda_max: f64,
    pub points: Vec<PathPoint>,
    /// `zeta_sdp` nondecreasing along the grid (relative slack 1e-6).
    pub monotone: bool,
}

/// Geometric grid of `grid_size` values from `1e-3 lambda_max` to `lambda_max`;
/// each solve starts from a blend of the previous solution and the default
/// start point, falling back to a cold start if that fails to converge.
pub fn lambda_path(
    instance: &ProblemInstance<f64>,
    grid_size: usize,
    config: &IpmConfig,
    samples: usize,
    seed: u64,
) -> Result<LambdaPath> {
    if grid_size < 2 {
        return Err(Error::InvalidInput("grid_size must be at least 2".into()));
    }
    let gram0 = build_gram(instance)?;
    let lmax = sdp::lambda_max(&gram0, config)?;
    let lo = 1e-3 * lmax;
    let grid: Vec<f64> = (0..grid_size)
        .map(|k| if k + 1 == grid_size { lmax } else { lo * (lmax / lo).powf(k as f64 / (grid_size - 1) as f64) })
        .collect();
    let mut points = Vec::with_capacity(grid_size);
    let mut previous: Option<sdp::SdpSolution<f64>> = None;
    for &lambda in &grid {
        let inst = instance.with_penalties(lambda, instance.mu)?;
        let gram = gram0.with_lambda(lambda);
        let prob = build_sdp(&gram);
        let cold = prob.start_point()?;
        let sol = match &previous {
            Some(prev) => {
                let warm = solve_sdp_from(&prob, blend_start(prev, &cold, 0.5), config)?;
                if warm.converged() {
                    warm
                } else {
                    solve_sdp_from(&prob, cold, config)?
                }
            }
            None => solve_sdp_from(&prob, cold, config)?,
        };
        let gw = gw_round(&inst, &gram, &sol.primal, samples, seed)?;
        points.push(PathPoint {
            lambda,
            zeta_sdp: sol.primal.value,
            nu_gw: gw.objective(),
            support: gw.best.support.clone(),
            converged: sol.converged(),
        });
        previous = Some(sol);
    }
    let monotone = points.windows(2).all(|w| w[1].zeta_sdp >= w[0].zeta_sdp - 1e-6 * (1.0 + w[0].zeta_sdp.abs()));
    Ok(LambdaPath { lambda_max: lmax, points, monotone })
}

impl LambdaPath {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "zeta_sdp", "nu_gw", "support_size", "support", "converged"]).map_err(csv_err)?;
        for pt in &self.points {
            let support = pt.support.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ");
            w.write_record([
                fmt(pt.lambda),
                fmt(pt.zeta_sdp),
                fmt(pt.nu_gw),
                pt.support.len().to_string(),
                support,
                pt.converged.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything needed to regenerate a bench run; contains no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub spec: SimSpec,
    pub noise_convention: NoiseConvention,
    pub lambda_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub budgets: Budgets,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(
        spec: SimSpec,
        noise_convention: NoiseConvention,
        lambda_grid: &[f64],
        mu_grid: &[f64],
        budgets: Budgets,
        outputs: Vec<String>,
    ) -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            spec,
            noise_convention,
            lambda_grid: lambda_grid.to_vec(),
            mu_grid: mu_grid.to_vec(),
            budgets,
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
