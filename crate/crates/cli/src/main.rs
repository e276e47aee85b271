//! `l0conic` command-line front end.

mod output;
mod seeds;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use l0conic::bench::{self, Budgets, Manifest, NoiseConvention, SimSpec};
use l0conic::exact::{self, BnbConfig};
use l0conic::instance::{build_gram, load_instance, InstanceFormat};
use l0conic::perspective::{self, PrConfig};
use l0conic::rounding::gw_round;
use l0conic::sdp::{self, IpmConfig, Rank1Verdict};
use l0conic::{GramCache, PerspectiveParams, ProblemInstance};

use output::*;

#[derive(Parser, Debug)]
#[command(name = "l0conic", version, about = "Conic relaxations and exact solvers for l0-penalized least squares")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the semidefinite relaxation.
    Relax(RelaxArgs),
    /// Solve a perspective relaxation.
    Pr(PrArgs),
    /// Round the relaxation with random hyperplanes.
    Round(RoundArgs),
    /// Solve the l0 problem exactly.
    Exact(ExactArgs),
    /// Smallest lambda at which the zero model solves the relaxation.
    LambdaMax(LambdaMaxArgs),
    /// Relaxation and rounding along a geometric lambda grid.
    Path(PathArgs),
    /// Relaxation-gap and rounding-quality tables on simulated data.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Instance file (`.json`, or `.csv` with a `.params.json` sidecar).
    #[arg(long, value_name = "PATH", conflicts_with = "simulate")]
    instance: Option<PathBuf>,
    /// Simulate an instance with the given `n,p,k` instead of reading one.
    #[arg(long, value_name = "N,P,K", value_delimiter = ',')]
    simulate: Option<Vec<usize>>,
    /// Instance index within the simulated family.
    #[arg(long, default_value_t = 0, requires = "simulate")]
    index: u64,
    /// Noise level of the simulated response.
    #[arg(long, default_value_t = 5.0, requires = "simulate")]
    noise_level: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Variance)]
    noise_convention: NoiseArg,
    /// Overrides the instance's lambda.
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides the instance's mu.
    #[arg(long)]
    mu: Option<f64>,
    /// Root seed; every random stream is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative duality-gap tolerance for the relaxation.
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Directory for JSON and CSV artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum NoiseArg {
    Variance,
    Sd,
}

impl From<NoiseArg> for NoiseConvention {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Variance => NoiseConvention::Variance,
            NoiseArg::Sd => NoiseConvention::Sd,
        }
    }
}

#[derive(Args, Debug)]
struct RelaxArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum DeltaMode {
    Uniform,
    Pwg,
    SdpOptimal,
    File,
}

#[derive(Args, Debug)]
struct PrArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = DeltaMode::SdpOptimal)]
    delta: DeltaMode,
    /// JSON array of `p` values, for `--delta file`.
    #[arg(long, value_name = "PATH")]
    delta_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RoundArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ExactMethod {
    /// Enumeration when `p <= 20`, branch-and-bound otherwise.
    Auto,
    BruteForce,
    Bnb,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = ExactMethod::Auto)]
    method: ExactMethod,
    #[arg(long)]
    budget_nodes: Option<usize>,
    #[arg(long)]
    budget_secs: Option<f64>,
    /// Multiplier on the big-M bound; M doubles while the incumbent touches it.
    #[arg(long, default_value_t = exact::DEFAULT_BIG_M_SAFETY)]
    big_m_safety: f64,
}

#[derive(Args, Debug)]
struct LambdaMaxArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug)]
struct PathArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 20)]
    grid: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Preset {
    /// `n = 100, p = 60, k = 10`, ten instances per cell, grids `{0.1, 0.3, 0.5}`.
    PaperDesk,
    /// The rounding table at `p = 20` against full enumeration.
    RoundingDesk,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Table {
    Gaps,
    Rounding,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Preset::PaperDesk)]
    preset: Preset,
    #[arg(long, value_enum)]
    table: Option<Table>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    mus: Option<Vec<f64>>,
    /// Instances per cell.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 5.0)]
    noise_level: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Variance)]
    noise_convention: NoiseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    budget_nodes: Option<usize>,
    #[arg(long)]
    budget_secs: Option<f64>,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "bench-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("warning: solver did not converge: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Exit status 0 or 2; errors map to 1.
enum Outcome {
    Done,
    NotConverged(String),
}

fn outcome(converged: bool, what: &str) -> Outcome {
    if converged {
        Outcome::Done
    } else {
        Outcome::NotConverged(what.to_string())
    }
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Relax(a) => relax(a),
        Command::Pr(a) => pr(a),
        Command::Round(a) => round(a),
        Command::Exact(a) => exact_cmd(a),
        Command::LambdaMax(a) => lambda_max(a),
        Command::Path(a) => path(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        bail!("--tol must be positive");
    }
    Ok(())
}

fn load(input: &InputArgs) -> Result<ProblemInstance> {
    check_tol(input.tol)?;
    let inst = match (&input.instance, &input.simulate) {
        (Some(path), None) => {
            let format = InstanceFormat::from_path(path)?;
            load_instance::<f64>(path, format).with_context(|| format!("reading {}", path.display()))?
        }
        (None, Some(dims)) => {
            if dims.len() != 3 {
                bail!("--simulate takes exactly three values n,p,k");
            }
            let spec = SimSpec {
                n: dims[0],
                p: dims[1],
                k: dims[2],
                noise_sd: NoiseConvention::from(input.noise_convention).noise_sd(input.noise_level),
                seed: seeds::derive(input.seed, "simulate"),
                count: 1,
            };
            bench::generate_instance(&spec, input.lambda.unwrap_or(0.1), input.mu.unwrap_or(0.1), input.index)?
        }
        _ => bail!("exactly one of --instance or --simulate is required"),
    };
    let lambda = input.lambda.unwrap_or(inst.lambda);
    let mu = input.mu.unwrap_or(inst.mu);
    Ok(inst.with_penalties(lambda, mu)?)
}

fn ipm(input: &InputArgs) -> IpmConfig {
    IpmConfig { gap_tol: input.tol, ..IpmConfig::default() }
}

fn emit<S: serde::Serialize>(input_out: Option<&Path>, name: &str, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    if let Some(dir) = input_out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), &text)?;
    }
    print!("{text}");
    Ok(())
}

fn relax(a: RelaxArgs) -> Result<Outcome> {
    let inst = load(&a.input)?;
    let gram = build_gram(&inst)?;
    let sol = sdp::solve_sdp(&sdp::build_sdp(&gram), &ipm(&a.input))?;
    let verdict = sdp::rank1_certificate(&sol.primal, &gram, sdp::RANK1_TOL)?;
    let delta_star = sdp::extract_delta_star(&sol.dual, &gram)?;
    let report = RelaxReport::new(&inst, &sol, &verdict, &delta_star.delta);
    eprintln!(
        "zeta_sdp = {:.10e}  gap = {:.2e}  status = {:?}  rank = {}  rank-1 certificate: {}",
        sol.primal.value,
        sol.stats.relative_gap,
        sol.stats.status,
        sol.primal.rank,
        if verdict.is_exact() { "yes" } else { "no" }
    );
    emit(a.input.out.as_deref(), "relax.json", &report)?;
    Ok(outcome(sol.converged(), "relaxation"))
}

fn read_delta_file(path: &Path, p: usize) -> Result<DVector<f64>> {
    let values: Vec<f64> = serde_json::from_str(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
        .with_context(|| format!("{} must hold a JSON array of numbers", path.display()))?;
    if values.len() != p {
        bail!("delta file has {} entries, expected {p}", values.len());
    }
    Ok(DVector::from_vec(values))
}

fn choose_delta(a: &PrArgs, inst: &ProblemInstance, gram: &GramCache) -> Result<PerspectiveParams> {
    if a.delta_file.is_some() && a.delta != DeltaMode::File {
        bail!("--delta-file requires --delta file");
    }
    Ok(match a.delta {
        DeltaMode::Uniform => perspective::delta_uniform(gram),
        DeltaMode::Pwg => perspective::delta_pwg(inst)?,
        DeltaMode::SdpOptimal => {
            let sol = sdp::solve_sdp(&sdp::build_sdp(gram), &ipm(&a.input))?;
            sdp::extract_delta_star(&sol.dual, gram)?
        }
        DeltaMode::File => {
            let Some(path) = &a.delta_file else { bail!("--delta file requires --delta-file") };
            PerspectiveParams::new(read_delta_file(path, inst.p())?)
        }
    })
}

fn pr(a: PrArgs) -> Result<Outcome> {
    let inst = load(&a.input)?;
    let gram = build_gram(&inst)?;
    let params = choose_delta(&a, &inst, &gram)?;
    let sol = perspective::solve_pr(&gram, &params, &PrConfig::default())?;
    let report = PrReport {
        delta_mode: a.delta.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
        value: sol.value,
        converged: sol.converged,
        iterations: sol.iterations,
        support: one_based(&l0conic::instance::support_of(&sol.b)),
        b: sol.b.as_slice().to_vec(),
        delta: params.delta.as_slice().to_vec(),
    };
    eprintln!("zeta_pr = {:.10e}  iterations = {}  converged = {}", sol.value, sol.iterations, sol.converged);
    emit(a.input.out.as_deref(), "pr.json", &report)?;
    Ok(outcome(sol.converged, "perspective relaxation"))
}

fn round(a: RoundArgs) -> Result<Outcome> {
    let inst = load(&a.input)?;
    let gram = build_gram(&inst)?;
    let sol = sdp::solve_sdp(&sdp::build_sdp(&gram), &ipm(&a.input))?;
    let seed = seeds::derive(a.input.seed, "round");
    let res = gw_round(&inst, &gram, &sol.primal, a.samples, seed)?;
    let report = RoundReport {
        zeta_sdp: sol.primal.value,
        objective: res.objective(),
        gap_pct: bench::relative_gap_pct(res.objective(), sol.primal.value),
        support: one_based(&res.best.support),
        b: res.best.b.as_slice().to_vec(),
        samples: res.samples,
        best_sample: res.best_sample,
        distinct_supports: res.distinct_supports,
        seed: res.seed,
    };
    if let Some(dir) = &a.input.out {
        fs::create_dir_all(dir)?;
        res.write_trace(fs::File::create(dir.join("round_trace.csv"))?)?;
    }
    eprintln!(
        "nu_gw = {:.10e}  zeta_sdp = {:.10e}  |S| = {}  distinct supports = {}",
        report.objective,
        report.zeta_sdp,
        report.support.len(),
        report.distinct_supports
    );
    emit(a.input.out.as_deref(), "round.json", &report)?;
    Ok(outcome(sol.converged(), "relaxation"))
}

fn exact_cmd(a: ExactArgs) -> Result<Outcome> {
    let inst = load(&a.input)?;
    let gram = build_gram(&inst)?;
    let use_bnb = match a.method {
        ExactMethod::Auto => inst.p() > exact::BRUTE_FORCE_MAX_P,
        ExactMethod::BruteForce => false,
        ExactMethod::Bnb => true,
    };
    if !use_bnb {
        if a.budget_nodes.is_some() || a.budget_secs.is_some() {
            bail!("node and time budgets apply to branch-and-bound only");
        }
        let fit = exact::brute_force_with(&inst, &gram)?;
        eprintln!("zeta_l0 = {:.10e}  |S| = {}  (enumeration)", fit.objective, fit.support.len());
        let report = ExactReport::from_fit(&fit, "brute-force");
        emit(a.input.out.as_deref(), "exact.json", &report)?;
        return Ok(Outcome::Done);
    }
    if let Some(s) = a.budget_secs {
        if !(s > 0.0 && s.is_finite()) {
            bail!("--budget-secs must be positive");
        }
    }
    let config = BnbConfig {
        node_budget: a.budget_nodes,
        time_budget: a.budget_secs.map(Duration::from_secs_f64),
        ..BnbConfig::default()
    };
    let res = exact::branch_and_bound_validated(&inst, &gram, a.big_m_safety, &config)?;
    if let Some(dir) = &a.input.out {
        fs::create_dir_all(dir)?;
        res.write_trace(fs::File::create(dir.join("bnb_trace.csv"))?)?;
    }
    eprintln!(
        "zeta_l0 <= {:.10e}  lower bound {:.10e}  nodes = {}  optimal = {}",
        res.incumbent.objective, res.lower_bound, res.nodes, res.optimal
    );
    emit(a.input.out.as_deref(), "exact.json", &ExactReport::from_bnb(&res))?;
    Ok(outcome(res.optimal, "branch-and-bound budget exhausted before the gap closed"))
}

fn lambda_max(a: LambdaMaxArgs) -> Result<Outcome> {
    let inst = load(&a.input)?;
    let gram = build_gram(&inst)?;
    let value = sdp::lambda_max(&gram, &ipm(&a.input))?;
    eprintln!("lambda_max = {value}");
    emit(a.input.out.as_deref(), "lambda_max.json", &LambdaMaxReport { lambda_max: value })?;
    Ok(Outcome::Done)
}

fn path(a: PathArgs) -> Result<Outcome> {
    let inst = load(&a.input)?;
    let seed = seeds::derive(a.input.seed, "path");
    let res = bench::lambda_path(&inst, a.grid, &ipm(&a.input), a.samples, seed)?;
    if let Some(dir) = &a.input.out {
        fs::create_dir_all(dir)?;
        res.write_csv(fs::File::create(dir.join("path.csv"))?)?;
    }
    eprintln!("lambda_max = {:.6e}  points = {}  monotone = {}", res.lambda_max, res.points.len(), res.monotone);
    let all = res.points.iter().all(|p| p.converged);
    emit(a.input.out.as_deref(), "path.json", &PathReport::from(&res))?;
    Ok(outcome(all, "relaxation at some grid point"))
}

fn bench_cmd(a: BenchArgs) -> Result<Outcome> {
    check_tol(a.tol)?;
    if let Some(w) = a.workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    let convention = NoiseConvention::from(a.noise_convention);
    let (mut spec, table) = match a.preset {
        Preset::PaperDesk => (SimSpec::desk_scale(convention, a.seed), Table::Gaps),
        Preset::RoundingDesk => (
            SimSpec { n: 100, p: 20, k: 5, noise_sd: convention.noise_sd(5.0), seed: a.seed, count: 10 },
            Table::Rounding,
        ),
    };
    let table = a.table.unwrap_or(table);
    spec.noise_sd = convention.noise_sd(a.noise_level);
    spec.n = a.n.unwrap_or(spec.n);
    spec.p = a.p.unwrap_or(spec.p);
    spec.k = a.k.unwrap_or(spec.k);
    spec.count = a.count.unwrap_or(spec.count);
    spec.validate()?;
    let lambdas = a.lambdas.clone().unwrap_or_else(|| vec![0.1, 0.3, 0.5]);
    let mus = a.mus.clone().unwrap_or_else(|| vec![0.1, 0.3, 0.5]);
    if lambdas.is_empty() || mus.is_empty() {
        bail!("grids must be non-empty");
    }
    let defaults = Budgets::default();
    let budgets = Budgets {
        bnb_nodes: a.budget_nodes.or(defaults.bnb_nodes),
        bnb_secs: a.budget_secs,
        samples: a.samples.unwrap_or(defaults.samples),
        rounding_seed: seeds::derive(a.seed, "round"),
        sdp_gap_tol: a.tol,
        ..defaults
    };
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    let mut converged = true;
    match table {
        Table::Gaps => {
            let report = bench::gap_table(&spec, &lambdas, &mus, &budgets)?;
            report.write_csv(fs::File::create(a.out.join("gap_table.csv"))?)?;
            report.write_instances_csv(fs::File::create(a.out.join("gap_instances.csv"))?)?;
            report.write_timings_csv(fs::File::create(a.out.join("timings.csv"))?)?;
            outputs.extend(["gap_table.csv", "gap_instances.csv", "timings.csv"].map(String::from));
            eprintln!("{:>6} {:>6} {:>10} {:>10} {:>10} {:>10} {:>9}", "lambda", "mu", "SDPGap%", "PWGGap%", "BnBGap%", "GWGap%", "nodes");
            for c in &report.cells {
                eprintln!(
                    "{:>6} {:>6} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>9.1}",
                    c.lambda, c.mu, c.mean_sdp_gap, c.mean_pwg_gap, c.mean_bnb_gap, c.mean_gw_gap, c.mean_bnb_nodes
                );
            }
            for f in &report.failures {
                eprintln!("failed: lambda={} mu={} index={}: {}", f.0, f.1, f.2, f.3);
            }
            converged = report.failures.is_empty() && report.records.iter().all(|r| r.sdp_converged);
        }
        Table::Rounding => {
            let cells = bench::rounding_quality_table(&spec, &lambdas, &mus, &budgets)?;
            bench::write_rounding_csv(&cells, fs::File::create(a.out.join("rounding_table.csv"))?)?;
            outputs.push("rounding_table.csv".into());
            eprintln!("{:>6} {:>6} {:>10} {:>10} {:>6}", "lambda", "mu", "GWGap%", "max%", "exact");
            for c in &cells {
                eprintln!(
                    "{:>6} {:>6} {:>10.4} {:>10.4} {:>3}/{}",
                    c.lambda, c.mu, c.mean_gap_pct, c.max_gap_pct, c.exact_matches, c.instances
                );
                converged &= c.instances == spec.count;
            }
        }
    }
    let manifest = Manifest::new(spec, convention, &lambdas, &mus, budgets, outputs);
    manifest.write(&a.out.join("manifest.json"))?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(outcome(converged, "some bench instances failed or did not converge"))
}

impl RelaxReport {
    fn new(inst: &ProblemInstance, sol: &l0conic::SdpSolution, verdict: &Rank1Verdict<f64>, delta_star: &DVector<f64>) -> Self {
        let (rank1_exact, rank1_ratio, rank1_support, rank1_objective) = match verdict {
            Rank1Verdict::Exact { fit, ratio, .. } => (true, *ratio, Some(one_based(&fit.support)), Some(fit.objective)),
            Rank1Verdict::NotRank1 { ratio } => (false, *ratio, None, None),
        };
        Self {
            n: inst.n(),
            p: inst.p(),
            lambda: inst.lambda,
            mu: inst.mu,
            zeta_sdp: sol.primal.value,
            dual_value: sol.dual.value,
            status: sol.stats.status,
            iterations: sol.stats.iterations,
            relative_gap: sol.stats.relative_gap,
            primal_infeasibility: sol.stats.primal_infeasibility,
            dual_infeasibility: sol.stats.dual_infeasibility,
            rank: sol.primal.rank,
            rank1_exact,
            rank1_ratio,
            rank1_support,
            rank1_objective,
            b: sol.primal.b.as_slice().to_vec(),
            z: sol.primal.z.as_slice().to_vec(),
            delta_star: delta_star.as_slice().to_vec(),
        }
    }
}
