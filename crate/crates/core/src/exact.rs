//! Exact solvers for small problems: support enumeration and big-M
//! branch-and-bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::instance::{build_gram, FitResult, GramCache, Method, ProblemInstance};
use crate::numerics::{cholesky_dense, cholesky_solve};
use crate::penalties::soft_threshold;
use crate::prox_grad::{self, ProxGradConfig, Separable};
use crate::scalar::Real;

pub const BRUTE_FORCE_MAX_P: usize = 20;
pub const DEFAULT_BIG_M_SAFETY: f64 = 5.0;

/// Global minimizer by enumerating all `2^p` supports.
///
/// Each support is scored as `lambda |S| + 1/2 y^T y - 1/2 |w|^2` with
/// `L w = c_S`, `G_SS = L L^T`, the factor grown one index at a time along a
/// depth-first walk. Ties go to the smaller support, then the lexicographically
/// smaller index list.
pub fn brute_force<T: Real>(instance: &ProblemInstance<T>) -> Result<FitResult<T>> {
    let p = instance.p();
    if p > BRUTE_FORCE_MAX_P {
        return Err(Error::TooLarge { p, cap: BRUTE_FORCE_MAX_P });
    }
    let gram = build_gram(instance)?;
    brute_force_with(instance, &gram)
}

/// [`brute_force`] with a precomputed gram cache.
pub fn brute_force_with<T: Real>(instance: &ProblemInstance<T>, gram: &GramCache<T>) -> Result<FitResult<T>> {
    let p = gram.p();
    if p > BRUTE_FORCE_MAX_P {
        return Err(Error::TooLarge { p, cap: BRUTE_FORCE_MAX_P });
    }
    let mut walk = Enumeration {
        g: gram.g.as_matrix(),
        c: &gram.c,
        lambda: gram.lambda,
        base: T::lit(0.5) * gram.yty,
        rows: Vec::with_capacity(p),
        w: Vec::with_capacity(p),
        support: Vec::with_capacity(p),
        best: (T::lit(0.5) * gram.yty, Vec::new()),
    };
    walk.descend(0, T::zero());
    let support = walk.best.1;
    FitResult::polish(instance, gram, &support, Method::BruteForce)
}

struct Enumeration<'a, T: Real> {
    g: &'a DMatrix<T>,
    c: &'a DVector<T>,
    lambda: T,
    base: T,
    /// Rows of the Cholesky factor of `G_SS`.
    rows: Vec<Vec<T>>,
    w: Vec<T>,
    support: Vec<usize>,
    best: (T, Vec<usize>),
}

impl<T: Real> Enumeration<'_, T> {
    fn descend(&mut self, from: usize, wsq: T) {
        let p = self.c.len();
        for j in from..p {
            let k = self.support.len();
            let mut row = Vec::with_capacity(k + 1);
            for a in 0..k {
                let mut s = self.g[(self.support[a], j)];
                for b in 0..a {
                    s -= self.rows[a][b] * row[b];
                }
                row.push(s / self.rows[a][a]);
            }
            let pivot = self.g[(j, j)] - row.iter().fold(T::zero(), |acc, &v| acc + v * v);
            if !(pivot > T::zero()) {
                continue;
            }
            let d = pivot.sqrt();
            let dot = row.iter().zip(&self.w).fold(T::zero(), |acc, (&l, &w)| acc + l * w);
            let wj = (self.c[j] - dot) / d;
            row.push(d);
            let wsq_next = wsq + wj * wj;
            self.rows.push(row);
            self.w.push(wj);
            self.support.push(j);

            let value = self.base - T::lit(0.5) * wsq_next + self.lambda * T::count(self.support.len());
            let better = match value.partial_cmp(&self.best.0) {
                Some(Ordering::Less) => true,
                Some(Ordering::Equal) => {
                    (self.support.len(), &self.support) < (self.best.1.len(), &self.best.1)
                }
                _ => false,
            };
            if better {
                self.best = (value, self.support.clone());
            }
            self.descend(j + 1, wsq_next);

            self.rows.pop();
            self.w.pop();
            self.support.pop();
        }
    }
}

/// `M = safety * max(|G^{-1} c|_inf, max_i |c_i| / G_ii)`, or 1 when that is 0.
pub fn big_m<T: Real>(gram: &GramCache<T>, safety: T) -> Result<T> {
    if !(safety >= T::one()) {
        return Err(Error::InvalidInput("big-M safety factor must be at least 1".into()));
    }
    let g = gram.g.as_matrix();
    let l = cholesky_dense(g)?;
    let ols = cholesky_solve(&l, &gram.c);
    let scaled = (0..gram.p()).fold(T::zero(), |acc, i| acc.max(gram.c[i].abs() / g[(i, i)]));
    let raw = ols.amax().max(scaled);
    Ok(if raw > T::zero() { safety * raw } else { T::one() })
}

#[derive(Debug, Clone, Copy)]
pub struct BnbConfig {
    /// Relative gap `(UB - LB) / max(1, |UB|)` at which the search stops.
    pub tol: f64,
    pub node_budget: Option<usize>,
    pub time_budget: Option<Duration>,
    /// Node relaxation solver settings.
    pub node_solver: ProxGradConfig,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            node_budget: None,
            time_budget: None,
            node_solver: ProxGradConfig { tol: 1e-9, obj_tol: 1e-13, max_iter: 20_000 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub time_secs: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct BnbResult<T: Real> {
    pub incumbent: FitResult<T>,
    pub lower_bound: T,
    pub nodes: usize,
    pub time_secs: f64,
    /// Gap closed to `config.tol`.
    pub optimal: bool,
    pub big_m: T,
    pub trace: Vec<TracePoint>,
}

impl<T: Real> BnbResult<T> {
    pub fn relative_gap(&self) -> T {
        let ub = self.incumbent.objective;
        ((ub - self.lower_bound) / ub.abs().max(T::one())).max(T::zero())
    }

    /// `time,lower_bound,upper_bound,nodes`.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["time", "lower_bound", "upper_bound", "nodes"]).map_err(io)?;
        for t in &self.trace {
            w.write_record([
                format!("{:.6}", t.time_secs),
                format!("{:.16e}", t.lower_bound),
                format!("{:.16e}", t.upper_bound),
                t.nodes.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fix {
    Free,
    Zero,
    One,
}

struct Node<T: Real> {
    bound: T,
    fixes: Vec<Fix>,
    warm: DVector<T>,
    id: usize,
}

impl<T: Real> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Node<T> {}

impl<T: Real> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Node<T> {
    // max-heap on the reversed key: smallest bound first, then oldest node
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// `w_i |x|` on the reduced coordinates.
struct NodePenalty<T: Real> {
    weights: Vec<T>,
}

impl<T: Real> Separable<T> for NodePenalty<T> {
    fn value(&self, i: usize, x: T) -> T {
        self.weights[i] * x.abs()
    }

    fn prox(&self, i: usize, v: T, step: T) -> T {
        soft_threshold(v, step * self.weights[i])
    }
}

struct NodeSolution<T: Real> {
    /// Full-length relaxation solution (zeros on fixed-zero coordinates).
    b: DVector<T>,
    /// Certified lower bound on the node relaxation.
    bound: T,
}

/// Node relaxation: `1/2 b^T G b - c^T b + 1/2 y^T y + (lambda/M) sum_free |b_i|
/// + lambda |fixed one|` over `b` vanishing on fixed-zero coordinates.
///
/// The returned bound is `F(b) - dist(0, dF(b))^2 / (2 lambda_min(G))`, valid for
/// any `b` by strong convexity.
fn solve_node<T: Real>(
    gram: &GramCache<T>,
    big_m: T,
    fixes: &[Fix],
    warm: &DVector<T>,
    cfg: &ProxGradConfig,
) -> NodeSolution<T> {
    let p = gram.p();
    let active: Vec<usize> = (0..p).filter(|&i| fixes[i] != Fix::Zero).collect();
    let ones = fixes.iter().filter(|&&f| f == Fix::One).count();
    let constant = T::lit(0.5) * gram.yty + gram.lambda * T::count(ones);
    let mut b = DVector::zeros(p);
    if active.is_empty() {
        return NodeSolution { b, bound: constant };
    }
    let g = gram.g.as_matrix();
    let gs = g.select_rows(&active).select_columns(&active);
    let cs = DVector::from_iterator(active.len(), active.iter().map(|&i| gram.c[i]));
    let w = gram.lambda / big_m;
    let weights: Vec<T> = active.iter().map(|&i| if fixes[i] == Fix::Free { w } else { T::zero() }).collect();
    let start = DVector::from_iterator(active.len(), active.iter().map(|&i| warm[i]));
    let pen = NodePenalty { weights };
    let out = prox_grad::minimize(&gs, &cs, &pen, gram.lambda_max, start, cfg);

    let grad = &gs * &out.b - &cs;
    let mut dist_sq = T::zero();
    for k in 0..active.len() {
        let wk = pen.weights[k];
        let d = if out.b[k] != T::zero() {
            grad[k] + wk * out.b[k].signum()
        } else {
            (grad[k].abs() - wk).max(T::zero())
        };
        dist_sq += d * d;
    }
    for (k, &i) in active.iter().enumerate() {
        b[i] = out.b[k];
    }
    let value = out.value + constant;
    NodeSolution { b, bound: value - dist_sq / (T::lit(2.0) * gram.lambda_min) }
}

/// Best-first branch-and-bound on the big-M formulation with `|b_i| <= M z_i`.
///
/// Incumbents come from node solutions: the support
/// `{free i : |b_i| > 1e-6 M} + {fixed one}` is polished by restricted least
/// squares. Branching picks the free coordinate whose `|b_i| / M` is closest to
/// 1/2, ties to the larger `|b_i|`.
pub fn branch_and_bound<T: Real>(
    instance: &ProblemInstance<T>,
    gram: &GramCache<T>,
    big_m: T,
    config: &BnbConfig,
) -> Result<BnbResult<T>> {
    if !(big_m > T::zero()) {
        return Err(Error::InvalidInput("M must be positive".into()));
    }
    let clock = Instant::now();
    let p = gram.p();
    let tol = T::lit(config.tol);
    let support_tol = T::lit(1e-6) * big_m;
    let half = T::lit(0.5);

    let mut incumbent = FitResult::polish(instance, gram, &[], Method::BranchAndBound)?;
    let mut trace = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let mut nodes = 0;
    let mut exhausted = false;

    let gap_closed = |lb: T, ub: T| ub - lb <= tol * ub.abs().max(T::one());

    heap.push(Node { bound: -T::lit(f64::INFINITY), fixes: vec![Fix::Free; p], warm: DVector::zeros(p), id: next_id });
    next_id += 1;
    let mut lower_bound = -T::lit(f64::INFINITY);

    while let Some(node) = heap.pop() {
        lower_bound = node.bound;
        if gap_closed(node.bound, incumbent.objective) {
            lower_bound = node.bound.min(incumbent.objective);
            heap.clear();
            break;
        }
        let over_nodes = config.node_budget.is_some_and(|n| nodes >= n);
        let over_time = config.time_budget.is_some_and(|t| clock.elapsed() >= t);
        if over_nodes || over_time {
            heap.push(node);
            exhausted = true;
            break;
        }
        nodes += 1;

        let sol = solve_node(gram, big_m, &node.fixes, &node.warm, &config.node_solver);
        let bound = sol.bound.max(node.bound);

        let support: Vec<usize> = (0..p)
            .filter(|&i| match node.fixes[i] {
                Fix::One => true,
                Fix::Free => sol.b[i].abs() > support_tol,
                Fix::Zero => false,
            })
            .collect();
        if let Ok(fit) = FitResult::polish(instance, gram, &support, Method::BranchAndBound) {
            if fit.objective < incumbent.objective {
                incumbent = fit;
                trace.push(TracePoint {
                    time_secs: clock.elapsed().as_secs_f64(),
                    lower_bound: heap.peek().map_or(bound, |n| n.bound.min(bound)).as_f64(),
                    upper_bound: incumbent.objective.as_f64(),
                    nodes,
                });
            }
        }
        if gap_closed(bound, incumbent.objective) {
            continue;
        }

        let branch = (0..p)
            .filter(|&i| node.fixes[i] == Fix::Free)
            .map(|i| {
                let frac = (sol.b[i].abs() / big_m).min(T::one());
                ((frac - half).abs(), sol.b[i].abs(), i)
            })
            .min_by(|a, b| {
                a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
            });
        let Some((_, _, j)) = branch else {
            // every coordinate fixed: the polished support above is exact here
            continue;
        };
        for fix in [Fix::One, Fix::Zero] {
            let mut fixes = node.fixes.clone();
            fixes[j] = fix;
            let mut warm = sol.b.clone();
            if fix == Fix::Zero {
                warm[j] = T::zero();
            }
            heap.push(Node { bound, fixes, warm, id: next_id });
            next_id += 1;
        }
    }

    if heap.is_empty() && !exhausted {
        lower_bound = lower_bound.min(incumbent.objective);
        if !gap_closed(lower_bound, incumbent.objective) {
            lower_bound = incumbent.objective;
        }
    } else if let Some(top) = heap.peek() {
        lower_bound = top.bound.min(incumbent.objective);
    }
    let optimal = gap_closed(lower_bound, incumbent.objective);
    trace.push(TracePoint {
        time_secs: clock.elapsed().as_secs_f64(),
        lower_bound: lower_bound.as_f64(),
        upper_bound: incumbent.objective.as_f64(),
        nodes,
    });
    Ok(BnbResult {
        incumbent,
        lower_bound,
        nodes,
        time_secs: clock.elapsed().as_secs_f64(),
        optimal,
        big_m,
        trace,
    })
}

/// Runs [`branch_and_bound`] with `M = big_m(gram, safety)`, doubling `M` and
/// re-solving while the incumbent has `|b|_inf > 0.99 M`.
pub fn branch_and_bound_validated<T: Real>(
    instance: &ProblemInstance<T>,
    gram: &GramCache<T>,
    safety: T,
    config: &BnbConfig,
) -> Result<BnbResult<T>> {
    let mut m = big_m(gram, safety)?;
    for _ in 0..30 {
        let res = branch_and_bound(instance, gram, m, config)?;
        if res.incumbent.b.amax() <= T::lit(0.99) * m {
            return Ok(res);
        }
        m *= T::lit(2.0);
    }
    Err(Error::NumericalFailure("big-M validation did not settle".into()))
}
