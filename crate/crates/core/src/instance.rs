//! Problem data for `min 1/2 |Xb - y|^2 + 1/2 mu |b|^2 + lambda |b|_0`, the
//! gram cache every solver works from, and the instance file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, SymMatrix};
use crate::scalar::Real;

/// Smallest admissible eigenvalue of `X^T X + mu I`.
pub const PD_TOL: f64 = 1e-10;

/// Design matrix, response, and penalty weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<T: Real> {
    pub x: DMatrix<T>,
    pub y: DVector<T>,
    pub lambda: T,
    pub mu: T,
}

impl<T: Real> ProblemInstance<T> {
    /// Validates shapes, finiteness and signs. Positive definiteness of the gram
    /// matrix is checked by [`build_gram`].
    pub fn new(x: DMatrix<T>, y: DVector<T>, lambda: T, mu: T) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput("X must have at least one row and one column".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y has length {} but X has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("X".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("y".into()));
        }
        if !lambda.is_finite() || lambda < T::zero() {
            return Err(Error::InvalidInput("lambda must be finite and nonnegative".into()));
        }
        if !mu.is_finite() || mu < T::zero() {
            return Err(Error::InvalidInput("mu must be finite and nonnegative".into()));
        }
        Ok(Self { x, y, lambda, mu })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Same data with different penalty weights.
    pub fn with_penalties(&self, lambda: T, mu: T) -> Result<Self> {
        Self::new(self.x.clone(), self.y.clone(), lambda, mu)
    }
}

/// `G = X^T X + mu I`, `c = X^T y`, `y^T y` and the extreme eigenvalues of `G`.
#[derive(Debug, Clone)]
pub struct GramCache<T: Real> {
    pub g: SymMatrix<T>,
    pub c: DVector<T>,
    pub yty: T,
    pub lambda_min: T,
    pub lambda_max: T,
    pub lambda: T,
    pub mu: T,
}

impl<T: Real> GramCache<T> {
    pub fn p(&self) -> usize {
        self.c.len()
    }

    /// `1/2 y^T y - c^T b + 1/2 b^T G b`, the smooth part of every objective.
    pub fn quadratic_loss(&self, b: &DVector<T>) -> T {
        let gb = self.g.as_matrix() * b;
        T::lit(0.5) * self.yty - self.c.dot(b) + T::lit(0.5) * b.dot(&gb)
    }

    /// Same gram data with a different `lambda` (`G` does not depend on it).
    pub fn with_lambda(&self, lambda: T) -> Self {
        Self { lambda, ..self.clone() }
    }
}

pub fn build_gram<T: Real>(instance: &ProblemInstance<T>) -> Result<GramCache<T>> {
    let x = &instance.x;
    let mut g = x.transpose() * x;
    for i in 0..g.nrows() {
        g[(i, i)] += instance.mu;
    }
    let g = SymMatrix::symmetrize(g);
    let eig = numerics::sym_eigen(&g)?;
    let lambda_min = eig.min();
    if lambda_min <= T::lit(PD_TOL) {
        return Err(Error::NotPositiveDefinite(lambda_min.as_f64()));
    }
    Ok(GramCache {
        c: x.transpose() * &instance.y,
        yty: instance.y.dot(&instance.y),
        lambda_min,
        lambda_max: eig.max(),
        g,
        lambda: instance.lambda,
        mu: instance.mu,
    })
}

/// Indices with `b_i != 0`; exact zeros define the support.
pub fn support_of<T: Real>(b: &DVector<T>) -> Vec<usize> {
    b.iter().enumerate().filter(|(_, v)| **v != T::zero()).map(|(i, _)| i).collect()
}

/// `1/2 |Xb - y|^2 + 1/2 mu |b|^2 + lambda |b|_0`.
pub fn objective_l0<T: Real>(instance: &ProblemInstance<T>, b: &DVector<T>) -> Result<T> {
    if b.len() != instance.p() {
        return Err(Error::DimensionMismatch(format!(
            "b has length {} but p = {}",
            b.len(),
            instance.p()
        )));
    }
    let half = T::lit(0.5);
    let r = &instance.x * b - &instance.y;
    let nnz = T::count(support_of(b).len());
    Ok(half * r.norm_squared() + half * instance.mu * b.norm_squared() + instance.lambda * nnz)
}

/// Which solver produced a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BruteForce,
    BranchAndBound,
    Rounding,
    Rank1Certificate,
    RestrictedLs,
}

/// A feasible point of the l0 problem with its objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Real> {
    pub b: DVector<T>,
    pub support: Vec<usize>,
    pub objective: T,
    pub method: Method,
}

impl<T: Real> FitResult<T> {
    /// Builds a fit from coefficients, computing support and objective.
    pub fn from_coefficients(instance: &ProblemInstance<T>, b: DVector<T>, method: Method) -> Result<Self> {
        let objective = objective_l0(instance, &b)?;
        Ok(Self { support: support_of(&b), b, objective, method })
    }

    /// Restricted least squares on `support`, then [`FitResult::from_coefficients`].
    pub fn polish(
        instance: &ProblemInstance<T>,
        gram: &GramCache<T>,
        support: &[usize],
        method: Method,
    ) -> Result<Self> {
        let b = numerics::restricted_ls_gram(gram.g.as_matrix(), &gram.c, support)?;
        Self::from_coefficients(instance, b, method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceFormat {
    /// `y,x1,...,xp` rows plus a `<stem>.params.json` sidecar holding lambda and mu.
    Csv,
    /// `{"lambda", "mu", "X", "y"}` in one file.
    Json,
}

impl InstanceFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Self::Csv),
            Some("json") => Ok(Self::Json),
            _ => Err(Error::InvalidInput(format!(
                "cannot infer instance format from {}",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonInstance {
    lambda: f64,
    mu: f64,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct CsvSidecar {
    lambda: f64,
    mu: f64,
}

/// Path of the parameter sidecar that accompanies a CSV instance.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("params.json")
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn matrix_from_rows<T: Real>(rows: &[Vec<f64>]) -> Result<DMatrix<T>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidInput("instance has no observations".into()));
    }
    let p = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "ragged design matrix: row {i} has {} columns, expected {p}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(n, p, |i, j| T::lit(rows[i][j])))
}

pub fn load_instance<T: Real>(path: &Path, format: InstanceFormat) -> Result<ProblemInstance<T>> {
    match format {
        InstanceFormat::Json => {
            let text = fs::read_to_string(path)?;
            let raw: JsonInstance = serde_json::from_str(&text)?;
            if raw.x.len() != raw.y.len() {
                return Err(Error::DimensionMismatch(format!(
                    "y has length {} but X has {} rows",
                    raw.y.len(),
                    raw.x.len()
                )));
            }
            let x = matrix_from_rows(&raw.x)?;
            let y = DVector::from_iterator(raw.y.len(), raw.y.iter().map(|&v| T::lit(v)));
            ProblemInstance::new(x, y, T::lit(raw.lambda), T::lit(raw.mu))
        }
        InstanceFormat::Csv => {
            let side_path = sidecar_path(path);
            let side: CsvSidecar = serde_json::from_str(&fs::read_to_string(&side_path).map_err(|e| {
                Error::Io(format!("{}: {e}", side_path.display()))
            })?)?;
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_path(path)
                .map_err(|e| Error::Io(e.to_string()))?;
            let header_len = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.len();
            if header_len < 2 {
                return Err(Error::Parse("CSV header must be y,x1,...,xp".into()));
            }
            let mut ys = Vec::new();
            let mut rows = Vec::new();
            for (line, rec) in reader.records().enumerate() {
                let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
                if rec.len() != header_len {
                    return Err(Error::DimensionMismatch(format!(
                        "ragged CSV: data row {line} has {} fields, header has {header_len}",
                        rec.len()
                    )));
                }
                let vals = rec
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {line}: {e}"))))
                    .collect::<Result<Vec<f64>>>()?;
                ys.push(vals[0]);
                rows.push(vals[1..].to_vec());
            }
            let x = matrix_from_rows(&rows)?;
            let y = DVector::from_iterator(ys.len(), ys.iter().map(|&v| T::lit(v)));
            ProblemInstance::new(x, y, T::lit(side.lambda), T::lit(side.mu))
        }
    }
}

/// Serializes an instance as single-file JSON with 17 significant digits.
pub fn instance_to_json<T: Real>(instance: &ProblemInstance<T>) -> String {
    let mut s = String::new();
    let _ = write!(s, "{{\"lambda\": {}, \"mu\": {}, \"X\": [", fmt17(instance.lambda.as_f64()), fmt17(instance.mu.as_f64()));
    for i in 0..instance.n() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push('[');
        for j in 0..instance.p() {
            if j > 0 {
                s.push_str(", ");
            }
            s.push_str(&fmt17(instance.x[(i, j)].as_f64()));
        }
        s.push(']');
    }
    s.push_str("], \"y\": [");
    for i in 0..instance.n() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&fmt17(instance.y[i].as_f64()));
    }
    s.push_str("]}\n");
    s
}

pub fn save_instance<T: Real>(instance: &ProblemInstance<T>, path: &Path, format: InstanceFormat) -> Result<()> {
    match format {
        InstanceFormat::Json => fs::write(path, instance_to_json(instance))?,
        InstanceFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
            let mut header = vec!["y".to_string()];
            header.extend((1..=instance.p()).map(|j| format!("x{j}")));
            w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
            for i in 0..instance.n() {
                let mut rec = vec![fmt17(instance.y[i].as_f64())];
                rec.extend((0..instance.p()).map(|j| fmt17(instance.x[(i, j)].as_f64())));
                w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
            let side = format!(
                "{{\"lambda\": {}, \"mu\": {}, \"n\": {}, \"p\": {}}}\n",
                fmt17(instance.lambda.as_f64()),
                fmt17(instance.mu.as_f64()),
                instance.n(),
                instance.p()
            );
            fs::write(sidecar_path(path), side)?;
        }
    }
    Ok(())
}
