//! Least squares and LASSO for per-horizon linear models.
//!
//! Both solvers work on standardized columns (mean 0, population std 1) and
//! a centered target, then map the weights back to the original column
//! scales. The intercept is never penalized.
//!
//! The LASSO objective uses the per-sample scaling
//! `(1 / 2n) * RSS(beta) + lambda * sum |beta_j|`, with `beta` on the
//! standardized scale, so `lambda` does not depend on the number of rows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::features::DesignMatrix;
use crate::linalg::{dot, lstsq};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub path_length: usize,
    pub path_ratio: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig { lambda: 0.0, max_iter: 10_000, tol: 1e-6, path_length: 50, path_ratio: 1e-3 }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be >= 0"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be > 0"));
        }
        if !(self.path_ratio > 0.0 && self.path_ratio < 1.0) {
            return Err(invalid("path_ratio must lie in (0, 1)"));
        }
        if self.path_length == 0 || self.max_iter == 0 {
            return Err(invalid("path_length and max_iter must be >= 1"));
        }
        Ok(())
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        LassoConfig { lambda, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMethod {
    Ols,
    Lasso { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub method: FitMethod,
    /// Coordinate-descent sweeps (0 for OLS).
    pub iterations: usize,
    /// False when LASSO stopped at `max_iter`.
    pub converged: bool,
    /// Objective after each coordinate-descent sweep.
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitDiagnostics {
    fn new(method: FitMethod) -> Self {
        FitDiagnostics { method, iterations: 0, converged: true, objective_trace: Vec::new(), warnings: Vec::new() }
    }
}

/// Fitted intercept and weights aligned with the design-matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub intercept: f64,
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    /// Column scaling used while fitting; empty for coefficients loaded from disk.
    pub standardization: Vec<ColumnScale>,
    pub diagnostics: FitDiagnostics,
}

impl Coefficients {
    /// `intercept + sum_j w_j x_j`, summed in column order.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (w, v) in self.weights.iter().zip(x) {
            acc += w * v;
        }
        acc
    }

    pub fn predict(&self, dm: &DesignMatrix) -> Vec<f64> {
        (0..dm.n_rows()).map(|i| self.predict_row(dm.x.row(i))).collect()
    }

    pub fn rss(&self, dm: &DesignMatrix) -> f64 {
        self.predict(dm).iter().zip(&dm.y).map(|(p, y)| (p - y) * (p - y)).sum()
    }

    pub fn n_nonzero(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Standardized, column-major copy of a subset of design-matrix rows.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub n: usize,
    pub columns: Vec<Vec<f64>>,
    pub scales: Vec<ColumnScale>,
    /// Columns with non-zero variance.
    pub active: Vec<bool>,
    pub y_mean: f64,
    pub y_centered: Vec<f64>,
}

impl Standardized {
    pub fn from_rows(dm: &DesignMatrix, rows: &[usize]) -> Standardized {
        let n = rows.len();
        let p = dm.n_cols();
        let nf = n as f64;
        let mut columns = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut active = Vec::with_capacity(p);
        for j in 0..p {
            let raw: Vec<f64> = rows.iter().map(|&i| dm.x.get(i, j)).collect();
            let mean = raw.iter().sum::<f64>() / nf;
            let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
            let std = math::sqrt(var);
            let ok = std > 1e-12 * mean.abs().max(1.0);
            let col = if ok { raw.iter().map(|v| (v - mean) / std).collect() } else { vec![0.0; n] };
            columns.push(col);
            scales.push(ColumnScale { mean, std });
            active.push(ok);
        }
        let y_mean = rows.iter().map(|&i| dm.y[i]).sum::<f64>() / nf;
        let y_centered = rows.iter().map(|&i| dm.y[i] - y_mean).collect();
        Standardized { n, columns, scales, active, y_mean, y_centered }
    }

    pub fn all_rows(dm: &DesignMatrix) -> Standardized {
        let rows: Vec<usize> = (0..dm.n_rows()).collect();
        Self::from_rows(dm, &rows)
    }

    /// `X_j^T v / n` on the standardized scale.
    #[inline]
    pub fn corr(&self, j: usize, v: &[f64]) -> f64 {
        dot(&self.columns[j], v) / self.n as f64
    }

    /// Smallest penalty giving an all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        (0..self.columns.len())
            .filter(|&j| self.active[j])
            .map(|j| self.corr(j, &self.y_centered).abs())
            .fold(0.0, f64::max)
    }

    /// Gram matrix `X^T X / n` and correlations `X^T y / n` of the active columns.
    pub fn gram(&self) -> Gram {
        let p = self.columns.len();
        let mut g = vec![0.0; p * p];
        for j in 0..p {
            if !self.active[j] {
                continue;
            }
            for k in j..p {
                if self.active[k] {
                    let v = self.corr(j, &self.columns[k]);
                    g[j * p + k] = v;
                    g[k * p + j] = v;
                }
            }
        }
        let c = (0..p).map(|j| if self.active[j] { self.corr(j, &self.y_centered) } else { 0.0 }).collect();
        let yy = dot(&self.y_centered, &self.y_centered) / self.n as f64;
        Gram { p, g, c, yy }
    }

    /// Maps standardized weights back to the original column scales.
    fn destandardize(&self, beta: &[f64], names: Vec<String>, diagnostics: FitDiagnostics) -> Coefficients {
        let weights: Vec<f64> = beta
            .iter()
            .zip(&self.scales)
            .zip(&self.active)
            .map(|((b, s), ok)| if *ok && *b != 0.0 { b / s.std } else { 0.0 })
            .collect();
        let mut intercept = self.y_mean;
        for (w, s) in weights.iter().zip(&self.scales) {
            if *w != 0.0 {
                intercept -= w * s.mean;
            }
        }
        Coefficients { intercept, names, weights, standardization: self.scales.clone(), diagnostics }
    }

    fn zero_variance_warnings(&self, names: &[String]) -> Vec<String> {
        names
            .iter()
            .zip(&self.active)
            .filter(|(_, ok)| !**ok)
            .map(|(n, _)| format!("column {n} has zero variance; weight fixed at 0"))
            .collect()
    }
}

/// Ordinary least squares through a column-pivoted QR decomposition.
pub fn ols_fit(dm: &DesignMatrix) -> Result<Coefficients> {
    if dm.n_rows() < dm.n_cols() + 1 {
        return Err(Error::InsufficientData(format!(
            "{} rows for {} columns; use LASSO for under-determined problems",
            dm.n_rows(),
            dm.n_cols()
        )));
    }
    let st = Standardized::all_rows(dm);
    let names = dm.column_names();
    let mut diag = FitDiagnostics::new(FitMethod::Ols);
    diag.warnings = st.zero_variance_warnings(&names);
    let idx: Vec<usize> = (0..dm.n_cols()).filter(|&j| st.active[j]).collect();
    let cols: Vec<Vec<f64>> = idx.iter().map(|&j| st.columns[j].clone()).collect();
    let sol = lstsq(&cols, &st.y_centered, 1e-10);
    let mut beta = vec![0.0; dm.n_cols()];
    for (k, &j) in idx.iter().enumerate() {
        beta[j] = sol.coefficients[k];
    }
    for &k in &sol.dropped {
        diag.warnings.push(format!("column {} is collinear with others; weight fixed at 0", names[idx[k]]));
    }
    Ok(st.destandardize(&beta, names, diag))
}

/// Sufficient statistics for coordinate descent on standardized data.
#[derive(Debug, Clone)]
pub struct Gram {
    p: usize,
    g: Vec<f64>,
    c: Vec<f64>,
    yy: f64,
}

/// Outcome of one coordinate-descent solve.
struct CdOutcome {
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Cyclic coordinate descent from the warm start in `beta`.
///
/// Works on `X^T r / n`, kept up to date through the Gram matrix. Alternates
/// full sweeps with sweeps over the current support and stops once a full
/// sweep changes no coefficient by `tol` or more.
fn coordinate_descent(st: &Standardized, gram: &Gram, lambda: f64, cfg: &LassoConfig, beta: &mut [f64]) -> CdOutcome {
    let p = gram.p;
    let mut grad: Vec<f64> = (0..p)
        .map(|j| gram.c[j] - (0..p).map(|k| gram.g[j * p + k] * beta[k]).sum::<f64>())
        .collect();
    // (1/2n)|r|^2 = yy/2 - b.c + b.G.b/2 = yy/2 - b.(c + grad)/2
    let objective = |beta: &[f64], grad: &[f64]| -> f64 {
        let mut q = 0.0;
        let mut l1 = 0.0;
        for j in 0..p {
            q += beta[j] * (gram.c[j] + grad[j]);
            l1 += beta[j].abs();
        }
        0.5 * (gram.yy - q) + lambda * l1
    };
    let sweep = |beta: &mut [f64], grad: &mut [f64], support_only: bool| -> f64 {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if !st.active[j] || (support_only && beta[j] == 0.0) {
                continue;
            }
            let old = beta[j];
            let new = soft_threshold(old + grad[j], lambda);
            let d = new - old;
            if d != 0.0 {
                let row = &gram.g[j * p..(j + 1) * p];
                for (gk, gjk) in grad.iter_mut().zip(row) {
                    *gk -= gjk * d;
                }
                beta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        max_change
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let change = sweep(beta, &mut grad, false);
        iterations += 1;
        trace.push(objective(beta, &grad));
        if change < cfg.tol {
            return CdOutcome { iterations, converged: true, trace };
        }
        while iterations < cfg.max_iter {
            let change = sweep(beta, &mut grad, true);
            iterations += 1;
            trace.push(objective(beta, &grad));
            if change < cfg.tol {
                break;
            }
        }
    }
    CdOutcome { iterations, converged: false, trace }
}

fn lasso_on(st: &Standardized, gram: &Gram, names: Vec<String>, cfg: &LassoConfig, beta: &mut [f64]) -> Coefficients {
    let out = coordinate_descent(st, gram, cfg.lambda, cfg, beta);
    let mut diag = FitDiagnostics::new(FitMethod::Lasso { lambda: cfg.lambda });
    diag.iterations = out.iterations;
    diag.converged = out.converged;
    diag.objective_trace = out.trace;
    diag.warnings = st.zero_variance_warnings(&names);
    if !out.converged {
        diag.warnings.push(format!("coordinate descent hit max_iter = {} before converging", cfg.max_iter));
    }
    st.destandardize(beta, names, diag)
}

/// LASSO by cyclic coordinate descent on standardized columns.
pub fn lasso_fit(dm: &DesignMatrix, cfg: &LassoConfig) -> Result<Coefficients> {
    cfg.validate()?;
    if dm.n_rows() < 2 {
        return Err(Error::InsufficientData("LASSO needs at least 2 rows".into()));
    }
    let st = Standardized::all_rows(dm);
    let mut beta = vec![0.0; dm.n_cols()];
    Ok(lasso_on(&st, &st.gram(), dm.column_names(), cfg, &mut beta))
}

fn geometric_path(lambda_max: f64, cfg: &LassoConfig) -> Vec<f64> {
    let l = cfg.path_length;
    if l == 1 {
        return vec![lambda_max];
    }
    (0..l)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                lambda_max * math::powf(cfg.path_ratio, k as f64 / (l - 1) as f64)
            }
        })
        .collect()
}

/// Geometric sequence from `lambda_max` down to `path_ratio * lambda_max`.
pub fn lambda_path(dm: &DesignMatrix, cfg: &LassoConfig) -> Vec<f64> {
    geometric_path(Standardized::all_rows(dm).lambda_max(), cfg)
}

/// Minimum rows for a chronological hold-out.
pub const MIN_SELECTION_ROWS: usize = 100;

#[derive(Debug, Clone)]
pub struct LambdaSelection {
    /// Refit on all rows at the chosen penalty.
    pub coefficients: Coefficients,
    pub lambda: f64,
    /// `(lambda, validation RMSE)` along the training path; empty on fallback.
    pub path: Vec<(f64, f64)>,
}

/// Picks `lambda` on a chronological 80/20 hold-out (ties go to the larger
/// penalty) and refits on every row.
pub fn select_lambda(dm: &DesignMatrix, cfg: &LassoConfig) -> Result<LambdaSelection> {
    cfg.validate()?;
    let n = dm.n_rows();
    let names = dm.column_names();
    if n < MIN_SELECTION_ROWS {
        let st = Standardized::all_rows(dm);
        if n < 2 {
            return Err(Error::InsufficientData("LASSO needs at least 2 rows".into()));
        }
        let lambda = 0.01 * st.lambda_max();
        let mut beta = vec![0.0; dm.n_cols()];
        let mut coefficients = lasso_on(&st, &st.gram(), names, &cfg.with_lambda(lambda), &mut beta);
        coefficients
            .diagnostics
            .warnings
            .push(format!("only {n} rows; lambda fixed at 0.01 * lambda_max without validation"));
        return Ok(LambdaSelection { coefficients, lambda, path: Vec::new() });
    }

    let n_train = n * 4 / 5;
    let train: Vec<usize> = (0..n_train).collect();
    let st = Standardized::from_rows(dm, &train);
    let gram = st.gram();
    let path = geometric_path(st.lambda_max(), cfg);
    let mut beta = vec![0.0; dm.n_cols()];
    let mut scores = Vec::with_capacity(path.len());
    for &lambda in &path {
        let coef = lasso_on(&st, &gram, names.clone(), &cfg.with_lambda(lambda), &mut beta);
        let mut sse = 0.0;
        for i in n_train..n {
            let e = coef.predict_row(dm.x.row(i)) - dm.y[i];
            sse += e * e;
        }
        scores.push((lambda, math::sqrt(sse / (n - n_train) as f64)));
    }
    let best = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let tie = best * (1.0 + 1e-9) + 1e-12;
    // The path runs from large to small lambda, so the first tie is the sparsest.
    let lambda = scores.iter().find(|s| s.1 <= tie).map(|s| s.0).unwrap_or(0.0);

    let full = Standardized::all_rows(dm);
    let mut beta = vec![0.0; dm.n_cols()];
    let coefficients = lasso_on(&full, &full.gram(), names, &cfg.with_lambda(lambda), &mut beta);
    Ok(LambdaSelection { coefficients, lambda, path: scores })
}
