//! Sum-coded designs, REML mixed models with by-item intercepts,
//! within-item confidence intervals, logistic models and OLS.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::alignment::SurprisalTable;
use crate::experiment::{AnalysisKind, AnalysisSpec, ConditionKey, Experiment};

pub const RESULTS_HEADER: &str = "analysis,term,estimate_bits,se,stat,df,p,sigma_item,sigma_resid,method,flags";

/// Absolute coefficient size beyond which a logistic fit is treated as separated.
pub const SEPARATION_THRESHOLD: f64 = 15.0;

pub const LOG_LAMBDA_BOUNDS: (f64, f64) = (-20.0, 20.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("analysis {analysis}: factor {factor} has {levels} levels; sum coding needs exactly 2")]
    NotTwoLevel { analysis: String, factor: String, levels: usize },
    #[error("analysis {analysis}: {message}")]
    Incomplete { analysis: String, message: String },
    #[error("analysis {0}: difference profiles are not fit as regressions")]
    NotARegression(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("{observations} observations cannot support {parameters} parameters")]
    TooFewObservations { observations: usize, parameters: usize },
    #[error("need at least {needed} groups, found {found}")]
    TooFewGroups { needed: usize, found: usize },
    #[error("unbalanced table: {0}")]
    Unbalanced(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no observations")]
    NoData,
}

/// Response, fixed-effects matrix and item grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
    /// Group index per row, dense from 0.
    pub groups: Vec<usize>,
    /// Item id for each group index.
    pub group_ids: Vec<u32>,
    /// Canonical condition of each row.
    pub conditions: Vec<String>,
}

impl DesignMatrix {
    pub fn n_groups(&self) -> usize {
        self.group_ids.len()
    }
}

/// +1 for the first declared level, -1 for the second.
pub fn sum_code(levels: &[String], level: &str) -> f64 {
    if levels.first().map(String::as_str) == Some(level) {
        1.0
    } else {
        -1.0
    }
}

fn two_level<'a>(exp: &'a Experiment, analysis: &str, factor: &str) -> Result<&'a [String], StatsError> {
    let f = exp.factor(factor).ok_or_else(|| StatsError::Incomplete {
        analysis: analysis.to_string(),
        message: format!("unknown factor {factor}"),
    })?;
    if f.levels.len() != 2 {
        return Err(StatsError::NotTwoLevel {
            analysis: analysis.to_string(),
            factor: factor.to_string(),
            levels: f.levels.len(),
        });
    }
    Ok(&f.levels)
}

/// Per-(item, condition) response: the sum over the analysis's target regions.
pub fn cell_responses(
    table: &SurprisalTable,
    exp: &Experiment,
    analysis: &AnalysisSpec,
    cells: &[ConditionKey],
) -> Result<Vec<(u32, String, f64)>, StatsError> {
    let mut out = Vec::with_capacity(exp.items.len() * cells.len());
    for item in &exp.items {
        for key in cells {
            let cond = key.canonical();
            let y = table.region_total(item.id, &cond, &analysis.regions).ok_or_else(|| StatsError::Incomplete {
                analysis: analysis.name.clone(),
                message: format!("no surprisal for item {} condition {cond} in {:?}", item.id, analysis.regions),
            })?;
            out.push((item.id, cond, y));
        }
    }
    Ok(out)
}

/// Builds the sum-coded design for a regression analysis.
pub fn build_design(table: &SurprisalTable, exp: &Experiment, analysis: &AnalysisSpec) -> Result<DesignMatrix, StatsError> {
    if analysis.regions.is_empty() {
        return Err(StatsError::Incomplete { analysis: analysis.name.clone(), message: "no target regions".into() });
    }
    let all_cells = exp.enumerate_cells();
    let (cells, columns, coder): (Vec<ConditionKey>, Vec<String>, Box<dyn Fn(&ConditionKey) -> Vec<f64>>) =
        match &analysis.kind {
            AnalysisKind::MainEffect { factor } => {
                let levels = two_level(exp, &analysis.name, factor)?.to_vec();
                let f = factor.clone();
                (
                    all_cells,
                    vec!["(Intercept)".into(), factor.clone()],
                    Box::new(move |k| vec![1.0, sum_code(&levels, k.level_of(&f).unwrap_or(""))]),
                )
            }
            AnalysisKind::Interaction { factors: [a, b] } => {
                let la = two_level(exp, &analysis.name, a)?.to_vec();
                let lb = two_level(exp, &analysis.name, b)?.to_vec();
                let (fa, fb) = (a.clone(), b.clone());
                (
                    all_cells,
                    vec!["(Intercept)".into(), a.clone(), b.clone(), format!("{a}:{b}")],
                    Box::new(move |k| {
                        let ca = sum_code(&la, k.level_of(&fa).unwrap_or(""));
                        let cb = sum_code(&lb, k.level_of(&fb).unwrap_or(""));
                        vec![1.0, ca, cb, ca * cb]
                    }),
                )
            }
            AnalysisKind::Contrast { weights } => {
                let w = weights.clone();
                let used = all_cells.into_iter().filter(|k| w.get(&k.canonical()).is_some_and(|v| *v != 0.0)).collect();
                (
                    used,
                    vec!["(Intercept)".into(), "contrast".into()],
                    Box::new(move |k| vec![1.0, w[&k.canonical()]]),
                )
            }
            AnalysisKind::DifferenceProfile { .. } => return Err(StatsError::NotARegression(analysis.name.clone())),
        };

    let responses = cell_responses(table, exp, analysis, &cells)?;
    let n = responses.len();
    let p = columns.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut groups = Vec::with_capacity(n);
    let mut conditions = Vec::with_capacity(n);
    let group_ids: Vec<u32> = exp.items.iter().map(|i| i.id).collect();
    let coded: BTreeMap<String, Vec<f64>> = cells.iter().map(|k| (k.canonical(), coder(k))).collect();
    for (row, (item, cond, value)) in responses.into_iter().enumerate() {
        y[row] = value;
        for (j, v) in coded[&cond].iter().enumerate() {
            x[(row, j)] = *v;
        }
        groups.push(row / cells.len());
        debug_assert_eq!(group_ids[row / cells.len()], item);
        conditions.push(cond);
    }
    Ok(DesignMatrix { y, x, columns, groups, group_ids, conditions })
}

fn check_rank(x: &DMatrix<f64>) -> Result<(), StatsError> {
    let (n, p) = x.shape();
    if n < p {
        return Err(StatsError::TooFewObservations { observations: n, parameters: p });
    }
    let sv = x.clone().singular_values();
    let max = sv.max();
    if p == 0 || !(max > 0.0) || sv.min() <= max * 1e-10 {
        return Err(StatsError::RankDeficient);
    }
    Ok(())
}

/// Two-sided p-value from a t statistic.
pub fn t_p_value(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Two-sided p-value from a z statistic.
pub fn z_p_value(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (2.0 * Normal::standard().sf(z.abs())).min(1.0)
}

/// Student t quantile, polished by Newton steps on the CDF.
pub fn t_quantile(prob: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    let mut q = dist.inverse_cdf(prob);
    for _ in 0..4 {
        let step = (dist.cdf(q) - prob) / statrs::distribution::Continuous::pdf(&dist, q);
        if !step.is_finite() {
            break;
        }
        q -= step;
        if step.abs() <= 1e-16 * q.abs().max(1.0) {
            break;
        }
    }
    q
}

/// Minimises a 1-D function on `[lo, hi]`: a grid with spacing `step`
/// locates the basin, golden-section search refines it to `tol`.
pub fn minimize_scalar(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64, tol: f64) -> f64 {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect();
    let values: Vec<f64> = grid.iter().map(|&v| f(v)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < values[b] || values[b].is_nan() { i } else { b });
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(n)];
    let x = golden_section(&f, a, b, tol);
    if f(x) <= values[best] {
        x
    } else {
        grid[best]
    }
}

pub fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmmFit {
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub df: f64,
    pub p: Vec<f64>,
    pub sigma_item2: f64,
    pub sigma_resid2: f64,
    pub lambda: f64,
    pub log_reml: f64,
    /// Residual variance collapsed to zero; tests are not meaningful.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmmOptions {
    pub log_lambda_bounds: (f64, f64),
    pub tolerance: f64,
}

impl Default for LmmOptions {
    fn default() -> Self {
        LmmOptions { log_lambda_bounds: LOG_LAMBDA_BOUNDS, tolerance: 1e-8 }
    }
}

/// Per-group sufficient statistics split into within-group and group-mean parts.
struct Profiled<'a> {
    design: &'a DesignMatrix,
    within_xx: DMatrix<f64>,
    within_xy: DVector<f64>,
    sums_x: Vec<DVector<f64>>,
    sums_y: Vec<f64>,
    sizes: Vec<f64>,
}

struct ProfiledState {
    beta: DVector<f64>,
    cov_unscaled: DMatrix<f64>,
    rss: f64,
    log_det_v: f64,
    log_det_a: f64,
}

impl<'a> Profiled<'a> {
    fn new(design: &'a DesignMatrix) -> Self {
        let p = design.x.ncols();
        let m = design.n_groups();
        let mut sums_x = vec![DVector::zeros(p); m];
        let mut sums_y = vec![0.0; m];
        let mut sizes = vec![0.0; m];
        for (row, &g) in design.groups.iter().enumerate() {
            sums_x[g] += design.x.row(row).transpose();
            sums_y[g] += design.y[row];
            sizes[g] += 1.0;
        }
        let mut within_xx = DMatrix::zeros(p, p);
        let mut within_xy = DVector::zeros(p);
        for (row, &g) in design.groups.iter().enumerate() {
            let dx = design.x.row(row).transpose() - &sums_x[g] / sizes[g];
            let dy = design.y[row] - sums_y[g] / sizes[g];
            within_xx += &dx * dx.transpose();
            within_xy += &dx * dy;
        }
        Profiled { design, within_xx, within_xy, sums_x, sums_y, sizes }
    }

    fn state(&self, lambda: f64) -> Option<ProfiledState> {
        let mut a = self.within_xx.clone();
        let mut b = self.within_xy.clone();
        let mut log_det_v = 0.0;
        for g in 0..self.sizes.len() {
            let n = self.sizes[g];
            if n == 0.0 {
                continue;
            }
            let w = 1.0 / (1.0 + n * lambda);
            a += &self.sums_x[g] * self.sums_x[g].transpose() * (w / n);
            b += &self.sums_x[g] * (self.sums_y[g] * w / n);
            log_det_v += (n * lambda).ln_1p();
        }
        let chol = a.clone().cholesky()?;
        let beta = chol.solve(&b);
        let log_det_a = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let resid = &self.design.y - &self.design.x * &beta;
        let m = self.sizes.len();
        let mut group_sum = vec![0.0; m];
        for (row, &g) in self.design.groups.iter().enumerate() {
            group_sum[g] += resid[row];
        }
        let mut rss = 0.0;
        for (row, &g) in self.design.groups.iter().enumerate() {
            let d = resid[row] - group_sum[g] / self.sizes[g];
            rss += d * d;
        }
        for g in 0..m {
            if self.sizes[g] > 0.0 {
                let mean = group_sum[g] / self.sizes[g];
                rss += self.sizes[g] * mean * mean / (1.0 + self.sizes[g] * lambda);
            }
        }
        Some(ProfiledState { beta, cov_unscaled: chol.inverse(), rss, log_det_v, log_det_a })
    }

    fn criterion(&self, log_lambda: f64) -> f64 {
        let n = self.design.y.len() as f64;
        let p = self.design.x.ncols() as f64;
        match self.state(log_lambda.exp()) {
            Some(s) => s.log_det_v + s.log_det_a + (n - p) * s.rss.max(f64::MIN_POSITIVE).ln(),
            None => f64::INFINITY,
        }
    }
}

/// Profiled REML over the variance ratio, searched on the log scale.
pub fn fit_lmm_reml(design: &DesignMatrix) -> Result<LmmFit, StatsError> {
    fit_lmm_reml_with(design, &LmmOptions::default())
}

pub fn fit_lmm_reml_with(design: &DesignMatrix, options: &LmmOptions) -> Result<LmmFit, StatsError> {
    let n = design.y.len();
    let p = design.x.ncols();
    let m = design.n_groups();
    if design.x.nrows() != n || design.groups.len() != n {
        return Err(StatsError::Dimension("y, X and groups must have the same number of rows".into()));
    }
    if m < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, found: m });
    }
    check_rank(&design.x)?;
    if n < p + m {
        return Err(StatsError::TooFewObservations { observations: n, parameters: p + m - 1 });
    }
    let df = (n - p - (m - 1)) as f64;
    let mean_y = design.y.mean();
    let var_y = design.y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);

    // Constant response: the intercept carries everything exactly.
    if design.y.iter().all(|v| *v == design.y[0]) {
        if let Some(j) = intercept_column(&design.x) {
            let mut beta = vec![0.0; p];
            beta[j] = design.y[0];
            return Ok(LmmFit {
                columns: design.columns.clone(),
                beta,
                se: vec![0.0; p],
                t: vec![f64::NAN; p],
                df,
                p: vec![f64::NAN; p],
                sigma_item2: 0.0,
                sigma_resid2: 0.0,
                lambda: options.log_lambda_bounds.0.exp(),
                log_reml: f64::INFINITY,
                degenerate: true,
            });
        }
    }

    let prof = Profiled::new(design);
    let (lo, hi) = options.log_lambda_bounds;
    let log_lambda = minimize_scalar(|l| prof.criterion(l), lo, hi, 1.0, options.tolerance);
    let lambda = log_lambda.exp();
    let state = prof.state(lambda).ok_or(StatsError::RankDeficient)?;
    let resid_df = (n - p) as f64;
    let sigma_resid2 = state.rss / resid_df;
    let sigma_item2 = lambda * sigma_resid2;
    let degenerate = sigma_resid2 <= 1e-12 * var_y.max(1.0);
    let mut se = Vec::with_capacity(p);
    let mut t = Vec::with_capacity(p);
    let mut pv = Vec::with_capacity(p);
    for j in 0..p {
        let s = (sigma_resid2 * state.cov_unscaled[(j, j)]).sqrt();
        let tj = state.beta[j] / s;
        se.push(s);
        t.push(tj);
        pv.push(if degenerate { f64::NAN } else { t_p_value(tj, df) });
    }
    let log_reml = -0.5
        * (resid_df * (2.0 * std::f64::consts::PI * sigma_resid2.max(f64::MIN_POSITIVE)).ln()
            + state.log_det_v
            + state.log_det_a
            + resid_df);
    Ok(LmmFit {
        columns: design.columns.clone(),
        beta: state.beta.iter().copied().collect(),
        se,
        t,
        df,
        p: pv,
        sigma_item2,
        sigma_resid2,
        lambda,
        log_reml,
        degenerate,
    })
}

fn intercept_column(x: &DMatrix<f64>) -> Option<usize> {
    (0..x.ncols()).find(|&j| x.column(j).iter().all(|v| *v == 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub df: f64,
    pub rss: f64,
    pub sigma: f64,
}

/// Least squares with classical standard errors.
pub fn fit_ols(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<OlsFit, StatsError> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(StatsError::Dimension(format!("y has {} rows, X has {n}", y.len())));
    }
    check_rank(x)?;
    let xtx = x.transpose() * x;
    let chol = xtx.cholesky().ok_or(StatsError::RankDeficient)?;
    let beta = chol.solve(&(x.transpose() * y));
    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    let df = (n - p) as f64;
    let sigma2 = if df > 0.0 { rss / df } else { f64::NAN };
    let inv = chol.inverse();
    let se: Vec<f64> = (0..p).map(|j| (sigma2 * inv[(j, j)]).sqrt()).collect();
    let t: Vec<f64> = (0..p).map(|j| beta[j] / se[j]).collect();
    let pv = t.iter().map(|&v| if df > 0.0 { t_p_value(v, df) } else { f64::NAN }).collect();
    Ok(OlsFit { beta: beta.iter().copied().collect(), se, t, p: pv, df, rss, sigma: sigma2.sqrt() })
}

/// Within-item intervals for one condition set.
#[derive(Debug, Clone, PartialEq)]
pub struct CiSet {
    pub conditions: Vec<String>,
    pub means: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub ms_interaction: f64,
    pub df: f64,
    pub method: &'static str,
}

/// Masson–Loftus intervals from an items × conditions matrix.
/// Only within-item differences enter the computation, so adding a
/// constant to every cell of an item cannot change the result.
pub fn masson_loftus_ci(conditions: &[String], values: &[Vec<f64>]) -> Result<CiSet, StatsError> {
    let m = values.len();
    let c = conditions.len();
    if m < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, found: m });
    }
    if c < 2 {
        return Err(StatsError::Unbalanced("need at least 2 conditions".into()));
    }
    if let Some((i, row)) = values.iter().enumerate().find(|(_, r)| r.len() != c) {
        return Err(StatsError::Unbalanced(format!("item row {i} has {} values, expected {c}", row.len())));
    }
    let diffs: Vec<Vec<f64>> = values.iter().map(|row| row.iter().map(|v| v - row[0]).collect()).collect();
    let item_means: Vec<f64> = diffs.iter().map(|row| row.iter().sum::<f64>() / c as f64).collect();
    let cond_means: Vec<f64> = (0..c).map(|j| diffs.iter().map(|row| row[j]).sum::<f64>() / m as f64).collect();
    let grand = cond_means.iter().sum::<f64>() / c as f64;
    let mut ss = 0.0;
    for (i, row) in diffs.iter().enumerate() {
        for j in 0..c {
            let e = row[j] - item_means[i] - cond_means[j] + grand;
            ss += e * e;
        }
    }
    let df = ((m - 1) * (c - 1)) as f64;
    let ms = ss / df;
    let half = t_quantile(0.975, df) * (ms / m as f64).sqrt();
    let means = (0..c).map(|j| values.iter().map(|row| row[j]).sum::<f64>() / m as f64).collect();
    Ok(CiSet {
        conditions: conditions.to_vec(),
        means,
        half_widths: vec![half; c],
        ms_interaction: ms,
        df,
        method: "masson-loftus",
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomEffects {
    None,
    Intercept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma_item: f64,
    pub log_likelihood: f64,
    pub separation: bool,
    pub converged: bool,
    pub method: &'static str,
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn bernoulli_loglik(y: &[bool], eta: &[f64]) -> f64 {
    y.iter().zip(eta).map(|(&yi, &e)| if yi { e - log1p_exp(e) } else { -log1p_exp(e) }).sum()
}

struct Penalized {
    beta: DVector<f64>,
    b: DVector<f64>,
    loglik: f64,
    hessian: Option<DMatrix<f64>>,
    converged: bool,
}

/// Joint Newton ascent over (beta, b) of the Bernoulli log-likelihood minus
/// the Gaussian penalty on b. With `sigma == None` there is no b.
fn penalized_newton(y: &[bool], x: &DMatrix<f64>, groups: &[usize], m: usize, sigma: Option<f64>) -> Penalized {
    let (n, p) = x.shape();
    let q = if sigma.is_some() { m } else { 0 };
    let prec = sigma.map(|s| 1.0 / (s * s)).unwrap_or(0.0);
    let mut theta = DVector::<f64>::zeros(p + q);
    let eta_of = |theta: &DVector<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut e = (x.row(i) * theta.rows(0, p))[0];
                if q > 0 {
                    e += theta[p + groups[i]];
                }
                e
            })
            .collect()
    };
    let objective = |theta: &DVector<f64>| -> f64 {
        let pen = if q > 0 { 0.5 * prec * theta.rows(p, q).norm_squared() } else { 0.0 };
        bernoulli_loglik(y, &eta_of(theta)) - pen
    };
    let mut current = objective(&theta);
    let mut converged = false;
    let mut hessian = None;
    for _ in 0..200 {
        let eta = eta_of(&theta);
        let mut grad = DVector::zeros(p + q);
        let mut h = DMatrix::zeros(p + q, p + q);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = mu * (1.0 - mu);
            let r = if y[i] { 1.0 } else { 0.0 } - mu;
            for a in 0..p {
                grad[a] += x[(i, a)] * r;
                for c in 0..p {
                    h[(a, c)] += w * x[(i, a)] * x[(i, c)];
                }
            }
            if q > 0 {
                let g = p + groups[i];
                grad[g] += r;
                h[(g, g)] += w;
                for a in 0..p {
                    h[(a, g)] += w * x[(i, a)];
                    h[(g, a)] += w * x[(i, a)];
                }
            }
        }
        for g in 0..q {
            grad[p + g] -= prec * theta[p + g];
            h[(p + g, p + g)] += prec;
        }
        let Some(chol) = h.clone().cholesky() else {
            break;
        };
        hessian = Some(h);
        let step = chol.solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta + &step * scale;
            let value = objective(&cand);
            if value >= current - 1e-12 * current.abs().max(1.0) {
                theta = cand;
                let gain = value - current;
                current = value;
                accepted = true;
                if gain.abs() < 1e-12 * current.abs().max(1.0) && (step.amax() * scale) < 1e-8 {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted || converged || theta.rows(0, p).amax() > 4.0 * SEPARATION_THRESHOLD {
            converged |= !accepted && step.amax() < 1e-6;
            break;
        }
        if step.amax() * scale < 1e-10 {
            converged = true;
            break;
        }
    }
    let beta = theta.rows(0, p).into_owned();
    let b = theta.rows(p, q).into_owned();
    let loglik = bernoulli_loglik(y, &eta_of(&theta));
    Penalized { beta, b, loglik, hessian, converged }
}

fn check_binary_inputs(y: &[bool], x: &DMatrix<f64>, groups: &[usize]) -> Result<usize, StatsError> {
    if y.is_empty() {
        return Err(StatsError::NoData);
    }
    if x.nrows() != y.len() || groups.len() != y.len() {
        return Err(StatsError::Dimension("responses, X and groups must have the same number of rows".into()));
    }
    check_rank(x)?;
    Ok(groups.iter().copied().max().map_or(0, |g| g + 1))
}

fn finish_logit(pen: &Penalized, p: usize, sigma_item: f64, log_likelihood: f64, method: &'static str) -> LogitFit {
    let cov = pen.hessian.as_ref().and_then(|h| h.clone().try_inverse());
    let se: Vec<f64> = (0..p)
        .map(|j| cov.as_ref().map_or(f64::NAN, |c| c[(j, j)].max(0.0).sqrt()))
        .collect();
    let beta: Vec<f64> = pen.beta.iter().copied().collect();
    let z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let pv = z.iter().map(|&v| z_p_value(v)).collect();
    let separation = beta.iter().any(|b| b.abs() > SEPARATION_THRESHOLD) || cov.is_none() || !pen.converged;
    LogitFit { beta, se, z, p: pv, sigma_item, log_likelihood, separation, converged: pen.converged, method }
}

/// Laplace approximation to the marginal log-likelihood at a fixed sigma.
fn laplace(y: &[bool], x: &DMatrix<f64>, groups: &[usize], m: usize, sigma: f64) -> (Penalized, f64) {
    let pen = penalized_newton(y, x, groups, m, Some(sigma));
    let p = x.ncols();
    let s2 = sigma * sigma;
    let mut info = vec![0.0; m];
    for (i, &g) in groups.iter().enumerate() {
        let eta = (x.row(i) * &pen.beta)[0] + pen.b[g];
        let mu = sigmoid(eta);
        info[g] += mu * (1.0 - mu);
    }
    let penalty: f64 = pen.b.norm_squared() / (2.0 * s2);
    let log_det: f64 = info.iter().map(|w| (s2 * w).ln_1p()).sum();
    let value = pen.loglik - penalty - 0.5 * log_det;
    let _ = p;
    (pen, value)
}

/// Logistic regression at a fixed random-intercept standard deviation;
/// `sigma == 0` is the ordinary fixed-effects fit.
pub fn fit_logit_fixed_sigma(y: &[bool], x: &DMatrix<f64>, groups: &[usize], sigma: f64) -> Result<LogitFit, StatsError> {
    let m = check_binary_inputs(y, x, groups)?;
    if sigma <= 0.0 {
        let pen = penalized_newton(y, x, groups, m, None);
        return Ok(finish_logit(&pen, x.ncols(), 0.0, pen.loglik, "logit_ml"));
    }
    let (pen, value) = laplace(y, x, groups, m, sigma);
    Ok(finish_logit(&pen, x.ncols(), sigma, value, "logit_laplace"))
}

pub fn fit_logit(y: &[bool], x: &DMatrix<f64>, groups: &[usize], random: RandomEffects) -> Result<LogitFit, StatsError> {
    let m = check_binary_inputs(y, x, groups)?;
    match random {
        RandomEffects::None => fit_logit_fixed_sigma(y, x, groups, 0.0),
        RandomEffects::Intercept => {
            if m < 2 {
                return Err(StatsError::TooFewGroups { needed: 2, found: m });
            }
            let plain = fit_logit_fixed_sigma(y, x, groups, 0.0)?;
            if plain.separation {
                return Ok(LogitFit { method: "logit_laplace", ..plain });
            }
            let neg = |ls: f64| -laplace(y, x, groups, m, ls.exp()).1;
            let (lo, hi) = ((1e-3f64).ln(), 20f64.ln());
            let ls = minimize_scalar(neg, lo, hi, 0.25, 1e-6);
            let (pen, value) = laplace(y, x, groups, m, ls.exp());
            if plain.log_likelihood >= value {
                return Ok(LogitFit { method: "logit_laplace", ..plain });
            }
            Ok(finish_logit(&pen, x.ncols(), ls.exp(), value, "logit_laplace"))
        }
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub analysis: String,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub stat: f64,
    pub df: f64,
    pub p: f64,
    pub sigma_item: f64,
    pub sigma_resid: f64,
    pub method: String,
    pub flags: Vec<String>,
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v.is_infinite() {
        if v > 0.0 { "Inf".into() } else { "-Inf".into() }
    } else {
        format!("{v:.6}")
    }
}

fn fmt_p(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.6e}")
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(RESULTS_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        let df = if r.df.fract() == 0.0 && r.df.is_finite() { format!("{}", r.df) } else { fmt_num(r.df) };
        w.write_record([
            r.analysis.clone(),
            r.term.clone(),
            fmt_num(r.estimate),
            fmt_num(r.se),
            fmt_num(r.stat),
            df,
            fmt_p(r.p),
            fmt_num(r.sigma_item),
            fmt_num(r.sigma_resid),
            r.method.clone(),
            r.flags.join(";"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

impl LmmFit {
    pub fn rows(&self, analysis: &str) -> Vec<ResultRow> {
        let mut flags = vec!["df=n-p-(m-1)".to_string()];
        if self.degenerate {
            flags.push("degenerate".into());
        }
        (0..self.beta.len())
            .map(|j| ResultRow {
                analysis: analysis.to_string(),
                term: self.columns[j].clone(),
                estimate: self.beta[j],
                se: self.se[j],
                stat: self.t[j],
                df: self.df,
                p: self.p[j],
                sigma_item: self.sigma_item2.sqrt(),
                sigma_resid: self.sigma_resid2.sqrt(),
                method: "lmm_reml".into(),
                flags: flags.clone(),
            })
            .collect()
    }
}

impl LogitFit {
    pub fn rows(&self, analysis: &str, columns: &[String]) -> Vec<ResultRow> {
        let mut flags = Vec::new();
        if self.method == "logit_laplace" {
            flags.push("random=intercept_only".into());
        }
        if self.separation {
            flags.push("separation".into());
        }
        (0..self.beta.len())
            .map(|j| ResultRow {
                analysis: analysis.to_string(),
                term: columns[j].clone(),
                estimate: self.beta[j],
                se: self.se[j],
                stat: self.z[j],
                df: f64::INFINITY,
                p: self.p[j],
                sigma_item: self.sigma_item,
                sigma_resid: f64::NAN,
                method: self.method.into(),
                flags: flags.clone(),
            })
            .collect()
    }
}

impl OlsFit {
    pub fn rows(&self, analysis: &str, columns: &[String]) -> Vec<ResultRow> {
        (0..self.beta.len())
            .map(|j| ResultRow {
                analysis: analysis.to_string(),
                term: columns[j].clone(),
                estimate: self.beta[j],
                se: self.se[j],
                stat: self.t[j],
                df: self.df,
                p: self.p[j],
                sigma_item: f64::NAN,
                sigma_resid: self.sigma,
                method: "ols".into(),
                flags: Vec::new(),
            })
            .collect()
    }
}

/// Items × conditions matrix of summed surprisal over `regions`.
pub fn item_condition_matrix(
    table: &SurprisalTable,
    exp: &Experiment,
    conditions: &[String],
    regions: &[String],
) -> Result<Vec<Vec<f64>>, StatsError> {
    exp.items
        .iter()
        .map(|item| {
            conditions
                .iter()
                .map(|c| {
                    table.region_total(item.id, c, regions).ok_or_else(|| StatsError::Unbalanced(format!(
                        "item {} lacks condition {c} in {regions:?}",
                        item.id
                    )))
                })
                .collect()
        })
        .collect()
}

/// The conditions an analysis plots: every cell, or the weighted ones for a contrast.
pub fn analysis_conditions(exp: &Experiment, analysis: &AnalysisSpec) -> Vec<String> {
    let cells = exp.enumerate_cells().into_iter().map(|k| k.canonical());
    match &analysis.kind {
        AnalysisKind::Contrast { weights } => cells.filter(|c| weights.get(c).is_some_and(|w| *w != 0.0)).collect(),
        AnalysisKind::DifferenceProfile { pair } => vec![pair.0.clone(), pair.1.clone()],
        _ => cells.collect(),
    }
}

/// Markdown table of a result set.
pub fn results_markdown(rows: &[ResultRow]) -> String {
    let mut out = String::from("| term | estimate | SE | stat | df | p | flags |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.term,
            fmt_num(r.estimate),
            fmt_num(r.se),
            fmt_num(r.stat),
            fmt_num(r.df),
            fmt_p(r.p),
            r.flags.join("; ")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_quantile_matches_closed_form_at_two_df() {
        // For df = 2, t_p = (2p - 1) / sqrt(2 p (1 - p)).
        let exact = (2.0 * 0.975 - 1.0) / (2.0f64 * 0.975 * 0.025).sqrt();
        assert!((t_quantile(0.975, 2.0) - exact).abs() < 1e-12, "{}", t_quantile(0.975, 2.0));
        assert!((t_quantile(0.975, 2.0) - 4.302652729749464).abs() < 1e-12);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![0.0, 2.0, 4.0, 6.0]);
        let fit = fit_ols(&y, &x).unwrap();
        assert!(fit.beta[0].abs() < 1e-12 && (fit.beta[1] - 2.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn ols_rejects_collinear_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(fit_ols(&y, &x), Err(StatsError::RankDeficient));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = minimize_scalar(|v| (v - 1.234).powi(2), -20.0, 20.0, 1.0, 1e-10);
        assert!((x - 1.234).abs() < 1e-8);
        let edge = minimize_scalar(|v| v, -20.0, 20.0, 1.0, 1e-10);
        assert!((edge + 20.0).abs() < 1e-8);
    }

    #[test]
    fn masson_loftus_zero_when_items_are_parallel() {
        let conds = vec!["a".to_string(), "b".to_string()];
        let ci = masson_loftus_ci(&conds, &[vec![1.0, 3.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(ci.ms_interaction, 0.0);
        assert_eq!(ci.half_widths, vec![0.0, 0.0]);
        assert_eq!(ci.means, vec![1.5, 3.5]);
    }

    #[test]
    fn masson_loftus_rejects_ragged_rows() {
        let conds = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(masson_loftus_ci(&conds, &[vec![1.0, 3.0], vec![2.0]]), Err(StatsError::Unbalanced(_))));
    }

    #[test]
    fn logit_flags_all_success() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let y = vec![true; 10];
        let groups: Vec<usize> = (0..10).map(|i| i % 2).collect();
        assert!(fit_logit(&y, &x, &groups, RandomEffects::None).unwrap().separation);
        assert!(fit_logit(&y, &x, &groups, RandomEffects::Intercept).unwrap().separation);
    }

    #[test]
    fn logit_intercept_only_matches_log_odds() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let y: Vec<bool> = (0..10).map(|i| i < 7).collect();
        let groups = vec![0; 10];
        let fit = fit_logit(&y, &x, &groups, RandomEffects::None).unwrap();
        assert!((fit.beta[0] - (7.0f64 / 3.0).ln()).abs() < 1e-9);
        // Var of the log-odds MLE is 1/(n p (1-p)).
        assert!((fit.se[0] - (1.0f64 / (10.0 * 0.7 * 0.3)).sqrt()).abs() < 1e-9);
        assert!(!fit.separation);
    }

    #[test]
    fn results_csv_layout() {
        let rows = vec![ResultRow {
            analysis: "a".into(),
            term: "x".into(),
            estimate: 1.25,
            se: 0.5,
            stat: 2.5,
            df: 30.0,
            p: 0.018,
            sigma_item: f64::NAN,
            sigma_resid: 1.0,
            method: "ols".into(),
            flags: vec![],
        }];
        let csv = results_csv(&rows);
        assert_eq!(csv, format!("{RESULTS_HEADER}\na,x,1.250000,0.500000,2.500000,30,1.800000e-2,NA,1.000000,ols,\n"));
    }
}
