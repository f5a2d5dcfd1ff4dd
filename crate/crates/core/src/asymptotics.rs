//! Seeded Monte Carlo experiments: remainder scaling of the linear
//! expansion, normality against the sandwich covariance, convergence of
//! influence curves in the smoothing index and one-step versus full-solve
//! gaps.
//!
//! Every experiment is a pure function of its [`MCConfig`]. Replication `r`
//! at sample size `n` draws its data with [`mix_seed`]`(master_seed, n, r)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::io::format_f64;
use crate::linearization::{influence_curve, one_step, JacobianSolver};
use crate::model::{generate_linear_data, parameter_box, Dataset, LinearModelSpec};
use crate::penalties::Penalty;
use crate::scores::ZSystem;
use crate::solvers::{adaptive_lasso, elastic_net, lasso_cd, ols, ridge_init, smooth_fit, NewtonOptions, SolverOptions};

/// `c·√(ln p / n)`.
pub fn lambda_schedule(n: usize, p: usize, c: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("lambda schedule needs p >= 2, got {p}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("lambda schedule needs n >= 2, got {n}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("schedule constant must be positive, got {c}")));
    }
    Ok(c * ((p as f64).ln() / n as f64).sqrt())
}

/// SplitMix64 finalizer, a bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Replication seed `splitmix64(master ^ splitmix64((n << 32) | rep))`.
///
/// Injective in `(n, rep)` for `n, rep < 2³²` at a fixed master seed,
/// since both maps are bijections and the packing is one-to-one.
pub fn mix_seed(master: u64, n: usize, rep: usize) -> u64 {
    let packed = ((n as u64) << 32) | (rep as u64 & 0xFFFF_FFFF);
    splitmix64(master ^ splitmix64(packed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Ols,
    Ridge,
    Lasso,
    ElasticNet,
    Adaptive,
    OneStep,
    /// `θ₀ + mean ψ`: zero remainder by construction.
    ExactLinear,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::Ridge => "ridge",
            Estimator::Lasso => "lasso",
            Estimator::ElasticNet => "en",
            Estimator::Adaptive => "adaptive",
            Estimator::OneStep => "onestep",
            Estimator::ExactLinear => "exact-linear",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ols" => Estimator::Ols,
            "ridge" => Estimator::Ridge,
            "lasso" => Estimator::Lasso,
            "en" | "elastic-net" => Estimator::ElasticNet,
            "adaptive" => Estimator::Adaptive,
            "onestep" => Estimator::OneStep,
            "exact-linear" => Estimator::ExactLinear,
            other => return Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        })
    }
}

/// Penalty level as a function of the sample size. For `ridge` and the
/// one-step ridge initializer this is `λ₂`; otherwise it is the ℓ1 level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LambdaRule {
    Fixed(f64),
    Schedule { c: f64 },
}

impl LambdaRule {
    pub fn value(&self, n: usize, p: usize) -> Result<f64> {
        match *self {
            LambdaRule::Fixed(v) if v >= 0.0 && v.is_finite() => Ok(v),
            LambdaRule::Fixed(v) => Err(Error::InvalidArgument(format!("lambda must be >= 0, got {v}"))),
            LambdaRule::Schedule { c } => lambda_schedule(n, p, c),
        }
    }
}

/// Smoothing index as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MRule {
    Fixed(u32),
    /// `m_n = ⌈√n⌉`.
    SqrtN,
}

impl MRule {
    pub fn value(&self, n: usize) -> u32 {
        match *self {
            MRule::Fixed(m) => m,
            MRule::SqrtN => (n as f64).sqrt().ceil() as u32,
        }
    }
}

/// Where the influence curve of the remainder experiment is expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PsiReference {
    /// Population Jacobian at the true θ₀.
    TrueTheta,
    /// Empirical Jacobian at the fitted θ̂ (feasible variant).
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OneStepPenalty {
    SmoothL1,
    Ridge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCConfig {
    pub spec: LinearModelSpec<f64>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub estimator: Estimator,
    pub lambda: LambdaRule,
    /// Ridge part of the elastic net.
    pub lambda2: f64,
    pub m: MRule,
    pub master_seed: u64,
    pub psi_reference: PsiReference,
    pub onestep_penalty: OneStepPenalty,
    pub solver: SolverOptions<f64>,
    pub newton: NewtonOptions<f64>,
    /// Worker cap; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl MCConfig {
    pub fn new(spec: LinearModelSpec<f64>, n_grid: Vec<usize>, reps: usize, estimator: Estimator) -> Self {
        Self {
            spec,
            n_grid,
            reps,
            estimator,
            lambda: LambdaRule::Schedule { c: 1.0 },
            lambda2: 0.0,
            m: MRule::Fixed(64),
            master_seed: 1,
            psi_reference: PsiReference::TrueTheta,
            onestep_penalty: OneStepPenalty::SmoothL1,
            solver: SolverOptions::default(),
            newton: NewtonOptions::default(),
            threads: None,
        }
    }

    fn validate(&self, min_points: usize, min_reps: usize) -> Result<()> {
        if self.n_grid.len() < min_points {
            return Err(Error::InvalidArgument(format!(
                "n_grid needs at least {min_points} sample sizes, got {}",
                self.n_grid.len()
            )));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("n_grid must be strictly ascending".into()));
        }
        if self.n_grid[0] < 2 {
            return Err(Error::InvalidArgument("sample sizes must be >= 2".into()));
        }
        if self.reps < min_reps {
            return Err(Error::InvalidArgument(format!("need at least {min_reps} replications, got {}", self.reps)));
        }
        if !(self.lambda2 >= 0.0) {
            return Err(Error::InvalidArgument("lambda2 must be >= 0".into()));
        }
        if let MRule::Fixed(0) = self.m {
            return Err(Error::InvalidArgument("m must be >= 1".into()));
        }
        Ok(())
    }

    fn default_weights(&self) -> DVector<f64> {
        let mut w = DVector::from_element(self.spec.p(), 1.0);
        if self.spec.intercept() {
            w[0] = 0.0;
        }
        w
    }

    /// Smooth penalty whose Jacobian enters the population influence curve
    /// of the configured estimator at sample size `n`.
    pub fn smooth_penalty(&self, n: usize) -> Result<Penalty<f64>> {
        let lambda = self.lambda_at(n)?;
        let m = self.m.value(n);
        let w = self.default_weights();
        Ok(match self.estimator {
            Estimator::Ols | Estimator::ExactLinear | Estimator::Adaptive => Penalty::none(),
            Estimator::Ridge => Penalty::ridge(lambda).with_weights(w),
            Estimator::Lasso => Penalty::l1(lambda).smooth_approx(m)?.with_weights(w),
            Estimator::ElasticNet => Penalty::elastic_net(lambda, self.lambda2).smooth_approx(m)?.with_weights(w),
            Estimator::OneStep => match self.onestep_penalty {
                OneStepPenalty::SmoothL1 => Penalty::l1(lambda).smooth_approx(m)?.with_weights(w),
                OneStepPenalty::Ridge => Penalty::ridge(lambda).with_weights(w),
            },
        })
    }

    /// Penalty level at `n`; 0 for estimators that take none.
    pub fn lambda_at(&self, n: usize) -> Result<f64> {
        match self.estimator {
            Estimator::Ols | Estimator::ExactLinear => Ok(0.0),
            _ => self.lambda.value(n, self.spec.p()),
        }
    }

    fn pool(&self) -> Result<Option<rayon::ThreadPool>> {
        match self.threads {
            None => Ok(None),
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map(Some)
                .map_err(|e| Error::InvalidArgument(e.to_string())),
        }
    }
}

/// Coordinates of the population influence curve: the support of θ₀ for
/// the adaptive Lasso (oracle partial curve), everything otherwise.
fn psi_support(config: &MCConfig) -> Vec<usize> {
    let theta0 = config.spec.theta0();
    match config.estimator {
        Estimator::Adaptive => (0..theta0.len())
            .filter(|&j| theta0[j] != 0.0 || (config.spec.intercept() && j == 0))
            .collect(),
        _ => (0..theta0.len()).collect(),
    }
}

/// Population Jacobian `2 E[x xᵀ] + ∇²J(θ₀)` of the regularized Z-function.
pub fn population_jacobian(spec: &LinearModelSpec<f64>, penalty: &Penalty<f64>) -> Result<DMatrix<f64>> {
    jacobian_at(spec, penalty, spec.theta0())
}

fn jacobian_at(spec: &LinearModelSpec<f64>, penalty: &Penalty<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mut jac = spec.second_moment() * 2.0;
    let h = population_hessian(penalty, theta)?;
    for j in 0..h.len() {
        jac[(j, j)] += h[j];
    }
    Ok(jac)
}

fn population_hessian(penalty: &Penalty<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
    if penalty.is_smooth() {
        penalty.hessian_diagonal(theta)
    } else {
        // exact ℓ1 parts contribute nothing away from 0
        let ridge = Penalty::ridge(penalty.lambda2()).with_weights(penalty.weights_or_ones(theta.len())?);
        ridge.hessian_diagonal(theta)
    }
}

/// Root `θ*` of the population Z-function `2 E[x xᵀ](θ − θ₀) + ∇J(θ) = 0`,
/// the point a fixed-penalty estimator concentrates around. Damped Newton
/// from θ₀. Exact ℓ1 penalties are not differentiable, so θ₀ is returned.
pub fn population_root(spec: &LinearModelSpec<f64>, penalty: &Penalty<f64>) -> Result<DVector<f64>> {
    let theta0 = spec.theta0();
    if penalty.is_zero() || !penalty.is_smooth() {
        return Ok(theta0.clone());
    }
    let second = spec.second_moment();
    let residual = |t: &DVector<f64>| -> Result<DVector<f64>> { Ok(&second * (t - theta0) * 2.0 + penalty.gradient(t)?) };
    let mut theta = theta0.clone();
    let mut r = residual(&theta)?;
    for _ in 0..200 {
        if r.amax() <= 1e-14 * (1.0 + theta.amax()) {
            return Ok(theta);
        }
        let step = JacobianSolver::new(&jacobian_at(spec, penalty, &theta)?)?.solve_vec(&r)?;
        let mut scale = 1.0;
        loop {
            let cand = &theta - &step * scale;
            let rc = residual(&cand)?;
            if rc.norm() < r.norm() || scale < 1e-10 {
                theta = cand;
                r = rc;
                break;
            }
            scale /= 2.0;
        }
    }
    Err(Error::NoConvergence("population root: 200 damped Newton steps".into()))
}

/// Closed-form sandwich `A C Aᵀ` for the Gaussian linear model, evaluated
/// at the population root θ* ([`population_root`]):
/// `A = (2 E[xxᵀ] + ∇²J(θ*))⁻¹` and `C = Cov φ_{θ*}` with
/// `φ = 2x(xᵀ(θ* − θ₀) − ε)`. Gaussian fourth moments give
/// `C/4 = σ² E[xxᵀ] + E[xxᵀ (xᵀd)²] − E[x xᵀd] E[x xᵀd]ᵀ`, `d = θ* − θ₀`.
/// When θ* = θ₀ this is `4σ² E[xxᵀ]`.
pub fn sandwich_covariance(spec: &LinearModelSpec<f64>, penalty: &Penalty<f64>) -> Result<DMatrix<f64>> {
    let root = population_root(spec, penalty)?;
    let jac = jacobian_at(spec, penalty, &root)?;
    let second = spec.second_moment();
    let p = spec.p();
    // x = μ + z with z ~ N(0, S); μ is the intercept indicator
    let mut mu = DVector::zeros(p);
    if spec.intercept() {
        mu[0] = 1.0;
    }
    let s = &second - &mu * mu.transpose();
    let d = &root - spec.theta0();
    let (c, u) = (mu.dot(&d), &s * &d);
    let q = d.dot(&u);
    let fourth = &mu * mu.transpose() * (c * c + q)
        + (&mu * u.transpose() + &u * mu.transpose()) * (2.0 * c)
        + &s * (c * c + q)
        + &u * u.transpose() * 2.0;
    let mean = &mu * c + &u;
    let cov = (&second * (spec.sigma() * spec.sigma()) + fourth - &mean * mean.transpose()) * 4.0;
    let a = JacobianSolver::new(&jac)?.solve(&DMatrix::identity(p, p))?;
    Ok(&a * cov * a.transpose())
}

/// Large-sample plug-in of the sandwich from `draws` simulated observations,
/// with the empirical Jacobian and empirical score covariance at the
/// population root.
pub fn plugin_sandwich(spec: &LinearModelSpec<f64>, penalty: &Penalty<f64>, draws: usize, seed: u64) -> Result<DMatrix<f64>> {
    let root = population_root(spec, penalty)?;
    let data = generate_linear_data(spec, draws, seed)?;
    let zs = ZSystem::new(&data, penalty);
    let jac = zs.z_jacobian(&root)?;
    let scores = zs.scores(&root)?;
    let k = draws as f64;
    let mean = scores.column_sum() / k;
    let c = &scores * scores.transpose() / k - &mean * mean.transpose();
    let a = JacobianSolver::new(&jac)?.solve(&DMatrix::identity(jac.nrows(), jac.ncols()))?;
    Ok(&a * c * a.transpose())
}

/// One replication of any experiment. Serialized to the per-rep CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub lambda: f64,
    pub m: u32,
    /// ‖R_n‖₂ for remainder runs; the one-step/full-solve gap for one-step runs.
    pub remainder_norm: f64,
    pub theta_err_norm: f64,
    pub fit_converged: bool,
    pub failed: bool,
    /// One-step iterate strictly inside the parameter box.
    pub interior: Option<bool>,
    /// `√n (θ̂ − θ₀)`.
    pub scaled_error: Vec<f64>,
}

impl RepRecord {
    pub const CSV_HEADER: &'static str = "n,rep,seed,estimator,lambda,m,remainder_norm,theta_err_norm,fit_converged";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.rep,
            self.seed,
            self.estimator,
            format_f64(self.lambda),
            self.m,
            format_f64(self.remainder_norm),
            format_f64(self.theta_err_norm),
            self.fit_converged
        )
    }

    fn failure(n: usize, rep: usize, seed: u64, estimator: Estimator, lambda: f64, m: u32) -> Self {
        Self {
            n,
            rep,
            seed,
            estimator,
            lambda,
            m,
            remainder_norm: f64::NAN,
            theta_err_norm: f64::NAN,
            fit_converged: false,
            failed: true,
            interior: None,
            scaled_error: Vec::new(),
        }
    }
}

/// Per-rep CSV with header [`RepRecord::CSV_HEADER`].
pub fn records_to_csv(records: &[RepRecord]) -> String {
    let mut out = String::from(RepRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerNSummary {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub successes: usize,
    pub failures: usize,
}

/// OLS fit of `ln(mean) = a + slope·ln n` with a 95% t-interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceComparison {
    pub n: usize,
    pub empirical: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
    pub frobenius_rel_error: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Remainder,
    Normality,
    OneStep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCReport {
    pub experiment: ExperimentKind,
    pub estimator: Estimator,
    pub per_n: Vec<PerNSummary>,
    pub slope: Option<SlopeFit>,
    pub covariance: Option<CovarianceComparison>,
    pub failures: usize,
    pub total_reps: usize,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

impl MCReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Re-derives summaries and verdicts from the raw replication records and
    /// the stored covariance reference.
    pub fn audit(&self) -> Result<MCReport> {
        let reference = self.covariance.as_ref().map(|c| (c.n, mat_from_rows(&c.reference)));
        summarize(self.experiment, self.estimator, self.records.clone(), reference)
    }
}

fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn mat_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, p, |i, j| rows[i][j])
}

/// Per-n means below this are treated as exactly zero (the full-solver tolerance).
pub const EXACT_FLOOR: f64 = 1e-10;
/// Required upper bound on the CI-adjusted log-log slope.
pub const SLOPE_THRESHOLD: f64 = -0.5;
/// Frobenius relative error allowed between sample covariance and sandwich.
pub const NORMALITY_THRESHOLD: f64 = 0.15;
/// Largest tolerated fraction of failed replications.
pub const FAILURE_BUDGET: f64 = 0.05;

/// Least-squares slope of `ys` on `xs` with a two-sided 95% t half-width.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let k = xs.len();
    if k < 3 || ys.len() != k {
        return None;
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (sse / (kf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, kf - 2.0).ok()?.inverse_cdf(0.975);
    Some(SlopeFit { slope, intercept, half_width: t * se, points: k })
}

fn per_n_summaries(records: &[RepRecord]) -> Vec<PerNSummary> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let rows: Vec<&RepRecord> = records.iter().filter(|r| r.n == n).collect();
            let ok: Vec<f64> = rows.iter().filter(|r| !r.failed).map(|r| r.remainder_norm).collect();
            let k = ok.len();
            let mean = if k == 0 { f64::NAN } else { ok.iter().sum::<f64>() / k as f64 };
            let se = if k > 1 {
                (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt() / (k as f64).sqrt()
            } else {
                0.0
            };
            PerNSummary { n, mean, se, successes: k, failures: rows.len() - k }
        })
        .collect()
}

fn slope_verdict(name: &str, per_n: &[PerNSummary]) -> (Option<SlopeFit>, Verdict) {
    if per_n.iter().all(|s| s.mean.is_finite() && s.mean <= EXACT_FLOOR) {
        let detail = format!("all per-n means <= {EXACT_FLOOR:e}");
        return (None, Verdict { name: name.into(), passed: true, detail });
    }
    let pts: Vec<(f64, f64)> = per_n
        .iter()
        .filter(|s| s.mean.is_finite() && s.mean > 0.0)
        .map(|s| ((s.n as f64).ln(), s.mean.ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    match fit_slope(&xs, &ys) {
        Some(fit) => {
            let bound = fit.slope + fit.half_width;
            let passed = bound <= SLOPE_THRESHOLD;
            let detail = format!(
                "slope {:.4} + half-width {:.4} = {:.4} {} {SLOPE_THRESHOLD}",
                fit.slope,
                fit.half_width,
                bound,
                if passed { "<=" } else { ">" }
            );
            (Some(fit), Verdict { name: name.into(), passed, detail })
        }
        None => (None, Verdict { name: name.into(), passed: false, detail: "too few usable grid points".into() }),
    }
}

fn sample_covariance(vectors: &[&Vec<f64>]) -> Option<DMatrix<f64>> {
    let k = vectors.len();
    let p = vectors.first()?.len();
    if k < 2 {
        return None;
    }
    let mut mean = DVector::zeros(p);
    for v in vectors {
        mean += DVector::from_column_slice(v);
    }
    mean /= k as f64;
    let mut cov = DMatrix::zeros(p, p);
    for v in vectors {
        let d = DVector::from_column_slice(v) - &mean;
        cov += &d * d.transpose();
    }
    Some(cov / (k - 1) as f64)
}

/// Below this Frobenius norm a covariance counts as the zero matrix.
pub const DEGENERATE_COVARIANCE: f64 = 1e-20;

/// `‖S − R‖_F / ‖R‖_F`. A zero reference (noise-free model) gives 0 when the
/// sample covariance is zero up to round-off and infinity otherwise.
pub fn frobenius_rel_error(empirical: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let diff = (empirical - reference).norm();
    let base = reference.norm();
    if base == 0.0 {
        if diff <= DEGENERATE_COVARIANCE {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / base
    }
}

fn summarize(
    kind: ExperimentKind,
    estimator: Estimator,
    records: Vec<RepRecord>,
    reference: Option<(usize, DMatrix<f64>)>,
) -> Result<MCReport> {
    let total = records.len();
    let failures = records.iter().filter(|r| r.failed).count();
    if total > 0 && failures as f64 > FAILURE_BUDGET * total as f64 {
        return Err(Error::TooManyFailures { failures, total });
    }
    let per_n = per_n_summaries(&records);
    let mut verdicts = Vec::new();
    let mut slope = None;
    let mut covariance = None;
    match kind {
        ExperimentKind::Remainder => {
            let (fit, v) = slope_verdict("asymptotic_linearity", &per_n);
            slope = fit;
            verdicts.push(v);
        }
        ExperimentKind::OneStep => {
            let (fit, v) = slope_verdict("onestep_rate", &per_n);
            slope = fit;
            verdicts.push(v);
            let ok: Vec<&RepRecord> = records.iter().filter(|r| !r.failed).collect();
            let inside = ok.iter().filter(|r| r.interior == Some(true)).count();
            verdicts.push(Verdict {
                name: "onestep_interior".into(),
                passed: inside == ok.len(),
                detail: format!("{inside} of {} one-step iterates strictly inside the parameter box", ok.len()),
            });
        }
        ExperimentKind::Normality => {
            let (n, reference) =
                reference.ok_or_else(|| Error::InvalidArgument("normality summary needs a reference".into()))?;
            let vectors: Vec<&Vec<f64>> =
                records.iter().filter(|r| !r.failed && r.n == n).map(|r| &r.scaled_error).collect();
            let empirical = sample_covariance(&vectors)
                .ok_or_else(|| Error::InvalidArgument("need at least 2 successful replications".into()))?;
            let err = frobenius_rel_error(&empirical, &reference);
            let passed = err <= NORMALITY_THRESHOLD;
            verdicts.push(Verdict {
                name: "asymptotic_normality".into(),
                passed,
                detail: format!("Frobenius relative error {err:.4} vs threshold {NORMALITY_THRESHOLD}"),
            });
            covariance = Some(CovarianceComparison {
                n,
                empirical: mat_to_rows(&empirical),
                reference: mat_to_rows(&reference),
                frobenius_rel_error: err,
                threshold: NORMALITY_THRESHOLD,
            });
        }
    }
    Ok(MCReport { experiment: kind, estimator, per_n, slope, covariance, failures, total_reps: total, verdicts, records })
}

struct Draw {
    data: Dataset<f64>,
    seed: u64,
    lambda: f64,
    m: u32,
}

fn draw(config: &MCConfig, n: usize, rep: usize) -> Result<Draw> {
    let seed = mix_seed(config.master_seed, n, rep);
    let lambda = config.lambda_at(n)?;
    let m = config.m.value(n);
    let data = generate_linear_data(&config.spec, n, seed)?;
    Ok(Draw { data, seed, lambda, m })
}

/// Runs `f` over every `(n, rep)` pair in parallel, returning records in
/// `(n, rep)` order.
fn replicate<F>(config: &MCConfig, ns: &[usize], f: F) -> Result<Vec<RepRecord>>
where
    F: Fn(usize, usize) -> RepRecord + Sync,
{
    let pairs: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..config.reps).map(move |r| (n, r))).collect();
    let run = || pairs.par_iter().map(|&(n, r)| f(n, r)).collect::<Vec<_>>();
    Ok(match config.pool()? {
        Some(pool) => pool.install(run),
        None => run(),
    })
}

/// Fitted parameter and convergence flag for the configured estimator.
fn fit_estimator(config: &MCConfig, d: &Draw, psi_mean: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let data = &d.data;
    let theta0 = config.spec.theta0();
    Ok(match config.estimator {
        Estimator::Ols => (ols(data)?, true),
        Estimator::Ridge => (ridge_init(data, d.lambda)?, true),
        Estimator::Lasso => {
            let fit = lasso_cd(data, d.lambda, &config.solver)?;
            (fit.theta_hat, fit.converged)
        }
        Estimator::ElasticNet => {
            let fit = elastic_net(data, d.lambda, config.lambda2, &config.solver)?;
            (fit.theta_hat, fit.converged)
        }
        Estimator::Adaptive => {
            let (_, fit) = adaptive_lasso(data, d.lambda, &config.solver)?;
            (fit.theta_hat, fit.converged)
        }
        Estimator::OneStep => {
            let pen = config.smooth_penalty(data.n())?;
            let start = ridge_init(data, d.lambda)?;
            (one_step(&start, data, &pen)?, true)
        }
        Estimator::ExactLinear => (theta0 + psi_mean, true),
    })
}

/// `(1/n) Σ ψ_{θ₀}(x_i, y_i)` with the population Jacobian at θ₀:
/// `−A⁻¹ (2/n) Xᵀ(Xθ₀ − Y)`, restricted to [`psi_support`].
fn population_psi_mean(config: &MCConfig, data: &Dataset<f64>) -> Result<DVector<f64>> {
    let pen = config.smooth_penalty(data.n())?;
    let jac = population_jacobian(&config.spec, &pen)?;
    let theta0 = config.spec.theta0();
    let mean_score = data.x().tr_mul(&(data.x() * theta0 - data.y())) * (2.0 / data.n() as f64);
    let support = psi_support(config);
    let sub_jac = jac.select_rows(&support).select_columns(&support);
    let sub = JacobianSolver::new(&sub_jac)?.solve_vec(&mean_score.select_rows(&support))?;
    let mut out = DVector::zeros(theta0.len());
    for (k, &j) in support.iter().enumerate() {
        out[j] = -sub[k];
    }
    Ok(out)
}

fn remainder_record(config: &MCConfig, n: usize, rep: usize) -> RepRecord {
    let seed = mix_seed(config.master_seed, n, rep);
    let fail = |lambda: f64, m: u32| RepRecord::failure(n, rep, seed, config.estimator, lambda, m);
    let d = match draw(config, n, rep) {
        Ok(d) => d,
        Err(_) => return fail(f64::NAN, config.m.value(n)),
    };
    let outcome = (|| -> Result<RepRecord> {
        let theta0 = config.spec.theta0();
        let psi_true = population_psi_mean(config, &d.data)?;
        let (theta_hat, converged) = fit_estimator(config, &d, &psi_true)?;
        let psi_mean = match (config.psi_reference, config.estimator) {
            (PsiReference::TrueTheta, _) | (PsiReference::Fitted, Estimator::ExactLinear) => psi_true,
            (PsiReference::Fitted, _) => {
                let pen = config.smooth_penalty(n)?;
                influence_curve(&d.data, &theta_hat, &pen)?.mean()
            }
        };
        let delta = match config.estimator {
            Estimator::ExactLinear => psi_mean.clone(),
            _ => &theta_hat - theta0,
        };
        let remainder = &delta - &psi_mean;
        let root_n = (n as f64).sqrt();
        Ok(RepRecord {
            n,
            rep,
            seed: d.seed,
            estimator: config.estimator,
            lambda: d.lambda,
            m: d.m,
            remainder_norm: remainder.norm(),
            theta_err_norm: delta.norm(),
            fit_converged: converged,
            failed: !converged,
            interior: None,
            scaled_error: (delta * root_n).iter().copied().collect(),
        })
    })();
    outcome.unwrap_or_else(|_| fail(d.lambda, d.m))
}

/// Remainder `R_n = θ̂ − θ₀ − (1/n) Σ ψ_{θ₀}(x_i, y_i)` across `n_grid`.
///
/// Passes when the 95%-CI upper end of the slope of `ln mean‖R_n‖` on
/// `ln n` is at most −0.5, or when the remainder vanishes identically.
pub fn remainder_scaling_experiment(config: &MCConfig) -> Result<MCReport> {
    config.validate(4, 100)?;
    if config.estimator == Estimator::OneStep {
        return onestep_experiment(config);
    }
    let records = replicate(config, &config.n_grid, |n, r| remainder_record(config, n, r))?;
    summarize(ExperimentKind::Remainder, config.estimator, records, None)
}

/// Sample covariance of `√n (θ̂ − θ₀)` at the largest `n` against the
/// closed-form sandwich `A C Aᵀ`.
pub fn normality_experiment(config: &MCConfig) -> Result<MCReport> {
    config.validate(1, 2)?;
    let n = *config.n_grid.last().expect("validated non-empty");
    let pen = config.smooth_penalty(n)?;
    let support = psi_support(config);
    let full = sandwich_covariance(&config.spec, &pen)?;
    let reference = if support.len() == config.spec.p() {
        full
    } else {
        // oracle partial curve: sandwich on the support, zero elsewhere
        let sub_spec = LinearModelSpec::new(
            config.spec.theta0().select_rows(&support),
            config.spec.sigma(),
            config.spec.second_moment().select_rows(&support).select_columns(&support),
            false,
        )?;
        let sub = sandwich_covariance(&sub_spec, &Penalty::none())?;
        let mut m = DMatrix::zeros(config.spec.p(), config.spec.p());
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                m[(i, j)] = sub[(a, b)];
            }
        }
        m
    };
    let records = replicate(config, &[n], |n, r| remainder_record(config, n, r))?;
    summarize(ExperimentKind::Normality, config.estimator, records, Some((n, reference)))
}

fn onestep_record(config: &MCConfig, n: usize, rep: usize) -> RepRecord {
    let seed = mix_seed(config.master_seed, n, rep);
    let fail = |lambda: f64, m: u32| RepRecord::failure(n, rep, seed, Estimator::OneStep, lambda, m);
    let d = match draw(config, n, rep) {
        Ok(d) => d,
        Err(_) => return fail(f64::NAN, config.m.value(n)),
    };
    let outcome = (|| -> Result<RepRecord> {
        let pen = config.smooth_penalty(n)?;
        let start = ridge_init(&d.data, d.lambda)?;
        let os = one_step(&start, &d.data, &pen)?;
        let full = smooth_fit(&d.data, &pen, start, &config.newton)?;
        let bx = parameter_box(&d.data, &pen)?;
        let delta = &os - config.spec.theta0();
        let root_n = (n as f64).sqrt();
        Ok(RepRecord {
            n,
            rep,
            seed: d.seed,
            estimator: Estimator::OneStep,
            lambda: d.lambda,
            m: d.m,
            remainder_norm: (&os - &full.theta_hat).norm(),
            theta_err_norm: delta.norm(),
            fit_converged: full.converged,
            failed: !full.converged,
            interior: Some(bx.strictly_contains(&os)),
            scaled_error: (delta * root_n).iter().copied().collect(),
        })
    })();
    outcome.unwrap_or_else(|_| fail(d.lambda, d.m))
}

/// Gap between the one-step iterate from the ridge initializer and the
/// full Newton solve of the smooth objective (`‖Z_n‖ ≤ grad_tol`).
///
/// Both the ridge initializer and the penalty use the configured λ rule.
pub fn onestep_experiment(config: &MCConfig) -> Result<MCReport> {
    config.validate(4, 100)?;
    if config.estimator != Estimator::OneStep {
        return Err(Error::InvalidArgument("onestep experiment needs estimator = onestep".into()));
    }
    let records = replicate(config, &config.n_grid, |n, r| onestep_record(config, n, r))?;
    summarize(ExperimentKind::OneStep, Estimator::OneStep, records, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcConvergenceRow {
    pub m: u32,
    /// `max_i ‖ψ_i^(m) − ψ_i^(m_max)‖₂`; `None` when this `m` failed.
    pub sup_diff: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcConvergenceTable {
    pub lambda: f64,
    pub rows: Vec<IcConvergenceRow>,
    /// Differences non-increasing in `m` up to [`MONOTONE_SLACK`].
    pub monotone: bool,
}

pub const MONOTONE_SLACK: f64 = 1e-3;

impl IcConvergenceTable {
    pub fn diff_at(&self, m: u32) -> Option<f64> {
        self.rows.iter().find(|r| r.m == m).and_then(|r| r.sup_diff)
    }

    /// `diff(m_small) / diff(m_large)`; infinite when the latter is 0.
    pub fn decay_ratio(&self, m_small: u32, m_large: u32) -> Option<f64> {
        let (a, b) = (self.diff_at(m_small)?, self.diff_at(m_large)?);
        Some(if b == 0.0 {
            if a == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            a / b
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,lambda,sup_diff,error\n");
        for r in &self.rows {
            let diff = r.sup_diff.map_or(String::new(), |d| d.to_string());
            let err = r.error.clone().unwrap_or_default().replace(',', ";");
            out.push_str(&format!("{},{},{},{}\n", r.m, self.lambda, diff, err));
        }
        out
    }
}

/// Influence curves of the smoothed Lasso at each `m`, compared with the
/// curve at the largest `m`.
///
/// At each `m` the curve is expanded at that `m`'s own smooth solution,
/// found by damped Newton from the exact Lasso solution.
pub fn ic_convergence_experiment(data: &Dataset<f64>, lambda: f64, m_grid: &[u32]) -> Result<IcConvergenceTable> {
    if m_grid.len() < 3 {
        return Err(Error::InvalidArgument("m_grid needs at least 3 entries".into()));
    }
    if m_grid.windows(2).any(|w| w[0] > w[1]) || m_grid[0] == 0 {
        return Err(Error::InvalidArgument("m_grid must be ascending and positive".into()));
    }
    let start = lasso_cd(data, lambda, &SolverOptions::default())?.theta_hat;
    let weights = data.default_weights();
    let psi_at = |m: u32| -> Result<DMatrix<f64>> {
        let pen = Penalty::l1(lambda).smooth_approx(m)?.with_weights(weights.clone());
        let fit = smooth_fit(data, &pen, start.clone(), &NewtonOptions::default())?;
        if !fit.converged {
            return Err(Error::NoConvergence(format!("smooth solve at m = {m}")));
        }
        Ok(influence_curve(data, &fit.theta_hat, &pen)?.psi)
    };
    let m_max = *m_grid.last().expect("non-empty");
    let reference = psi_at(m_max)?;
    let results: Vec<Result<DMatrix<f64>>> = m_grid.par_iter().map(|&m| psi_at(m)).collect();
    let rows: Vec<IcConvergenceRow> = m_grid
        .iter()
        .zip(results)
        .map(|(&m, res)| match res {
            Ok(psi) => {
                let diff = (psi - &reference).row_iter().map(|r| r.norm()).fold(0.0, f64::max);
                IcConvergenceRow { m, sup_diff: Some(diff), error: None }
            }
            Err(e) => IcConvergenceRow { m, sup_diff: None, error: Some(e.to_string()) },
        })
        .collect();
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.sup_diff).collect();
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
    Ok(IcConvergenceTable { lambda, rows, monotone })
}

/// Draws an i.i.d. standard normal vector (used by tests and diagnostics).
pub fn standard_normal_vector(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng))
}
