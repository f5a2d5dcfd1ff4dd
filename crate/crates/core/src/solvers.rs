//! Reference optimizers: cyclic coordinate descent ("shooting") for the
//! weighted Lasso, the elastic net through data augmentation, the two-stage
//! adaptive Lasso, closed-form ridge/OLS and a damped Newton solver for
//! smooth objectives.
//!
//! All ℓ1 problems use the objective `(1/n)‖Y − Xβ‖² + λ Σ_j w_j |β_j|`,
//! so on an orthonormal-scaled design (`XᵀX = n·I`) the solution is the
//! soft-threshold of `XᵀY/n` at `λ/2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::penalties::Penalty;
use crate::scalar::Real;
use crate::scores::{RankingZSystem, ZSystem};

/// `sign(z)·max(|z| − γ, 0)`.
pub fn soft_threshold<T: Real>(z: T, gamma: T) -> T {
    debug_assert!(gamma >= T::zero());
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T: Real> {
    /// Stop once the largest coordinate change in a sweep is at most `tol`.
    pub tol: T,
    pub max_sweeps: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-8), max_sweeps: 100_000 }
    }
}

impl<T: Real> SolverOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) || self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("solver tol must be > 0 and max_sweeps >= 1".into()));
        }
        Ok(())
    }
}

/// Design condition numbers above this are reported in [`FitResult::ill_conditioned`].
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Real> {
    pub theta_hat: DVector<T>,
    /// Objective at `theta_hat`, recomputed from scratch.
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    pub active_set: Vec<usize>,
    /// Objective after each sweep (coordinate descent) or step (Newton).
    pub objective_trace: Vec<T>,
    /// Condition number of `XᵀX` when it exceeds [`CONDITION_WARNING`].
    pub ill_conditioned: Option<T>,
}

fn active_set<T: Real>(theta: &DVector<T>) -> Vec<usize> {
    theta.iter().enumerate().filter(|(_, &v)| v != T::zero()).map(|(j, _)| j).collect()
}

fn gram_condition<T: Real>(x: &DMatrix<T>) -> Option<T> {
    let eig = x.tr_mul(x).symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo <= T::zero() { T::lit(f64::INFINITY) } else { hi / lo };
    (cond > T::lit(CONDITION_WARNING) || !cond.finite()).then_some(cond)
}

struct CdOutcome<T: Real> {
    theta: DVector<T>,
    sweeps: usize,
    converged: bool,
    trace: Vec<T>,
}

/// Cyclic coordinate descent on `(1/scale_n)‖y − Xβ‖² + λ Σ_j w_j |β_j|`.
///
/// Coordinates marked `frozen` keep their starting value; zero columns are
/// pinned at 0. Coordinates are visited in ascending order.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent<T: Real>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    scale_n: T,
    lambda: T,
    weights: &DVector<T>,
    frozen: &[bool],
    start: DVector<T>,
    opts: &SolverOptions<T>,
) -> CdOutcome<T> {
    let p = x.ncols();
    let half = T::lit(0.5);
    let col_sq: Vec<T> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let mut theta = start;
    for j in 0..p {
        if col_sq[j] == T::zero() && !frozen[j] {
            theta[j] = T::zero();
        }
    }
    let mut resid = y - x * &theta;
    let objective = |r: &DVector<T>, th: &DVector<T>| {
        let pen: T = th.iter().zip(weights.iter()).fold(T::zero(), |acc, (&t, &w)| acc + w * t.abs());
        r.norm_squared() / scale_n + lambda * pen
    };
    let mut trace = vec![objective(&resid, &theta)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change = T::zero();
        for j in 0..p {
            if frozen[j] || col_sq[j] == T::zero() {
                continue;
            }
            let col = x.column(j);
            let old = theta[j];
            let rho = col.dot(&resid) + col_sq[j] * old;
            let new = soft_threshold(rho, half * scale_n * lambda * weights[j]) / col_sq[j];
            let delta = new - old;
            if delta != T::zero() {
                resid.axpy(-delta, &col, T::one());
                theta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        let obj = objective(&resid, &theta);
        let prev = *trace.last().expect("trace starts non-empty");
        // residual updates drift by a few ulps per sweep
        debug_assert!(
            obj <= prev + T::lit(64.0) * T::default_epsilon() * (T::one() + prev.abs()),
            "coordinate descent objective increased: {prev} -> {obj}"
        );
        trace.push(obj);
        if max_change <= opts.tol {
            converged = true;
            break;
        }
    }
    CdOutcome { theta, sweeps, converged, trace }
}

fn check_lambda<T: Real>(name: &str, value: T) -> Result<()> {
    if !(value >= T::zero()) || !value.finite() {
        return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {value}")));
    }
    Ok(())
}

fn weighted_lasso_inner<T: Real>(
    data: &Dataset<T>,
    lambda: T,
    weights: &DVector<T>,
    frozen: &[bool],
    start: DVector<T>,
    opts: &SolverOptions<T>,
) -> Result<FitResult<T>> {
    opts.validate()?;
    check_lambda("lambda", lambda)?;
    if weights.len() != data.p() {
        return Err(Error::DimensionMismatch { expected: data.p(), found: weights.len() });
    }
    let out = coordinate_descent(
        data.x(),
        data.y(),
        T::count(data.n()),
        lambda,
        weights,
        frozen,
        start,
        opts,
    );
    let penalty = Penalty::l1(lambda).with_weights(weights.clone());
    let objective = ZSystem::new(data, &penalty).objective(&out.theta)?;
    Ok(FitResult {
        active_set: active_set(&out.theta),
        theta_hat: out.theta,
        objective,
        iterations: out.sweeps,
        converged: out.converged,
        objective_trace: out.trace,
        ill_conditioned: gram_condition(data.x()),
    })
}

/// Lasso by cyclic coordinate descent with the dataset's default weights
/// (intercept unpenalized).
pub fn lasso_cd<T: Real>(data: &Dataset<T>, lambda: T, opts: &SolverOptions<T>) -> Result<FitResult<T>> {
    weighted_lasso_cd(data, lambda, &data.default_weights(), opts)
}

/// Lasso with per-coordinate penalty weights.
pub fn weighted_lasso_cd<T: Real>(
    data: &Dataset<T>,
    lambda: T,
    weights: &DVector<T>,
    opts: &SolverOptions<T>,
) -> Result<FitResult<T>> {
    let frozen = vec![false; data.p()];
    weighted_lasso_inner(data, lambda, weights, &frozen, DVector::zeros(data.p()), opts)
}

/// Elastic net `(1/n)‖Y − Xβ‖² + λ₁ Σ w_j|β_j| + λ₂ Σ w_j β_j²` solved as a
/// Lasso on augmented data.
///
/// With `D = diag(√w)`, the augmented problem is
/// `X* = [X; √(nλ₂)·D] / √(1+λ₂)`, `y* = [Y; 0]`, penalty `λ₁/√(1+λ₂)`,
/// still normalized by the original `n`. Its solution `β*` maps back via
/// `β = β*/√(1+λ₂)`; on an orthonormal design this is the Lasso solution
/// shrunk by `1/(1+λ₂)`.
pub fn elastic_net<T: Real>(
    data: &Dataset<T>,
    lambda1: T,
    lambda2: T,
    opts: &SolverOptions<T>,
) -> Result<FitResult<T>> {
    opts.validate()?;
    check_lambda("lambda1", lambda1)?;
    check_lambda("lambda2", lambda2)?;
    let (n, p) = (data.n(), data.p());
    let weights = data.default_weights();
    let inflate = (T::one() + lambda2).sqrt();
    let mut x_aug = DMatrix::<T>::zeros(n + p, p);
    x_aug.rows_mut(0, n).copy_from(data.x());
    let ridge_rows = (T::count(n) * lambda2).sqrt();
    for j in 0..p {
        x_aug[(n + j, j)] = ridge_rows * weights[j].sqrt();
    }
    x_aug /= inflate;
    let mut y_aug = DVector::<T>::zeros(n + p);
    y_aug.rows_mut(0, n).copy_from(data.y());
    let aug_opts = SolverOptions { tol: opts.tol * inflate, max_sweeps: opts.max_sweeps };
    let out = coordinate_descent(
        &x_aug,
        &y_aug,
        T::count(n),
        lambda1 / inflate,
        &weights,
        &vec![false; p],
        DVector::zeros(p),
        &aug_opts,
    );
    let theta = out.theta / inflate;
    let penalty = Penalty::elastic_net(lambda1, lambda2).with_weights(weights);
    let zs = ZSystem::new(data, &penalty);
    Ok(FitResult {
        active_set: active_set(&theta),
        objective: zs.objective(&theta)?,
        theta_hat: theta,
        iterations: out.sweeps,
        converged: out.converged,
        objective_trace: out.trace,
        ill_conditioned: gram_condition(data.x()),
    })
}

/// Stage-2 weights `w_j / |β̂_j^init|` (0 where the initial fit is zero).
pub fn adaptive_weights<T: Real>(base: &DVector<T>, init: &DVector<T>) -> DVector<T> {
    base.zip_map(init, |w, b| if b == T::zero() { T::zero() } else { w / b.abs() })
}

/// Two-stage adaptive Lasso. Stage 1 is `lasso_cd(λ)`; stage 2 freezes the
/// coordinates stage 1 set to zero and refits the rest with penalty
/// `λ Σ_j w_j |β_j| / |β̂_j^init|`, warm-started at the stage-1 solution.
pub fn adaptive_lasso<T: Real>(
    data: &Dataset<T>,
    lambda: T,
    opts: &SolverOptions<T>,
) -> Result<(FitResult<T>, FitResult<T>)> {
    let init = lasso_cd(data, lambda, opts)?;
    let frozen: Vec<bool> = init.theta_hat.iter().map(|&b| b == T::zero()).collect();
    let weights = adaptive_weights(&data.default_weights(), &init.theta_hat);
    let fin = weighted_lasso_inner(data, lambda, &weights, &frozen, init.theta_hat.clone(), opts)?;
    Ok((init, fin))
}

/// Closed-form ridge `((1/n)XᵀX + λ₂W)⁻¹ (1/n)XᵀY` with the dataset's
/// default weights `W` (intercept unpenalized), by Cholesky solve.
pub fn ridge_init<T: Real>(data: &Dataset<T>, lambda2: T) -> Result<DVector<T>> {
    check_lambda("lambda2", lambda2)?;
    let inv_n = T::one() / T::count(data.n());
    let mut a = data.x().tr_mul(data.x()) * inv_n;
    let w = data.default_weights();
    for j in 0..data.p() {
        a[(j, j)] += lambda2 * w[j];
    }
    let b = data.x().tr_mul(data.y()) * inv_n;
    let singular = || Error::SingularSystem { smallest_eigenvalue: a.symmetric_eigenvalues().min().as_f64() };
    let chol = a.clone().cholesky().ok_or_else(singular)?;
    // squared diagonal ratio of the factor bounds the reciprocal condition number from above
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if !(hi > T::zero()) || (lo / hi) * (lo / hi) < T::count(data.p()) * T::default_epsilon() {
        return Err(singular());
    }
    Ok(chol.solve(&b))
}

/// Ordinary least squares, `ridge_init(data, 0)`.
pub fn ols<T: Real>(data: &Dataset<T>) -> Result<DVector<T>> {
    ridge_init(data, T::zero())
}

/// A twice-differentiable objective with gradient and Hessian.
pub trait SmoothObjective<T: Real> {
    fn dim(&self) -> usize;
    fn value(&self, theta: &DVector<T>) -> Result<T>;
    fn gradient(&self, theta: &DVector<T>) -> Result<DVector<T>>;
    fn hessian(&self, theta: &DVector<T>) -> Result<DMatrix<T>>;
}

impl<T: Real> SmoothObjective<T> for ZSystem<'_, T> {
    fn dim(&self) -> usize {
        self.data().p()
    }
    fn value(&self, theta: &DVector<T>) -> Result<T> {
        self.objective(theta)
    }
    fn gradient(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        self.empirical_z(theta)
    }
    fn hessian(&self, theta: &DVector<T>) -> Result<DMatrix<T>> {
        self.z_jacobian(theta)
    }
}

impl<T: Real> SmoothObjective<T> for RankingZSystem<'_, T> {
    fn dim(&self) -> usize {
        self.data().p()
    }
    fn value(&self, theta: &DVector<T>) -> Result<T> {
        self.objective(theta)
    }
    fn gradient(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        self.ranking_z(theta)
    }
    fn hessian(&self, theta: &DVector<T>) -> Result<DMatrix<T>> {
        self.ranking_jacobian(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions<T: Real> {
    /// Stop once `‖∇f‖₂ ≤ grad_tol`.
    pub grad_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self { grad_tol: T::lit(1e-10), max_iter: 500 }
    }
}

/// Solves `(H + τI) d = −g` for the smallest `τ` in `{0, 1e-8·s, 1e-7·s, …}`
/// (`s` the largest absolute diagonal entry) that makes the shifted Hessian
/// positive definite.
fn modified_newton_direction<T: Real>(hess: &DMatrix<T>, grad: &DVector<T>) -> Option<DVector<T>> {
    if let Some(c) = hess.clone().cholesky() {
        return Some(-c.solve(grad));
    }
    let scale = hess.diagonal().amax().max(T::one());
    let mut tau = scale * T::lit(1e-8);
    for _ in 0..24 {
        let mut shifted = hess.clone();
        for j in 0..shifted.nrows() {
            shifted[(j, j)] += tau;
        }
        if let Some(c) = shifted.cholesky() {
            return Some(-c.solve(grad));
        }
        tau *= T::lit(10.0);
    }
    None
}

/// Damped Newton with Armijo backtracking. An indefinite Hessian is shifted
/// by a multiple of the identity until it is positive definite; steepest
/// descent is the last resort.
pub fn newton_solve<T: Real, F: SmoothObjective<T>>(
    objective: &F,
    start: DVector<T>,
    opts: &NewtonOptions<T>,
) -> Result<FitResult<T>> {
    if start.len() != objective.dim() {
        return Err(Error::DimensionMismatch { expected: objective.dim(), found: start.len() });
    }
    let armijo = T::lit(1e-4);
    let half = T::lit(0.5);
    let mut theta = start;
    let mut value = objective.value(&theta)?;
    let mut trace = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let grad = objective.gradient(&theta)?;
        if grad.norm() <= opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let hess = objective.hessian(&theta)?;
        let direction = match modified_newton_direction(&hess, &grad) {
            Some(d) if d.dot(&grad) < T::zero() => d,
            _ => -grad.clone(),
        };
        let slope = direction.dot(&grad);
        // near the optimum the objective is flat to round-off and Armijo
        // cannot see progress, so a full step that shrinks the gradient wins
        let full = &theta + &direction;
        let full_value = objective.value(&full)?;
        let flat = T::lit(16.0) * T::default_epsilon() * (T::one() + value.abs());
        if full_value <= value + flat && objective.gradient(&full)?.norm() < grad.norm() {
            theta = full;
            value = full_value;
            trace.push(value);
            continue;
        }
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &theta + &direction * step;
            let cand_value = objective.value(&candidate)?;
            if cand_value <= value + armijo * step * slope {
                theta = candidate;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= half;
        }
        if !accepted {
            // no representable decrease left; accept a pure Newton step if it
            // still shrinks the gradient, otherwise stop
            let candidate = &theta + &direction;
            if objective.gradient(&candidate)?.norm() < grad.norm() {
                value = objective.value(&candidate)?;
                theta = candidate;
            } else {
                break;
            }
        }
        trace.push(value);
    }
    if !converged {
        converged = objective.gradient(&theta)?.norm() <= opts.grad_tol;
    }
    Ok(FitResult {
        active_set: active_set(&theta),
        objective: value,
        theta_hat: theta,
        iterations,
        converged,
        objective_trace: trace,
        ill_conditioned: None,
    })
}

/// Minimizes squared loss plus a smooth penalty (`‖Z_n‖ ≤ grad_tol`).
pub fn smooth_fit<T: Real>(
    data: &Dataset<T>,
    penalty: &Penalty<T>,
    start: DVector<T>,
    opts: &NewtonOptions<T>,
) -> Result<FitResult<T>> {
    if !penalty.is_smooth() {
        return Err(Error::InvalidArgument("smooth_fit requires a smooth penalty".into()));
    }
    newton_solve(&ZSystem::new(data, penalty), start, opts)
}

/// Minimizes the pairwise ranking objective plus a smooth penalty.
pub fn ranking_fit<T: Real>(
    data: &Dataset<T>,
    penalty: &Penalty<T>,
    start: DVector<T>,
    opts: &NewtonOptions<T>,
) -> Result<FitResult<T>> {
    if !penalty.is_smooth() {
        return Err(Error::InvalidArgument("ranking_fit requires a smooth penalty".into()));
    }
    newton_solve(&RankingZSystem::new(data, penalty)?, start, opts)
}
