//! Influence curves of regularized Z-estimators, the adaptive-Lasso partial
//! influence curve, the Newton one-step estimator and numerical checks of
//! the moment conditions an influence curve has to satisfy.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::format_real;
use crate::model::{Dataset, LinearModelSpec, NoiseKind};
use crate::penalties::Penalty;
use crate::scalar::Real;
use crate::scores::{squared_loss_score, ZSystem};
use crate::solvers::{adaptive_weights, FitResult};

/// LU factorisation of a Jacobian together with its 2-norm condition number.
pub(crate) struct JacobianSolver<T: Real> {
    lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    pub(crate) condition_number: T,
}

impl<T: Real> JacobianSolver<T> {
    pub(crate) fn new(jacobian: &DMatrix<T>) -> Result<Self> {
        let sv = jacobian.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        let cond = if lo > T::zero() { hi / lo } else { T::lit(f64::INFINITY) };
        let limit = T::one() / (T::default_epsilon() * T::count(jacobian.nrows().max(1)));
        if !cond.finite() || cond > limit {
            return Err(Error::SingularJacobian { condition_number: cond.as_f64() });
        }
        Ok(Self { lu: jacobian.clone().lu(), condition_number: cond })
    }

    pub(crate) fn solve(&self, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.lu
            .solve(rhs)
            .ok_or(Error::SingularJacobian { condition_number: self.condition_number.as_f64() })
    }

    pub(crate) fn solve_vec(&self, rhs: &DVector<T>) -> Result<DVector<T>> {
        self.lu
            .solve(rhs)
            .ok_or(Error::SingularJacobian { condition_number: self.condition_number.as_f64() })
    }
}

/// Influence-curve values `ψ(x_i, y_i)` for every observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ICSample<T: Real> {
    /// n×p, row `i` is `ψ(x_i, y_i)`.
    pub psi: DMatrix<T>,
    /// The Jacobian `Â` the curve was built from.
    pub jacobian_used: DMatrix<T>,
    pub theta_ref: DVector<T>,
    pub penalty_ref: Penalty<T>,
    pub condition_number: T,
}

impl<T: Real> ICSample<T> {
    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    pub fn p(&self) -> usize {
        self.psi.ncols()
    }

    /// Average of the rows, `(1/n) Σ_i ψ_i`.
    pub fn mean(&self) -> DVector<T> {
        self.psi.row_mean().transpose()
    }

    /// CSV with header `i,psi_1,...,psi_p`; `i` counts from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i");
        for j in 1..=self.p() {
            out.push_str(&format!(",psi_{j}"));
        }
        out.push('\n');
        for (i, row) in self.psi.row_iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for v in row.iter() {
                out.push(',');
                out.push_str(&format_real(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// `ψ_i = −Â⁻¹ (φ(x_i, y_i, θ_ref) + ∇J(θ_ref))` with `Â = Z'_n(θ_ref)`,
/// the empirical Jacobian of the regularized Z-function.
pub fn influence_curve<T: Real>(data: &Dataset<T>, theta_ref: &DVector<T>, penalty: &Penalty<T>) -> Result<ICSample<T>> {
    if !penalty.is_smooth() {
        return Err(Error::InvalidArgument("influence curve needs a smooth penalty".into()));
    }
    let zs = ZSystem::new(data, penalty);
    let jac = zs.z_jacobian(theta_ref)?;
    let solver = JacobianSolver::new(&jac)?;
    let mut rhs = zs.scores(theta_ref)?;
    let grad = penalty.gradient(theta_ref)?;
    for mut col in rhs.column_iter_mut() {
        col += &grad;
    }
    let psi = -solver.solve(&rhs)?.transpose();
    Ok(ICSample {
        psi,
        jacobian_used: jac,
        theta_ref: theta_ref.clone(),
        penalty_ref: penalty.clone(),
        condition_number: solver.condition_number,
    })
}

/// Point at which to evaluate a single influence-curve value.
#[derive(Debug, Clone, PartialEq)]
pub enum IcPoint<T: Real> {
    Observation(usize),
    New { x: DVector<T>, y: T },
}

struct AdaptiveBlock<T: Real> {
    active: Vec<usize>,
    sub: Dataset<T>,
    theta: DVector<T>,
    penalty: Penalty<T>,
}

fn adaptive_block<T: Real>(
    data: &Dataset<T>,
    init: &FitResult<T>,
    fin: &FitResult<T>,
    lambda: T,
    m: u32,
) -> Result<Option<AdaptiveBlock<T>>> {
    let p = data.p();
    if init.theta_hat.len() != p || fin.theta_hat.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: init.theta_hat.len().min(fin.theta_hat.len()) });
    }
    let active: Vec<usize> = (0..p)
        .filter(|&j| init.theta_hat[j] != T::zero() && fin.theta_hat[j] != T::zero())
        .collect();
    if active.is_empty() {
        return Ok(None);
    }
    let sub = data.select_columns(&active)?;
    let weights = adaptive_weights(&data.default_weights(), &init.theta_hat).select_rows(&active);
    let theta = fin.theta_hat.select_rows(&active);
    let penalty = Penalty::adaptive_l1(lambda, weights).smooth_approx(m)?;
    Ok(Some(AdaptiveBlock { active, sub, theta, penalty }))
}

/// Partial influence curve of the adaptive Lasso at one point.
///
/// Component `j` is 0 whenever the stage-1 or the stage-2 estimate of
/// `β_j` is 0. The remaining components are the Lasso influence curve on
/// the active columns with per-coordinate penalty `λ w_j/|β̂_j^init|`,
/// smoothed at index `m`, embedded back into `R^p` with zeros.
pub fn adaptive_lasso_ic<T: Real>(
    data: &Dataset<T>,
    init: &FitResult<T>,
    fin: &FitResult<T>,
    point: &IcPoint<T>,
    lambda: T,
    m: u32,
) -> Result<DVector<T>> {
    let p = data.p();
    let Some(block) = adaptive_block(data, init, fin, lambda, m)? else {
        return Ok(DVector::zeros(p));
    };
    let (x, y) = match point {
        IcPoint::Observation(i) => {
            if *i >= data.n() {
                return Err(Error::InvalidArgument(format!("observation {i} out of range")));
            }
            (data.row(*i), data.y()[*i])
        }
        IcPoint::New { x, y } => {
            if x.len() != p {
                return Err(Error::DimensionMismatch { expected: p, found: x.len() });
            }
            (x.clone(), *y)
        }
    };
    let zs = ZSystem::new(&block.sub, &block.penalty);
    let solver = JacobianSolver::new(&zs.z_jacobian(&block.theta)?)?;
    let x_active = x.select_rows(&block.active);
    let rhs = squared_loss_score(&x_active, y, &block.theta) + block.penalty.gradient(&block.theta)?;
    let psi_active = -solver.solve_vec(&rhs)?;
    let mut psi = DVector::zeros(p);
    for (k, &j) in block.active.iter().enumerate() {
        psi[j] = psi_active[k];
    }
    Ok(psi)
}

/// [`adaptive_lasso_ic`] at every observation, as an n×p matrix.
pub fn adaptive_lasso_ic_sample<T: Real>(
    data: &Dataset<T>,
    init: &FitResult<T>,
    fin: &FitResult<T>,
    lambda: T,
    m: u32,
) -> Result<DMatrix<T>> {
    let mut psi = DMatrix::zeros(data.n(), data.p());
    if let Some(block) = adaptive_block(data, init, fin, lambda, m)? {
        let ic = influence_curve(&block.sub, &block.theta, &block.penalty)?;
        for (k, &j) in block.active.iter().enumerate() {
            psi.set_column(j, &ic.psi.column(k));
        }
    }
    Ok(psi)
}

/// Single Newton step `θ̃ − Z'_n(θ̃)⁻¹ Z_n(θ̃)`.
pub fn one_step<T: Real>(theta_tilde: &DVector<T>, data: &Dataset<T>, penalty: &Penalty<T>) -> Result<DVector<T>> {
    if !penalty.is_smooth() {
        return Err(Error::InvalidArgument("one-step estimator needs a smooth penalty".into()));
    }
    let zs = ZSystem::new(data, penalty);
    let solver = JacobianSolver::new(&zs.z_jacobian(theta_tilde)?)?;
    let step = solver.solve_vec(&zs.empirical_z(theta_tilde)?)?;
    Ok(theta_tilde - step)
}

/// Entrywise tolerance for the `E[ψ Λᵀ] = I` check.
pub const COND_III_TOLERANCE: f64 = 0.1;
/// Multiple of the standard error allowed for `|mean ψ_j|`.
pub const COND_II_SE_MULTIPLE: f64 = 3.0;

/// Moment-condition diagnostics of an [`ICSample`]:
/// (i) square integrability, (ii) zero mean, (iii) `E[ψ Λᵀ] = I_p` for the
/// Gaussian, unpenalized model where the score `Λ = x(y − xᵀθ₀)/σ²` is
/// available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ICCheckReport<T: Real> {
    pub mean_psi: DVector<T>,
    pub mean_psi_se: DVector<T>,
    pub l2_norms_finite: bool,
    pub second_moment: T,
    pub cond_iii_matrix: Option<DMatrix<T>>,
    pub cond_i: bool,
    pub cond_ii: bool,
    pub cond_iii: Option<bool>,
}

impl<T: Real> ICCheckReport<T> {
    pub fn all_pass(&self) -> bool {
        self.cond_i && self.cond_ii && self.cond_iii.unwrap_or(true)
    }
}

/// Runs the three moment checks. Condition iii is evaluated only when a
/// Gaussian model spec with `σ > 0` is given and the curve was built
/// without a penalty.
pub fn ic_moment_checks<T: Real>(
    ics: &ICSample<T>,
    data: &Dataset<T>,
    spec: Option<&LinearModelSpec<T>>,
) -> Result<ICCheckReport<T>> {
    if ics.n() != data.n() || ics.p() != data.p() {
        return Err(Error::DimensionMismatch { expected: data.n(), found: ics.n() });
    }
    let n = ics.n();
    let nf = T::count(n);
    let mean = ics.mean();
    let mut var = DVector::zeros(ics.p());
    let mut second = T::zero();
    let mut finite = true;
    for row in ics.psi.row_iter() {
        let sq = row.norm_squared();
        finite &= sq.finite();
        second += sq;
        let d = row.transpose() - &mean;
        var += d.component_mul(&d);
    }
    second /= nf;
    let denom = if n > 1 { T::count(n - 1) } else { T::one() };
    let se = var.map(|v| (v / denom).sqrt() / nf.sqrt());
    let k = T::lit(COND_II_SE_MULTIPLE);
    let cond_ii = finite && mean.iter().zip(se.iter()).all(|(&mu, &s)| mu.abs() <= k * s);
    let cond_i = finite && second.finite();

    let cond_iii_matrix = match spec {
        Some(spec)
            if spec.noise() == NoiseKind::Gaussian
                && spec.sigma() > T::zero()
                && ics.penalty_ref.is_zero()
                && spec.p() == data.p() =>
        {
            let s2 = spec.sigma() * spec.sigma();
            let resid = data.y() - data.x() * spec.theta0();
            let mut acc = DMatrix::zeros(data.p(), data.p());
            for i in 0..n {
                let lambda_i = data.row(i) * (resid[i] / s2);
                acc += ics.psi.row(i).transpose() * lambda_i.transpose();
            }
            Some(acc / nf)
        }
        _ => None,
    };
    let cond_iii = cond_iii_matrix.as_ref().map(|mat| {
        let eye = DMatrix::<T>::identity(mat.nrows(), mat.ncols());
        (mat - eye).amax() <= T::lit(COND_III_TOLERANCE)
    });
    Ok(ICCheckReport {
        mean_psi: mean,
        mean_psi_se: se,
        l2_norms_finite: finite,
        second_moment: second,
        cond_iii_matrix,
        cond_i,
        cond_ii,
        cond_iii,
    })
}
