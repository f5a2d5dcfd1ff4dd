//! Regularized M-estimation through Z-equations.
//!
//! The crate covers the squared-loss Lasso family (Lasso, elastic net,
//! adaptive Lasso, ridge), smooth `t·tanh(m t)` approximations of the ℓ1
//! penalty, influence curves and one-step Newton estimators built from the
//! regularized Z-function, and seeded Monte Carlo experiments that check
//! asymptotic linearity and normality.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which the experiment harness uses.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod io;
pub mod linearization;
pub mod model;
pub mod penalties;
pub mod scalar;
pub mod scores;
pub mod solvers;

pub use error::{Error, Result};
pub use linearization::{
    adaptive_lasso_ic, adaptive_lasso_ic_sample, ic_moment_checks, influence_curve, one_step, ICCheckReport,
    ICSample, IcPoint,
};
pub use model::{generate_linear_data, parameter_box, Dataset, LinearModelSpec, NoiseKind, ParameterBox};
pub use penalties::{sobolev_distance, Penalty, PenaltyKind, PenaltyValue, SobolevGrid, SobolevReport};
pub use scalar::Real;
pub use scores::{ranking_score, squared_loss_score, RankingZSystem, ZSystem};
pub use solvers::{
    adaptive_lasso, elastic_net, lasso_cd, newton_solve, ols, ranking_fit, ridge_init, smooth_fit,
    soft_threshold, weighted_lasso_cd, FitResult, NewtonOptions, SolverOptions,
};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type LinearModelSpec64 = LinearModelSpec<f64>;
pub type LinearModelSpec32 = LinearModelSpec<f32>;
pub type Penalty64 = Penalty<f64>;
pub type Penalty32 = Penalty<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
pub type ICSample64 = ICSample<f64>;
pub type ICSample32 = ICSample<f32>;
pub type ParameterBox64 = ParameterBox<f64>;
pub type SobolevReport64 = SobolevReport<f64>;
