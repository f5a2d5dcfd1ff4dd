//! Data model: regression datasets, the Gaussian linear model used to
//! simulate them, and the ℓ1 box implied by coercivity of the penalty.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::penalties::{Penalty, PenaltyKind};
use crate::scalar::Real;

/// Regressor matrix `X` (n×p) and response `Y` (n).
///
/// When `intercept` is set, column 0 of `X` is all ones and carries a zero
/// penalty weight by default (see [`Dataset::default_weights`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    x: DMatrix<T>,
    y: DVector<T>,
    intercept: bool,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: DMatrix<T>, y: DVector<T>, intercept: bool) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidDataset(format!("empty design ({n}x{p})")));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if x.iter().any(|v| !v.finite()) {
            return Err(Error::InvalidDataset("X has non-finite entries".into()));
        }
        if y.iter().any(|v| !v.finite()) {
            return Err(Error::InvalidDataset("Y has non-finite entries".into()));
        }
        if intercept && x.column(0).iter().any(|&v| v != T::one()) {
            return Err(Error::InvalidDataset(
                "intercept flagged but column 1 is not all ones".into(),
            ));
        }
        Ok(Self { x, y, intercept })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn y(&self) -> &DVector<T> {
        &self.y
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    /// Row `i` of `X` as a column vector.
    pub fn row(&self, i: usize) -> DVector<T> {
        self.x.row(i).transpose()
    }

    /// Penalty weights used when none are given: ones, with the intercept
    /// coordinate left unpenalized.
    pub fn default_weights(&self) -> DVector<T> {
        let mut w = DVector::from_element(self.p(), T::one());
        if self.intercept {
            w[0] = T::zero();
        }
        w
    }

    /// Dataset restricted to the given columns (in the given order).
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidArgument("empty column selection".into()));
        }
        if let Some(&bad) = columns.iter().find(|&&j| j >= self.p()) {
            return Err(Error::DimensionMismatch { expected: self.p(), found: bad + 1 });
        }
        let x = self.x.select_columns(columns);
        let intercept = self.intercept && columns[0] == 0;
        Self::new(x, self.y.clone(), intercept)
    }

    /// Empirical risk of the zero parameter, `(1/n)‖Y‖²`.
    pub fn risk_at_zero(&self) -> T {
        self.y.norm_squared() / T::count(self.n())
    }
}

/// Noise law of the simulated linear model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    Gaussian,
}

/// Gaussian linear model `Y = Xθ₀ + ε`, rows of the random part of `X`
/// drawn from `N(0, Σ)` and `ε ~ N(0, σ²)`.
///
/// With `intercept` set, a column of ones is prepended, so `theta0` has one
/// more entry than `Σ` has rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelSpec<T: Real> {
    theta0: DVector<T>,
    sigma: T,
    design_covariance: DMatrix<T>,
    design_factor: DMatrix<T>,
    noise: NoiseKind,
    intercept: bool,
}

impl<T: Real> LinearModelSpec<T> {
    pub fn new(
        theta0: DVector<T>,
        sigma: T,
        design_covariance: DMatrix<T>,
        intercept: bool,
    ) -> Result<Self> {
        let d = design_covariance.nrows();
        if design_covariance.ncols() != d {
            return Err(Error::InvalidSpec("design covariance must be square".into()));
        }
        let p = d + usize::from(intercept);
        if theta0.len() != p || p == 0 {
            return Err(Error::DimensionMismatch { expected: p, found: theta0.len() });
        }
        if !(sigma >= T::zero()) || !sigma.finite() {
            return Err(Error::InvalidSpec(format!("sigma must be finite and non-negative, got {sigma}")));
        }
        if theta0.iter().any(|v| !v.finite()) {
            return Err(Error::InvalidSpec("theta0 has non-finite entries".into()));
        }
        let symmetric = (0..d).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (design_covariance[(i, j)], design_covariance[(j, i)]);
                (a - b).abs() <= T::lit(1e-12) * (T::one() + a.abs().max(b.abs()))
            })
        });
        if !symmetric {
            return Err(Error::InvalidSpec("design covariance must be symmetric".into()));
        }
        let design_factor = if d == 0 {
            DMatrix::zeros(0, 0)
        } else {
            design_covariance
                .clone()
                .cholesky()
                .ok_or(Error::NotPositiveDefinite)?
                .l()
        };
        Ok(Self {
            theta0,
            sigma,
            design_covariance,
            design_factor,
            noise: NoiseKind::Gaussian,
            intercept,
        })
    }

    /// Identity design covariance, no intercept.
    pub fn isotropic(theta0: DVector<T>, sigma: T) -> Result<Self> {
        let p = theta0.len();
        Self::new(theta0, sigma, DMatrix::identity(p, p), false)
    }

    pub fn theta0(&self) -> &DVector<T> {
        &self.theta0
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn design_covariance(&self) -> &DMatrix<T> {
        &self.design_covariance
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn p(&self) -> usize {
        self.theta0.len()
    }

    /// Population second moment `E[x xᵀ]` of a full regressor row
    /// (including the intercept column when present).
    pub fn second_moment(&self) -> DMatrix<T> {
        let p = self.p();
        let mut m = DMatrix::zeros(p, p);
        let off = usize::from(self.intercept);
        if self.intercept {
            m[(0, 0)] = T::one();
        }
        m.view_mut((off, off), (p - off, p - off))
            .copy_from(&self.design_covariance);
        m
    }
}

/// Draws `n` observations from `spec`. A pure function of `(spec, n, seed)`.
///
/// Row by row, the random regressors are drawn first and the noise term
/// last, all from a single ChaCha8 stream seeded with `seed`.
pub fn generate_linear_data<T: Real>(spec: &LinearModelSpec<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let p = spec.p();
    let off = usize::from(spec.intercept);
    let d = p - off;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::<T>::zeros(n, p);
    let mut eps = DVector::<T>::zeros(n);
    let mut z = DVector::<T>::zeros(d);
    for i in 0..n {
        for k in 0..d {
            let draw: f64 = StandardNormal.sample(&mut rng);
            z[k] = T::lit(draw);
        }
        if off == 1 {
            x[(i, 0)] = T::one();
        }
        let row = &spec.design_factor * &z;
        for k in 0..d {
            x[(i, off + k)] = row[k];
        }
        let draw: f64 = StandardNormal.sample(&mut rng);
        eps[i] = T::lit(draw);
    }
    let y = &x * &spec.theta0 + eps * spec.sigma;
    Dataset::new(x, y, spec.intercept)
}

/// ℓ1 ball `{θ : ‖θ‖₁ ≤ bound}` containing every minimizer of the
/// penalized empirical risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterBox<T: Real> {
    bound: T,
    dim: usize,
}

impl<T: Real> ParameterBox<T> {
    pub fn new(bound: T, dim: usize) -> Result<Self> {
        if !(bound >= T::zero()) || !bound.finite() {
            return Err(Error::InvalidArgument(format!("box bound must be finite and >= 0, got {bound}")));
        }
        Ok(Self { bound, dim })
    }

    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, theta: &DVector<T>) -> bool {
        theta.lp_norm(1) <= self.bound
    }

    pub fn strictly_contains(&self, theta: &DVector<T>) -> bool {
        theta.lp_norm(1) < self.bound
    }

    /// Euclidean projection onto the ℓ1 ball (sort-based).
    pub fn project(&self, theta: &DVector<T>) -> DVector<T> {
        if self.contains(theta) {
            return theta.clone();
        }
        if self.bound == T::zero() {
            return DVector::zeros(theta.len());
        }
        let mut mags: Vec<T> = theta.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).expect("finite parameter"));
        let mut cumsum = T::zero();
        let mut shift = T::zero();
        for (k, &u) in mags.iter().enumerate() {
            cumsum += u;
            let candidate = (cumsum - self.bound) / T::count(k + 1);
            if u > candidate {
                shift = candidate;
            }
        }
        theta.map(|v| v.signum() * (v.abs() - shift).max(T::zero()))
    }
}

/// Bound on `‖θ̂‖₁` implied by `J(θ̂) ≤ R_emp(0)`, the inequality any
/// minimizer of empirical risk plus penalty satisfies.
///
/// * ℓ1-type (including the elastic net, whose ℓ1 part alone is coercive):
///   `B = R_emp(0) / (λ₁ w_min)`.
/// * smoothed ℓ1: uses `|t| tanh(m|t|) ≥ |t| − 1/(e m)`, giving
///   `B = (R_emp(0)/λ₁ + Σ_j w_j/(e m)) / w_min`.
/// * ridge: `B = sqrt(p R_emp(0) / (λ₂ w_min))`.
pub fn parameter_box<T: Real>(dataset: &Dataset<T>, penalty: &Penalty<T>) -> Result<ParameterBox<T>> {
    let p = dataset.p();
    let weights = penalty.weights_or_ones(p)?;
    let w_min = weights.iter().copied().reduce(|a, b| a.min(b)).unwrap_or_else(T::zero);
    let risk = dataset.risk_at_zero();
    let bound = match penalty.kind() {
        PenaltyKind::L1 | PenaltyKind::AdaptiveL1 | PenaltyKind::ElasticNet => {
            let lambda = penalty.lambda1();
            if lambda <= T::zero() || w_min <= T::zero() {
                return Err(Error::NoCoercivePenalty);
            }
            match penalty.smoothing() {
                None => risk / (lambda * w_min),
                Some(m) => {
                    let slack = weights.sum() / (T::e() * T::lit(f64::from(m)));
                    (risk / lambda + slack) / w_min
                }
            }
        }
        PenaltyKind::Ridge => {
            let lambda2 = penalty.lambda2();
            if lambda2 <= T::zero() || w_min <= T::zero() {
                return Err(Error::NoCoercivePenalty);
            }
            (T::count(p) * risk / (lambda2 * w_min)).sqrt()
        }
    };
    ParameterBox::new(bound, p)
}
