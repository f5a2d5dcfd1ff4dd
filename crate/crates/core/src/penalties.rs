//! Separable convex penalties `J_λ`, their hyperbolic-tangent smoothing and
//! quadrature diagnostics of the smoothing error.
//!
//! Every penalty is a weighted sum over coordinates
//! `J(θ) = Σ_j w_j (λ₁ a(θ_j) + λ₂ θ_j²)` where `a(t) = |t|` for the exact
//! ℓ1 part and `a(t) = t·tanh(m t)` once smoothed with index `m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::format_real;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyKind {
    L1,
    Ridge,
    ElasticNet,
    AdaptiveL1,
}

/// Result of [`Penalty::evaluate`] for derivative orders 0, 1 and 2.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyValue<T: Real> {
    Value(T),
    Gradient(DVector<T>),
    Hessian(DMatrix<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Penalty<T: Real> {
    kind: PenaltyKind,
    lambda1: T,
    lambda2: T,
    weights: Option<DVector<T>>,
    smoothing: Option<u32>,
}

impl<T: Real> Penalty<T> {
    /// The absent penalty (`J ≡ 0`); smooth.
    pub fn none() -> Self {
        Self::ridge(T::zero())
    }

    pub fn l1(lambda: T) -> Self {
        Self { kind: PenaltyKind::L1, lambda1: lambda, lambda2: T::zero(), weights: None, smoothing: None }
    }

    pub fn ridge(lambda2: T) -> Self {
        Self { kind: PenaltyKind::Ridge, lambda1: T::zero(), lambda2, weights: None, smoothing: None }
    }

    pub fn elastic_net(lambda1: T, lambda2: T) -> Self {
        Self { kind: PenaltyKind::ElasticNet, lambda1, lambda2, weights: None, smoothing: None }
    }

    /// Weighted ℓ1 with per-coordinate weights, typically `1/|β̂_j^init|`.
    pub fn adaptive_l1(lambda: T, weights: DVector<T>) -> Self {
        Self {
            kind: PenaltyKind::AdaptiveL1,
            lambda1: lambda,
            lambda2: T::zero(),
            weights: Some(weights),
            smoothing: None,
        }
    }

    /// Replaces the per-coordinate weights (default all ones).
    pub fn with_weights(mut self, weights: DVector<T>) -> Self {
        self.weights = Some(weights);
        self
    }

    /// Smooth version of an ℓ1-type penalty: each `|t|` becomes `t·tanh(m t)`.
    ///
    /// The elastic net is accepted too; only its ℓ1 part is smoothed.
    pub fn smooth_approx(&self, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("smoothing index m must be >= 1".into()));
        }
        if self.kind == PenaltyKind::Ridge {
            return Err(Error::InvalidArgument("ridge penalty is already smooth".into()));
        }
        Ok(Self { smoothing: Some(m), ..self.clone() })
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn lambda1(&self) -> T {
        self.lambda1
    }

    pub fn lambda2(&self) -> T {
        self.lambda2
    }

    pub fn weights(&self) -> Option<&DVector<T>> {
        self.weights.as_ref()
    }

    pub fn smoothing(&self) -> Option<u32> {
        self.smoothing
    }

    /// Differentiable everywhere: no exact ℓ1 part is left.
    pub fn is_smooth(&self) -> bool {
        self.smoothing.is_some() || self.lambda1 == T::zero()
    }

    /// Identically zero penalty.
    pub fn is_zero(&self) -> bool {
        self.lambda1 == T::zero() && self.lambda2 == T::zero()
    }

    /// For smoothed penalties, the radius `u*/m` (with `u* tanh u* = 1`)
    /// inside which `t·tanh(m t)` is convex. `None` for exact penalties,
    /// which are convex everywhere.
    pub fn convex_radius(&self) -> Option<T> {
        self.smoothing.map(|m| T::lit(TANH_CONVEX_EDGE) / T::lit(f64::from(m)))
    }

    pub fn weights_or_ones(&self, p: usize) -> Result<DVector<T>> {
        match &self.weights {
            Some(w) if w.len() != p => Err(Error::DimensionMismatch { expected: w.len(), found: p }),
            Some(w) => Ok(w.clone()),
            None => Ok(DVector::from_element(p, T::one())),
        }
    }

    fn validate(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        if self.lambda1 < T::zero() || self.lambda2 < T::zero() {
            return Err(Error::InvalidArgument("penalty levels must be non-negative".into()));
        }
        let w = self.weights_or_ones(theta.len())?;
        if w.iter().any(|&v| v < T::zero() || !v.finite()) {
            return Err(Error::InvalidArgument("penalty weights must be finite and non-negative".into()));
        }
        Ok(w)
    }

    /// `J(θ)`.
    pub fn value(&self, theta: &DVector<T>) -> Result<T> {
        let w = self.validate(theta)?;
        let mut total = T::zero();
        for (j, &t) in theta.iter().enumerate() {
            let l1 = match self.smoothing {
                Some(m) => smooth_abs(t, m),
                None => t.abs(),
            };
            total += w[j] * (self.lambda1 * l1 + self.lambda2 * t * t);
        }
        Ok(total)
    }

    /// `∇J(θ)`; for the exact ℓ1 part, an error at any penalized zero coordinate.
    pub fn gradient(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        let w = self.validate(theta)?;
        let two = T::lit(2.0);
        let mut g = DVector::zeros(theta.len());
        for (j, &t) in theta.iter().enumerate() {
            if w[j] == T::zero() {
                continue;
            }
            let l1 = if self.lambda1 == T::zero() {
                T::zero()
            } else {
                match self.smoothing {
                    Some(m) => smooth_abs_d1(t, m),
                    None if t == T::zero() => return Err(Error::SubgradientAmbiguity { coordinate: j }),
                    None => t.signum(),
                }
            };
            g[j] = w[j] * (self.lambda1 * l1 + two * self.lambda2 * t);
        }
        Ok(g)
    }

    /// Diagonal Hessian of `J` at `θ`.
    pub fn hessian(&self, theta: &DVector<T>) -> Result<DMatrix<T>> {
        Ok(DMatrix::from_diagonal(&self.hessian_diagonal(theta)?))
    }

    pub fn hessian_diagonal(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        let w = self.validate(theta)?;
        let two = T::lit(2.0);
        let mut h = DVector::zeros(theta.len());
        for (j, &t) in theta.iter().enumerate() {
            if w[j] == T::zero() {
                continue;
            }
            let l1 = if self.lambda1 == T::zero() {
                T::zero()
            } else {
                match self.smoothing {
                    Some(m) => smooth_abs_d2(t, m),
                    None if t == T::zero() => return Err(Error::SubgradientAmbiguity { coordinate: j }),
                    None => T::zero(),
                }
            };
            h[j] = w[j] * (self.lambda1 * l1 + two * self.lambda2);
        }
        Ok(h)
    }

    /// Order-dispatched evaluation: 0 → value, 1 → gradient, 2 → Hessian.
    pub fn evaluate(&self, theta: &DVector<T>, order: u8) -> Result<PenaltyValue<T>> {
        match order {
            0 => self.value(theta).map(PenaltyValue::Value),
            1 => self.gradient(theta).map(PenaltyValue::Gradient),
            2 => self.hessian(theta).map(PenaltyValue::Hessian),
            other => Err(Error::InvalidArgument(format!("derivative order {other} not in {{0,1,2}}"))),
        }
    }
}

/// Positive root of `u·tanh(u) = 1`.
const TANH_CONVEX_EDGE: f64 = 1.199_678_640_257_734;

/// `t·tanh(m t)`.
pub fn smooth_abs<T: Real>(t: T, m: u32) -> T {
    let mt = T::lit(f64::from(m)) * t;
    t * mt.tanh()
}

/// `d/dt [t·tanh(m t)] = tanh(m t) + m t sech²(m t)`.
pub fn smooth_abs_d1<T: Real>(t: T, m: u32) -> T {
    let mt = T::lit(f64::from(m)) * t;
    let th = mt.tanh();
    th + mt * sech2(mt)
}

/// `d²/dt² [t·tanh(m t)] = 2m sech²(m t)(1 − m t tanh(m t))`.
pub fn smooth_abs_d2<T: Real>(t: T, m: u32) -> T {
    let mf = T::lit(f64::from(m));
    let mt = mf * t;
    T::lit(2.0) * mf * sech2(mt) * (T::one() - mt * mt.tanh())
}

fn sech2<T: Real>(u: T) -> T {
    let c = u.cosh();
    if c.finite() {
        T::one() / (c * c)
    } else {
        T::zero()
    }
}

/// Symmetric evaluation grid `[−bound, bound]` with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevGrid<T: Real> {
    pub bound: T,
    pub step: T,
}

impl<T: Real> SobolevGrid<T> {
    /// Default grid for a box bound `B`: step `B/1000`.
    pub fn for_bound(bound: T) -> Self {
        Self { bound, step: bound / T::lit(1000.0) }
    }
}

/// Squared `L²` distances between `λ t·tanh(m t)` and `λ|t|` and between
/// their first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevReport<T: Real> {
    pub m: u32,
    pub lambda: T,
    pub order0: T,
    pub order1: T,
    pub order2: T,
    pub grid: SobolevGrid<T>,
    pub exclude_radius: T,
}

impl<T: Real> SobolevReport<T> {
    pub const CSV_HEADER: &'static str = "m,lambda,order0,order1,order2,exclude_radius";

    /// `m,lambda,order0,order1,order2,exclude_radius`
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.m,
            format_real(self.lambda),
            format_real(self.order0),
            format_real(self.order1),
            format_real(self.order2),
            format_real(self.exclude_radius)
        )
    }
}

/// Composite-Simpson distances between the smoothed and exact ℓ1 penalty on
/// `[−B, −r] ∪ [r, B]`, reported per derivative order.
///
/// Away from the origin `λ|·|` has second derivative 0; the excluded
/// neighbourhood of radius `r` is left out for every order. The integrands
/// are even, so only `[r, B]` is integrated and the result doubled. The
/// actual spacing is the largest `h ≤ step` dividing `B − r` evenly.
pub fn sobolev_distance<T: Real>(
    m: u32,
    lambda: T,
    grid: SobolevGrid<T>,
    exclude_radius: T,
) -> Result<SobolevReport<T>> {
    if m == 0 {
        return Err(Error::InvalidArgument("smoothing index m must be >= 1".into()));
    }
    if !(grid.bound > T::zero()) || !(grid.step > T::zero()) {
        return Err(Error::InvalidArgument("grid bound and step must be positive".into()));
    }
    if exclude_radius < T::zero() || exclude_radius >= grid.bound {
        return Err(Error::InvalidArgument(format!(
            "exclude radius {exclude_radius} must lie in [0, {})",
            grid.bound
        )));
    }
    if lambda < T::zero() {
        return Err(Error::InvalidArgument("lambda must be non-negative".into()));
    }
    let span = grid.bound - exclude_radius;
    // composite Simpson needs an even interval count
    let mut intervals = (span / grid.step).ceil().to_usize().unwrap_or(2).max(2);
    intervals += intervals % 2;
    let h = span / T::count(intervals);
    let third = h / T::lit(3.0);
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let mut acc = [T::zero(); 3];
    for k in 0..=intervals {
        let t = exclude_radius + h * T::count(k);
        let wt = if k == 0 || k == intervals {
            third
        } else if k % 2 == 1 {
            four * third
        } else {
            two * third
        };
        let d0 = lambda * (smooth_abs(t, m) - t);
        let d1 = lambda * (smooth_abs_d1(t, m) - T::one());
        let d2 = lambda * smooth_abs_d2(t, m);
        acc[0] += wt * d0 * d0;
        acc[1] += wt * d1 * d1;
        acc[2] += wt * d2 * d2;
    }
    Ok(SobolevReport {
        m,
        lambda,
        order0: two * acc[0],
        order1: two * acc[1],
        order2: two * acc[2],
        grid,
        exclude_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn central_diff(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    #[test]
    fn zero_at_origin() {
        let zero = v(&[0.0, 0.0, 0.0]);
        let penalties = [
            Penalty::l1(1.3),
            Penalty::ridge(0.7),
            Penalty::elastic_net(1.0, 2.0),
            Penalty::adaptive_l1(1.0, v(&[1.0, 2.0, 0.5])),
            Penalty::l1(1.0).smooth_approx(16).unwrap(),
        ];
        for pen in &penalties {
            assert_eq!(pen.value(&zero).unwrap(), 0.0);
        }
    }

    #[test]
    fn ridge_hand_values() {
        let pen = Penalty::ridge(1.0);
        let theta = v(&[1.0, 2.0]);
        assert_eq!(pen.evaluate(&theta, 0).unwrap(), PenaltyValue::Value(5.0));
        assert_eq!(pen.evaluate(&theta, 1).unwrap(), PenaltyValue::Gradient(v(&[2.0, 4.0])));
        assert_eq!(
            pen.evaluate(&theta, 2).unwrap(),
            PenaltyValue::Hessian(DMatrix::from_diagonal(&v(&[2.0, 2.0])))
        );
        assert!(pen.evaluate(&theta, 3).is_err());
    }

    #[test]
    fn l1_gradient_is_sign() {
        let pen = Penalty::l1(1.0);
        let theta = v(&[1.0, -2.0]);
        let g = pen.gradient(&theta).unwrap();
        assert_eq!(g, v(&[1.0, -1.0]));
        for j in 0..2 {
            let fd = central_diff(
                |t| {
                    let mut th = theta.clone();
                    th[j] = t;
                    pen.value(&th).unwrap()
                },
                theta[j],
                1e-5,
            );
            assert!((fd - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn l1_gradient_at_zero_is_an_error() {
        let pen = Penalty::l1(1.0);
        let err = pen.gradient(&v(&[1.0, 0.0])).unwrap_err();
        assert_eq!(err, Error::SubgradientAmbiguity { coordinate: 1 });
        assert!(err.to_string().contains("use smooth approximation"));
        assert!(pen.hessian(&v(&[0.0, 1.0])).is_err());
        // an unpenalized zero coordinate is fine
        let masked = Penalty::l1(1.0).with_weights(v(&[0.0, 1.0]));
        assert_eq!(masked.gradient(&v(&[0.0, 2.0])).unwrap(), v(&[0.0, 1.0]));
    }

    #[test]
    fn smooth_approx_values() {
        let pen = Penalty::l1(1.0).smooth_approx(100).unwrap();
        assert!(pen.is_smooth());
        assert!((pen.value(&v(&[1.0])).unwrap() - 1.0).abs() < 1e-8);
        assert_eq!(pen.value(&v(&[0.0])).unwrap(), 0.0);
        assert!(pen.gradient(&v(&[0.0])).unwrap()[0] == 0.0);
        assert!(Penalty::<f64>::l1(1.0).smooth_approx(0).is_err());
        assert!(Penalty::<f64>::ridge(1.0).smooth_approx(4).is_err());
    }

    #[test]
    fn smooth_approx_error_bound_on_grid() {
        for m in [1u32, 4, 16, 64, 256] {
            let lambda = 0.8;
            let w = 1.7;
            let pen = Penalty::l1(lambda).smooth_approx(m).unwrap().with_weights(v(&[w]));
            for k in -2000..=2000 {
                let t = k as f64 * 0.0025;
                let approx = pen.value(&v(&[t])).unwrap();
                let exact = lambda * w * t.abs();
                let ulp = 4.0 * f64::EPSILON * exact;
                assert!(approx <= exact + ulp);
                let bound = lambda * w * 2.0 * t.abs() * (-2.0 * m as f64 * t.abs()).exp();
                assert!(exact - approx <= bound + ulp, "m={m} t={t}");
            }
        }
    }

    #[test]
    fn smooth_is_not_convex_beyond_radius() {
        // t tanh(t) bends down past u* ≈ 1.1997
        let pen = Penalty::l1(1.0).smooth_approx(1).unwrap();
        let f = |t: f64| pen.value(&v(&[t])).unwrap();
        assert!(f(2.5) > 0.5 * (f(1.5) + f(3.5)));
        assert!((pen.convex_radius().unwrap() * (pen.convex_radius().unwrap()).tanh() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f32_evaluation() {
        let pen = Penalty::<f32>::elastic_net(1.0, 0.5);
        let theta = DVector::from_vec(vec![1.0f32, -2.0]);
        assert_eq!(pen.value(&theta).unwrap(), 3.0 + 0.5 * 5.0);
        let g = pen.gradient(&theta).unwrap();
        assert_eq!(g.as_slice(), &[2.0f32, -3.0]);
    }

    #[test]
    fn sobolev_zero_lambda() {
        let r = sobolev_distance(8, 0.0, SobolevGrid { bound: 1.0, step: 1e-3 }, 0.1).unwrap();
        assert_eq!((r.order0, r.order1, r.order2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sobolev_errors() {
        let grid = SobolevGrid { bound: 1.0, step: 1e-3 };
        assert!(sobolev_distance(8, 1.0, grid, 1.0).is_err());
        assert!(sobolev_distance(8, 1.0, grid, 2.0).is_err());
        assert!(sobolev_distance(8, 1.0, SobolevGrid { bound: 1.0, step: 0.0 }, 0.1).is_err());
        assert!(sobolev_distance(0, 1.0, grid, 0.1).is_err());
    }

    #[test]
    fn sobolev_csv_row() {
        let r = sobolev_distance(4, 1.0, SobolevGrid { bound: 1.0, step: 0.5 }, 0.0).unwrap();
        let row = r.csv_row();
        assert!(row.starts_with("4,1,"));
        assert_eq!(row.split(',').count(), 6);
    }

    /// Simpson's rule on the closed-form pieces, written independently of the
    /// library quadrature, at a 20x finer step.
    fn simpson_oracle(m: f64, lambda: f64, bound: f64, r: f64) -> [f64; 3] {
        let k = 40_000usize;
        let h = (bound - r) / k as f64;
        let f = |t: f64| {
            let u = m * t;
            let th = u.tanh();
            let s2 = 1.0 / u.cosh().powi(2);
            [
                (lambda * (t * th - t)).powi(2),
                (lambda * (th + u * s2 - 1.0)).powi(2),
                (lambda * 2.0 * m * s2 * (1.0 - u * th)).powi(2),
            ]
        };
        let mut acc = [0.0; 3];
        for i in 0..=k {
            let c = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let v = f(r + h * i as f64);
            for o in 0..3 {
                acc[o] += c * v[o];
            }
        }
        acc.map(|a| 2.0 * a * h / 3.0)
    }

    #[test]
    fn sobolev_matches_fine_oracle_and_decreases() {
        let grid = SobolevGrid { bound: 1.0, step: 1e-3 };
        let mut prev: Option<SobolevReport<f64>> = None;
        for m in [4u32, 8, 16, 32, 64, 128, 256] {
            let r = sobolev_distance(m, 1.0, grid, 0.1).unwrap();
            let o = simpson_oracle(m as f64, 1.0, 1.0, 0.1);
            for (got, want) in [r.order0, r.order1, r.order2].iter().zip(o.iter()) {
                assert!((got - want).abs() <= 1e-3 * want.abs() + 1e-14, "m={m}: {got} vs {want}");
            }
            if let Some(p) = prev {
                assert!(r.order0 < p.order0 || r.order0 == 0.0);
                assert!(r.order1 < p.order1 || r.order1 == 0.0);
            }
            prev = Some(r);
        }
        let r8 = sobolev_distance(8, 1.0, grid, 0.1).unwrap();
        let r64 = sobolev_distance(64, 1.0, grid, 0.1).unwrap();
        assert!(r8.order1 > r64.order1);
    }

    fn random_penalties() -> impl Strategy<Value = Penalty<f64>> {
        prop_oneof![
            (0.0..3.0f64).prop_map(Penalty::l1),
            (0.0..3.0f64).prop_map(Penalty::ridge),
            (0.0..3.0f64, 0.0..3.0f64).prop_map(|(a, b)| Penalty::elastic_net(a, b)),
            (0.0..3.0f64, proptest::collection::vec(0.0..4.0f64, 3))
                .prop_map(|(a, w)| Penalty::adaptive_l1(a, DVector::from_vec(w))),
        ]
    }

    fn smooth_penalties() -> impl Strategy<Value = Penalty<f64>> {
        (
            0.01..3.0f64,
            0.0..2.0f64,
            1u32..128,
            proptest::collection::vec(0.1..4.0f64, 3),
        )
            .prop_map(|(l1, l2, m, w)| {
                Penalty::elastic_net(l1, l2).smooth_approx(m).unwrap().with_weights(DVector::from_vec(w))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn smooth_derivatives_match_finite_differences(
            pen in smooth_penalties(),
            theta in proptest::collection::vec(-3.0..3.0f64, 3),
        ) {
            let theta = DVector::from_vec(theta);
            let g = pen.gradient(&theta).unwrap();
            let hd = pen.hessian_diagonal(&theta).unwrap();
            for j in 0..3 {
                let at = |t: f64| { let mut th = theta.clone(); th[j] = t; th };
                let m = pen.smoothing().unwrap() as f64;
                let fd_g = central_diff(|t| pen.value(&at(t)).unwrap(), theta[j], 1e-5 / m);
                let fd_h = central_diff(|t| pen.gradient(&at(t)).unwrap()[j], theta[j], 1e-6 / m);
                prop_assert!((fd_g - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()), "grad {} vs {}", fd_g, g[j]);
                prop_assert!((fd_h - hd[j]).abs() <= 1e-6 * (1.0 + hd[j].abs()), "hess {} vs {}", fd_h, hd[j]);
            }
        }

        #[test]
        fn penalties_are_midpoint_convex(
            pen in random_penalties(),
            a in proptest::collection::vec(-5.0..5.0f64, 3),
            b in proptest::collection::vec(-5.0..5.0f64, 3),
        ) {
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            let mid = (&a + &b) * 0.5;
            let lhs = pen.value(&mid).unwrap();
            let rhs = 0.5 * (pen.value(&a).unwrap() + pen.value(&b).unwrap());
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()));
            prop_assert!(pen.value(&a).unwrap() >= 0.0);
        }

        #[test]
        fn smoothed_penalty_convex_inside_radius(
            m in 1u32..256,
            lambda in 0.0..3.0f64,
            a in proptest::collection::vec(-1.0..1.0f64, 3),
            b in proptest::collection::vec(-1.0..1.0f64, 3),
        ) {
            let pen = Penalty::l1(lambda).smooth_approx(m).unwrap();
            let r = pen.convex_radius().unwrap();
            let (a, b) = (DVector::from_vec(a) * r, DVector::from_vec(b) * r);
            let mid = (&a + &b) * 0.5;
            let lhs = pen.value(&mid).unwrap();
            let rhs = 0.5 * (pen.value(&a).unwrap() + pen.value(&b).unwrap());
            prop_assert!(lhs <= rhs + 1e-14);
        }

        #[test]
        fn smoothed_penalty_is_even(m in 1u32..512, t in -10.0..10.0f64) {
            let pen = Penalty::l1(1.0).smooth_approx(m).unwrap();
            prop_assert_eq!(pen.value(&v(&[t])).unwrap(), pen.value(&v(&[-t])).unwrap());
        }
    }
}
