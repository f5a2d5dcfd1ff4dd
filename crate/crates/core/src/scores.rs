//! Squared-loss scores, the regularized Z-function and its Jacobian, and the
//! pairwise ranking U-statistic counterpart.
//!
//! Sign convention: the score is the θ-gradient of the loss, so
//! `Z_n(θ) = ∇[(1/n)‖Y − Xθ‖²] + ∇J(θ)`. Influence curves built from it are
//! unaffected by the convention because the Jacobian flips sign with it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::penalties::Penalty;
use crate::scalar::Real;

/// `2·x·(xᵀθ − y)`, the gradient of `(y − xᵀθ)²` in θ.
pub fn squared_loss_score<T: Real>(x: &DVector<T>, y: T, theta: &DVector<T>) -> DVector<T> {
    let residual = x.dot(theta) - y;
    x * (T::lit(2.0) * residual)
}

/// Gradient of the pairwise surrogate `((y_i − y_j) − (x_i − x_j)ᵀθ)²`.
pub fn ranking_score<T: Real>(
    xi: &DVector<T>,
    yi: T,
    xj: &DVector<T>,
    yj: T,
    theta: &DVector<T>,
) -> DVector<T> {
    let dx = xi - xj;
    let r = (yi - yj) - dx.dot(theta);
    dx * (T::lit(-2.0) * r)
}

fn check_dim<T: Real>(data: &Dataset<T>, theta: &DVector<T>) -> Result<()> {
    if theta.len() != data.p() {
        return Err(Error::DimensionMismatch { expected: data.p(), found: theta.len() });
    }
    Ok(())
}

/// Squared loss plus penalty on one dataset.
#[derive(Debug, Clone, Copy)]
pub struct ZSystem<'a, T: Real> {
    data: &'a Dataset<T>,
    penalty: &'a Penalty<T>,
}

impl<'a, T: Real> ZSystem<'a, T> {
    pub fn new(data: &'a Dataset<T>, penalty: &'a Penalty<T>) -> Self {
        Self { data, penalty }
    }

    pub fn data(&self) -> &'a Dataset<T> {
        self.data
    }

    pub fn penalty(&self) -> &'a Penalty<T> {
        self.penalty
    }

    fn inv_n(&self) -> T {
        T::one() / T::count(self.data.n())
    }

    /// `Xθ − Y`.
    pub fn residuals(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        check_dim(self.data, theta)?;
        Ok(self.data.x() * theta - self.data.y())
    }

    /// `(1/n)‖Y − Xθ‖² + J(θ)`.
    pub fn objective(&self, theta: &DVector<T>) -> Result<T> {
        let r = self.residuals(theta)?;
        Ok(r.norm_squared() * self.inv_n() + self.penalty.value(theta)?)
    }

    /// Per-observation scores as the columns of a p×n matrix.
    pub fn scores(&self, theta: &DVector<T>) -> Result<DMatrix<T>> {
        let r = self.residuals(theta)?;
        let mut s = self.data.x().transpose();
        for (i, mut col) in s.column_iter_mut().enumerate() {
            col *= T::lit(2.0) * r[i];
        }
        Ok(s)
    }

    /// `Z_n(θ) = (2/n)Xᵀ(Xθ − Y) + ∇J(θ)`.
    pub fn empirical_z(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        let r = self.residuals(theta)?;
        let grad = self.penalty.gradient(theta)?;
        Ok(self.data.x().tr_mul(&r) * (T::lit(2.0) * self.inv_n()) + grad)
    }

    /// `(2/n)XᵀX + ∇²J(θ)`.
    pub fn z_jacobian(&self, theta: &DVector<T>) -> Result<DMatrix<T>> {
        check_dim(self.data, theta)?;
        let mut jac = self.data.x().tr_mul(self.data.x()) * (T::lit(2.0) * self.inv_n());
        let h = self.penalty.hessian_diagonal(theta)?;
        for j in 0..h.len() {
            jac[(j, j)] += h[j];
        }
        Ok(jac)
    }
}

/// Pairwise ranking loss plus penalty:
/// `Z^r_n(θ) = 1/(n(n−1)) Σ_{i≠j} φ^r(i, j, θ) + ∇J(θ)`.
#[derive(Debug, Clone, Copy)]
pub struct RankingZSystem<'a, T: Real> {
    data: &'a Dataset<T>,
    penalty: &'a Penalty<T>,
}

impl<'a, T: Real> RankingZSystem<'a, T> {
    pub fn new(data: &'a Dataset<T>, penalty: &'a Penalty<T>) -> Result<Self> {
        if data.n() < 2 {
            return Err(Error::InvalidArgument("ranking Z-system needs at least 2 observations".into()));
        }
        Ok(Self { data, penalty })
    }

    pub fn data(&self) -> &'a Dataset<T> {
        self.data
    }

    pub fn penalty(&self) -> &'a Penalty<T> {
        self.penalty
    }

    fn pair_count(&self) -> T {
        let n = self.data.n();
        T::count(n) * T::count(n - 1)
    }

    /// Column sums `Σ_i x_i` and `Σ_i r_i` with `r_i = y_i − x_iᵀθ`.
    fn residual_moments(&self, theta: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
        check_dim(self.data, theta)?;
        let r = self.data.y() - self.data.x() * theta;
        Ok((r, self.data.x().row_sum().transpose()))
    }

    /// Pairwise objective `1/(n(n−1)) Σ_{i≠j} L^r + J(θ)`, via
    /// `Σ_{i,j} (r_i − r_j)² = 2n Σ r_i² − 2(Σ r_i)²`.
    pub fn objective(&self, theta: &DVector<T>) -> Result<T> {
        let (r, _) = self.residual_moments(theta)?;
        let n = T::count(self.data.n());
        let two = T::lit(2.0);
        let total = two * n * r.norm_squared() - two * r.sum() * r.sum();
        Ok(total / self.pair_count() + self.penalty.value(theta)?)
    }

    /// O(np) evaluation using
    /// `Σ_{i,j} (x_i − x_j)(r_i − r_j) = 2n Σ x_i r_i − 2 (Σ x_i)(Σ r_i)`.
    pub fn ranking_z(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        let (r, xsum) = self.residual_moments(theta)?;
        let n = T::count(self.data.n());
        let cross = self.data.x().tr_mul(&r) * n - xsum * r.sum();
        let scale = T::lit(-4.0) / self.pair_count();
        Ok(cross * scale + self.penalty.gradient(theta)?)
    }

    /// O(n²p) double sum over ordered pairs.
    pub fn ranking_z_direct(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        check_dim(self.data, theta)?;
        let n = self.data.n();
        let rows: Vec<DVector<T>> = (0..n).map(|i| self.data.row(i)).collect();
        let y = self.data.y();
        let mut acc = DVector::zeros(self.data.p());
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += ranking_score(&rows[i], y[i], &rows[j], y[j], theta);
                }
            }
        }
        Ok(acc / self.pair_count() + self.penalty.gradient(theta)?)
    }

    /// `4/(n(n−1)) [n XᵀX − (Σx)(Σx)ᵀ] + ∇²J(θ)`.
    pub fn ranking_jacobian(&self, theta: &DVector<T>) -> Result<DMatrix<T>> {
        check_dim(self.data, theta)?;
        let n = T::count(self.data.n());
        let xsum = self.data.x().row_sum().transpose();
        let gram = self.data.x().tr_mul(self.data.x()) * n - &xsum * xsum.transpose();
        let mut jac = gram * (T::lit(4.0) / self.pair_count());
        let h = self.penalty.hessian_diagonal(theta)?;
        for j in 0..h.len() {
            jac[(j, j)] += h[j];
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_linear_data, LinearModelSpec};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn sample_data(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        let theta0 = DVector::from_fn(p, |j, _| (j as f64) - 1.0);
        let spec = LinearModelSpec::isotropic(theta0, 1.0).unwrap();
        generate_linear_data(&spec, n, seed).unwrap()
    }

    #[test]
    fn score_examples() {
        assert_eq!(squared_loss_score(&v(&[1.0, 0.0]), 1.0, &v(&[1.0, 0.0])), v(&[0.0, 0.0]));
        assert_eq!(squared_loss_score(&v(&[1.0, 2.0]), 0.0, &v(&[1.0, 1.0])), v(&[6.0, 12.0]));
        let (x, th, y) = (v(&[0.3, -1.2]), v(&[2.0, 0.5]), 0.7);
        let flipped = 2.0 * x.dot(&th) - y;
        assert_eq!(squared_loss_score(&x, y, &th), -squared_loss_score(&x, flipped, &th));
    }

    #[test]
    fn score_matches_finite_differences() {
        let (x, y, th) = (v(&[1.0, 2.0]), 0.0, v(&[1.0, 1.0]));
        let loss = |t: &DVector<f64>| (y - x.dot(t)).powi(2);
        let h = 1e-6;
        for j in 0..2 {
            let mut a = th.clone();
            let mut b = th.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - squared_loss_score(&x, y, &th)[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn z_at_ols_is_zero() {
        let data = sample_data(60, 3, 1);
        let xtx = data.x().tr_mul(data.x());
        let ols = xtx.cholesky().unwrap().solve(&data.x().tr_mul(data.y()));
        let none = Penalty::none();
        let z = ZSystem::new(&data, &none).empirical_z(&ols).unwrap();
        assert!(z.amax() < 1e-12, "{z}");
    }

    #[test]
    fn z_at_origin_unpenalized() {
        let data = sample_data(25, 2, 2);
        let none = Penalty::none();
        let z = ZSystem::new(&data, &none).empirical_z(&DVector::zeros(2)).unwrap();
        let want = data.x().tr_mul(data.y()) * (-2.0 / 25.0);
        assert!((z - want).amax() < 1e-14);
    }

    #[test]
    fn ridge_z_is_affine() {
        let data = sample_data(30, 3, 3);
        let pen = Penalty::ridge(0.4);
        let zs = ZSystem::new(&data, &pen);
        let (a, b) = (v(&[1.0, -2.0, 0.5]), v(&[0.3, 0.1, -4.0]));
        let mid = (&a + &b) * 0.5;
        let lhs = zs.empirical_z(&mid).unwrap();
        let rhs = (zs.empirical_z(&a).unwrap() + zs.empirical_z(&b).unwrap()) * 0.5;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn jacobian_identity_design() {
        let x = DMatrix::<f64>::identity(2, 2);
        let data = Dataset::new(x, v(&[3.0, -1.0]), false).unwrap();
        let pen = Penalty::ridge(0.25);
        let jac = ZSystem::new(&data, &pen).z_jacobian(&v(&[5.0, 7.0])).unwrap();
        assert_eq!(jac, DMatrix::identity(2, 2) * 1.5);
    }

    #[test]
    fn unpenalized_jacobian_constant() {
        let data = sample_data(20, 3, 4);
        let none = Penalty::none();
        let zs = ZSystem::new(&data, &none);
        assert_eq!(zs.z_jacobian(&v(&[0.0, 0.0, 0.0])).unwrap(), zs.z_jacobian(&v(&[9.0, -3.0, 1.0])).unwrap());
    }

    #[test]
    fn l1_penalty_error_propagates() {
        let data = sample_data(10, 2, 5);
        let pen = Penalty::l1(0.5);
        let err = ZSystem::new(&data, &pen).empirical_z(&v(&[0.0, 1.0])).unwrap_err();
        assert_eq!(err, Error::SubgradientAmbiguity { coordinate: 0 });
    }

    #[test]
    fn ranking_score_examples() {
        let x = v(&[1.0, -2.0]);
        assert_eq!(ranking_score(&x, 3.0, &x, -1.0, &v(&[0.5, 0.5])), v(&[0.0, 0.0]));
        let (xi, xj, th) = (v(&[0.2, 1.0]), v(&[-1.0, 0.4]), v(&[1.5, -0.3]));
        assert_eq!(ranking_score(&xi, 2.0, &xj, -0.5, &th), ranking_score(&xj, -0.5, &xi, 2.0, &th));
    }

    #[test]
    fn ranking_n2_and_zero_residuals() {
        let data = Dataset::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, -1.0]), v(&[1.0, 3.0]), false).unwrap();
        let pen = Penalty::ridge(0.3);
        let rz = RankingZSystem::new(&data, &pen).unwrap();
        let th = v(&[0.7, -0.2]);
        let pair = ranking_score(&data.row(0), 1.0, &data.row(1), 3.0, &th) + pen.gradient(&th).unwrap();
        assert!((rz.ranking_z(&th).unwrap() - &pair).amax() < 1e-14);
        assert!((rz.ranking_z_direct(&th).unwrap() - pair).amax() < 1e-14);

        // y = Xθ exactly: every pairwise residual vanishes
        let th = v(&[1.0, 2.0]);
        let y = data.x() * &th;
        let exact = Dataset::new(data.x().clone(), y, false).unwrap();
        let none = Penalty::none();
        let rz = RankingZSystem::new(&exact, &none).unwrap();
        assert!(rz.ranking_z(&th).unwrap().amax() < 1e-14);
    }

    #[test]
    fn ranking_needs_two_rows() {
        let data = Dataset::new(DMatrix::from_row_slice(1, 1, &[1.0]), v(&[1.0]), false).unwrap();
        let none = Penalty::none();
        assert!(RankingZSystem::new(&data, &none).is_err());
    }

    #[test]
    fn z_jacobian_psd_for_convex_penalties() {
        let data = sample_data(15, 4, 6);
        for pen in [Penalty::none(), Penalty::ridge(0.5), Penalty::elastic_net(0.2, 0.1).smooth_approx(1).unwrap()] {
            let jac = ZSystem::new(&data, &pen).z_jacobian(&v(&[0.1, -0.2, 0.3, 0.0])).unwrap();
            let eig = jac.symmetric_eigenvalues();
            assert!(eig.min() >= -1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn empirical_z_is_objective_gradient(
            seed in 0u64..1000,
            theta in proptest::collection::vec(-2.0..2.0f64, 3),
            lambda in 0.0..1.0f64,
            m in 1u32..64,
        ) {
            let data = sample_data(20, 3, seed);
            let pen = Penalty::elastic_net(lambda, 0.3).smooth_approx(m).unwrap();
            let zs = ZSystem::new(&data, &pen);
            let theta = DVector::from_vec(theta);
            let z = zs.empirical_z(&theta).unwrap();
            let h = 1e-6 / m as f64;
            for j in 0..3 {
                let mut a = theta.clone();
                let mut b = theta.clone();
                a[j] += h;
                b[j] -= h;
                let fd = (zs.objective(&a).unwrap() - zs.objective(&b).unwrap()) / (2.0 * h);
                prop_assert!((fd - z[j]).abs() <= 1e-5 * (1.0 + z[j].abs()), "{} vs {}", fd, z[j]);
            }
        }

        #[test]
        fn ranking_shortcut_and_jacobian(
            seed in 0u64..1000,
            n in 2usize..20,
            theta in proptest::collection::vec(-2.0..2.0f64, 2),
        ) {
            let data = sample_data(n, 2, seed);
            let pen = Penalty::ridge(0.1);
            let rz = RankingZSystem::new(&data, &pen).unwrap();
            let theta = DVector::from_vec(theta);
            let fast = rz.ranking_z(&theta).unwrap();
            let slow = rz.ranking_z_direct(&theta).unwrap();
            prop_assert!((&fast - &slow).amax() <= 1e-10 * (1.0 + slow.amax()));
            let jac = rz.ranking_jacobian(&theta).unwrap();
            let h = 1e-6;
            for j in 0..2 {
                let mut a = theta.clone();
                let mut b = theta.clone();
                a[j] += h;
                b[j] -= h;
                let fd_obj = (rz.objective(&a).unwrap() - rz.objective(&b).unwrap()) / (2.0 * h);
                prop_assert!((fd_obj - fast[j]).abs() <= 1e-5 * (1.0 + fast[j].abs()));
                let col = (rz.ranking_z(&a).unwrap() - rz.ranking_z(&b).unwrap()) / (2.0 * h);
                for i in 0..2 {
                    prop_assert!((col[i] - jac[(i, j)]).abs() <= 1e-5 * (1.0 + jac[(i, j)].abs()));
                }
            }
        }
    }
}
