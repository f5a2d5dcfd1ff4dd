use std::collections::HashSet;

use ale_core::asymptotics::{mix_seed, remainder_scaling_experiment, Estimator, LambdaRule, MCConfig};
use ale_core::{
    adaptive_lasso, adaptive_lasso_ic_sample, elastic_net, generate_linear_data, influence_curve, lasso_cd, one_step,
    parameter_box, Dataset, LinearModelSpec, Penalty, SolverOptions, ZSystem,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spec(theta: Vec<f64>, sigma: f64) -> LinearModelSpec<f64> {
    LinearModelSpec::isotropic(DVector::from_vec(theta), sigma).unwrap()
}

fn theta_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2..6)
}

fn objective(data: &Dataset<f64>, pen: &Penalty<f64>, theta: &DVector<f64>) -> f64 {
    let r = data.y() - data.x() * theta;
    r.norm_squared() / data.n() as f64 + pen.value(theta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lasso_fit_in_box_and_kkt(theta in theta_strategy(), seed in 0u64..1000, lambda in 0.02..2.0f64) {
        let data = generate_linear_data(&spec(theta, 1.0), 60, seed).unwrap();
        let tol = 1e-10;
        let fit = lasso_cd(&data, lambda, &SolverOptions { tol, max_sweeps: 100_000 }).unwrap();
        prop_assert!(fit.converged);
        let pen = Penalty::l1(lambda);
        let bx = parameter_box(&data, &pen).unwrap();
        prop_assert!(bx.contains(&fit.theta_hat));
        prop_assert!(objective(&data, &pen, &fit.theta_hat) <= data.risk_at_zero() + 1e-12);
        prop_assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let grad = data.x().tr_mul(&(data.x() * &fit.theta_hat - data.y())) * (2.0 / 60.0);
        for j in 0..data.p() {
            prop_assert!(grad[j].abs() <= lambda + 10.0 * tol + 1e-8);
            if fit.theta_hat[j] != 0.0 {
                // stationarity on the active set: grad_j = −λ sign(θ_j)
                prop_assert!((grad[j] + lambda * fit.theta_hat[j].signum()).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn elastic_net_in_box(theta in theta_strategy(), seed in 0u64..1000, l1 in 0.05..1.0f64, l2 in 0.0..1.0f64) {
        let data = generate_linear_data(&spec(theta, 1.0), 50, seed).unwrap();
        let fit = elastic_net(&data, l1, l2, &SolverOptions::default()).unwrap();
        let pen = Penalty::elastic_net(l1, l2);
        prop_assert!(parameter_box(&data, &pen).unwrap().contains(&fit.theta_hat));
        prop_assert!(objective(&data, &pen, &fit.theta_hat) <= data.risk_at_zero() + 1e-12);
    }

    #[test]
    fn generator_is_pure(theta in theta_strategy(), seed: u64, n in 1usize..50) {
        let s = spec(theta, 0.7);
        prop_assert_eq!(generate_linear_data(&s, n, seed).unwrap(), generate_linear_data(&s, n, seed).unwrap());
    }

    #[test]
    fn influence_curve_solves_jacobian_system(theta in theta_strategy(), seed in 0u64..1000, lambda in 0.0..1.0f64) {
        let data = generate_linear_data(&spec(theta.clone(), 1.0), 40, seed).unwrap();
        let pen = Penalty::l1(lambda).smooth_approx(8).unwrap();
        let reference = DVector::from_vec(theta);
        let ic = influence_curve(&data, &reference, &pen).unwrap();
        let zs = ZSystem::new(&data, &pen);
        let scores = zs.scores(&reference).unwrap();
        let grad = pen.gradient(&reference).unwrap();
        for i in 0..data.n() {
            let rhs = scores.column(i) + &grad;
            let lhs = -(&ic.jacobian_used * ic.psi.row(i).transpose());
            prop_assert!((lhs - &rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn unpenalized_mean_psi_is_newton_correction(theta in theta_strategy(), seed in 0u64..1000) {
        let data = generate_linear_data(&spec(theta.clone(), 1.0), 40, seed).unwrap();
        let reference = DVector::from_vec(theta).map(|t| t + 0.3);
        let ic = influence_curve(&data, &reference, &Penalty::none()).unwrap();
        let z = ZSystem::new(&data, &Penalty::none()).empirical_z(&reference).unwrap();
        let want = -ic.jacobian_used.clone().lu().solve(&z).unwrap();
        prop_assert!((ic.mean() - want).amax() <= 1e-10);
    }

    #[test]
    fn one_step_permutation_equivariant(theta in theta_strategy(), seed in 0u64..1000, shift in 1usize..5) {
        let p = theta.len();
        let data = generate_linear_data(&spec(theta.clone(), 1.0), 40, seed).unwrap();
        let weights = DVector::from_fn(p, |j, _| 0.5 + j as f64);
        let start = DVector::from_vec(theta).map(|t| 0.8 * t + 0.1);
        let perm: Vec<usize> = (0..p).map(|j| (j + shift) % p).collect();
        let pen = Penalty::l1(0.3).with_weights(weights.clone()).smooth_approx(16).unwrap();
        let out = one_step(&start, &data, &pen).unwrap();
        let pdata = Dataset::new(data.x().select_columns(&perm), data.y().clone(), false).unwrap();
        let ppen = Penalty::l1(0.3).with_weights(weights.select_rows(&perm)).smooth_approx(16).unwrap();
        let pout = one_step(&start.select_rows(&perm), &pdata, &ppen).unwrap();
        prop_assert!((pout - out.select_rows(&perm)).amax() <= 1e-10 * out.amax().max(1.0));
    }

    #[test]
    fn adaptive_ic_support_in_final_active_set(seed in 0u64..1000, lambda in 0.05..0.8f64) {
        let data = generate_linear_data(&spec(vec![2.0, 0.0, -1.0, 0.0, 0.5], 1.0), 50, seed).unwrap();
        let (init, fin) = adaptive_lasso(&data, lambda, &SolverOptions::default()).unwrap();
        let psi = adaptive_lasso_ic_sample(&data, &init, &fin, lambda, 32).unwrap();
        for j in 0..data.p() {
            if fin.theta_hat[j] == 0.0 {
                prop_assert!(psi.column(j).iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn seed_streams_never_collide() {
    let mut seen = HashSet::new();
    for master in [0u64, 1, 42, u64::MAX] {
        seen.clear();
        for n in [100usize, 200, 400, 800, 1600, 3200, 6400] {
            for r in 0..1000 {
                assert!(seen.insert(mix_seed(master, n, r)), "collision at master {master}, n {n}, rep {r}");
            }
        }
    }
}

#[test]
fn reports_are_self_auditing_and_pure() {
    let mut cfg = MCConfig::new(spec(vec![1.0, 0.0, -1.0], 1.0), vec![50, 100, 200, 400], 100, Estimator::Ridge);
    cfg.lambda = LambdaRule::Fixed(0.2);
    let report = remainder_scaling_experiment(&cfg).unwrap();
    let audited = report.audit().unwrap();
    assert_eq!(report.verdicts, audited.verdicts);
    assert_eq!(report.per_n, audited.per_n);
    assert_eq!(report.slope, audited.slope);
    let again = remainder_scaling_experiment(&cfg).unwrap();
    assert_eq!(report.records, again.records);
    assert_eq!(report.verdicts, again.verdicts);
}

#[test]
fn f32_and_f64_cores_agree() {
    let s64 = spec(vec![1.5, -0.5], 1.0);
    let data = generate_linear_data(&s64, 50, 3).unwrap();
    let x32: DMatrix<f32> = data.x().map(|v| v as f32);
    let y32: DVector<f32> = data.y().map(|v| v as f32);
    let d32 = Dataset::new(x32, y32, false).unwrap();
    let f64fit = lasso_cd(&data, 0.2, &SolverOptions::default()).unwrap();
    let f32fit = lasso_cd(&d32, 0.2f32, &SolverOptions { tol: 1e-6, max_sweeps: 10_000 }).unwrap();
    for j in 0..2 {
        assert!((f64fit.theta_hat[j] - f64::from(f32fit.theta_hat[j])).abs() < 1e-4);
    }
}
