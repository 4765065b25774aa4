mod common;

use approx::assert_relative_eq;
use common::{random_instance, random_spd, rel_err, rng, with_radius};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use regretlab::experiment::random_unit_signal;
use regretlab::linalg::{max_eigenvalue, min_eigenvalue, spectral_norm, spectral_radius};
use regretlab::offline::open_loop_cost;
use regretlab::riccati::{hinf_riccati_finite, DEFAULT_TOL};
use regretlab::{
    batch_oracle, ce_policy, cost_to_go_coeffs, dynamic_regret, find_gamma_lower, gelfand_constant, offline_finite,
    offline_infinite, simulate, solve_dare, solve_finite_lqr, worst_case_disturbance, CoeffController, CostSpec32,
    CostSpec64, Horizon, Plant32, Plant64, Prediction, Signal64,
};

fn scalar(x0: f64) -> (Plant64, CostSpec64) {
    (Plant64::scalar(1.0, 1.0, x0), CostSpec64::scalar(1.0, 1.0, 1.0, x0.abs()).unwrap())
}

fn psd_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    min_eigenvalue(&(a - b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dare_iterates_increase_from_zero(seed in any::<u64>()) {
        let inst = random_instance(seed, 3, 2, 1);
        let n = inst.plant.n();
        let cost = inst.cost.with_terminal(DMatrix::zeros(n, n)).unwrap();
        let lqr = solve_finite_lqr(&inst.plant, &cost, 40).unwrap();
        let dare = solve_dare(&inst.plant, &cost, DEFAULT_TOL).unwrap();
        let scale = 1e-9 * (1.0 + max_eigenvalue(&dare.p));
        for t in (0..40).rev() {
            prop_assert!(psd_gap(&lqr.p[t], &lqr.p[t + 1]) >= -scale);
            prop_assert!(psd_gap(&dare.p, &lqr.p[t]) >= -scale);
        }
    }

    #[test]
    fn attenuation_value_decreases_in_gamma(seed in any::<u64>(), factor in 1.05f64..3.0) {
        let inst = random_instance(seed, 3, 2, 1);
        let horizon = 10;
        let g1 = 1.01 * find_gamma_lower(&inst.plant, &inst.cost, Horizon::Finite(horizon), 1e-9).unwrap();
        let g2 = factor * g1;
        let m1 = hinf_riccati_finite(&inst.plant, &inst.cost, g1, horizon).unwrap();
        let m2 = hinf_riccati_finite(&inst.plant, &inst.cost, g2, horizon).unwrap();
        prop_assert!(m1.feasible && m2.feasible);
        let scale = 1e-9 * (1.0 + max_eigenvalue(m1.m0()));
        prop_assert!(psd_gap(m1.m0(), m2.m0()) >= -scale);
    }

    #[test]
    fn recursion_and_batch_inputs_agree(seed in any::<u64>(), horizon in 1usize..=20) {
        let inst = random_instance(seed, 3, 2, horizon);
        let rec = offline_finite(&inst.plant, &inst.cost, &inst.w, horizon).unwrap();
        let batch = batch_oracle(&inst.plant, &inst.cost, &inst.w, horizon).unwrap();
        let du = (rec.inputs().as_matrix() - batch.inputs.as_matrix()).norm();
        prop_assert!(du <= 1e-6 * (1.0 + batch.inputs.energy()), "input gap {du:e}");
        let grad = batch.quadratic.gradient(&rec.inputs().stacked());
        prop_assert!(grad.norm() <= 1e-7 * (1.0 + batch.quadratic.hessian.norm() * rec.inputs().energy()));
        prop_assert!(rec.trajectory.recursion_residual(&inst.plant) <= 1e-12);
    }

    #[test]
    fn infinite_offline_matches_finite_with_stationary_terminal(seed in any::<u64>(), horizon in 1usize..=20) {
        let inst = random_instance(seed, 3, 2, horizon);
        let dare = solve_dare(&inst.plant, &inst.cost, DEFAULT_TOL).unwrap();
        let finite_cost = inst.cost.with_terminal(dare.p.clone()).unwrap();
        let inf = offline_infinite(&inst.plant, &inst.cost, &inst.w).unwrap();
        let fin = offline_finite(&inst.plant, &finite_cost, &inst.w, horizon).unwrap();
        prop_assert!(rel_err(inf.cost, fin.cost) <= 1e-7, "{} vs {}", inf.cost, fin.cost);
    }

    #[test]
    fn ce_regret_is_nonnegative_and_exact_prediction_is_optimal(seed in any::<u64>(), sigma in 0.0f64..2.0) {
        let horizon = 12;
        let inst = random_instance(seed, 3, 2, horizon);
        let (plant, cost, w) = (&inst.plant, &inst.cost, &inst.w);
        for h in [Horizon::Finite(horizon), Horizon::Infinite] {
            let noise: Signal64 = random_unit_signal(plant.n(), horizon, seed ^ 1);
            let pred = Prediction::custom(w.axpy(sigma, &noise).unwrap()).unwrap();
            let policy = ce_policy(plant, cost, &pred, h).unwrap();
            let r = dynamic_regret(plant, cost, &policy, "ce", w, h).unwrap();
            prop_assert!(r.regret >= -1e-9 * (1.0 + r.offline_cost.abs()), "{h:?}: regret {}", r.regret);

            let exact = ce_policy(plant, cost, &Prediction::exact(w), h).unwrap();
            let ce = cost_to_go_coeffs(CoeffController::Affine(&exact), plant, cost, w, h).unwrap();
            let opt = cost_to_go_coeffs(CoeffController::Offline, plant, cost, w, h).unwrap();
            for i in 0..=horizon {
                let scale = 1.0 + opt.v[i].norm();
                prop_assert!((&ce.v[i] - &opt.v[i]).norm() <= 1e-9 * scale, "{h:?} step {i}");
                prop_assert!((&ce.p[i] - &opt.p[i]).norm() <= 1e-9 * (1.0 + opt.p[i].norm()));
            }
        }
    }

    #[test]
    fn worst_case_disturbance_is_linear_in_x0(scale in -3.0f64..3.0) {
        let (plant, cost) = scalar(4.0);
        let other = plant.with_x0(plant.x0() * scale).unwrap();
        let h = Horizon::Finite(30);
        let base = worst_case_disturbance(&plant, &cost, 2.0, h).unwrap();
        let scaled = worst_case_disturbance(&other, &cost, 2.0, h).unwrap();
        let diff = (scaled.w_star.as_matrix() - base.w_star.as_matrix() * scale).norm();
        prop_assert!(diff <= 1e-12 * (1.0 + base.w_star.energy() * scale.abs()));
    }
}

#[test]
fn offline_inputs_are_locally_optimal() {
    let horizon = 15;
    let inst = random_instance(77, 3, 2, horizon);
    let (plant, cost, w) = (&inst.plant, &inst.cost, &inst.w);
    let opt = offline_finite(plant, cost, w, horizon).unwrap();
    let base = open_loop_cost(plant, cost, opt.inputs(), w).unwrap();
    assert_relative_eq!(base, opt.cost, max_relative = 1e-10);
    for k in 0..100u64 {
        let d: Signal64 = random_unit_signal(plant.m(), horizon, 500 + k);
        for eps in [1e-3, -1e-3] {
            let u = opt.inputs().axpy(eps, &d).unwrap();
            let perturbed = open_loop_cost(plant, cost, &u, w).unwrap();
            assert!(perturbed >= base - 1e-12 * base.abs(), "direction {k}: {perturbed} < {base}");
        }
    }
}

#[test]
fn envelope_certificates_hold() {
    let mut r = rng(91);
    for k in 0..100 {
        let n = 1 + k % 4;
        let rho = 0.99 * (k as f64 + 1.0) / 100.0;
        let mut f = with_radius(&mut r, n, rho);
        if n > 1 && k % 3 == 0 {
            f[(0, n - 1)] += 5.0;
        }
        let rho = spectral_radius(&f);
        if rho >= 0.999 {
            continue;
        }
        let lambda = (1.0 + rho) / 2.0;
        let cert = gelfand_constant(&f, lambda, 100).unwrap();
        let mut power = f.clone();
        for i in 1..=1000 {
            let norm = spectral_norm(&power);
            assert!(norm <= cert.c * lambda.powi(i) * (1.0 + 1e-9), "case {k}, i = {i}");
            power = &power * &f;
        }
    }
}

#[test]
fn worst_case_energy_decreases_in_gamma() {
    let (plant, cost) = scalar(4.0);
    let h = Horizon::Finite(100);
    let lower = find_gamma_lower(&plant, &cost, h, 1e-9).unwrap();
    let grid: Vec<f64> = (0..50).map(|k| lower * (1.0 + 1e-3) * (100f64).powf(k as f64 / 49.0)).collect();
    let energies: Vec<f64> = grid
        .iter()
        .map(|&g| worst_case_disturbance(&plant, &cost, g, h).unwrap().energy)
        .collect();
    for pair in energies.windows(2) {
        assert!(pair[1] < pair[0], "{energies:?}");
    }
}

#[test]
fn closed_loop_simulation_is_consistent() {
    for seed in 0..20 {
        let inst = random_instance(seed, 3, 2, 20);
        let dare = solve_dare(&inst.plant, &inst.cost, DEFAULT_TOL).unwrap();
        let policy = regretlab::LinearFeedback::stationary(dare.k);
        let traj = simulate(&inst.plant, &policy, &inst.w).unwrap();
        assert!(traj.recursion_residual(&inst.plant) <= 1e-12);
    }
}

#[test]
fn lyapunov_solution_dominates_weight() {
    let mut r = rng(5);
    for n in 1..=4 {
        let f = with_radius(&mut r, n, 0.8);
        let q = random_spd(&mut r, n, 0.1);
        let p = regretlab::lyapunov_fixed_point(&f, &q, &DMatrix::zeros(n, n), DEFAULT_TOL).unwrap();
        assert!(psd_gap(&p, &q) >= -1e-10);
        let residual = (&p - (f.transpose() * &p * &f + &q)).norm();
        assert!(residual <= 1e-9 * p.norm().max(1.0));
    }
}

#[test]
fn single_precision_smoke() {
    let plant = Plant32::scalar(1.0, 1.0, 4.0);
    let cost = CostSpec32::scalar(1.0, 1.0, 1.0, 4.0).unwrap();
    let dare = solve_dare(&plant, &cost, 1e-6).unwrap();
    assert!((dare.p[(0, 0)] - 1.618_034).abs() < 1e-4);
    let g = find_gamma_lower(&plant, &cost, Horizon::Infinite, 1e-5).unwrap();
    assert!((g - std::f32::consts::SQRT_2).abs() < 1e-3);
    let w = regretlab::Signal32::scalar(&[0.5, -0.25, 1.0]).unwrap();
    let opt = offline_finite(&plant, &cost, &w, 3).unwrap();
    let x = DVector::from_element(1, 4.0f32);
    assert_eq!(opt.trajectory.states[0], x);
    assert!(opt.cost.is_finite() && opt.cost > 0.0);
}
