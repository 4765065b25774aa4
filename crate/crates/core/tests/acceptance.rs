//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line.

mod common;

use std::time::{Duration, Instant};

use common::{random_instance, rel_err, rng, with_radius};
use nalgebra::DMatrix;
use regretlab::experiment::{random_unit_signal, Fig1Output, THREADS_ENV};
use regretlab::linalg::{relative_difference, spectral_radius};
use regretlab::policy::Schedule;
use regretlab::riccati::DEFAULT_TOL;
use regretlab::{
    batch_oracle, build_controller, ce_policy, cost_to_go_coeffs, dynamic_regret, find_gamma_bar, find_gamma_lower,
    infinite_constants, lti::cost_to_go_with_terminal, lyapunov_fixed_point, offline_finite, offline_infinite,
    reproduce_fig1, sample_disturbance, simulate, solve_dare, CoeffController, ControllerKind, CostSpec64, Horizon,
    LinearFeedback, Plant64, Prediction, Signal64,
};

const DARE_TOL: f64 = 1e-9;
const GAMMA_TOL: f64 = 1e-6;
const SADDLE_TOL: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-8;
const SLACK_TOL: f64 = 1e-7;
const SCALING_TOL: f64 = 1e-6;
const RECONSTRUCTION_TOL: f64 = 1e-8;

type Outcome = Result<String, String>;

struct Runner {
    failures: usize,
}

impl Runner {
    fn check(&mut self, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL criterion {id:>2} {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scalar(x0: f64) -> (Plant64, CostSpec64) {
    (Plant64::scalar(1.0, 1.0, x0), CostSpec64::scalar(1.0, 1.0, 1.0, x0.abs()).unwrap())
}

fn dare_golden() -> Outcome {
    let (plant, cost) = scalar(4.0);
    let sol = solve_dare(&plant, &cost, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let err = (sol.p[(0, 0)] - phi).abs();
    ensure(err <= DARE_TOL, || format!("P = {}, error {err:e}", sol.p[(0, 0)]))?;
    Ok(format!("P = {:.15}, error {err:.1e}", sol.p[(0, 0)]))
}

fn gamma_threshold() -> Outcome {
    let (plant, cost) = scalar(4.0);
    let g = find_gamma_lower(&plant, &cost, Horizon::Infinite, 1e-9).map_err(|e| e.to_string())?;
    let err = (g - 2f64.sqrt()).abs();
    ensure(err <= GAMMA_TOL, || format!("gamma_lower = {g}, error {err:e}"))?;
    Ok(format!("gamma_lower = {g:.12}, error {err:.1e}"))
}

fn saddle_zero_regret() -> Outcome {
    let (plant, cost) = scalar(4.0);
    let horizon = Horizon::Finite(100);
    let gb = find_gamma_bar(&plant, &cost, horizon, 1e-9).map_err(|e| e.to_string())?;
    let w_star = &gb.worst_case.w_star;
    let report =
        dynamic_regret(&plant, &cost, &gb.synthesis.policy(), "hinf", w_star, horizon).map_err(|e| e.to_string())?;
    let limit = SADDLE_TOL * (1.0 + report.policy_cost);
    ensure(report.regret.abs() <= limit, || {
        format!("regret {:e} exceeds {limit:e} (gamma_bar {})", report.regret, gb.gamma_bar)
    })?;
    Ok(format!(
        "gamma_bar = {:.10}, |w*| = {:.9}, J = {:.6}, regret = {:.1e}",
        gb.gamma_bar,
        w_star.energy(),
        report.policy_cost,
        report.regret
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let horizon = 1 + (k as usize * 7) % 20;
        let inst = random_instance(1000 + k, 3, 2, horizon);
        let rec = offline_finite(&inst.plant, &inst.cost, &inst.w, horizon).map_err(|e| format!("instance {k}: {e}"))?;
        let batch = batch_oracle(&inst.plant, &inst.cost, &inst.w, horizon).map_err(|e| format!("instance {k}: {e}"))?;
        let err = rel_err(rec.cost, batch.cost);
        ensure(err <= ORACLE_TOL, || {
            format!("instance {k}: recursion {} vs batch {}, relative {err:e}", rec.cost, batch.cost)
        })?;
        worst = worst.max(err);
    }
    Ok(format!("50 instances, worst relative cost error {worst:.1e}"))
}

fn hinf_domination(fig: &Fig1Output) -> Outcome {
    let constants = fig.sweep.constants.as_ref().ok_or("no bound constants")?;
    let mut min_slack = f64::INFINITY;
    let mut points = 0;
    for (g, row) in fig.rows.iter().enumerate() {
        let swept = fig.sweep.row(ControllerKind::Hinf, g).ok_or("missing sweep row")?;
        ensure(swept.samples == 200, || format!("grid point {g} has {} samples", swept.samples))?;
        let bound = constants.evaluate(row.gap_norm);
        let slack = bound - row.hinf_max_regret;
        ensure(slack >= -SLACK_TOL * bound, || {
            format!("gap {}: max regret {} above bound {bound}", row.gap_norm, row.hinf_max_regret)
        })?;
        min_slack = min_slack.min(slack / bound);
        points += 1;
    }
    ensure(points == 20, || format!("{points} grid points"))?;
    ensure(fig.rows.iter().all(|r| r.gap_norm > 0.0 && r.gap_norm <= 2.0), || "grid leaves (0, 2]".into())?;
    Ok(format!(
        "20 points x 200 samples, k1' = {:.4}, k2' = {:.4}, min relative slack {min_slack:.3}",
        constants.k1, constants.k2
    ))
}

fn ce_bound_and_scaling(fig: &Fig1Output) -> Outcome {
    let mut checked = 0;
    for s in fig.sweep.samples.iter().filter(|s| s.controller == ControllerKind::Ce) {
        let bound = s.bound.ok_or("CE sample without bound")?;
        ensure(s.regret <= bound + SLACK_TOL * bound, || {
            format!("sample {}/{}: regret {} above bound {bound}", s.grid_index, s.sample_index, s.regret)
        })?;
        ensure(s.regret >= -1e-9 * (1.0 + bound), || format!("negative CE regret {}", s.regret))?;
        checked += 1;
    }
    for (g, row) in fig.rows.iter().enumerate() {
        ensure(row.ce_max_regret <= row.ce_bound * (1.0 + SLACK_TOL), || {
            format!("grid point {g}: CE max regret {} above {}", row.ce_max_regret, row.ce_bound)
        })?;
    }

    let (plant, cost) = scalar(4.0);
    let horizon = Horizon::Finite(100);
    let gb = find_gamma_bar(&plant, &cost, horizon, 1e-9).map_err(|e| e.to_string())?;
    let w = sample_disturbance(&gb.worst_case.w_star, 1.0, 17).map_err(|e| e.to_string())?;
    let d: Signal64 = random_unit_signal(1, 100, 23);
    let mut ratios = Vec::new();
    for &alpha in &[0.05, 0.1, 0.5, 1.0, 2.0, 4.0] {
        let w_bar = w.axpy(alpha, &d).map_err(|e| e.to_string())?;
        let pred = Prediction::custom(w_bar).map_err(|e| e.to_string())?;
        let policy = ce_policy(&plant, &cost, &pred, horizon).map_err(|e| e.to_string())?;
        let r = dynamic_regret(&plant, &cost, &policy, "ce", &w, horizon).map_err(|e| e.to_string())?;
        ratios.push(r.regret / (alpha * alpha));
    }
    let spread = ratios.iter().map(|r| rel_err(*r, ratios[0])).fold(0.0, f64::max);
    ensure(spread <= SCALING_TOL, || format!("regret/alpha^2 = {ratios:?}"))?;
    Ok(format!(
        "{checked} samples dominated, regret/alpha^2 = {:.9} (spread {spread:.1e})",
        ratios[0]
    ))
}

fn bound_ordering(fig: &Fig1Output) -> Outcome {
    for r in &fig.rows {
        ensure(r.ce_bound < r.hinf_bound, || {
            format!("gap {}: CE bound {} not below H-inf bound {}", r.gap_norm, r.ce_bound, r.hinf_bound)
        })?;
    }
    let (plant, cost) = scalar(4.0);
    let gb = find_gamma_bar(&plant, &cost, Horizon::Infinite, 1e-9).map_err(|e| e.to_string())?;
    let k = infinite_constants(&plant, &cost, &gb.synthesis).map_err(|e| e.to_string())?;
    for r in &fig.rows {
        ensure(k.ce_bound(r.gap_norm) < k.evaluate(r.gap_norm), || {
            format!("infinite horizon, gap {}: CE bound not below H-inf bound", r.gap_norm)
        })?;
    }
    let last = fig.rows.last().ok_or("empty grid")?;
    Ok(format!(
        "finite and infinite horizon; at gap {}: CE {:.3} < H-inf {:.3}",
        last.gap_norm, last.ce_bound, last.hinf_bound
    ))
}

/// A stabilizing gain that is not the LQR one.
fn perturbed_gain(plant: &Plant64, cost: &CostSpec64, seed: u64) -> DMatrix<f64> {
    let k = solve_dare(plant, cost, DEFAULT_TOL).unwrap().k;
    let mut r = rng(seed);
    for scale in [0.3, 0.1, 0.03, 0.0] {
        let cand = &k + common::gaussian(&mut r, k.nrows(), k.ncols()) * scale;
        if spectral_radius(&(plant.a() - plant.b() * &cand)) < 0.98 {
            return cand;
        }
    }
    k
}

fn reconstruction() -> Outcome {
    let mut worst = 0.0f64;
    let mut probes = 0;
    for k in 0..8u64 {
        for horizon in [Horizon::Finite(16), Horizon::Infinite] {
            let steps = 16;
            let inst = random_instance(2000 + k, 3, 2, steps);
            let (plant, cost, w) = (&inst.plant, &inst.cost, &inst.w);
            let tag = format!("instance {k} {horizon:?}");
            let gamma = 2.0 * find_gamma_lower(plant, cost, horizon, 1e-9).map_err(|e| format!("{tag}: {e}"))?;
            let syn = build_controller(plant, cost, gamma, horizon).map_err(|e| format!("{tag}: {e}"))?;
            let gain = Schedule::Stationary(perturbed_gain(plant, cost, 3000 + k));
            let offline_traj = match horizon {
                Horizon::Finite(t) => offline_finite(plant, cost, w, t),
                Horizon::Infinite => offline_infinite(plant, cost, w),
            }
            .map_err(|e| format!("{tag}: {e}"))?
            .trajectory;
            let cases = [
                ("hinf", CoeffController::Hinf(&syn), simulate(plant, &syn.policy(), w)),
                ("offline", CoeffController::Offline, Ok(offline_traj)),
                (
                    "feedback",
                    CoeffController::Feedback(&gain),
                    simulate(plant, &LinearFeedback { gains: gain.clone() }, w),
                ),
            ];
            for (name, controller, traj) in cases {
                let traj = traj.map_err(|e| format!("{tag} {name}: {e}"))?;
                let coeffs = cost_to_go_coeffs(controller, plant, cost, w, horizon).map_err(|e| format!("{tag} {name}: {e}"))?;
                for i in [0, steps / 4, steps / 2, 3 * steps / 4, steps - 1] {
                    let predicted = coeffs.evaluate(i, &traj.states[i]).map_err(|e| e.to_string())?;
                    let simulated =
                        cost_to_go_with_terminal(&traj, cost, i, coeffs.terminal()).map_err(|e| e.to_string())?;
                    let err = rel_err(predicted, simulated);
                    ensure(err <= RECONSTRUCTION_TOL, || {
                        format!("{tag} {name} step {i}: {predicted} vs {simulated}, relative {err:e}")
                    })?;
                    worst = worst.max(err);
                    probes += 1;
                }
            }
        }
    }
    Ok(format!("{probes} probes over 8 instances x 2 horizons, worst relative error {worst:.1e}"))
}

fn lyapunov_initialization() -> Outcome {
    let mut r = rng(4000);
    let tol = DEFAULT_TOL;
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = 1 + k % 4;
        let rho = 0.95 * (k as f64 + 1.0) / 100.0;
        let f = with_radius(&mut r, n, rho);
        let q = common::random_spd(&mut r, n, 0.1);
        let zero = DMatrix::zeros(n, n);
        let ten = DMatrix::identity(n, n) * 10.0;
        let a = lyapunov_fixed_point(&f, &q, &zero, tol).map_err(|e| format!("case {k}: {e}"))?;
        let b = lyapunov_fixed_point(&f, &q, &ten, tol).map_err(|e| format!("case {k}: {e}"))?;
        let diff = relative_difference(&a, &b);
        ensure(diff <= 2.0 * tol, || format!("case {k} (n = {n}, rho = {rho:.3}): difference {diff:e}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("100 stable F, worst relative difference {worst:.1e} (limit {:.0e})", 2.0 * tol))
}

fn determinism(first: &Fig1Output, seed: u64) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = reproduce_fig1(dir.path(), seed).map_err(|e| e.to_string())?;
    let a = std::fs::read(&first.data_path).map_err(|e| e.to_string())?;
    let b = std::fs::read(&second.data_path).map_err(|e| e.to_string())?;
    ensure(a == b, || "CSV differs between runs".into())?;
    std::env::set_var(THREADS_ENV, "1");
    let serial = reproduce_fig1(&dir.path().join("serial"), seed);
    std::env::remove_var(THREADS_ENV);
    let serial = serial.map_err(|e| e.to_string())?;
    ensure(serial.csv.as_bytes() == a.as_slice(), || "serial run differs from parallel run".into())?;
    Ok(format!("{} bytes identical across two parallel runs and one serial run", a.len()))
}

fn main() {
    let mut runner = Runner { failures: 0 };
    runner.check(1, "scalar DARE golden value", Duration::from_millis(1), dare_golden);
    runner.check(2, "scalar H-inf threshold", Duration::from_millis(100), gamma_threshold);
    runner.check(3, "saddle-point zero regret", Duration::from_secs(1), saddle_zero_regret);
    runner.check(4, "oracle equivalence", Duration::from_secs(10), oracle_equivalence);

    let seed = regretlab::experiment::FIG1_SEED;
    let dir = tempfile::tempdir().expect("temporary directory");
    let start = Instant::now();
    let fig = reproduce_fig1(dir.path(), seed);
    let sweep_time = start.elapsed();
    match &fig {
        Ok(fig) => {
            runner.check(5, "H-inf bound domination", Duration::from_secs(120).saturating_sub(sweep_time), || {
                hinf_domination(fig)
            });
            runner.check(6, "CE bound and quadratic scaling", Duration::from_secs(120).saturating_sub(sweep_time), || {
                ce_bound_and_scaling(fig)
            });
            runner.check(7, "bound ordering", Duration::from_secs(1), || bound_ordering(fig));
        }
        Err(e) => {
            for (id, name) in [(5, "H-inf bound domination"), (6, "CE bound and quadratic scaling"), (7, "bound ordering")] {
                runner.check(id, name, Duration::MAX, || Err(format!("sweep failed: {e}")));
            }
        }
    }
    runner.check(8, "extended-quadratic reconstruction", Duration::from_secs(5), reconstruction);
    runner.check(9, "Lyapunov initialization independence", Duration::from_secs(5), lyapunov_initialization);
    match &fig {
        Ok(fig) => runner.check(10, "fig1 determinism", Duration::from_secs(300).saturating_sub(sweep_time), || {
            determinism(fig, seed)
        }),
        Err(e) => runner.check(10, "fig1 determinism", Duration::MAX, || Err(format!("sweep failed: {e}"))),
    }
    println!("sweep of the reference figure took {sweep_time:.2?}");

    if runner.failures > 0 {
        println!("{} acceptance criteria failed", runner.failures);
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
