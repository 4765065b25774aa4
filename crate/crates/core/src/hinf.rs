//! H∞ controller synthesis through the soft-constrained zero-sum game:
//! γ-search, saddle-point feedback gains and the open-loop worst-case
//! disturbance.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spd_solve, spectral_radius};
use crate::lti::{CostSpec, Horizon, Plant, Signal, Trajectory};
use crate::policy::{Gains, LinearFeedback, Schedule};
use crate::riccati::{hinf_riccati, HinfRiccati, DEFAULT_TOL};
use crate::scalar::{lit, to_f64, Real};

/// Upper end of every γ search.
pub const GAMMA_CEILING: f64 = 1e6;
/// Tolerance on `|‖w*(γ̄)‖ − 1|`.
pub const UNIT_ENERGY_TOL: f64 = 1e-6;
/// Relative offset above γ̲ where the γ̄ search starts.
const LOWER_OFFSET: f64 = 1e-6;
/// Tail-energy threshold for truncating the infinite-horizon w*.
const TAIL_ENERGY_TOL: f64 = 1e-12;
const WINDOW_CAP: usize = 1_000_000;

/// Saddle-point controller for a fixed attenuation level γ.
#[derive(Debug, Clone)]
pub struct HinfSynthesis<T: Real> {
    pub gamma: T,
    pub horizon: Horizon,
    pub riccati: HinfRiccati<T>,
    /// `K_t^∞ = R⁻¹BᵀM_{t+1}Λ_t⁻¹A`.
    pub gains: Gains<T>,
    /// Controller closed loop `F_t^∞ = A − BK_t^∞`.
    pub closed_loop: Schedule<DMatrix<T>>,
    /// Closed loop under both saddle-point players, `Λ_t⁻¹A`.
    pub sp_closed_loop: Schedule<DMatrix<T>>,
    /// Disturbance feedback `γ⁻²M_{t+1}Λ_t⁻¹A`.
    pub disturbance_gains: Schedule<DMatrix<T>>,
    /// `ρ(F^∞)` for the stationary controller.
    pub closed_loop_radius: Option<T>,
}

/// Open-loop worst-case disturbance `w*` generated along `x^∞`.
#[derive(Debug, Clone)]
pub struct WorstCase<T: Real> {
    pub gamma: T,
    pub w_star: Signal<T>,
    /// `x_0^∞ … x_T^∞`.
    pub x_inf: Vec<DVector<T>>,
    pub energy: T,
    /// Number of materialized steps.
    pub window: usize,
    /// Estimated energy beyond the window (zero for finite horizons).
    pub tail_estimate: T,
}

impl<T: Real> HinfSynthesis<T> {
    /// State feedback `u_t = −K_t^∞ x_t`.
    pub fn policy(&self) -> LinearFeedback<T> {
        LinearFeedback {
            gains: self.gains.clone(),
        }
    }

    pub fn gain(&self, t: usize) -> &DMatrix<T> {
        self.gains.at(t).expect("gain index within horizon")
    }

    /// Both players in feedback form, `u = −K^∞x`, `w = γ⁻²MΛ⁻¹Ax`.
    pub fn saddle_trajectory(&self, plant: &Plant<T>, steps: usize) -> Result<Trajectory<T>> {
        let steps = self.steps(steps)?;
        let n = plant.n();
        let mut states = vec![plant.x0().clone()];
        let mut u = DMatrix::zeros(plant.m(), steps);
        let mut w = DMatrix::zeros(n, steps);
        for t in 0..steps {
            let x = &states[t];
            let ut = -(self.gain(t) * x);
            let wt = self.disturbance_gains.at(t).expect("in range") * x;
            let next = plant.a() * x + plant.b() * &ut + &wt;
            u.set_column(t, &ut);
            w.set_column(t, &wt);
            states.push(next);
        }
        Ok(Trajectory {
            states,
            inputs: Signal::from_matrix(u)?,
            disturbance: Signal::from_matrix(w)?,
        })
    }

    fn steps(&self, requested: usize) -> Result<usize> {
        match self.horizon {
            Horizon::Finite(t) if requested != t => Err(Error::InvalidInput(format!(
                "finite-horizon controller has T = {t}, asked for {requested} steps"
            ))),
            _ if requested == 0 => Err(Error::InvalidInput("need at least one step".into())),
            _ => Ok(requested),
        }
    }

    /// Worst-case disturbance `w*_t = γ⁻²M_{t+1}Λ_t⁻¹A x_t^∞`.
    ///
    /// For a finite horizon the window is the horizon itself. For the
    /// stationary controller an explicit window may be given; otherwise
    /// the signal is extended until `ρ^{2T}‖w*‖²/(1 − ρ²) < 1e-12` with
    /// `ρ = ρ(Λ⁻¹A)`.
    pub fn worst_case(&self, plant: &Plant<T>, window: Option<usize>) -> Result<WorstCase<T>> {
        let x0 = plant.x0().clone();
        match (self.horizon, window) {
            (Horizon::Finite(t), w) => {
                if let Some(w) = w {
                    self.steps(w)?;
                }
                Ok(self.roll_out(x0, t, T::zero()))
            }
            (Horizon::Infinite, Some(w)) => {
                let w = self.steps(w)?;
                let wc = self.roll_out(x0, w, T::zero());
                let tail = self.tail_estimate(w, wc.energy);
                Ok(WorstCase {
                    tail_estimate: tail,
                    ..wc
                })
            }
            (Horizon::Infinite, None) => self.auto_window(x0),
        }
    }

    fn tail_estimate(&self, window: usize, energy: T) -> T {
        let rho = self.riccati.sp_spectral_radius.unwrap_or(T::zero());
        let rho2 = rho * rho;
        rho2.powi(window as i32) * energy * energy / (T::one() - rho2)
    }

    fn roll_out(&self, x0: DVector<T>, steps: usize, tail: T) -> WorstCase<T> {
        let n = x0.len();
        let mut x_inf = Vec::with_capacity(steps + 1);
        let mut w = DMatrix::zeros(n, steps);
        x_inf.push(x0);
        for t in 0..steps {
            let x = &x_inf[t];
            let wt = self.disturbance_gains.at(t).expect("in range") * x;
            let next = self.sp_closed_loop.at(t).expect("in range") * x;
            w.set_column(t, &wt);
            x_inf.push(next);
        }
        let w_star = Signal::from_matrix(w).expect("finite worst-case signal");
        WorstCase {
            gamma: self.gamma,
            energy: w_star.energy(),
            w_star,
            x_inf,
            window: steps,
            tail_estimate: tail,
        }
    }

    fn auto_window(&self, x0: DVector<T>) -> Result<WorstCase<T>> {
        let d = self.disturbance_gains.at(0).expect("stationary");
        let phi = self.sp_closed_loop.at(0).expect("stationary");
        let rho = self.riccati.sp_spectral_radius.unwrap_or(T::zero());
        let rho2 = rho * rho;
        let tol: T = lit(TAIL_ENERGY_TOL);
        let mut x = x0.clone();
        let mut energy2 = T::zero();
        let mut decay = T::one();
        for t in 1..=WINDOW_CAP {
            let wt = d * &x;
            energy2 += wt.norm_squared();
            x = phi * &x;
            decay *= rho2;
            let tail = decay * energy2 / (T::one() - rho2);
            if tail < tol || x.iter().all(|v| *v == T::zero()) {
                return Ok(self.roll_out(x0, t, tail));
            }
        }
        Err(Error::NonConvergence {
            what: "worst-case truncation window".into(),
            iterations: WINDOW_CAP,
        })
    }
}

fn schedule<T: Real>(horizon: Horizon, items: Vec<DMatrix<T>>) -> Schedule<DMatrix<T>> {
    match horizon {
        Horizon::Finite(_) => Schedule::PerStep(items),
        Horizon::Infinite => Schedule::Stationary(items.into_iter().next().expect("one stationary item")),
    }
}

/// Builds the saddle-point controller from a feasible Riccati solution.
pub fn from_riccati<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, riccati: HinfRiccati<T>) -> Result<HinfSynthesis<T>> {
    let gamma = riccati.gamma;
    if !riccati.feasible {
        return Err(Error::Infeasible {
            gamma: to_f64(gamma),
            reason: format!(
                "min eigenvalue of gamma^2 I - M is {:e}{}",
                to_f64(riccati.xi_min_eig),
                riccati
                    .sp_spectral_radius
                    .map(|r| format!(", spectral radius of the saddle-point loop {}", to_f64(r)))
                    .unwrap_or_default()
            ),
        });
    }
    let horizon = riccati.horizon;
    let steps = horizon.finite().unwrap_or(1);
    let (a, b) = (plant.a(), plant.b());
    let bt = b.transpose();
    let inv_gamma2 = T::one() / (gamma * gamma);
    let mut gains = Vec::with_capacity(steps);
    let mut closed = Vec::with_capacity(steps);
    let mut sp = Vec::with_capacity(steps);
    let mut dist = Vec::with_capacity(steps);
    for t in 0..steps {
        let lam_inv = riccati.lambda_inv_at(t);
        let mla = riccati.m_next(t) * lam_inv * a;
        let k = spd_solve(cost.r(), &(&bt * &mla), "R")?;
        closed.push(a - b * &k);
        sp.push(lam_inv * a);
        dist.push(mla * inv_gamma2);
        gains.push(k);
    }
    let closed_loop = schedule(horizon, closed);
    let closed_loop_radius = match horizon {
        Horizon::Infinite => {
            let rho = spectral_radius(closed_loop.at(0).expect("stationary"));
            if rho >= T::one() {
                return Err(Error::Infeasible {
                    gamma: to_f64(gamma),
                    reason: format!("controller closed loop is unstable (spectral radius {})", to_f64(rho)),
                });
            }
            Some(rho)
        }
        Horizon::Finite(_) => None,
    };
    Ok(HinfSynthesis {
        gamma,
        horizon,
        gains: schedule(horizon, gains),
        closed_loop,
        sp_closed_loop: schedule(horizon, sp),
        disturbance_gains: schedule(horizon, dist),
        closed_loop_radius,
        riccati,
    })
}

/// Saddle-point controller at attenuation level `gamma`.
pub fn build_controller<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T, horizon: Horizon) -> Result<HinfSynthesis<T>> {
    let riccati = hinf_riccati(plant, cost, gamma, horizon, lit(DEFAULT_TOL))?;
    from_riccati(plant, cost, riccati)
}

/// Worst-case disturbance at `gamma`; the infinite-horizon signal is
/// truncated automatically.
pub fn worst_case_disturbance<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T, horizon: Horizon) -> Result<WorstCase<T>> {
    build_controller(plant, cost, gamma, horizon)?.worst_case(plant, None)
}

fn is_feasible<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T, horizon: Horizon) -> Result<bool> {
    match hinf_riccati(plant, cost, gamma, horizon, lit(DEFAULT_TOL)) {
        Ok(r) => Ok(r.feasible),
        Err(Error::Infeasible { .. } | Error::NonConvergence { .. } | Error::Singular(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Smallest γ satisfying the Ξ condition, by bisection on `(0, 1e6]`.
///
/// The returned γ is feasible and lies within `tol` of an infeasible one.
pub fn find_gamma_lower<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, horizon: Horizon, tol: T) -> Result<T> {
    cost.check_plant(plant)?;
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput("bisection tolerance must be positive".into()));
    }
    let mut hi: T = lit(GAMMA_CEILING);
    if !is_feasible(plant, cost, hi, horizon)? {
        return Err(Error::SynthesisInfeasible(format!(
            "no gamma in (0, {GAMMA_CEILING:e}] satisfies the Riccati conditions"
        )));
    }
    let two: T = lit(2.0);
    let mut lo = T::zero();
    while hi > tol {
        let cand = hi / two;
        if is_feasible(plant, cost, cand, horizon)? {
            hi = cand;
        } else {
            lo = cand;
            break;
        }
    }
    while hi - lo > tol {
        let mid = (lo + hi) / two;
        if is_feasible(plant, cost, mid, horizon)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn energy_at<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T, horizon: Horizon) -> Result<T> {
    Ok(worst_case_disturbance(plant, cost, gamma, horizon)?.energy)
}

/// Result of the γ̄ search.
#[derive(Debug, Clone)]
pub struct GammaBar<T: Real> {
    pub gamma_lower: T,
    pub gamma_bar: T,
    pub worst_case: WorstCase<T>,
    pub synthesis: HinfSynthesis<T>,
    /// Whether `γ ↦ ‖w*(γ)‖` was decreasing on the pre-scan grid.
    pub monotone_prescan: bool,
}

/// Finds γ̄ > γ̲ with `|‖w*(γ̄)‖ − 1| ≤ 1e-6`.
///
/// Bisection on `[γ̲(1 + 1e-6), γ_hi]`, where `γ_hi` doubles until the
/// worst-case energy drops below one.
pub fn find_gamma_bar<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, horizon: Horizon, tol: T) -> Result<GammaBar<T>> {
    let gamma_lower = find_gamma_lower(plant, cost, horizon, tol)?;
    let one = T::one();
    let two: T = lit(2.0);
    let ceiling: T = lit(GAMMA_CEILING);
    let mut lo = gamma_lower * (one + lit(LOWER_OFFSET));
    let e_lo = energy_at(plant, cost, lo, horizon)?;
    if e_lo < one {
        let e_min = energy_at(plant, cost, ceiling, horizon).unwrap_or(T::zero());
        return Err(Error::NotAdmissible {
            energy_min: to_f64(e_min),
            energy_max: to_f64(e_lo),
        });
    }
    let mut hi = lo * two;
    let mut e_hi = energy_at(plant, cost, hi, horizon)?;
    while e_hi >= one {
        hi *= two;
        if hi > ceiling {
            return Err(Error::SearchFailure(format!(
                "worst-case energy stays >= 1 up to gamma = {GAMMA_CEILING:e} (energy range [{}, {}])",
                to_f64(e_hi),
                to_f64(e_lo)
            )));
        }
        e_hi = energy_at(plant, cost, hi, horizon)?;
    }
    let monotone_prescan = prescan_monotone(plant, cost, horizon, lo, hi)?;
    if !monotone_prescan {
        log::warn!("worst-case energy is not monotone in gamma on the pre-scan grid");
    }

    let target_tol: T = lit(UNIT_ENERGY_TOL * 0.1);
    let accept_tol: T = lit(UNIT_ENERGY_TOL);
    let mut best: Option<(T, T)> = None;
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        let e = energy_at(plant, cost, mid, horizon)?;
        if best.is_none_or(|(_, be)| (e - one).abs() < (be - one).abs()) {
            best = Some((mid, e));
        }
        if (e - one).abs() <= target_tol {
            break;
        }
        if e >= one {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::default_epsilon() * hi {
            break;
        }
    }
    let (gamma_bar, energy) = best.expect("at least one bisection step");
    if (energy - one).abs() > accept_tol {
        return Err(Error::SearchFailure(format!(
            "bisection stalled at gamma = {} with energy {} (range [{}, {}])",
            to_f64(gamma_bar),
            to_f64(energy),
            to_f64(e_hi),
            to_f64(e_lo)
        )));
    }
    let synthesis = build_controller(plant, cost, gamma_bar, horizon)?;
    let worst_case = synthesis.worst_case(plant, None)?;
    Ok(GammaBar {
        gamma_lower,
        gamma_bar,
        worst_case,
        synthesis,
        monotone_prescan,
    })
}

fn log_grid<T: Real>(lo: T, hi: T, points: usize) -> Vec<T> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let denom: T = lit((points - 1) as f64);
    (0..points)
        .map(|i| {
            let s: T = lit(i as f64);
            (llo + (lhi - llo) * s / denom).exp()
        })
        .collect()
}

fn energy_grid<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, horizon: Horizon, grid: &[T]) -> Result<Vec<T>> {
    grid.par_iter()
        .map(|&g| energy_at(plant, cost, g, horizon))
        .collect()
}

fn prescan_monotone<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, horizon: Horizon, lo: T, hi: T) -> Result<bool> {
    let grid = log_grid(lo, hi, 16);
    let energies = energy_grid(plant, cost, horizon, &grid)?;
    Ok(energies.windows(2).all(|p| p[1] <= p[0]))
}

/// Operational membership test for the set of initial states admitting a
/// unit-energy worst-case disturbance.
#[derive(Debug, Clone)]
pub struct Admissibility<T: Real> {
    pub admissible: bool,
    pub gamma_lower: Option<T>,
    /// Energy just above γ̲.
    pub energy_max: T,
    /// Energy at the search ceiling.
    pub energy_min: T,
    /// `(γ, ‖w*(γ)‖)` on a log-spaced grid over `[γ̲(1 + 1e-6), 1e6]`.
    pub grid: Vec<(T, T)>,
    pub diagnostic: String,
}

/// True iff the γ̄ search has a bracket: the energy is at least one just
/// above γ̲ and below one at the ceiling. This is a bracket-based stand-in
/// for set membership, not a proof of it.
pub fn check_x0_admissible<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, horizon: Horizon) -> Admissibility<T> {
    let gamma_lower = match find_gamma_lower(plant, cost, horizon, lit(1e-9)) {
        Ok(g) => g,
        Err(e) => {
            return Admissibility {
                admissible: false,
                gamma_lower: None,
                energy_max: T::zero(),
                energy_min: T::zero(),
                grid: Vec::new(),
                diagnostic: format!("no feasible gamma: {e}"),
            }
        }
    };
    let lo = gamma_lower * (T::one() + lit(LOWER_OFFSET));
    let grid = log_grid(lo, lit(GAMMA_CEILING), 24);
    match energy_grid(plant, cost, horizon, &grid) {
        Ok(energies) => {
            let energy_max = energies[0];
            let energy_min = *energies.last().expect("non-empty grid");
            let admissible = energy_max >= T::one() && energy_min < T::one();
            let monotone = energies.windows(2).all(|p| p[1] <= p[0]);
            Admissibility {
                admissible,
                gamma_lower: Some(gamma_lower),
                energy_max,
                energy_min,
                grid: grid.into_iter().zip(energies).collect(),
                diagnostic: format!(
                    "gamma_lower = {}; worst-case energy ranges over [{:e}, {:e}]{}; bracket-based check",
                    to_f64(gamma_lower),
                    to_f64(energy_min),
                    to_f64(energy_max),
                    if monotone { "" } else { " (not monotone on grid)" }
                ),
            }
        }
        Err(e) => Admissibility {
            admissible: false,
            gamma_lower: Some(gamma_lower),
            energy_max: T::zero(),
            energy_min: T::zero(),
            grid: Vec::new(),
            diagnostic: format!("energy evaluation failed: {e}"),
        },
    }
}
