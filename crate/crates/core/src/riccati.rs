//! Lyapunov iteration, LQR Riccati equations and the coupled generalized
//! Riccati equations of the H∞ game.
//!
//! Stationary solutions are obtained by fixed-point value iteration. The
//! stopping rule scales the step tolerance by `1 − r`, where `r` is the
//! observed (or known) contraction ratio, so the distance to the fixed
//! point rather than the last step is what ends up below `tol`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{inverse, min_eigenvalue, spd_solve, spectral_radius, symmetrize};
use crate::lti::{CostSpec, Horizon, Plant};
use crate::scalar::{lit, to_f64, Real};

/// Default relative tolerance for the stationary iterations.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Hard cap on fixed-point iterations.
pub const ITERATION_CAP: usize = 1_000_000;
/// Norm beyond which an iteration is declared divergent.
const BLOWUP_NORM: f64 = 1e12;
/// `λ_min(γ²I − M) > FEASIBILITY_MARGIN` counts as strictly positive.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

enum Outcome<T: Real> {
    Converged { value: DMatrix<T>, iterations: usize },
    Diverged { iterations: usize },
    CapReached,
}

fn fixed_point<T, F>(init: DMatrix<T>, tol: T, contraction_hint: T, mut step: F) -> Result<Outcome<T>>
where
    T: Real,
    F: FnMut(&DMatrix<T>) -> Result<DMatrix<T>>,
{
    let floor: T = T::default_epsilon() * lit(64.0);
    let max_ratio: T = lit(1.0 - 1e-6);
    let blowup: T = lit(BLOWUP_NORM);
    let mut x = init;
    let mut prev_delta: Option<T> = None;
    for k in 1..=ITERATION_CAP {
        let next = step(&x)?;
        let norm = next.norm();
        if !norm.is_finite() || norm > blowup {
            return Ok(Outcome::Diverged { iterations: k });
        }
        let delta = (&next - &x).norm();
        let observed = match prev_delta {
            Some(p) if p > T::zero() => (delta / p).min(max_ratio),
            _ => T::zero(),
        };
        let ratio = observed.max(contraction_hint).min(max_ratio);
        let threshold = (tol * (T::one() - ratio)).max(floor) * T::one().max(norm);
        x = next;
        if delta <= threshold {
            return Ok(Outcome::Converged {
                value: x,
                iterations: k,
            });
        }
        prev_delta = Some(delta);
    }
    Ok(Outcome::CapReached)
}

/// Fixed point of `P ↦ FᵀPF + Q` started from `p0`.
///
/// Requires `ρ(F) < 1`; the result satisfies
/// `‖P − (FᵀPF + Q)‖ ≤ tol·max(1, ‖P‖)` and does not depend on `p0`
/// beyond that tolerance.
pub fn lyapunov_fixed_point<T: Real>(f: &DMatrix<T>, q: &DMatrix<T>, p0: &DMatrix<T>, tol: T) -> Result<DMatrix<T>> {
    let n = f.nrows();
    if !f.is_square() || q.shape() != (n, n) || p0.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Lyapunov iteration needs square F, Q, P0 of equal size, got {:?}, {:?}, {:?}",
            f.shape(),
            q.shape(),
            p0.shape()
        )));
    }
    let rho = spectral_radius(f);
    if rho >= T::one() - lit(1e-12) {
        return Err(Error::Divergence {
            spectral_radius: to_f64(rho),
        });
    }
    let ft = f.transpose();
    match fixed_point(p0.clone(), tol, rho * rho, |p| Ok(&ft * p * f + q))? {
        Outcome::Converged { value, .. } => Ok(value),
        Outcome::Diverged { .. } => Err(Error::Divergence {
            spectral_radius: to_f64(rho),
        }),
        Outcome::CapReached => Err(Error::NonConvergence {
            what: "Lyapunov iteration".into(),
            iterations: ITERATION_CAP,
        }),
    }
}

/// Stationary LQR solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct StationaryLqr<T: Real> {
    pub p: DMatrix<T>,
    /// `K = (R + BᵀPB)⁻¹BᵀPA`
    pub k: DMatrix<T>,
    /// `F = A − BK`
    pub f: DMatrix<T>,
    pub spectral_radius: T,
    pub iterations: usize,
}

impl<T: Real> StationaryLqr<T> {
    /// `H = B(R + BᵀPB)⁻¹Bᵀ`.
    pub fn h(&self, plant: &Plant<T>, cost: &CostSpec<T>) -> Result<DMatrix<T>> {
        input_coupling(plant, cost, &self.p)
    }
}

/// Finite-horizon LQR: `P_0 … P_T` with `P_T = Q_T`, and `K_t`, `F_t` for `t < T`.
#[derive(Debug, Clone)]
pub struct FiniteLqr<T: Real> {
    pub p: Vec<DMatrix<T>>,
    pub k: Vec<DMatrix<T>>,
    pub f: Vec<DMatrix<T>>,
}

impl<T: Real> FiniteLqr<T> {
    pub fn horizon(&self) -> usize {
        self.k.len()
    }

    /// `H_t = B(R + BᵀP_{t+1}B)⁻¹Bᵀ`.
    pub fn h(&self, plant: &Plant<T>, cost: &CostSpec<T>, t: usize) -> Result<DMatrix<T>> {
        input_coupling(plant, cost, &self.p[t + 1])
    }
}

/// `B(R + BᵀPB)⁻¹Bᵀ`.
pub fn input_coupling<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, p: &DMatrix<T>) -> Result<DMatrix<T>> {
    let b = plant.b();
    let s = cost.r() + b.transpose() * p * b;
    Ok(b * spd_solve(&s, &b.transpose(), "R + BᵀPB")?)
}

/// `(R + BᵀPB)⁻¹BᵀPA`.
pub fn lqr_gain<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, p: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (a, b) = (plant.a(), plant.b());
    let bt_p = b.transpose() * p;
    let s = cost.r() + &bt_p * b;
    spd_solve(&s, &(bt_p * a), "R + BᵀPB")
}

fn riccati_step<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, p: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
    let k = lqr_gain(plant, cost, p)?;
    let f = plant.a() - plant.b() * &k;
    let next = f.transpose() * p * &f + cost.q() + k.transpose() * cost.r() * &k;
    Ok((next, k, f))
}

/// Solves the DARE by value iteration from `P = Q_T`.
pub fn solve_dare<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, tol: T) -> Result<StationaryLqr<T>> {
    cost.check_plant(plant)?;
    let outcome = fixed_point(cost.q_terminal().clone(), tol, T::zero(), |p| {
        let (next, _, _) = riccati_step(plant, cost, p)?;
        Ok(symmetrize(&next).0)
    })?;
    let (p, iterations) = match outcome {
        Outcome::Converged { value, iterations } => (value, iterations),
        Outcome::Diverged { iterations } => {
            return Err(Error::Unstabilizable(format!(
                "value iteration diverged after {iterations} steps"
            )))
        }
        Outcome::CapReached => {
            return Err(Error::Unstabilizable(format!(
                "value iteration did not converge within {ITERATION_CAP} steps"
            )))
        }
    };
    let k = lqr_gain(plant, cost, &p)?;
    let f = plant.a() - plant.b() * &k;
    let rho = spectral_radius(&f);
    if rho >= T::one() {
        return Err(Error::Unstabilizable(format!(
            "converged solution leaves the closed loop unstable (spectral radius {})",
            to_f64(rho)
        )));
    }
    Ok(StationaryLqr {
        p,
        k,
        f,
        spectral_radius: rho,
        iterations,
    })
}

/// Backward difference Riccati recursion of the finite-horizon LQR.
pub fn solve_finite_lqr<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, horizon: usize) -> Result<FiniteLqr<T>> {
    cost.check_plant(plant)?;
    if horizon == 0 {
        return Err(Error::InvalidInput("finite LQR needs a horizon of at least 1".into()));
    }
    let mut p = vec![cost.q_terminal().clone(); horizon + 1];
    let mut k = Vec::with_capacity(horizon);
    let mut f = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let (next, kt, ft) = riccati_step(plant, cost, &p[t + 1])?;
        p[t] = next;
        k.push(kt);
        f.push(ft);
    }
    k.reverse();
    f.reverse();
    Ok(FiniteLqr { p, k, f })
}

/// Solution of the coupled generalized Riccati equations for a given γ.
#[derive(Debug, Clone)]
pub struct HinfRiccati<T: Real> {
    pub gamma: T,
    pub horizon: Horizon,
    /// `M_0 … M_T` (finite) or `[M]` (stationary).
    pub m: Vec<DMatrix<T>>,
    /// `Λ_0 … Λ_{T−1}` (finite) or `[Λ]` (stationary).
    pub lambda: Vec<DMatrix<T>>,
    pub lambda_inv: Vec<DMatrix<T>>,
    /// `min_t λ_min(γ²I − M_{t+1})`.
    pub xi_min_eig: T,
    pub feasible: bool,
    /// `ρ(Λ⁻¹A)` for the stationary solution.
    pub sp_spectral_radius: Option<T>,
    pub iterations: usize,
}

impl<T: Real> HinfRiccati<T> {
    /// `M_{t+1}`, or the stationary `M`.
    pub fn m_next(&self, t: usize) -> &DMatrix<T> {
        match self.horizon {
            Horizon::Finite(_) => &self.m[t + 1],
            Horizon::Infinite => &self.m[0],
        }
    }

    pub fn lambda_at(&self, t: usize) -> &DMatrix<T> {
        match self.horizon {
            Horizon::Finite(_) => &self.lambda[t],
            Horizon::Infinite => &self.lambda[0],
        }
    }

    pub fn lambda_inv_at(&self, t: usize) -> &DMatrix<T> {
        match self.horizon {
            Horizon::Finite(_) => &self.lambda_inv[t],
            Horizon::Infinite => &self.lambda_inv[0],
        }
    }

    /// `M_0`, or the stationary `M`.
    pub fn m0(&self) -> &DMatrix<T> {
        &self.m[0]
    }
}

/// `BR⁻¹Bᵀ − γ⁻²I`.
fn game_coupling<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T) -> Result<DMatrix<T>> {
    let b = plant.b();
    let br = b * spd_solve(cost.r(), &b.transpose(), "R")?;
    let n = plant.n();
    Ok(br - DMatrix::identity(n, n) / (gamma * gamma))
}

/// `Λ(γ) = I + (BR⁻¹Bᵀ − γ⁻²I)M`.
pub fn lambda_of<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T, m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = plant.n();
    Ok(DMatrix::identity(n, n) + game_coupling(plant, cost, gamma)? * m)
}

fn xi_min<T: Real>(gamma: T, m: &DMatrix<T>) -> T {
    let n = m.nrows();
    min_eigenvalue(&(DMatrix::identity(n, n) * (gamma * gamma) - m))
}

fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma must be positive and finite, got {}",
            to_f64(gamma)
        )));
    }
    Ok(())
}

fn infeasible<T: Real>(gamma: T, reason: impl Into<String>) -> Error {
    Error::Infeasible {
        gamma: to_f64(gamma),
        reason: reason.into(),
    }
}

/// Backward recursion `Λ_t = I + (BR⁻¹Bᵀ − γ⁻²I)M_{t+1}`,
/// `M_t = Q + AᵀM_{t+1}Λ_t⁻¹A` from `M_T = Q_T`.
pub fn hinf_riccati_finite<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T, horizon: usize) -> Result<HinfRiccati<T>> {
    cost.check_plant(plant)?;
    check_gamma(gamma)?;
    if horizon == 0 {
        return Err(Error::InvalidInput("H-infinity recursion needs a horizon of at least 1".into()));
    }
    let n = plant.n();
    let coupling = game_coupling(plant, cost, gamma)?;
    let a = plant.a();
    let at = a.transpose();
    let mut m = vec![cost.q_terminal().clone(); horizon + 1];
    let mut lambda = vec![DMatrix::zeros(n, n); horizon];
    let mut lambda_inv = vec![DMatrix::zeros(n, n); horizon];
    let mut xi = T::max_value().unwrap_or_else(|| lit(f64::MAX));
    for t in (0..horizon).rev() {
        let m_next = &m[t + 1];
        xi = xi.min(xi_min(gamma, m_next));
        let lam = DMatrix::identity(n, n) + &coupling * m_next;
        let inv = inverse(&lam, "Λ_t").map_err(|_| infeasible(gamma, format!("Λ_t is singular at t = {t}")))?;
        let mt = cost.q() + &at * m_next * &inv * a;
        if mt.iter().any(|v| !v.is_finite()) {
            return Err(infeasible(gamma, format!("M_t is not finite at t = {t}")));
        }
        m[t] = mt;
        lambda[t] = lam;
        lambda_inv[t] = inv;
    }
    Ok(HinfRiccati {
        gamma,
        horizon: Horizon::Finite(horizon),
        m,
        lambda,
        lambda_inv,
        xi_min_eig: xi,
        feasible: xi > lit(FEASIBILITY_MARGIN),
        sp_spectral_radius: None,
        iterations: horizon,
    })
}

/// Stationary solution of the coupled Riccati equations, iterating the
/// backward recursion from `M = Q_T`.
///
/// Feasibility requires `γ²I − M ≻ 0` and `ρ(Λ⁻¹A) < 1`. Divergence,
/// a singular `Λ` or an iterate leaving the PSD cone are reported as
/// [`Error::Infeasible`].
pub fn hinf_riccati_infinite<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T, tol: T) -> Result<HinfRiccati<T>> {
    cost.check_plant(plant)?;
    check_gamma(gamma)?;
    let n = plant.n();
    let coupling = game_coupling(plant, cost, gamma)?;
    let a = plant.a();
    let at = a.transpose();
    let psd_tol: T = lit(FEASIBILITY_MARGIN);
    let outcome = fixed_point(cost.q_terminal().clone(), tol, T::zero(), |m| {
        let lam = DMatrix::identity(n, n) + &coupling * m;
        let inv = inverse(&lam, "Λ").map_err(|_| infeasible(gamma, "Λ became singular during iteration"))?;
        let next = symmetrize(&(cost.q() + &at * m * inv * a)).0;
        if min_eigenvalue(&next) < -psd_tol * T::one().max(next.norm()) {
            return Err(infeasible(gamma, "iterate left the positive semidefinite cone"));
        }
        Ok(next)
    })?;
    let (m, iterations) = match outcome {
        Outcome::Converged { value, iterations } => (value, iterations),
        Outcome::Diverged { iterations } => {
            return Err(infeasible(gamma, format!("Riccati iteration diverged after {iterations} steps")))
        }
        Outcome::CapReached => {
            return Err(infeasible(
                gamma,
                format!("Riccati iteration did not converge within {ITERATION_CAP} steps"),
            ))
        }
    };
    let lam = DMatrix::identity(n, n) + &coupling * &m;
    let inv = inverse(&lam, "Λ").map_err(|_| infeasible(gamma, "stationary Λ is singular"))?;
    let xi = xi_min(gamma, &m);
    let rho = spectral_radius(&(&inv * a));
    Ok(HinfRiccati {
        gamma,
        horizon: Horizon::Infinite,
        m: vec![m],
        lambda: vec![lam],
        lambda_inv: vec![inv],
        xi_min_eig: xi,
        feasible: xi > lit(FEASIBILITY_MARGIN) && rho < T::one(),
        sp_spectral_radius: Some(rho),
        iterations,
    })
}

/// Dispatches on the horizon kind.
pub fn hinf_riccati<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gamma: T, horizon: Horizon, tol: T) -> Result<HinfRiccati<T>> {
    match horizon {
        Horizon::Finite(t) => hinf_riccati_finite(plant, cost, gamma, t),
        Horizon::Infinite => hinf_riccati_infinite(plant, cost, gamma, tol),
    }
}
