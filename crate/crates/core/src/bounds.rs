//! Dynamic regret against the clairvoyant offline optimum and the
//! analytic regret bounds of the H∞ and certainty-equivalent controllers.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hinf::{HinfSynthesis, WorstCase, UNIT_ENERGY_TOL};
use crate::linalg::{max_eigenvalue, min_eigenvalue, spectral_norm, spectral_radius};
use crate::lti::{simulate, total_cost_with_terminal, CostSpec, Horizon, Plant, Signal};
use crate::offline::{batch_oracle, feedback_value, offline_finite_with, offline_infinite_with, LqrSolution};
use crate::policy::Policy;
use crate::riccati::{input_coupling, solve_dare, solve_finite_lqr, DEFAULT_TOL};
use crate::scalar::{lit, to_f64, Real};

/// Smallest envelope constant returned by [`gelfand_constant`].
pub const MIN_ENVELOPE: f64 = 1.0 + 1e-12;
/// Largest window the envelope search will grow to.
pub const ENVELOPE_WINDOW_CAP: usize = 10_000;
const CROSS_CHECK_TOL: f64 = 1e-6;

/// Certificate for `‖F^i‖ ≤ cλ^i`, `i ≥ 1`.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeCertificate<T: Real> {
    pub c: T,
    pub lambda: T,
    /// Steps checked explicitly.
    pub window: usize,
    /// First `N` with `‖F^N‖ ≤ λ^N`; submultiplicativity covers `i > window`.
    pub crossing: usize,
    /// Step where `‖F^i‖/λ^i` peaks.
    pub peak_index: usize,
}

/// Envelope constant `c` with `‖F^i‖ ≤ cλ^i` for all `i ≥ 1`.
///
/// Checks `i = 1..window` explicitly, growing the window (up to 10⁴) until
/// some `N ≤ window` has `‖F^N‖ ≤ λ^N`. Writing `i = qN + r` then gives
/// `‖F^i‖ ≤ ‖F^N‖^q‖F^r‖ ≤ cλ^i` for every `i`.
pub fn gelfand_constant<T: Real>(f: &DMatrix<T>, lambda: T, window: usize) -> Result<EnvelopeCertificate<T>> {
    if !f.is_square() {
        return Err(Error::Dimension("envelope of a non-square matrix".into()));
    }
    if !(lambda > T::zero() && lambda < T::one()) {
        return Err(Error::InvalidInput(format!("envelope rate must lie in (0, 1), got {}", to_f64(lambda))));
    }
    let rho = spectral_radius(f);
    if rho >= lambda {
        return Err(Error::InvalidInput(format!(
            "envelope rate {} does not exceed the spectral radius {}",
            to_f64(lambda),
            to_f64(rho)
        )));
    }
    let scaled = f / lambda;
    let mut power = scaled.clone();
    let mut c: T = lit(MIN_ENVELOPE);
    let mut peak_index = 1;
    let mut crossing = None;
    let mut limit = window.clamp(1, ENVELOPE_WINDOW_CAP);
    let mut i = 1;
    loop {
        let ratio = spectral_norm(&power);
        if ratio > c {
            c = ratio;
            peak_index = i;
        }
        if crossing.is_none() && ratio <= T::one() {
            crossing = Some(i);
        }
        if i >= limit {
            if crossing.is_some() {
                break;
            }
            if limit >= ENVELOPE_WINDOW_CAP {
                return Err(Error::NonConvergence {
                    what: "Gelfand envelope window".into(),
                    iterations: ENVELOPE_WINDOW_CAP,
                });
            }
            limit = (limit * 2).min(ENVELOPE_WINDOW_CAP);
        }
        power = &power * &scaled;
        i += 1;
    }
    Ok(EnvelopeCertificate {
        c,
        lambda,
        window: limit,
        crossing: crossing.expect("loop exits only after a crossing"),
        peak_index,
    })
}

fn decay_rate<T: Real>(rho: T) -> T {
    (T::one() + rho) / lit(2.0)
}

/// Constants of the H∞ regret bound `k₁‖Δw‖ + k₂‖Δw‖²`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundConstants<T: Real> {
    pub kind: Horizon,
    pub k1: T,
    pub k2: T,
    pub c: T,
    pub lambda: T,
    pub lambda_inf: T,
    pub lambda_bar: T,
    /// `‖P̄‖` (infinite) or `‖P̄′‖` (finite).
    pub p_bar_norm: T,
    /// `‖P‖` of the stationary LQR solution.
    pub p_norm: T,
    /// `‖H‖` (infinite) or `‖H̄‖` (finite).
    pub h_norm: T,
    /// `‖H‖‖P‖²c²/(1−λ)²`, shared with the certainty-equivalent bound.
    pub tail_factor: T,
    pub tau_bar: Option<T>,
    pub eta_bar: Option<T>,
    pub x_bound: T,
    pub envelope: EnvelopeCertificate<T>,
    pub envelope_inf: EnvelopeCertificate<T>,
    /// Finite kind: whether the max-norm `H_i` dominates all `H_i` in the
    /// PSD order.
    pub h_bar_dominates: Option<bool>,
}

impl<T: Real> BoundConstants<T> {
    pub fn evaluate(&self, gap_norm: T) -> T {
        self.k1 * gap_norm + self.k2 * gap_norm * gap_norm
    }

    /// Certainty-equivalent bound `‖Δw̄‖²‖H‖‖P‖²c²/(1−λ)²` built from the
    /// same tail factor as `k₂`.
    pub fn ce_bound(&self, gap_norm: T) -> T {
        gap_norm * gap_norm * self.tail_factor
    }
}

struct Stationary<T: Real> {
    h_norm: T,
    p_norm: T,
    lambda: T,
    envelope: EnvelopeCertificate<T>,
    tail_factor: T,
}

fn stationary_parts<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, c_override: Option<T>) -> Result<Stationary<T>> {
    let lqr = solve_dare(plant, cost, lit(DEFAULT_TOL))?;
    let h_norm = spectral_norm(&input_coupling(plant, cost, &lqr.p)?);
    let p_norm = spectral_norm(&lqr.p);
    let lambda = decay_rate(lqr.spectral_radius);
    let envelope = gelfand_constant(&lqr.f, lambda, 1000)?;
    let c = c_override.unwrap_or(envelope.c);
    let one_minus = T::one() - lambda;
    let tail_factor = h_norm * p_norm * p_norm * c * c / (one_minus * one_minus);
    Ok(Stationary {
        h_norm,
        p_norm,
        lambda,
        envelope,
        tail_factor,
    })
}

/// Coefficient `‖H‖‖P‖²c²/(1−λ)²` of the certainty-equivalent bound, with
/// `c` the envelope constant of the LQR closed loop.
pub fn ce_coefficient<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>) -> Result<T> {
    Ok(stationary_parts(plant, cost, None)?.tail_factor)
}

/// `‖Δw̄‖²‖H‖‖P‖²c²/(1−λ)²`.
pub fn ce_bound<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, gap_norm: T) -> Result<T> {
    Ok(gap_norm * gap_norm * ce_coefficient(plant, cost)?)
}

fn check_initial_state<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>) -> Result<()> {
    let norm = plant.x0().norm();
    if norm > cost.x_bound() {
        return Err(Error::BoundNotApplicable(format!(
            "‖x0‖ = {} exceeds the initial-state bound X = {}",
            to_f64(norm),
            to_f64(cost.x_bound())
        )));
    }
    Ok(())
}

fn check_unit_energy<T: Real>(worst_case: &WorstCase<T>, synthesis: &HinfSynthesis<T>) -> Result<()> {
    if worst_case.gamma != synthesis.gamma {
        return Err(Error::BoundNotApplicable("worst case belongs to a different γ".into()));
    }
    let dev = (worst_case.energy - T::one()).abs();
    if dev > lit(UNIT_ENERGY_TOL) {
        return Err(Error::BoundNotApplicable(format!(
            "worst-case energy is {}, not 1 ± {UNIT_ENERGY_TOL:e}",
            to_f64(worst_case.energy)
        )));
    }
    Ok(())
}

fn stationary_feedback<'a, T: Real>(synthesis: &'a HinfSynthesis<T>) -> Result<&'a DMatrix<T>> {
    synthesis
        .gains
        .stationary()
        .ok_or_else(|| Error::InvalidInput("infinite-horizon constants need the stationary controller".into()))
}

/// Constants `k₁, k₂` of the infinite-horizon bound.
pub fn infinite_constants<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, synthesis: &HinfSynthesis<T>) -> Result<BoundConstants<T>> {
    let k_inf = stationary_feedback(synthesis)?;
    let f_inf = plant.a() - plant.b() * k_inf;
    let rho_inf = spectral_radius(&f_inf);
    if rho_inf >= T::one() {
        return Err(Error::BoundNotApplicable(format!(
            "H∞ closed loop is unstable (spectral radius {})",
            to_f64(rho_inf)
        )));
    }
    let lambda_inf = decay_rate(rho_inf);
    let envelope_inf = gelfand_constant(&f_inf, lambda_inf, 1000)?;
    let base = stationary_parts(plant, cost, None)?;
    let c = base.envelope.c.max(envelope_inf.c);
    let parts = stationary_parts(plant, cost, Some(c))?;
    let p_inf = feedback_value(plant, cost, k_inf)?;
    let p_bar_norm = parts.p_norm.max(spectral_norm(&p_inf));
    let lambda_bar = parts.lambda.max(lambda_inf);
    let x = cost.x_bound();
    let two: T = lit(2.0);
    let four: T = lit(4.0);
    let tail = parts.tail_factor;
    let k2 = two * p_bar_norm + tail;
    let k1 = four * p_bar_norm + four * c * p_bar_norm * (two + x) * (lambda_bar / (T::one() - lambda_bar)) + two * tail;
    Ok(BoundConstants {
        kind: Horizon::Infinite,
        k1,
        k2,
        c,
        lambda: parts.lambda,
        lambda_inf,
        lambda_bar,
        p_bar_norm,
        p_norm: parts.p_norm,
        h_norm: parts.h_norm,
        tail_factor: tail,
        tau_bar: None,
        eta_bar: None,
        x_bound: x,
        envelope: parts.envelope,
        envelope_inf,
        h_bar_dominates: None,
    })
}

/// Infinite-horizon H∞ bound at `gap_norm = ‖w − w*‖`.
pub fn hinf_bound_infinite<T: Real>(
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    synthesis: &HinfSynthesis<T>,
    worst_case: &WorstCase<T>,
    gap_norm: T,
) -> Result<(T, BoundConstants<T>)> {
    check_initial_state(plant, cost)?;
    check_unit_energy(worst_case, synthesis)?;
    let constants = infinite_constants(plant, cost, synthesis)?;
    Ok((constants.evaluate(gap_norm), constants))
}

/// Constants `k₁′, k₂′` of the finite-horizon bound.
pub fn finite_constants<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, synthesis: &HinfSynthesis<T>) -> Result<BoundConstants<T>> {
    let horizon = synthesis
        .horizon
        .finite()
        .ok_or_else(|| Error::InvalidInput("finite-horizon constants need a finite-horizon controller".into()))?;
    let q_min = min_eigenvalue(cost.q());
    if q_min <= T::zero() {
        return Err(Error::BoundNotApplicable(format!(
            "λ_min(Q) = {} must be positive",
            to_f64(q_min)
        )));
    }
    let lqr = solve_finite_lqr(plant, cost, horizon)?;
    // cost-to-go matrices of the finite-horizon H∞ controller
    let mut p_inf = vec![cost.q_terminal().clone()];
    for t in (0..horizon).rev() {
        let k = synthesis.gain(t);
        let f = plant.a() - plant.b() * k;
        let next = p_inf.last().expect("non-empty");
        p_inf.push(f.transpose() * next * &f + cost.q() + k.transpose() * cost.r() * k);
    }
    let p_bar_norm = lqr
        .p
        .iter()
        .chain(p_inf.iter())
        .map(max_eigenvalue)
        .fold(T::zero(), |acc, l| acc.max(l));
    let hs = (0..horizon).map(|t| lqr.h(plant, cost, t)).collect::<Result<Vec<_>>>()?;
    let (h_bar, h_norm) = hs
        .iter()
        .map(|h| (h, spectral_norm(h)))
        .fold((&hs[0], T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
    let slack: T = lit(-1e-12);
    let h_bar_dominates = hs.iter().all(|h| min_eigenvalue(&(h_bar - h)) >= slack * (T::one() + h_norm));
    if !h_bar_dominates {
        log::warn!("max-norm H_i does not dominate every H_i in the PSD order");
    }
    let tau2 = p_bar_norm / q_min;
    let tau = tau2.sqrt();
    let eta = (T::one() - T::one() / tau2).max(T::zero()).sqrt();
    let geometric = geometric_sum(eta, horizon);
    let x = cost.x_bound();
    let two: T = lit(2.0);
    let quad = tau2 * h_norm * p_bar_norm * geometric * geometric;
    let k2 = p_bar_norm * (two + quad);
    let k1 = two * p_bar_norm * (two + two * tau * eta * (two + x) * geometric + quad);

    let Stationary {
        lambda,
        p_norm,
        envelope,
        tail_factor,
        ..
    } = stationary_parts(plant, cost, None)?;
    let f_inf = plant.a() - plant.b() * synthesis.gain(0);
    let rho_inf = spectral_radius(&f_inf);
    let lambda_inf = decay_rate(rho_inf.min(lit(1.0 - 1e-12)));
    let envelope_inf = gelfand_constant(&f_inf, lambda_inf, 1000)?;
    Ok(BoundConstants {
        kind: Horizon::Finite(horizon),
        k1,
        k2,
        c: envelope.c.max(envelope_inf.c),
        lambda,
        lambda_inf,
        lambda_bar: lambda.max(lambda_inf),
        p_bar_norm,
        p_norm,
        h_norm,
        tail_factor,
        tau_bar: Some(tau),
        eta_bar: Some(eta),
        x_bound: x,
        envelope,
        envelope_inf,
        h_bar_dominates: Some(h_bar_dominates),
    })
}

/// `(1 − η^T)/(1 − η)`, i.e. `Σ_{i<T} η^i`.
pub fn geometric_sum<T: Real>(eta: T, horizon: usize) -> T {
    if eta < T::one() {
        (T::one() - eta.powi(horizon as i32)) / (T::one() - eta)
    } else {
        lit(horizon as f64)
    }
}

/// Finite-horizon H∞ bound at `gap_norm = ‖w − w*‖`.
pub fn hinf_bound_finite<T: Real>(
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    synthesis: &HinfSynthesis<T>,
    worst_case: &WorstCase<T>,
    gap_norm: T,
) -> Result<(T, BoundConstants<T>)> {
    check_initial_state(plant, cost)?;
    check_unit_energy(worst_case, synthesis)?;
    let constants = finite_constants(plant, cost, synthesis)?;
    Ok((constants.evaluate(gap_norm), constants))
}

/// Regret of one policy on one disturbance realization.
#[derive(Debug, Clone, Serialize)]
pub struct RegretReport<T: Real> {
    pub policy: String,
    pub horizon: Horizon,
    pub w: Signal<T>,
    pub policy_cost: T,
    pub offline_cost: T,
    pub regret: T,
    pub gap_norm: Option<T>,
    pub bound_value: Option<T>,
    pub bound_constants: Option<BoundConstants<T>>,
    pub slack: Option<T>,
    /// Why no bound is attached, if none is.
    pub bound_note: Option<String>,
}

impl<T: Real> RegretReport<T> {
    pub fn with_bound(mut self, gap_norm: T, bound: Result<(T, BoundConstants<T>)>) -> Self {
        self.gap_norm = Some(gap_norm);
        match bound {
            Ok((value, constants)) => {
                self.slack = Some(value - self.regret);
                self.bound_value = Some(value);
                self.bound_constants = Some(constants);
                self.bound_note = None;
            }
            Err(e) => self.bound_note = Some(e.to_string()),
        }
        self
    }

    /// Attaches a bound that has no constants of its own, such as the
    /// certainty-equivalent bound.
    pub fn with_scalar_bound(mut self, gap_norm: T, bound: Result<T>) -> Self {
        self.gap_norm = Some(gap_norm);
        match bound {
            Ok(value) => {
                self.slack = Some(value - self.regret);
                self.bound_value = Some(value);
                self.bound_note = None;
            }
            Err(e) => self.bound_note = Some(e.to_string()),
        }
        self
    }
}

/// Offline comparator for repeated regret evaluations on one plant.
#[derive(Debug, Clone)]
pub struct RegretEvaluator<T: Real> {
    pub horizon: Horizon,
    pub lqr: LqrSolution<T>,
    /// Re-derive every finite-horizon optimum with the batch oracle.
    pub cross_check: bool,
}

impl<T: Real> RegretEvaluator<T> {
    pub fn new(plant: &Plant<T>, cost: &CostSpec<T>, horizon: Horizon) -> Result<Self> {
        let lqr = match horizon {
            Horizon::Finite(t) => LqrSolution::Finite(solve_finite_lqr(plant, cost, t)?),
            Horizon::Infinite => LqrSolution::Stationary(solve_dare(plant, cost, lit(DEFAULT_TOL))?),
        };
        Ok(Self {
            horizon,
            lqr,
            cross_check: false,
        })
    }

    pub fn with_cross_check(mut self, on: bool) -> Self {
        self.cross_check = on;
        self
    }

    /// Optimal offline cost for `w`.
    pub fn offline_cost(&self, plant: &Plant<T>, cost: &CostSpec<T>, w: &Signal<T>) -> Result<T> {
        let opt = match &self.lqr {
            LqrSolution::Finite(l) => offline_finite_with(plant, cost, l, w)?,
            LqrSolution::Stationary(l) => offline_infinite_with(plant, cost, l, w)?,
        };
        if self.cross_check {
            if let Horizon::Finite(t) = self.horizon {
                let batch = batch_oracle(plant, cost, w, t)?;
                let scale = T::one().max(opt.cost.abs());
                if (batch.cost - opt.cost).abs() > lit::<T>(CROSS_CHECK_TOL) * scale {
                    return Err(Error::InvalidInput(format!(
                        "offline recursion ({}) and batch oracle ({}) disagree",
                        to_f64(opt.cost),
                        to_f64(batch.cost)
                    )));
                }
            }
        }
        Ok(opt.cost)
    }

    /// Cost of `policy` on `w`; the infinite horizon adds the stationary
    /// value of the policy's tail feedback at `x_T`.
    pub fn policy_cost(&self, plant: &Plant<T>, cost: &CostSpec<T>, policy: &dyn Policy<T>, w: &Signal<T>) -> Result<T> {
        let terminal = match self.horizon {
            Horizon::Finite(_) => cost.q_terminal().clone(),
            Horizon::Infinite => {
                let k = policy.tail_gain().ok_or_else(|| {
                    Error::InvalidInput("infinite-horizon regret needs a policy with a stationary tail feedback".into())
                })?;
                feedback_value(plant, cost, k)?
            }
        };
        self.policy_cost_with_terminal(plant, cost, policy, w, &terminal)
    }

    pub fn policy_cost_with_terminal(
        &self,
        plant: &Plant<T>,
        cost: &CostSpec<T>,
        policy: &dyn Policy<T>,
        w: &Signal<T>,
        terminal: &DMatrix<T>,
    ) -> Result<T> {
        self.check_length(w)?;
        let traj = simulate(plant, policy, w)?;
        total_cost_with_terminal(&traj, cost, terminal)
    }

    fn check_length(&self, w: &Signal<T>) -> Result<()> {
        match self.horizon {
            Horizon::Finite(t) if t != w.horizon() => Err(Error::InvalidInput(format!(
                "horizon {t} does not match the disturbance length {}",
                w.horizon()
            ))),
            _ => Ok(()),
        }
    }

    pub fn report(&self, plant: &Plant<T>, cost: &CostSpec<T>, policy: &dyn Policy<T>, tag: &str, w: &Signal<T>) -> Result<RegretReport<T>> {
        let policy_cost = self.policy_cost(plant, cost, policy, w)?;
        let offline_cost = self.offline_cost(plant, cost, w)?;
        Ok(RegretReport {
            policy: tag.to_string(),
            horizon: self.horizon,
            w: w.clone(),
            policy_cost,
            offline_cost,
            regret: policy_cost - offline_cost,
            gap_norm: None,
            bound_value: None,
            bound_constants: None,
            slack: None,
            bound_note: None,
        })
    }
}

/// `J(u^A, w) − J(u*, w)` for a single realization, without bounds.
pub fn dynamic_regret<T: Real>(
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    policy: &dyn Policy<T>,
    tag: &str,
    w: &Signal<T>,
    horizon: Horizon,
) -> Result<RegretReport<T>> {
    RegretEvaluator::new(plant, cost, horizon)?.report(plant, cost, policy, tag, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ce::{ce_policy, Prediction};
    use crate::hinf::find_gamma_bar;
    use crate::offline::offline_finite;
    use nalgebra::dmatrix;

    fn scalar(x0: f64) -> (Plant<f64>, CostSpec<f64>) {
        (Plant::scalar(1.0, 1.0, x0), CostSpec::scalar(1.0, 1.0, 1.0, x0.abs()).unwrap())
    }

    #[test]
    fn envelope_examples() {
        let f: DMatrix<f64> = dmatrix![0.5, 0.0; 0.0, -0.3];
        let cert = gelfand_constant(&f, 0.75, 100).unwrap();
        assert_eq!(cert.c, MIN_ENVELOPE);
        let cert = gelfand_constant(&dmatrix![0.38197], 0.69098, 100).unwrap();
        assert_eq!(cert.c, MIN_ENVELOPE);
        let j = dmatrix![0.5, 10.0; 0.0, 0.5];
        let cert = gelfand_constant(&j, 0.75, 10).unwrap();
        assert!(cert.c > 10.0 / 0.75 - 1e-9);
        let mut power = j.clone();
        let mut scale = 0.75;
        for _ in 0..400 {
            assert!(spectral_norm(&power) <= cert.c * scale * (1.0 + 1e-12));
            power = &power * &j;
            scale *= 0.75;
        }
    }

    #[test]
    fn envelope_rejects_bad_rate() {
        assert!(gelfand_constant(&dmatrix![0.9], 0.5, 10).is_err());
        assert!(gelfand_constant(&dmatrix![0.9], 1.0, 10).is_err());
    }

    #[test]
    fn scalar_constants() {
        let (plant, cost) = scalar(4.0);
        let gb = find_gamma_bar(&plant, &cost, Horizon::Infinite, 1e-9).unwrap();
        let (zero, k) = hinf_bound_infinite(&plant, &cost, &gb.synthesis, &gb.worst_case, 0.0).unwrap();
        assert_eq!(zero, 0.0);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((k.h_norm - 1.0 / (1.0 + phi)).abs() < 1e-9);
        assert!((k.lambda - (1.0 + 1.0 / (1.0 + phi)) / 2.0).abs() < 1e-9);
        assert!((k.p_norm - phi).abs() < 1e-9);
        let tail = (1.0 / (1.0 + phi)) * phi * phi / (1.0 - k.lambda).powi(2);
        assert!((k.tail_factor - tail).abs() < 1e-6 * tail);
        assert_eq!(k.ce_bound(1.5), 1.5 * 1.5 * k.tail_factor);
        for x in [0.1, 0.5, 1.0, 2.0] {
            assert!(k.ce_bound(x) < k.evaluate(x));
            assert!(k.evaluate(2.0 * x) > 2.0 * k.evaluate(x));
        }
    }

    #[test]
    fn finite_bound_grows_with_horizon() {
        let (plant, cost) = scalar(4.0);
        let short = find_gamma_bar(&plant, &cost, Horizon::Finite(10), 1e-9).unwrap();
        let long = find_gamma_bar(&plant, &cost, Horizon::Finite(100), 1e-9).unwrap();
        let ks = finite_constants(&plant, &cost, &short.synthesis).unwrap();
        let kl = finite_constants(&plant, &cost, &long.synthesis).unwrap();
        let eta = kl.eta_bar.unwrap();
        assert!(eta > 0.0 && eta < 1.0);
        assert!(geometric_sum(eta, 100) > geometric_sum(eta, 10));
        assert!(geometric_sum(eta, 100000) <= 1.0 / (1.0 - eta));
        assert!(kl.evaluate(1.0) >= ks.evaluate(1.0));
        assert_eq!(kl.evaluate(0.0), 0.0);
        eprintln!("{ks:?}\n{kl:?}");
    }

    #[test]
    fn finite_bound_needs_positive_q() {
        let plant = Plant::scalar(1.0, 1.0, 1.0);
        let cost = CostSpec::scalar(0.0, 1.0, 1.0, 1.0).unwrap();
        let syn = crate::hinf::build_controller(&plant, &cost, 5.0, Horizon::Finite(5)).unwrap();
        assert!(matches!(finite_constants(&plant, &cost, &syn), Err(Error::BoundNotApplicable(_))));
    }

    #[test]
    fn regret_of_offline_and_perfect_ce_vanish() {
        let (plant, cost) = scalar(4.0);
        let w = Signal::scalar(&[0.3, -0.1, 0.5, 0.2]).unwrap();
        let opt = offline_finite(&plant, &cost, &w, 4).unwrap();
        let r = dynamic_regret(&plant, &cost, &opt.policy(), "offline", &w, Horizon::Finite(4)).unwrap();
        assert!(r.regret.abs() < 1e-9);
        for horizon in [Horizon::Finite(4), Horizon::Infinite] {
            let ce = ce_policy(&plant, &cost, &Prediction::exact(&w), horizon).unwrap();
            let r = dynamic_regret(&plant, &cost, &ce, "ce", &w, horizon).unwrap();
            assert!(r.regret.abs() <= 1e-8 * (1.0 + r.offline_cost));
        }
    }

    #[test]
    fn evaluator_cross_check() {
        let (plant, cost) = scalar(4.0);
        let w = Signal::scalar(&[0.3, -0.1, 0.5]).unwrap();
        let eval = RegretEvaluator::new(&plant, &cost, Horizon::Finite(3)).unwrap().with_cross_check(true);
        assert!(eval.offline_cost(&plant, &cost, &w).is_ok());
    }
}
