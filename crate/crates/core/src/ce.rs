//! Certainty-equivalent controller: the offline optimal law driven by a
//! disturbance prediction instead of the realized disturbance.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::{CostSpec, Horizon, Plant, Signal};
use crate::offline::{feedforward, LqrSolution};
use crate::policy::AffineFeedback;
use crate::riccati::{solve_dare, solve_finite_lqr, DEFAULT_TOL};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    Exact,
    Noisy { sigma: f64 },
    Custom,
}

#[derive(Debug, Clone)]
pub struct Prediction<T: Real> {
    pub w_bar: Signal<T>,
    pub source: PredictionSource,
}

impl<T: Real> Prediction<T> {
    pub fn new(w_bar: Signal<T>, source: PredictionSource) -> Result<Self> {
        if !w_bar.energy().is_finite() {
            return Err(Error::InvalidInput("prediction has infinite energy".into()));
        }
        Ok(Self { w_bar, source })
    }

    pub fn exact(w: &Signal<T>) -> Self {
        Self {
            w_bar: w.clone(),
            source: PredictionSource::Exact,
        }
    }

    pub fn custom(w_bar: Signal<T>) -> Result<Self> {
        Self::new(w_bar, PredictionSource::Custom)
    }
}

/// `u_t = −K_t x_t − (R + BᵀP_{t+1}B)⁻¹Bᵀ Σ_i (F^T)^i P w̄_{t+i}`.
///
/// For a finite horizon the prediction is zero-padded or truncated to `T`
/// steps. For the infinite horizon it is used as given, zero beyond its end.
pub fn ce_policy<T: Real>(
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    prediction: &Prediction<T>,
    horizon: Horizon,
) -> Result<AffineFeedback<T>> {
    let lqr = match horizon {
        Horizon::Finite(t) => LqrSolution::Finite(solve_finite_lqr(plant, cost, t)?),
        Horizon::Infinite => LqrSolution::Stationary(solve_dare(plant, cost, lit(DEFAULT_TOL))?),
    };
    ce_policy_with(plant, cost, &lqr, prediction)
}

/// As [`ce_policy`] with a precomputed LQR solution.
pub fn ce_policy_with<T: Real>(
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    lqr: &LqrSolution<T>,
    prediction: &Prediction<T>,
) -> Result<AffineFeedback<T>> {
    let w_bar = match lqr {
        LqrSolution::Finite(l) => fit(&prediction.w_bar, l.horizon()),
        LqrSolution::Stationary(_) => prediction.w_bar.clone(),
    };
    let (_, ff) = feedforward(plant, cost, lqr, &w_bar)?;
    Ok(AffineFeedback {
        gains: lqr.gains(),
        feedforward: ff,
    })
}

fn fit<T: Real>(w_bar: &Signal<T>, horizon: usize) -> Signal<T> {
    if w_bar.horizon() > horizon {
        log::warn!(
            "prediction of {} steps truncated to the horizon {horizon}",
            w_bar.horizon()
        );
    }
    if w_bar.horizon() == horizon {
        w_bar.clone()
    } else {
        w_bar.resized(horizon)
    }
}
