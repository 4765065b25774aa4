//! Control policies `(t, x_t) ↦ u_t`.
//!
//! Every controller in the crate (H∞, LQR, offline, certainty equivalent)
//! is expressed through [`Policy`], so a single `simulate` drives them all.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lti::Signal;
use crate::scalar::Real;

pub trait Policy<T: Real>: Sync {
    fn input(&self, t: usize, x: &DVector<T>) -> Result<DVector<T>>;

    /// Stationary gain `K` the policy reduces to (`u = −Kx`) once its
    /// horizon-dependent parts have run out. Needed to evaluate
    /// infinite-horizon costs in closed form.
    fn tail_gain(&self) -> Option<&DMatrix<T>> {
        None
    }
}

/// A value that is either constant in time or given per step.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<M> {
    Stationary(M),
    PerStep(Vec<M>),
}

impl<M> Schedule<M> {
    pub fn at(&self, t: usize) -> Option<&M> {
        match self {
            Schedule::Stationary(m) => Some(m),
            Schedule::PerStep(ms) => ms.get(t),
        }
    }

    pub fn stationary(&self) -> Option<&M> {
        match self {
            Schedule::Stationary(m) => Some(m),
            Schedule::PerStep(_) => None,
        }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            Schedule::Stationary(_) => None,
            Schedule::PerStep(ms) => Some(ms.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Schedule::PerStep(ms) if ms.is_empty())
    }
}

pub type Gains<T> = Schedule<DMatrix<T>>;

fn gain_at<T: Real>(gains: &Gains<T>, t: usize) -> Result<&DMatrix<T>> {
    gains.at(t).ok_or(Error::IndexOutOfRange {
        index: t,
        horizon: gains.len().unwrap_or(0),
    })
}

/// `u_t = −K_t x_t`.
#[derive(Debug, Clone)]
pub struct LinearFeedback<T: Real> {
    pub gains: Gains<T>,
}

impl<T: Real> LinearFeedback<T> {
    pub fn stationary(gain: DMatrix<T>) -> Self {
        Self {
            gains: Schedule::Stationary(gain),
        }
    }

    pub fn time_varying(gains: Vec<DMatrix<T>>) -> Self {
        Self {
            gains: Schedule::PerStep(gains),
        }
    }
}

impl<T: Real> Policy<T> for LinearFeedback<T> {
    fn input(&self, t: usize, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(-(gain_at(&self.gains, t)? * x))
    }

    fn tail_gain(&self) -> Option<&DMatrix<T>> {
        self.gains.stationary()
    }
}

/// `u_t = −K_t x_t − f_t`, with `f_t = 0` past the end of the feedforward.
#[derive(Debug, Clone)]
pub struct AffineFeedback<T: Real> {
    pub gains: Gains<T>,
    pub feedforward: Signal<T>,
}

impl<T: Real> AffineFeedback<T> {
    pub fn feedforward_at(&self, t: usize) -> DVector<T> {
        if t < self.feedforward.horizon() {
            self.feedforward.step_owned(t)
        } else {
            DVector::zeros(self.feedforward.dim())
        }
    }
}

impl<T: Real> Policy<T> for AffineFeedback<T> {
    fn input(&self, t: usize, x: &DVector<T>) -> Result<DVector<T>> {
        let u = -(gain_at(&self.gains, t)? * x);
        if t < self.feedforward.horizon() {
            Ok(u - self.feedforward.step(t))
        } else {
            Ok(u)
        }
    }

    fn tail_gain(&self) -> Option<&DMatrix<T>> {
        self.gains.stationary()
    }
}

/// Replays a fixed input sequence regardless of the state.
#[derive(Debug, Clone)]
pub struct OpenLoop<T: Real> {
    pub inputs: Signal<T>,
}

impl<T: Real> OpenLoop<T> {
    pub fn new(inputs: Signal<T>) -> Self {
        Self { inputs }
    }
}

impl<T: Real> Policy<T> for OpenLoop<T> {
    fn input(&self, t: usize, _x: &DVector<T>) -> Result<DVector<T>> {
        if t >= self.inputs.horizon() {
            return Err(Error::IndexOutOfRange {
                index: t,
                horizon: self.inputs.horizon(),
            });
        }
        Ok(self.inputs.step_owned(t))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroInput {
    m: usize,
}

impl ZeroInput {
    pub fn new(m: usize) -> Self {
        Self { m }
    }
}

impl<T: Real> Policy<T> for ZeroInput {
    fn input(&self, _t: usize, _x: &DVector<T>) -> Result<DVector<T>> {
        Ok(DVector::zeros(self.m))
    }
}

/// Adapter turning a closure into a policy.
pub struct FnPolicy<F> {
    f: F,
}

impl<F> FnPolicy<F> {
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<T, F> Policy<T> for FnPolicy<F>
where
    T: Real,
    F: Fn(usize, &DVector<T>) -> DVector<T> + Sync,
{
    fn input(&self, t: usize, x: &DVector<T>) -> Result<DVector<T>> {
        Ok((self.f)(t, x))
    }
}
