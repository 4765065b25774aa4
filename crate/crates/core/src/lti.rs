//! Plants, cost specifications, signals and trajectories.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::ser::{Serialize, SerializeSeq, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::policy::Policy;
use crate::scalar::{lit, to_f64, Real};

const SYMMETRY_TOL: f64 = 1e-8;
const DEFINITENESS_TOL: f64 = 1e-10;

/// Finite or infinite control horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

impl Horizon {
    pub fn finite(&self) -> Option<usize> {
        match self {
            Horizon::Finite(t) => Some(*t),
            Horizon::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Horizon::Infinite)
    }
}

/// Discrete-time LTI plant `x_{t+1} = A x_t + B u_t + w_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    x0: DVector<T>,
}

impl<T: Real> Plant<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, x0: DVector<T>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must be {n}xm with m >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if x0.len() != n {
            return Err(Error::Dimension(format!(
                "x0 must have length {n}, got {}",
                x0.len()
            )));
        }
        if a.iter().chain(b.iter()).chain(x0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("plant data must be finite".into()));
        }
        Ok(Self { a, b, x0 })
    }

    /// Scalar plant `x_{t+1} = a x_t + b u_t + w_t`.
    pub fn scalar(a: T, b: T, x0: T) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            x0: DVector::from_element(1, x0),
        }
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn x0(&self) -> &DVector<T> {
        &self.x0
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn with_x0(&self, x0: DVector<T>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), x0)
    }

    /// One step of the state recursion.
    pub fn step(&self, x: &DVector<T>, u: &DVector<T>, w: DVectorView<'_, T>) -> DVector<T> {
        &self.a * x + &self.b * u + w
    }
}

/// Quadratic cost weights `Q`, `Q_T`, `R` and the initial-state bound `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec<T: Real> {
    q: DMatrix<T>,
    q_terminal: DMatrix<T>,
    r: DMatrix<T>,
    x_bound: T,
}

fn checked_symmetric<T: Real>(m: DMatrix<T>, name: &str) -> Result<DMatrix<T>> {
    if !m.is_square() || m.is_empty() {
        return Err(Error::Dimension(format!(
            "{name} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} must be finite")));
    }
    let (sym, asym) = symmetrize(&m);
    if asym > lit(SYMMETRY_TOL) {
        return Err(Error::InvalidInput(format!(
            "{name} is not symmetric (relative asymmetry {:e})",
            to_f64(asym)
        )));
    }
    Ok(sym)
}

impl<T: Real> CostSpec<T> {
    /// Validates and symmetrizes the weights. `Q`, `Q_T` must be PSD and `R`
    /// positive definite up to 1e-10.
    pub fn new(q: DMatrix<T>, q_terminal: DMatrix<T>, r: DMatrix<T>, x_bound: T) -> Result<Self> {
        let q = checked_symmetric(q, "Q")?;
        let q_terminal = checked_symmetric(q_terminal, "Q_T")?;
        let r = checked_symmetric(r, "R")?;
        if q.nrows() != q_terminal.nrows() {
            return Err(Error::Dimension(format!(
                "Q is {0}x{0} but Q_T is {1}x{1}",
                q.nrows(),
                q_terminal.nrows()
            )));
        }
        let tol: T = lit(DEFINITENESS_TOL);
        for (name, m) in [("Q", &q), ("Q_T", &q_terminal)] {
            let lo = min_eigenvalue(m);
            if lo < -tol {
                return Err(Error::InvalidInput(format!(
                    "{name} is not positive semidefinite (min eigenvalue {:e})",
                    to_f64(lo)
                )));
            }
        }
        let lo = min_eigenvalue(&r);
        if lo <= tol {
            return Err(Error::InvalidInput(format!(
                "R is not positive definite (min eigenvalue {:e})",
                to_f64(lo)
            )));
        }
        if !(x_bound >= T::zero()) || !x_bound.is_finite() {
            return Err(Error::InvalidInput("X must be a finite nonnegative number".into()));
        }
        Ok(Self {
            q,
            q_terminal,
            r,
            x_bound,
        })
    }

    pub fn scalar(q: T, q_terminal: T, r: T, x_bound: T) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, q_terminal),
            DMatrix::from_element(1, 1, r),
            x_bound,
        )
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn q_terminal(&self) -> &DMatrix<T> {
        &self.q_terminal
    }

    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }

    pub fn x_bound(&self) -> T {
        self.x_bound
    }

    /// Same weights with a different terminal matrix.
    pub fn with_terminal(&self, q_terminal: DMatrix<T>) -> Result<Self> {
        Self::new(self.q.clone(), q_terminal, self.r.clone(), self.x_bound)
    }

    pub fn check_plant(&self, plant: &Plant<T>) -> Result<()> {
        if self.q.nrows() != plant.n() {
            return Err(Error::Dimension(format!(
                "Q is {0}x{0} but the plant has n = {1}",
                self.q.nrows(),
                plant.n()
            )));
        }
        if self.r.nrows() != plant.m() {
            return Err(Error::Dimension(format!(
                "R is {0}x{0} but the plant has m = {1}",
                self.r.nrows(),
                plant.m()
            )));
        }
        Ok(())
    }

    pub fn stage_cost(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        x.dot(&(&self.q * x)) + u.dot(&(&self.r * u))
    }
}

/// A finite sequence of equally sized vectors, stored densely as a
/// `dim × horizon` matrix (one column per step).
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T: Real> {
    data: DMatrix<T>,
}

impl<T: Real> Signal<T> {
    pub fn new(steps: &[DVector<T>]) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| Error::InvalidInput("a signal needs at least one step".into()))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Dimension("signal steps must be non-empty".into()));
        }
        if let Some((t, s)) = steps.iter().enumerate().find(|(_, s)| s.len() != dim) {
            return Err(Error::Dimension(format!(
                "step {t} has dimension {} but step 0 has {dim}",
                s.len()
            )));
        }
        Self::from_matrix(DMatrix::from_columns(steps))
    }

    /// Builds a signal from a `dim × horizon` matrix.
    pub fn from_matrix(data: DMatrix<T>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "signal must have positive dimension and horizon, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("signal values must be finite".into()));
        }
        Ok(Self { data })
    }

    /// Scalar signal from a slice of values.
    pub fn scalar(values: &[T]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_row_slice(1, values.len(), values))
    }

    /// Inverse of [`Signal::stacked`].
    pub fn from_stacked(dim: usize, stacked: &DVector<T>) -> Result<Self> {
        if dim == 0 || stacked.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "stacked length {} is not a multiple of {dim}",
                stacked.len()
            )));
        }
        Self::from_matrix(DMatrix::from_column_slice(dim, stacked.len() / dim, stacked.as_slice()))
    }

    pub fn zeros(dim: usize, horizon: usize) -> Self {
        assert!(dim > 0 && horizon > 0, "zero signal needs positive shape");
        Self {
            data: DMatrix::zeros(dim, horizon),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.data.ncols()
    }

    pub fn step(&self, t: usize) -> DVectorView<'_, T> {
        self.data.column(t)
    }

    pub fn step_owned(&self, t: usize) -> DVector<T> {
        self.data.column(t).into_owned()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.data
    }

    /// `[w_0ᵀ, …, w_{T−1}ᵀ]ᵀ`.
    pub fn stacked(&self) -> DVector<T> {
        DVector::from_column_slice(self.data.as_slice())
    }

    /// `sqrt(Σ ‖w_t‖²)`.
    pub fn energy(&self) -> T {
        self.data.norm()
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            data: &self.data * alpha,
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: T, other: &Signal<T>) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            data: &self.data + &other.data * alpha,
        })
    }

    /// Zero-padded or truncated copy with the given horizon.
    pub fn resized(&self, horizon: usize) -> Self {
        assert!(horizon > 0, "signal horizon must be positive");
        let mut data = DMatrix::zeros(self.dim(), horizon);
        let keep = horizon.min(self.horizon());
        data.columns_mut(0, keep)
            .copy_from(&self.data.columns(0, keep));
        Self { data }
    }

    fn check_same_shape(&self, other: &Signal<T>) -> Result<()> {
        if self.dim() != other.dim() || self.horizon() != other.horizon() {
            return Err(Error::Dimension(format!(
                "signals have shapes {}x{} and {}x{}",
                self.dim(),
                self.horizon(),
                other.dim(),
                other.horizon()
            )));
        }
        Ok(())
    }
}

impl<T: Real> Serialize for Signal<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.horizon()))?;
        for col in self.data.column_iter() {
            let step: Vec<T> = col.iter().copied().collect();
            seq.serialize_element(&step)?;
        }
        seq.end()
    }
}

/// Disturbance-reality gap `w − w*` (also used for prediction errors).
pub fn gap<T: Real>(w: &Signal<T>, w_star: &Signal<T>) -> Result<Signal<T>> {
    w.axpy(-T::one(), w_star)
}

/// States `x_0 … x_T` with the inputs and disturbance that produced them.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub states: Vec<DVector<T>>,
    pub inputs: Signal<T>,
    pub disturbance: Signal<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn horizon(&self) -> usize {
        self.inputs.horizon()
    }

    pub fn final_state(&self) -> &DVector<T> {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Largest relative residual of the state recursion.
    pub fn recursion_residual(&self, plant: &Plant<T>) -> T {
        (0..self.horizon())
            .map(|t| {
                let u = self.inputs.step_owned(t);
                let predicted = plant.step(&self.states[t], &u, self.disturbance.step(t));
                let scale = T::one().max(predicted.norm());
                (&self.states[t + 1] - predicted).norm() / scale
            })
            .fold(T::zero(), |acc, r| acc.max(r))
    }
}

/// Simulates the closed loop from `plant.x0()` over the horizon of `w`.
pub fn simulate<T: Real>(plant: &Plant<T>, policy: &dyn Policy<T>, w: &Signal<T>) -> Result<Trajectory<T>> {
    simulate_from(plant, policy, w, 0, plant.x0().clone())
}

/// Simulates from state `x_start` at time `start` to the end of `w`.
///
/// The policy sees absolute time indices; the returned trajectory covers
/// steps `start..T` and its disturbance is the corresponding tail of `w`.
pub fn simulate_from<T: Real>(
    plant: &Plant<T>,
    policy: &dyn Policy<T>,
    w: &Signal<T>,
    start: usize,
    x_start: DVector<T>,
) -> Result<Trajectory<T>> {
    let horizon = w.horizon();
    if w.dim() != plant.n() {
        return Err(Error::Dimension(format!(
            "disturbance has dimension {} but the plant has n = {}",
            w.dim(),
            plant.n()
        )));
    }
    if start >= horizon {
        return Err(Error::IndexOutOfRange {
            index: start,
            horizon,
        });
    }
    if x_start.len() != plant.n() {
        return Err(Error::Dimension(format!(
            "start state has length {} but the plant has n = {}",
            x_start.len(),
            plant.n()
        )));
    }
    let steps = horizon - start;
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = DMatrix::zeros(plant.m(), steps);
    states.push(x_start);
    for t in start..horizon {
        let x = &states[t - start];
        let u = policy.input(t, x)?;
        if u.len() != plant.m() {
            return Err(Error::Dimension(format!(
                "policy produced an input of length {} at t = {t}, expected m = {}",
                u.len(),
                plant.m()
            )));
        }
        let next = plant.step(x, &u, w.step(t));
        inputs.set_column(t - start, &u);
        states.push(next);
    }
    let disturbance = Signal {
        data: w.as_matrix().columns(start, steps).into_owned(),
    };
    Ok(Trajectory {
        states,
        inputs: Signal::from_matrix(inputs)?,
        disturbance,
    })
}

fn check_cost_dims<T: Real>(traj: &Trajectory<T>, cost: &CostSpec<T>) -> Result<()> {
    let n = traj.states[0].len();
    if cost.q().nrows() != n || cost.r().nrows() != traj.inputs.dim() {
        return Err(Error::Dimension(format!(
            "trajectory with n = {n}, m = {} does not match cost weights",
            traj.inputs.dim()
        )));
    }
    Ok(())
}

/// `x_Tᵀ Q_T x_T + Σ_t (x_tᵀ Q x_t + u_tᵀ R u_t)`.
pub fn total_cost<T: Real>(traj: &Trajectory<T>, cost: &CostSpec<T>) -> Result<T> {
    total_cost_with_terminal(traj, cost, cost.q_terminal())
}

/// Accumulated cost with an explicit terminal weight, e.g. a stationary
/// value matrix standing in for an infinite tail.
pub fn total_cost_with_terminal<T: Real>(
    traj: &Trajectory<T>,
    cost: &CostSpec<T>,
    terminal: &DMatrix<T>,
) -> Result<T> {
    check_cost_dims(traj, cost)?;
    if terminal.nrows() != traj.states[0].len() || !terminal.is_square() {
        return Err(Error::Dimension("terminal weight does not match the state dimension".into()));
    }
    let x_t = traj.final_state();
    let mut total = x_t.dot(&(terminal * x_t));
    for t in 0..traj.horizon() {
        total += cost.stage_cost(&traj.states[t], &traj.inputs.step_owned(t));
    }
    Ok(total)
}

/// Tail of the accumulated cost from step `i` on.
pub fn cost_to_go<T: Real>(traj: &Trajectory<T>, cost: &CostSpec<T>, i: usize) -> Result<T> {
    cost_to_go_with_terminal(traj, cost, i, cost.q_terminal())
}

pub fn cost_to_go_with_terminal<T: Real>(
    traj: &Trajectory<T>,
    cost: &CostSpec<T>,
    i: usize,
    terminal: &DMatrix<T>,
) -> Result<T> {
    check_cost_dims(traj, cost)?;
    let horizon = traj.horizon();
    if i >= horizon {
        return Err(Error::IndexOutOfRange { index: i, horizon });
    }
    if terminal.nrows() != traj.states[0].len() || !terminal.is_square() {
        return Err(Error::Dimension("terminal weight does not match the state dimension".into()));
    }
    let x_t = traj.final_state();
    let mut total = x_t.dot(&(terminal * x_t));
    for t in i..horizon {
        total += cost.stage_cost(&traj.states[t], &traj.inputs.step_owned(t));
    }
    Ok(total)
}
