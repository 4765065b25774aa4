//! Clairvoyant optimal offline controller, extended-quadratic cost-to-go
//! coefficients and an independent batch least-squares oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hinf::HinfSynthesis;
use crate::linalg::{spd_solve, spectral_radius};
use crate::lti::{simulate, total_cost, total_cost_with_terminal, CostSpec, Horizon, Plant, Signal, Trajectory};
use crate::policy::{AffineFeedback, Gains, OpenLoop, Schedule};
use crate::riccati::{
    lyapunov_fixed_point, solve_dare, solve_finite_lqr, FiniteLqr, StationaryLqr, DEFAULT_TOL,
};
use crate::scalar::{lit, to_f64, Real};

/// Largest `m·T` the batch oracle will factor.
pub const BATCH_SIZE_CAP: usize = 5000;
const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone)]
pub enum LqrSolution<T: Real> {
    Finite(FiniteLqr<T>),
    Stationary(StationaryLqr<T>),
}

impl<T: Real> LqrSolution<T> {
    pub fn gains(&self) -> Gains<T> {
        match self {
            LqrSolution::Finite(l) => Schedule::PerStep(l.k.clone()),
            LqrSolution::Stationary(l) => Schedule::Stationary(l.k.clone()),
        }
    }

    /// `P_{t+1}`, the value matrix the step-`t` input is optimized against.
    pub fn p_next(&self, t: usize) -> &DMatrix<T> {
        match self {
            LqrSolution::Finite(l) => &l.p[t + 1],
            LqrSolution::Stationary(l) => &l.p,
        }
    }

    pub fn closed_loop(&self, t: usize) -> &DMatrix<T> {
        match self {
            LqrSolution::Finite(l) => &l.f[t],
            LqrSolution::Stationary(l) => &l.f,
        }
    }

    /// Weight on `x_T` that accounts for everything after the signal ends.
    pub fn terminal(&self, cost: &CostSpec<T>) -> DMatrix<T> {
        match self {
            LqrSolution::Finite(_) => cost.q_terminal().clone(),
            LqrSolution::Stationary(l) => l.p.clone(),
        }
    }
}

/// Optimal noncausal inputs `u*_t = −K_t x_t − f_t` for a known disturbance.
#[derive(Debug, Clone)]
pub struct OfflineSolution<T: Real> {
    pub horizon: Horizon,
    pub lqr: LqrSolution<T>,
    /// `g_t = P_{t+1}w_t + F_{t+1}ᵀg_{t+1}`; equals `G_t` of the offline
    /// cost-to-go.
    pub lookahead: Signal<T>,
    /// `f_t = (R + BᵀP_{t+1}B)⁻¹Bᵀg_t`.
    pub feedforward: Signal<T>,
    pub trajectory: Trajectory<T>,
    pub cost: T,
}

impl<T: Real> OfflineSolution<T> {
    pub fn inputs(&self) -> &Signal<T> {
        &self.trajectory.inputs
    }

    pub fn policy(&self) -> AffineFeedback<T> {
        AffineFeedback {
            gains: self.lqr.gains(),
            feedforward: self.feedforward.clone(),
        }
    }

    /// Feedforward gain `K_{t,i}^w` multiplying `w_{t+i}` in `u*_t`.
    pub fn feedforward_gain(&self, plant: &Plant<T>, cost: &CostSpec<T>, t: usize, i: usize) -> Result<DMatrix<T>> {
        let horizon = self.feedforward.horizon();
        if t + i >= horizon {
            return Err(Error::IndexOutOfRange {
                index: t + i,
                horizon,
            });
        }
        let mut transfer = self.lqr.p_next(t + i).clone();
        for s in (t + 1..=t + i).rev() {
            transfer = self.lqr.closed_loop(s).transpose() * transfer;
        }
        let b = plant.b();
        let s = cost.r() + b.transpose() * self.lqr.p_next(t) * b;
        spd_solve(&s, &(b.transpose() * transfer), "R + BᵀPB")
    }
}

/// Feedforward terms `(g, f)` of the offline law against `w`, which is
/// taken to be zero past its horizon.
pub fn feedforward<T: Real>(
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    lqr: &LqrSolution<T>,
    w: &Signal<T>,
) -> Result<(Signal<T>, Signal<T>)> {
    if w.dim() != plant.n() {
        return Err(Error::Dimension(format!(
            "disturbance has dimension {} but the plant has n = {}",
            w.dim(),
            plant.n()
        )));
    }
    let horizon = w.horizon();
    if let LqrSolution::Finite(l) = lqr {
        if l.horizon() != horizon {
            return Err(Error::InvalidInput(format!(
                "finite LQR has horizon {} but the signal has {horizon} steps",
                l.horizon()
            )));
        }
    }
    let b = plant.b();
    let bt = b.transpose();
    let mut g = DMatrix::zeros(plant.n(), horizon);
    let mut f = DMatrix::zeros(plant.m(), horizon);
    let mut next: Option<DVector<T>> = None;
    for t in (0..horizon).rev() {
        let p = lqr.p_next(t);
        let mut gt = p * w.step(t);
        if let Some(g_next) = &next {
            gt += lqr.closed_loop(t + 1).transpose() * g_next;
        }
        let s = cost.r() + &bt * p * b;
        let rhs = &bt * &gt;
        let ft = spd_solve(&s, &DMatrix::from_column_slice(plant.m(), 1, rhs.as_slice()), "R + BᵀPB")?
            .column(0)
            .into_owned();
        g.set_column(t, &gt);
        f.set_column(t, &ft);
        next = Some(gt);
    }
    Ok((Signal::from_matrix(g)?, Signal::from_matrix(f)?))
}

fn solve_with<T: Real>(
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    lqr: LqrSolution<T>,
    w: &Signal<T>,
) -> Result<OfflineSolution<T>> {
    let (lookahead, ff) = feedforward(plant, cost, &lqr, w)?;
    let horizon = match &lqr {
        LqrSolution::Finite(l) => Horizon::Finite(l.horizon()),
        LqrSolution::Stationary(_) => Horizon::Infinite,
    };
    let policy = AffineFeedback {
        gains: lqr.gains(),
        feedforward: ff.clone(),
    };
    let trajectory = simulate(plant, &policy, w)?;
    let cost_value = total_cost_with_terminal(&trajectory, cost, &lqr.terminal(cost))?;
    Ok(OfflineSolution {
        horizon,
        lqr,
        lookahead,
        feedforward: ff,
        trajectory,
        cost: cost_value,
    })
}

/// Finite-horizon offline optimum over `T` steps; `T` must equal the
/// horizon of `w`.
pub fn offline_finite<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, w: &Signal<T>, horizon: usize) -> Result<OfflineSolution<T>> {
    if horizon != w.horizon() {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon} does not match the disturbance length {}",
            w.horizon()
        )));
    }
    let lqr = solve_finite_lqr(plant, cost, horizon)?;
    offline_finite_with(plant, cost, &lqr, w)
}

/// As [`offline_finite`] with a precomputed finite LQR solution.
pub fn offline_finite_with<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, lqr: &FiniteLqr<T>, w: &Signal<T>) -> Result<OfflineSolution<T>> {
    solve_with(plant, cost, LqrSolution::Finite(lqr.clone()), w)
}

/// Infinite-horizon offline optimum for a finite-energy `w` that vanishes
/// after its horizon.
///
/// The feedforward sums are evaluated exactly by a backward recursion and
/// the cost beyond the signal is `x_TᵀPx_T`, so no truncation is involved.
pub fn offline_infinite<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, w: &Signal<T>) -> Result<OfflineSolution<T>> {
    let lqr = solve_dare(plant, cost, lit(DEFAULT_TOL))?;
    offline_infinite_with(plant, cost, &lqr, w)
}

pub fn offline_infinite_with<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, lqr: &StationaryLqr<T>, w: &Signal<T>) -> Result<OfflineSolution<T>> {
    solve_with(plant, cost, LqrSolution::Stationary(lqr.clone()), w)
}

/// Cost of an open-loop input sequence over the horizon of `w`.
pub fn open_loop_cost<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, u: &Signal<T>, w: &Signal<T>) -> Result<T> {
    if u.horizon() != w.horizon() {
        return Err(Error::Dimension("input and disturbance horizons differ".into()));
    }
    total_cost(&simulate(plant, &OpenLoop::new(u.clone()), w)?, cost)
}

/// The finite-horizon cost as an explicit quadratic in the stacked inputs,
/// `J(u) = uᵀHu + 2bᵀu + c`.
#[derive(Debug, Clone)]
pub struct BatchQuadratic<T: Real> {
    pub hessian: DMatrix<T>,
    pub linear: DVector<T>,
    pub constant: T,
    pub m: usize,
}

impl<T: Real> BatchQuadratic<T> {
    pub fn build(plant: &Plant<T>, cost: &CostSpec<T>, w: &Signal<T>) -> Result<Self> {
        cost.check_plant(plant)?;
        let (n, m, horizon) = (plant.n(), plant.m(), w.horizon());
        if w.dim() != n {
            return Err(Error::Dimension("disturbance dimension does not match the plant".into()));
        }
        if m * horizon > BATCH_SIZE_CAP {
            return Err(Error::SizeCap(format!(
                "batch oracle needs m·T <= {BATCH_SIZE_CAP}, got {}",
                m * horizon
            )));
        }
        let (a, b) = (plant.a(), plant.b());
        // free response c and input-to-state map G, both over x_1..x_T
        let mut free = DVector::zeros(n * horizon);
        let mut g = DMatrix::zeros(n * horizon, m * horizon);
        let mut x = plant.x0().clone();
        for t in 0..horizon {
            x = a * &x + w.step(t);
            free.rows_mut(n * t, n).copy_from(&x);
            g.view_mut((n * t, m * t), (n, m)).copy_from(b);
            if t > 0 {
                let prev = g.view((n * (t - 1), 0), (n, m * t)).into_owned();
                g.view_mut((n * t, 0), (n, m * t)).copy_from(&(a * prev));
            }
        }
        let mut qg = DMatrix::zeros(n * horizon, m * horizon);
        let mut qc = DVector::zeros(n * horizon);
        for t in 0..horizon {
            let weight = if t + 1 == horizon { cost.q_terminal() } else { cost.q() };
            let rows = g.rows(n * t, n);
            qg.rows_mut(n * t, n).copy_from(&(weight * rows));
            qc.rows_mut(n * t, n).copy_from(&(weight * free.rows(n * t, n)));
        }
        let mut hessian = g.transpose() * &qg;
        for t in 0..horizon {
            let mut block = hessian.view_mut((m * t, m * t), (m, m));
            block += cost.r();
        }
        let hessian = (&hessian + hessian.transpose()) * lit::<T>(0.5);
        let linear = g.transpose() * &qc;
        let x0 = plant.x0();
        let constant = x0.dot(&(cost.q() * x0)) + free.dot(&qc);
        Ok(Self {
            hessian,
            linear,
            constant,
            m,
        })
    }

    pub fn cost(&self, u: &DVector<T>) -> T {
        u.dot(&(&self.hessian * u)) + lit::<T>(2.0) * self.linear.dot(u) + self.constant
    }

    pub fn gradient(&self, u: &DVector<T>) -> DVector<T> {
        (&self.hessian * u + &self.linear) * lit::<T>(2.0)
    }
}

/// Exact minimizer of the batch quadratic.
#[derive(Debug, Clone)]
pub struct BatchSolution<T: Real> {
    pub quadratic: BatchQuadratic<T>,
    pub inputs: Signal<T>,
    pub cost: T,
    /// `(max L_ii / min L_ii)²` of the Cholesky factor, a cheap lower
    /// estimate of the Hessian condition number.
    pub condition_estimate: T,
}

/// Minimizes the stacked finite-horizon cost by a Cholesky solve of the
/// normal equations.
pub fn batch_oracle<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, w: &Signal<T>, horizon: usize) -> Result<BatchSolution<T>> {
    if horizon != w.horizon() {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon} does not match the disturbance length {}",
            w.horizon()
        )));
    }
    let quadratic = BatchQuadratic::build(plant, cost, w)?;
    let chol = quadratic
        .hessian
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("batch Hessian is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((T::max_value().unwrap_or(T::one()), T::zero()), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let condition_estimate = (hi / lo) * (hi / lo);
    if to_f64(condition_estimate) > CONDITION_WARNING {
        log::warn!("batch Hessian is ill-conditioned (estimate {:e})", to_f64(condition_estimate));
    }
    let u = -chol.solve(&quadratic.linear);
    let cost_value = quadratic.cost(&u);
    Ok(BatchSolution {
        inputs: Signal::from_stacked(quadratic.m, &u)?,
        cost: cost_value,
        condition_estimate,
        quadratic,
    })
}

/// Coefficients of `V_i(x) = xᵀP_i x + xᵀv_i + q_i`, the cost from state
/// `x` at step `i` under a given controller and disturbance.
#[derive(Debug, Clone)]
pub struct CostToGoCoeffs<T: Real> {
    pub horizon: Horizon,
    /// `P_0 … P_T`.
    pub p: Vec<DMatrix<T>>,
    pub v: Vec<DVector<T>>,
    pub q: Vec<T>,
    /// Offline only: `G_i` and `H_i = B(R + BᵀP_{i+1}B)⁻¹Bᵀ`, `i < T`.
    pub g: Option<Vec<DVector<T>>>,
    pub h: Option<Vec<DMatrix<T>>>,
}

impl<T: Real> CostToGoCoeffs<T> {
    pub fn evaluate(&self, i: usize, x: &DVector<T>) -> Result<T> {
        if i >= self.p.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                horizon: self.p.len() - 1,
            });
        }
        Ok(x.dot(&(&self.p[i] * x)) + x.dot(&self.v[i]) + self.q[i])
    }

    /// Weight on `x_T` used by the coefficients.
    pub fn terminal(&self) -> &DMatrix<T> {
        self.p.last().expect("at least the terminal coefficient")
    }
}

/// Controllers whose cost-to-go is extended quadratic.
#[derive(Debug, Clone, Copy)]
pub enum CoeffController<'a, T: Real> {
    Hinf(&'a HinfSynthesis<T>),
    Offline,
    /// Any stabilizing state feedback `u = −K_t x`.
    Feedback(&'a Gains<T>),
    /// `u = −K_t x − f_t`, e.g. the certainty-equivalent controller.
    Affine(&'a AffineFeedback<T>),
}

/// Stationary value of `u = −Kx`: solves `P = FᵀPF + Q + KᵀRK`.
pub fn feedback_value<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
    let f = plant.a() - plant.b() * k;
    let rho = spectral_radius(&f);
    if rho >= T::one() {
        return Err(Error::Divergence {
            spectral_radius: to_f64(rho),
        });
    }
    let weight = cost.q() + k.transpose() * cost.r() * k;
    lyapunov_fixed_point(&f, &weight, &DMatrix::zeros(plant.n(), plant.n()), lit(1e-14))
}

/// Extended-quadratic coefficients of `controller` against `w`.
///
/// For a finite horizon `T` must equal the horizon of `w`. For the infinite
/// horizon `w` is zero past its end and `P_T` is the stationary value of
/// the controller's tail feedback.
pub fn cost_to_go_coeffs<T: Real>(
    controller: CoeffController<'_, T>,
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    w: &Signal<T>,
    horizon: Horizon,
) -> Result<CostToGoCoeffs<T>> {
    cost.check_plant(plant)?;
    let steps = w.horizon();
    if let Horizon::Finite(t) = horizon {
        if t != steps {
            return Err(Error::InvalidInput(format!(
                "horizon {t} does not match the disturbance length {steps}"
            )));
        }
    }
    match controller {
        CoeffController::Offline => offline_coeffs(plant, cost, w, horizon),
        CoeffController::Hinf(syn) => {
            if syn.horizon != horizon {
                return Err(Error::InvalidInput("synthesis horizon differs from the requested one".into()));
            }
            feedback_coeffs(plant, cost, &syn.gains, None, w, horizon)
        }
        CoeffController::Feedback(gains) => feedback_coeffs(plant, cost, gains, None, w, horizon),
        CoeffController::Affine(policy) => feedback_coeffs(plant, cost, &policy.gains, Some(&policy.feedforward), w, horizon),
    }
}

fn gain_at<'a, T: Real>(gains: &'a Gains<T>, t: usize) -> Result<&'a DMatrix<T>> {
    gains.at(t).ok_or(Error::IndexOutOfRange {
        index: t,
        horizon: gains.len().unwrap_or(0),
    })
}

fn feedback_coeffs<T: Real>(
    plant: &Plant<T>,
    cost: &CostSpec<T>,
    gains: &Gains<T>,
    feedforward: Option<&Signal<T>>,
    w: &Signal<T>,
    horizon: Horizon,
) -> Result<CostToGoCoeffs<T>> {
    let steps = w.horizon();
    let (n, m) = (plant.n(), plant.m());
    let (a, b, r) = (plant.a(), plant.b(), cost.r());
    let terminal = match horizon {
        Horizon::Finite(_) => cost.q_terminal().clone(),
        Horizon::Infinite => {
            let k = gains.stationary().ok_or_else(|| {
                Error::InvalidInput("infinite-horizon coefficients need a stationary feedback".into())
            })?;
            feedback_value(plant, cost, k)?
        }
    };
    let two: T = lit(2.0);
    let mut p = vec![terminal];
    let mut v = vec![DVector::zeros(n)];
    let mut q = vec![T::zero()];
    for t in (0..steps).rev() {
        let k = gain_at(gains, t)?;
        let f_t = match feedforward {
            Some(ff) if t < ff.horizon() => ff.step_owned(t),
            _ => DVector::zeros(m),
        };
        let (p1, v1, q1) = (p.last().unwrap(), v.last().unwrap(), *q.last().unwrap());
        let closed = a - b * k;
        let d = w.step(t) - b * &f_t;
        let pt = match horizon {
            Horizon::Infinite => p1.clone(),
            Horizon::Finite(_) => closed.transpose() * p1 * &closed + cost.q() + k.transpose() * r * k,
        };
        let p1d = p1 * &d;
        let vt = k.transpose() * (r * &f_t) * two + closed.transpose() * (&p1d * two + v1);
        let qt = f_t.dot(&(r * &f_t)) + d.dot(&p1d) + d.dot(v1) + q1;
        p.push(pt);
        v.push(vt);
        q.push(qt);
    }
    p.reverse();
    v.reverse();
    q.reverse();
    Ok(CostToGoCoeffs {
        horizon,
        p,
        v,
        q,
        g: None,
        h: None,
    })
}

fn offline_coeffs<T: Real>(plant: &Plant<T>, cost: &CostSpec<T>, w: &Signal<T>, horizon: Horizon) -> Result<CostToGoCoeffs<T>> {
    let steps = w.horizon();
    let lqr = match horizon {
        Horizon::Finite(t) => LqrSolution::Finite(solve_finite_lqr(plant, cost, t)?),
        Horizon::Infinite => LqrSolution::Stationary(solve_dare(plant, cost, lit(DEFAULT_TOL))?),
    };
    let b = plant.b();
    let two: T = lit(2.0);
    let n = plant.n();
    let mut p = vec![lqr.terminal(cost)];
    let mut v = vec![DVector::zeros(n)];
    let mut q = vec![T::zero()];
    let mut g = Vec::with_capacity(steps);
    let mut h = Vec::with_capacity(steps);
    for t in (0..steps).rev() {
        let p1 = lqr.p_next(t);
        let (v1, q1) = (v.last().unwrap(), *q.last().unwrap());
        let wt = w.step_owned(t);
        let pt = match &lqr {
            LqrSolution::Finite(l) => l.p[t].clone(),
            LqrSolution::Stationary(l) => l.p.clone(),
        };
        let g_t = p1 * &wt + v1 / two;
        let s = cost.r() + b.transpose() * p1 * b;
        let h_t = b * spd_solve(&s, &b.transpose(), "R + BᵀPB")?;
        let vt = lqr.closed_loop(t).transpose() * (p1 * &wt * two + v1);
        let qt = q1 + wt.dot(v1) + wt.dot(&(p1 * &wt)) - g_t.dot(&(&h_t * &g_t));
        p.push(pt);
        v.push(vt);
        q.push(qt);
        g.push(g_t);
        h.push(h_t);
    }
    p.reverse();
    v.reverse();
    q.reverse();
    g.reverse();
    h.reverse();
    Ok(CostToGoCoeffs {
        horizon,
        p,
        v,
        q,
        g: Some(g),
        h: Some(h),
    })
}
