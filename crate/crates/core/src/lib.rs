//! Regret analysis of H∞ control for discrete-time linear systems.
//!
//! The crate synthesizes the saddle-point H∞ controller of a linear
//! quadratic game, computes the clairvoyant offline optimum it is compared
//! against, and evaluates dynamic regret together with its analytic upper
//! bounds. A certainty-equivalent controller driven by disturbance
//! predictions serves as the second subject.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for common use.
//!
//! ```
//! use regretlab::{find_gamma_lower, CostSpec64, Horizon, Plant64};
//!
//! let plant = Plant64::scalar(1.0, 1.0, 4.0);
//! let cost = CostSpec64::scalar(1.0, 1.0, 1.0, 4.0).unwrap();
//! let gamma = find_gamma_lower(&plant, &cost, Horizon::Infinite, 1e-9).unwrap();
//! assert!((gamma - 2f64.sqrt()).abs() < 1e-6);
//! ```

pub mod bounds;
pub mod ce;
pub mod error;
pub mod experiment;
pub mod hinf;
pub mod io;
pub mod linalg;
pub mod lti;
pub mod offline;
pub mod policy;
pub mod riccati;
pub mod scalar;

pub use bounds::{
    ce_bound, ce_coefficient, dynamic_regret, finite_constants, gelfand_constant, hinf_bound_finite,
    hinf_bound_infinite, infinite_constants, BoundConstants, EnvelopeCertificate, RegretEvaluator, RegretReport,
};
pub use ce::{ce_policy, Prediction, PredictionSource};
pub use error::{Error, Result};
pub use experiment::{reproduce_fig1, run_sweep, sample_disturbance, ControllerKind, ExperimentConfig, SweepResult};
pub use hinf::{
    build_controller, check_x0_admissible, find_gamma_bar, find_gamma_lower, worst_case_disturbance, Admissibility,
    GammaBar, HinfSynthesis, WorstCase,
};
pub use io::SystemSpec;
pub use lti::{cost_to_go, gap, simulate, total_cost, CostSpec, Horizon, Plant, Signal, Trajectory};
pub use offline::{
    batch_oracle, cost_to_go_coeffs, offline_finite, offline_infinite, CoeffController, CostToGoCoeffs,
    OfflineSolution,
};
pub use policy::{AffineFeedback, LinearFeedback, Policy};
pub use riccati::{hinf_riccati, lyapunov_fixed_point, solve_dare, solve_finite_lqr, FiniteLqr, HinfRiccati, StationaryLqr};
pub use scalar::Real;

pub type Plant64 = Plant<f64>;
pub type Plant32 = Plant<f32>;
pub type CostSpec64 = CostSpec<f64>;
pub type CostSpec32 = CostSpec<f32>;
pub type Signal64 = Signal<f64>;
pub type Signal32 = Signal<f32>;
pub type HinfSynthesis64 = HinfSynthesis<f64>;
pub type HinfSynthesis32 = HinfSynthesis<f32>;
pub type OfflineSolution64 = OfflineSolution<f64>;
pub type RegretReport64 = RegretReport<f64>;
pub type BoundConstants64 = BoundConstants<f64>;
