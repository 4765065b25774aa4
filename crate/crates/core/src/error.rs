use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for horizon {horizon}")]
    IndexOutOfRange { index: usize, horizon: usize },

    #[error("iteration diverges: spectral radius {spectral_radius} is not below 1")]
    Divergence { spectral_radius: f64 },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    #[error("Riccati equation not solvable ({0}); check that (A, B) is stabilizable and (A, Q) detectable")]
    Unstabilizable(String),

    #[error("gamma = {gamma} is infeasible: {reason}")]
    Infeasible { gamma: f64, reason: String },

    #[error("no feasible attenuation level: {0}")]
    SynthesisInfeasible(String),

    #[error(
        "initial state is not admissible: worst-case energy ranges over [{energy_min:e}, {energy_max:e}] and never reaches 1"
    )]
    NotAdmissible { energy_min: f64, energy_max: f64 },

    #[error("gamma search failed: {0}")]
    SearchFailure(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("bound not applicable: {0}")]
    BoundNotApplicable(String),

    #[error("problem too large: {0}")]
    SizeCap(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that signal an infeasible attenuation level or an
    /// inadmissible initial state, as opposed to a numerical breakdown.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. }
                | Error::SynthesisInfeasible(_)
                | Error::NotAdmissible { .. }
                | Error::BoundNotApplicable(_)
        )
    }

    /// True for numerical failures (divergence, non-convergence, singular solves).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::NonConvergence { .. }
                | Error::Unstabilizable(_)
                | Error::SearchFailure(_)
                | Error::Singular(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
