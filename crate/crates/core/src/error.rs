use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration has {found:?} (agents, dimension), system expects {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },

    #[error("agents {i} and {j} coincide")]
    Collision { i: usize, j: usize },

    #[error("distance {0} is outside the domain r > 0")]
    Domain(f64),

    #[error("E0 + 2a*C(N,2) = {0} is not positive; the energy is inconsistent with the system")]
    InvalidEnergy(f64),

    #[error("step size {step:e} fell below the floor {floor:e} at t = {time}")]
    StepFailure { time: f64, step: f64, floor: f64 },

    #[error("rate fit is degenerate: {0}")]
    FitDegenerate(String),

    #[error("could not place {n} agents after {attempts} rejected draws")]
    Packing { n: usize, attempts: usize },
}
