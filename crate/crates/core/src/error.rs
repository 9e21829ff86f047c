use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rotation angle too close to pi for a unique logarithm (trace = {trace})")]
    AngleNearPi { trace: f64 },

    #[error("covariance is not positive semidefinite")]
    NotPsd,

    #[error("range {range} m is below the minimum resolvable range")]
    DegenerateRange { range: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("target lies on the array z-axis (rho^2 - z^2 = {0})")]
    PolarSingularity(f64),

    #[error("azimuth undefined (x^2 + y^2 = {0})")]
    AzimuthSingularity(f64),

    #[error("innovation covariance is singular (condition number {0:e})")]
    SingularInnovation(f64),

    #[error("ill-conditioned matrix in {what} (condition number {cond:e})")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error("homogenized constraint matrix {index} is not PSD (min eigenvalue {min_eig:e})")]
    SchurViolation { index: usize, min_eig: f64 },

    #[error("semidefinite program is infeasible")]
    Infeasible,

    #[error("interior point solver hit the iteration limit ({0})")]
    MaxIterations(usize),

    #[error("no feasible twist found by randomization")]
    NoFeasibleSample,

    #[error("episode failed at epoch {epoch}: {source}")]
    EpisodeFailed {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all Monte-Carlo episodes failed")]
    AllEpisodesFailed,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
