use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("cholesky factorization of `{matrix}` failed (not positive definite after jitter)")]
    Factorization { matrix: String },

    #[error("invalid degrees of freedom {dof} for dimension {dim} (need dof > dim - 1)")]
    InvalidDof { dof: f64, dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "truncated normal support too tight: {accepted} of {attempts} proposals accepted \
         (acceptance rate {acceptance_rate:.3e})"
    )]
    SupportTooTight {
        attempts: usize,
        accepted: usize,
        acceptance_rate: f64,
    },

    #[error("inconsistent batch in round {round}: counts sum to {sum}, expected {n}")]
    InconsistentBatch { round: usize, sum: u64, n: u64 },

    #[error("probability vector touches the simplex boundary at category {category} (p = {value})")]
    Boundary { category: usize, value: f64 },

    #[error("gibbs sampler did not converge after {iterations} iterations (max R-hat {max_rhat:.4})")]
    NonConvergence {
        iterations: usize,
        max_rhat: f64,
        rhat: Vec<f64>,
    },

    #[error("infeasible specification: {0}")]
    Infeasible(String),

    #[error("empty input: {0}")]
    Empty(String),
}
