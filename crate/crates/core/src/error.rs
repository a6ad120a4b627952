use thiserror::Error;

/// Errors raised by the solver modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("collapsed domain: surface at or below bottom at column {column} (zeta={zeta}, -b={neg_bottom})")]
    CollapsedDomain {
        column: usize,
        zeta: f64,
        neg_bottom: f64,
    },

    #[error("singular deformation map at node {node}: |det(Id + d eta)| = {det:e}")]
    SingularMap { node: usize, det: f64 },

    #[error("surface folding at surface node {node}: |1 + eta1_X1| = {value:e}")]
    Folding { node: usize, value: f64 },

    #[error("overturned surface at surface node {node}: |calN_2| = {value:e}")]
    Overturned { node: usize, value: f64 },

    #[error("singular constitutive system at node {node}, time level {level} (condition estimate {condition:e})")]
    SingularConstitutive {
        node: usize,
        level: usize,
        condition: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("linear solver breakdown after {iterations} iterations (residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("no convergence after {iterations} iterations (last difference {last_diff:e}); retry with window T/2")]
    NoConvergence { iterations: usize, last_diff: f64 },
}

pub type Result<T> = std::result::Result<T, SolverError>;
