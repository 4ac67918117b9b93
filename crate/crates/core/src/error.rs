use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown composite `{0}`")]
    UnknownComposite(String),
    #[error("component set mismatch: {0}")]
    ComponentSetMismatch(String),
    #[error("invalid stream: {0}")]
    InvalidStream(String),
    #[error("negative concentration {value:e} for `{component}` (below -1e-9)")]
    NegativeConcentration { component: String, value: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("stoichiometry of `{process}`: {unknowns} unknown coefficient(s) for {equations} conservation equation(s)")]
    IllPosedStoichiometry {
        process: String,
        unknowns: usize,
        equations: usize,
    },
    #[error("stoichiometry of `{0}`: singular conservation system")]
    SingularStoichiometry(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid unit `{unit}`: {reason}")]
    InvalidUnit { unit: String, reason: String },
    #[error("invalid flowsheet: {0}")]
    Graph(String),
    #[error("inconsistent flows: {0}")]
    Flow(String),
    #[error(transparent)]
    Solver(#[from] crate::ode::SolverError),
    #[error("no steady state within {t_max} d (max scaled derivative {residual:e} > {tol:e})")]
    NotConverged { t_max: f64, residual: f64, tol: f64 },
    #[error("equilibrium iteration limit {0} exceeded")]
    IterationLimit(usize),
    #[error("{failed} of {total} samples failed (limit 5%); first failure: {first}")]
    ConvergenceRate { failed: usize, total: usize, first: String },
    #[error("invalid distribution `{name}`: {reason}")]
    Distribution { name: String, reason: String },
    #[error("statistics: {0}")]
    Statistics(String),
    #[error("accounting: {0}")]
    Accounting(String),
}

pub type Result<T> = std::result::Result<T, Error>;
