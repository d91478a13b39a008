use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feeder schema: {0}")]
    Schema(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown service branch `{0}`")]
    UnknownBranch(String),

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("feeder graph is disconnected: node `{0}` is unreachable from the substation")]
    Disconnected(String),

    #[error("non-finite impedance in {0}")]
    NonFiniteImpedance(String),

    #[error("service branch `{0}` hangs off another branch; only depth-1 branches are supported")]
    BranchChain(String),

    #[error("invalid load `{id}`: {reason}")]
    InvalidLoad { id: String, reason: String },

    #[error("singular impedance block on line section {0}")]
    SingularImpedance(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("reduced system matrix is rank deficient (rank {rank} of {expected}): {diagnostic}")]
    RankDeficient {
        rank: usize,
        expected: usize,
        diagnostic: String,
    },

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("power flow did not converge within {iterations} iterations (last update {last_update:e})")]
    PowerFlowDivergence { iterations: usize, last_update: f64 },

    #[error("measurements: {0}")]
    Measurement(String),

    #[error("segment starting at sample {start} has {len} sample(s); at least 2 are required")]
    ShortSegment { start: usize, len: usize },

    #[error("relaxed solver did not converge for load {load}, phase {phase} after {iterations} iterations (best objective {best_objective:e})")]
    SolverDivergence {
        load: usize,
        phase: usize,
        iterations: usize,
        best_objective: f64,
        best: Vec<f64>,
    },

    #[error("instance too large for enumeration: {0} free loads (max {1})")]
    TooLarge(usize, usize),

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Simulation,
    Solver,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { source, .. } => source.class(),
            Error::PowerFlowDivergence { .. } | Error::Simulation(_) => ErrorClass::Simulation,
            Error::SolverDivergence { .. } | Error::RankDeficient { .. } => ErrorClass::Solver,
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
