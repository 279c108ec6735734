use thiserror::Error;

use crate::solver::SolveStats;
use crate::world::{Cell, Hypothesis};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed scenario or policy document. `path` is the offending key path.
    #[error("{path}: {message}")]
    Document { path: String, message: String },

    #[error("{path}: pose out of bounds: {pose}")]
    PoseOutOfBounds { path: String, pose: Hypothesis },

    #[error("{path}: pose {pose} overlaps a static obstacle")]
    PoseOnObstacle { path: String, pose: Hypothesis },

    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error("robot cell {cell} is occupied under hypothesis {hypothesis}")]
    RobotInsideObject { cell: Cell, hypothesis: Hypothesis },

    #[error("empty hypothesis set")]
    EmptyHypothesisSet,

    /// Every hypothesis was eliminated: the observations cannot be explained.
    #[error("unrealizable task: {0}")]
    UnrealizableTask(String),

    #[error("hypotheses {0} and {1} produce identical contacts and cannot be told apart")]
    IndistinguishableHypotheses(Hypothesis, Hypothesis),

    #[error("backup budget exhausted after {} backups", .0.backups)]
    BudgetExhausted(Box<SolveStats>),

    #[error("greedy policy revisits belief {0}")]
    GreedyCycle(String),

    #[error("value table has no expansion for greedy belief {0}")]
    NotConverged(String),

    #[error("epsilon must be >= 1, got {0}")]
    InvalidEpsilon(f64),

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported format_version {found}, expected {expected}")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("empty problem family")]
    EmptyFamily,

    #[error("unknown scenario id {0}")]
    UnknownScenario(String),

    #[error("reachable belief space exceeds the cap of {0} beliefs")]
    BeliefCapExceeded(usize),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
