use std::fmt;

use thiserror::Error;

/// Errors surfaced by the simulator. Solver infeasibility is *not* an error;
/// see [`Infeasibility`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("size guard exceeded: {0}")]
    Guard(String),
    #[error("empty shard for uav {uav}")]
    EmptyShard { uav: usize },
    #[error("task {task} has no participating uav this round")]
    EmptyTask { task: usize },
    #[error("round {round} infeasible: {reason}")]
    InfeasibleRound { round: usize, reason: Infeasibility },
    #[error("constraint violated in round {round}: {detail}")]
    ConstraintViolation { round: usize, detail: String },
    #[error("tensor format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Why a resource-allocation or association instance has no feasible point.
///
/// Returned as a value so that callers can price it (e.g. as `+inf` in an
/// association table) instead of unwinding.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    /// Computation alone at `f_max` does not fit inside the round deadline.
    ComputeExceedsDeadline { uav: usize },
    /// Minimum power to meet the deadline exceeds `p_max`.
    PowerExceedsMax { uav: usize, p_min: f64, p_max: f64 },
    /// Even the whole band cannot carry the payload in time.
    RateUnreachable { uav: usize },
    /// Minimum bandwidth shares sum above one.
    BandwidthExhausted { total_min_share: f64 },
    /// No association satisfies the per-task minimums.
    Association(String),
}

impl Infeasibility {
    pub fn with_uav(self, uav: usize) -> Self {
        match self {
            Infeasibility::ComputeExceedsDeadline { .. } => Infeasibility::ComputeExceedsDeadline { uav },
            Infeasibility::PowerExceedsMax { p_min, p_max, .. } => Infeasibility::PowerExceedsMax { uav, p_min, p_max },
            Infeasibility::RateUnreachable { .. } => Infeasibility::RateUnreachable { uav },
            other => other,
        }
    }
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::ComputeExceedsDeadline { uav } => {
                write!(f, "uav {uav}: computation at f_max exceeds the round deadline")
            }
            Infeasibility::PowerExceedsMax { uav, p_min, p_max } => {
                write!(f, "uav {uav}: required power {p_min:.4e} W exceeds p_max {p_max:.4e} W")
            }
            Infeasibility::RateUnreachable { uav } => {
                write!(f, "uav {uav}: payload cannot be delivered before the deadline")
            }
            Infeasibility::BandwidthExhausted { total_min_share } => {
                write!(f, "minimum bandwidth shares sum to {total_min_share:.6} > 1")
            }
            Infeasibility::Association(why) => write!(f, "association: {why}"),
        }
    }
}

impl std::error::Error for Infeasibility {}
