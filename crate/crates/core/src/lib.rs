//! Energy-aware multi-task federated learning over a UAV swarm.
//!
//! UAVs train split models (shared feature extractor plus per-task head) for
//! several tasks, each coordinated by one ground emergency vehicle (EV). Every
//! round a drift-plus-penalty controller picks the UAV-to-EV association and
//! the per-UAV transmit power, CPU frequency and bandwidth share, trading the
//! attention-weighted training utility against per-UAV energy budgets.
//! Extractor gradients are shared across tasks only when their measured
//! affinity is positive.

pub mod affinity;
pub mod alloc;
pub mod association;
pub mod attention;
pub mod channel;
pub mod error;
pub mod fl;
pub mod lambert;
pub mod lyapunov;
pub mod oracle;
pub mod par;
pub mod sim;
pub mod validate;

pub use error::{Error, Infeasibility, Result};
