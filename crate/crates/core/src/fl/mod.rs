//! Split-model federated training: a per-task feature extractor of shared
//! shape and one softmax head per task, trained locally on each UAV's shards.

pub mod data;
pub mod engine;
pub mod model;
pub mod tensor_io;

pub use data::{generate_suite, SuiteConfig, SyntheticTaskSuite, TaskKind};
pub use engine::{GradientPacket, ModelBundle, TaskGradient, TrainConfig};
pub use model::{Arch, Dataset, Eval};
