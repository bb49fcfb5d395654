//! Network layouts, their training data and the two-phase training loop.

pub mod data;
pub mod network;
pub mod spec;
pub mod train;

pub use data::{split_sequences, TaskDataset, TaskSequence};
pub use network::{build_network, BpttOptions, InitMode, NetParams, Network, RecurrentState};
pub use spec::{NetworkSpec, Task, Variant};
pub use train::{train, LogRow, Phase, TrainConfig, TrainingLog};
