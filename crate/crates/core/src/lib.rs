//! Offline multi-camera trajectory association with a one-round graph
//! convolutional network.
//!
//! Single-camera (SC) trajectories become nodes of a dense inter-camera
//! graph. A small GCN classifies every edge as "same vehicle" or not, the
//! surviving edges are grouped into connected components, and components
//! are split until each holds at most one trajectory per camera. Each
//! component spanning two or more cameras is a multi-camera (MC) global
//! trajectory.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and
//! the experiment harness live in the `mtmc` companion crate.
#![no_std]

extern crate alloc;

pub mod cluster;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod mlp;
pub mod synth;
pub mod train;
pub mod trajectory;

mod assignment;

pub use cluster::{infer, ClusterSet, GlobalTrajectories, GlobalTrajectory};
pub use error::{Error, Result};
pub use gcn::{ForwardTrace, Gradients, ModelConfig, ModelParameters};
pub use graph::{build_graph, AssociationGraph};
pub use loss::{LossBreakdown, LossOptions};
pub use metrics::{id_metrics, MetricsReport};
pub use synth::{generate_scenario, SynthConfig};
pub use train::{train, BatchLog, TrainConfig, TrainOutcome};
pub use trajectory::{average_descriptors, TrajectoryRecord, TrajectorySet};
