//! Hierarchical temporal random partition model for clustering functional
//! binary trajectories observed over several periods.

pub mod config;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod io;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod random;
pub mod sim;
pub mod spline;
pub mod stats;
pub mod summary;

pub use error::{Error, Result};
pub use gibbs::{run_chain, ChainArchive, Draw, FitData, ModelState, Sampler};
pub use model::{
    default_hyperparameters, validate_dataset, Hyperparameters, McmcSettings, PanelDataset, RawObservation,
    Variant,
};
pub use partition::{Partition, PartitionSequence};
pub use spline::SplineBasis;
