//! Gibbs sampler: conditional updates, sweep orchestration and chain
//! persistence.

mod archive;
mod data;
mod sampler;
mod state;
mod updates;

pub use archive::{fingerprint, ArchiveMeta, ChainArchive, Checkpoint, Draw, ARCHIVE_FORMAT, CHECKPOINT_VERSION};
pub use data::{FitCell, FitData};
pub use sampler::{fit_data, label_archive, run_chain, CheckpointPolicy, Sampler};
pub use state::{DishParams, ModelState};
pub use updates::{
    add_observation, bernoulli_loglik, gamma_probability, log1p_exp, logistic, update_horseshoe, Conditionals,
    PSI_CLAMP,
};
