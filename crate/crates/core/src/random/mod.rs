//! Random-variate primitives and the seedable, splittable stream contract.

mod polya_gamma;
mod stream;
mod variates;

pub use polya_gamma::{pg_mean, sample_pg, sample_pg_unchecked};
pub use stream::RngStream;
pub use variates::{
    sample_categorical, sample_inverse_gamma, sample_mvn, sample_mvn_canonical, sample_mvn_precision,
};

/// Generator type handed out by [`RngStream::rng`].
pub type ChainRng = rand_chacha::ChaCha8Rng;
