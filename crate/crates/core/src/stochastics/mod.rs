//! Seeded sampling for every distribution the model and the simulation
//! lab need.

mod rng;
mod sample;
mod spd;

pub use rng::RngStream;
pub use sample::{
    normalize_probs, sample_dirichlet, sample_inverse_wishart, sample_multinomial, sample_mvn,
    sample_truncated_mvn_on_simplex_support, sample_truncated_with_budget,
    standard_normal_vector, TruncatedSimplexNoise, TRUNCATION_BUDGET,
};
pub(crate) use sample::multinomial_unchecked;
pub use spd::SpdMatrix;
pub(crate) use spd::cholesky_with_jitter;
