//! Hierarchical normal / inverse-Wishart working model on the transformed
//! scale, its full conditionals, and the multi-chain Gibbs driver.

mod conditionals;
mod diagnostics;
mod gibbs;
mod prior;

pub use conditionals::{sample_mu_cond, sample_sigma_cond, sample_sigma_p_cond, ObsSummary};
pub use diagnostics::{gelman_rubin, MIN_CHAIN_LEN};
pub use gibbs::{run_gibbs, run_gibbs_on_obs, ChainSet, GibbsConfig, PosteriorDraw, RhatCheck};
pub use prior::{HierarchicalPrior, DEFAULT_DOF};
