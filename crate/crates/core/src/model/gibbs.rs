use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditionals::{mu_cond, sample_sigma_p_cond, sigma_cond, ObsSummary};
use super::diagnostics::{gelman_rubin, MIN_CHAIN_LEN};
use super::HierarchicalPrior;
use crate::error::{Error, Result};
use crate::stochastics::{sample_inverse_wishart, sample_mvn, RngStream, SpdMatrix};
use crate::vst::{transform_series, BatchSeries, TransformedObs, DEFAULT_A};

/// One state of the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub mu: DVector<f64>,
    pub sigma: SpdMatrix,
    pub sigma_p: SpdMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub max_iters: usize,
    pub gr_threshold: f64,
    /// Pooled posterior sample size `M`.
    pub draws: usize,
    /// Iterations between convergence checks.
    pub check_every: usize,
    /// Offset `a` of the variance-stabilizing transform.
    pub transform_offset: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            burn_in: 1000,
            thin: 10,
            max_iters: 50_000,
            gr_threshold: 1.1,
            draws: 2000,
            check_every: 500,
            transform_offset: DEFAULT_A,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.n_chains < 2 {
            return bad("n_chains must be at least 2");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if !(self.gr_threshold > 1.0) {
            return bad("gr_threshold must exceed 1");
        }
        if self.draws == 0 {
            return bad("draws must be positive");
        }
        if self.check_every == 0 {
            return bad("check_every must be positive");
        }
        if !(self.transform_offset > 0.0) {
            return bad("transform_offset must be positive");
        }
        if self.max_iters <= self.burn_in {
            return bad("max_iters must exceed burn_in");
        }
        Ok(())
    }

    fn per_chain_draws(&self) -> usize {
        self.draws.div_ceil(self.n_chains).max(MIN_CHAIN_LEN)
    }
}

/// R-hat values recorded at one convergence check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhatCheck {
    /// Iterations per chain completed at the check (burn-in included).
    pub iteration: usize,
    /// μ coordinates followed by `log Σ_cc`.
    pub rhat: Vec<f64>,
}

/// Post-convergence draws from every chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    pub chains: Vec<Vec<PosteriorDraw>>,
    pub iterations: usize,
    pub rhat_history: Vec<RhatCheck>,
    pub dim: usize,
}

impl ChainSet {
    /// Builds a chain set from externally supplied draws (all chains the
    /// same length).
    pub fn from_chains(chains: Vec<Vec<PosteriorDraw>>) -> Result<Self> {
        let dim = chains
            .first()
            .and_then(|c| c.first())
            .map(|d| d.mu.len())
            .ok_or_else(|| Error::Empty("chain set".into()))?;
        let len = chains[0].len();
        if chains.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidParameter("chains differ in length".into()));
        }
        Ok(Self {
            chains,
            iterations: 0,
            rhat_history: Vec::new(),
            dim,
        })
    }

    /// Draws in `(chain, index)` order.
    pub fn pooled(&self) -> impl Iterator<Item = &PosteriorDraw> {
        self.chains.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn final_rhat(&self) -> Option<&[f64]> {
        self.rhat_history.last().map(|c| c.rhat.as_slice())
    }

    pub fn mu_mean(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim);
        for d in self.pooled() {
            acc += &d.mu;
        }
        acc / self.len().max(1) as f64
    }

    pub fn mu_sd(&self) -> DVector<f64> {
        let mean = self.mu_mean();
        let mut acc = DVector::zeros(self.dim);
        for d in self.pooled() {
            acc += (&d.mu - &mean).map(|v| v * v);
        }
        (acc / (self.len().saturating_sub(1)).max(1) as f64).map(f64::sqrt)
    }

    pub fn sigma_mean(&self) -> nalgebra::DMatrix<f64> {
        let mut acc = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for d in self.pooled() {
            acc += d.sigma.matrix();
        }
        acc / self.len().max(1) as f64
    }

}

/// Scalar summaries monitored for convergence: for each μ coordinate and
/// each `log Σ_cc`, one sequence per chain.
fn monitored(chains: &[&[PosteriorDraw]], dim: usize) -> Vec<Vec<Vec<f64>>> {
    (0..2 * dim)
        .map(|k| {
            chains
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|d| {
                            if k < dim {
                                d.mu[k]
                            } else {
                                d.sigma.matrix()[(k - dim, k - dim)].ln()
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn rhat_all(chains: &[&[PosteriorDraw]], dim: usize) -> Result<Vec<f64>> {
    monitored(chains, dim).iter().map(|s| gelman_rubin(s)).collect()
}

struct Chain {
    rng: RngStream,
    state: PosteriorDraw,
    kept: Vec<PosteriorDraw>,
}

impl Chain {
    fn init(prior: &HierarchicalPrior, mut rng: RngStream) -> Result<Self> {
        let mu = sample_mvn(&prior.alpha, &prior.sigma_p_center(), &mut rng)?;
        let sigma = sample_inverse_wishart(&prior.psi, prior.nu, &mut rng)?;
        let sigma_p = sample_inverse_wishart(&prior.psi_p, prior.nu_p, &mut rng)?;
        Ok(Self {
            rng,
            state: PosteriorDraw { mu, sigma, sigma_p },
            kept: Vec::new(),
        })
    }

    /// One sweep in the fixed order μ → Σ → Σ_p.
    fn sweep(&mut self, summary: &ObsSummary, prior: &HierarchicalPrior) -> Result<()> {
        let s = &mut self.state;
        s.mu = mu_cond(&s.sigma, &s.sigma_p, summary, prior, &mut self.rng)?;
        s.sigma = sigma_cond(&s.mu, summary, prior, &mut self.rng)?;
        s.sigma_p = sample_sigma_p_cond(&s.mu, prior, &mut self.rng)?;
        Ok(())
    }

    fn advance(
        &mut self,
        iters: usize,
        offset: usize,
        thin: Option<usize>,
        summary: &ObsSummary,
        prior: &HierarchicalPrior,
    ) -> Result<()> {
        for i in 0..iters {
            self.sweep(summary, prior)?;
            if let Some(t) = thin {
                if (offset + i + 1) % t == 0 {
                    self.kept.push(self.state.clone());
                }
            }
        }
        Ok(())
    }
}

/// Fits the hierarchical model to every round of `data`.
pub fn run_gibbs(
    data: &BatchSeries,
    prior: &HierarchicalPrior,
    config: &GibbsConfig,
    rng: &RngStream,
) -> Result<ChainSet> {
    if data.is_empty() {
        return Err(Error::Empty("no rounds to fit".into()));
    }
    if data.categories() != prior.dim() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "series has {} categories, prior expects {}",
            data.categories(),
            prior.dim() + 1
        )));
    }
    let obs = transform_series(data, config.transform_offset)?;
    run_gibbs_on_obs(&obs, prior, config, rng)
}

/// Gibbs driver over already-transformed batches.
///
/// Chains start from prior draws and are burned in; afterwards every
/// `check_every` sweeps the R-hat of each μ coordinate and each
/// `log Σ_cc` is computed over the draws kept since the last failed
/// check. A failed check discards those draws. Sampling stops once a
/// check passes with at least `draws` pooled draws kept.
pub fn run_gibbs_on_obs(
    obs: &[TransformedObs],
    prior: &HierarchicalPrior,
    config: &GibbsConfig,
    rng: &RngStream,
) -> Result<ChainSet> {
    config.validate()?;
    let dim = prior.dim();
    let summary = ObsSummary::new(dim, obs)?;

    let mut chains = (0..config.n_chains)
        .map(|c| Chain::init(prior, rng.substream(c as u64)))
        .collect::<Result<Vec<_>>>()?;

    chains
        .par_iter_mut()
        .try_for_each(|c| c.advance(config.burn_in, 0, None, &summary, prior))?;
    let mut iterations = config.burn_in;
    let mut window_iters = 0usize;
    let mut history = Vec::new();
    let target = config.per_chain_draws();

    loop {
        let block = config.check_every.min(config.max_iters - iterations);
        chains.par_iter_mut().try_for_each(|c| {
            c.advance(block, window_iters, Some(config.thin), &summary, prior)
        })?;
        iterations += block;
        window_iters += block;

        let kept = chains[0].kept.len();
        if kept >= MIN_CHAIN_LEN {
            let views: Vec<&[PosteriorDraw]> = chains.iter().map(|c| c.kept.as_slice()).collect();
            let rhat = rhat_all(&views, dim)?;
            let converged = rhat.iter().all(|&r| r < config.gr_threshold);
            history.push(RhatCheck {
                iteration: iterations,
                rhat: rhat.clone(),
            });
            if converged && kept >= target {
                return Ok(ChainSet {
                    chains: chains.into_iter().map(|c| c.kept).collect(),
                    iterations,
                    rhat_history: history,
                    dim,
                });
            }
            if !converged {
                chains.iter_mut().for_each(|c| c.kept.clear());
                window_iters = 0;
            }
            if iterations >= config.max_iters {
                let max_rhat = rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                return Err(Error::NonConvergence {
                    iterations,
                    max_rhat,
                    rhat,
                });
            }
        } else if iterations >= config.max_iters {
            return Err(Error::NonConvergence {
                iterations,
                max_rhat: f64::NAN,
                rhat: Vec::new(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(GibbsConfig::default().validate().is_ok());
        let bad = GibbsConfig {
            thin: 0,
            ..GibbsConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GibbsConfig {
            gr_threshold: 1.0,
            ..GibbsConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GibbsConfig {
            n_chains: 1,
            ..GibbsConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_series_is_an_error() {
        let prior = HierarchicalPrior::default_for(2).unwrap();
        let s = BatchSeries::new(2).unwrap();
        let err = run_gibbs(&s, &prior, &GibbsConfig::default(), &RngStream::new(0, 0));
        assert!(matches!(err, Err(Error::Empty(_))));
    }

    #[test]
    fn nonconvergence_reports_rhat() {
        // a threshold barely above 1 cannot be met by short windows
        let prior = HierarchicalPrior::default_for(3).unwrap();
        let s = BatchSeries::from_counts(vec![vec![30, 30, 40], vec![35, 25, 40]]).unwrap();
        let cfg = GibbsConfig {
            gr_threshold: 1.000_001,
            burn_in: 10,
            max_iters: 1010,
            check_every: 100,
            thin: 1,
            ..GibbsConfig::default()
        };
        match run_gibbs(&s, &prior, &cfg, &RngStream::new(3, 0)) {
            Err(Error::NonConvergence { iterations, rhat, .. }) => {
                assert_eq!(iterations, 1010);
                assert_eq!(rhat.len(), 4);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn returns_at_least_m_draws() {
        let prior = HierarchicalPrior::default_for(3).unwrap();
        let s = BatchSeries::from_counts(vec![vec![300, 300, 400], vec![350, 250, 400]]).unwrap();
        let cfg = GibbsConfig {
            draws: 400,
            burn_in: 200,
            ..GibbsConfig::default()
        };
        let set = run_gibbs(&s, &prior, &cfg, &RngStream::new(5, 0)).unwrap();
        assert!(set.len() >= 400);
        let len = set.chains[0].len();
        assert!(set.chains.iter().all(|c| c.len() == len));
        assert!(set.final_rhat().unwrap().iter().all(|&r| r < 1.1));
    }
}
