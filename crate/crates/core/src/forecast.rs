//! Posterior-predictive simulation of the rounds still to come, and the
//! functionals evaluated on the simulated final counts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChainSet;
use crate::stochastics::{multinomial_unchecked, RngStream};
use crate::summary::Summary;
use crate::vst::{inverse_transform_values, BatchSeries, DEFAULT_A};

/// Default number of predictive simulations.
pub const DEFAULT_SIMS: usize = 4000;

/// Simulations per random sub-stream; fixed so results do not depend on
/// the worker count.
const SIM_CHUNK: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSource {
    Known,
    AverageOfObserved,
}

/// Sizes of the future rounds `j+1..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FutureSchedule {
    pub sizes: Vec<u64>,
    pub source: ScheduleSource,
}

impl FutureSchedule {
    pub fn known(sizes: Vec<u64>) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter("future round sizes must be positive".into()));
        }
        Ok(Self {
            sizes,
            source: ScheduleSource::Known,
        })
    }

    pub fn empty() -> Self {
        Self {
            sizes: Vec::new(),
            source: ScheduleSource::Known,
        }
    }

    /// `future_rounds` rounds at the observed average size. Each round
    /// gets the rounded average; the last absorbs the difference so the
    /// total equals the rounded `average × future_rounds`.
    pub fn average_of_observed(observed: &BatchSeries, future_rounds: usize) -> Result<Self> {
        if observed.is_empty() {
            return Err(Error::Empty("no observed rounds to average".into()));
        }
        let avg = observed.total() as f64 / observed.len() as f64;
        let mut sizes = vec![(avg.round() as u64).max(1); future_rounds];
        if let Some(last) = sizes.last_mut() {
            let target = (avg * future_rounds as f64).round() as i64;
            let head = (avg.round() as i64).max(1) * (future_rounds as i64 - 1);
            *last = (target - head).max(1) as u64;
        }
        Ok(Self {
            sizes,
            source: ScheduleSource::AverageOfObserved,
        })
    }

    pub fn total(&self) -> u64 {
        self.sizes.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    pub n_sims: usize,
    pub transform_offset: f64,
    /// Keep per-round probabilities and counts in each draw.
    pub keep_paths: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            n_sims: DEFAULT_SIMS,
            transform_offset: DEFAULT_A,
            keep_paths: true,
        }
    }
}

/// One simulated continuation of the series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictiveDraw {
    /// Cell probabilities per future round (empty unless paths are kept).
    pub p_draw: Vec<Vec<f64>>,
    /// Simulated counts per future round (empty unless paths are kept).
    pub counts: Vec<Vec<u64>>,
    /// Cumulative counts at the horizon.
    pub y_final: Vec<u64>,
}

impl PredictiveDraw {
    pub fn total(&self) -> u64 {
        self.y_final.iter().sum()
    }
}

/// Normal approximation of the predictive law of the transformed batch
/// `L_l`: mean `E[μ]`, covariance `E[Σ]/(n_l + 0.5) + Cov(μ)`, both
/// estimated from the pooled draws.
pub fn predictive_moments(chains: &ChainSet, n_l: u64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = chains.len();
    if m == 0 {
        return Err(Error::Empty("chain set has no draws".into()));
    }
    let mean = chains.mu_mean();
    let mut mu_cov = DMatrix::zeros(chains.dim, chains.dim);
    for d in chains.pooled() {
        let r = &d.mu - &mean;
        mu_cov.ger(1.0, &r, &r, 1.0);
    }
    if m > 1 {
        mu_cov /= (m - 1) as f64;
    }
    let cov = chains.sigma_mean() / (n_l as f64 + 0.5) + mu_cov;
    Ok((mean, cov))
}

/// Simulates `config.n_sims` continuations of `observed` over `schedule`.
///
/// Each simulation picks one pooled posterior draw `(μ, Σ)` uniformly at
/// random; every future round then draws `L ~ N(μ, Σ/(n_l + 0.5))`,
/// maps it back to cell probabilities and draws multinomial counts.
pub fn simulate_future(
    chains: &ChainSet,
    observed: &BatchSeries,
    schedule: &FutureSchedule,
    config: &ForecastConfig,
    rng: &RngStream,
) -> Result<Vec<PredictiveDraw>> {
    if config.n_sims == 0 {
        return Err(Error::InvalidParameter("n_sims must be at least 1".into()));
    }
    if chains.is_empty() {
        return Err(Error::Empty("chain set has no draws".into()));
    }
    if observed.categories() != chains.dim + 1 {
        return Err(Error::DimensionMismatch(format!(
            "series has {} categories, posterior has dimension {}",
            observed.categories(),
            chains.dim
        )));
    }
    let pooled: Vec<(&DVector<f64>, DMatrix<f64>)> = chains
        .pooled()
        .map(|d| Ok((&d.mu, d.sigma.factor("Sigma")?)))
        .collect::<Result<_>>()?;
    let base = observed.cumulative(observed.len());
    let scales: Vec<f64> = schedule
        .sizes
        .iter()
        .map(|&n| 1.0 / (n as f64 + 0.5).sqrt())
        .collect();

    let chunks = config.n_sims.div_ceil(SIM_CHUNK);
    let out: Vec<Vec<PredictiveDraw>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng.substream(chunk as u64);
            let count = SIM_CHUNK.min(config.n_sims - chunk * SIM_CHUNK);
            let dim = chains.dim;
            let mut z = DVector::zeros(dim);
            let mut l = DVector::zeros(dim);
            (0..count)
                .map(|_| {
                    let (mu, factor) = &pooled[rng.random_range(0..pooled.len())];
                    let mut y = base.clone();
                    let mut p_draw = Vec::new();
                    let mut counts = Vec::new();
                    for (&n, &s) in schedule.sizes.iter().zip(&scales) {
                        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                        l.copy_from(mu);
                        l.gemv(s, factor, &z, 1.0);
                        let p = inverse_transform_values(l.as_slice(), n, config.transform_offset);
                        let x = multinomial_unchecked(n, &p, &mut rng);
                        for (acc, v) in y.iter_mut().zip(&x) {
                            *acc += v;
                        }
                        if config.keep_paths {
                            p_draw.push(p);
                            counts.push(x);
                        }
                    }
                    PredictiveDraw {
                        p_draw,
                        counts,
                        y_final: y,
                    }
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn nonempty(draws: &[PredictiveDraw]) -> Result<usize> {
    match draws.first() {
        Some(d) => Ok(d.y_final.len()),
        None => Err(Error::Empty("no predictive draws".into())),
    }
}

fn check_category(draws: &[PredictiveDraw], category: usize) -> Result<()> {
    let c = nonempty(draws)?;
    if category >= c {
        return Err(Error::InvalidParameter(format!(
            "category {category} out of range for {c} categories"
        )));
    }
    Ok(())
}

/// Probability that each category finishes with the largest count; a tie
/// for the top splits the draw equally among the tied categories.
pub fn winner_probability(draws: &[PredictiveDraw]) -> Result<Vec<f64>> {
    let c = nonempty(draws)?;
    let mut wins = vec![0.0; c];
    for d in draws {
        let top = *d.y_final.iter().max().expect("nonempty counts");
        let tied = d.y_final.iter().filter(|&&y| y == top).count() as f64;
        for (w, &y) in wins.iter_mut().zip(&d.y_final) {
            if y == top {
                *w += 1.0 / tied;
            }
        }
    }
    let n = draws.len() as f64;
    Ok(wins.into_iter().map(|w| w / n).collect())
}

/// Largest minus second-largest final count.
pub fn margin_of(y: &[u64]) -> f64 {
    let (mut first, mut second) = (0u64, 0u64);
    for &v in y {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    (first - second) as f64
}

pub fn margins(draws: &[PredictiveDraw]) -> Vec<f64> {
    draws.iter().map(|d| margin_of(&d.y_final)).collect()
}

/// Default central coverage of the margin interval.
pub const MARGIN_LEVEL: f64 = 0.99;
/// Default central coverage of the share interval.
pub const SHARE_LEVEL: f64 = 0.995;

/// Distribution of the victory margin `Y⁽¹⁾ − Y⁽²⁾`.
pub fn victory_margin(draws: &[PredictiveDraw], level: f64) -> Result<Summary> {
    nonempty(draws)?;
    Ok(Summary::of(&margins(draws), level).expect("nonempty"))
}

pub fn shares(draws: &[PredictiveDraw], category: usize) -> Result<Vec<f64>> {
    check_category(draws, category)?;
    Ok(draws
        .iter()
        .map(|d| d.y_final[category] as f64 / d.total() as f64)
        .collect())
}

/// Distribution of the final share `Y_c / N` of one category.
pub fn share_distribution(draws: &[PredictiveDraw], category: usize, level: f64) -> Result<Summary> {
    Ok(Summary::of(&shares(draws, category)?, level).expect("nonempty"))
}

/// Probability that category `c` ends with at least `π₀ N` counts.
pub fn target_share_probability(draws: &[PredictiveDraw], category: usize, pi0: f64) -> Result<f64> {
    check_category(draws, category)?;
    let hits = draws
        .iter()
        .filter(|d| d.y_final[category] as f64 >= pi0 * d.total() as f64)
        .count();
    Ok(hits as f64 / draws.len() as f64)
}
