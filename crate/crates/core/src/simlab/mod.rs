//! Data-generating processes for simulation studies, the accuracy, share
//! and permutation experiments built on them, and the published table
//! layouts they are compared against.

mod experiments;
mod fixtures;
mod tables;

pub use experiments::{
    run_accuracy_experiment, run_consistency_experiment, run_permutation_study,
    run_share_rmse_experiment, AccuracySummary, CallClass, ClassSummary, ConsistencyReport,
    ExperimentReport, ExperimentSettings, PermutationOutcome, PermutationReport, ReplicateOutcome,
    RmseReport,
};
pub use fixtures::{landslide_fixture, near_tie_fixture, Fixture};
pub use tables::{
    table, AccuracyCell, AccuracyReference, ClassReference, RmseCell, RmseReference, TableId,
    TableSpec,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastics::{
    sample_dirichlet, sample_multinomial, RngStream, SpdMatrix, TruncatedSimplexNoise,
    TRUNCATION_BUDGET,
};
use crate::vst::BatchSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpKind {
    /// Fixed cell probabilities.
    Dgp1,
    /// Independent perturbations per category.
    Dgp2,
    /// Correlated perturbations with covariance proportional to `A`.
    Dgp3,
}

impl DgpKind {
    pub fn label(self) -> &'static str {
        match self {
            DgpKind::Dgp1 => "DGP1",
            DgpKind::Dgp2 => "DGP2",
            DgpKind::Dgp3 => "DGP3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PSource {
    DirichletEqual,
    Fixed(Vec<f64>),
    /// `p₁ − p₂ = δ` with `p₁ > p₂ > p_c` for all other `c`.
    DeltaGap(f64),
}

/// How the perturbation covariance scales with the batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// `n^{-1/2} · I` (or `· A`).
    #[default]
    InvSqrtN,
    /// `n^{-1} · I`, i.e. standard deviations of order `n^{-1/2}`.
    InvN,
}

impl NoiseScale {
    fn factor(self, n: u64) -> f64 {
        match self {
            NoiseScale::InvSqrtN => (n as f64).powf(-0.5),
            NoiseScale::InvN => 1.0 / n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSizes {
    #[default]
    Fixed,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub categories: usize,
    pub rounds: usize,
    pub n: u64,
    #[serde(default = "default_p_source")]
    pub p_source: PSource,
    /// DGP3 covariance shape; drawn with [`random_spd`] per dataset when absent.
    #[serde(default)]
    pub a: Option<SpdMatrix>,
    #[serde(default)]
    pub noise_scale: NoiseScale,
    #[serde(default)]
    pub batch_sizes: BatchSizes,
    #[serde(default = "default_concentration")]
    pub concentration: f64,
}

fn default_p_source() -> PSource {
    PSource::DirichletEqual
}

fn default_concentration() -> f64 {
    1.0
}

impl DgpSpec {
    pub fn new(kind: DgpKind, categories: usize, rounds: usize, n: u64) -> Self {
        Self {
            kind,
            categories,
            rounds,
            n,
            p_source: PSource::DirichletEqual,
            a: None,
            noise_scale: NoiseScale::default(),
            batch_sizes: BatchSizes::default(),
            concentration: 1.0,
        }
    }

    pub fn with_p(mut self, p_source: PSource) -> Self {
        self.p_source = p_source;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories < 2 || self.rounds == 0 || self.n == 0 {
            return Err(Error::InvalidParameter(
                "need at least 2 categories, 1 round and n >= 1".into(),
            ));
        }
        if !(self.concentration > 0.0) {
            return Err(Error::InvalidParameter("concentration must be positive".into()));
        }
        match &self.p_source {
            PSource::Fixed(p) if p.len() != self.categories => {
                return Err(Error::DimensionMismatch(format!(
                    "fixed p has {} entries for {} categories",
                    p.len(),
                    self.categories
                )))
            }
            PSource::DeltaGap(d) if !(*d > 0.0 && *d < 1.0) => {
                return Err(Error::Infeasible(format!("gap {d} must lie in (0, 1)")))
            }
            _ => {}
        }
        if let Some(a) = &self.a {
            if a.dim() != self.categories - 1 {
                return Err(Error::DimensionMismatch(format!(
                    "A must be {0}x{0}",
                    self.categories - 1
                )));
            }
            if !a.matrix().iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter("A must be finite".into()));
            }
            a.cholesky("A")?;
        }
        Ok(())
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub p: Vec<f64>,
    pub kind: DgpKind,
    pub a: Option<SpdMatrix>,
    pub series: BatchSeries,
}

impl Dataset {
    /// Categories with the largest final cumulative count.
    pub fn winners(&self) -> Vec<usize> {
        top_categories(&self.series.cumulative(self.series.len()))
    }
}

pub(crate) fn top_categories(y: &[u64]) -> Vec<usize> {
    let max = y.iter().copied().max().unwrap_or(0);
    (0..y.len()).filter(|&c| y[c] == max).collect()
}

/// `G Gᵀ / dim + 0.1 I` with iid standard normal `G`.
pub fn random_spd(dim: usize, rng: &mut RngStream) -> Result<SpdMatrix> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = &g * g.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.1;
    SpdMatrix::symmetrized(m)
}

const GAP_ATTEMPTS: usize = 100_000;

fn draw_p(spec: &DgpSpec, rng: &mut RngStream) -> Result<Vec<f64>> {
    let conc = vec![spec.concentration; spec.categories];
    match &spec.p_source {
        PSource::DirichletEqual => sample_dirichlet(&conc, rng),
        PSource::Fixed(p) => crate::stochastics::normalize_probs(p),
        PSource::DeltaGap(delta) => {
            for _ in 0..GAP_ATTEMPTS {
                let d = sample_dirichlet(&conc, rng)?;
                let s = d[0] + d[1];
                let (p1, p2) = ((s + delta) / 2.0, (s - delta) / 2.0);
                if p2 > 0.0 && d[2..].iter().all(|&r| p2 > r) {
                    let mut p = d;
                    p[0] = p1;
                    p[1] = p2;
                    return Ok(p);
                }
            }
            Err(Error::Infeasible(format!(
                "no probability vector with gap {delta} found in {GAP_ATTEMPTS} draws"
            )))
        }
    }
}

/// Draws the true cell probabilities, then `rounds` batches.
pub fn generate_dataset(spec: &DgpSpec, rng: &mut RngStream) -> Result<Dataset> {
    spec.validate()?;
    let p = draw_p(spec, rng)?;
    let d = spec.categories - 1;
    let a = match spec.kind {
        DgpKind::Dgp1 => None,
        DgpKind::Dgp2 => Some(SpdMatrix::identity(d)),
        DgpKind::Dgp3 => Some(match &spec.a {
            Some(a) => a.clone(),
            None => random_spd(d, rng)?,
        }),
    };
    let noise_for = |n: u64| -> Result<Option<TruncatedSimplexNoise>> {
        a.as_ref()
            .map(|a| {
                let cov = SpdMatrix::symmetrized(a.matrix() * spec.noise_scale.factor(n))?;
                TruncatedSimplexNoise::new(&p, &cov)
            })
            .transpose()
    };
    let fixed_noise = noise_for(spec.n)?;
    let poisson = match spec.batch_sizes {
        BatchSizes::Fixed => None,
        BatchSizes::Poisson => Some(
            Poisson::new(spec.n as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?,
        ),
    };

    let mut series = BatchSeries::new(spec.categories)?;
    for _ in 0..spec.rounds {
        let n = match &poisson {
            Some(dist) => (dist.sample(rng) as u64).max(1),
            None => spec.n,
        };
        let noise = if poisson.is_some() { noise_for(n)? } else { fixed_noise.clone() };
        let q = match &noise {
            None => p.clone(),
            Some(noise) => {
                let eps = noise.sample(TRUNCATION_BUDGET, rng)?;
                let mut q = p.clone();
                for (c, e) in eps.iter().enumerate() {
                    q[c] += e;
                    q[d] -= e;
                }
                q.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                q
            }
        };
        let x = sample_multinomial(n, &q, rng)?;
        series.push_checked(n, x)?;
    }
    Ok(Dataset { p, kind: spec.kind, a, series })
}
