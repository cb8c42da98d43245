//! JSON run configuration. Every section is optional; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use seqmult::decisions::{ElectionPolicy, SharePolicy};
use seqmult::forecast::{ForecastConfig, ScheduleSource};
use seqmult::model::{GibbsConfig, HierarchicalPrior, DEFAULT_DOF};
use seqmult::simlab::{DgpSpec, ExperimentSettings};
use seqmult::stochastics::SpdMatrix;
use seqmult::vst::asymptotic_mean;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub prior: PriorConfig,
    pub gibbs: GibbsConfig,
    pub forecast: ForecastConfig,
    pub policy: PolicyConfig,
    pub schedule: ScheduleConfig,
    pub call: CallConfig,
    pub dgp: Option<DgpSpec>,
    pub replicate: ReplicateConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, label: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config {
            path: label.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| match e {
            // a well-formed but unsatisfiable simulation request keeps its own exit code
            seqmult::Error::Infeasible(_) => CliError::Core(e),
            e => CliError::Config {
                path: label.to_string(),
                message: e.to_string(),
            },
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> seqmult::Result<()> {
        self.gibbs.validate()?;
        self.policy.election.validate()?;
        self.policy.share.validate()?;
        self.replicate.policy.validate()?;
        if self.forecast.n_sims == 0 {
            return Err(seqmult::Error::InvalidParameter("forecast.n_sims must be positive".into()));
        }
        if let Some(d) = &self.dgp {
            d.validate()?;
        }
        Ok(())
    }

    pub fn experiment_settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            gibbs: self.gibbs,
            forecast: ForecastConfig {
                keep_paths: false,
                ..self.forecast
            },
            policy: self.replicate.policy,
            schedule: self.schedule.source,
        }
    }
}

/// `"identity"` or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Keyword(String),
    Rows(Vec<Vec<f64>>),
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec::Keyword("identity".into())
    }
}

impl MatrixSpec {
    fn build(&self, dim: usize, name: &str) -> seqmult::Result<SpdMatrix> {
        match self {
            MatrixSpec::Keyword(k) if k == "identity" => Ok(SpdMatrix::identity(dim)),
            MatrixSpec::Keyword(k) => Err(seqmult::Error::InvalidParameter(format!(
                "{name}: unknown matrix keyword {k:?}"
            ))),
            MatrixSpec::Rows(rows) => {
                let m = SpdMatrix::from_rows(rows)?;
                if m.dim() != dim {
                    return Err(seqmult::Error::DimensionMismatch(format!(
                        "{name} must be {dim}x{dim}"
                    )));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    /// Prior shares (e.g. a previous election's vote shares); uniform
    /// when absent.
    pub alpha: Option<Vec<f64>>,
    pub psi: MatrixSpec,
    pub nu: f64,
    pub psi_p: MatrixSpec,
    pub nu_p: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            psi: MatrixSpec::default(),
            nu: DEFAULT_DOF,
            psi_p: MatrixSpec::default(),
            nu_p: DEFAULT_DOF,
        }
    }
}

impl PriorConfig {
    pub fn build(&self, categories: usize) -> seqmult::Result<HierarchicalPrior> {
        let d = categories - 1;
        let shares = match &self.alpha {
            Some(a) if a.len() != categories => {
                return Err(seqmult::Error::DimensionMismatch(format!(
                    "prior alpha has {} shares for {categories} categories",
                    a.len()
                )))
            }
            Some(a) => {
                let total: f64 = a.iter().sum();
                if a.iter().any(|v| !(*v >= 0.0)) || !(total > 0.0) {
                    return Err(seqmult::Error::InvalidParameter(
                        "prior alpha must be nonnegative shares".into(),
                    ));
                }
                a.iter().map(|v| v / total).collect()
            }
            None => vec![1.0 / categories as f64; categories],
        };
        HierarchicalPrior::new(
            asymptotic_mean(&shares),
            self.psi.build(d, "psi")?,
            self.nu,
            self.psi_p.build(d, "psi_p")?,
            self.nu_p,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Election,
    Share,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub mode: Mode,
    pub election: ElectionPolicy,
    pub share: SharePolicy,
    /// Category whose share is tracked in share mode.
    pub category: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub source: ScheduleSource,
    /// Rounds in the complete count; the file's round count when absent.
    pub total_rounds: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            source: ScheduleSource::Known,
            total_rounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CallConfig {
    pub collate_top_two: bool,
    pub skip_final_round: bool,
}

impl Default for CallConfig {
    fn default() -> Self {
        Self {
            collate_top_two: false,
            skip_final_round: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplicateConfig {
    pub policy: ElectionPolicy,
    pub checkpoints: Vec<usize>,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            policy: ElectionPolicy::simulation(),
            checkpoints: vec![5, 15, 25, 35, 45],
        }
    }
}
