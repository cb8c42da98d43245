use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_dataset, top_categories, Dataset, DgpSpec};
use crate::decisions::{
    sequential_run, ElectionPolicy, Horizon, Policy, SequentialOptions, SequentialTrace,
};
use crate::error::{Error, Result};
use crate::forecast::{simulate_future, ForecastConfig, FutureSchedule, ScheduleSource};
use crate::model::{run_gibbs, GibbsConfig, HierarchicalPrior};
use crate::stochastics::RngStream;
use crate::vst::{asymptotic_mean, BatchSeries};

/// Inference settings shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSettings {
    pub gibbs: GibbsConfig,
    pub forecast: ForecastConfig,
    pub policy: ElectionPolicy,
    pub schedule: ScheduleSource,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            gibbs: GibbsConfig::default(),
            forecast: ForecastConfig {
                keep_paths: false,
                ..ForecastConfig::default()
            },
            policy: ElectionPolicy::simulation(),
            schedule: ScheduleSource::Known,
        }
    }
}

impl ExperimentSettings {
    fn options(&self) -> SequentialOptions {
        SequentialOptions {
            forecast: self.forecast,
            collate_top_two: false,
            stop_after_first_call: true,
            skip_final_round: true,
            fit_when_too_early: false,
            last_round: None,
        }
    }

    fn run(&self, series: &BatchSeries, policy: &ElectionPolicy, rng: &RngStream) -> Result<SequentialTrace> {
        let prior = HierarchicalPrior::default_for(series.categories())?;
        let horizon = Horizon {
            total_rounds: series.len(),
            source: self.schedule,
        };
        sequential_run(
            series,
            &prior,
            &self.gibbs,
            &Policy::Election(*policy),
            &horizon,
            &self.options(),
            rng,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallClass {
    Correct,
    Incorrect,
    NoCall,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub rep: usize,
    pub p: Vec<f64>,
    pub winners: Vec<usize>,
    pub called: Option<usize>,
    pub class: CallClass,
    pub call_round: Option<usize>,
    pub data_frac_used: Option<f64>,
    /// Final difference between the top two cumulative counts.
    pub final_margin: f64,
    pub failed_rounds: usize,
}

fn classify(trace: &SequentialTrace, winners: &[usize]) -> (Option<usize>, CallClass) {
    match &trace.first_call {
        Some(c) if winners.contains(&c.category) => (Some(c.category), CallClass::Correct),
        Some(c) => (Some(c.category), CallClass::Incorrect),
        None => (None, CallClass::NoCall),
    }
}

fn failed_rounds(trace: &SequentialTrace) -> usize {
    trace
        .entries
        .iter()
        .filter(|e| matches!(e.status, crate::decisions::RoundStatus::Failed { .. }))
        .count()
}

fn final_margin(series: &BatchSeries) -> f64 {
    crate::forecast::margin_of(&series.cumulative(series.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub count: usize,
    pub percent: f64,
    pub mean_final_margin: Option<f64>,
    pub mean_data_frac_used: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracySummary {
    pub n_reps: usize,
    pub correct: ClassSummary,
    pub incorrect: ClassSummary,
    pub no_call: ClassSummary,
    /// Over replicates with a call.
    pub mean_data_frac_used: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, k) = values.fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    (k > 0).then(|| s / k as f64)
}

impl AccuracySummary {
    pub fn of(outcomes: &[ReplicateOutcome]) -> Self {
        let n = outcomes.len();
        let class = |c: CallClass| {
            let members: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.class == c).collect();
            ClassSummary {
                count: members.len(),
                percent: 100.0 * members.len() as f64 / n.max(1) as f64,
                mean_final_margin: mean(members.iter().map(|o| o.final_margin)),
                mean_data_frac_used: mean(members.iter().filter_map(|o| o.data_frac_used)),
            }
        };
        Self {
            n_reps: n,
            correct: class(CallClass::Correct),
            incorrect: class(CallClass::Incorrect),
            no_call: class(CallClass::NoCall),
            mean_data_frac_used: mean(outcomes.iter().filter_map(|o| o.data_frac_used)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub spec: DgpSpec,
    pub outcomes: Vec<ReplicateOutcome>,
    pub summary: AccuracySummary,
}

/// Replicate `rep` draws its dataset from sub-stream 0 and runs the
/// decision sequence on sub-stream 1 of `rng.substream(rep)`.
fn replicate_data(spec: &DgpSpec, rng: &RngStream, rep: usize) -> Result<(Dataset, RngStream)> {
    let root = rng.substream(rep as u64);
    let ds = generate_dataset(spec, &mut root.substream(0))?;
    Ok((ds, root.substream(1)))
}

/// Generates `n_reps` datasets, runs the race-calling sequence on each
/// (stopping at the first call, never deciding on the complete count) and
/// classifies the first call against the realized leader.
pub fn run_accuracy_experiment(
    spec: &DgpSpec,
    n_reps: usize,
    settings: &ExperimentSettings,
    rng: &RngStream,
) -> Result<ExperimentReport> {
    if n_reps == 0 {
        return Err(Error::InvalidParameter("n_reps must be at least 1".into()));
    }
    spec.validate()?;
    let outcomes = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let (ds, run_rng) = replicate_data(spec, rng, rep)?;
            let trace = settings.run(&ds.series, &settings.policy, &run_rng)?;
            let winners = ds.winners();
            let (called, class) = classify(&trace, &winners);
            Ok(ReplicateOutcome {
                rep,
                winners,
                called,
                class,
                call_round: trace.first_call.as_ref().map(|c| c.round),
                data_frac_used: trace.first_call.as_ref().map(|c| c.data_frac_used),
                final_margin: final_margin(&ds.series),
                failed_rounds: failed_rounds(&trace),
                p: ds.p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = AccuracySummary::of(&outcomes);
    Ok(ExperimentReport {
        spec: spec.clone(),
        outcomes,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseReport {
    pub spec: DgpSpec,
    pub n_reps: usize,
    pub checkpoints: Vec<usize>,
    /// Percent, one per checkpoint.
    pub rmse_pct: Vec<f64>,
    /// Replicates skipped at each checkpoint because the fit failed.
    pub failures: Vec<usize>,
}

/// RMSE (in percent) of the predicted final cumulative shares, taken as
/// the mean over predictive draws, against the realized ones, pooled over
/// categories and replicates.
pub fn run_share_rmse_experiment(
    spec: &DgpSpec,
    checkpoints: &[usize],
    n_reps: usize,
    settings: &ExperimentSettings,
    rng: &RngStream,
) -> Result<RmseReport> {
    if n_reps == 0 {
        return Err(Error::InvalidParameter("n_reps must be at least 1".into()));
    }
    spec.validate()?;
    if let Some(&j) = checkpoints.iter().find(|&&j| j == 0 || j > spec.rounds) {
        return Err(Error::InvalidParameter(format!(
            "checkpoint {j} outside 1..={}",
            spec.rounds
        )));
    }
    let prior = HierarchicalPrior::default_for(spec.categories)?;
    let per_rep = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let (ds, run_rng) = replicate_data(spec, rng, rep)?;
            let k = ds.series.len();
            let y = ds.series.cumulative(k);
            let total = ds.series.total() as f64;
            let realized: Vec<f64> = y.iter().map(|&v| v as f64 / total).collect();
            let errs = checkpoints
                .iter()
                .map(|&j| {
                    if j == k {
                        return Some(0.0);
                    }
                    let prefix = ds.series.prefix(j);
                    let schedule = match settings.schedule {
                        ScheduleSource::Known => FutureSchedule::known(ds.series.sizes()[j..].to_vec()),
                        ScheduleSource::AverageOfObserved => {
                            FutureSchedule::average_of_observed(&prefix, k - j)
                        }
                    }
                    .ok()?;
                    let chains = run_gibbs(&prefix, &prior, &settings.gibbs, &run_rng.substream(2 * j as u64)).ok()?;
                    let draws = simulate_future(
                        &chains,
                        &prefix,
                        &schedule,
                        &settings.forecast,
                        &run_rng.substream(2 * j as u64 + 1),
                    )
                    .ok()?;
                    let m = draws.len() as f64;
                    let sq: f64 = (0..spec.categories)
                        .map(|c| {
                            let pred = draws
                                .iter()
                                .map(|d| d.y_final[c] as f64 / d.total() as f64)
                                .sum::<f64>()
                                / m;
                            (pred - realized[c]).powi(2)
                        })
                        .sum();
                    Some(sq)
                })
                .collect::<Vec<Option<f64>>>();
            Ok(errs)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rmse_pct = Vec::with_capacity(checkpoints.len());
    let mut failures = Vec::with_capacity(checkpoints.len());
    for i in 0..checkpoints.len() {
        let ok: Vec<f64> = per_rep.iter().filter_map(|r| r[i]).collect();
        failures.push(n_reps - ok.len());
        let denom = (ok.len() * spec.categories) as f64;
        rmse_pct.push(if ok.is_empty() {
            f64::NAN
        } else {
            100.0 * (ok.iter().sum::<f64>() / denom).sqrt()
        });
    }
    Ok(RmseReport {
        spec: spec.clone(),
        n_reps,
        checkpoints: checkpoints.to_vec(),
        rmse_pct,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub k_small: usize,
    pub k_large: usize,
    /// Euclidean distance of the posterior mean of μ from its true value.
    pub error_small: Vec<f64>,
    pub error_large: Vec<f64>,
    pub fraction_improved: f64,
}

/// For each replicate, fits the first `k_small` rounds and all
/// `spec.rounds` rounds of one dataset and compares the distance of the
/// posterior mean of μ from the transformed true probabilities.
pub fn run_consistency_experiment(
    spec: &DgpSpec,
    k_small: usize,
    n_reps: usize,
    settings: &ExperimentSettings,
    rng: &RngStream,
) -> Result<ConsistencyReport> {
    spec.validate()?;
    if k_small == 0 || k_small >= spec.rounds || n_reps == 0 {
        return Err(Error::InvalidParameter(
            "need 1 <= k_small < rounds and n_reps >= 1".into(),
        ));
    }
    let prior = HierarchicalPrior::default_for(spec.categories)?;
    let pairs = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let (ds, run_rng) = replicate_data(spec, rng, rep)?;
            let truth = asymptotic_mean(&ds.p);
            let err = |k: usize, stream: u64| -> Result<f64> {
                let chains = run_gibbs(&ds.series.prefix(k), &prior, &settings.gibbs, &run_rng.substream(stream))?;
                Ok((chains.mu_mean() - &truth).norm())
            };
            Ok((err(k_small, 0)?, err(spec.rounds, 1)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let improved = pairs.iter().filter(|(s, l)| l < s).count();
    Ok(ConsistencyReport {
        k_small,
        k_large: spec.rounds,
        error_small: pairs.iter().map(|p| p.0).collect(),
        error_large: pairs.iter().map(|p| p.1).collect(),
        fraction_improved: improved as f64 / n_reps as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationOutcome {
    pub order: Vec<usize>,
    pub called: Option<usize>,
    pub class: CallClass,
    pub call_round: Option<usize>,
    pub data_frac_used: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationReport {
    pub n_perms: usize,
    pub winners: Vec<usize>,
    pub correct_pct: f64,
    pub incorrect_pct: f64,
    pub no_call_pct: f64,
    pub outcomes: Vec<PermutationOutcome>,
}

/// Reruns the race-calling sequence on `n_perms` reorderings of the
/// rounds; the first is the original order, the rest are uniform random
/// shuffles drawn from `rng.substream(i)`.
pub fn run_permutation_study(
    series: &BatchSeries,
    n_perms: usize,
    policy: &ElectionPolicy,
    settings: &ExperimentSettings,
    rng: &RngStream,
) -> Result<PermutationReport> {
    if n_perms == 0 {
        return Err(Error::InvalidParameter("n_perms must be at least 1".into()));
    }
    let winners = top_categories(&series.cumulative(series.len()));
    let outcomes = (0..n_perms)
        .into_par_iter()
        .map(|i| {
            let mut order: Vec<usize> = (0..series.len()).collect();
            let root = rng.substream(i as u64);
            if i > 0 {
                order.shuffle(&mut root.substream(0));
            }
            let permuted = series.permuted(&order)?;
            let trace = settings.run(&permuted, policy, &root.substream(1))?;
            let (called, class) = classify(&trace, &winners);
            Ok(PermutationOutcome {
                order,
                called,
                class,
                call_round: trace.first_call.as_ref().map(|c| c.round),
                data_frac_used: trace.first_call.as_ref().map(|c| c.data_frac_used),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pct = |c: CallClass| {
        100.0 * outcomes.iter().filter(|o| o.class == c).count() as f64 / n_perms as f64
    };
    Ok(PermutationReport {
        n_perms,
        correct_pct: pct(CallClass::Correct),
        incorrect_pct: pct(CallClass::Incorrect),
        no_call_pct: pct(CallClass::NoCall),
        winners,
        outcomes,
    })
}
