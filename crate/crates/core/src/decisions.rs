//! Sequential decision rules: calling a race for the category that will
//! finish first, and calling a category's final share to a target
//! precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{
    margin_of, share_distribution, simulate_future, victory_margin, winner_probability,
    ForecastConfig, FutureSchedule, PredictiveDraw, ScheduleSource, MARGIN_LEVEL,
};
use crate::model::{run_gibbs, GibbsConfig, HierarchicalPrior};
use crate::stochastics::RngStream;
use crate::summary::{quantile, Summary};
use crate::vst::BatchSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TooEarly,
    TooClose,
    Call,
}

/// How the margin distribution (restricted to draws the leader wins) is
/// summarized for the margin gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginSummary {
    Mean,
    Median,
    LowerQuantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectionPolicy {
    pub min_counted_frac: f64,
    pub confidence: f64,
    pub margin_frac_of_remaining: f64,
    pub margin_summary: MarginSummary,
}

impl Default for ElectionPolicy {
    fn default() -> Self {
        Self {
            min_counted_frac: 0.5,
            confidence: 0.995,
            margin_frac_of_remaining: 0.05,
            margin_summary: MarginSummary::Mean,
        }
    }
}

impl ElectionPolicy {
    /// The rule used in simulation experiments: no minimum counted
    /// fraction, otherwise the defaults.
    pub fn simulation() -> Self {
        Self {
            min_counted_frac: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.min_counted_frac) || !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(Error::InvalidParameter(
                "election policy fractions must lie in [0, 1]".into(),
            ));
        }
        if !(self.margin_frac_of_remaining >= 0.0) {
            return Err(Error::InvalidParameter("margin fraction must be nonnegative".into()));
        }
        if let MarginSummary::LowerQuantile(q) = self.margin_summary {
            if !unit(q) {
                return Err(Error::InvalidParameter("margin quantile must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharePolicy {
    pub min_rounds: usize,
    pub confidence: f64,
    pub margin_of_error: f64,
}

impl Default for SharePolicy {
    fn default() -> Self {
        Self {
            min_rounds: 5,
            confidence: 0.995,
            margin_of_error: 0.005,
        }
    }
}

impl SharePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin_of_error > 0.0) || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter(
                "share policy needs margin_of_error > 0 and confidence in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Verdict of the race-calling rule at one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionOutcome {
    pub verdict: Verdict,
    pub called_category: Option<usize>,
    /// Category with the highest winning probability.
    pub leader: usize,
    pub winner_prob: f64,
    pub winner_probs: Vec<f64>,
    /// Distribution of the final margin over all draws.
    pub predicted_margin: Summary,
    /// Margin statistic used by the gate (draws where the leader wins).
    pub gate_margin: f64,
    pub data_frac_used: f64,
}

/// Race-calling rule.
///
/// `TooEarly` below the minimum counted fraction; otherwise `Call` for the
/// leader when its winning probability reaches `confidence` and its
/// margin, summarized over the draws it wins, exceeds
/// `margin_frac_of_remaining × remaining_total`; `TooClose` otherwise.
pub fn decide_election(
    draws: &[PredictiveDraw],
    observed_frac: f64,
    remaining_total: u64,
    policy: &ElectionPolicy,
) -> Result<DecisionOutcome> {
    let winner_probs = winner_probability(draws)?;
    let (leader, &winner_prob) = winner_probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("nonempty");
    let predicted_margin = victory_margin(draws, MARGIN_LEVEL)?;

    let leader_wins: Vec<f64> = draws
        .iter()
        .filter(|d| d.y_final.iter().all(|&y| y <= d.y_final[leader]))
        .map(|d| margin_of(&d.y_final))
        .collect();
    let gate_margin = if leader_wins.is_empty() {
        0.0
    } else {
        match policy.margin_summary {
            MarginSummary::Mean => leader_wins.iter().sum::<f64>() / leader_wins.len() as f64,
            MarginSummary::Median => quantile(&leader_wins, 0.5),
            MarginSummary::LowerQuantile(q) => quantile(&leader_wins, q),
        }
    };

    let verdict = if observed_frac < policy.min_counted_frac {
        Verdict::TooEarly
    } else if winner_prob >= policy.confidence
        && gate_margin > policy.margin_frac_of_remaining * remaining_total as f64
    {
        Verdict::Call
    } else {
        Verdict::TooClose
    };
    Ok(DecisionOutcome {
        verdict,
        called_category: (verdict == Verdict::Call).then_some(leader),
        leader,
        winner_prob,
        winner_probs,
        predicted_margin,
        gate_margin,
        data_frac_used: observed_frac,
    })
}

/// Verdict of the share rule at one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareOutcome {
    pub verdict: Verdict,
    pub category: usize,
    pub called_category: Option<usize>,
    /// Final-share distribution with a central `confidence` interval.
    pub share: Summary,
    pub half_width: f64,
    pub rounds_used: usize,
    pub data_frac_used: f64,
}

/// Share rule: `TooEarly` before `min_rounds`; `Call` once the central
/// `confidence` interval of the final share has half-width at most
/// `margin_of_error`; `TooClose` (interval too wide) otherwise.
pub fn decide_share(
    draws: &[PredictiveDraw],
    category: usize,
    rounds_used: usize,
    observed_frac: f64,
    policy: &SharePolicy,
) -> Result<ShareOutcome> {
    let share = share_distribution(draws, category, policy.confidence)?;
    let half_width = share.half_width();
    let verdict = if rounds_used < policy.min_rounds {
        Verdict::TooEarly
    } else if half_width <= policy.margin_of_error {
        Verdict::Call
    } else {
        Verdict::TooClose
    };
    Ok(ShareOutcome {
        verdict,
        category,
        called_category: (verdict == Verdict::Call).then_some(category),
        share,
        half_width,
        rounds_used,
        data_frac_used: observed_frac,
    })
}

/// Merges all but the two leading categories (by cumulative count through
/// round `upto`) into one. Returns the collated series and the original
/// indices of the two leaders.
pub fn collate_top_two(series: &BatchSeries, upto: usize) -> Result<(BatchSeries, [usize; 2])> {
    let c = series.categories();
    if c < 3 {
        return Err(Error::InvalidParameter(
            "collation needs at least 3 categories".into(),
        ));
    }
    let y = series.cumulative(upto);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| y[b].cmp(&y[a]).then(a.cmp(&b)));
    let top = [order[0], order[1]];
    let mut out = BatchSeries::new(3)?;
    for b in series.rounds() {
        let rest = b.n - b.counts[top[0]] - b.counts[top[1]];
        out.push_checked(b.n, vec![b.counts[top[0]], b.counts[top[1]], rest])?;
    }
    Ok((out, top))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Election(ElectionPolicy),
    Share { policy: SharePolicy, category: usize },
}

/// Rounds the forecast targets and how their sizes are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub total_rounds: usize,
    pub source: ScheduleSource,
}

impl Horizon {
    pub fn schedule(&self, series: &BatchSeries, round: usize) -> Result<FutureSchedule> {
        if self.total_rounds < round {
            return Err(Error::InvalidParameter(format!(
                "horizon of {} rounds is before round {round}",
                self.total_rounds
            )));
        }
        match self.source {
            ScheduleSource::Known => {
                if self.total_rounds > series.len() {
                    return Err(Error::InvalidParameter(format!(
                        "known schedule needs sizes for {} rounds, series has {}",
                        self.total_rounds,
                        series.len()
                    )));
                }
                FutureSchedule::known(series.sizes()[round..self.total_rounds].to_vec())
            }
            ScheduleSource::AverageOfObserved => {
                FutureSchedule::average_of_observed(&series.prefix(round), self.total_rounds - round)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequentialOptions {
    pub forecast: ForecastConfig,
    /// Merge all but the current top two categories before fitting.
    pub collate_top_two: bool,
    /// Stop once the first call has been made.
    pub stop_after_first_call: bool,
    /// Do not decide on the last round of the horizon, when nothing is
    /// left to predict.
    pub skip_final_round: bool,
    /// Fit and simulate on rounds that are too early to call anyway.
    pub fit_when_too_early: bool,
    /// Decide only up to this round (inclusive).
    pub last_round: Option<usize>,
}

impl Default for SequentialOptions {
    fn default() -> Self {
        Self {
            forecast: ForecastConfig::default(),
            collate_top_two: false,
            stop_after_first_call: false,
            skip_final_round: false,
            fit_when_too_early: true,
            last_round: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RoundDecision {
    Election(DecisionOutcome),
    Share(ShareOutcome),
}

impl RoundDecision {
    pub fn verdict(&self) -> Verdict {
        match self {
            RoundDecision::Election(d) => d.verdict,
            RoundDecision::Share(d) => d.verdict,
        }
    }

    pub fn called_category(&self) -> Option<usize> {
        match self {
            RoundDecision::Election(d) => d.called_category,
            RoundDecision::Share(d) => d.called_category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RoundStatus {
    Decided(RoundDecision),
    /// Too early to call; no fit was run.
    Skipped,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub round: usize,
    pub observed_total: u64,
    pub remaining_total: u64,
    pub observed_frac: f64,
    /// Original indices of the two leaders when collating.
    pub collated_top_two: Option<[usize; 2]>,
    pub status: RoundStatus,
}

impl TraceEntry {
    pub fn verdict(&self) -> Option<Verdict> {
        match &self.status {
            RoundStatus::Decided(d) => Some(d.verdict()),
            RoundStatus::Skipped => Some(Verdict::TooEarly),
            RoundStatus::Failed { .. } => None,
        }
    }

    /// Called category in the original category indexing.
    pub fn called_category(&self) -> Option<usize> {
        match &self.status {
            RoundStatus::Decided(d) => d.called_category(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstCall {
    pub round: usize,
    pub category: usize,
    pub data_frac_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequentialTrace {
    pub entries: Vec<TraceEntry>,
    pub first_call: Option<FirstCall>,
    /// The first call if one was made, otherwise the verdict of the last
    /// round that produced one.
    pub final_verdict: Verdict,
}

/// Runs the decision rule after every round: fit on the prefix, simulate
/// the remaining rounds of the horizon, apply the policy.
///
/// Round `j` uses random sub-streams `2j` (fit) and `2j + 1` (forecast)
/// of `rng`. A round whose fit fails is recorded and skipped. Once a call
/// has been made later rounds are still traced unless
/// `stop_after_first_call` is set; the first call is the reported one.
#[allow(clippy::too_many_arguments)]
pub fn sequential_run(
    series: &BatchSeries,
    prior: &HierarchicalPrior,
    gibbs: &GibbsConfig,
    policy: &Policy,
    horizon: &Horizon,
    options: &SequentialOptions,
    rng: &RngStream,
) -> Result<SequentialTrace> {
    if series.is_empty() {
        return Err(Error::Empty("series has no rounds".into()));
    }
    match policy {
        Policy::Election(p) => p.validate()?,
        Policy::Share { policy, category } => {
            policy.validate()?;
            if *category >= series.categories() {
                return Err(Error::InvalidParameter(format!(
                    "share category {category} out of range"
                )));
            }
            if options.collate_top_two {
                return Err(Error::InvalidParameter(
                    "collation applies to election mode only".into(),
                ));
            }
        }
    }
    let expected_dim = if options.collate_top_two { 2 } else { series.categories() - 1 };
    if prior.dim() != expected_dim {
        return Err(Error::DimensionMismatch(format!(
            "prior has dimension {}, model needs {expected_dim}",
            prior.dim()
        )));
    }

    let mut last = series.len().min(horizon.total_rounds);
    if let Some(cap) = options.last_round {
        last = last.min(cap);
    }
    if options.skip_final_round && last == horizon.total_rounds && last > 1 {
        last -= 1;
    }

    let mut entries = Vec::with_capacity(last);
    let mut first_call = None;
    for round in 1..=last {
        let schedule = horizon.schedule(series, round)?;
        let observed_total = series.total_through(round);
        let remaining_total = schedule.total();
        let observed_frac = observed_total as f64 / (observed_total + remaining_total) as f64;

        let too_early = match policy {
            Policy::Election(p) => observed_frac < p.min_counted_frac,
            Policy::Share { policy, .. } => round < policy.min_rounds,
        };
        let mut collated_top_two = None;
        let status = if too_early && !options.fit_when_too_early {
            RoundStatus::Skipped
        } else {
            let prefix = series.prefix(round);
            let fitted = if options.collate_top_two {
                let (c, top) = collate_top_two(&prefix, round)?;
                collated_top_two = Some(top);
                c
            } else {
                prefix
            };
            let outcome = run_gibbs(&fitted, prior, gibbs, &rng.substream(2 * round as u64))
                .and_then(|chains| {
                    simulate_future(
                        &chains,
                        &fitted,
                        &schedule,
                        &options.forecast,
                        &rng.substream(2 * round as u64 + 1),
                    )
                })
                .and_then(|draws| match policy {
                    Policy::Election(p) => {
                        let mut d = decide_election(&draws, observed_frac, remaining_total, p)?;
                        if let Some(top) = collated_top_two {
                            let map = |c: usize| if c < 2 { top[c] } else { c };
                            d.called_category = d.called_category.map(map);
                            d.leader = map(d.leader);
                        }
                        Ok(RoundDecision::Election(d))
                    }
                    Policy::Share { policy, category } => Ok(RoundDecision::Share(decide_share(
                        &draws,
                        *category,
                        round,
                        observed_frac,
                        policy,
                    )?)),
                });
            match outcome {
                Ok(d) => RoundStatus::Decided(d),
                Err(e) => RoundStatus::Failed { error: e.to_string() },
            }
        };
        let entry = TraceEntry {
            round,
            observed_total,
            remaining_total,
            observed_frac,
            collated_top_two,
            status,
        };
        let called = entry.called_category();
        entries.push(entry);
        if let (None, Some(category)) = (&first_call, called) {
            first_call = Some(FirstCall {
                round,
                category,
                data_frac_used: observed_frac,
            });
            if options.stop_after_first_call {
                break;
            }
        }
    }

    let final_verdict = if first_call.is_some() {
        Verdict::Call
    } else {
        entries
            .iter()
            .rev()
            .find_map(TraceEntry::verdict)
            .unwrap_or(Verdict::TooClose)
    };
    Ok(SequentialTrace {
        entries,
        first_call,
        final_verdict,
    })
}
