//! The four subcommands. Each returns its JSON report and writes its
//! files under the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use seqmult::decisions::{
    sequential_run, FirstCall, Horizon, Policy, RoundDecision, RoundStatus, SequentialOptions,
    TraceEntry, Verdict,
};
use seqmult::forecast::margin_of;
use seqmult::model::{run_gibbs, RhatCheck};
use seqmult::simlab::{
    generate_dataset, run_accuracy_experiment, run_share_rmse_experiment, table, AccuracyCell,
    DgpKind, DgpSpec, RmseCell, TableId, TableSpec,
};
use seqmult::stochastics::RngStream;
use seqmult::vst::inverse_transform_values;

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::rounds::RoundsFile;

/// Resolved global options.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    fn ensure_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        self.ensure_out()?;
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Random stream for one subcommand.
fn stream(ctx: &Context, command: u64) -> RngStream {
    RngStream::new(ctx.seed, command)
}

fn resolve_upto(file: &RoundsFile, upto: Option<usize>) -> CliResult<usize> {
    let k = file.series.len();
    match upto {
        None => Ok(k),
        Some(0) => Err(CliError::Usage("--upto must be at least 1".into())),
        Some(j) if j > k => Err(CliError::Usage(format!("--upto {j} exceeds the {k} rounds in the file"))),
        Some(j) => Ok(j),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub seed: u64,
    pub categories: Vec<String>,
    pub rounds_used: usize,
    pub dim: usize,
    pub draws: usize,
    pub iterations: usize,
    pub mu_mean: Vec<f64>,
    pub mu_sd: Vec<f64>,
    pub sigma_mean: Vec<Vec<f64>>,
    /// Cell probabilities implied by the posterior mean of μ.
    pub implied_shares: Vec<f64>,
    /// R-hat per μ coordinate, then per `log Σ_cc`, at the final check.
    pub rhat: Vec<f64>,
    pub rhat_history: Vec<RhatCheck>,
}

pub fn fit(ctx: &Context, rounds: &Path, upto: Option<usize>) -> CliResult<FitReport> {
    let file = RoundsFile::read(rounds)?;
    let j = resolve_upto(&file, upto)?;
    let series = file.series.prefix(j);
    let prior = ctx.config.prior.build(series.categories())?;
    let chains = run_gibbs(&series, &prior, &ctx.config.gibbs, &stream(ctx, 1))?;
    let mu = chains.mu_mean();
    let sigma = chains.sigma_mean();
    let report = FitReport {
        seed: ctx.seed,
        categories: file.names.clone(),
        rounds_used: j,
        dim: chains.dim,
        draws: chains.len(),
        iterations: chains.iterations,
        mu_mean: mu.iter().copied().collect(),
        mu_sd: chains.mu_sd().iter().copied().collect(),
        sigma_mean: sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
        implied_shares: inverse_transform_values(mu.as_slice(), series.total(), ctx.config.gibbs.transform_offset),
        rhat: chains.final_rhat().map(<[f64]>::to_vec).unwrap_or_default(),
        rhat_history: chains.rhat_history.clone(),
    };
    ctx.write_json("fit.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CalledCategory {
    pub round: usize,
    pub category: usize,
    pub name: String,
    pub data_frac_used: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CallReport {
    pub seed: u64,
    pub mode: Mode,
    pub categories: Vec<String>,
    pub rounds_used: usize,
    pub total_rounds: usize,
    /// The first call if one was made, otherwise the last round's verdict.
    pub verdict: Verdict,
    pub first_call: Option<CalledCategory>,
    /// Full outcome at the last round examined.
    pub latest: Option<TraceEntry>,
    /// Realized final margin, when the file covers every round.
    pub true_final_margin: Option<f64>,
    pub failed_rounds: Vec<usize>,
}

pub fn call(
    ctx: &Context,
    rounds: &Path,
    mode: Option<Mode>,
    category: Option<usize>,
    upto: Option<usize>,
) -> CliResult<CallReport> {
    let cfg = &ctx.config;
    let file = RoundsFile::read(rounds)?;
    let j = resolve_upto(&file, upto)?;
    let c = file.series.categories();
    let mode = mode.unwrap_or(cfg.policy.mode);
    let category = category.unwrap_or(cfg.policy.category);
    let policy = match mode {
        Mode::Election => Policy::Election(cfg.policy.election),
        Mode::Share => {
            if category >= c {
                return Err(CliError::Usage(format!("category {category} out of range for {c} categories")));
            }
            Policy::Share { policy: cfg.policy.share, category }
        }
    };
    let collate = cfg.call.collate_top_two && mode == Mode::Election;
    let prior = cfg.prior.build(if collate { 3 } else { c })?;
    let total_rounds = cfg.schedule.total_rounds.unwrap_or(file.series.len());
    let horizon = Horizon { total_rounds, source: cfg.schedule.source };
    let options = SequentialOptions {
        forecast: seqmult::forecast::ForecastConfig { keep_paths: false, ..cfg.forecast },
        collate_top_two: collate,
        stop_after_first_call: false,
        skip_final_round: cfg.call.skip_final_round,
        fit_when_too_early: true,
        last_round: Some(j),
    };
    let trace = sequential_run(&file.series, &prior, &cfg.gibbs, &policy, &horizon, &options, &stream(ctx, 2))?;

    let complete = file.series.len() >= total_rounds;
    let final_y = file.series.cumulative(total_rounds);
    let true_final_margin = complete.then(|| margin_of(&final_y));
    let true_final_share = complete.then(|| final_y[category] as f64 / final_y.iter().sum::<u64>() as f64);

    let mut csv = csv::Writer::from_writer(Vec::new());
    let header: &[&str] = match mode {
        Mode::Election => &[
            "round", "observed_total", "remaining_total", "observed_frac", "status", "verdict", "leader",
            "winner_prob", "called", "margin_mean", "margin_lower", "margin_upper", "gate_margin", "true_margin",
        ],
        Mode::Share => &[
            "round", "observed_total", "remaining_total", "observed_frac", "status", "verdict", "category",
            "share_mean", "share_lower", "share_upper", "half_width", "called", "true_share",
        ],
    };
    let csv_err = |e: csv::Error| CliError::Usage(e.to_string());
    csv.write_record(header).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &trace.entries {
        let mut rec = vec![
            e.round.to_string(),
            e.observed_total.to_string(),
            e.remaining_total.to_string(),
            e.observed_frac.to_string(),
        ];
        let status = match &e.status {
            RoundStatus::Decided(_) => "decided",
            RoundStatus::Skipped => "skipped",
            RoundStatus::Failed { .. } => "failed",
        };
        rec.push(status.into());
        rec.push(e.verdict().map(verdict_name).unwrap_or("").into());
        let name = |k: usize| file.names.get(k).cloned().unwrap_or_else(|| "rest".into());
        match &e.status {
            RoundStatus::Decided(RoundDecision::Election(d)) => {
                rec.extend([
                    name(d.leader),
                    d.winner_prob.to_string(),
                    d.called_category.map(name).unwrap_or_default(),
                    d.predicted_margin.mean.to_string(),
                    d.predicted_margin.lower.to_string(),
                    d.predicted_margin.upper.to_string(),
                    d.gate_margin.to_string(),
                ]);
            }
            RoundStatus::Decided(RoundDecision::Share(s)) => {
                rec.extend([
                    name(s.category),
                    s.share.mean.to_string(),
                    s.share.lower.to_string(),
                    s.share.upper.to_string(),
                    s.half_width.to_string(),
                    s.called_category.map(name).unwrap_or_default(),
                ]);
            }
            _ => rec.extend(std::iter::repeat_n(String::new(), header.len() - 7)),
        }
        rec.push(opt(match mode {
            Mode::Election => true_final_margin,
            Mode::Share => true_final_share,
        }));
        csv.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = csv.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    ctx.write("trace.csv", &bytes)?;

    let report = CallReport {
        seed: ctx.seed,
        mode,
        categories: file.names.clone(),
        rounds_used: j,
        total_rounds,
        verdict: trace.final_verdict,
        first_call: trace.first_call.as_ref().map(|f: &FirstCall| CalledCategory {
            round: f.round,
            category: f.category,
            name: file.names[f.category].clone(),
            data_frac_used: f.data_frac_used,
        }),
        latest: trace.entries.last().cloned(),
        true_final_margin,
        failed_rounds: trace
            .entries
            .iter()
            .filter(|e| matches!(e.status, RoundStatus::Failed { .. }))
            .map(|e| e.round)
            .collect(),
    };
    ctx.write_json("decision.json", &report)?;
    Ok(report)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::TooEarly => "too_early",
        Verdict::TooClose => "too_close",
        Verdict::Call => "call",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Truth {
    pub seed: u64,
    pub dgp: DgpSpec,
    pub p: Vec<f64>,
    /// Perturbation covariance shape actually used (DGP2/DGP3).
    pub a: Option<Vec<Vec<f64>>>,
    pub winners: Vec<usize>,
}

pub fn simulate(ctx: &Context) -> CliResult<(RoundsFile, Truth)> {
    let spec = ctx
        .config
        .dgp
        .clone()
        .ok_or_else(|| CliError::Usage("simulate needs a `dgp` section in the config".into()))?;
    let ds = generate_dataset(&spec, &mut stream(ctx, 3))?;
    let winners = ds.winners();
    let truth = Truth {
        seed: ctx.seed,
        a: ds.a.as_ref().map(|a| a.to_rows()),
        dgp: spec,
        p: ds.p,
        winners,
    };
    let file = RoundsFile::with_default_names(ds.series);
    let mut bytes = Vec::new();
    file.write(&mut bytes)?;
    ctx.write("rounds.csv", &bytes)?;
    ctx.write_json("truth.json", &truth)?;
    Ok((file, truth))
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyRow {
    pub dgp: DgpKind,
    pub categories: usize,
    pub rounds: usize,
    pub n: u64,
    pub delta: Option<f64>,
    pub reps: usize,
    pub correct_pct: f64,
    pub incorrect_pct: f64,
    pub no_call_pct: f64,
    pub correct_margin: Option<f64>,
    pub incorrect_margin: Option<f64>,
    pub no_call_margin: Option<f64>,
    pub correct_data_used_pct: Option<f64>,
    pub incorrect_data_used_pct: Option<f64>,
    pub ref_correct_pct: Option<f64>,
    pub ref_correct_paren: Option<f64>,
    pub ref_incorrect_pct: Option<f64>,
    pub ref_incorrect_paren: Option<f64>,
    pub ref_no_call_pct: Option<f64>,
    pub ref_no_call_paren: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RmseRow {
    pub dgp: DgpKind,
    pub categories: usize,
    pub rounds: usize,
    pub n: u64,
    pub checkpoint: usize,
    pub reps: usize,
    pub rmse_pct: f64,
    pub failed_fits: usize,
    pub ref_rmse_pct: f64,
    pub ref_is_upper_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum ReportRows {
    Accuracy(Vec<AccuracyRow>),
    Rmse(Vec<RmseRow>),
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateReport {
    pub seed: u64,
    pub table: TableId,
    pub title: String,
    pub reps: usize,
    pub scale: f64,
    pub rows: ReportRows,
}

fn scaled(n: u64, scale: f64) -> u64 {
    ((n as f64 * scale).round() as u64).max(1)
}

/// Standard error, in percentage points, of a proportion near one half.
pub fn worst_case_se_pct(reps: usize) -> f64 {
    50.0 / (reps as f64).sqrt()
}

pub fn replicate(ctx: &Context, id: TableId, reps: usize, scale: f64) -> CliResult<ReplicateReport> {
    if reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if !(scale > 0.0) {
        return Err(CliError::Usage("--scale must be positive".into()));
    }
    let settings = ctx.config.experiment_settings();
    let rng = stream(ctx, 4);
    let (title, rows) = match table(id) {
        TableSpec::Accuracy { title, cells, .. } => {
            let rows = cells
                .iter()
                .enumerate()
                .map(|(i, cell): (usize, &AccuracyCell)| {
                    let mut spec = cell.spec.clone();
                    spec.n = scaled(spec.n, scale);
                    let r = run_accuracy_experiment(&spec, reps, &settings, &rng.substream(i as u64))?;
                    let s = &r.summary;
                    let pct = |v: Option<f64>| v.map(|x| 100.0 * x);
                    let rf = cell.reference;
                    Ok(AccuracyRow {
                        dgp: spec.kind,
                        categories: spec.categories,
                        rounds: spec.rounds,
                        n: spec.n,
                        delta: cell.delta,
                        reps,
                        correct_pct: s.correct.percent,
                        incorrect_pct: s.incorrect.percent,
                        no_call_pct: s.no_call.percent,
                        correct_margin: s.correct.mean_final_margin,
                        incorrect_margin: s.incorrect.mean_final_margin,
                        no_call_margin: s.no_call.mean_final_margin,
                        correct_data_used_pct: pct(s.correct.mean_data_frac_used),
                        incorrect_data_used_pct: pct(s.incorrect.mean_data_frac_used),
                        ref_correct_pct: rf.correct.map(|r| r.percent),
                        ref_correct_paren: rf.correct.and_then(|r| r.paren),
                        ref_incorrect_pct: rf.incorrect.map(|r| r.percent),
                        ref_incorrect_paren: rf.incorrect.and_then(|r| r.paren),
                        ref_no_call_pct: rf.no_call.map(|r| r.percent),
                        ref_no_call_paren: rf.no_call.and_then(|r| r.paren),
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            (title, ReportRows::Accuracy(rows))
        }
        TableSpec::Rmse { title, categories, rounds, n, cells, .. } => {
            let n = scaled(n, scale);
            let checkpoints: Vec<usize> = ctx.config.replicate.checkpoints.clone();
            let mut rows = Vec::new();
            for (i, kind) in [DgpKind::Dgp1, DgpKind::Dgp2, DgpKind::Dgp3].into_iter().enumerate() {
                let spec = DgpSpec::new(kind, categories, rounds, n);
                let r = run_share_rmse_experiment(&spec, &checkpoints, reps, &settings, &rng.substream(i as u64))?;
                for (k, &checkpoint) in checkpoints.iter().enumerate() {
                    let reference = cells
                        .iter()
                        .find(|c: &&RmseCell| c.kind == kind && c.checkpoint == checkpoint)
                        .map(|c| c.reference);
                    rows.push(RmseRow {
                        dgp: kind,
                        categories,
                        rounds,
                        n,
                        checkpoint,
                        reps,
                        rmse_pct: r.rmse_pct[k],
                        failed_fits: r.failures[k],
                        ref_rmse_pct: reference.map(|r| r.percent).unwrap_or(f64::NAN),
                        ref_is_upper_bound: reference.is_some_and(|r| r.upper_bound),
                    });
                }
            }
            (title, ReportRows::Rmse(rows))
        }
    };
    let report = ReplicateReport {
        seed: ctx.seed,
        table: id,
        title: title.to_string(),
        reps,
        scale,
        rows,
    };
    let mut csv = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Usage(e.to_string());
    match &report.rows {
        ReportRows::Accuracy(rows) => rows.iter().try_for_each(|r| csv.serialize(r)).map_err(csv_err)?,
        ReportRows::Rmse(rows) => rows.iter().try_for_each(|r| csv.serialize(r)).map_err(csv_err)?,
    }
    let bytes = csv.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    ctx.write(&format!("report_{id}.csv"), &bytes)?;
    ctx.write_json(&format!("report_{id}.json"), &report)?;
    Ok(report)
}
