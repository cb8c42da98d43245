use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use seqmult::simlab::{generate_dataset, landslide_fixture, DgpKind, DgpSpec};
use seqmult::stochastics::RngStream;
use seqmult_cli::rounds::RoundsFile;

/// Smaller sampler and forecast budgets keep each invocation to a second or two.
const FAST: &str = r#""gibbs": {"burn_in": 300, "draws": 800, "check_every": 300},
    "forecast": {"n_sims": 1000}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_seqmult"));
    c.env_remove("SEQMULT_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(schema: &str, doc: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(schema);
    let schema = json(&path);
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema:?}: {errors:#?}");
}

fn fast_config(dir: &Path, extra: &str) -> PathBuf {
    let sep = if extra.is_empty() { "" } else { "," };
    write(dir, "cfg.json", &format!("{{{FAST}{sep}{extra}}}"))
}

fn landslide_file(dir: &Path) -> PathBuf {
    let fx = landslide_fixture(&mut RngStream::new(11, 0)).unwrap();
    let p = dir.join("landslide.csv");
    RoundsFile::new(vec!["a".into(), "b".into(), "c".into()], fx.series).unwrap().save(&p).unwrap();
    p
}

#[test]
fn simulate_dgp1_rows_sum_to_n_and_truth_is_a_distribution() {
    let d = TempDir::new().unwrap();
    let cfg = fast_config(d.path(), r#""dgp": {"kind": "dgp1", "categories": 3, "rounds": 25, "n": 1000}"#);
    let out = run(d.path(), &["--seed", "5", "--config", cfg.to_str().unwrap(), "--out", "o", "simulate"]);
    ok(&out);
    let file = RoundsFile::read(&d.path().join("o/rounds.csv")).unwrap();
    assert_eq!(file.series.len(), 25);
    for r in file.series.rounds() {
        assert_eq!(r.n, 1000);
        assert_eq!(r.counts.iter().sum::<u64>(), 1000);
    }
    let truth = json(&d.path().join("o/truth.json"));
    assert_schema("truth.schema.json", &truth);
    let s: f64 = truth["p"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_round_trips_and_is_byte_identical() {
    let d = TempDir::new().unwrap();
    let cfg = fast_config(d.path(), r#""dgp": {"kind": "dgp2", "categories": 4, "rounds": 10, "n": 2000}"#);
    let c = cfg.to_str().unwrap();
    ok(&run(d.path(), &["--seed", "9", "--config", c, "--out", "a", "simulate"]));
    ok(&run(d.path(), &["--seed", "9", "--config", c, "--out", "b", "simulate"]));
    for f in ["rounds.csv", "truth.json"] {
        assert_eq!(fs::read(d.path().join("a").join(f)).unwrap(), fs::read(d.path().join("b").join(f)).unwrap());
    }
    let spec = DgpSpec::new(DgpKind::Dgp2, 4, 10, 2000);
    let ds = generate_dataset(&spec, &mut RngStream::new(9, 3)).unwrap();
    let parsed = RoundsFile::read(&d.path().join("a/rounds.csv")).unwrap();
    assert_eq!(parsed.series, ds.series);
}

#[test]
fn fit_reports_two_dim_mu_and_is_deterministic() {
    let d = TempDir::new().unwrap();
    let rounds = landslide_file(d.path());
    let cfg = fast_config(d.path(), "");
    let args = |o: &'static str| {
        vec!["--seed".to_string(), "3".into(), "--config".into(), cfg.display().to_string(), "--out".into(), o.into(),
             "fit".into(), rounds.display().to_string(), "--upto".into(), "6".into()]
    };
    ok(&bin().current_dir(d.path()).args(args("a")).output().unwrap());
    ok(&bin().current_dir(d.path()).args(args("b")).output().unwrap());
    let a = fs::read(d.path().join("a/fit.json")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b/fit.json")).unwrap());
    let fit: Value = serde_json::from_slice(&a).unwrap();
    assert_schema("fit.schema.json", &fit);
    assert_eq!(fit["dim"], 2);
    assert_eq!(fit["mu_mean"].as_array().unwrap().len(), 2);
    assert_eq!(fit["rounds_used"], 6);
    let shares: Vec<f64> = fit["implied_shares"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((shares[0] - 0.7).abs() < 0.01, "{shares:?}");
}

#[test]
fn thread_count_does_not_change_output() {
    let d = TempDir::new().unwrap();
    let rounds = landslide_file(d.path());
    let cfg = fast_config(d.path(), "");
    for (t, o) in [("1", "a"), ("3", "b")] {
        let out = bin()
            .current_dir(d.path())
            .env("SEQMULT_THREADS", t)
            .args(["--config", cfg.to_str().unwrap(), "--out", o, "fit", rounds.to_str().unwrap(), "--upto", "4"])
            .output()
            .unwrap();
        ok(&out);
    }
    assert_eq!(fs::read(d.path().join("a/fit.json")).unwrap(), fs::read(d.path().join("b/fit.json")).unwrap());
}

#[test]
fn sum_mismatch_is_a_validation_error_naming_the_row() {
    let d = TempDir::new().unwrap();
    let f = write(d.path(), "bad.csv", "round,n,a,b,c\n1,100,50,30,20\n2,100,50,30,19\n");
    let out = run(d.path(), &["fit", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2"), "{err}");
}

#[test]
fn malformed_csv_reports_the_row() {
    let d = TempDir::new().unwrap();
    let f = write(d.path(), "bad.csv", "round,n,a,b\n1,100,50,50\n2,100,fifty,50\n");
    let out = run(d.path(), &["call", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let d = TempDir::new().unwrap();
    let rounds = landslide_file(d.path());
    let cfg = write(d.path(), "cfg.json", r#"{"gibbs": {"chains": 4}}"#);
    let out = run(d.path(), &["--config", cfg.to_str().unwrap(), "fit", rounds.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.path().join("fit.json").exists());
}

#[test]
fn example_configs_match_the_shipped_schema() {
    let full = serde_json::to_value(seqmult_cli::config::RunConfig::default()).unwrap();
    assert_schema("run_config.schema.json", &full);
    let d = TempDir::new().unwrap();
    let cfg = fast_config(
        d.path(),
        r#""prior": {"alpha": [0.5, 0.3, 0.2], "psi": [[2, 0], [0, 2]]},
        "policy": {"election": {"margin_summary": {"lower_quantile": 0.05}}},
        "dgp": {"kind": "dgp3", "categories": 3, "rounds": 5, "n": 100, "p_source": {"delta_gap": 0.1}}"#,
    );
    let doc = json(&cfg);
    assert_schema("run_config.schema.json", &doc);
    seqmult_cli::config::RunConfig::load(&cfg).unwrap();
}

#[test]
fn non_convergence_exits_3() {
    let d = TempDir::new().unwrap();
    let rounds = landslide_file(d.path());
    let cfg = write(
        d.path(),
        "cfg.json",
        r#"{"gibbs": {"burn_in": 10, "check_every": 20, "max_iters": 60, "gr_threshold": 1.000001, "thin": 1, "draws": 20}}"#,
    );
    let out = run(d.path(), &["--config", cfg.to_str().unwrap(), "fit", rounds.to_str().unwrap(), "--upto", "3"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn infeasible_simulation_exits_4() {
    let d = TempDir::new().unwrap();
    let cfg = write(
        d.path(),
        "cfg.json",
        r#"{"dgp": {"kind": "dgp1", "categories": 3, "rounds": 5, "n": 100, "p_source": {"delta_gap": 1.5}}}"#,
    );
    let out = run(d.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_without_dgp_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    assert_eq!(run(d.path(), &["simulate"]).status.code(), Some(2));
}

#[test]
fn call_upto_one_is_too_early() {
    let d = TempDir::new().unwrap();
    let rounds = landslide_file(d.path());
    let cfg = fast_config(d.path(), "");
    let out = run(d.path(), &["--config", cfg.to_str().unwrap(), "call", rounds.to_str().unwrap(), "--upto", "1"]);
    ok(&out);
    let dec = json(&d.path().join("decision.json"));
    assert_schema("decision.schema.json", &dec);
    assert_eq!(dec["verdict"], "too_early");
    assert!(dec["first_call"].is_null());
}

#[test]
fn share_mode_before_five_rounds_is_too_early() {
    let d = TempDir::new().unwrap();
    let rounds = landslide_file(d.path());
    let cfg = fast_config(d.path(), "");
    let out = run(
        d.path(),
        &["--config", cfg.to_str().unwrap(), "call", rounds.to_str().unwrap(), "--mode", "share", "--category", "1", "--upto", "3"],
    );
    ok(&out);
    let dec = json(&d.path().join("decision.json"));
    assert_schema("decision.schema.json", &dec);
    assert_eq!(dec["mode"], "share");
    assert_eq!(dec["verdict"], "too_early");
    let trace = fs::read_to_string(d.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,observed_total,remaining_total,observed_frac,status,verdict,category,share_mean,share_lower,share_upper,half_width,called,true_share"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn landslide_is_called_for_the_true_winner_with_full_trace() {
    let d = TempDir::new().unwrap();
    let rounds = landslide_file(d.path());
    let cfg = fast_config(d.path(), "");
    let out = run(d.path(), &["--config", cfg.to_str().unwrap(), "call", rounds.to_str().unwrap()]);
    ok(&out);
    let dec = json(&d.path().join("decision.json"));
    assert_schema("decision.schema.json", &dec);
    assert_eq!(dec["verdict"], "call");
    assert_eq!(dec["first_call"]["category"], 0);
    assert_eq!(dec["first_call"]["name"], "a");
    let mut rdr = csv::Reader::from_path(d.path().join("trace.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "round", "observed_total", "remaining_total", "observed_frac", "status", "verdict", "leader", "winner_prob",
            "called", "margin_mean", "margin_lower", "margin_upper", "gate_margin", "true_margin"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    // the trace continues past the first call
    assert_eq!(rows.len(), 25);
    for r in &rows {
        let lo: f64 = r[10].parse().unwrap();
        let hi: f64 = r[11].parse().unwrap();
        assert!(lo <= hi);
        assert_eq!(&r[13], dec["true_final_margin"].as_f64().unwrap().to_string());
    }
}

#[test]
fn replicate_single_rep_warns_and_matches_schema() {
    let d = TempDir::new().unwrap();
    let cfg = fast_config(d.path(), r#""replicate": {"checkpoints": [5, 45]}"#);
    let out = run(
        d.path(),
        &["--seed", "2", "--config", cfg.to_str().unwrap(), "replicate", "--table", "3", "--reps", "1", "--scale", "0.02"],
    );
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let report = json(&d.path().join("report_3.json"));
    assert_schema("report.schema.json", &report);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r["n"] == 1000));
    let csv = fs::read_to_string(d.path().join("report_3.csv")).unwrap();
    assert!(csv.starts_with("dgp,categories,rounds,n,checkpoint,reps,rmse_pct,failed_fits,ref_rmse_pct,ref_is_upper_bound\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn replicate_unknown_table_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    assert_eq!(run(d.path(), &["replicate", "--table", "B7"]).status.code(), Some(2));
}
