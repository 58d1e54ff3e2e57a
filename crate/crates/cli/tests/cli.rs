use std::path::Path;
use std::process::{Command, Output};

use causal_match::ScmSpec;
use causal_match_cli::RunConfig;
use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causal-match"))
        .args(args)
        .env_remove(causal_match_cli::THREADS_ENV)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn simulate(dir: &Path, n: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join("sim");
    let o = cli(&["simulate", "--n", n, "--seed", seed, "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("data.csv")
}

#[test]
fn simulate_writes_data_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain");
    assert!(cli(&["simulate", "--n", "1000", "--out", s(&plain)]).status.success());
    let text = std::fs::read_to_string(plain.join("data.csv")).unwrap();
    assert!(text.starts_with("unit_id,a,y,x1,x2,x3\n"));
    assert_eq!(text.lines().count(), 1001);

    let pot = dir.path().join("pot");
    assert!(cli(&["simulate", "--n", "10", "--with-potential", "--out", s(&pot)]).status.success());
    let text = std::fs::read_to_string(pot.join("data.csv")).unwrap();
    assert!(text.starts_with("unit_id,a,y,x1,x2,x3,y0,y1\n"));

    let truth = read_json(&plain.join("truth.json"));
    let analytic = ScmSpec::default().analytic_effects().unwrap();
    assert_eq!(truth["analytic"]["ate"].as_f64().unwrap(), analytic.ate);
    assert_eq!(truth["analytic"]["att"].as_f64().unwrap(), analytic.att);
}

#[test]
fn bad_spec_names_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, "{\n  \"k\": 2,\n  \"noise\": 1.0\n}\n").unwrap();
    let o = cli(&["simulate", "--spec", s(&spec), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr_json(&o)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("noise") && msg.contains("line 3"), "{msg}");

    std::fs::write(&spec, r#"{"noise_sd": -1.0}"#).unwrap();
    let o = cli(&["simulate", "--spec", s(&spec), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn analyze_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "analyze", "--input", data, "--treatment", "a", "--outcome", "y", "--confounders", "x1,x2,x3", "--trials",
        "3", "--sample-size", "500", "--seed", "9", "--out", out,
    ]
}

#[test]
fn analyze_matches_golden_effects_and_covers_tau() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "600", "3");
    let out = dir.path().join("an");
    let o = cli(&analyze_args(s(&data), s(&out)));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["version"], causal_match::VERSION);
    for t in report["trials"].as_array().unwrap() {
        let (lo, hi) = (t["matched"]["ci_low"].as_f64().unwrap(), t["matched"]["ci_high"].as_f64().unwrap());
        assert!(lo <= 2.0 && 2.0 <= hi, "[{lo}, {hi}]");
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/effects_seed9.csv");
    let got = std::fs::read_to_string(out.join("effects.csv")).unwrap();
    if std::env::var_os("CAUSAL_MATCH_BLESS").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(golden).unwrap());
    let balance = std::fs::read_to_string(out.join("balance.csv")).unwrap();
    // Three trials, three confounders plus the score.
    assert_eq!(balance.lines().count(), 1 + 3 * 4);
    assert!(balance.lines().skip(1).any(|l| l.split(',').nth(1) == Some("ps")));
    for name in ["qq_x1.csv", "qq_x2.csv", "qq_x3.csv", "qq_ps.csv", "weights.csv", "config.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn report_echoes_config_and_config_file_replays_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "600", "4");
    let out = dir.path().join("an");
    let mut args = analyze_args(s(&data), s(&out));
    args.extend(["--scheme", "nn", "--caliper", "0.3", "--without-replacement"]);
    assert!(cli(&args).status.success());
    let written = RunConfig::load(&out.join("config.json")).unwrap();
    let echoed: RunConfig = serde_json::from_value(read_json(&out.join("report.json"))["config"].clone()).unwrap();
    assert_eq!(written, echoed);
    assert_eq!(written.weighting, causal_match::WeightingScheme::Nn { with_replacement: false, caliper: Some(0.3) });

    let first: Vec<Vec<u8>> =
        ["effects.csv", "report.json", "weights.csv"].iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
    let cfg_copy = dir.path().join("replay.json");
    std::fs::copy(out.join("config.json"), &cfg_copy).unwrap();
    std::fs::remove_dir_all(&out).unwrap();
    assert!(cli(&["analyze", "--config", s(&cfg_copy)]).status.success());
    let second: Vec<Vec<u8>> =
        ["effects.csv", "report.json", "weights.csv"].iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn zero_trials_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "100", "1");
    let mut args = analyze_args(s(&data), "unused");
    args[10] = "0";
    let o = cli(&args);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["class"], "config");
}

#[test]
fn bad_cell_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "a,y,x1\n0,1,0.5\n1,2,oops\n0,3,0.1\n1,1,0.7\n").unwrap();
    let o = cli(&["analyze", "--input", s(&data), "--treatment", "a", "--outcome", "y", "--confounders", "x1", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    let msg = stderr_json(&o)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("row 1") && msg.contains("x1"), "{msg}");
}

#[test]
fn separated_treatment_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("a,y,x1\n");
    for i in 0..60 {
        let x = f64::from(i) / 10.0 - 3.0;
        text.push_str(&format!("{},{},{x}\n", u8::from(x > 0.0), (i % 7) as f64));
    }
    std::fs::write(&data, text).unwrap();
    let o = cli(&["analyze", "--input", s(&data), "--treatment", "a", "--outcome", "y", "--confounders", "x1", "--trials", "2", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_json(&o)["error"]["class"], "numerical");
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_causal-match"))
        .args(["check-appendix-b", "--models", "2"])
        .env(causal_match_cli::THREADS_ENV, "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

/// Continuous, positive treatment driven by `z`; within any narrow band
/// of `z` the outcome falls with the treatment.
fn write_simpson_csv(path: &Path) {
    let mut text = String::from("unit_id,swr,theta,z\n");
    let golden = 0.618_033_988_749_894_9;
    for i in 0..400 {
        let c = (i / 100) as f64;
        let u = (i as f64 * golden).fract();
        let t = 1.0 + 2.0 * c + u;
        let y = 6.0 * c - t + 0.01 * (i as f64).sin();
        let z = 100.0 * c + (i % 100) as f64 / 10.0;
        text.push_str(&format!("u{i},{},{y},{z}\n", t * t));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn simpson_flags_reversal_and_single_bin_is_marginal() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_simpson_csv(&data);
    let out = dir.path().join("s");
    let o = cli(&[
        "simpson", "--input", s(&data), "--treatment", "swr", "--outcome", "theta", "--confounder", "z",
        "--sqrt-treatment", "--bins", "4", "--out", s(&out), "--format", "csv,json,svg",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.contains("4 of 4 strata") && line.contains("Simpson reversal"), "{line}");
    let strata = std::fs::read_to_string(out.join("strata.csv")).unwrap();
    assert_eq!(strata.lines().count(), 1 + 1 + 4);
    assert!(out.join("strata.svg").is_file());
    let summary = read_json(&out.join("simpson.json"));
    assert_eq!(summary["transforms"][0]["transform"], "sqrt");

    let one = dir.path().join("one");
    let o = cli(&[
        "simpson", "--input", s(&data), "--treatment", "swr", "--outcome", "theta", "--confounder", "z",
        "--bins", "1", "--out", s(&one), "--format", "json",
    ]);
    assert!(o.status.success());
    let v = read_json(&one.join("simpson.json"));
    let strata = v["slopes"]["strata"].as_array().unwrap();
    assert_eq!(strata.len(), 1);
    assert_eq!(strata[0]["slope"], v["slopes"]["marginal"]["slope"]);
}

#[test]
fn dichotomized_gridded_input_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("grid.csv");
    let mut text = String::from("row,col,date,swr,theta,z875,z900\n");
    let mut k = 0u32;
    for date in ["2020-06-01", "2020-06-02"] {
        for r in 0..12 {
            for c in 0..12 {
                k += 1;
                let h = (f64::from(k) * 0.754_877_666).fract();
                let g = (f64::from(k) * 0.569_840_290).fract();
                let z1 = f64::from(r) + h;
                let z2 = f64::from(c) + g;
                let swr = (20.0 + 3.0 * z1 - 2.0 * z2 + 10.0 * (h - 0.5)).powi(2);
                let theta = 280.0 + 0.5 * z1 + 0.3 * z2 + 0.05 * swr.sqrt() + g;
                text.push_str(&format!("{r},{c},{date},{swr},{theta},{z1},{z2}\n"));
            }
        }
    }
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("o");
    let o = cli(&[
        "analyze", "--input", s(&data), "--treatment", "swr", "--outcome", "theta", "--confounders", "z875,z900",
        "--sqrt-treatment", "--dichotomize", "median", "--trim-border", "1", "--grid-rows", "12", "--grid-cols",
        "12", "--trials", "2", "--sample-size", "150", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    let kinds: Vec<&str> =
        report["data"]["transforms"].as_array().unwrap().iter().map(|t| t["transform"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["trim_border", "sqrt", "dichotomize"]);
    assert_eq!(report["data"]["n"], 2 * 10 * 10);
    let weights = std::fs::read_to_string(out.join("weights.csv")).unwrap();
    assert!(weights.lines().skip(1).all(|l| l.contains("@2020-06-0")));
}

#[test]
fn svg_timestamp_is_the_only_difference() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "400", "6");
    let runs: Vec<String> = [true, false]
        .iter()
        .map(|&stamp| {
            let out = dir.path().join(format!("o{stamp}"));
            let mut args = vec![
                "balance", "--input", s(&data), "--treatment", "a", "--outcome", "y", "--confounders", "x1,x2,x3",
                "--format", "svg", "--out", s(&out),
            ];
            if !stamp {
                args.push("--no-timestamp");
            }
            let o = cli(&args);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read_to_string(out.join("smd.svg")).unwrap()
        })
        .collect();
    assert!(runs[0].contains("<metadata>generated unix:"));
    assert!(!runs[1].contains("<metadata>"));
    let stripped: String = runs[0].lines().filter(|l| !l.starts_with("<metadata>")).map(|l| format!("{l}\n")).collect();
    assert_eq!(stripped, runs[1]);
}

#[test]
fn appendix_b_check_passes() {
    let o = cli(&["check-appendix-b", "--models", "25", "--seed", "3"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["models"].as_array().unwrap().len(), 25);
    assert!(v["max_balancing"].as_f64().unwrap() <= 1e-12);
}
