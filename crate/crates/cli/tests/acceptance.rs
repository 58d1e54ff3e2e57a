//! Acceptance suite. Each criterion prints one PASS, FAIL or SKIP line with
//! the measured quantity and its runtime; any FAIL makes the process exit
//! nonzero. Run with `cargo test --release -p causal-match-cli --test acceptance`.
//!
//! Criterion 10 needs real reanalysis data; set `CAUSAL_MATCH_NARR_CONFIG`
//! to a run config (see the README) to enable it.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use causal_match::effects::{analyze_frame, decompose, fit_outcome_model, gcomp_ate, stratified_slopes};
use causal_match::linreg::{fit_probit, fit_wls, probit_loglik, probit_score};
use causal_match::propensity::ipw_weights;
use causal_match::synth::{check_balancing_property, check_outcome_independence, generate, DiscreteModel, ScmSpec};
use causal_match::{DesignMatrix, PotentialFrame, PropensityResult, WeightingScheme};
use causal_match_cli::commands;
use causal_match_cli::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::*;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs `f`, then fails it if it ran over `limit`.
fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let out = match (out, limit) {
        (Pass(d), Some(l)) if took > l => Fail(format!("{d}; too slow: {:.2} s > {:.0} s", secs(took), secs(l))),
        (o, _) => o,
    };
    (out, took)
}

fn c1_decomposition() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut frames = 0;
    while frames < 1000 {
        let n = r.random_range(2..=20usize);
        let a: Vec<u8> = (0..n).map(|_| r.random_range(0..=1u8)).collect();
        if !(a.contains(&0) && a.contains(&1)) {
            continue;
        }
        let y0: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let y1: Vec<f64> = y0.iter().map(|v| v + r.random_range(-5.0..5.0)).collect();
        let pf = PotentialFrame::new(a, y0, y1, vec![]).expect("valid frame");
        let d = decompose(&pf).expect("both classes present");
        worst = worst.max(d.residual.abs());
        frames += 1;
    }
    verdict(worst < 1e-12, format!("max |naive - (ATE + bias + het)| = {worst:.2e} over {frames} frames (< 1e-12)"))
}

fn c2_balancing() -> Outcome {
    let models = 50;
    let worst = (0..models)
        .map(|s| check_balancing_property(&DiscreteModel::random_binary(s)).unwrap().max_violation)
        .fold(0.0, f64::max);
    let control = commands::coarse_score_model(7).unwrap();
    let spread = control.p_treat.iter().fold(0.0f64, |m, &p| m.max((p - control.p_treat[0]).abs()));
    let cv = check_balancing_property(&control).unwrap().max_violation;
    verdict(
        worst <= 1e-12 && spread > 0.0 && cv > 0.01,
        format!("max violation {worst:.2e} on {models} models (<= 1e-12); coarse-score control {cv:.3} (> 0.01)"),
    )
}

fn c3_outcome_independence() -> Outcome {
    let models = 50;
    let worst = (0..models)
        .map(|s| check_outcome_independence(&DiscreteModel::random_binary(s)).unwrap().max_violation)
        .fold(0.0, f64::max);
    let cv = check_outcome_independence(&commands::confounded_model(7)).unwrap().max_violation;
    verdict(
        worst <= 1e-12 && cv > 0.01,
        format!("max violation {worst:.2e} on {models} models (<= 1e-12); confounded control {cv:.3} (> 0.01)"),
    )
}

fn c4_probit() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let n = 400;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let a: Vec<u8> = x.iter().map(|&v| u8::from(r.random::<f64>() < common::series_cdf(0.3 + 0.8 * v))).collect();
    let d = DesignMatrix::with_intercept(&[&x], &["x"]).unwrap();
    let fit = fit_probit(&d, &a).unwrap();
    let (g0, g1) = common::grid_probit(&x, &a, 1e-5);
    let coef_err = (fit.coefficients[0] - g0).abs().max((fit.coefficients[1] - g1).abs());

    let x2: Vec<f64> = (0..150).map(|_| r.random_range(-1.0..3.0)).collect();
    let x1: Vec<f64> = (0..150).map(|_| r.random_range(-2.0..2.0)).collect();
    let a2: Vec<u8> = (0..150).map(|i| u8::from(x1[i] + 0.5 * x2[i] + r.random_range(-1.5..1.5) > 0.5)).collect();
    let d2 = DesignMatrix::with_intercept(&[&x1, &x2], &["x1", "x2"]).unwrap();
    let mut grad_err: f64 = 0.0;
    for _ in 0..100 {
        let g: Vec<f64> = (0..3).map(|_| r.random_range(-1.5..1.5)).collect();
        let s = probit_score(&d2, &a2, &g);
        for j in 0..3 {
            let h = 1e-5;
            let (mut up, mut dn) = (g.clone(), g.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (probit_loglik(&d2, &a2, &up) - probit_loglik(&d2, &a2, &dn)) / (2.0 * h);
            grad_err = grad_err.max((s[j] - fd).abs() / s[j].abs().max(1.0));
        }
    }
    verdict(
        coef_err < 1e-3 && grad_err < 1e-5,
        format!("max coefficient gap to grid search {coef_err:.2e} (< 1e-3); max relative gradient gap {grad_err:.2e} (< 1e-5)"),
    )
}

fn c5_wls() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let p = r.random_range(1..=5usize);
        let n = r.random_range(p + 1..=50usize);
        let mut cols = vec![vec![1.0; n]];
        for _ in 1..p {
            cols.push((0..n).map(|_| r.random_range(-3.0..3.0)).collect());
        }
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| r.random_range(0.1..2.0)).collect();
        let labels: Vec<String> = (0..p).map(|j| format!("c{j}")).collect();
        let fit = fit_wls(&DesignMatrix::from_columns(cols.clone(), labels).unwrap(), &y, &w).unwrap();
        let exact = common::exact_wls(&cols, &y, &w).unwrap();
        let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = fit.coefficients.iter().zip(&exact).map(|(b, e)| (b - e).abs()).fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    verdict(worst < 1e-10, format!("max normwise relative error {worst:.2e} on 500 instances (< 1e-10)"))
}

fn c6_gcomp() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(66);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let k = r.random_range(1..=4usize);
        let spec = ScmSpec {
            k,
            confounder_means: (0..k).map(|_| r.random_range(-2.0..2.0)).collect(),
            confounder_sds: (0..k).map(|_| r.random_range(0.5..2.0)).collect(),
            gamma: (0..=k).map(|_| r.random_range(-0.5..0.5)).collect(),
            intercept: r.random_range(-1.0..1.0),
            tau: r.random_range(-3.0..3.0),
            main_effects: (0..k).map(|_| r.random_range(-2.0..2.0)).collect(),
            interactions: (0..k).map(|_| r.random_range(-1.0..1.0)).collect(),
            noise_sd: 1.0,
        };
        let frame = generate(&spec, 300, trial).unwrap().to_causal_frame().unwrap();
        let psr = PropensityResult::from_scores(vec![0.5; frame.n()], frame.a()).unwrap();
        let mut ws = ipw_weights(&psr, frame.a()).unwrap();
        ws.w = (0..frame.n()).map(|_| r.random_range(0.2..3.0)).collect();
        let model = fit_outcome_model(&frame, Some(&ws)).unwrap();
        let est = gcomp_ate(&model, &frame).unwrap();
        let n = frame.n();
        let brute = (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..k).map(|j| frame.x(j)[i]).collect();
                model.predict(1.0, &x) - model.predict(0.0, &x)
            })
            .sum::<f64>()
            / n as f64;
        let u = model.uncentered();
        let linear = u[1] + (0..k).map(|j| u[2 + k + j] * frame.x(j).iter().sum::<f64>() / n as f64).sum::<f64>();
        worst = worst.max((linear - brute).abs()).max((est.estimate - brute).abs());
    }
    verdict(worst < 1e-10, format!("max |beta_a + sum alpha_j xbar_j - mean prediction difference| = {worst:.2e} on 100 fits (< 1e-10)"))
}

/// Criteria 7 and 8 share one Monte-Carlo run.
fn c7_c8_monte_carlo() -> (Outcome, Outcome, Duration) {
    let start = Instant::now();
    let spec = ScmSpec::default();
    let tau = spec.tau;
    let truth = spec.analytic_effects().unwrap().ate;
    assert_eq!(truth, tau, "default spec has centred confounders");
    let seeds = 200u64;
    let runs: Vec<_> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let frame = generate(&spec, 5000, 1000 + s).unwrap().to_causal_frame().unwrap();
            analyze_frame(&frame, &WeightingScheme::Ipw, s as usize).unwrap()
        })
        .collect();
    let took = start.elapsed();

    let mean = |f: &dyn Fn(&causal_match::effects::TrialResult) -> f64| runs.iter().map(f).sum::<f64>() / seeds as f64;
    let naive_bias = (mean(&|t| t.naive.estimate) - tau).abs();
    let matched_bias = (mean(&|t| t.matched.estimate) - tau).abs();
    let covered = runs.iter().filter(|t| t.matched.covers(tau)).count();
    let coverage = covered as f64 / seeds as f64;
    let c7_ok = naive_bias > 5.0 * matched_bias && coverage > 0.90 && coverage < 0.98 && took < Duration::from_secs(120);
    let c7 = verdict(
        c7_ok,
        format!(
            "naive bias {naive_bias:.4} vs matched bias {matched_bias:.4} (ratio {:.1} > 5); coverage {covered}/{seeds} = {:.1}% in (90%, 98%); {:.1} s (< 120 s)",
            naive_bias / matched_bias,
            100.0 * coverage,
            secs(took)
        ),
    );

    let balanced = runs.iter().filter(|t| t.balance.records.iter().all(|r| r.smd_after.abs() < 0.1)).count();
    let improved = runs.iter().all(|t| t.balance.records.iter().all(|r| r.smd_after.abs() < r.smd_before.abs()));
    let worst_after = runs
        .iter()
        .flat_map(|t| t.balance.records.iter().map(|r| r.smd_after.abs()))
        .fold(0.0, f64::max);
    let c8 = verdict(
        balanced as f64 >= 0.95 * seeds as f64 && improved,
        format!(
            "all |SMD| < 0.1 after IPW in {balanced}/{seeds} seeds (>= 95%); post < pre in every seed and variable: {improved}; worst post |SMD| {worst_after:.3}"
        ),
    );
    (c7, c8, took)
}

/// Type-7 quantile, written independently of the library.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn c9_simpson() -> Outcome {
    let (t, y, z) = common::two_cluster_simpson(100);
    let bins = 10;
    let s = stratified_slopes(&t, &y, &z, bins).unwrap();
    let (_, marginal) = common::ols_line(&t, &y);
    let mut sorted = z.clone();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (0..bins).map(|j| quantile(&sorted, j as f64 / bins as f64)).collect();
    let bin_of = |v: f64| edges.iter().rposition(|&e| e <= v).unwrap_or(0);
    let mut worst = (s.marginal.slope - marginal).abs();
    let mut ok = s.strata.len() == bins && marginal > 0.0;
    for (b, rec) in s.strata.iter().enumerate() {
        let idx: Vec<usize> = (0..z.len()).filter(|&i| bin_of(z[i]) == b).collect();
        let tb: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let (_, slope) = common::ols_line(&tb, &yb);
        worst = worst.max((rec.slope - slope).abs());
        ok &= rec.slope < 0.0 && rec.n == idx.len();
    }
    let max_stratum = s.strata.iter().map(|r| r.slope).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        ok && worst < 1e-10,
        format!(
            "marginal slope {:.3} (> 0); largest of {} stratum slopes {max_stratum:.3} (< 0); max gap to per-bin OLS {worst:.2e} (< 1e-10)",
            s.marginal.slope,
            s.strata.len()
        ),
    )
}

const NARR_ENV: &str = "CAUSAL_MATCH_NARR_CONFIG";
const NARR_STRATIFIER_ENV: &str = "CAUSAL_MATCH_NARR_STRATIFIER";
/// Height below which stratum slopes should be negative at 350 hPa.
const NARR_HEIGHT: f64 = 8100.0;

fn c10_narr(scratch: &Path) -> Outcome {
    let Ok(path) = std::env::var(NARR_ENV) else {
        return Skip(format!("set {NARR_ENV} to a run config over a reanalysis extract to enable"));
    };
    let base = match RunConfig::load(Path::new(&path)) {
        Ok(c) => c,
        Err(e) => return Fail(format!("cannot load {path}: {e}")),
    };
    let cfg = RunConfig {
        n_trials: 10,
        sample_size: Some(10_000),
        out: scratch.join("narr"),
        formats: vec![causal_match_cli::Format::Csv, causal_match_cli::Format::Json],
        ..base.clone()
    };
    let report = match commands::analyze(&cfg) {
        Ok(r) => r,
        Err(e) => return Fail(format!("analyze failed: {e}")),
    };
    let signs_ok = report.failures.is_empty()
        && report.trials.len() == 10
        && report.trials.iter().all(|t| {
            t.naive.estimate > 0.0
                && t.adjusted.estimate < 0.0
                && t.matched.estimate > 0.0
                && t.matched.estimate < t.naive.estimate
        });
    let stratifier = std::env::var(NARR_STRATIFIER_ENV).unwrap_or_else(|_| "z350".into());
    let slopes = match commands::simpson(&RunConfig { out: scratch.join("narr_simpson"), ..base }, &stratifier, 50) {
        Ok(s) => s,
        Err(e) => return Fail(format!("simpson failed: {e}")),
    };
    let low: Vec<f64> = slopes.strata.iter().filter(|r| r.upper <= NARR_HEIGHT).map(|r| r.slope).collect();
    let low_ok = !low.is_empty() && low.iter().all(|&s| s < 0.0);
    let (n, a, m) = (&report.summary[0], &report.summary[1], &report.summary[2]);
    verdict(
        signs_ok && low_ok,
        format!(
            "10 trials: naive {:.3}..{:.3}, adjusted {:.3}..{:.3}, matched {:.3}..{:.3}; signs as expected in every trial: {signs_ok}; {} strata below {NARR_HEIGHT} m all negative: {low_ok}",
            n.min, n.max, a.min, a.max, m.min, m.max,
            low.len()
        ),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn run_cli(args: &[&str], threads: Option<&str>) -> bool {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_causal-match"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env(causal_match_cli::THREADS_ENV, t),
        None => cmd.env_remove(causal_match_cli::THREADS_ENV),
    };
    cmd.status().map(|s| s.success()).unwrap_or(false)
}

fn c11_determinism(scratch: &Path) -> Outcome {
    let sim = scratch.join("sim");
    let sim_s = sim.to_str().unwrap();
    if !run_cli(&["simulate", "--n", "3000", "--seed", "11", "--out", sim_s], None) {
        return Fail("simulate failed".into());
    }
    let data = sim.join("data.csv");
    let out = scratch.join("det");
    let mut compared = 0;
    for (scheme, extra) in [("ipw", vec![]), ("nn", vec!["--caliper", "0.25"]), ("subclass", vec!["--strata", "6"])] {
        let mut snapshots = Vec::new();
        for threads in [None, Some("1"), None] {
            let _ = std::fs::remove_dir_all(&out);
            let mut args = vec![
                "analyze", "--input", data.to_str().unwrap(), "--treatment", "a", "--outcome", "y",
                "--confounders", "x1,x2,x3", "--scheme", scheme, "--trials", "6", "--sample-size", "2000",
                "--seed", "2024", "--format", "csv,json,svg", "--no-timestamp", "--out", out.to_str().unwrap(),
            ];
            args.extend(&extra);
            if !run_cli(&args, threads) {
                return Fail(format!("analyze --scheme {scheme} failed"));
            }
            snapshots.push(read_dir(&out));
        }
        for s in &snapshots[1..] {
            if s != &snapshots[0] {
                let differing: Vec<&String> =
                    s.keys().filter(|k| snapshots[0].get(*k) != s.get(*k)).collect();
                return Fail(format!("--scheme {scheme}: outputs differ between runs: {differing:?}"));
            }
        }
        compared += snapshots[0].len();
    }
    Pass(format!("3 schemes x 3 runs (default pool, 1 thread, default pool): {compared} files byte-identical"))
}

fn main() {
    let scratch = std::env::temp_dir().join(format!("causal-match-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&scratch).unwrap();
    let s = Duration::from_secs;
    let mut results: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let mut run = |id: u32, name: &'static str, limit: Option<Duration>, f: &dyn Fn() -> Outcome| {
        let (o, d) = timed(limit, f);
        results.push((id, name, o, d));
    };
    run(1, "decomposition identity", Some(s(1)), &c1_decomposition);
    run(2, "balancing score (A1)", Some(s(1)), &c2_balancing);
    run(3, "outcome independence given the score (A2)", Some(s(1)), &c3_outcome_independence);
    run(4, "probit MLE and score", Some(s(10)), &c4_probit);
    run(5, "WLS against exact normal equations", Some(s(5)), &c5_wls);
    run(6, "g-computation linear identity", Some(s(5)), &c6_gcomp);
    let (c7, c8, took) = c7_c8_monte_carlo();
    results.push((7, "bias and coverage", c7, took));
    results.push((8, "balance after IPW", c8, took));
    let mut run = |id: u32, name: &'static str, limit: Option<Duration>, f: &dyn Fn() -> Outcome| {
        let (o, d) = timed(limit, f);
        results.push((id, name, o, d));
    };
    run(9, "Simpson reversal", Some(s(1)), &c9_simpson);
    run(10, "reanalysis signs", None, &|| c10_narr(&scratch));
    run(11, "byte-identical reruns", None, &|| c11_determinism(&scratch));
    let _ = std::fs::remove_dir_all(&scratch);

    let mut failed = 0;
    for (id, name, o, d) in &results {
        let (tag, detail) = match o {
            Pass(m) => ("PASS", m),
            Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Skip(m) => ("SKIP", m),
        };
        println!("{tag} criterion {id:>2} {name}: {detail} [{:.3} s]", secs(*d));
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
