//! The subcommands. Each returns its result as a value as well as writing
//! files, so tests can check numbers without parsing the output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use causal_match::balance::{self, qq_pairs_values, BALANCE_THRESHOLD, PS_VARIABLE};
use causal_match::dataset::{self, load_csv, load_raw_csv, RawFrame, Schema, TransformRecord};
use causal_match::effects::{self, run_trials, stratified_slopes, TrialFailure, TrialResult};
use causal_match::export::fmt_f64;
use causal_match::propensity::{SchemeParams, StratumSummary};
use causal_match::synth::{self, check_balancing_property, check_outcome_independence, IdentityReport, TrueEffects};
use causal_match::{
    rng, BalanceReport, CausalFrame, DiscreteModel, EffectEstimate, Error, Estimator, QQPairs, Result, ScmSpec,
    StratifiedSlopes, VERSION,
};
use serde::Serialize;

use crate::config::{Format, Purpose, RunConfig};
use crate::svg;
use crate::{CheckArgs, SimulateArgs};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut f = create(dir, name)?;
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// Creates the output directory and writes `config.json` into it.
fn prepare_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out, "config.json", &cfg.to_json()?)
}

fn stamp(cfg: &RunConfig) -> Option<String> {
    cfg.svg_timestamp.then(svg::now_stamp)
}

/// File-name-safe form of a variable name.
pub fn file_stem(variable: &str) -> String {
    variable
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Raw table with border trimming and the square root applied.
fn load_raw(cfg: &RunConfig, schema: &Schema) -> Result<RawFrame> {
    let mut raw = load_raw_csv(&cfg.input, schema)?;
    if let Some(t) = cfg.trim_border {
        raw = raw.trim_border(t.margin, t.rows, t.cols)?;
    }
    if cfg.sqrt_treatment {
        raw = raw.sqrt_transform(&cfg.treatment)?;
    }
    Ok(raw)
}

/// Reads the input and applies the configured transforms in order:
/// trim, square root, dichotomize.
pub fn load_frame(cfg: &RunConfig) -> Result<CausalFrame> {
    let schema = Schema::new(&cfg.treatment, &cfg.outcome, cfg.confounders.iter());
    match cfg.dichotomize {
        None => load_csv(&cfg.input, &schema),
        Some(rule) => {
            let raw = load_raw(cfg, &schema)?;
            dataset::dichotomize(raw, &cfg.treatment, rule, cfg.median_pooling)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub missing_dropped: usize,
    pub transforms: Vec<TransformRecord>,
}

impl DataSummary {
    fn of(frame: &CausalFrame) -> Self {
        Self {
            n: frame.n(),
            n_treated: frame.n_treated(),
            n_control: frame.n() - frame.n_treated(),
            missing_dropped: frame.missing_dropped(),
            transforms: frame.log().records().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightDetail {
    Ipw,
    Nn { caliper_width: Option<f64>, pairs: usize, dropped_treated: usize },
    Subclass { requested_strata: usize, strata: Vec<StratumSummary> },
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightSummary {
    pub ess_treated: f64,
    pub ess_control: f64,
    /// Units with positive weight.
    pub n_used: usize,
    pub detail: WeightDetail,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub trial_index: usize,
    pub n: usize,
    pub n_treated: usize,
    pub treatment_model: Option<ModelSummary>,
    pub weights: WeightSummary,
    pub naive: EffectEstimate,
    pub adjusted: EffectEstimate,
    pub matched: EffectEstimate,
    pub max_abs_smd_before: f64,
    pub max_abs_smd_after: f64,
    pub all_balanced: bool,
}

impl TrialReport {
    fn of(t: &TrialResult) -> Self {
        let treatment_model = t.propensity.treatment_fit.as_ref().map(|f| ModelSummary {
            labels: f.labels.clone(),
            coefficients: f.coefficients.clone(),
            standard_errors: f.standard_errors(),
            loglik: f.loglik,
            converged: f.converged,
            iterations: f.iterations,
        });
        let detail = match &t.weights.params {
            SchemeParams::Ipw => WeightDetail::Ipw,
            SchemeParams::Nn { caliper_width, pairs, dropped_treated, .. } => WeightDetail::Nn {
                caliper_width: *caliper_width,
                pairs: pairs.len(),
                dropped_treated: *dropped_treated,
            },
            SchemeParams::Subclass { requested_strata, strata, .. } => WeightDetail::Subclass {
                requested_strata: *requested_strata,
                strata: strata.clone(),
            },
        };
        let smd_max = |f: fn(&causal_match::BalanceRecord) -> f64| {
            t.balance.records.iter().map(|r| f(r).abs()).fold(0.0, f64::max)
        };
        Self {
            trial_index: t.trial_index,
            n: t.sample.n(),
            n_treated: t.sample.n_treated(),
            treatment_model,
            weights: WeightSummary {
                ess_treated: t.weights.ess_treated,
                ess_control: t.weights.ess_control,
                n_used: t.weights.w.iter().filter(|&&w| w > 0.0).count(),
                detail,
            },
            naive: t.naive.clone(),
            adjusted: t.adjusted.clone(),
            matched: t.matched.clone(),
            max_abs_smd_before: smd_max(|r| r.smd_before),
            max_abs_smd_after: smd_max(|r| r.smd_after),
            all_balanced: t.balance.records.iter().all(|r| r.balanced),
        }
    }
}

/// Spread of one estimator across trials.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation across trials; zero for a single trial.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl EstimatorSummary {
    fn of(estimator: Estimator, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            estimator,
            trials: values.len(),
            mean,
            sd,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub data: DataSummary,
    pub sample_size: usize,
    pub pseudo_population_size: usize,
    pub balance_threshold: f64,
    pub balance_threshold_note: String,
    pub trials: Vec<TrialReport>,
    pub failures: Vec<TrialFailure>,
    pub summary: Vec<EstimatorSummary>,
}

const ESTIMATORS: [Estimator; 3] = [Estimator::Naive, Estimator::Adjusted, Estimator::Matched];

fn pick(t: &TrialResult, e: Estimator) -> &EffectEstimate {
    match e {
        Estimator::Naive => &t.naive,
        Estimator::Adjusted => &t.adjusted,
        Estimator::Matched => &t.matched,
    }
}

fn write_effects(dir: &Path, trials: &[TrialResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(dir, "effects.csv")?);
    out.write_record(["trial", "estimator", "estimate", "se", "ci_low", "ci_high", "df", "n_used"])
        .map_err(Error::from)?;
    for t in trials {
        for e in t.estimates() {
            out.write_record([
                t.trial_index.to_string(),
                e.estimator.as_str().to_string(),
                fmt_f64(e.estimate),
                fmt_f64(e.se),
                fmt_f64(e.ci_low),
                fmt_f64(e.ci_high),
                e.df.map(fmt_f64).unwrap_or_default(),
                e.n_used.to_string(),
            ])
            .map_err(Error::from)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_balance(dir: &Path, rows: &[(usize, &BalanceReport)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(dir, "balance.csv")?);
    out.write_record([
        "trial",
        "variable",
        "scheme",
        "mean_treated_before",
        "mean_control_before",
        "sd_treated",
        "sd_control",
        "pooled_sd",
        "mean_treated_after",
        "mean_control_after",
        "smd_before",
        "smd_after",
        "balanced",
    ])
    .map_err(Error::from)?;
    for (trial, report) in rows {
        for r in &report.records {
            out.write_record([
                trial.to_string(),
                r.variable.clone(),
                r.scheme.clone(),
                fmt_f64(r.mean_treated_before),
                fmt_f64(r.mean_control_before),
                fmt_f64(r.sd_treated),
                fmt_f64(r.sd_control),
                fmt_f64(r.pooled_sd),
                fmt_f64(r.mean_treated_after),
                fmt_f64(r.mean_control_after),
                fmt_f64(r.smd_before),
                fmt_f64(r.smd_after),
                r.balanced.to_string(),
            ])
            .map_err(Error::from)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_weights(dir: &Path, trials: &[TrialResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(dir, "weights.csv")?);
    out.write_record(["trial", "unit_id", "a", "ps", "w", "scheme"]).map_err(Error::from)?;
    for t in trials {
        for i in 0..t.sample.n() {
            out.write_record([
                t.trial_index.to_string(),
                t.sample.unit_ids()[i].clone(),
                t.sample.a()[i].to_string(),
                fmt_f64(t.propensity.ps[i]),
                fmt_f64(t.weights.w[i]),
                t.weights.scheme.as_str().to_string(),
            ])
            .map_err(Error::from)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Q-Q pairs of one variable in one trial: unweighted, weighted, and from
/// an unweighted resample of the pseudo-population.
pub struct QQStages {
    pub trial_index: usize,
    pub before: QQPairs,
    pub after: QQPairs,
    pub pseudo: QQPairs,
}

/// Sub-stream index of the pseudo-population draw within a trial.
const PSEUDO_STREAM: u64 = 0;

fn qq_for_trial(t: &TrialResult, m: usize, pseudo_size: usize, seed: u64) -> Result<Vec<QQStages>> {
    let frame = &t.sample;
    let a = frame.a();
    let idx = balance::pseudo_population_indices(
        &t.weights.w,
        pseudo_size,
        rng::derive_seed(rng::derive_seed(seed, t.trial_index as u64), PSEUDO_STREAM),
    )?;
    let pa: Vec<u8> = idx.iter().map(|&i| a[i]).collect();
    let variables = frame
        .confounder_names()
        .iter()
        .zip(frame.xs())
        .map(|(n, v)| (n.as_str(), v.as_slice()))
        .chain(std::iter::once((PS_VARIABLE, t.propensity.ps.as_slice())));
    variables
        .map(|(name, values)| {
            let pv: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
            Ok(QQStages {
                trial_index: t.trial_index,
                before: qq_pairs_values(name, values, a, None, m)?,
                after: qq_pairs_values(name, values, a, Some(&t.weights.w), m)?,
                pseudo: qq_pairs_values(name, &pv, &pa, None, m)?,
            })
        })
        .collect()
}

fn write_qq(dir: &Path, variable: &str, stages: &[&QQStages]) -> Result<()> {
    let name = format!("qq_{}.csv", file_stem(variable));
    let mut out = csv::Writer::from_writer(create(dir, &name)?);
    out.write_record(["trial", "stage", "p", "q_control", "q_treatment"]).map_err(Error::from)?;
    for s in stages {
        for (stage, q) in [("before", &s.before), ("after", &s.after), ("pseudo", &s.pseudo)] {
            for j in 0..q.len() {
                out.write_record([
                    s.trial_index.to_string(),
                    stage.to_string(),
                    fmt_f64(q.probs[j]),
                    fmt_f64(q.control_q[j]),
                    fmt_f64(q.treatment_q[j]),
                ])
                .map_err(Error::from)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn qq_svg(dir: &Path, s: &QQStages, stamp: Option<String>) -> Result<()> {
    let pts = |q: &QQPairs| q.control_q.iter().copied().zip(q.treatment_q.iter().copied()).collect::<Vec<_>>();
    let variable = &s.before.variable;
    let body = svg::scatter(
        &format!("Q-Q of {variable}, trial {}", s.trial_index),
        "control quantile",
        "treated quantile",
        &[("before", pts(&s.before)), ("after", pts(&s.after))],
        true,
        stamp,
    );
    write_text(dir, &format!("qq_{}.svg", file_stem(variable)), &body)
}

fn smd_svg(dir: &Path, reports: &[&BalanceReport], stamp: Option<String>) -> Result<()> {
    let Some(first) = reports.first() else {
        return Ok(());
    };
    let labels: Vec<String> = first.records.iter().map(|r| r.variable.clone()).collect();
    let collect = |f: fn(&causal_match::BalanceRecord) -> f64| {
        labels
            .iter()
            .map(|v| {
                reports.iter().filter_map(|rep| rep.records.iter().find(|r| &r.variable == v)).map(f).collect()
            })
            .collect::<Vec<Vec<f64>>>()
    };
    let body = svg::dot_rows(
        "Standardized mean differences",
        "SMD",
        &labels,
        &[("before", collect(|r| r.smd_before)), ("after", collect(|r| r.smd_after))],
        &[-BALANCE_THRESHOLD, 0.0, BALANCE_THRESHOLD],
        stamp,
    );
    write_text(dir, "smd.svg", &body)
}

fn effects_svg(dir: &Path, trials: &[TrialResult], stamp: Option<String>) -> Result<()> {
    let mut rows = Vec::new();
    for t in trials {
        for (g, e) in t.estimates().into_iter().enumerate() {
            rows.push(svg::Interval {
                label: format!("{} {}", e.estimator.as_str(), t.trial_index),
                group: g,
                estimate: e.estimate,
                low: e.ci_low,
                high: e.ci_high,
            });
        }
    }
    let body = svg::intervals(
        "Effect estimates with 95% intervals",
        "effect",
        &rows,
        &["naive", "adjusted", "matched"],
        &[0.0],
        stamp,
    );
    write_text(dir, "effects.svg", &body)
}

/// Full pipeline on repeated subsamples.
pub fn analyze(cfg: &RunConfig) -> Result<AnalyzeReport> {
    cfg.validate(Purpose::Effects)?;
    prepare_out(cfg)?;
    let frame = load_frame(cfg)?;
    let sample_size = cfg.sample_size.unwrap_or(frame.n());
    let outcome = run_trials(&frame, cfg.n_trials, sample_size, cfg.seed, &cfg.weighting)?;
    let pseudo_size = cfg.pseudo_population_size.unwrap_or(2 * sample_size);
    let dir = cfg.out.as_path();
    let trials = &outcome.trials;

    let qq: Vec<Vec<QQStages>> = trials
        .iter()
        .map(|t| qq_for_trial(t, cfg.qq_points, pseudo_size, cfg.seed))
        .collect::<Result<_>>()?;

    if cfg.wants(Format::Csv) {
        write_effects(dir, trials)?;
        let rows: Vec<(usize, &BalanceReport)> = trials.iter().map(|t| (t.trial_index, &t.balance)).collect();
        write_balance(dir, &rows)?;
        write_weights(dir, trials)?;
        for v in 0..qq[0].len() {
            let stages: Vec<&QQStages> = qq.iter().map(|q| &q[v]).collect();
            write_qq(dir, &qq[0][v].before.variable, &stages)?;
        }
    }
    if cfg.wants(Format::Svg) {
        effects_svg(dir, trials, stamp(cfg))?;
        let reports: Vec<&BalanceReport> = trials.iter().map(|t| &t.balance).collect();
        smd_svg(dir, &reports, stamp(cfg))?;
        for s in &qq[0] {
            qq_svg(dir, s, stamp(cfg))?;
        }
    }

    let summary = ESTIMATORS
        .iter()
        .map(|&e| {
            let v: Vec<f64> = trials.iter().map(|t| pick(t, e).estimate).collect();
            EstimatorSummary::of(e, &v)
        })
        .collect();
    let report = AnalyzeReport {
        version: VERSION.to_string(),
        command: "analyze".into(),
        config: cfg.clone(),
        data: DataSummary::of(&frame),
        sample_size,
        pseudo_population_size: pseudo_size,
        balance_threshold: BALANCE_THRESHOLD,
        balance_threshold_note: trials[0].balance.threshold_note.clone(),
        trials: trials.iter().map(TrialReport::of).collect(),
        failures: outcome.failures.clone(),
        summary,
    };
    if cfg.wants(Format::Json) {
        write_text(dir, "report.json", &to_json(&report)?)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceOutput {
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub data: DataSummary,
    pub pseudo_population_size: usize,
    pub trial: TrialReport,
    pub balance: BalanceReport,
}

/// Propensity model, weights and balance on the full data, without
/// subsampling.
pub fn balance(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Purpose::Effects)?;
    prepare_out(cfg)?;
    let frame = load_frame(cfg)?;
    let t = effects::analyze_frame(&frame, &cfg.weighting, 0)?;
    let pseudo_size = cfg.pseudo_population_size.unwrap_or(2 * frame.n());
    let qq = qq_for_trial(&t, cfg.qq_points, pseudo_size, cfg.seed)?;
    let dir = cfg.out.as_path();
    if cfg.wants(Format::Csv) {
        write_balance(dir, &[(0, &t.balance)])?;
        write_weights(dir, std::slice::from_ref(&t))?;
        for s in &qq {
            write_qq(dir, &s.before.variable, &[s])?;
        }
    }
    if cfg.wants(Format::Svg) {
        smd_svg(dir, &[&t.balance], stamp(cfg))?;
        for s in &qq {
            qq_svg(dir, s, stamp(cfg))?;
        }
    }
    if cfg.wants(Format::Json) {
        let out = BalanceOutput {
            version: VERSION.to_string(),
            command: "balance".into(),
            config: cfg.clone(),
            data: DataSummary::of(&frame),
            pseudo_population_size: pseudo_size,
            trial: TrialReport::of(&t),
            balance: t.balance.clone(),
        };
        write_text(dir, "balance.json", &to_json(&out)?)?;
    }
    Ok(())
}

/// One line for the terminal.
pub fn simpson_summary(s: &StratifiedSlopes, outcome: &str) -> String {
    let m = s.strata.len();
    let head = format!(
        "marginal slope of {outcome} on {} = {:.6}; {} of {m} strata of {} have the opposite sign",
        s.treatment,
        s.marginal.slope,
        s.n_reversed,
        s.confounder
    );
    if m > 0 && s.all_reversed() {
        format!("{head}; Simpson reversal in every stratum")
    } else {
        head
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimpsonOutput {
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub confounder: String,
    pub bins: usize,
    pub n: usize,
    pub missing_dropped: usize,
    pub transforms: Vec<TransformRecord>,
    pub summary: String,
    pub slopes: StratifiedSlopes,
}

/// Slopes of the outcome on the continuous treatment, marginally and
/// within quantile bins of `confounder`.
pub fn simpson(cfg: &RunConfig, confounder: &str, bins: usize) -> Result<StratifiedSlopes> {
    cfg.validate(Purpose::Slopes)?;
    if bins == 0 {
        return Err(Error::Config("--bins must be at least 1".into()));
    }
    if confounder == cfg.treatment || confounder == cfg.outcome {
        return Err(Error::Config(format!("`{confounder}` is already the treatment or the outcome")));
    }
    prepare_out(cfg)?;
    let mut columns = cfg.confounders.clone();
    if !columns.iter().any(|c| c == confounder) {
        columns.push(confounder.to_string());
    }
    let schema = Schema::new(&cfg.treatment, &cfg.outcome, columns);
    let raw = load_raw(cfg, &schema)?;
    let z = raw.column(confounder).expect("stratifier is part of the schema");
    let mut slopes = stratified_slopes(raw.treatment(), raw.y(), z, bins)?;
    slopes.confounder = confounder.to_string();
    slopes.treatment = cfg.treatment.clone();
    let summary = simpson_summary(&slopes, &cfg.outcome);
    println!("{summary}");

    let dir = cfg.out.as_path();
    if cfg.wants(Format::Csv) {
        slopes.write_csv(create(dir, "strata.csv")?)?;
    }
    if cfg.wants(Format::Svg) {
        let mut rows = vec![svg::Interval {
            label: "marginal".into(),
            group: 0,
            estimate: slopes.marginal.slope,
            low: slopes.marginal.ci_low,
            high: slopes.marginal.ci_high,
        }];
        rows.extend(slopes.strata.iter().enumerate().map(|(i, r)| svg::Interval {
            label: format!("bin {i}"),
            group: 1,
            estimate: r.slope,
            low: r.ci_low,
            high: r.ci_high,
        }));
        let body = svg::intervals(
            &format!("Slope of {} on {} by bins of {confounder}", cfg.outcome, cfg.treatment),
            "slope",
            &rows,
            &["marginal", "stratum"],
            &[0.0],
            stamp(cfg),
        );
        write_text(dir, "strata.svg", &body)?;
    }
    if cfg.wants(Format::Json) {
        let out = SimpsonOutput {
            version: VERSION.to_string(),
            command: "simpson".into(),
            config: cfg.clone(),
            confounder: confounder.to_string(),
            bins,
            n: raw.n(),
            missing_dropped: raw.missing_dropped(),
            transforms: raw.log().records().to_vec(),
            summary,
            slopes: slopes.clone(),
        };
        write_text(dir, "simpson.json", &to_json(&out)?)?;
    }
    Ok(slopes)
}

#[derive(Debug, Clone, Serialize)]
pub struct Truth {
    pub version: String,
    pub n: usize,
    pub seed: u64,
    pub spec: ScmSpec,
    /// Population values implied by the spec.
    pub analytic: TrueEffects,
    /// Averages of `y1 − y0` over the drawn units.
    pub sample: TrueEffects,
}

pub fn load_spec(path: &Path) -> Result<ScmSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read spec {}: {e}", path.display())))?;
    let spec: ScmSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    spec.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

/// Synthetic data with known effects: `data.csv` and `truth.json`.
pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(p) => load_spec(p)?,
        None => ScmSpec::default(),
    };
    if args.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let analytic = spec.analytic_effects()?;
    let pf = synth::generate(&spec, args.n, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    pf.write_csv(create(&args.out, "data.csv")?, args.with_potential)?;
    let sample = if pf.n_treated() > 0 && pf.n_treated() < pf.n() {
        synth::true_effects(&pf)?
    } else {
        let d: Vec<f64> = pf.y1.iter().zip(&pf.y0).map(|(a, b)| a - b).collect();
        let ate = d.iter().sum::<f64>() / d.len() as f64;
        let pi = pf.n_treated() as f64 / pf.n() as f64;
        let (att, atc) = if pi > 0.5 { (ate, f64::NAN) } else { (f64::NAN, ate) };
        TrueEffects { ate, att, atc, pi }
    };
    let truth = Truth { version: VERSION.to_string(), n: args.n, seed: args.seed, spec, analytic, sample };
    write_text(&args.out, "truth.json", &to_json(&truth)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelCheck {
    pub seed: u64,
    pub strata: usize,
    pub balancing: f64,
    pub outcome_independence: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppendixB {
    pub version: String,
    pub tolerance: f64,
    pub models: Vec<ModelCheck>,
    pub max_balancing: f64,
    pub max_outcome_independence: f64,
    /// Stratifying on a constant instead of the propensity score.
    pub coarse_score_control: IdentityReport,
    /// Outcome tables that depend on the treatment given `x`.
    pub confounded_control: IdentityReport,
    pub passed: bool,
}

/// Tolerance for the identities that must hold exactly.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;
/// Smallest violation a negative control must show.
pub const CONTROL_MARGIN: f64 = 0.01;

/// A model stratified on a constant score; balance fails unless every
/// support point shares one treatment probability.
pub fn coarse_score_model(seed: u64) -> Result<DiscreteModel> {
    let dm = DiscreteModel::random_binary(seed);
    let n = dm.points.len();
    dm.with_score(vec![0.5; n])
}

/// A model whose treated units draw from a different outcome table.
pub fn confounded_model(seed: u64) -> DiscreteModel {
    let mut dm = DiscreteModel::random_binary(seed);
    for tables in &mut dm.outcomes {
        tables[1] = vec![(5.0, 9.0, 1.0)];
    }
    dm
}

pub fn appendix_b(models: usize, seed: u64) -> Result<AppendixB> {
    if models == 0 {
        return Err(Error::Config("--models must be at least 1".into()));
    }
    let mut checks = Vec::with_capacity(models);
    for i in 0..models {
        let s = rng::derive_seed(seed, i as u64);
        let dm = DiscreteModel::random_binary(s);
        let a1 = check_balancing_property(&dm)?;
        let a2 = check_outcome_independence(&dm)?;
        checks.push(ModelCheck {
            seed: s,
            strata: a1.strata.len(),
            balancing: a1.max_violation,
            outcome_independence: a2.max_violation,
        });
    }
    // Controls are drawn until the coarse score actually merges points
    // with different treatment probabilities.
    let mut k = 0u64;
    let coarse = loop {
        let dm = coarse_score_model(rng::derive_seed(!seed, k))?;
        let r = check_balancing_property(&dm)?;
        if r.max_violation > CONTROL_MARGIN || k == 100 {
            break r;
        }
        k += 1;
    };
    let confounded = check_outcome_independence(&confounded_model(rng::derive_seed(!seed, k)))?;
    let max_balancing = checks.iter().map(|c| c.balancing).fold(0.0, f64::max);
    let max_outcome_independence = checks.iter().map(|c| c.outcome_independence).fold(0.0, f64::max);
    let passed = max_balancing <= IDENTITY_TOLERANCE
        && max_outcome_independence <= IDENTITY_TOLERANCE
        && coarse.max_violation > CONTROL_MARGIN
        && confounded.max_violation > CONTROL_MARGIN;
    Ok(AppendixB {
        version: VERSION.to_string(),
        tolerance: IDENTITY_TOLERANCE,
        models: checks,
        max_balancing,
        max_outcome_independence,
        coarse_score_control: coarse,
        confounded_control: confounded,
        passed,
    })
}

/// Prints the check as JSON; a failed identity is a numerical error.
pub fn check_appendix_b(args: &CheckArgs) -> Result<()> {
    let report = appendix_b(args.models, args.seed)?;
    let text = to_json(&report)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        write_text(dir, "appendix_b.json", &text)?;
    }
    println!("{text}");
    if !report.passed {
        return Err(Error::Numerical(format!(
            "identity check failed: balancing {:.3e}, outcome independence {:.3e}, controls {:.3e} and {:.3e}",
            report.max_balancing,
            report.max_outcome_independence,
            report.coarse_score_control.max_violation,
            report.confounded_control.max_violation
        )));
    }
    Ok(())
}
