//! Treatment-effect estimators.
//!
//! * naive: difference in group means with a Welch t interval;
//! * adjusted: OLS of `y` on `1, a, x` with an HC0 normal interval;
//! * matched: weighted outcome model `y ~ 1 + a + x + a·x` followed by
//!   g-computation, with a delta-method normal interval.
//!
//! The outcome model centres every confounder at its unweighted frame mean,
//! so the coefficient on `a` is already the g-computation ATE. Interaction
//! labels are `<treatment>:<confounder>`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{balance_table, BalanceReport};
use crate::dataset::{sample_units, CausalFrame};
use crate::export::fmt_f64;
use crate::linreg::{fit_wls, normal, CovarianceKind, DesignMatrix, FitResult};
use crate::propensity::{estimate_ps, PropensityResult, WeightSet, WeightingScheme};
use crate::synth::{true_effects, PotentialFrame};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Naive,
    Adjusted,
    Matched,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Naive => "naive",
            Estimator::Adjusted => "adjusted",
            Estimator::Matched => "matched",
        }
    }
}

/// Point estimate with a two-sided 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub estimator: Estimator,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_used: usize,
    pub trial_index: Option<usize>,
    /// Degrees of freedom of a t interval; `None` for normal intervals.
    pub df: Option<f64>,
}

impl EffectEstimate {
    fn normal(estimator: Estimator, estimate: f64, se: f64, n_used: usize) -> Self {
        let half = normal::z95() * se;
        Self {
            estimator,
            estimate,
            se,
            ci_low: estimate - half,
            ci_high: estimate + half,
            n_used,
            trial_index: None,
            df: None,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

fn group_stats(y: &[f64], a: &[u8], g: u8) -> (usize, f64, f64) {
    let v: Vec<f64> = y.iter().zip(a).filter(|(_, &ai)| ai == g).map(|(y, _)| *y).collect();
    let n = v.len();
    let m = v.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64 } else { f64::NAN };
    (n, m, var)
}

/// Treated mean minus control mean, Welch–Satterthwaite interval.
pub fn diff_in_means(frame: &CausalFrame) -> Result<EffectEstimate> {
    welch(frame.y(), frame.a())
}

pub fn welch(y: &[f64], a: &[u8]) -> Result<EffectEstimate> {
    if y.len() != a.len() {
        return Err(Error::Dimension("outcome and treatment differ in length".into()));
    }
    let (n1, m1, v1) = group_stats(y, a, 1);
    let (n0, m0, v0) = group_stats(y, a, 0);
    if n1 < 2 || n0 < 2 {
        return Err(Error::Variance(format!("groups of size {n1} and {n0}; both need at least 2")));
    }
    let (q1, q0) = (v1 / n1 as f64, v0 / n0 as f64);
    let se = (q1 + q0).sqrt();
    let estimate = m1 - m0;
    let (half, df) = if se > 0.0 {
        let df = (q1 + q0).powi(2) / (q1 * q1 / (n1 - 1) as f64 + q0 * q0 / (n0 - 1) as f64);
        (normal::t_critical(0.05, df) * se, df)
    } else {
        (0.0, (n1 + n0 - 2) as f64)
    };
    Ok(EffectEstimate {
        estimator: Estimator::Naive,
        estimate,
        se,
        ci_low: estimate - half,
        ci_high: estimate + half,
        n_used: n1 + n0,
        trial_index: None,
        df: Some(df),
    })
}

/// OLS of `y` on intercept, `a` and the confounders; HC0 interval on `a`.
pub fn adjusted_ate(frame: &CausalFrame) -> Result<EffectEstimate> {
    let a = frame.a_f64();
    let mut cols: Vec<&[f64]> = vec![&a];
    cols.extend(frame.xs().iter().map(Vec::as_slice));
    let mut labels = vec![frame.treatment_name().to_string()];
    labels.extend(frame.confounder_names().iter().cloned());
    let design = DesignMatrix::with_intercept(&cols, &labels)?;
    let fit = fit_wls(&design, frame.y(), &vec![1.0; frame.n()])?.with_covariance_kind(CovarianceKind::Hc0)?;
    let se = fit.standard_errors()[1];
    Ok(EffectEstimate::normal(Estimator::Adjusted, fit.coefficients[1], se, frame.n()))
}

/// Weighted fit of `y ~ 1 + a + (x − c) + a·(x − c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub fit: FitResult,
    /// Centre `c` of each confounder.
    pub centers: Vec<f64>,
    pub confounder_names: Vec<String>,
}

impl OutcomeModel {
    /// Column layout: intercept, `a`, `k` main effects, `k` interactions.
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Coefficients for uncentered confounders, same layout.
    pub fn uncentered(&self) -> Vec<f64> {
        let k = self.k();
        let b = &self.fit.coefficients;
        let mut out = b.clone();
        for j in 0..k {
            out[0] -= b[2 + j] * self.centers[j];
            out[1] -= b[2 + k + j] * self.centers[j];
        }
        out
    }

    /// Fitted outcome for treatment `a` at confounder values `x`.
    pub fn predict(&self, a: f64, x: &[f64]) -> f64 {
        let k = self.k();
        let b = &self.fit.coefficients;
        let mut v = b[0] + b[1] * a;
        for j in 0..k {
            let xc = x[j] - self.centers[j];
            v += b[2 + j] * xc + b[2 + k + j] * a * xc;
        }
        v
    }
}

/// Outcome model fitted with weights `w` (unit weights when `None`).
pub fn fit_outcome_model(frame: &CausalFrame, w: Option<&WeightSet>) -> Result<OutcomeModel> {
    let n = frame.n();
    let weights = match w {
        Some(ws) if ws.w.len() != n => {
            return Err(Error::Dimension("weights and frame differ in length".into()));
        }
        Some(ws) => ws.w.clone(),
        None => vec![1.0; n],
    };
    let a = frame.a_f64();
    let centers: Vec<f64> = frame.xs().iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let centered: Vec<Vec<f64>> =
        frame.xs().iter().zip(&centers).map(|(c, m)| c.iter().map(|v| v - m).collect()).collect();
    let inter: Vec<Vec<f64>> =
        centered.iter().map(|c| c.iter().zip(&a).map(|(v, ai)| v * ai).collect()).collect();
    let t = frame.treatment_name();
    let mut cols: Vec<&[f64]> = vec![&a];
    cols.extend(centered.iter().map(Vec::as_slice));
    cols.extend(inter.iter().map(Vec::as_slice));
    let mut labels = vec![t.to_string()];
    labels.extend(frame.confounder_names().iter().cloned());
    labels.extend(frame.confounder_names().iter().map(|x| format!("{t}:{x}")));
    let design = DesignMatrix::with_intercept(&cols, &labels)?;
    let fit = fit_wls(&design, frame.y(), &weights)?.with_covariance_kind(CovarianceKind::Hc0)?;
    Ok(OutcomeModel { fit, centers, confounder_names: frame.confounder_names().to_vec() })
}

/// g-computation ATE over the units of `frame`: `β_a + Σ αⱼ(x̄ⱼ − cⱼ)`,
/// with standard error `sqrt(cᵀVc)`.
pub fn gcomp_ate(model: &OutcomeModel, frame: &CausalFrame) -> Result<EffectEstimate> {
    let k = model.k();
    if frame.k() != k {
        return Err(Error::Dimension("frame and outcome model differ in confounders".into()));
    }
    let n = frame.n();
    let b = &model.fit.coefficients;
    let mut grad = vec![0.0; 2 + 2 * k];
    grad[1] = 1.0;
    for j in 0..k {
        grad[2 + k + j] = frame.x(j).iter().sum::<f64>() / n as f64 - model.centers[j];
    }
    let estimate: f64 = grad.iter().zip(b).map(|(g, c)| g * c).sum();
    let v = model.fit.covariance();
    let mut var = 0.0;
    for r in 0..grad.len() {
        for c in 0..grad.len() {
            var += grad[r] * v[(r, c)] * grad[c];
        }
    }
    if !(var >= 0.0) {
        return Err(Error::Numerical(format!("delta-method variance {var} is negative")));
    }
    Ok(EffectEstimate::normal(Estimator::Matched, estimate, var.sqrt(), n))
}

/// Terms of `naive = ATE + (E[Y0|A=1] − E[Y0|A=0]) + (1 − π)(ATT − ATC)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub naive: f64,
    pub ate: f64,
    pub att: f64,
    pub atc: f64,
    pub pi: f64,
    pub selection_bias_term: f64,
    pub het_term: f64,
    pub residual: f64,
}

pub fn decompose(pf: &PotentialFrame) -> Result<DecompositionResult> {
    let t = true_effects(pf)?;
    let mean_where = |v: &[f64], g: u8| {
        let (s, c) = v.iter().zip(&pf.a).filter(|(_, &a)| a == g).fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        s / c as f64
    };
    let naive = mean_where(&pf.y, 1) - mean_where(&pf.y, 0);
    let selection_bias_term = mean_where(&pf.y0, 1) - mean_where(&pf.y0, 0);
    let het_term = (1.0 - t.pi) * (t.att - t.atc);
    Ok(DecompositionResult {
        naive,
        ate: t.ate,
        att: t.att,
        atc: t.atc,
        pi: t.pi,
        selection_bias_term,
        het_term,
        residual: naive - (t.ate + selection_bias_term + het_term),
    })
}

/// OLS slope of `y` on a continuous treatment within one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub lower: f64,
    pub upper: f64,
    pub slope: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    /// Sign differs from the marginal slope.
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSlopes {
    pub confounder: String,
    pub treatment: String,
    pub requested_bins: usize,
    pub marginal: SlopeRecord,
    pub strata: Vec<SlopeRecord>,
    pub n_reversed: usize,
}

impl StratifiedSlopes {
    pub fn all_reversed(&self) -> bool {
        self.n_reversed == self.strata.len()
    }

    /// Writes `kind,bin,lower,upper,slope,se,ci_low,ci_high,n,reversed`;
    /// the marginal fit comes first.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["kind", "bin", "lower", "upper", "slope", "se", "ci_low", "ci_high", "n", "reversed"])?;
        let rows = std::iter::once(("marginal", String::new(), &self.marginal))
            .chain(self.strata.iter().enumerate().map(|(i, r)| ("stratum", i.to_string(), r)));
        for (kind, bin, r) in rows {
            out.write_record([
                kind.to_string(),
                bin,
                fmt_f64(r.lower),
                fmt_f64(r.upper),
                fmt_f64(r.slope),
                fmt_f64(r.se),
                fmt_f64(r.ci_low),
                fmt_f64(r.ci_high),
                r.n.to_string(),
                r.reversed.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn slope_fit(t: &[f64], y: &[f64], lower: f64, upper: f64) -> Result<SlopeRecord> {
    let design = DesignMatrix::with_intercept(&[t], &["t"])?;
    let fit = fit_wls(&design, y, &vec![1.0; t.len()])?.with_covariance_kind(CovarianceKind::Classical)?;
    let n = t.len();
    let se = fit.standard_errors()[1];
    let half = if n > 2 { normal::t_critical(0.05, (n - 2) as f64) * se } else { f64::NAN };
    let slope = fit.coefficients[1];
    Ok(SlopeRecord { lower, upper, slope, se, ci_low: slope - half, ci_high: slope + half, n, reversed: false })
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Marginal slope of `y` on `t`, and the slope within each quantile bin of `z`.
///
/// Bins are delimited by the `j/n_bins` quantiles of `z`; a unit belongs to
/// the bin whose lower edge is the largest edge not exceeding its `z`.
/// A bin with fewer than 3 units, or with constant `t`, is merged into its
/// right neighbour (the last bin into its left neighbour).
pub fn stratified_slopes(t: &[f64], y: &[f64], z: &[f64], n_bins: usize) -> Result<StratifiedSlopes> {
    let n = t.len();
    if y.len() != n || z.len() != n {
        return Err(Error::Dimension("treatment, outcome and confounder differ in length".into()));
    }
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    if n < 3 {
        return Err(Error::Stratification(format!("{n} rows cannot support a slope")));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=n_bins).map(|j| type7(&sorted, j as f64 / n_bins as f64)).collect();
    edges.dedup();
    if edges.len() == 1 {
        edges.push(edges[0]);
    }
    let interior = &edges[1..edges.len() - 1];
    let raw: Vec<usize> = z.iter().map(|&v| interior.partition_point(|&e| e <= v)).collect();
    let n_raw = interior.len() + 1;

    // Groups of consecutive raw bins, stored as [first, last] raw index.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_raw];
    for (i, &b) in raw.iter().enumerate() {
        members[b].push(i);
    }
    let mut groups: Vec<(usize, usize, Vec<usize>)> =
        members.into_iter().enumerate().map(|(b, m)| (b, b, m)).collect();
    let viable = |m: &[usize]| m.len() >= 3 && m.iter().any(|&i| t[i] != t[m[0]]);
    let mut g = 0;
    while g < groups.len() {
        if viable(&groups[g].2) || groups.len() == 1 {
            g += 1;
            continue;
        }
        let (first, last, m) = groups.remove(g);
        if g < groups.len() {
            groups[g].0 = first;
            groups[g].2.extend(m);
        } else {
            let prev = g - 1;
            groups[prev].1 = last;
            groups[prev].2.extend(m);
            g = prev;
        }
    }
    if !viable(&groups[0].2) {
        return Err(Error::Stratification("no bin holds three units with varying treatment".into()));
    }

    let marginal = slope_fit(t, y, edges[0], edges[edges.len() - 1])?;
    let mut strata = Vec::with_capacity(groups.len());
    for (first, last, mut m) in groups {
        m.sort_unstable();
        let tb: Vec<f64> = m.iter().map(|&i| t[i]).collect();
        let yb: Vec<f64> = m.iter().map(|&i| y[i]).collect();
        let mut rec = slope_fit(&tb, &yb, edges[first], edges[last + 1])?;
        rec.reversed = rec.slope.signum() != marginal.slope.signum();
        strata.push(rec);
    }
    let n_reversed = strata.iter().filter(|r| r.reversed).count();
    Ok(StratifiedSlopes {
        confounder: String::new(),
        treatment: String::new(),
        requested_bins: n_bins,
        marginal,
        strata,
        n_reversed,
    })
}

/// Stratified slopes on the continuous treatment when the frame keeps it,
/// otherwise on the binary `a`.
pub fn simpson_strata(frame: &CausalFrame, confounder: &str, n_bins: usize) -> Result<StratifiedSlopes> {
    let z = frame
        .confounder(confounder)
        .ok_or_else(|| Error::Schema(format!("no confounder named `{confounder}`")))?;
    let t = frame.treatment_raw().map(<[f64]>::to_vec).unwrap_or_else(|| frame.a_f64());
    let mut out = stratified_slopes(&t, frame.y(), z, n_bins)?;
    out.confounder = confounder.to_string();
    out.treatment = frame.treatment_name().to_string();
    Ok(out)
}

/// Everything computed for one subsample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_index: usize,
    pub sample: CausalFrame,
    pub propensity: PropensityResult,
    pub weights: WeightSet,
    pub balance: BalanceReport,
    pub naive: EffectEstimate,
    pub adjusted: EffectEstimate,
    pub matched: EffectEstimate,
}

impl TrialResult {
    pub fn estimates(&self) -> [&EffectEstimate; 3] {
        [&self.naive, &self.adjusted, &self.matched]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialsOutcome {
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

/// Propensity model, weights, balance and the three estimators on one frame.
pub fn analyze_frame(frame: &CausalFrame, scheme: &WeightingScheme, trial_index: usize) -> Result<TrialResult> {
    let propensity = estimate_ps(frame)?;
    let weights = scheme.weights(&propensity, frame.a())?;
    let balance = balance_table(frame, &propensity, &[&weights])?;
    let mut naive = diff_in_means(frame)?;
    let mut adjusted = adjusted_ate(frame)?;
    let model = fit_outcome_model(frame, Some(&weights))?;
    let mut matched = gcomp_ate(&model, frame)?;
    matched.n_used = weights.w.iter().filter(|&&w| w > 0.0).count();
    for e in [&mut naive, &mut adjusted, &mut matched] {
        e.trial_index = Some(trial_index);
    }
    Ok(TrialResult {
        trial_index,
        sample: frame.clone(),
        propensity,
        weights,
        balance,
        naive,
        adjusted,
        matched,
    })
}

/// Runs [`analyze_frame`] on `n_trials` random subsamples of `sample_size`
/// units. Trials run in parallel; results are ordered by trial index and
/// depend only on `seed`. A failing trial is recorded and skipped.
pub fn run_trials(
    frame: &CausalFrame,
    n_trials: usize,
    sample_size: usize,
    seed: u64,
    scheme: &WeightingScheme,
) -> Result<TrialsOutcome> {
    if n_trials == 0 {
        return Err(Error::Config("the number of trials must be at least 1".into()));
    }
    if sample_size == 0 || sample_size > frame.n() {
        return Err(Error::Size(format!(
            "sample size {sample_size} must lie in 1..={}",
            frame.n()
        )));
    }
    let results: Vec<std::result::Result<TrialResult, TrialFailure>> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            sample_units(frame, sample_size, seed, i as u64)
                .and_then(|s| analyze_frame(&s, scheme, i))
                .map_err(|e| TrialFailure { trial_index: i, message: e.to_string() })
        })
        .collect();
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(t) => trials.push(t),
            Err(f) => failures.push(f),
        }
    }
    if trials.is_empty() {
        let first = failures.first().map_or(String::new(), |f| f.message.clone());
        return Err(Error::Numerical(format!("all {n_trials} trials failed; first error: {first}")));
    }
    Ok(TrialsOutcome { trials, failures })
}
