//! Covariate balance diagnostics.
//!
//! The standardized mean difference is signed (treated minus control) and is
//! always divided by the pooled standard deviation of the *unweighted*
//! sample, `sqrt((s_T² + s_C²)/2)`, so before and after values share a
//! denominator.
//!
//! # Weighted quantiles
//!
//! Sort the values, attach weights `wᵢ` and cumulative sums `Sᵢ` (`S₀ = 0`,
//! total `W`). Position `t ≥ 0` maps to the value `x₍ᵢ₎` with
//! `S_{i-1} ≤ t < Sᵢ` (the last value for `t ≥ W`). The `p` quantile is
//! `Q(⌊h⌋) + (h − ⌊h⌋)(Q(⌊h⌋+1) − Q(⌊h⌋))` with `h = max(0, (W − 1)p)`.
//! With integer weights this is exactly the type-7 quantile of the sample
//! in which each value is repeated `wᵢ` times; unit weights give the plain
//! type-7 quantile.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::dataset::CausalFrame;
use crate::export::fmt_f64;
use crate::propensity::{PropensityResult, WeightSet};
use crate::rng;
use crate::{Error, Result};

/// Conventional cutoff; not derived from the data.
pub const BALANCE_THRESHOLD: f64 = 0.1;

/// Default number of Q-Q probability points.
pub const QQ_POINTS: usize = 99;

/// Label used for the propensity score row of a report.
pub const PS_VARIABLE: &str = "ps";

fn group_mean(values: &[f64], a: &[u8], w: Option<&[f64]>, g: u8) -> Result<f64> {
    let (mut s, mut sw) = (0.0, 0.0);
    for i in 0..values.len() {
        if a[i] == g {
            let wi = w.map_or(1.0, |w| w[i]);
            s += wi * values[i];
            sw += wi;
        }
    }
    if sw <= 0.0 {
        return Err(Error::Weight(format!("group {g} has zero total weight")));
    }
    Ok(s / sw)
}

fn group_var(values: &[f64], a: &[u8], g: u8) -> Result<f64> {
    let xs: Vec<f64> = values.iter().zip(a).filter(|(_, &ai)| ai == g).map(|(v, _)| *v).collect();
    if xs.is_empty() {
        return Err(Error::Positivity(format!("group {g} is empty")));
    }
    if xs.len() == 1 {
        return Ok(0.0);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// `sqrt((s_T² + s_C²)/2)` from the unweighted sample.
pub fn pooled_sd(values: &[f64], a: &[u8]) -> Result<f64> {
    if values.len() != a.len() {
        return Err(Error::Dimension("values and treatment differ in length".into()));
    }
    let s = ((group_var(values, a, 1)? + group_var(values, a, 0)?) / 2.0).sqrt();
    if !(s > 0.0) {
        return Err(Error::Degenerate("pooled standard deviation is zero".into()));
    }
    Ok(s)
}

/// Signed standardized mean difference, treated minus control.
pub fn smd(values: &[f64], a: &[u8], w: Option<&[f64]>) -> Result<f64> {
    if w.is_some_and(|w| w.len() != a.len()) {
        return Err(Error::Dimension("weights and treatment differ in length".into()));
    }
    let s = pooled_sd(values, a)?;
    Ok((group_mean(values, a, w, 1)? - group_mean(values, a, w, 0)?) / s)
}

/// Quantiles of `values` under weights `w` at each of `probs`.
pub fn weighted_quantiles(values: &[f64], w: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if values.len() != w.len() {
        return Err(Error::Dimension("values and weights differ in length".into()));
    }
    if let Some(i) = w.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Weight(format!("weight {} at position {i} is invalid", w[i])));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || probs.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::Config("probabilities must lie in [0, 1] and be nondecreasing".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| w[i] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let xs: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut cum = Vec::with_capacity(xs.len());
    let mut total = 0.0;
    for &i in &order {
        total += w[i];
        cum.push(total);
    }
    let at = |t: f64| xs[cum.partition_point(|&s| s <= t).min(xs.len() - 1)];
    Ok(probs
        .iter()
        .map(|&p| {
            let h = ((total - 1.0) * p).max(0.0);
            let lo = h.floor();
            let (q0, q1) = (at(lo), at(lo + 1.0));
            q0 + (h - lo) * (q1 - q0)
        })
        .collect())
}

/// Group-wise quantiles at `p_j = (j − 0.5)/m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QQPairs {
    pub variable: String,
    pub probs: Vec<f64>,
    pub control_q: Vec<f64>,
    pub treatment_q: Vec<f64>,
    pub weighted: bool,
}

impl QQPairs {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Largest `|q_T − q_C|` over probabilities in `[lo, hi]`.
    pub fn max_gap(&self, lo: f64, hi: f64) -> f64 {
        (0..self.len())
            .filter(|&j| self.probs[j] >= lo && self.probs[j] <= hi)
            .map(|j| (self.treatment_q[j] - self.control_q[j]).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `p,q_control,q_treatment`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["p", "q_control", "q_treatment"])?;
        for j in 0..self.len() {
            out.write_record([
                fmt_f64(self.probs[j]),
                fmt_f64(self.control_q[j]),
                fmt_f64(self.treatment_q[j]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn variable_values<'a>(frame: &'a CausalFrame, variable: &str) -> Result<&'a [f64]> {
    if variable == frame.outcome_name() {
        return Ok(frame.y());
    }
    frame
        .confounder(variable)
        .ok_or_else(|| Error::Schema(format!("no confounder named `{variable}`")))
}

/// Q-Q pairs of a confounder (or the outcome) between the two groups.
pub fn qq_pairs(frame: &CausalFrame, variable: &str, w: Option<&WeightSet>, m: usize) -> Result<QQPairs> {
    let values = variable_values(frame, variable)?;
    qq_pairs_values(variable, values, frame.a(), w.map(|w| w.w.as_slice()), m)
}

pub fn qq_pairs_values(
    variable: &str,
    values: &[f64],
    a: &[u8],
    w: Option<&[f64]>,
    m: usize,
) -> Result<QQPairs> {
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 probability points, got {m}")));
    }
    if values.len() != a.len() || w.is_some_and(|w| w.len() != a.len()) {
        return Err(Error::Dimension("values, treatment and weights differ in length".into()));
    }
    let probs: Vec<f64> = (1..=m).map(|j| (j as f64 - 0.5) / m as f64).collect();
    let group = |g: u8| {
        let idx: Vec<usize> = (0..a.len()).filter(|&i| a[i] == g).collect();
        let v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let wg: Vec<f64> = idx.iter().map(|&i| w.map_or(1.0, |w| w[i])).collect();
        weighted_quantiles(&v, &wg, &probs)
    };
    Ok(QQPairs {
        variable: variable.to_string(),
        control_q: group(0)?,
        treatment_q: group(1)?,
        probs,
        weighted: w.is_some(),
    })
}

/// Row indices drawn i.i.d. with probability proportional to `w`.
pub fn pseudo_population_indices(w: &[f64], size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::Size("pseudo-population size must be at least 1".into()));
    }
    let dist = WeightedIndex::new(w)
        .map_err(|e| Error::Weight(format!("cannot resample with these weights: {e}")))?;
    let mut r = rng::stream(seed);
    Ok((0..size).map(|_| dist.sample(&mut r)).collect())
}

/// Resampled frame in which unit `i` appears with probability `∝ wᵢ`.
/// Unit ids of the source rows are kept.
pub fn pseudo_population(frame: &CausalFrame, w: &WeightSet, size: usize, seed: u64) -> Result<CausalFrame> {
    if w.w.len() != frame.n() {
        return Err(Error::Dimension("weights and frame differ in length".into()));
    }
    let idx = pseudo_population_indices(&w.w, size, seed)?;
    frame.select(&idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRecord {
    pub variable: String,
    /// Weighting scheme of the `after` columns; `none` when unweighted.
    pub scheme: String,
    pub mean_treated_before: f64,
    pub mean_control_before: f64,
    pub sd_treated: f64,
    pub sd_control: f64,
    pub pooled_sd: f64,
    pub mean_treated_after: f64,
    pub mean_control_after: f64,
    pub smd_before: f64,
    pub smd_after: f64,
    /// `|smd_after| < BALANCE_THRESHOLD`.
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub records: Vec<BalanceRecord>,
    pub threshold: f64,
    pub threshold_note: String,
}

impl BalanceReport {
    pub fn record(&self, variable: &str, scheme: &str) -> Option<&BalanceRecord> {
        self.records.iter().find(|r| r.variable == variable && r.scheme == scheme)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([
            "variable",
            "scheme",
            "mean_treated_before",
            "mean_control_before",
            "mean_treated_after",
            "mean_control_after",
            "pooled_sd",
            "smd_before",
            "smd_after",
            "balanced",
        ])?;
        for r in &self.records {
            out.write_record([
                r.variable.clone(),
                r.scheme.clone(),
                fmt_f64(r.mean_treated_before),
                fmt_f64(r.mean_control_before),
                fmt_f64(r.mean_treated_after),
                fmt_f64(r.mean_control_after),
                fmt_f64(r.pooled_sd),
                fmt_f64(r.smd_before),
                fmt_f64(r.smd_after),
                r.balanced.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn record(name: &str, values: &[f64], a: &[u8], w: Option<(&str, &[f64])>) -> Result<BalanceRecord> {
    let pooled = pooled_sd(values, a)?;
    let (mt, mc) = (group_mean(values, a, None, 1)?, group_mean(values, a, None, 0)?);
    let (scheme, wt) = match w {
        Some((s, w)) => (s.to_string(), Some(w)),
        None => ("none".to_string(), None),
    };
    let (mta, mca) = (group_mean(values, a, wt, 1)?, group_mean(values, a, wt, 0)?);
    let smd_after = (mta - mca) / pooled;
    Ok(BalanceRecord {
        variable: name.to_string(),
        scheme,
        mean_treated_before: mt,
        mean_control_before: mc,
        sd_treated: group_var(values, a, 1)?.sqrt(),
        sd_control: group_var(values, a, 0)?.sqrt(),
        pooled_sd: pooled,
        mean_treated_after: mta,
        mean_control_after: mca,
        smd_before: (mt - mc) / pooled,
        smd_after,
        balanced: smd_after.abs() < BALANCE_THRESHOLD,
    })
}

/// SMD before and after weighting for every confounder and the propensity
/// score, once per weight set. With no weight sets a single unweighted
/// block is produced.
pub fn balance_table(frame: &CausalFrame, psr: &PropensityResult, weight_sets: &[&WeightSet]) -> Result<BalanceReport> {
    if psr.ps.len() != frame.n() || weight_sets.iter().any(|w| w.w.len() != frame.n()) {
        return Err(Error::Dimension("scores or weights do not match the frame".into()));
    }
    let mut variables: Vec<(&str, &[f64])> = frame
        .confounder_names()
        .iter()
        .zip(frame.xs())
        .map(|(n, x)| (n.as_str(), x.as_slice()))
        .collect();
    variables.push((PS_VARIABLE, psr.ps.as_slice()));
    let mut records = Vec::new();
    let blocks: Vec<Option<(&str, &[f64])>> = if weight_sets.is_empty() {
        vec![None]
    } else {
        weight_sets.iter().map(|w| Some((w.scheme.as_str(), w.w.as_slice()))).collect()
    };
    for block in blocks {
        for &(name, values) in &variables {
            records.push(record(name, values, frame.a(), block)?);
        }
    }
    Ok(BalanceReport {
        records,
        threshold: BALANCE_THRESHOLD,
        threshold_note: "balanced = |smd_after| < 0.1, a conventional cutoff".into(),
    })
}
