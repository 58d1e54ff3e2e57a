//! Propensity scores and matching weights (ATE estimand).
//!
//! Three weighting schemes are available:
//!
//! * **IPW**: `wᵢ = aᵢ/psᵢ + (1 − aᵢ)/(1 − psᵢ)`.
//! * **Nearest neighbour**: every treated unit is paired with the control
//!   closest on the probit linear predictor; ties go to the lower row index.
//!   Treated units get weight 1 when matched, controls get the number of
//!   times they were used. A caliper, in standard deviations of the linear
//!   predictor over all units, drops treated units without a close control.
//! * **Subclassification**: units are binned at the `j/S` quantiles of the
//!   score. A stratum `s` with `n_s` units, `n_{s,1}` treated and `n_{s,0}`
//!   controls gives treated units `n_s / (2 n_{s,1})` and controls
//!   `n_s / (2 n_{s,0})`. Each group then sums to `n/2` and its weighted
//!   stratum shares equal the full-sample shares `n_s/n`. Strata missing a
//!   group are merged into their right neighbour (the last one into its
//!   left neighbour).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::CausalFrame;
use crate::export::fmt_f64;
use crate::linreg::{self, normal, DesignMatrix, FitResult, PS_CLAMP};
use crate::{Error, Result};

/// Estimated propensity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityResult {
    pub ps: Vec<f64>,
    /// Probit linear predictor `xᵢ·γ`; the matching metric.
    pub linear_predictor: Vec<f64>,
    pub treatment_fit: Option<FitResult>,
    /// False where the score lies outside the opposite group's score range.
    pub common_support: Vec<bool>,
}

impl PropensityResult {
    /// Wraps externally supplied scores; the linear predictor is `Φ⁻¹(ps)`.
    pub fn from_scores(ps: Vec<f64>, a: &[u8]) -> Result<Self> {
        if ps.len() != a.len() {
            return Err(Error::Dimension("scores and treatment differ in length".into()));
        }
        if let Some(i) = ps.iter().position(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Data {
                row: i,
                column: "ps".into(),
                message: format!("score {} outside (0, 1)", ps[i]),
            });
        }
        let ps: Vec<f64> = ps.into_iter().map(|p| p.clamp(PS_CLAMP, 1.0 - PS_CLAMP)).collect();
        let linear_predictor = ps.iter().map(|&p| normal::inv_cdf(p)).collect();
        let common_support = common_support(&ps, a);
        Ok(Self { ps, linear_predictor, treatment_fit: None, common_support })
    }
}

fn common_support(ps: &[f64], a: &[u8]) -> Vec<bool> {
    let range = |g: u8| {
        ps.iter()
            .zip(a)
            .filter(|(_, &ai)| ai == g)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&p, _)| (lo.min(p), hi.max(p)))
    };
    let (r0, r1) = (range(0), range(1));
    ps.iter()
        .zip(a)
        .map(|(&p, &ai)| {
            let (lo, hi) = if ai == 1 { r0 } else { r1 };
            p >= lo && p <= hi
        })
        .collect()
}

/// Treatment-model design: intercept plus every confounder.
pub fn treatment_design(frame: &CausalFrame) -> Result<DesignMatrix> {
    let cols: Vec<&[f64]> = frame.xs().iter().map(Vec::as_slice).collect();
    DesignMatrix::with_intercept(&cols, frame.confounder_names())
}

/// Probit of `a` on the confounders, predicted for every unit.
pub fn estimate_ps(frame: &CausalFrame) -> Result<PropensityResult> {
    let design = treatment_design(frame)?;
    let fit = linreg::fit_probit(&design, frame.a())?;
    let ps = linreg::predict_probit(&fit, &design)?;
    let linear_predictor = linreg::linear_predictor(&fit, &design)?;
    let common_support = common_support(&ps, frame.a());
    Ok(PropensityResult { ps, linear_predictor, treatment_fit: Some(fit), common_support })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Ipw,
    Nn,
    Subclass,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Ipw => "ipw",
            Scheme::Nn => "nn",
            Scheme::Subclass => "subclass",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    #[default]
    Ate,
}

/// Scheme choice together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightingScheme {
    Ipw,
    Nn {
        #[serde(default = "default_true")]
        with_replacement: bool,
        #[serde(default)]
        caliper: Option<f64>,
    },
    Subclass {
        #[serde(default = "default_strata")]
        n_strata: usize,
    },
}

fn default_true() -> bool {
    true
}

fn default_strata() -> usize {
    5
}

impl WeightingScheme {
    pub fn scheme(&self) -> Scheme {
        match self {
            WeightingScheme::Ipw => Scheme::Ipw,
            WeightingScheme::Nn { .. } => Scheme::Nn,
            WeightingScheme::Subclass { .. } => Scheme::Subclass,
        }
    }

    pub fn weights(&self, psr: &PropensityResult, a: &[u8]) -> Result<WeightSet> {
        match *self {
            WeightingScheme::Ipw => ipw_weights(psr, a),
            WeightingScheme::Nn { with_replacement, caliper } => {
                nn_match_weights(psr, a, with_replacement, caliper)
            }
            WeightingScheme::Subclass { n_strata } => subclass_weights(psr, a, n_strata),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub ps_low: f64,
    pub ps_high: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub w_treated: f64,
    pub w_control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SchemeParams {
    Ipw,
    Nn {
        with_replacement: bool,
        caliper: Option<f64>,
        /// Caliper in linear-predictor units.
        caliper_width: Option<f64>,
        /// `(treated row, control row)` pairs in treated order.
        pairs: Vec<(usize, usize)>,
        dropped_treated: usize,
    },
    Subclass {
        requested_strata: usize,
        strata: Vec<StratumSummary>,
        /// Stratum of each unit after merging.
        assignment: Vec<usize>,
    },
}

/// Per-unit matching weights with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub w: Vec<f64>,
    pub scheme: Scheme,
    pub estimand: Estimand,
    pub params: SchemeParams,
    /// Kish effective sample sizes `(Σw)²/Σw²` of the treated and control groups.
    pub ess_treated: f64,
    pub ess_control: f64,
}

impl WeightSet {
    fn new(w: Vec<f64>, a: &[u8], scheme: Scheme, params: SchemeParams) -> Result<Self> {
        let ess = |g: u8| {
            let (s, s2) = w
                .iter()
                .zip(a)
                .filter(|(_, &ai)| ai == g)
                .fold((0.0, 0.0), |(s, s2), (&wi, _)| (s + wi, s2 + wi * wi));
            if s2 > 0.0 {
                s * s / s2
            } else {
                0.0
            }
        };
        let set = WeightSet {
            ess_treated: ess(1),
            ess_control: ess(0),
            w,
            scheme,
            estimand: Estimand::Ate,
            params,
        };
        if !(set.ess_treated > 0.0 && set.ess_control > 0.0) {
            return Err(Error::Weight("a treatment group carries zero total weight".into()));
        }
        Ok(set)
    }

    pub fn sum_group(&self, a: &[u8], group: u8) -> f64 {
        self.w.iter().zip(a).filter(|(_, &ai)| ai == group).map(|(w, _)| w).sum()
    }

    /// Writes `unit_id,a,ps,w,scheme`.
    pub fn write_csv<W: Write>(&self, writer: W, frame: &CausalFrame, psr: &PropensityResult) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["unit_id", "a", "ps", "w", "scheme"])?;
        for i in 0..self.w.len() {
            out.write_record([
                frame.unit_ids()[i].as_str(),
                &frame.a()[i].to_string(),
                &fmt_f64(psr.ps[i]),
                &fmt_f64(self.w[i]),
                self.scheme.as_str(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_inputs(psr: &PropensityResult, a: &[u8]) -> Result<()> {
    if psr.ps.len() != a.len() || psr.linear_predictor.len() != a.len() {
        return Err(Error::Dimension("propensity scores and treatment differ in length".into()));
    }
    let treated = a.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == a.len() {
        return Err(Error::Positivity("both treatment groups must be non-empty".into()));
    }
    Ok(())
}

pub fn ipw_weights(psr: &PropensityResult, a: &[u8]) -> Result<WeightSet> {
    check_inputs(psr, a)?;
    let w = psr
        .ps
        .iter()
        .zip(a)
        .map(|(&p, &ai)| {
            let ai = f64::from(ai);
            ai / p + (1.0 - ai) / (1.0 - p)
        })
        .collect();
    WeightSet::new(w, a, Scheme::Ipw, SchemeParams::Ipw)
}

/// Nearest control to `target` among `sorted` (ascending by value, then index).
/// Returns the position in `sorted`.
fn nearest(sorted: &[(f64, usize)], target: f64) -> Option<usize> {
    if sorted.is_empty() {
        return None;
    }
    let pos = sorted.partition_point(|c| c.0 < target);
    let run_start = |v: f64| sorted.partition_point(|c| c.0 < v);
    let left = (pos > 0).then(|| sorted[pos - 1].0);
    let right = (pos < sorted.len()).then(|| sorted[pos].0);
    match (left, right) {
        (Some(l), None) => Some(run_start(l)),
        (None, Some(_)) => Some(pos),
        (Some(l), Some(r)) => {
            let (dl, dr) = (target - l, r - target);
            if dl < dr {
                Some(run_start(l))
            } else if dr < dl {
                Some(pos)
            } else {
                let (li, ri) = (run_start(l), pos);
                Some(if sorted[li].1 < sorted[ri].1 { li } else { ri })
            }
        }
        (None, None) => None,
    }
}

pub fn nn_match_weights(
    psr: &PropensityResult,
    a: &[u8],
    with_replacement: bool,
    caliper: Option<f64>,
) -> Result<WeightSet> {
    check_inputs(psr, a)?;
    let lp = &psr.linear_predictor;
    if let Some(c) = caliper {
        if !(c > 0.0) {
            return Err(Error::Config(format!("caliper must be positive, got {c}")));
        }
    }
    let caliper_width = caliper.map(|c| {
        let n = lp.len() as f64;
        let mean = lp.iter().sum::<f64>() / n;
        let var = lp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        c * var.sqrt()
    });

    let mut controls: Vec<(f64, usize)> =
        (0..a.len()).filter(|&i| a[i] == 0).map(|i| (lp[i], i)).collect();
    controls.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut w = vec![0.0; a.len()];
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for t in (0..a.len()).filter(|&i| a[i] == 1) {
        let Some(pos) = nearest(&controls, lp[t]) else {
            dropped += 1;
            continue;
        };
        let (value, c) = controls[pos];
        if caliper_width.is_some_and(|cw| (value - lp[t]).abs() > cw) {
            dropped += 1;
            continue;
        }
        w[t] = 1.0;
        w[c] += 1.0;
        pairs.push((t, c));
        if !with_replacement {
            controls.remove(pos);
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyMatch(format!(
            "no treated unit found a control within the caliper ({dropped} dropped)"
        )));
    }
    let params = SchemeParams::Nn {
        with_replacement,
        caliper,
        caliper_width,
        pairs,
        dropped_treated: dropped,
    };
    WeightSet::new(w, a, Scheme::Nn, params)
}

/// Type-7 quantile of sorted values.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn subclass_weights(psr: &PropensityResult, a: &[u8], n_strata: usize) -> Result<WeightSet> {
    check_inputs(psr, a)?;
    if n_strata < 2 {
        return Err(Error::Stratification(format!("need at least 2 strata, got {n_strata}")));
    }
    let ps = &psr.ps;
    let mut sorted = ps.clone();
    sorted.sort_by(f64::total_cmp);
    let constant = sorted[0] == sorted[sorted.len() - 1];

    let mut interior: Vec<f64> =
        (1..n_strata).map(|j| quantile_sorted(&sorted, j as f64 / n_strata as f64)).collect();
    interior.dedup();
    // Stratum index = number of interior edges at or below the score.
    let raw_assign: Vec<usize> = ps.iter().map(|&p| interior.partition_point(|&e| e <= p)).collect();
    let n_raw = interior.len() + 1;

    let mut counts = vec![(0usize, 0usize); n_raw];
    for (&s, &ai) in raw_assign.iter().zip(a) {
        if ai == 1 {
            counts[s].0 += 1;
        } else {
            counts[s].1 += 1;
        }
    }
    // Groups of consecutive raw strata; drop empty ones, then merge until
    // every group holds both treated and controls.
    let mut groups: Vec<(Vec<usize>, usize, usize)> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| c.0 + c.1 > 0)
        .map(|(s, c)| (vec![s], c.0, c.1))
        .collect();
    let mut i = 0;
    while i < groups.len() {
        if groups[i].1 > 0 && groups[i].2 > 0 {
            i += 1;
            continue;
        }
        if groups.len() == 1 {
            break;
        }
        let target = if i + 1 < groups.len() { i + 1 } else { i - 1 };
        let (members, t, c) = groups.remove(i);
        let dst = if target > i { target - 1 } else { target };
        groups[dst].0.extend(members);
        groups[dst].0.sort_unstable();
        groups[dst].1 += t;
        groups[dst].2 += c;
        i = dst.min(i);
    }
    if groups.len() < 2 && !constant {
        return Err(Error::Stratification(format!(
            "only {} viable stratum remains after merging {n_strata} requested",
            groups.len()
        )));
    }

    let mut group_of_raw = vec![0; n_raw];
    for (g, (members, _, _)) in groups.iter().enumerate() {
        for &s in members {
            group_of_raw[s] = g;
        }
    }
    let assignment: Vec<usize> = raw_assign.iter().map(|&s| group_of_raw[s]).collect();
    let mut strata = Vec::with_capacity(groups.len());
    for (g, &(_, nt, nc)) in groups.iter().enumerate() {
        let ns = (nt + nc) as f64;
        let (lo, hi) = ps
            .iter()
            .zip(&assignment)
            .filter(|(_, &s)| s == g)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (&p, _)| (l.min(p), h.max(p)));
        strata.push(StratumSummary {
            ps_low: lo,
            ps_high: hi,
            n_treated: nt,
            n_control: nc,
            w_treated: ns / (2.0 * nt as f64),
            w_control: ns / (2.0 * nc as f64),
        });
    }
    let w = assignment
        .iter()
        .zip(a)
        .map(|(&s, &ai)| if ai == 1 { strata[s].w_treated } else { strata[s].w_control })
        .collect();
    let params = SchemeParams::Subclass { requested_strata: n_strata, strata, assignment };
    WeightSet::new(w, a, Scheme::Subclass, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psr(ps: &[f64], a: &[u8]) -> PropensityResult {
        PropensityResult::from_scores(ps.to_vec(), a).unwrap()
    }

    #[test]
    fn ipw_constant_half() {
        let a = [0, 1, 0, 1];
        let w = ipw_weights(&psr(&[0.5; 4], &a), &a).unwrap();
        assert_eq!(w.w, vec![2.0; 4]);
    }

    #[test]
    fn ipw_direct_formula() {
        let a = [1, 0];
        let w = ipw_weights(&psr(&[0.8, 0.8], &a), &a).unwrap();
        assert!((w.w[0] - 1.25).abs() < 1e-15);
        assert!((w.w[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn nn_picks_closest_control() {
        let a = [1, 0, 0];
        let w = nn_match_weights(&psr(&[0.4, 0.39, 0.9], &a), &a, true, None).unwrap();
        assert_eq!(w.w, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn nn_reuses_control_with_replacement() {
        let a = [1, 1, 0, 0];
        let w = nn_match_weights(&psr(&[0.5, 0.52, 0.51, 0.95], &a), &a, true, None).unwrap();
        assert_eq!(w.w, vec![1.0, 1.0, 2.0, 0.0]);
        let w = nn_match_weights(&psr(&[0.5, 0.52, 0.51, 0.95], &a), &a, false, None).unwrap();
        assert_eq!(w.w, vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn nn_ties_go_to_lower_index() {
        let a = [0, 1, 0];
        // Controls equidistant on the linear predictor scale: Φ⁻¹(0.5 ± δ) is symmetric.
        let w = nn_match_weights(&psr(&[0.4, 0.5, 0.6], &a), &a, true, None).unwrap();
        assert_eq!(w.w, vec![1.0, 1.0, 0.0]);
        let a = [0, 0, 1];
        let w = nn_match_weights(&psr(&[0.3, 0.3, 0.5], &a), &a, true, None).unwrap();
        assert_eq!(w.w, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn nn_caliper_drops_and_can_empty() {
        let a = [1, 1, 0, 0, 0, 0];
        let ps = [0.2, 0.95, 0.21, 0.22, 0.19, 0.2];
        let w = nn_match_weights(&psr(&ps, &a), &a, true, Some(0.25)).unwrap();
        match &w.params {
            SchemeParams::Nn { dropped_treated, .. } => assert_eq!(*dropped_treated, 1),
            p => panic!("{p:?}"),
        }
        assert_eq!(w.w[1], 0.0);
        let a = [1, 0, 0];
        let r = nn_match_weights(&psr(&[0.9, 0.1, 0.11], &a), &a, true, Some(0.01));
        assert!(matches!(r, Err(Error::EmptyMatch(_))));
    }

    #[test]
    fn subclass_constant_scores_form_one_stratum() {
        let a = [1, 0, 0, 0, 1, 0];
        let w = subclass_weights(&psr(&[0.3; 6], &a), &a, 5).unwrap();
        assert!((w.sum_group(&a, 1) - w.sum_group(&a, 0)).abs() < 1e-12);
        assert!((w.w[0] - 1.5).abs() < 1e-12);
        assert!((w.w[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn subclass_two_strata_enumeration() {
        // Stratum 1: 3 treated + 1 control (low scores), stratum 2: 1 treated + 3 controls.
        let a = [1, 1, 1, 0, 1, 0, 0, 0];
        let ps = [0.1, 0.11, 0.12, 0.13, 0.6, 0.61, 0.62, 0.63];
        let w = subclass_weights(&psr(&ps, &a), &a, 2).unwrap();
        // Hand enumeration: n_s = 4, n/2 = 4 per group.
        let expect = [2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 2.0, 2.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        for (got, want) in w.w.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((w.sum_group(&a, 1) - 4.0).abs() < 1e-12);
        assert!((w.sum_group(&a, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn subclass_merges_single_group_strata() {
        let a = [0, 0, 1, 1, 0, 1, 0, 1, 1, 1];
        let ps: Vec<f64> = (1..=10).map(|i| f64::from(i) / 11.0).collect();
        let w = subclass_weights(&psr(&ps, &a), &a, 5).unwrap();
        match &w.params {
            SchemeParams::Subclass { strata, .. } => {
                assert!(strata.len() >= 2);
                assert!(strata.iter().all(|s| s.n_treated > 0 && s.n_control > 0));
            }
            p => panic!("{p:?}"),
        }
    }

    #[test]
    fn subclass_rejects_unviable() {
        let a = [0, 0, 0, 1, 1, 1];
        assert!(subclass_weights(&psr(&[0.5; 6], &a), &a, 1).is_err());
    }

    #[test]
    fn ess_of_equal_weights_is_group_size() {
        let a = [0, 1, 0, 1, 1];
        let w = ipw_weights(&psr(&[0.5; 5], &a), &a).unwrap();
        assert!((w.ess_treated - 3.0).abs() < 1e-12);
        assert!((w.ess_control - 2.0).abs() < 1e-12);
    }
}
