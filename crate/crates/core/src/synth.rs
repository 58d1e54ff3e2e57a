//! Synthetic data with known potential outcomes, and exact checks of the
//! propensity-score balancing identities on discrete models.
//!
//! The generator draws independent normal confounders, a probit treatment
//! `pr(A=1|x) = Φ(γ₀ + Σ γⱼxⱼ)`, and
//!
//! ```text
//! Y(0) = β₀ + Σ βⱼxⱼ + ε
//! Y(1) = Y(0) + τ + Σ δⱼxⱼ
//! ```
//!
//! with one shared noise draw `ε`, so individual effects are fixed given `x`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::CausalFrame;
use crate::export::fmt_f64;
use crate::linreg::normal;
use crate::rng;
use crate::{Error, Result};

/// Structural model for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmSpec {
    pub k: usize,
    pub confounder_means: Vec<f64>,
    pub confounder_sds: Vec<f64>,
    /// Probit coefficients, intercept first (`k + 1` entries).
    pub gamma: Vec<f64>,
    pub intercept: f64,
    pub tau: f64,
    pub main_effects: Vec<f64>,
    pub interactions: Vec<f64>,
    pub noise_sd: f64,
}

impl Default for ScmSpec {
    /// Three unit-normal confounders that push treatment and outcome in the
    /// same direction, effect `τ = 2` and small interactions.
    fn default() -> Self {
        Self {
            k: 3,
            confounder_means: vec![0.0; 3],
            confounder_sds: vec![1.0; 3],
            gamma: vec![0.0, 0.6, -0.4, 0.5],
            intercept: 1.0,
            tau: 2.0,
            main_effects: vec![1.5, -1.0, 2.0],
            interactions: vec![0.3, 0.2, -0.25],
            noise_sd: 1.0,
        }
    }
}

/// Population or sample treatment effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub ate: f64,
    pub att: f64,
    pub atc: f64,
    pub pi: f64,
}

impl ScmSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        let check = |name: &str, len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` has {len} entries, expected {want}")))
            }
        };
        if k == 0 {
            return Err(Error::Config("`k` must be at least 1".into()));
        }
        check("confounder_means", self.confounder_means.len(), k)?;
        check("confounder_sds", self.confounder_sds.len(), k)?;
        check("gamma", self.gamma.len(), k + 1)?;
        check("main_effects", self.main_effects.len(), k)?;
        check("interactions", self.interactions.len(), k)?;
        let all = self
            .confounder_means
            .iter()
            .chain(&self.confounder_sds)
            .chain(&self.gamma)
            .chain(&self.main_effects)
            .chain(&self.interactions)
            .chain([&self.intercept, &self.tau, &self.noise_sd]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("spec contains a non-finite value".into()));
        }
        if self.confounder_sds.iter().any(|&s| s < 0.0) || self.noise_sd < 0.0 {
            return Err(Error::Config("standard deviations must be nonnegative".into()));
        }
        Ok(())
    }

    /// Population effects implied by the spec.
    ///
    /// With `L = γ₀ + Σγⱼxⱼ ~ N(m, s²)`, treatment is `1{L + ζ > 0}` for a
    /// standard normal `ζ`, so `π = Φ(c)` with `c = m/√(1+s²)` and
    /// `E[Xⱼ | A=1] = μⱼ + γⱼσⱼ²/√(1+s²) · φ(c)/Φ(c)`.
    pub fn analytic_effects(&self) -> Result<TrueEffects> {
        self.validate()?;
        let m = self.gamma[0]
            + (0..self.k).map(|j| self.gamma[j + 1] * self.confounder_means[j]).sum::<f64>();
        let s2: f64 = (0..self.k)
            .map(|j| (self.gamma[j + 1] * self.confounder_sds[j]).powi(2))
            .sum();
        let root = (1.0 + s2).sqrt();
        let c = m / root;
        let pi = normal::cdf(c);
        let up = normal::pdf(c) / pi;
        let down = normal::pdf(c) / (1.0 - pi);
        let effect = |shift: f64| {
            self.tau
                + (0..self.k)
                    .map(|j| {
                        let slope = self.gamma[j + 1] * self.confounder_sds[j].powi(2) / root;
                        self.interactions[j] * (self.confounder_means[j] + shift * slope)
                    })
                    .sum::<f64>()
        };
        Ok(TrueEffects { ate: effect(0.0), att: effect(up), atc: effect(-down), pi })
    }
}

/// Units with both potential outcomes; `y` is the one selected by `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFrame {
    pub a: Vec<u8>,
    pub y: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Confounder columns (may be empty for hand-built tables).
    pub x: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub unit_ids: Vec<String>,
}

impl PotentialFrame {
    /// Builds a frame, deriving `y` by consistency.
    pub fn new(a: Vec<u8>, y0: Vec<f64>, y1: Vec<f64>, x: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        if y0.len() != n || y1.len() != n || x.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("potential-outcome columns differ in length".into()));
        }
        if n == 0 {
            return Err(Error::Size("empty potential-outcome table".into()));
        }
        if let Some(row) = a.iter().position(|&v| v > 1) {
            return Err(Error::Data { row, column: "a".into(), message: "treatment is not 0 or 1".into() });
        }
        let y = (0..n).map(|i| if a[i] == 1 { y1[i] } else { y0[i] }).collect();
        let names = (1..=x.len()).map(|j| format!("x{j}")).collect();
        let unit_ids = (0..n).map(|i| i.to_string()).collect();
        Ok(Self { a, y, y0, y1, x, names, unit_ids })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1).count()
    }

    /// Observed data only.
    pub fn to_causal_frame(&self) -> Result<CausalFrame> {
        CausalFrame::new(self.a.clone(), self.y.clone(), self.x.clone(), self.names.clone())?
            .with_unit_ids(self.unit_ids.clone())
    }

    /// Writes `unit_id,a,y,<confounders>` and, if asked, `y0,y1`.
    pub fn write_csv<W: Write>(&self, writer: W, with_potential: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["unit_id".to_string(), "a".into(), "y".into()];
        header.extend(self.names.iter().cloned());
        if with_potential {
            header.extend(["y0".to_string(), "y1".to_string()]);
        }
        out.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.unit_ids[i].clone(), self.a[i].to_string(), fmt_f64(self.y[i])];
            rec.extend(self.x.iter().map(|c| fmt_f64(c[i])));
            if with_potential {
                rec.push(fmt_f64(self.y0[i]));
                rec.push(fmt_f64(self.y1[i]));
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Draws `n` units from `spec`; deterministic given `seed`.
pub fn generate(spec: &ScmSpec, n: usize, seed: u64) -> Result<PotentialFrame> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Size("n must be at least 1".into()));
    }
    let k = spec.k;
    let mut r = rng::stream(seed);
    let mut x = vec![Vec::with_capacity(n); k];
    let (mut a, mut y0, mut y1) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let mut eta = spec.gamma[0];
        let mut base = spec.intercept;
        let mut effect = spec.tau;
        for j in 0..k {
            let z: f64 = r.sample(StandardNormal);
            let v = spec.confounder_means[j] + spec.confounder_sds[j] * z;
            x[j].push(v);
            eta += spec.gamma[j + 1] * v;
            base += spec.main_effects[j] * v;
            effect += spec.interactions[j] * v;
        }
        let u: f64 = r.random();
        a.push(u8::from(u < normal::cdf(eta)));
        let e: f64 = r.sample(StandardNormal);
        let v0 = base + spec.noise_sd * e;
        y0.push(v0);
        y1.push(v0 + effect);
    }
    PotentialFrame::new(a, y0, y1, x)
}

/// Sample ATE, ATT and ATC of the individual effects `y1 − y0`.
pub fn true_effects(pf: &PotentialFrame) -> Result<TrueEffects> {
    let n1 = pf.n_treated();
    let n = pf.n();
    if n1 == 0 || n1 == n {
        return Err(Error::Positivity("potential-outcome table has a single treatment class".into()));
    }
    let (mut all, mut t, mut c) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let d = pf.y1[i] - pf.y0[i];
        all += d;
        if pf.a[i] == 1 {
            t += d;
        } else {
            c += d;
        }
    }
    Ok(TrueEffects {
        ate: all / n as f64,
        att: t / n1 as f64,
        atc: c / (n - n1) as f64,
        pi: n1 as f64 / n as f64,
    })
}

/// Finite model of `(X, A, Y(0), Y(1))`.
///
/// `outcomes[x][a]` lists `(y0, y1, probability)` triples for the potential
/// outcomes given `X = x` and `A = a`. Ignorability holds when both lists
/// agree for every `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    pub points: Vec<Vec<i64>>,
    pub prob: Vec<f64>,
    pub p_treat: Vec<f64>,
    pub outcomes: Vec<[Vec<(f64, f64, f64)>; 2]>,
    /// Score used for stratification instead of `p_treat`.
    pub score: Option<Vec<f64>>,
}

/// Strata whose scores differ by less than this are pooled.
pub const SCORE_TOLERANCE: f64 = 1e-12;

impl DiscreteModel {
    pub fn new(
        points: Vec<Vec<i64>>,
        prob: Vec<f64>,
        p_treat: Vec<f64>,
        outcomes: Vec<[Vec<(f64, f64, f64)>; 2]>,
    ) -> Result<Self> {
        let m = Self { points, prob, p_treat, outcomes, score: None };
        m.validate()?;
        Ok(m)
    }

    /// Stratifies on `score` instead of the true propensity.
    pub fn with_score(mut self, score: Vec<f64>) -> Result<Self> {
        self.score = Some(score);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.points.len();
        if s == 0 || self.prob.len() != s || self.p_treat.len() != s || self.outcomes.len() != s {
            return Err(Error::Dimension("support, probabilities and tables differ in size".into()));
        }
        if self.score.as_ref().is_some_and(|v| v.len() != s) {
            return Err(Error::Dimension("score length differs from support size".into()));
        }
        if self.prob.iter().any(|p| !(0.0..=1.0).contains(p)) || (self.prob.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("support probabilities must lie in [0, 1] and sum to 1".into()));
        }
        if self.p_treat.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("treatment probabilities must lie in [0, 1]".into()));
        }
        for tables in &self.outcomes {
            for t in tables {
                if t.iter().any(|o| !(0.0..=1.0).contains(&o.2))
                    || (t.iter().map(|o| o.2).sum::<f64>() - 1.0).abs() > 1e-12
                {
                    return Err(Error::Config("outcome probabilities must lie in [0, 1] and sum to 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Binary support `{0,1}²` with random probabilities. Some points share
    /// a treatment probability so that strata hold more than one point.
    /// Outcomes are small integers and depend on `x` only.
    pub fn random_binary(seed: u64) -> Self {
        let mut r = rng::stream(seed);
        let points: Vec<Vec<i64>> = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        let raw: Vec<f64> = (0..4).map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut prob: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let rest: f64 = prob[..3].iter().sum();
        prob[3] = 1.0 - rest;
        let mut p_treat: Vec<f64> = (0..4).map(|_| r.random_range(0.05..0.95)).collect();
        if r.random_bool(0.7) {
            p_treat[2] = p_treat[1];
        }
        if r.random_bool(0.3) {
            p_treat[3] = p_treat[0];
        }
        let outcomes = (0..4)
            .map(|_| {
                let m = r.random_range(1..=3u32);
                let w: Vec<f64> = (0..m).map(|_| r.random_range(0.1..1.0)).collect();
                let tw: f64 = w.iter().sum();
                let mut table: Vec<(f64, f64, f64)> = w
                    .iter()
                    .map(|wi| {
                        let y0 = f64::from(r.random_range(0..3u32));
                        let y1 = y0 + f64::from(r.random_range(0..3u32));
                        (y0, y1, wi / tw)
                    })
                    .collect();
                let head: f64 = table[..table.len() - 1].iter().map(|o| o.2).sum();
                table.last_mut().expect("nonempty table").2 = 1.0 - head;
                [table.clone(), table]
            })
            .collect();
        Self { points, prob, p_treat, outcomes, score: None }
    }

    fn scores(&self) -> &[f64] {
        self.score.as_deref().unwrap_or(&self.p_treat)
    }

    /// Support points grouped by score, in ascending score order.
    fn strata(&self) -> Vec<(f64, Vec<usize>)> {
        let s = self.scores();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[i].total_cmp(&s[j]).then(i.cmp(&j)));
        let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
        for i in order {
            match out.last_mut() {
                Some((v, members)) if (s[i] - *v).abs() < SCORE_TOLERANCE => members.push(i),
                _ => out.push((s[i], vec![i])),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCheck {
    pub score: f64,
    pub points: Vec<usize>,
    /// `pr(A = 1 | stratum)`.
    pub pr_treated: f64,
    pub violation: f64,
    pub excluded: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub max_violation: f64,
    pub strata: Vec<StratumCheck>,
    pub excluded: usize,
}

impl IdentityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

fn stratum_masses(dm: &DiscreteModel, members: &[usize]) -> (f64, f64) {
    members.iter().fold((0.0, 0.0), |(t, c), &i| {
        (t + dm.prob[i] * dm.p_treat[i], c + dm.prob[i] * (1.0 - dm.p_treat[i]))
    })
}

fn run_checks(
    dm: &DiscreteModel,
    identity: &str,
    violation: impl Fn(&[usize], f64, f64) -> f64,
) -> IdentityReport {
    let mut strata = Vec::new();
    let mut max_violation: f64 = 0.0;
    let mut excluded = 0;
    for (score, members) in dm.strata() {
        let (t, c) = stratum_masses(dm, &members);
        let total = t + c;
        let pr_treated = if total > 0.0 { t / total } else { f64::NAN };
        if !(t > 0.0 && c > 0.0) {
            excluded += 1;
            strata.push(StratumCheck {
                score,
                points: members,
                pr_treated,
                violation: 0.0,
                excluded: true,
                note: Some("treatment probability is 0 or 1 in this stratum; conditional undefined".into()),
            });
            continue;
        }
        let v = violation(&members, t, c);
        max_violation = max_violation.max(v);
        strata.push(StratumCheck { score, points: members, pr_treated, violation: v, excluded: false, note: None });
    }
    IdentityReport { identity: identity.into(), max_violation, strata, excluded }
}

/// Largest `|pr(X=x | A=1, s) − pr(X=x | A=0, s)|` over strata of equal score.
pub fn check_balancing_property(dm: &DiscreteModel) -> Result<IdentityReport> {
    dm.validate()?;
    Ok(run_checks(dm, "treatment independent of X given the score", |members, t, c| {
        members
            .iter()
            .map(|&i| {
                let given_t = dm.prob[i] * dm.p_treat[i] / t;
                let given_c = dm.prob[i] * (1.0 - dm.p_treat[i]) / c;
                (given_t - given_c).abs()
            })
            .fold(0.0, f64::max)
    }))
}

/// Largest `|pr(A=1 | Y(0), Y(1), s) − pr(A=1 | s)|` over strata and
/// outcome pairs of positive probability.
pub fn check_outcome_independence(dm: &DiscreteModel) -> Result<IdentityReport> {
    dm.validate()?;
    Ok(run_checks(dm, "treatment independent of potential outcomes given the score", |members, t, c| {
        let base = t / (t + c);
        // (y0, y1) bit patterns -> (mass with A=1, total mass).
        let mut joint: BTreeMap<(u64, u64), (f64, f64)> = BTreeMap::new();
        for &i in members {
            for (arm, pa) in [(1usize, dm.p_treat[i]), (0, 1.0 - dm.p_treat[i])] {
                for &(y0, y1, q) in &dm.outcomes[i][arm] {
                    let mass = dm.prob[i] * pa * q;
                    let e = joint.entry((y0.to_bits(), y1.to_bits())).or_insert((0.0, 0.0));
                    if arm == 1 {
                        e.0 += mass;
                    }
                    e.1 += mass;
                }
            }
        }
        joint
            .values()
            .filter(|(_, total)| *total > 0.0)
            .map(|(treated, total)| (treated / total - base).abs())
            .fold(0.0, f64::max)
    }))
}
