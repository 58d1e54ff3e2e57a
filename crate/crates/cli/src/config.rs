//! Run configuration shared by `analyze`, `balance` and `simpson`.
//!
//! A config is either read from `--config FILE` or assembled from flags;
//! flags given alongside a file override the file's values. The final
//! config is validated before any data is read, and a copy is written to
//! `config.json` in the output directory. Feeding that file back through
//! `--config` reproduces the run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use causal_match::dataset::{DichotomizeRule, MedianPooling};
use causal_match::{Error, Result, WeightingScheme};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// What the config will drive. Slope stratification reads the treatment
/// as continuous and names its stratifier separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Effects,
    Slopes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrimBorder {
    pub margin: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub treatment: String,
    pub outcome: String,
    pub confounders: Vec<String>,
    #[serde(default)]
    pub trim_border: Option<TrimBorder>,
    #[serde(default)]
    pub sqrt_treatment: bool,
    /// `None` means the treatment column is already 0/1.
    #[serde(default)]
    pub dichotomize: Option<DichotomizeRule>,
    #[serde(default)]
    pub median_pooling: MedianPooling,
    #[serde(default = "default_weighting")]
    pub weighting: WeightingScheme,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    /// `None` uses every unit in each trial.
    #[serde(default)]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default = "default_qq_points")]
    pub qq_points: usize,
    /// Resample size for the pseudo-population Q-Q check; `None` is twice
    /// the trial sample size.
    #[serde(default)]
    pub pseudo_population_size: Option<usize>,
    #[serde(default = "default_true")]
    pub svg_timestamp: bool,
}

fn default_weighting() -> WeightingScheme {
    WeightingScheme::Ipw
}

fn default_trials() -> usize {
    10
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_qq_points() -> usize {
    causal_match::balance::QQ_POINTS
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    /// Config with every required field empty; filled in from flags.
    pub fn blank() -> Self {
        Self {
            input: PathBuf::new(),
            treatment: String::new(),
            outcome: String::new(),
            confounders: Vec::new(),
            trim_border: None,
            sqrt_treatment: false,
            dichotomize: None,
            median_pooling: MedianPooling::Joint,
            weighting: default_weighting(),
            n_trials: default_trials(),
            sample_size: None,
            seed: 0,
            out: PathBuf::new(),
            formats: default_formats(),
            qq_points: default_qq_points(),
            pseudo_population_size: None,
            svg_timestamp: true,
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Checks that need no data.
    pub fn validate(&self, purpose: Purpose) -> Result<()> {
        let effects = purpose == Purpose::Effects;
        let bad = |m: String| Err(Error::Config(m));
        if self.input.as_os_str().is_empty() {
            return bad("no input file (use --input or `input` in the config)".into());
        }
        if !self.input.is_file() {
            return bad(format!("input file {} does not exist", self.input.display()));
        }
        if self.out.as_os_str().is_empty() {
            return bad("no output directory (use --out or `out` in the config)".into());
        }
        if self.treatment.is_empty() || self.outcome.is_empty() {
            return bad("both a treatment and an outcome column are required".into());
        }
        if effects && self.confounders.is_empty() {
            return bad("at least one confounder is required".into());
        }
        let mut seen = BTreeSet::new();
        for c in std::iter::once(&self.treatment).chain([&self.outcome]).chain(&self.confounders) {
            if c.is_empty() {
                return bad("empty column name".into());
            }
            if !seen.insert(c) {
                return bad(format!("column `{c}` is given more than one role"));
            }
        }
        if let Some(t) = self.trim_border {
            if t.rows == 0 || t.cols == 0 || 2 * t.margin >= t.rows || 2 * t.margin >= t.cols {
                return bad(format!(
                    "trim margin {} leaves nothing of a {}x{} grid",
                    t.margin, t.rows, t.cols
                ));
            }
        }
        if effects && self.dichotomize.is_none() {
            if self.sqrt_treatment {
                return bad("--sqrt-treatment only applies to a continuous treatment; add --dichotomize".into());
            }
            if self.trim_border.is_some() {
                return bad("border trimming only applies to a continuous treatment; add --dichotomize".into());
            }
        }
        if let Some(DichotomizeRule::Threshold(t)) = self.dichotomize {
            if !t.is_finite() {
                return bad(format!("threshold {t} is not finite"));
            }
        }
        if self.median_pooling == MedianPooling::PerDate && self.dichotomize != Some(DichotomizeRule::Median) {
            return bad("per-date pooling needs --dichotomize median".into());
        }
        match self.weighting {
            WeightingScheme::Ipw => {}
            WeightingScheme::Nn { caliper, .. } => {
                if caliper.is_some_and(|c| !(c.is_finite() && c > 0.0)) {
                    return bad("caliper must be positive".into());
                }
            }
            WeightingScheme::Subclass { n_strata } => {
                if n_strata < 2 {
                    return bad(format!("subclassification needs at least 2 strata, got {n_strata}"));
                }
            }
        }
        if self.n_trials == 0 {
            return bad("the number of trials must be at least 1".into());
        }
        if self.sample_size == Some(0) {
            return bad("sample size must be at least 1".into());
        }
        if self.pseudo_population_size == Some(0) {
            return bad("pseudo-population size must be at least 1".into());
        }
        if self.qq_points < 2 {
            return bad(format!("need at least 2 Q-Q points, got {}", self.qq_points));
        }
        if self.formats.is_empty() {
            return bad("no output format selected".into());
        }
        Ok(())
    }
}

/// Parses `median` or a number.
pub fn parse_dichotomize(s: &str) -> std::result::Result<DichotomizeRule, String> {
    if s.eq_ignore_ascii_case("median") {
        return Ok(DichotomizeRule::Median);
    }
    s.parse::<f64>()
        .map(DichotomizeRule::Threshold)
        .map_err(|_| format!("expected `median` or a number, got `{s}`"))
}
