use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CausalFrame, RawFrame};
use crate::rng;
use crate::{Error, Result};

/// How the treatment threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomizeRule {
    /// Sample median (midpoint of the central order statistics for even n).
    Median,
    /// Fixed threshold.
    Threshold(f64),
}

/// Whether the median is taken over all rows or separately per `date` tag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianPooling {
    #[default]
    Joint,
    PerDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupThreshold {
    pub date: Option<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum TransformRecord {
    TrimBorder {
        margin: usize,
        rows: usize,
        cols: usize,
    },
    Sqrt {
        column: String,
    },
    Dichotomize {
        column: String,
        rule: DichotomizeRule,
        pooling: MedianPooling,
        thresholds: Vec<GroupThreshold>,
        n_treated: usize,
        n_control: usize,
    },
    Sample {
        m: usize,
        seed: u64,
        trial_index: u64,
    },
}

/// Ordered provenance of a frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformLog {
    records: Vec<TransformRecord>,
}

impl TransformLog {
    pub fn records(&self) -> &[TransformRecord] {
        &self.records
    }

    pub(crate) fn push(&mut self, record: TransformRecord) {
        self.records.push(record);
    }

    /// Re-applies every record to the raw input the log started from.
    pub fn replay(&self, raw: &RawFrame) -> Result<CausalFrame> {
        let mut stage = Stage::Raw(raw.clone());
        for record in &self.records {
            stage = stage.apply(record)?;
        }
        match stage {
            Stage::Frame(f) => Ok(f),
            Stage::Raw(_) => Err(Error::Schema("log has no dichotomization step".into())),
        }
    }

    /// Re-applies every record to a frame that was loaded already binary.
    pub fn replay_frame(&self, base: &CausalFrame) -> Result<CausalFrame> {
        let mut stage = Stage::Frame(base.clone());
        for record in &self.records {
            stage = stage.apply(record)?;
        }
        match stage {
            Stage::Frame(f) => Ok(f),
            Stage::Raw(_) => unreachable!("frames never revert to raw"),
        }
    }
}

enum Stage {
    Raw(RawFrame),
    Frame(CausalFrame),
}

impl Stage {
    fn apply(self, record: &TransformRecord) -> Result<Stage> {
        use TransformRecord::*;
        match (self, record) {
            (Stage::Raw(r), TrimBorder { margin, rows, cols }) => {
                r.trim_border(*margin, *rows, *cols).map(Stage::Raw)
            }
            (Stage::Raw(r), Sqrt { column }) => r.sqrt_transform(column).map(Stage::Raw),
            (Stage::Frame(f), Sqrt { column }) => f.sqrt_transform(column).map(Stage::Frame),
            (Stage::Raw(r), Dichotomize { column, rule, pooling, .. }) => {
                dichotomize(r, column, *rule, *pooling).map(Stage::Frame)
            }
            (Stage::Frame(f), Sample { m, seed, trial_index }) => {
                sample_units(&f, *m, *seed, *trial_index).map(Stage::Frame)
            }
            (_, rec) => Err(Error::Schema(format!("transform {rec:?} cannot be replayed at this stage"))),
        }
    }
}

/// Standard sample median; `values` must be non-empty.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Treated iff the value strictly exceeds the median of `column`.
pub fn dichotomize_at_median(raw: RawFrame, column: &str) -> Result<CausalFrame> {
    dichotomize(raw, column, DichotomizeRule::Median, MedianPooling::Joint)
}

/// Turns the continuous treatment into `a = 1{value > threshold}`.
///
/// Ties with the threshold go to control. With [`MedianPooling::PerDate`]
/// a separate median is computed for each `date` tag.
pub fn dichotomize(
    raw: RawFrame,
    column: &str,
    rule: DichotomizeRule,
    pooling: MedianPooling,
) -> Result<CausalFrame> {
    if column != raw.table.treatment_name {
        return Err(Error::Schema(format!(
            "only the treatment column `{}` can be dichotomized, not `{column}`",
            raw.table.treatment_name
        )));
    }
    let values = &raw.treatment;
    let groups: BTreeMap<Option<String>, Vec<usize>> = match (rule, pooling) {
        (DichotomizeRule::Median, MedianPooling::PerDate) => {
            let mut g: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
            for (i, tag) in raw.table.grid.iter().enumerate() {
                g.entry(tag.date.clone()).or_default().push(i);
            }
            g
        }
        _ => BTreeMap::from([(None, (0..values.len()).collect())]),
    };

    let mut a = vec![0u8; values.len()];
    let mut thresholds = Vec::with_capacity(groups.len());
    for (date, idx) in &groups {
        let group: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let threshold = match rule {
            DichotomizeRule::Median => {
                let first = group[0];
                if group.iter().all(|&v| v == first) {
                    return Err(Error::Degenerate(format!(
                        "column `{column}` is constant{}",
                        date.as_ref().map(|d| format!(" on date {d}")).unwrap_or_default()
                    )));
                }
                median(&group)
            }
            DichotomizeRule::Threshold(t) => t,
        };
        for &i in idx {
            a[i] = u8::from(values[i] > threshold);
        }
        thresholds.push(GroupThreshold { date: date.clone(), threshold });
    }

    let n_treated = a.iter().filter(|&&v| v == 1).count();
    let n_control = a.len() - n_treated;
    let mut log = raw.log;
    log.push(TransformRecord::Dichotomize {
        column: column.to_string(),
        rule,
        pooling,
        thresholds,
        n_treated,
        n_control,
    });
    CausalFrame::from_parts(raw.table, a, Some(raw.treatment), log, raw.missing_dropped)
}

/// Simple random sample of `m` units without replacement.
///
/// The generator is seeded with [`rng::derive_seed`]`(seed, trial_index)`;
/// the first `m` positions of a Fisher–Yates shuffle are kept and returned in
/// their original row order.
pub fn sample_units(frame: &CausalFrame, m: usize, seed: u64, trial_index: u64) -> Result<CausalFrame> {
    let n = frame.n();
    if m == 0 || m > n {
        return Err(Error::Size(format!("sample size {m} must be in 1..={n}")));
    }
    let mut rng = rng::sub_stream(seed, trial_index);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng::below(&mut rng, n - i);
        perm.swap(i, j);
    }
    let mut chosen = perm[..m].to_vec();
    chosen.sort_unstable();
    let mut out = frame.select(&chosen)?;
    out.log.push(TransformRecord::Sample { m, seed, trial_index });
    Ok(out)
}
