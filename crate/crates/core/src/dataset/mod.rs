//! Unit-level tables: loading, validation, preprocessing and subsampling.
//!
//! Data enters as a [`RawFrame`] when the treatment is still continuous and
//! becomes a [`CausalFrame`] once the treatment is binary. Every
//! preprocessing step appends a [`TransformRecord`] so the final frame can be
//! rebuilt from the raw input with [`TransformLog::replay`].

mod grid;
mod transform;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::export::fmt_f64;
use crate::{Error, Result};

pub use grid::GridField;
pub use transform::{
    dichotomize, dichotomize_at_median, sample_units, DichotomizeRule, GroupThreshold,
    MedianPooling, TransformLog, TransformRecord,
};

/// Column roles of an input table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub treatment: String,
    pub outcome: String,
    pub confounders: Vec<String>,
}

impl Schema {
    pub fn new(
        treatment: impl Into<String>,
        outcome: impl Into<String>,
        confounders: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            confounders: confounders.into_iter().map(Into::into).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.confounders.is_empty() {
            return Err(Error::Schema("at least one confounder column is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in std::iter::once(&self.treatment)
            .chain(std::iter::once(&self.outcome))
            .chain(&self.confounders)
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("column `{name}` is assigned two roles")));
            }
        }
        Ok(())
    }
}

/// Grid provenance of one unit; all fields optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridTag {
    pub row: Option<usize>,
    pub col: Option<usize>,
    pub date: Option<String>,
}

/// Columns shared by raw and binary frames.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct UnitTable {
    pub unit_ids: Vec<String>,
    pub grid: Vec<GridTag>,
    pub y: Vec<f64>,
    /// Column-major confounders: `x[j][i]`.
    pub x: Vec<Vec<f64>>,
    pub treatment_name: String,
    pub outcome_name: String,
    pub confounder_names: Vec<String>,
}

impl UnitTable {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn select(&self, idx: &[usize]) -> UnitTable {
        UnitTable {
            unit_ids: idx.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            grid: idx.iter().map(|&i| self.grid[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: self.x.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            treatment_name: self.treatment_name.clone(),
            outcome_name: self.outcome_name.clone(),
            confounder_names: self.confounder_names.clone(),
        }
    }

    fn confounder_index(&self, name: &str) -> Option<usize> {
        self.confounder_names.iter().position(|c| c == name)
    }

    fn check_finite(&self) -> Result<()> {
        let named = std::iter::once((&self.outcome_name, &self.y))
            .chain(self.confounder_names.iter().zip(&self.x));
        for (name, col) in named {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data {
                    row,
                    column: name.clone(),
                    message: format!("non-finite value {}", col[row]),
                });
            }
        }
        Ok(())
    }

    fn has_grid(&self) -> bool {
        self.grid.iter().any(|g| g.row.is_some() || g.col.is_some() || g.date.is_some())
    }
}

/// Table whose treatment column is still continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub(crate) table: UnitTable,
    pub(crate) treatment: Vec<f64>,
    pub(crate) log: TransformLog,
    missing_dropped: usize,
}

impl RawFrame {
    pub fn new(
        treatment: Vec<f64>,
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        schema: &Schema,
    ) -> Result<Self> {
        schema.validate()?;
        let n = y.len();
        let unit_ids = (0..n).map(|i| i.to_string()).collect();
        let table = UnitTable {
            unit_ids,
            grid: vec![GridTag::default(); n],
            y,
            x,
            treatment_name: schema.treatment.clone(),
            outcome_name: schema.outcome.clone(),
            confounder_names: schema.confounders.clone(),
        };
        let frame = Self { table, treatment, log: TransformLog::default(), missing_dropped: 0 };
        frame.validate()?;
        Ok(frame)
    }

    /// Stacks gridded fields of one date into a frame with `row`/`col`/`date`
    /// provenance.
    pub fn from_grids(
        date: Option<&str>,
        treatment: &GridField,
        outcome: &GridField,
        confounders: &[GridField],
    ) -> Result<Self> {
        let (rows, cols) = (treatment.rows(), treatment.cols());
        for f in std::iter::once(outcome).chain(confounders) {
            if (f.rows(), f.cols()) != (rows, cols) {
                return Err(Error::Dimension(format!(
                    "grid `{}` is {}x{}, expected {rows}x{cols}",
                    f.name(),
                    f.rows(),
                    f.cols()
                )));
            }
        }
        let schema = Schema::new(
            treatment.name(),
            outcome.name(),
            confounders.iter().map(|c| c.name().to_string()),
        );
        let mut frame = RawFrame::new(
            treatment.values().to_vec(),
            outcome.values().to_vec(),
            confounders.iter().map(|c| c.values().to_vec()).collect(),
            &schema,
        )?;
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                frame.table.grid[i] =
                    GridTag { row: Some(r), col: Some(c), date: date.map(str::to_string) };
                frame.table.unit_ids[i] = unit_id_for(&frame.table.grid[i], i);
            }
        }
        Ok(frame)
    }

    /// Concatenates frames with identical schemas (e.g. several dates).
    pub fn stack(frames: Vec<RawFrame>) -> Result<RawFrame> {
        let mut iter = frames.into_iter();
        let mut out = iter
            .next()
            .ok_or_else(|| Error::Size("cannot stack zero frames".into()))?;
        for f in iter {
            if f.table.confounder_names != out.table.confounder_names
                || f.table.treatment_name != out.table.treatment_name
                || f.table.outcome_name != out.table.outcome_name
            {
                return Err(Error::Schema("stacked frames have different columns".into()));
            }
            out.treatment.extend(f.treatment);
            out.table.unit_ids.extend(f.table.unit_ids);
            out.table.grid.extend(f.table.grid);
            out.table.y.extend(f.table.y);
            for (dst, src) in out.table.x.iter_mut().zip(f.table.x) {
                dst.extend(src);
            }
            out.missing_dropped += f.missing_dropped;
        }
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let n = self.table.n();
        if n == 0 {
            return Err(Error::Size("frame has no rows".into()));
        }
        if self.treatment.len() != n || self.table.x.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("column lengths differ".into()));
        }
        if self.table.x.len() != self.table.confounder_names.len() {
            return Err(Error::Dimension("confounder names do not match columns".into()));
        }
        if let Some(row) = self.treatment.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row,
                column: self.table.treatment_name.clone(),
                message: format!("non-finite value {}", self.treatment[row]),
            });
        }
        self.table.check_finite()
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }

    pub fn treatment_name(&self) -> &str {
        &self.table.treatment_name
    }

    pub fn y(&self) -> &[f64] {
        &self.table.y
    }

    pub fn confounder_names(&self) -> &[String] {
        &self.table.confounder_names
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.table.unit_ids
    }

    pub fn grid(&self) -> &[GridTag] {
        &self.table.grid
    }

    /// Any column by name: treatment, outcome or confounder.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        if name == self.table.treatment_name {
            Some(&self.treatment)
        } else if name == self.table.outcome_name {
            Some(&self.table.y)
        } else {
            self.table.confounder_index(name).map(|j| self.table.x[j].as_slice())
        }
    }

    pub fn log(&self) -> &TransformLog {
        &self.log
    }

    /// Rows removed at load time because a value was missing.
    pub fn missing_dropped(&self) -> usize {
        self.missing_dropped
    }

    fn column_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        if name == self.table.treatment_name {
            Some(&mut self.treatment)
        } else if name == self.table.outcome_name {
            Some(&mut self.table.y)
        } else {
            let j = self.table.confounder_index(name)?;
            Some(&mut self.table.x[j])
        }
    }

    /// Replaces `column` by its elementwise square root.
    pub fn sqrt_transform(mut self, column: &str) -> Result<RawFrame> {
        let col = self
            .column_mut(column)
            .ok_or_else(|| Error::Schema(format!("no column named `{column}`")))?;
        sqrt_in_place(col, column)?;
        self.log.push(TransformRecord::Sqrt { column: column.to_string() });
        Ok(self)
    }

    /// Keeps units whose grid position lies at least `margin` points inside a
    /// `rows × cols` domain. Units need `row` and `col` provenance.
    pub fn trim_border(self, margin: usize, rows: usize, cols: usize) -> Result<RawFrame> {
        if 2 * margin >= rows || 2 * margin >= cols {
            return Err(Error::Dimension(format!(
                "margin {margin} leaves no interior in a {rows}x{cols} grid"
            )));
        }
        let mut keep = Vec::new();
        for (i, g) in self.table.grid.iter().enumerate() {
            let (Some(r), Some(c)) = (g.row, g.col) else {
                return Err(Error::Schema(format!(
                    "unit {} has no row/col provenance; cannot trim the border",
                    self.table.unit_ids[i]
                )));
            };
            if r >= rows || c >= cols {
                return Err(Error::Dimension(format!(
                    "unit {} at ({r},{c}) lies outside the {rows}x{cols} grid",
                    self.table.unit_ids[i]
                )));
            }
            if r >= margin && r < rows - margin && c >= margin && c < cols - margin {
                keep.push(i);
            }
        }
        let mut out = RawFrame {
            table: self.table.select(&keep),
            treatment: keep.iter().map(|&i| self.treatment[i]).collect(),
            log: self.log,
            missing_dropped: self.missing_dropped,
        };
        out.log.push(TransformRecord::TrimBorder { margin, rows, cols });
        Ok(out)
    }
}

/// Analysis-ready table with a binary treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalFrame {
    pub(crate) table: UnitTable,
    pub(crate) a: Vec<u8>,
    pub(crate) treatment_raw: Option<Vec<f64>>,
    pub(crate) log: TransformLog,
    missing_dropped: usize,
}

impl CausalFrame {
    /// Builds a validated frame with default names (`a`, `y`) and unit ids `0..n`.
    pub fn new(
        a: Vec<u8>,
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        confounder_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        let table = UnitTable {
            unit_ids: (0..n).map(|i| i.to_string()).collect(),
            grid: vec![GridTag::default(); n],
            y,
            x,
            treatment_name: "a".into(),
            outcome_name: "y".into(),
            confounder_names,
        };
        Self::from_parts(table, a, None, TransformLog::default(), 0)
    }

    pub(crate) fn from_parts(
        table: UnitTable,
        a: Vec<u8>,
        treatment_raw: Option<Vec<f64>>,
        log: TransformLog,
        missing_dropped: usize,
    ) -> Result<Self> {
        let frame = Self { table, a, treatment_raw, log, missing_dropped };
        frame.validate()?;
        Ok(frame)
    }

    pub fn with_unit_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(Error::Dimension("unit id count differs from row count".into()));
        }
        self.table.unit_ids = ids;
        Ok(self)
    }

    /// Attaches the continuous treatment the binary `a` was derived from.
    pub fn with_treatment_raw(mut self, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != self.n() {
            return Err(Error::Dimension("raw treatment length differs from row count".into()));
        }
        self.treatment_raw = Some(raw);
        Ok(self)
    }

    pub fn with_names(mut self, treatment: &str, outcome: &str) -> Self {
        self.table.treatment_name = treatment.to_string();
        self.table.outcome_name = outcome.to_string();
        self
    }

    fn validate(&self) -> Result<()> {
        let t = &self.table;
        let n = t.n();
        let k = t.x.len();
        if self.a.len() != n || t.unit_ids.len() != n || t.x.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("column lengths differ".into()));
        }
        if t.confounder_names.len() != k {
            return Err(Error::Dimension("confounder names do not match columns".into()));
        }
        if k == 0 {
            return Err(Error::Schema("at least one confounder is required".into()));
        }
        if let Some(row) = self.a.iter().position(|&v| v > 1) {
            return Err(Error::Data {
                row,
                column: t.treatment_name.clone(),
                message: format!("treatment value {} is not 0 or 1", self.a[row]),
            });
        }
        t.check_finite()?;
        if let Some(raw) = &self.treatment_raw {
            if raw.len() != n {
                return Err(Error::Dimension("raw treatment length differs".into()));
            }
        }
        let treated = self.a.iter().filter(|&&v| v == 1).count();
        if treated == 0 || treated == n {
            return Err(Error::Positivity(format!(
                "treatment `{}` has a single class ({treated} treated of {n})",
                t.treatment_name
            )));
        }
        if n <= k + 2 {
            return Err(Error::Size(format!(
                "{n} rows are too few for {k} confounders (need more than {})",
                k + 2
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn k(&self) -> usize {
        self.table.x.len()
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    /// Treatment as `f64` zeros and ones.
    pub fn a_f64(&self) -> Vec<f64> {
        self.a.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn y(&self) -> &[f64] {
        &self.table.y
    }

    pub fn x(&self, j: usize) -> &[f64] {
        &self.table.x[j]
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.table.x
    }

    pub fn confounder_names(&self) -> &[String] {
        &self.table.confounder_names
    }

    pub fn treatment_name(&self) -> &str {
        &self.table.treatment_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.table.outcome_name
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.table.unit_ids
    }

    pub fn grid(&self) -> &[GridTag] {
        &self.table.grid
    }

    pub fn treatment_raw(&self) -> Option<&[f64]> {
        self.treatment_raw.as_deref()
    }

    pub fn log(&self) -> &TransformLog {
        &self.log
    }

    pub fn missing_dropped(&self) -> usize {
        self.missing_dropped
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1).count()
    }

    /// Confounder column by name.
    pub fn confounder(&self, name: &str) -> Option<&[f64]> {
        self.table.confounder_index(name).map(|j| self.table.x[j].as_slice())
    }

    /// Rows `idx` in the given order. The result is validated again.
    pub fn select(&self, idx: &[usize]) -> Result<CausalFrame> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n()) {
            return Err(Error::Size(format!("row index {bad} out of range")));
        }
        CausalFrame::from_parts(
            self.table.select(idx),
            idx.iter().map(|&i| self.a[i]).collect(),
            self.treatment_raw.as_ref().map(|r| idx.iter().map(|&i| r[i]).collect()),
            self.log.clone(),
            self.missing_dropped,
        )
    }

    /// Replaces an outcome, confounder or raw-treatment column by its square root.
    pub fn sqrt_transform(mut self, column: &str) -> Result<CausalFrame> {
        let col = if column == self.table.outcome_name {
            &mut self.table.y
        } else if column == self.table.treatment_name {
            self.treatment_raw.as_mut().ok_or_else(|| {
                Error::Schema(format!("treatment `{column}` is binary; no raw values to transform"))
            })?
        } else {
            let j = self
                .table
                .confounder_index(column)
                .ok_or_else(|| Error::Schema(format!("no column named `{column}`")))?;
            &mut self.table.x[j]
        };
        sqrt_in_place(col, column)?;
        self.log.push(TransformRecord::Sqrt { column: column.to_string() });
        Ok(self)
    }

    /// Writes `unit_id,a,y,<confounders>` plus `row,col,date` when any unit
    /// carries grid provenance.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let t = &self.table;
        let mut w = csv::Writer::from_writer(writer);
        let grid = t.has_grid();
        let mut header = vec!["unit_id".to_string(), t.treatment_name.clone(), t.outcome_name.clone()];
        header.extend(t.confounder_names.iter().cloned());
        if grid {
            header.extend(["row".to_string(), "col".to_string(), "date".to_string()]);
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![t.unit_ids[i].clone(), self.a[i].to_string(), fmt_f64(t.y[i])];
            rec.extend(t.x.iter().map(|c| fmt_f64(c[i])));
            if grid {
                let g = &t.grid[i];
                rec.push(g.row.map(|v| v.to_string()).unwrap_or_default());
                rec.push(g.col.map(|v| v.to_string()).unwrap_or_default());
                rec.push(g.date.clone().unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sqrt_in_place(col: &mut [f64], name: &str) -> Result<()> {
    if let Some(row) = col.iter().position(|&v| v < 0.0) {
        return Err(Error::Domain { row, column: name.to_string(), value: col[row] });
    }
    for v in col.iter_mut() {
        *v = v.sqrt();
    }
    Ok(())
}

fn unit_id_for(tag: &GridTag, index: usize) -> String {
    match (tag.row, tag.col) {
        (Some(r), Some(c)) => match &tag.date {
            Some(d) => format!("r{r}c{c}@{d}"),
            None => format!("r{r}c{c}"),
        },
        _ => match &tag.date {
            Some(d) => format!("{index}@{d}"),
            None => index.to_string(),
        },
    }
}

const MISSING_TOKENS: [&str; 5] = ["", "NA", "N/A", "null", "NULL"];

struct ParsedTable {
    table: UnitTable,
    treatment: Vec<f64>,
    dropped: usize,
}

fn parse_table<R: Read>(reader: R, schema: &Schema) -> Result<ParsedTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let t_idx = find(&schema.treatment)?;
    let y_idx = find(&schema.outcome)?;
    let x_idx = schema.confounders.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let id_idx = index.get("unit_id").copied();
    let row_idx = index.get("row").copied();
    let col_idx = index.get("col").copied();
    let date_idx = index.get("date").copied();

    let k = schema.confounders.len();
    let mut treatment = Vec::new();
    let mut y = Vec::new();
    let mut x = vec![Vec::new(); k];
    let mut unit_ids = Vec::new();
    let mut grid = Vec::new();
    let mut dropped = 0;

    let numeric_cols: Vec<(usize, &str)> = std::iter::once((t_idx, schema.treatment.as_str()))
        .chain(std::iter::once((y_idx, schema.outcome.as_str())))
        .chain(x_idx.iter().copied().zip(schema.confounders.iter().map(String::as_str)))
        .collect();

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        if numeric_cols.iter().any(|&(i, _)| MISSING_TOKENS.contains(&field(i))) {
            dropped += 1;
            continue;
        }
        let mut values = Vec::with_capacity(numeric_cols.len());
        for &(i, name) in &numeric_cols {
            let raw = field(i);
            let v: f64 = raw.parse().map_err(|_| Error::Data {
                row,
                column: name.to_string(),
                message: format!("cannot parse `{raw}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    column: name.to_string(),
                    message: format!("non-finite value `{raw}`"),
                });
            }
            values.push(v);
        }
        treatment.push(values[0]);
        y.push(values[1]);
        for (j, v) in values[2..].iter().enumerate() {
            x[j].push(*v);
        }
        let parse_pos = |idx: Option<usize>, name: &str| -> Result<Option<usize>> {
            match idx.map(field).filter(|s| !s.is_empty()) {
                None => Ok(None),
                Some(s) => s.parse().map(Some).map_err(|_| Error::Data {
                    row,
                    column: name.to_string(),
                    message: format!("`{s}` is not a grid index"),
                }),
            }
        };
        let tag = GridTag {
            row: parse_pos(row_idx, "row")?,
            col: parse_pos(col_idx, "col")?,
            date: date_idx.map(field).filter(|s| !s.is_empty()).map(str::to_string),
        };
        let id = match id_idx.map(field).filter(|s| !s.is_empty()) {
            Some(id) => id.to_string(),
            None => unit_id_for(&tag, row),
        };
        unit_ids.push(id);
        grid.push(tag);
    }

    Ok(ParsedTable {
        table: UnitTable {
            unit_ids,
            grid,
            y,
            x,
            treatment_name: schema.treatment.clone(),
            outcome_name: schema.outcome.clone(),
            confounder_names: schema.confounders.clone(),
        },
        treatment,
        dropped,
    })
}

/// Loads a CSV whose treatment column is already binary (0/1).
///
/// Rows with a missing value (empty, `NA`, `N/A`, `null`) in any used column
/// are dropped and counted; see [`CausalFrame::missing_dropped`]. Row numbers
/// in errors are 0-based and exclude the header.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<CausalFrame> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<CausalFrame> {
    let parsed = parse_table(reader, schema)?;
    let mut a = Vec::with_capacity(parsed.treatment.len());
    for (row, &v) in parsed.treatment.iter().enumerate() {
        if v == 0.0 {
            a.push(0);
        } else if v == 1.0 {
            a.push(1);
        } else {
            return Err(Error::Schema(format!(
                "treatment `{}` is not binary (row {row} holds {v}); load it as raw and dichotomize",
                schema.treatment
            )));
        }
    }
    CausalFrame::from_parts(parsed.table, a, None, TransformLog::default(), parsed.dropped)
}

/// Loads a CSV whose treatment column is continuous.
pub fn load_raw_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawFrame> {
    let file = std::fs::File::open(path.as_ref())?;
    read_raw_csv(file, schema)
}

pub fn read_raw_csv<R: Read>(reader: R, schema: &Schema) -> Result<RawFrame> {
    let parsed = parse_table(reader, schema)?;
    let frame = RawFrame {
        table: parsed.table,
        treatment: parsed.treatment,
        log: TransformLog::default(),
        missing_dropped: parsed.dropped,
    };
    frame.validate()?;
    Ok(frame)
}
