//! Weighted least squares and probit maximum likelihood.
//!
//! Both fitters work on a [`DesignMatrix`] whose columns carry labels, and
//! return a [`FitResult`] with coefficients and their covariance.

pub mod normal;
mod probit;
mod qr;
mod wls;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use probit::{
    fit_probit, fit_probit_with, linear_predictor, predict_probit, probit_loglik, probit_score,
    ProbitOptions, PS_CLAMP,
};
pub use wls::fit_wls;

/// Label of the constant column added by [`DesignMatrix::with_intercept`].
pub const INTERCEPT: &str = "(intercept)";

/// Pivots below this fraction of the largest one mark a column as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Regression design with labelled columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: DMatrix<f64>,
    labels: Vec<String>,
    intercept: Option<usize>,
}

impl DesignMatrix {
    /// Wraps an `n × p` matrix. A column of exact ones is treated as the intercept.
    pub fn new(data: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, p) = data.shape();
        if labels.len() != p {
            return Err(Error::Dimension(format!("{p} columns but {} labels", labels.len())));
        }
        if p == 0 || p > n {
            return Err(Error::Dimension(format!("design with {n} rows cannot hold {p} columns")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: pos % n,
                column: labels[pos / n].clone(),
                message: "non-finite design entry".into(),
            });
        }
        let intercept = (0..p).find(|&j| data.column(j).iter().all(|&v| v == 1.0));
        Ok(Self { data, labels, intercept })
    }

    /// Intercept column followed by `columns`.
    pub fn with_intercept<S: AsRef<str>>(columns: &[&[f64]], labels: &[S]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.len());
        let mut all: Vec<Vec<f64>> = vec![vec![1.0; n]];
        all.extend(columns.iter().map(|c| c.to_vec()));
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(labels.iter().map(|s| s.as_ref().to_string()));
        Self::from_columns(all, names)
    }

    pub fn from_columns(columns: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("design columns differ in length".into()));
        }
        let p = columns.len();
        let data = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
        Self::new(data, labels)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn intercept(&self) -> Option<usize> {
        self.intercept
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    /// `x_i · coef` for every row.
    pub fn dot(&self, coef: &[f64]) -> Vec<f64> {
        let c = nalgebra::DVector::from_column_slice(coef);
        (&self.data * c).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    /// σ̂²(XᵀWX)⁻¹ for least squares, inverse expected information for probit.
    Classical,
    /// White's heteroskedasticity-consistent sandwich without small-sample correction.
    Hc0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance_kind: CovarianceKind,
    classical: Option<DMatrix<f64>>,
    hc0: Option<DMatrix<f64>>,
    /// Log-likelihood at the optimum (probit only).
    pub loglik: Option<f64>,
    /// Weighted residual sum of squares (least squares only).
    pub rss: Option<f64>,
    /// Residuals `y − Xβ` for every row (least squares only).
    pub residuals: Option<Vec<f64>>,
    pub n: usize,
    pub p: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    /// Covariance of the selected kind.
    pub fn covariance(&self) -> &DMatrix<f64> {
        self.covariance_of(self.covariance_kind)
            .expect("selected covariance kind is always present")
    }

    pub fn covariance_of(&self, kind: CovarianceKind) -> Option<&DMatrix<f64>> {
        match kind {
            CovarianceKind::Classical => self.classical.as_ref(),
            CovarianceKind::Hc0 => self.hc0.as_ref(),
        }
    }

    /// Switches the reported covariance, if that kind was computed.
    pub fn with_covariance_kind(mut self, kind: CovarianceKind) -> Result<Self> {
        if self.covariance_of(kind).is_none() {
            return Err(Error::Numerical(format!("{kind:?} covariance not available for this fit")));
        }
        self.covariance_kind = kind;
        Ok(self)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.index_of(label).map(|j| self.coefficients[j])
    }

    /// Standard errors from the selected covariance.
    pub fn standard_errors(&self) -> Vec<f64> {
        let v = self.covariance();
        (0..self.p).map(|j| v[(j, j)].max(0.0).sqrt()).collect()
    }
}
