use nalgebra::{DMatrix, DVector};

use super::qr::PivotedQr;
use super::{CovarianceKind, DesignMatrix, FitResult, RANK_TOLERANCE};
use crate::{Error, Result};

/// Minimizes `Σ wᵢ (yᵢ − xᵢᵀβ)²`.
///
/// Rows with zero weight are ignored. The solution comes from a pivoted
/// Householder QR of `W^{1/2} X`; the normal equations are never formed.
/// Both the classical covariance `σ̂²(XᵀWX)⁻¹`, with
/// `σ̂² = Σ wᵢeᵢ² / (n₊ − p)` over the `n₊` positively weighted rows, and the
/// HC0 sandwich `(XᵀWX)⁻¹ (Σ wᵢ²eᵢ² xᵢxᵢᵀ) (XᵀWX)⁻¹` are computed; HC0 is
/// selected. With `n₊ = p` the classical covariance is undefined (NaN).
pub fn fit_wls(design: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<FitResult> {
    let n = design.n();
    let p = design.p();
    if y.len() != n || w.len() != n {
        return Err(Error::Dimension(format!(
            "design has {n} rows, y has {}, weights have {}",
            y.len(),
            w.len()
        )));
    }
    if let Some(i) = w.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Weight(format!("weight {} at row {i} is negative or non-finite", w[i])));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data { row: i, column: "y".into(), message: "non-finite response".into() });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    let m = rows.len();
    if m < p {
        return Err(Error::Weight(format!("{m} positive weights cannot identify {p} coefficients")));
    }

    let x = design.matrix();
    let sw: Vec<f64> = rows.iter().map(|&i| w[i].sqrt()).collect();
    let xw = DMatrix::from_fn(m, p, |r, c| sw[r] * x[(rows[r], c)]);
    let yw = DVector::from_fn(m, |r, _| sw[r] * y[rows[r]]);

    let qr = PivotedQr::new(xw, RANK_TOLERANCE);
    if qr.rank() < p {
        let columns = qr
            .dependent_columns()
            .iter()
            .map(|&j| design.labels()[j].clone())
            .collect();
        return Err(Error::SingularDesign { columns });
    }
    let beta = qr.solve(&yw);
    let bread = qr.gram_inverse();

    let fitted = x * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let rss: f64 = rows.iter().map(|&i| w[i] * residuals[i] * residuals[i]).sum();

    let dof = m - p;
    let sigma2 = if dof > 0 { rss / dof as f64 } else { f64::NAN };
    let classical = symmetrize(&bread * sigma2);

    let mut meat = DMatrix::<f64>::zeros(p, p);
    for &i in &rows {
        let s = w[i] * residuals[i];
        let xi = x.row(i);
        for a in 0..p {
            let ua = s * xi[a];
            for b in 0..=a {
                meat[(a, b)] += ua * s * xi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            meat[(b, a)] = meat[(a, b)];
        }
    }
    let hc0 = symmetrize(&bread * meat * &bread);

    Ok(FitResult {
        labels: design.labels().to_vec(),
        coefficients: beta.iter().copied().collect(),
        covariance_kind: CovarianceKind::Hc0,
        classical: Some(classical),
        hc0: Some(hc0),
        loglik: None,
        rss: Some(rss),
        residuals: Some(residuals),
        n,
        p,
        converged: true,
        iterations: 1,
    })
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}
