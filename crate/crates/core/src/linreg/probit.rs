//! Probit regression by Fisher scoring.
//!
//! The fit runs on an internally standardized design: with an intercept
//! present, every other column is centered and divided by its standard
//! deviation; without one, columns are divided by their root mean square.
//! Coefficients and covariance are mapped back afterwards, so the result is
//! the same MLE in the caller's units. The separation bound applies to the
//! standardized coefficients.

use nalgebra::{DMatrix, DVector};

use super::normal;
use super::qr::PivotedQr;
use super::wls::symmetrize;
use super::{CovarianceKind, DesignMatrix, FitResult, RANK_TOLERANCE};
use crate::{Error, Result};

/// Predicted probabilities are clamped to `[PS_CLAMP, 1 − PS_CLAMP]`.
pub const PS_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitOptions {
    pub max_iterations: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tolerance: f64,
    /// Largest standardized coefficient magnitude before separation is declared.
    pub separation_bound: f64,
}

impl Default for ProbitOptions {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-10, separation_bound: 15.0 }
    }
}

/// `Σ aᵢ ln Φ(ηᵢ) + (1 − aᵢ) ln Φ(−ηᵢ)` with `η = Xγ`.
pub fn probit_loglik(design: &DesignMatrix, a: &[u8], coef: &[f64]) -> f64 {
    loglik_eta(&design.dot(coef), a)
}

/// Gradient of [`probit_loglik`] with respect to the coefficients.
pub fn probit_score(design: &DesignMatrix, a: &[u8], coef: &[f64]) -> Vec<f64> {
    let eta = design.dot(coef);
    let s = DVector::from_iterator(eta.len(), eta.iter().zip(a).map(|(&e, &ai)| score_term(e, ai)));
    (design.matrix().transpose() * s).iter().copied().collect()
}

fn loglik_eta(eta: &[f64], a: &[u8]) -> f64 {
    eta.iter()
        .zip(a)
        .map(|(&e, &ai)| if ai == 1 { normal::ln_cdf(e) } else { normal::ln_cdf(-e) })
        .sum()
}

/// d/dη of the per-unit log-likelihood.
fn score_term(eta: f64, a: u8) -> f64 {
    if a == 1 {
        normal::mills(eta)
    } else {
        -normal::mills(-eta)
    }
}

/// Expected-information weight φ² / (Φ(1 − Φ)).
fn info_weight(eta: f64) -> f64 {
    normal::mills(eta) * normal::mills(-eta)
}

pub fn fit_probit(design: &DesignMatrix, a: &[u8]) -> Result<FitResult> {
    fit_probit_with(design, a, &ProbitOptions::default())
}

/// Maximizes the probit likelihood with Fisher scoring and step halving.
///
/// `converged` is set once the relative log-likelihood change falls below
/// `tolerance` and the last step is below 1e-9 in every standardized
/// coordinate. Running out of iterations returns the current estimate with
/// `converged = false`.
pub fn fit_probit_with(design: &DesignMatrix, a: &[u8], opts: &ProbitOptions) -> Result<FitResult> {
    let n = design.n();
    let p = design.p();
    if a.len() != n {
        return Err(Error::Dimension(format!("design has {n} rows, treatment has {}", a.len())));
    }
    if let Some(i) = a.iter().position(|&v| v > 1) {
        return Err(Error::Data { row: i, column: "a".into(), message: "response is not 0/1".into() });
    }
    let treated = a.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == n {
        return Err(Error::Positivity("probit response has a single class".into()));
    }

    let qr = PivotedQr::new(design.matrix().clone(), RANK_TOLERANCE);
    if qr.rank() < p {
        let columns = qr.dependent_columns().iter().map(|&j| design.labels()[j].clone()).collect();
        return Err(Error::SingularDesign { columns });
    }

    let (z, map) = standardize(design)?;
    let mut gamma = DVector::<f64>::zeros(p);
    if let Some(ic) = design.intercept() {
        gamma[ic] = normal::inv_cdf(treated as f64 / n as f64);
    }
    let eta_of = |g: &DVector<f64>| -> Vec<f64> { (&z * g).iter().copied().collect() };
    let mut ll = loglik_eta(&eta_of(&gamma), a);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iterations {
        iterations = it;
        let eta = eta_of(&gamma);
        let mut score = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let zi = z.row(i);
            let s = score_term(eta[i], a[i]);
            let wgt = info_weight(eta[i]);
            for r in 0..p {
                score[r] += s * zi[r];
                for c in 0..=r {
                    info[(r, c)] += wgt * zi[r] * zi[c];
                }
            }
        }
        for r in 0..p {
            for c in 0..r {
                info[(c, r)] = info[(r, c)];
            }
        }
        let step = info
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("expected information is not positive definite".into()))?
            .solve(&score);

        let mut scale = 1.0;
        let mut next = &gamma + &step;
        let mut ll_next = loglik_eta(&eta_of(&next), a);
        let mut halvings = 0;
        while !(ll_next >= ll) && halvings < 40 {
            scale *= 0.5;
            next = &gamma + &step * scale;
            ll_next = loglik_eta(&eta_of(&next), a);
            halvings += 1;
        }
        if !(ll_next >= ll) {
            // No ascent along the scoring direction: we are at the optimum to
            // machine precision.
            converged = true;
            break;
        }

        let improvement = ll_next - ll;
        if let Some((j, v)) = next
            .iter()
            .enumerate()
            .filter(|&(j, _)| Some(j) != design.intercept() || p == 1)
            .map(|(j, v)| (j, *v))
            .find(|(_, v)| v.abs() > opts.separation_bound)
        {
            if improvement > 0.0 {
                return Err(Error::Separation { column: design.labels()[j].clone(), value: v });
            }
        }
        let max_step = (&step * scale).amax();
        gamma = next;
        let rel = improvement / ll.abs().max(f64::MIN_POSITIVE);
        ll = ll_next;
        if rel < opts.tolerance && max_step < 1e-9 {
            converged = true;
            break;
        }
    }

    // Covariance from the expected information at the final estimate.
    let eta = eta_of(&gamma);
    let mut info = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let zi = z.row(i);
        let wgt = info_weight(eta[i]);
        for r in 0..p {
            for c in 0..p {
                info[(r, c)] += wgt * zi[r] * zi[c];
            }
        }
    }
    let cov_z = info
        .try_inverse()
        .ok_or_else(|| Error::Numerical("expected information is singular".into()))?;
    let coef = &map * &gamma;
    let cov = symmetrize(&map * cov_z * map.transpose());

    Ok(FitResult {
        labels: design.labels().to_vec(),
        coefficients: coef.iter().copied().collect(),
        covariance_kind: CovarianceKind::Classical,
        classical: Some(cov),
        hc0: None,
        loglik: Some(ll),
        rss: None,
        residuals: None,
        n,
        p,
        converged,
        iterations,
    })
}

/// Returns the standardized design `Z = X M` and `M`, so that `γ = M γ_z`.
fn standardize(design: &DesignMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let x = design.matrix();
    let (n, p) = x.shape();
    let mut map = DMatrix::<f64>::identity(p, p);
    let nf = n as f64;
    for j in 0..p {
        if Some(j) == design.intercept() {
            continue;
        }
        let col = x.column(j);
        let (center, spread) = match design.intercept() {
            Some(_) => {
                let mean = col.sum() / nf;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
                (mean, var.sqrt())
            }
            None => (0.0, (col.norm_squared() / nf).sqrt()),
        };
        if !(spread > 0.0) {
            return Err(Error::SingularDesign { columns: vec![design.labels()[j].clone()] });
        }
        map[(j, j)] = 1.0 / spread;
        if let Some(ic) = design.intercept() {
            map[(ic, j)] = -center / spread;
        }
    }
    Ok((x * &map, map))
}

/// `x · γ` for every row of `design`, after checking column labels.
pub fn linear_predictor(fit: &FitResult, design: &DesignMatrix) -> Result<Vec<f64>> {
    if design.labels() != fit.labels.as_slice() {
        return Err(Error::Schema(format!(
            "design columns {:?} do not match fitted columns {:?}",
            design.labels(),
            fit.labels
        )));
    }
    Ok(design.dot(&fit.coefficients))
}

/// Φ(x · γ), clamped to `[PS_CLAMP, 1 − PS_CLAMP]`.
pub fn predict_probit(fit: &FitResult, design: &DesignMatrix) -> Result<Vec<f64>> {
    if !fit.converged {
        return Err(Error::Convergence(format!(
            "probit fit stopped after {} iterations without converging",
            fit.iterations
        )));
    }
    Ok(linear_predictor(fit, design)?
        .into_iter()
        .map(|e| normal::cdf(e).clamp(PS_CLAMP, 1.0 - PS_CLAMP))
        .collect())
}
