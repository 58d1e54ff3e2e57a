//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. Nothing here calls into the library.

#![allow(dead_code)]

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Weighted least squares from the normal equations `XᵀWX β = XᵀWy`,
/// formed and solved in exact rational arithmetic. `cols` holds the `p`
/// design columns.
pub fn exact_wls(cols: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let p = cols.len();
    let n = y.len();
    let q = |v: f64| BigRational::from_float(v).expect("finite input");
    let xq: Vec<Vec<BigRational>> = cols.iter().map(|c| c.iter().map(|&v| q(v)).collect()).collect();
    let yq: Vec<BigRational> = y.iter().map(|&v| q(v)).collect();
    let wq: Vec<BigRational> = w.iter().map(|&v| q(v)).collect();
    // Augmented matrix [XᵀWX | XᵀWy].
    let mut m: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); p + 1]; p];
    for i in 0..n {
        if wq[i].is_zero() {
            continue;
        }
        for r in 0..p {
            let wr = &wq[i] * &xq[r][i];
            for c in 0..p {
                m[r][c] += &wr * &xq[c][i];
            }
            m[r][p] += &wr * &yq[i];
        }
    }
    for col in 0..p {
        let piv = (col..p).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        for r in 0..p {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                for c in col..=p {
                    let d = &f * &m[col][c];
                    m[r][c] -= d;
                }
            }
        }
    }
    (0..p).map(|r| (&m[r][p] / &m[r][r]).to_f64()).collect()
}

/// Φ(u) = 1/2 + φ(u) Σ u^{2k+1} / (1·3·…·(2k+1)); every term has the sign
/// of `u`, so the series has no cancellation.
pub fn series_cdf(u: f64) -> f64 {
    let phi = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut term = u;
    let mut sum = u;
    let mut k = 1.0;
    while term.abs() > 1e-17 * sum.abs() {
        term *= u * u / (2.0 * k + 1.0);
        sum += term;
        k += 1.0;
    }
    0.5 + phi * sum
}

/// Probit log-likelihood of `a` on `1, x` using [`series_cdf`].
pub fn series_loglik(x: &[f64], a: &[u8], g0: f64, g1: f64) -> f64 {
    x.iter()
        .zip(a)
        .map(|(&xi, &ai)| {
            let p = series_cdf(g0 + g1 * xi);
            if ai == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Maximizes [`series_loglik`] over a grid that is repeatedly re-centred on
/// the best point and shrunk, down to a spacing of `resolution`.
pub fn grid_probit(x: &[f64], a: &[u8], resolution: f64) -> (f64, f64) {
    let (mut c0, mut c1) = (0.0, 0.0);
    let mut half = 4.0;
    let steps = 20;
    while half / steps as f64 > resolution {
        let h = half / steps as f64;
        let mut best = (f64::NEG_INFINITY, c0, c1);
        for i in -steps..=steps {
            for j in -steps..=steps {
                let (g0, g1) = (c0 + h * f64::from(i), c1 + h * f64::from(j));
                let ll = series_loglik(x, a, g0, g1);
                if ll > best.0 {
                    best = (ll, g0, g1);
                }
            }
        }
        c0 = best.1;
        c1 = best.2;
        half = 2.0 * h;
    }
    (c0, c1)
}

/// `(intercept, slope)` of simple OLS by centred sums.
pub fn ols_line(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    let slope = sxy / sxx;
    (my - slope * mt, slope)
}

/// Type-7 quantile of the sample in which `values[i]` appears `w[i]` times.
pub fn replica_quantile(values: &[f64], w: &[u32], p: f64) -> f64 {
    let mut s: Vec<f64> = values
        .iter()
        .zip(w)
        .flat_map(|(&v, &k)| std::iter::repeat_n(v, k as usize))
        .collect();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Nearest-neighbour matching by exhaustive scan: treated units in index
/// order, closest control on `lp`, lower index on ties.
pub fn brute_nn(lp: &[f64], a: &[u8], with_replacement: bool, width: Option<f64>) -> Vec<f64> {
    let n = lp.len();
    let mut w = vec![0.0; n];
    let mut used = vec![false; n];
    for t in (0..n).filter(|&i| a[i] == 1) {
        let mut best: Option<(f64, usize)> = None;
        for c in (0..n).filter(|&i| a[i] == 0 && (with_replacement || !used[i])) {
            let d = (lp[c] - lp[t]).abs();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        if let Some((d, c)) = best {
            if width.is_none_or(|wd| d <= wd) {
                w[t] = 1.0;
                w[c] += 1.0;
                used[c] = true;
            }
        }
    }
    w
}

/// Two clusters: within each, `y` falls with `t`; across them the cluster
/// with larger `t` has much larger `y`. `z` identifies the cluster.
pub fn two_cluster_simpson(per_cluster: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let golden = 0.618_033_988_749_894_9;
    let (mut t, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..2 {
        for i in 0..per_cluster {
            let k = c * per_cluster + i;
            let u = (k as f64 * golden).fract();
            let tv = 2.0 * c as f64 + u;
            t.push(tv);
            y.push(5.0 * c as f64 - tv + 0.01 * (k as f64).sin());
            z.push(10.0 * c as f64 + i as f64 / per_cluster as f64);
        }
    }
    (t, y, z)
}
