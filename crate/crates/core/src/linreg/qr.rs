//! Householder QR with column pivoting.

use nalgebra::{DMatrix, DVector};

/// `A P = Q R` for a tall matrix `A` (rows ≥ cols).
pub(crate) struct PivotedQr {
    /// Upper triangle holds R; everything below the diagonal is unused.
    r: DMatrix<f64>,
    reflectors: Vec<(DVector<f64>, f64)>,
    /// `perm[i]` is the original column placed at position `i`.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    /// Factorizes `a`; a pivot whose magnitude falls below `rel_tol` times
    /// the first pivot ends the factorization and fixes the rank.
    pub fn new(mut a: DMatrix<f64>, rel_tol: f64) -> Self {
        let (m, p) = a.shape();
        debug_assert!(m >= p);
        let mut perm: Vec<usize> = (0..p).collect();
        let mut reflectors = Vec::with_capacity(p);
        let mut rank = p;
        let mut first_pivot = 0.0;

        for j in 0..p {
            let norms: Vec<f64> = (j..p).map(|c| a.view((j, c), (m - j, 1)).norm()).collect();
            let (offset, &best) = norms
                .iter()
                .enumerate()
                .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
            if j == 0 {
                first_pivot = best;
            }
            if best <= rel_tol * first_pivot || best == 0.0 {
                rank = j;
                break;
            }
            let pivot = j + offset;
            if pivot != j {
                a.swap_columns(j, pivot);
                perm.swap(j, pivot);
            }

            let x = a.view((j, j), (m - j, 1)).column(0).clone_owned();
            let alpha = if x[0] >= 0.0 { -best } else { best };
            let mut v = x;
            v[0] -= alpha;
            let vtv = v.norm_squared();
            let tau = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
            for c in j..p {
                let mut col = a.view_mut((j, c), (m - j, 1));
                let s = tau * v.dot(&col.column(0));
                col.column_mut(0).axpy(-s, &v, 1.0);
            }
            a[(j, j)] = alpha;
            reflectors.push((v, tau));
        }

        Self { r: a, reflectors, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn cols(&self) -> usize {
        self.perm.len()
    }

    /// Original indices of the columns left out of the leading full-rank block.
    pub fn dependent_columns(&self) -> &[usize] {
        &self.perm[self.rank..]
    }

    /// `Qᵀ b`.
    fn apply_qt(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        let m = out.len();
        for (j, (v, tau)) in self.reflectors.iter().enumerate() {
            let mut tail = out.rows_mut(j, m - j);
            let s = tau * v.dot(&tail);
            tail.axpy(-s, v, 1.0);
        }
        out
    }

    /// Least-squares solution in original column order. Requires full rank.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let p = self.cols();
        let c = self.apply_qt(b);
        let mut z = vec![0.0; p];
        for i in (0..p).rev() {
            let mut s = c[i];
            for k in i + 1..p {
                s -= self.r[(i, k)] * z[k];
            }
            z[i] = s / self.r[(i, i)];
        }
        let mut beta = DVector::zeros(p);
        for (i, &col) in self.perm.iter().enumerate() {
            beta[col] = z[i];
        }
        beta
    }

    /// `(AᵀA)⁻¹` in original column order. Requires full rank.
    pub fn gram_inverse(&self) -> DMatrix<f64> {
        let p = self.cols();
        // R⁻¹ by back substitution, column by column.
        let mut rinv = DMatrix::<f64>::zeros(p, p);
        for col in 0..p {
            for i in (0..=col).rev() {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for k in i + 1..=col {
                    s -= self.r[(i, k)] * rinv[(k, col)];
                }
                rinv[(i, col)] = s / self.r[(i, i)];
            }
        }
        let s = &rinv * rinv.transpose();
        let mut out = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                out[(self.perm[i], self.perm[j])] = s[(i, j)];
            }
        }
        out
    }
}
