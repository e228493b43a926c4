//! Principal component analysis backed by a cyclic Jacobi eigensolver.

use super::NumericsError;

/// Off-diagonal Frobenius norm below which the Jacobi sweep stops, relative
/// to the scale of the input matrix.
const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues at or below `RANK_TOL * lambda_max` are treated as zero; the
/// corresponding components become all-zero rows.
const RANK_TOL: f64 = 1e-10;

/// A fitted PCA basis: per-column means plus the top-`k` eigenvectors of the
/// sample covariance, one per row.
///
/// Nonzero rows are orthonormal and sign-normalized so that the entry of
/// largest absolute value is positive. Rows past the rank of the centered
/// data are all-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dim: usize,
    k: usize,
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// The `k x input_dim` component matrix, one eigenvector per row in
    /// descending eigenvalue order.
    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }
}

/// Fits a `k`-component PCA on `rows` (one observation per row).
pub fn pca_fit(rows: &[Vec<f64>], k: usize) -> Result<PcaModel, NumericsError> {
    let m = rows.len();
    if m < 2 {
        return Err(NumericsError::EmptyData(m));
    }
    let input_dim = rows[0].len();
    for row in rows {
        if row.len() != input_dim {
            return Err(NumericsError::DimMismatch {
                expected: input_dim,
                got: row.len(),
            });
        }
    }
    if input_dim == 0 || k < 1 || k > input_dim {
        return Err(NumericsError::BadK { k, max: input_dim });
    }

    let mut mean = vec![0.0; input_dim];
    for row in rows {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }

    // Sample covariance with the (m - 1) denominator.
    let mut cov = vec![0.0; input_dim * input_dim];
    let mut centered = vec![0.0; input_dim];
    for row in rows {
        for (c, (v, mu)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v - mu;
        }
        for i in 0..input_dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..input_dim {
                cov[i * input_dim + j] += ci * centered[j];
            }
        }
    }
    let denom = (m - 1) as f64;
    for i in 0..input_dim {
        for j in i..input_dim {
            let v = cov[i * input_dim + j] / denom;
            cov[i * input_dim + j] = v;
            cov[j * input_dim + i] = v;
        }
    }

    let (eigenvalues, eigenvectors) = jacobi_eigen(input_dim, cov);

    // Order by descending eigenvalue; ties keep the lower original index
    // first so the result is deterministic.
    let mut order: Vec<usize> = (0..input_dim).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .expect("eigenvalues are finite")
            .then(a.cmp(&b))
    });

    let lambda_max = eigenvalues[order[0]].max(0.0);
    let zero_tol = lambda_max * RANK_TOL;

    let mut components = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        if eigenvalues[idx] <= zero_tol {
            components.push(vec![0.0; input_dim]);
        } else {
            components.push(sign_normalize(eigenvectors[idx].clone()));
        }
    }

    Ok(PcaModel {
        input_dim,
        k,
        mean,
        components,
    })
}

/// Projects `v` onto the fitted basis: `components * (v - mean)`.
pub fn pca_project(model: &PcaModel, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if v.len() != model.input_dim {
        return Err(NumericsError::DimMismatch {
            expected: model.input_dim,
            got: v.len(),
        });
    }
    let centered: Vec<f64> = v.iter().zip(&model.mean).map(|(x, mu)| x - mu).collect();
    Ok(model
        .components
        .iter()
        .map(|row| row.iter().zip(&centered).map(|(a, b)| a * b).sum())
        .collect())
}

/// Flips the row so its entry of largest absolute value (first such entry on
/// ties) is positive.
fn sign_normalize(mut row: Vec<f64>) -> Vec<f64> {
    let mut best = 0usize;
    let mut best_abs = 0.0f64;
    for (i, v) in row.iter().enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = i;
        }
    }
    if row[best] < 0.0 {
        for v in &mut row {
            *v = -*v;
        }
    }
    row
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (flat row-major).
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as rows, unordered.
fn jacobi_eigen(n: usize, mut a: Vec<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale = frobenius(&a).max(1.0);
    let tol = JACOBI_TOL * scale;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(n, &a) < tol {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    // Degenerate rotation; avoid overflow in theta^2.
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = vrp - s * (vrq + tau * vrp);
                    v[r * n + q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    // Eigenvectors are the columns of the accumulated rotation.
    let eigenvectors: Vec<Vec<f64>> = (0..n)
        .map(|col| (0..n).map(|row| v[row * n + col]).collect())
        .collect();
    (eigenvalues, eigenvectors)
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn off_diagonal_norm(n: usize, a: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[i * n + j] * a[i * n + j];
            }
        }
    }
    acc.sqrt()
}
