//! Lower-triangular Cholesky factors of SPD matrices, with O(dim^2)
//! rank-one updates and triangular solves.

use super::NumericsError;

/// Absolute tolerance for the symmetry pre-check in [`cholesky_factor`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A pivot at or below this value fails the positive-definiteness check.
pub const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular factor `L` of an SPD matrix `B = L * L^T`.
///
/// Entries strictly above the diagonal are zero and the diagonal is strictly
/// positive. Stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TriFactor {
    dim: usize,
    entries: Vec<f64>,
}

impl TriFactor {
    /// Factor of the identity matrix (the identity itself).
    pub fn identity(dim: usize) -> Self {
        assert!(dim > 0, "factor dimension must be positive");
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        TriFactor { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `L[i][j]`; zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Reconstructs `B = L * L^T` as a dense row-major matrix.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.dim;
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..=j.min(i) {
                    acc += self.entries[i * n + k] * self.entries[j * n + k];
                }
                out[i][j] = acc;
                out[j][i] = acc;
            }
        }
        out
    }

    /// In-place rank-one update: after the call, `L * L^T` equals the old
    /// `L * L^T + x * x^T`. Runs in O(dim^2).
    pub fn rank_one_update(&mut self, x: &[f64]) -> Result<(), NumericsError> {
        let n = self.dim;
        if x.len() != n {
            return Err(NumericsError::DimMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let mut work = x.to_vec();
        for k in 0..n {
            let lkk = self.entries[k * n + k];
            let wk = work[k];
            if wk == 0.0 {
                continue;
            }
            let r = lkk.hypot(wk);
            let c = r / lkk;
            let s = wk / lkk;
            self.entries[k * n + k] = r;
            for i in (k + 1)..n {
                let idx = i * n + k;
                self.entries[idx] = (self.entries[idx] + s * work[i]) / c;
                work[i] = c * work[i] - s * self.entries[idx];
            }
        }
        Ok(())
    }

    /// Solves `(L * L^T) y = b` by forward then back substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let n = self.dim;
        if b.len() != n {
            return Err(NumericsError::DimMismatch {
                expected: n,
                got: b.len(),
            });
        }
        // Forward: L u = b.
        let mut u = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.entries[i * n + j] * u[j];
            }
            u[i] = acc / self.entries[i * n + i];
        }
        // Back: L^T y = u.
        let mut y = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = u[i];
            for j in (i + 1)..n {
                acc -= self.entries[j * n + i] * y[j];
            }
            y[i] = acc / self.entries[i * n + i];
        }
        Ok(y)
    }

    /// Solves `L^T w = z` by back substitution.
    pub fn solve_transposed(&self, z: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let n = self.dim;
        if z.len() != n {
            return Err(NumericsError::DimMismatch {
                expected: n,
                got: z.len(),
            });
        }
        let mut w = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in (i + 1)..n {
                acc -= self.entries[j * n + i] * w[j];
            }
            w[i] = acc / self.entries[i * n + i];
        }
        Ok(w)
    }

    /// Factors a flat row-major SPD matrix without a symmetry check; the
    /// caller guarantees symmetry by construction.
    pub(crate) fn from_spd_flat(dim: usize, m: &[f64]) -> Result<Self, NumericsError> {
        debug_assert_eq!(m.len(), dim * dim);
        let mut l = vec![0.0; dim * dim];
        for j in 0..dim {
            let mut pivot = m[j * dim + j];
            for k in 0..j {
                pivot -= l[j * dim + k] * l[j * dim + k];
            }
            if pivot <= PIVOT_TOL {
                return Err(NumericsError::NotPositiveDefinite { column: j, pivot });
            }
            let diag = pivot.sqrt();
            l[j * dim + j] = diag;
            for i in (j + 1)..dim {
                let mut acc = m[i * dim + j];
                for k in 0..j {
                    acc -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = acc / diag;
            }
        }
        Ok(TriFactor { dim, entries: l })
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Fails with `NotSymmetric` if any pair of mirrored entries differs by more
/// than [`SYMMETRY_TOL`], and with `NotPositiveDefinite` if a pivot falls at
/// or below [`PIVOT_TOL`].
pub fn cholesky_factor(matrix: &[Vec<f64>]) -> Result<TriFactor, NumericsError> {
    let n = matrix.len();
    if n == 0 {
        return Err(NumericsError::EmptyData(0));
    }
    for row in matrix {
        if row.len() != n {
            return Err(NumericsError::DimMismatch {
                expected: n,
                got: row.len(),
            });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (matrix[i][j] - matrix[j][i]).abs();
            if delta > SYMMETRY_TOL {
                return Err(NumericsError::NotSymmetric {
                    row: i,
                    col: j,
                    delta,
                });
            }
        }
    }
    let mut flat = vec![0.0; n * n];
    for (i, row) in matrix.iter().enumerate() {
        flat[i * n..(i + 1) * n].copy_from_slice(row);
    }
    TriFactor::from_spd_flat(n, &flat)
}

/// Draws one sample from `N(mean, (L * L^T)^-1)` given the precision factor
/// `L` and a standard-normal source.
///
/// Consumes exactly `dim` draws from `z_source`, in coordinate order: the
/// sample is `mean + w` where `L^T w = z`.
pub fn mvn_sample(
    mean: &[f64],
    precision_factor: &TriFactor,
    mut z_source: impl FnMut() -> f64,
) -> Result<Vec<f64>, NumericsError> {
    let n = precision_factor.dim();
    if mean.len() != n {
        return Err(NumericsError::DimMismatch {
            expected: n,
            got: mean.len(),
        });
    }
    let z: Vec<f64> = (0..n).map(|_| z_source()).collect();
    let w = precision_factor.solve_transposed(&z)?;
    Ok(mean.iter().zip(&w).map(|(m, wi)| m + wi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let mut worst = 0.0f64;
        for (ra, rb) in a.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_factors_to_identity() {
        let m = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let l = cholesky_factor(&m).unwrap();
        assert_eq!(l, TriFactor::identity(2));
    }

    #[test]
    fn two_by_two_factor_matches_hand_result() {
        let m = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let l = cholesky_factor(&m).unwrap();
        assert_close(l.get(0, 0), 2.0, 1e-12);
        assert_close(l.get(1, 0), 1.0, 1e-12);
        assert_close(l.get(1, 1), 2.0f64.sqrt(), 1e-12);
        assert_eq!(l.get(0, 1), 0.0);
        // Multiply back and compare to the input.
        assert!(max_abs_diff(&l.reconstruct(), &m) < 1e-10);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        match cholesky_factor(&m) {
            Err(NumericsError::NotPositiveDefinite { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let m = vec![vec![1.0, 0.5], vec![0.3, 1.0]];
        assert!(matches!(
            cholesky_factor(&m),
            Err(NumericsError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn rank_one_update_on_identity() {
        let mut l = TriFactor::identity(2);
        l.rank_one_update(&[1.0, 0.0]).unwrap();
        let b = l.reconstruct();
        assert!(max_abs_diff(&b, &[vec![2.0, 0.0], vec![0.0, 1.0]]) < 1e-12);
    }

    #[test]
    fn rank_one_update_with_zero_vector_is_identity() {
        let mut l = TriFactor::identity(2);
        let before = l.clone();
        l.rank_one_update(&[0.0, 0.0]).unwrap();
        assert_eq!(l, before);
    }

    #[test]
    fn rank_one_update_dimension_mismatch() {
        let mut l = TriFactor::identity(3);
        assert!(matches!(
            l.rank_one_update(&[1.0, 2.0]),
            Err(NumericsError::DimMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let l = TriFactor::identity(4);
        let b = vec![3.0, -1.0, 0.5, 2.0];
        assert_eq!(l.solve(&b).unwrap(), b);
    }

    #[test]
    fn solve_diagonal_system() {
        let l = cholesky_factor(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let y = l.solve(&[1.0, 0.0]).unwrap();
        assert_close(y[0], 0.5, 1e-12);
        assert_close(y[1], 0.0, 1e-12);
    }

    #[test]
    fn mvn_identity_precision_shifts_mean_by_z() {
        let l = TriFactor::identity(3);
        let z = [0.3, -1.2, 0.7];
        let mut it = z.iter().copied();
        let s = mvn_sample(&[1.0, 2.0, 3.0], &l, || it.next().unwrap()).unwrap();
        assert_close(s[0], 1.3, 1e-12);
        assert_close(s[1], 0.8, 1e-12);
        assert_close(s[2], 3.7, 1e-12);
    }

    #[test]
    fn mvn_diagonal_precision_scales_draws() {
        // Precision diag(4, 1) factors to L = diag(2, 1); L^T w = z gives
        // w = (z1 / 2, z2).
        let l = cholesky_factor(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let z = [1.0, -0.5];
        let mut it = z.iter().copied();
        let s = mvn_sample(&[10.0, 20.0], &l, || it.next().unwrap()).unwrap();
        assert_close(s[0], 10.5, 1e-12);
        assert_close(s[1], 19.5, 1e-12);
    }

    #[test]
    fn mvn_consumes_exactly_dim_draws() {
        let l = TriFactor::identity(5);
        let mut consumed = 0usize;
        mvn_sample(&[0.0; 5], &l, || {
            consumed += 1;
            0.1
        })
        .unwrap();
        assert_eq!(consumed, 5);
    }
}
