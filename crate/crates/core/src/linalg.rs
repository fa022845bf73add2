//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// Tolerance used for the PSD check: `1e-10 * (trace + 1)`.
pub fn psd_tolerance(a: &DMatrix<f64>) -> f64 {
    1e-10 * (a.trace().abs() + 1.0)
}

/// `(A + A^T) / 2`. Exact (bitwise unchanged) on already symmetric input.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto the PSD cone: eigendecomposition with negative
/// eigenvalues clipped to zero.
pub fn project_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * clipped[j]);
    symmetrize(&(scaled * v.transpose()))
}

/// `(I_n kron 1_m^T) A (I_n kron 1_m)`: sum each `m x m` block of `A`.
pub fn block_sum(a: &DMatrix<f64>, group: usize) -> DMatrix<f64> {
    let n = a.nrows() / group;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for l in 0..group {
                for h in 0..group {
                    acc += a[(i * group + l, j * group + h)];
                }
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// `(A kron B) o (v v^T)`, built entrywise without forming `A kron B` first.
pub fn kron_weighted(a: &DMatrix<f64>, b: &DMatrix<f64>, v: &[f64]) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    debug_assert_eq!(v.len(), n * m);
    let mut out = DMatrix::zeros(n * m, n * m);
    for i in 0..n {
        for j in 0..n {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for l in 0..m {
                let left = aij * v[i * m + l];
                for h in 0..m {
                    out[(i * m + l, j * m + h)] = left * b[(l, h)] * v[j * m + h];
                }
            }
        }
    }
    out
}

/// `sum_ij A_ij B_ij`, i.e. `Tr(A B)` for symmetric `B`.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_clips_negative_part() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = project_psd(&a);
        // eigenpairs (1, [1,1]/sqrt2), (-1, [1,-1]/sqrt2) -> 0.5 * ones
        for v in p.iter() {
            assert!((v - 0.5).abs() < 1e-14);
        }
        assert!(min_eigenvalue(&p) > -1e-14);
    }

    #[test]
    fn block_sum_of_equal_blocks() {
        let block = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let mut a = DMatrix::zeros(4, 4);
        a.view_mut((0, 0), (2, 2)).copy_from(&block);
        a.view_mut((2, 2), (2, 2)).copy_from(&block);
        let b = block_sum(&a, 2);
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[7.0, 0.0, 0.0, 7.0]));
    }

    #[test]
    fn kron_weighted_matches_dense() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 1.0]);
        let v = [0.9, 0.2, 0.4, 1.0];
        let dense = a.kronecker(&b);
        let got = kron_weighted(&a, &b, &v);
        for s in 0..4 {
            for t in 0..4 {
                assert!((got[(s, t)] - dense[(s, t)] * v[s] * v[t]).abs() < 1e-15);
            }
        }
    }
}
