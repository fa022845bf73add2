//! Gaussian kernel primitives.
//!
//! Everything here works with the anisotropic Gaussian kernel
//!
//! ```text
//! k_eta(x, x') = exp(-(x - x')^T diag(eta) (x - x'))
//! ```
//!
//! together with the two identities the model algebra is built on: the
//! product of two Gaussians is a Gaussian times a constant, and the
//! integral of a Gaussian over R^d (or a hypercube) is known in closed form.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{check_dim, PsdError, Result};

/// Per-coordinate kernel precision (inverse squared length scale).
#[derive(Debug, Clone, PartialEq)]
pub struct Precision(Vec<f64>);

impl Precision {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.is_empty() {
            return Err(PsdError::InvalidArgument(
                "precision must have at least one coordinate".into(),
            ));
        }
        if let Some(bad) = eta.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(PsdError::InvalidArgument(format!(
                "precision entries must be finite and > 0, got {bad}"
            )));
        }
        Ok(Precision(eta))
    }

    /// Same precision `value` on each of `dim` coordinates.
    pub fn isotropic(value: f64, dim: usize) -> Result<Self> {
        Precision::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Largest entry, `max_t eta_t`.
    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Precision {
        Precision(self.0.iter().map(|e| e * factor).collect())
    }

    pub fn sum(&self, other: &Precision) -> Precision {
        Precision(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Elementwise `a b / (a + b)`, the precision of the cross term in the
    /// Gaussian product identity.
    pub fn harmonic(&self, other: &Precision) -> Precision {
        Precision(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a * b / (a + b))
                .collect(),
        )
    }

    pub fn concat(parts: &[&Precision]) -> Precision {
        Precision(parts.iter().flat_map(|p| p.0.iter().cloned()).collect())
    }

    pub(crate) fn slice(&self, start: usize, len: usize) -> Precision {
        Precision(self.0[start..start + len].to_vec())
    }
}

/// An `n x d` matrix of points stored row-major; row `i` is the point `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(PsdError::InvalidArgument(
                "point matrix needs at least one row and one column".into(),
            ));
        }
        check_dim(rows * dim, data.len(), "point matrix data length")?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(PsdError::InvalidArgument(
                "point matrix entries must be finite".into(),
            ));
        }
        Ok(PointMatrix { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PsdError::InvalidArgument("ragged point rows".into()));
        }
        PointMatrix::new(rows.len(), dim, rows.concat())
    }

    /// Column vector of 1-d points.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        PointMatrix::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Columns `start..start+len` of every row.
    pub fn columns(&self, start: usize, len: usize) -> PointMatrix {
        let data = self
            .iter_rows()
            .flat_map(|r| r[start..start + len].iter().cloned())
            .collect();
        PointMatrix {
            rows: self.rows,
            dim: len,
            data,
        }
    }

    /// Horizontal concatenation of matrices with equal row count.
    pub fn hstack(parts: &[&PointMatrix]) -> Result<PointMatrix> {
        let rows = parts.first().map(|p| p.rows).unwrap_or(0);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(PsdError::InvalidArgument(
                "hstack of point matrices with different row counts".into(),
            ));
        }
        let dim = parts.iter().map(|p| p.dim).sum();
        let mut data = Vec::with_capacity(rows * dim);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        PointMatrix::new(rows, dim, data)
    }
}

/// Axis-aligned box `prod_t [a_t, b_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypercube {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Hypercube {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len(), "hypercube bounds")?;
        if lower.is_empty() {
            return Err(PsdError::InvalidArgument("empty hypercube".into()));
        }
        for (a, b) in lower.iter().zip(&upper) {
            if a.is_nan() || b.is_nan() || a >= b {
                return Err(PsdError::InvalidArgument(format!(
                    "hypercube needs lower < upper on every axis, got [{a}, {b}]"
                )));
            }
        }
        Ok(Hypercube { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Hypercube::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }
}

/// `sum_t eta_t (x_t - y_t)^2` without bounds checks.
#[inline]
pub(crate) fn weighted_sq_dist(x: &[f64], y: &[f64], eta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((a, b), e) in x.iter().zip(y).zip(eta) {
        let diff = a - b;
        acc += e * diff * diff;
    }
    acc
}

#[inline]
pub(crate) fn kernel_unchecked(x: &[f64], y: &[f64], eta: &[f64]) -> f64 {
    (-weighted_sq_dist(x, y, eta)).exp()
}

/// Gaussian kernel `k_eta(x, x2)`.
pub fn kernel(x: &[f64], x2: &[f64], eta: &Precision) -> Result<f64> {
    check_dim(eta.dim(), x.len(), "kernel: first point")?;
    check_dim(eta.dim(), x2.len(), "kernel: second point")?;
    Ok(kernel_unchecked(x, x2, eta.as_slice()))
}

/// Gram matrix `K[i, j] = k_eta(x_i, x2_j)`.
pub fn gram(x: &PointMatrix, x2: &PointMatrix, eta: &Precision) -> Result<DMatrix<f64>> {
    check_dim(eta.dim(), x.dim(), "gram: first point set")?;
    check_dim(eta.dim(), x2.dim(), "gram: second point set")?;
    Ok(gram_unchecked(x, x2, eta.as_slice()))
}

pub(crate) fn gram_unchecked(x: &PointMatrix, x2: &PointMatrix, eta: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.rows(), x2.rows(), |i, j| {
        kernel_unchecked(x.row(i), x2.row(j), eta)
    })
}

/// Symmetric Gram matrix of a point set with itself; the diagonal is exactly 1.
pub(crate) fn gram_sym(x: &PointMatrix, eta: &[f64]) -> DMatrix<f64> {
    let n = x.rows();
    let mut k = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in 0..i {
            let v = kernel_unchecked(x.row(i), x.row(j), eta);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Kernel vector `(k_eta(x_i, point))_i`.
pub(crate) fn kernel_column(x: &PointMatrix, point: &[f64], eta: &[f64]) -> Vec<f64> {
    x.iter_rows()
        .map(|row| kernel_unchecked(row, point, eta))
        .collect()
}

/// `c_eta = int k_eta(0, x) dx = pi^{d/2} prod_t eta_t^{-1/2}`.
pub fn gaussian_volume(eta: &Precision) -> f64 {
    eta.as_slice().iter().map(|e| (PI / e).sqrt()).product()
}

/// Gaussian product identity
/// `k_{eta1}(x, x1) k_{eta2}(x, x2) = cross * k_{eta1+eta2}(x, center)`.
///
/// Returns `(center, cross)` with `center = (eta1 x1 + eta2 x2) / (eta1 + eta2)`
/// and `cross = k_{eta1 eta2 / (eta1 + eta2)}(x1, x2)`.
pub fn product_identity(
    x1: &[f64],
    x2: &[f64],
    eta1: &Precision,
    eta2: &Precision,
) -> Result<(Vec<f64>, f64)> {
    let d = eta1.dim();
    check_dim(d, eta2.dim(), "product identity: precisions")?;
    check_dim(d, x1.len(), "product identity: first point")?;
    check_dim(d, x2.len(), "product identity: second point")?;
    let center = weighted_center(x1, x2, eta1.as_slice(), eta2.as_slice());
    let cross = kernel_unchecked(x1, x2, eta1.harmonic(eta2).as_slice());
    Ok((center, cross))
}

pub(crate) fn weighted_center(x1: &[f64], x2: &[f64], eta1: &[f64], eta2: &[f64]) -> Vec<f64> {
    x1.iter()
        .zip(x2)
        .zip(eta1.iter().zip(eta2))
        .map(|((a, b), (e1, e2))| (e1 * a + e2 * b) / (e1 + e2))
        .collect()
}

/// `erf(hi) - erf(lo)` for `lo <= hi`, using `erfc` in the tails so that two
/// nearly equal values of erf do not cancel.
pub(crate) fn erf_diff(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        libm::erfc(lo) - libm::erfc(hi)
    } else if hi <= 0.0 {
        libm::erfc(-hi) - libm::erfc(-lo)
    } else {
        libm::erf(hi) - libm::erf(lo)
    }
}

/// `int_H k_eta(center, x) dx`, evaluated per axis through the error function:
///
/// ```text
/// prod_t sqrt(pi / eta_t) * (1/2) * [erf(sqrt(eta_t)(b_t - c_t)) - erf(sqrt(eta_t)(a_t - c_t))]
/// ```
pub fn hypercube_gauss_integral(center: &[f64], eta: &Precision, cube: &Hypercube) -> Result<f64> {
    check_dim(eta.dim(), center.len(), "hypercube integral: center")?;
    check_dim(eta.dim(), cube.dim(), "hypercube integral: domain")?;
    Ok(hypercube_gauss_integral_unchecked(
        center,
        eta.as_slice(),
        cube,
    ))
}

pub(crate) fn hypercube_gauss_integral_unchecked(center: &[f64], eta: &[f64], cube: &Hypercube) -> f64 {
    let mut acc = 1.0;
    for t in 0..center.len() {
        let s = eta[t].sqrt();
        let lo = s * (cube.lower[t] - center[t]);
        let hi = s * (cube.upper[t] - center[t]);
        acc *= 0.5 * (PI / eta[t]).sqrt() * erf_diff(lo, hi);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eta(v: &[f64]) -> Precision {
        Precision::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel(&[0.3, -1.0], &[0.3, -1.0], &eta(&[2.0, 5.0])).unwrap(), 1.0);
        assert_relative_eq!(kernel(&[0.0], &[2.0], &eta(&[1.0])).unwrap(), (-4.0f64).exp());
        assert_relative_eq!(
            kernel(&[0.0, 0.0], &[1.0, 1.0], &eta(&[1.0, 2.0])).unwrap(),
            (-3.0f64).exp()
        );
        assert!(matches!(
            kernel(&[0.0], &[1.0, 1.0], &eta(&[1.0])),
            Err(PsdError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tiny_kernel_values_are_not_flushed() {
        let v = kernel(&[0.0], &[25.0], &eta(&[1.0])).unwrap();
        assert!(v > 0.0);
        assert_relative_eq!(v, (-625.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn precision_rejects_nonpositive() {
        assert!(Precision::new(vec![1.0, 0.0]).is_err());
        assert!(Precision::new(vec![]).is_err());
        assert!(Precision::new(vec![f64::NAN]).is_err());
        assert_eq!(eta(&[1.0, 7.0, 3.0]).max(), 7.0);
    }

    #[test]
    fn gram_examples() {
        let single = PointMatrix::from_column(&[0.4]).unwrap();
        assert_eq!(gram(&single, &single, &eta(&[3.0])).unwrap()[(0, 0)], 1.0);

        let x = PointMatrix::from_column(&[0.0, 2.0]).unwrap();
        let k = gram(&x, &x, &eta(&[0.5])).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert_relative_eq!(k[(0, 1)], (-2.0f64).exp());
        assert_relative_eq!(k[(1, 0)], (-2.0f64).exp());

        let a = PointMatrix::from_rows(&[vec![0.0, 1.0], vec![0.5, -0.2], vec![2.0, 2.0]]).unwrap();
        let b = PointMatrix::from_rows(&[vec![1.0, 1.0], vec![-0.3, 0.1]]).unwrap();
        let e = eta(&[0.7, 1.3]);
        let k = gram(&a, &b, &e).unwrap();
        assert_eq!(k.shape(), (3, 2));
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(k[(i, j)], kernel(a.row(i), b.row(j), &e).unwrap());
            }
        }
    }

    #[test]
    fn volume_examples() {
        assert_relative_eq!(gaussian_volume(&eta(&[PI])), 1.0, max_relative = 1e-15);
        assert_relative_eq!(gaussian_volume(&eta(&[2.0])), (PI / 2.0).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(gaussian_volume(&eta(&[1.0, 4.0])), PI / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn product_identity_examples() {
        let e = eta(&[1.0]);
        let (c, w) = product_identity(&[0.7], &[0.7], &e, &e).unwrap();
        assert_relative_eq!(c[0], 0.7);
        assert_eq!(w, 1.0);

        let (c, w) = product_identity(&[0.0], &[2.0], &e, &e).unwrap();
        assert_relative_eq!(c[0], 1.0);
        assert_relative_eq!(w, (-2.0f64).exp());
        for x in [0.0, 1.0, 3.0] {
            let lhs = kernel(&[x], &[0.0], &e).unwrap() * kernel(&[x], &[2.0], &e).unwrap();
            let rhs = w * kernel(&[x], &c, &eta(&[2.0])).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
        }
    }

    #[test]
    fn hypercube_limits() {
        let e = eta(&[1.3, 0.4]);
        let big = Hypercube::new(vec![-200.0, -200.0], vec![200.0, 200.0]).unwrap();
        let v = hypercube_gauss_integral(&[0.0, 0.0], &e, &big).unwrap();
        assert_relative_eq!(v, gaussian_volume(&e), max_relative = 1e-12);

        let half = Hypercube::new(vec![0.0], vec![100.0]).unwrap();
        let v = hypercube_gauss_integral(&[0.0], &eta(&[1.0]), &half).unwrap();
        assert_relative_eq!(v, PI.sqrt() / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn hypercube_far_tail_keeps_precision() {
        // both bounds deep in the right tail: erf(hi) - erf(lo) would cancel to 0
        let cube = Hypercube::new(vec![8.0], vec![9.0]).unwrap();
        let v = hypercube_gauss_integral(&[0.0], &eta(&[1.0]), &cube).unwrap();
        let expected = 0.5 * PI.sqrt() * (libm::erfc(8.0) - libm::erfc(9.0));
        assert!(v > 0.0);
        assert_relative_eq!(v, expected, max_relative = 1e-12);
    }

    #[test]
    fn hypercube_rejects_bad_bounds() {
        assert!(Hypercube::new(vec![1.0], vec![1.0]).is_err());
        assert!(Hypercube::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }
}
