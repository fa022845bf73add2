//! The Gaussian PSD model and its closed-form algebra.
//!
//! A model is the triple `(A, X, eta)` describing
//!
//! ```text
//! f(x) = sum_ij A_ij k_eta(x_i, x) k_eta(x_j, x)
//! ```
//!
//! with `A` positive semidefinite, so `f >= 0` everywhere. Coordinates are
//! grouped into named blocks ([`VariableSplit`]) so that joint models can be
//! partially evaluated, marginalized and multiplied per variable.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{check_dim, PsdError, Result};
use crate::kernel::{
    gaussian_volume, gram_sym, hypercube_gauss_integral_unchecked, kernel_column,
    kernel_unchecked, weighted_center, Hypercube, PointMatrix, Precision,
};
use crate::linalg::{block_sum, kron_weighted, min_eigenvalue, psd_tolerance, symmetrize};

/// Integration domain for sums over a variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    FullSpace,
    Hypercube(Hypercube),
}

impl Domain {
    fn check(&self, dim: usize) -> Result<()> {
        match self {
            Domain::FullSpace => Ok(()),
            Domain::Hypercube(h) => check_dim(dim, h.dim(), "integration domain"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub width: usize,
}

/// Ordered partition of the model coordinates into named blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSplit {
    blocks: Vec<Block>,
}

impl VariableSplit {
    pub fn new<S: Into<String>>(blocks: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let blocks: Vec<Block> = blocks
            .into_iter()
            .map(|(name, width)| Block {
                name: name.into(),
                width,
            })
            .collect();
        if blocks.is_empty() {
            return Err(PsdError::InvalidArgument("split needs at least one block".into()));
        }
        let mut seen = HashSet::new();
        for b in &blocks {
            if b.width == 0 {
                return Err(PsdError::InvalidArgument(format!(
                    "block `{}` has zero width",
                    b.name
                )));
            }
            if !seen.insert(b.name.as_str()) {
                return Err(PsdError::InvalidArgument(format!(
                    "duplicate block name `{}`",
                    b.name
                )));
            }
        }
        Ok(VariableSplit { blocks })
    }

    /// A single block named `x` covering all coordinates.
    pub fn single(dim: usize) -> Self {
        VariableSplit {
            blocks: vec![Block {
                name: "x".into(),
                width: dim,
            }],
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.width).sum()
    }

    /// `(offset, width)` of the named block.
    pub fn locate(&self, name: &str) -> Result<(usize, usize)> {
        let mut offset = 0;
        for b in &self.blocks {
            if b.name == name {
                return Ok((offset, b.width));
            }
            offset += b.width;
        }
        Err(PsdError::UnknownBlock(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.blocks.iter().any(|b| b.name == name)
    }

    fn without(&self, name: &str) -> Vec<Block> {
        self.blocks.iter().filter(|b| b.name != name).cloned().collect()
    }

    /// `(offset, width)` ranges of all blocks except `name`, in order.
    fn ranges_without(&self, name: &str) -> Vec<(usize, usize)> {
        let mut offset = 0;
        let mut out = Vec::new();
        for b in &self.blocks {
            if b.name != name {
                out.push((offset, b.width));
            }
            offset += b.width;
        }
        out
    }

    pub fn renamed(&self, from: &str, to: &str) -> Result<VariableSplit> {
        self.locate(from)?;
        VariableSplit::new(self.blocks.iter().map(|b| {
            let name = if b.name == from { to.to_string() } else { b.name.clone() };
            (name, b.width)
        }))
    }
}

/// Gaussian PSD model `f(x; A, X, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPsdModel {
    coeffs: DMatrix<f64>,
    points: PointMatrix,
    precision: Precision,
    split: VariableSplit,
}

impl GaussianPsdModel {
    /// Builds a model, symmetrizing `coeffs` and rejecting matrices whose
    /// smallest eigenvalue is below `-1e-10 (trace + 1)`.
    pub fn new(
        coeffs: DMatrix<f64>,
        points: PointMatrix,
        precision: Precision,
        split: Option<VariableSplit>,
    ) -> Result<Self> {
        let model = Self::from_parts(coeffs, points, precision, split)?;
        let tol = psd_tolerance(&model.coeffs);
        let min = min_eigenvalue(&model.coeffs);
        if !(min >= -tol) {
            return Err(PsdError::NotPsd {
                min_eigenvalue: min,
                tolerance: tol,
            });
        }
        Ok(model)
    }

    /// Shape checks and symmetrization only. Used for outputs of operations
    /// that preserve the PSD cone analytically.
    pub(crate) fn from_parts(
        coeffs: DMatrix<f64>,
        points: PointMatrix,
        precision: Precision,
        split: Option<VariableSplit>,
    ) -> Result<Self> {
        let n = points.rows();
        let d = points.dim();
        check_dim(n, coeffs.nrows(), "coefficient rows vs base points")?;
        check_dim(n, coeffs.ncols(), "coefficient columns vs base points")?;
        check_dim(d, precision.dim(), "precision vs point dimension")?;
        let split = split.unwrap_or_else(|| VariableSplit::single(d));
        check_dim(d, split.dim(), "split widths vs point dimension")?;
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(PsdError::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(GaussianPsdModel {
            coeffs: symmetrize(&coeffs),
            points,
            precision,
            split,
        })
    }

    /// Mixture `sum_i a_i k_eta(x_i, x)` written as the PSD model
    /// `(diag(a), X, eta / 2)`.
    pub fn from_mixture(weights: &[f64], points: PointMatrix, eta: &Precision) -> Result<Self> {
        check_dim(points.rows(), weights.len(), "mixture weights vs points")?;
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(PsdError::InvalidArgument(format!(
                "mixture weights must be finite and >= 0, got {w}"
            )));
        }
        let coeffs = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights));
        Self::from_parts(coeffs, points, eta.scaled(0.5), None)
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn points(&self) -> &PointMatrix {
        &self.points
    }

    pub fn precision(&self) -> &Precision {
        &self.precision
    }

    pub fn split(&self) -> &VariableSplit {
        &self.split
    }

    /// Number of base points.
    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.coeffs)
    }

    /// Whether the coefficients pass the PSD invariant.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -psd_tolerance(&self.coeffs)
    }

    pub fn with_split(&self, split: VariableSplit) -> Result<Self> {
        check_dim(self.dim(), split.dim(), "split widths vs point dimension")?;
        Ok(GaussianPsdModel {
            split,
            ..self.clone()
        })
    }

    pub fn rename_block(&self, from: &str, to: &str) -> Result<Self> {
        self.with_split(self.split.renamed(from, to)?)
    }

    /// Model with coefficients multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(PsdError::InvalidArgument(format!(
                "scale factor must be finite and >= 0, got {factor}"
            )));
        }
        Ok(GaussianPsdModel {
            coeffs: &self.coeffs * factor,
            ..self.clone()
        })
    }

    /// `f(x) = K_{X,x}^T A K_{X,x}`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len(), "evaluation point")?;
        let k = kernel_column(&self.points, x, self.precision.as_slice());
        Ok(quadratic_form(&self.coeffs, &k))
    }

    /// Fixes the coordinates of `block` to `y0`:
    /// `B = A o (k k^T)` with `k_i = k_{eta_block}(y_i, y0)`.
    pub fn partial_eval(&self, block: &str, y0: &[f64]) -> Result<Self> {
        let (offset, width) = self.split.locate(block)?;
        check_dim(width, y0.len(), "partial evaluation point")?;
        if self.split.blocks().len() == 1 {
            return Err(PsdError::InvalidArgument(
                "partial evaluation of the only block; use eval".into(),
            ));
        }
        let y = self.points.columns(offset, width);
        let eta = self.precision.slice(offset, width);
        let k = kernel_column(&y, y0, eta.as_slice());
        let n = self.n();
        let coeffs = DMatrix::from_fn(n, n, |i, j| self.coeffs[(i, j)] * k[i] * k[j]);
        let (points, precision) = self.keep_ranges(&self.split.ranges_without(block));
        let split = VariableSplit {
            blocks: self.split.without(block),
        };
        Self::from_parts(coeffs, points, precision, Some(split))
    }

    /// `int_D f(x) dx`; `c_{2 eta} Tr(A K_{X,X,eta/2})` over the full space.
    pub fn integrate(&self, domain: &Domain) -> Result<f64> {
        domain.check(self.dim())?;
        let mass = pair_mass(&self.points, &self.precision, domain);
        Ok(self.coeffs.component_mul(&mass).sum())
    }

    /// Divides the coefficients by the integral over `domain`.
    pub fn normalize(&self, domain: &Domain) -> Result<Self> {
        let z = self.integrate(domain)?;
        if !(z > 1e-300) {
            return Err(PsdError::ZeroMass { mass: z });
        }
        Ok(GaussianPsdModel {
            coeffs: &self.coeffs / z,
            ..self.clone()
        })
    }

    /// Integrates out `block` (over the full space or a hypercube in that
    /// block's coordinates): `B = A o M` with `M_ij = int k(x_i,x)k(x_j,x) dx`.
    pub fn marginalize(&self, block: &str, domain: &Domain) -> Result<Self> {
        let (offset, width) = self.split.locate(block)?;
        if self.split.blocks().len() == 1 {
            return Err(PsdError::InvalidArgument(
                "cannot marginalize every block; use integrate".into(),
            ));
        }
        domain.check(width)?;
        let y = self.points.columns(offset, width);
        let eta = self.precision.slice(offset, width);
        let mass = pair_mass(&y, &eta, domain);
        let coeffs = self.coeffs.component_mul(&mass);
        let (points, precision) = self.keep_ranges(&self.split.ranges_without(block));
        let split = VariableSplit {
            blocks: self.split.without(block),
        };
        Self::from_parts(coeffs, points, precision, Some(split))
    }

    /// Pointwise product with `other`. Blocks with the same name are shared
    /// and must have equal widths; the result orders coordinates as
    /// (blocks only in `self`, shared blocks, blocks only in `other`) and has
    /// `n * m` base points indexed `i * m + l`.
    pub fn multiply(&self, other: &GaussianPsdModel) -> Result<Self> {
        let mut left_only = Vec::new();
        let mut shared = Vec::new();
        let mut offset = 0;
        for b in self.split.blocks() {
            if other.split.contains(&b.name) {
                let (o_off, o_width) = other.split.locate(&b.name)?;
                if o_width != b.width {
                    return Err(PsdError::BlockWidthMismatch {
                        name: b.name.clone(),
                        left: b.width,
                        right: o_width,
                    });
                }
                shared.push((b.clone(), offset, o_off));
            } else {
                left_only.push((b.clone(), offset));
            }
            offset += b.width;
        }
        let mut right_only = Vec::new();
        let mut offset = 0;
        for b in other.split.blocks() {
            if !self.split.contains(&b.name) {
                right_only.push((b.clone(), offset));
            }
            offset += b.width;
        }

        let (n, m) = (self.n(), other.n());
        let eta_l = self.precision.as_slice();
        let eta_r = other.precision.as_slice();

        // cross-term weights v_{il} and the combined precisions per block
        let mut weights = vec![1.0; n * m];
        for (b, lo, ro) in &shared {
            let el = &eta_l[*lo..lo + b.width];
            let er = &eta_r[*ro..ro + b.width];
            let harmonic: Vec<f64> = el.iter().zip(er).map(|(a, c)| a * c / (a + c)).collect();
            for i in 0..n {
                let yi = &self.points.row(i)[*lo..lo + b.width];
                for l in 0..m {
                    let yl = &other.points.row(l)[*ro..ro + b.width];
                    weights[i * m + l] *= kernel_unchecked(yi, yl, &harmonic);
                }
            }
        }

        let dim: usize = self.dim() + other.dim()
            - shared.iter().map(|(b, _, _)| b.width).sum::<usize>();
        let mut data = Vec::with_capacity(n * m * dim);
        for i in 0..n {
            let xi = self.points.row(i);
            for l in 0..m {
                let zl = other.points.row(l);
                for (b, lo) in &left_only {
                    data.extend_from_slice(&xi[*lo..lo + b.width]);
                }
                for (b, lo, ro) in &shared {
                    data.extend(weighted_center(
                        &xi[*lo..lo + b.width],
                        &zl[*ro..ro + b.width],
                        &eta_l[*lo..lo + b.width],
                        &eta_r[*ro..ro + b.width],
                    ));
                }
                for (b, ro) in &right_only {
                    data.extend_from_slice(&zl[*ro..ro + b.width]);
                }
            }
        }

        let mut eta = Vec::with_capacity(dim);
        let mut blocks = Vec::new();
        for (b, lo) in &left_only {
            eta.extend_from_slice(&eta_l[*lo..lo + b.width]);
            blocks.push((b.name.clone(), b.width));
        }
        for (b, lo, ro) in &shared {
            eta.extend(
                eta_l[*lo..lo + b.width]
                    .iter()
                    .zip(&eta_r[*ro..ro + b.width])
                    .map(|(a, c)| a + c),
            );
            blocks.push((b.name.clone(), b.width));
        }
        for (b, ro) in &right_only {
            eta.extend_from_slice(&eta_r[*ro..ro + b.width]);
            blocks.push((b.name.clone(), b.width));
        }

        let coeffs = kron_weighted(&self.coeffs, &other.coeffs, &weights);
        Self::from_parts(
            coeffs,
            PointMatrix::new(n * m, dim, data)?,
            Precision::new(eta)?,
            Some(VariableSplit::new(blocks)?),
        )
    }

    /// Collapses base points of the form `X kron 1_group` (each row repeated
    /// `group` times consecutively) by summing the matching coefficient
    /// blocks. The repetition pattern is verified numerically.
    pub fn reduce(&self, group: usize) -> Result<Self> {
        if group == 0 || !self.n().is_multiple_of(group) {
            return Err(PsdError::PatternMismatch { group });
        }
        let scale = 1.0
            + self
                .points
                .as_slice()
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let tol = 1e-12 * scale;
        let reduced_n = self.n() / group;
        let mut data = Vec::with_capacity(reduced_n * self.dim());
        for i in 0..reduced_n {
            let head = self.points.row(i * group);
            for l in 1..group {
                let row = self.points.row(i * group + l);
                if head.iter().zip(row).any(|(a, b)| (a - b).abs() > tol) {
                    return Err(PsdError::PatternMismatch { group });
                }
            }
            data.extend_from_slice(head);
        }
        Self::from_parts(
            block_sum(&self.coeffs, group),
            PointMatrix::new(reduced_n, self.dim(), data)?,
            self.precision.clone(),
            Some(self.split.clone()),
        )
    }

    fn keep_ranges(&self, ranges: &[(usize, usize)]) -> (PointMatrix, Precision) {
        let parts: Vec<PointMatrix> = ranges
            .iter()
            .map(|(o, w)| self.points.columns(*o, *w))
            .collect();
        let refs: Vec<&PointMatrix> = parts.iter().collect();
        let points = PointMatrix::hstack(&refs).expect("equal row counts");
        let precs: Vec<Precision> = ranges
            .iter()
            .map(|(o, w)| self.precision.slice(*o, *w))
            .collect();
        let prec_refs: Vec<&Precision> = precs.iter().collect();
        (points, Precision::concat(&prec_refs))
    }
}

/// `int tau(x_plus, x) p(x) dx`: multiply, marginalize the blocks of `state`
/// and reduce back to the transition's base points.
pub fn markov_transition(
    transition: &GaussianPsdModel,
    state: &GaussianPsdModel,
    domain: &Domain,
) -> Result<GaussianPsdModel> {
    for b in state.split().blocks() {
        let (_, width) = transition.split().locate(&b.name)?;
        if width != b.width {
            return Err(PsdError::BlockWidthMismatch {
                name: b.name.clone(),
                left: width,
                right: b.width,
            });
        }
    }
    if transition.split().blocks().len() <= state.split().blocks().len() {
        return Err(PsdError::InvalidArgument(
            "transition must have blocks beyond the state's".into(),
        ));
    }
    let mut joint = transition.multiply(state)?;
    for b in state.split().blocks() {
        joint = joint.marginalize(&b.name, domain)?;
    }
    joint.reduce(state.n())
}

/// `v^T A v`.
pub(crate) fn quadratic_form(a: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += a[(i, j)] * v[i];
        }
        acc += col * v[j];
    }
    acc
}

/// `M_ij = int_D k_eta(x_i, x) k_eta(x_j, x) dx = k_{eta/2}(x_i, x_j) int_D k_{2 eta}(m_ij, x) dx`.
pub(crate) fn pair_mass(points: &PointMatrix, eta: &Precision, domain: &Domain) -> DMatrix<f64> {
    let half = eta.scaled(0.5);
    let mut k = gram_sym(points, half.as_slice());
    match domain {
        Domain::FullSpace => k *= gaussian_volume(&eta.scaled(2.0)),
        Domain::Hypercube(cube) => {
            let twice = eta.scaled(2.0);
            let n = points.rows();
            for i in 0..n {
                for j in 0..=i {
                    let mid: Vec<f64> = points
                        .row(i)
                        .iter()
                        .zip(points.row(j))
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    let g = hypercube_gauss_integral_unchecked(&mid, twice.as_slice(), cube);
                    k[(i, j)] *= g;
                    if i != j {
                        k[(j, i)] *= g;
                    }
                }
            }
        }
    }
    k
}
