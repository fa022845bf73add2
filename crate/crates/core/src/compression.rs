//! Nyström compression onto a smaller set of base points.
//!
//! `A~ = B A B^T` with `B = K_{X~,X~}^{-1} K_{X~,X}` projects every feature
//! `k(x_i, .)` onto the span of `{k(x~_j, .)}`, so the compressed model is
//! PSD by construction and exact when `X` lies in the span.

use nalgebra::{Cholesky, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, PsdError, Result};
use crate::kernel::{gram_sym, gram_unchecked, Hypercube, PointMatrix};
use crate::model::GaussianPsdModel;
use crate::oracle::halton_points;

/// Gram matrices whose (jittered) condition estimate exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetPoints {
    Provided(PointMatrix),
    UniformRandom {
        count: usize,
        domain: Hypercube,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionPlan {
    pub target_points: TargetPoints,
    /// Added to the diagonal of `K_{X~,X~}` before factorization.
    pub jitter: f64,
}

impl CompressionPlan {
    pub fn provided(points: PointMatrix) -> Self {
        CompressionPlan {
            target_points: TargetPoints::Provided(points),
            jitter: 1e-10,
        }
    }

    pub fn uniform(count: usize, domain: Hypercube, seed: u64) -> Self {
        CompressionPlan {
            target_points: TargetPoints::UniformRandom {
                count,
                domain,
                seed,
            },
            jitter: 1e-10,
        }
    }

    fn points(&self, dim: usize) -> Result<PointMatrix> {
        match &self.target_points {
            TargetPoints::Provided(p) => {
                check_dim(dim, p.dim(), "compression targets vs model")?;
                if p.rows() == 0 {
                    return Err(PsdError::InvalidArgument("need at least one target point".into()));
                }
                Ok(p.clone())
            }
            TargetPoints::UniformRandom {
                count,
                domain,
                seed,
            } => {
                check_dim(dim, domain.dim(), "compression domain vs model")?;
                if *count == 0 {
                    return Err(PsdError::InvalidArgument("need at least one target point".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut data = Vec::with_capacity(count * dim);
                for _ in 0..*count {
                    for t in 0..dim {
                        let (lo, hi) = (domain.lower()[t], domain.upper()[t]);
                        data.push(lo + rng.gen::<f64>() * (hi - lo));
                    }
                }
                PointMatrix::new(*count, dim, data)
            }
        }
    }
}

/// Compresses `model` onto the plan's target points (same precision and split).
pub fn compress(model: &GaussianPsdModel, plan: &CompressionPlan) -> Result<GaussianPsdModel> {
    if !(plan.jitter >= 0.0) {
        return Err(PsdError::InvalidArgument("jitter must be >= 0".into()));
    }
    let targets = plan.points(model.dim())?;
    let eta = model.precision().as_slice();
    let mut k_tt = gram_sym(&targets, eta);
    for i in 0..targets.rows() {
        k_tt[(i, i)] += plan.jitter;
    }
    let eig = SymmetricEigen::new(k_tt.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(PsdError::SingularGram { condition });
    }
    let chol = Cholesky::new(k_tt).ok_or(PsdError::SingularGram { condition })?;
    let b = chol.solve(&gram_unchecked(&targets, model.points(), eta));
    let coeffs = &b * model.coeffs() * b.transpose();
    GaussianPsdModel::from_parts(coeffs, targets, model.precision().clone(), Some(model.split().clone()))
}

/// `compress(m1 * m2, plan)`.
pub fn compress_product(
    m1: &GaussianPsdModel,
    m2: &GaussianPsdModel,
    plan: &CompressionPlan,
) -> Result<GaussianPsdModel> {
    compress(&m1.multiply(m2)?, plan)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionError {
    /// `max |f - f~|` over the probes.
    pub max_abs: f64,
    /// Smallest `eps >= 0` with `|f - f~| <= eps^2 + eps sqrt(f)` at every probe.
    pub mixed_bound: f64,
}

/// Probe points: a tensor grid with `per_axis` nodes (default 201) for
/// `d <= 2`, otherwise `count` Halton points (default 10^4).
pub fn probe_points(domain: &Hypercube, count: Option<usize>) -> PointMatrix {
    let d = domain.dim();
    if d <= 2 {
        let per_axis = count.unwrap_or(201).max(2);
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|t| {
                let (lo, hi) = (domain.lower()[t], domain.upper()[t]);
                (0..per_axis)
                    .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                    .collect()
            })
            .collect();
        let total = per_axis.pow(d as u32);
        let mut data = Vec::with_capacity(total * d);
        for flat in 0..total {
            let mut rest = flat;
            for axis in &axes {
                data.push(axis[rest % per_axis]);
                rest /= per_axis;
            }
        }
        PointMatrix::new(total, d, data).expect("consistent shape")
    } else {
        halton_points(count.unwrap_or(10_000), domain)
    }
}

/// Pointwise error statistics of `compressed` against `original` on `domain`.
pub fn compression_error(
    original: &GaussianPsdModel,
    compressed: &GaussianPsdModel,
    domain: &Hypercube,
    probes: Option<usize>,
) -> Result<CompressionError> {
    check_dim(original.dim(), compressed.dim(), "compressed vs original")?;
    check_dim(original.dim(), domain.dim(), "probe domain")?;
    let mut max_abs = 0.0f64;
    let mut mixed = 0.0f64;
    for x in probe_points(domain, probes).iter_rows() {
        let f = original.eval(x)?;
        let delta = (f - compressed.eval(x)?).abs();
        let s = f.max(0.0).sqrt();
        max_abs = max_abs.max(delta);
        // positive root of eps^2 + s eps - delta, in the cancellation-free form
        if delta > 0.0 {
            mixed = mixed.max(2.0 * delta / (s + (s * s + 4.0 * delta).sqrt()));
        }
    }
    Ok(CompressionError {
        max_abs,
        mixed_bound: mixed,
    })
}
