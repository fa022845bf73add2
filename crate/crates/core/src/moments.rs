//! Expectations, conditioning and decision-theoretic minimization.
//!
//! For `p = f(.; A, X, eta)` and any `g` whose Gaussian-smoothed integral
//! `c_{g,eta}(z) = int g(x) exp(-(x-z)^T diag(eta) (x-z)) dx` is known,
//!
//! ```text
//! E_p[g] = Tr((A o K_{X,X,eta/2}) G),   G_ij = c_{g,2 eta}((x_i + x_j) / 2).
//! ```
//!
//! The smoothed integrals for `x`, `x x^T` and `exp(i w^T x)` are closed
//! forms of a Gaussian with covariance `diag(1 / (2 eta))` (at precision `eta`).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_dim, PsdError, Result};
use crate::kernel::{gaussian_volume, gram_sym, Precision};
use crate::model::{Domain, GaussianPsdModel};

/// A function `g` represented through its smoothed integral `c_{g,eta}`.
///
/// Implementations are called from pure functions and must be safe to call
/// concurrently.
pub trait SmoothedIntegrand: Send + Sync {
    /// Length of the vector returned by [`SmoothedIntegrand::smoothed`].
    fn arity(&self) -> usize;

    /// `c_{g,eta}(z) = int g(x) exp(-(x-z)^T diag(eta) (x-z)) dx`.
    fn smoothed(&self, z: &[f64], eta: &Precision) -> Vec<f64>;
}

/// `g = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct One;

impl SmoothedIntegrand for One {
    fn arity(&self) -> usize {
        1
    }

    fn smoothed(&self, _z: &[f64], eta: &Precision) -> Vec<f64> {
        vec![gaussian_volume(eta)]
    }
}

/// `g(x) = x`.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub dim: usize,
}

impl SmoothedIntegrand for Identity {
    fn arity(&self) -> usize {
        self.dim
    }

    fn smoothed(&self, z: &[f64], eta: &Precision) -> Vec<f64> {
        let c = gaussian_volume(eta);
        z.iter().map(|v| c * v).collect()
    }
}

/// `g(x) = x x^T`, flattened row-major.
#[derive(Debug, Clone, Copy)]
pub struct SecondMoment {
    pub dim: usize,
}

impl SmoothedIntegrand for SecondMoment {
    fn arity(&self) -> usize {
        self.dim * self.dim
    }

    fn smoothed(&self, z: &[f64], eta: &Precision) -> Vec<f64> {
        let c = gaussian_volume(eta);
        let d = self.dim;
        let e = eta.as_slice();
        let mut out = vec![0.0; d * d];
        for s in 0..d {
            for t in 0..d {
                let var = if s == t { 0.5 / e[s] } else { 0.0 };
                out[s * d + t] = c * (z[s] * z[t] + var);
            }
        }
        out
    }
}

/// `g(x) = exp(i w^T x)` as `(real part, imaginary part)`.
#[derive(Debug, Clone)]
pub struct Fourier {
    pub omega: Vec<f64>,
}

impl SmoothedIntegrand for Fourier {
    fn arity(&self) -> usize {
        2
    }

    fn smoothed(&self, z: &[f64], eta: &Precision) -> Vec<f64> {
        let c = gaussian_volume(eta);
        let damping: f64 = self
            .omega
            .iter()
            .zip(eta.as_slice())
            .map(|(w, e)| w * w / (4.0 * e))
            .sum();
        let phase: f64 = self.omega.iter().zip(z).map(|(w, v)| w * v).sum();
        let r = c * (-damping).exp();
        vec![r * phase.cos(), r * phase.sin()]
    }
}

/// Integrand given by a closure.
pub struct FnIntegrand<F> {
    arity: usize,
    f: F,
}

impl<F> FnIntegrand<F>
where
    F: Fn(&[f64], &Precision) -> Vec<f64> + Send + Sync,
{
    pub fn new(arity: usize, f: F) -> Self {
        FnIntegrand { arity, f }
    }
}

impl<F> SmoothedIntegrand for FnIntegrand<F>
where
    F: Fn(&[f64], &Precision) -> Vec<f64> + Send + Sync,
{
    fn arity(&self) -> usize {
        self.arity
    }

    fn smoothed(&self, z: &[f64], eta: &Precision) -> Vec<f64> {
        (self.f)(z, eta)
    }
}

/// Pieces of the trace formula that do not depend on `g`.
struct TraceForm {
    weights: DMatrix<f64>,
    mids: Vec<Vec<f64>>,
    eta2: Precision,
}

impl TraceForm {
    fn new(p: &GaussianPsdModel) -> Self {
        let n = p.n();
        let k = gram_sym(p.points(), p.precision().scaled(0.5).as_slice());
        let weights = p.coeffs().component_mul(&k);
        let mut mids = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                mids.push(
                    p.points()
                        .row(i)
                        .iter()
                        .zip(p.points().row(j))
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect(),
                );
            }
        }
        TraceForm {
            weights,
            mids,
            eta2: p.precision().scaled(2.0),
        }
    }

    fn apply(&self, g: &dyn SmoothedIntegrand) -> Vec<f64> {
        let n = self.weights.nrows();
        let mut acc = vec![0.0; g.arity()];
        let mut idx = 0;
        for i in 0..n {
            for j in 0..=i {
                let w = if i == j {
                    self.weights[(i, j)]
                } else {
                    2.0 * self.weights[(i, j)]
                };
                let c = g.smoothed(&self.mids[idx], &self.eta2);
                for (a, v) in acc.iter_mut().zip(c) {
                    *a += w * v;
                }
                idx += 1;
            }
        }
        acc
    }
}

/// `int g(x) p(x) dx` over the full space (no normalization applied).
pub fn expectation(p: &GaussianPsdModel, g: &dyn SmoothedIntegrand) -> Result<Vec<f64>> {
    if g.arity() == 0 {
        return Err(PsdError::InvalidArgument("integrand arity must be >= 1".into()));
    }
    Ok(TraceForm::new(p).apply(g))
}

/// A moment of the normalized model, flagging when the input was not
/// normalized and had to be rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Moment<T> {
    pub value: T,
    pub auto_normalized: bool,
}

fn mass(p: &GaussianPsdModel) -> Result<(f64, bool)> {
    let z = p.integrate(&Domain::FullSpace)?;
    if !(z > 1e-300) {
        return Err(PsdError::ZeroMass { mass: z });
    }
    Ok((z, (z - 1.0).abs() > 1e-10))
}

pub fn mean(p: &GaussianPsdModel) -> Result<Moment<Vec<f64>>> {
    let (z, flagged) = mass(p)?;
    let raw = expectation(p, &Identity { dim: p.dim() })?;
    Ok(Moment {
        value: raw.into_iter().map(|v| v / z).collect(),
        auto_normalized: flagged,
    })
}

/// `E[x x^T] - E[x] E[x]^T`.
pub fn covariance(p: &GaussianPsdModel) -> Result<Moment<DMatrix<f64>>> {
    let (z, flagged) = mass(p)?;
    let d = p.dim();
    let form = TraceForm::new(p);
    let mu: Vec<f64> = form.apply(&Identity { dim: d }).into_iter().map(|v| v / z).collect();
    let second = form.apply(&SecondMoment { dim: d });
    let cov = DMatrix::from_fn(d, d, |s, t| {
        let a = second[s * d + t] / z - mu[s] * mu[t];
        let b = second[t * d + s] / z - mu[t] * mu[s];
        0.5 * (a + b)
    });
    Ok(Moment {
        value: cov,
        auto_normalized: flagged,
    })
}

/// `E[exp(i w^T x)]`.
pub fn characteristic_function(p: &GaussianPsdModel, omega: &[f64]) -> Result<Moment<Complex64>> {
    check_dim(p.dim(), omega.len(), "frequency vector")?;
    let (z, flagged) = mass(p)?;
    let raw = expectation(
        p,
        &Fourier {
            omega: omega.to_vec(),
        },
    )?;
    Ok(Moment {
        value: Complex64::new(raw[0] / z, raw[1] / z),
        auto_normalized: flagged,
    })
}

/// `p(y | x = x0)`: partial evaluation of `block` at `x0`, normalized over
/// `domain` in the remaining coordinates.
pub fn condition(
    joint: &GaussianPsdModel,
    block: &str,
    x0: &[f64],
    domain: &Domain,
) -> Result<GaussianPsdModel> {
    let slice = joint.partial_eval(block, x0)?;
    match slice.normalize(domain) {
        Err(PsdError::ZeroMass { mass }) => Err(PsdError::ZeroConditional { mass }),
        other => other,
    }
}

/// `E_{y ~ p(. | x0)} g(y)`.
pub fn conditional_expectation(
    joint: &GaussianPsdModel,
    block: &str,
    x0: &[f64],
    g: &dyn SmoothedIntegrand,
    domain: &Domain,
) -> Result<Vec<f64>> {
    expectation(&condition(joint, block, x0, domain)?, g)
}

/// Gradient of a loss `l(theta, x)` in `theta`, represented through its
/// smoothed integral in `x`: `int grad_theta l(theta, x) exp(-(x-z)^T diag(eta) (x-z)) dx`.
pub trait LossGradient: Send + Sync {
    fn smoothed_gradient(&self, theta: &[f64], z: &[f64], eta: &Precision) -> Vec<f64>;
}

/// `l(theta, x) = |theta - x|^2`; its minimizer under `p` is the mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl LossGradient for SquaredLoss {
    fn smoothed_gradient(&self, theta: &[f64], z: &[f64], eta: &Precision) -> Vec<f64> {
        let c = gaussian_volume(eta);
        theta.iter().zip(z).map(|(t, v)| 2.0 * c * (t - v)).collect()
    }
}

struct AtTheta<'a> {
    loss: &'a dyn LossGradient,
    theta: &'a [f64],
}

impl SmoothedIntegrand for AtTheta<'_> {
    fn arity(&self) -> usize {
        self.theta.len()
    }

    fn smoothed(&self, z: &[f64], eta: &Precision) -> Vec<f64> {
        self.loss.smoothed_gradient(self.theta, z, eta)
    }
}

/// Fixed-step gradient descent on `L(theta) = E_p l(theta, x)` with the
/// exact gradient `E_p grad_theta l(theta, x)`. Aborts with
/// [`PsdError::StepTooLarge`] once any coordinate exceeds `1e6` in magnitude.
pub fn decision_gradient_descent(
    p: &GaussianPsdModel,
    loss: &dyn LossGradient,
    theta0: &[f64],
    steps: usize,
    rate: f64,
) -> Result<Vec<f64>> {
    if !(rate > 0.0) {
        return Err(PsdError::InvalidArgument("step size must be > 0".into()));
    }
    let mut theta = theta0.to_vec();
    if steps == 0 {
        return Ok(theta);
    }
    let (z, _) = mass(p)?;
    let form = TraceForm::new(p);
    for step in 1..=steps {
        let grad = form.apply(&AtTheta {
            loss,
            theta: &theta,
        });
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= rate * g / z;
        }
        let magnitude = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= 1e6) {
            return Err(PsdError::StepTooLarge { magnitude, step });
        }
    }
    Ok(theta)
}
