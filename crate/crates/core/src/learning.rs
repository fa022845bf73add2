//! Density estimation from i.i.d. samples.
//!
//! Minimizes over PSD matrices `A` (centers `X` and precision `eta` fixed)
//!
//! ```text
//! L(A) = int_H f(x; A)^2 dx - (2/n) sum_s f(x_s; A) + lambda Tr(A K A K)
//! ```
//!
//! which is the empirical squared L2 distance to the sampling density plus
//! an RKHS penalty. The quadratic term is exact: `f = sum_ij A_ij K'_ij
//! k_{2 eta}(m_ij, .)` with `K' = K_{eta/2}` and midpoints `m_ij`, so
//! `int_H f^2 = b^T G b` where `G` is the pair-mass matrix of the midpoints
//! at precision `2 eta`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, PsdError, Result};
use crate::kernel::{gaussian_volume, gram_sym, kernel_column, Hypercube, PointMatrix, Precision};
use crate::linalg::{frobenius_dot, min_eigenvalue, project_psd};
use crate::model::{pair_mass, Domain, GaussianPsdModel};
use crate::oracle::{integrate_numeric, QuadratureMethod, QuadratureSpec};

/// Largest number of centers accepted by [`assemble_quadratic`]. The
/// midpoint mass matrix has `(m (m + 1) / 2)^2` entries (about 200 MB at the cap).
pub const MAX_CENTERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum CenterSource {
    /// `num_centers` points drawn uniformly from the fit domain.
    UniformRandom { seed: u64 },
    Provided(PointMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// Start every iteration at `gamma0` and multiply by `beta` until the
    /// projected Armijo condition with constant `armijo` holds.
    Backtracking { beta: f64, gamma0: f64, armijo: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            beta: 0.5,
            gamma0: 1.0,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Stop when the Frobenius norm of `A - P(A - grad)` falls below this.
    pub tol_grad: f64,
    /// Stop when the relative objective decrease falls below this.
    pub tol_obj: f64,
    /// Nesterov extrapolation with a restart whenever the objective would
    /// increase; accepted iterates stay monotone.
    pub accelerated: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            step_rule: StepRule::default(),
            tol_grad: 1e-9,
            tol_obj: 0.0,
            accelerated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub lambda: f64,
    pub eta: Precision,
    pub num_centers: usize,
    pub center_source: CenterSource,
    pub domain: Hypercube,
    pub solver: SolverConfig,
    /// Integrate the quadratic term over the whole space instead of `domain`.
    pub full_space_quadratic: bool,
}

impl FitConfig {
    pub fn new(lambda: f64, eta: Precision, num_centers: usize, domain: Hypercube, seed: u64) -> Self {
        FitConfig {
            lambda,
            eta,
            num_centers,
            center_source: CenterSource::UniformRandom { seed },
            domain,
            solver: SolverConfig::default(),
            full_space_quadratic: false,
        }
    }

    /// Configuration from [`smoothness_schedule`] for `n` samples. The
    /// schedule is stated for the box `(-1, 1)^d`; its precision is mapped to
    /// `domain` by the affine change of variables, `eta_t / h_t^2` with `h_t`
    /// the half-width of axis `t`.
    pub fn from_schedule(n: usize, beta: f64, domain: Hypercube, seed: u64) -> Result<Self> {
        let h = smoothness_schedule(n, beta, domain.dim())?;
        let eta = h
            .eta
            .as_slice()
            .iter()
            .zip(domain.lower().iter().zip(domain.upper()))
            .map(|(e, (lo, hi))| {
                let half = 0.5 * (hi - lo);
                e / (half * half)
            })
            .collect();
        Ok(FitConfig::new(h.lambda, Precision::new(eta)?, h.num_centers, domain, seed))
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(PsdError::InvalidArgument("lambda must be > 0".into()));
        }
        if self.num_centers == 0 {
            return Err(PsdError::InvalidArgument("need at least one center".into()));
        }
        if self.solver.max_iters == 0 {
            return Err(PsdError::InvalidArgument("max_iters must be >= 1".into()));
        }
        check_dim(self.domain.dim(), self.eta.dim(), "precision vs fit domain")?;
        match self.solver.step_rule {
            StepRule::Fixed(g) if !(g > 0.0) => {
                Err(PsdError::InvalidArgument("step size must be > 0".into()))
            }
            StepRule::Backtracking { beta, gamma0, armijo }
                if !(beta > 0.0 && beta < 1.0 && gamma0 > 0.0 && armijo > 0.0 && armijo < 1.0) =>
            {
                Err(PsdError::InvalidArgument(
                    "backtracking needs 0 < beta < 1, gamma0 > 0, 0 < armijo < 1".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    /// Backtracking could not find a decreasing step; the iterate is
    /// stationary to working precision.
    LineSearchStalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    /// Objective at the initialization followed by one entry per iteration.
    pub objective: Vec<f64>,
    pub final_gradient_norm: f64,
    pub iterations: usize,
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue seen over all iterates.
    pub min_iterate_eigenvalue: f64,
    pub dropped_samples: usize,
    pub stop_reason: StopReason,
    /// False when the iteration budget ran out above the gradient tolerance.
    pub converged: bool,
    pub l2_error: Option<f64>,
}

/// Exact `int_H f(x; A, X, eta)^2 dx` as a quadratic form in `A`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    m: usize,
    /// Unordered center pairs `(i, j)`, `i >= j`.
    pairs: Vec<(usize, usize)>,
    /// `K_{X,X,eta/2}`.
    half_gram: DMatrix<f64>,
    /// Pair-mass matrix of the midpoints at precision `2 eta`.
    mass: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn num_centers(&self) -> usize {
        self.m
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        hi * (hi + 1) / 2 + lo
    }

    fn pair_vector(&self, a: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.pairs.len(),
            self.pairs.iter().map(|&(i, j)| {
                let w = if i == j { 1.0 } else { 2.0 };
                w * a[(i, j)] * self.half_gram[(i, j)]
            }),
        )
    }

    /// `T_{(ij),(kl)} = k_{eta/2}(x_i,x_j) k_{eta/2}(x_k,x_l) k_eta(m_ij,m_kl) int_H k_{4 eta}((m_ij+m_kl)/2, x) dx`.
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.half_gram[(i, j)]
            * self.half_gram[(k, l)]
            * self.mass[(self.pair_index(i, j), self.pair_index(k, l))]
    }

    /// `Q(A) = sum A_ij A_kl T_{(ij),(kl)}`.
    pub fn value(&self, a: &DMatrix<f64>) -> f64 {
        let b = self.pair_vector(a);
        b.dot(&(&self.mass * &b))
    }

    /// `dQ/dA`, symmetric.
    pub fn gradient(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let b = self.pair_vector(a);
        let gb = &self.mass * &b;
        DMatrix::from_fn(self.m, self.m, |i, j| {
            2.0 * self.half_gram[(i, j)] * gb[self.pair_index(i, j)]
        })
    }
}

/// Builds the quadratic form of the squared-density integral over `domain`.
pub fn assemble_quadratic(centers: &PointMatrix, eta: &Precision, domain: &Domain) -> Result<QuadraticForm> {
    let m = centers.rows();
    let d = centers.dim();
    check_dim(d, eta.dim(), "precision vs centers")?;
    if let Domain::Hypercube(h) = domain {
        check_dim(d, h.dim(), "integration domain")?;
    }
    if m > MAX_CENTERS {
        return Err(PsdError::CapExceeded {
            what: "centers",
            value: m,
            cap: MAX_CENTERS,
        });
    }
    let mut pairs = Vec::with_capacity(m * (m + 1) / 2);
    let mut mids = Vec::with_capacity(m * (m + 1) / 2 * d);
    for i in 0..m {
        for j in 0..=i {
            pairs.push((i, j));
            mids.extend(centers.row(i).iter().zip(centers.row(j)).map(|(a, b)| 0.5 * (a + b)));
        }
    }
    let mids = PointMatrix::new(pairs.len(), d, mids)?;
    Ok(QuadraticForm {
        m,
        pairs,
        half_gram: gram_sym(centers, eta.scaled(0.5).as_slice()),
        mass: pair_mass(&mids, &eta.scaled(2.0), domain),
    })
}

struct Objective {
    quad: QuadraticForm,
    data: DMatrix<f64>,
    gram: DMatrix<f64>,
    lambda: f64,
}

impl Objective {
    fn value(&self, a: &DMatrix<f64>) -> f64 {
        let ak = a * &self.gram;
        let reg = frobenius_dot(&ak, &ak.transpose());
        self.quad.value(a) - 2.0 * frobenius_dot(&self.data, a) + self.lambda * reg
    }

    fn gradient(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let kak = &self.gram * a * &self.gram;
        self.quad.gradient(a) - &self.data * 2.0 + kak * (2.0 * self.lambda)
    }
}

/// `||A - P(A - grad L(A))||_F`, zero exactly at constrained minimizers.
fn stationarity(objective: &Objective, a: &DMatrix<f64>) -> f64 {
    let grad = objective.gradient(a);
    (a - project_psd(&(a - &grad))).norm()
}

fn draw_centers(cfg: &FitConfig) -> Result<PointMatrix> {
    match &cfg.center_source {
        CenterSource::Provided(points) => {
            check_dim(cfg.domain.dim(), points.dim(), "centers vs fit domain")?;
            check_dim(cfg.num_centers, points.rows(), "number of provided centers")?;
            Ok(points.clone())
        }
        CenterSource::UniformRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let d = cfg.domain.dim();
            let mut data = Vec::with_capacity(cfg.num_centers * d);
            for _ in 0..cfg.num_centers {
                for t in 0..d {
                    let (lo, hi) = (cfg.domain.lower()[t], cfg.domain.upper()[t]);
                    data.push(lo + rng.gen::<f64>() * (hi - lo));
                }
            }
            PointMatrix::new(cfg.num_centers, d, data)
        }
    }
}

/// Projected-gradient minimization of the regularized objective.
pub fn fit(samples: &PointMatrix, cfg: &FitConfig) -> Result<(GaussianPsdModel, FitReport)> {
    cfg.validate()?;
    check_dim(cfg.domain.dim(), samples.dim(), "samples vs fit domain")?;
    if samples.rows() == 0 {
        return Err(PsdError::InvalidArgument("no samples".into()));
    }
    if cfg.num_centers > MAX_CENTERS {
        return Err(PsdError::CapExceeded {
            what: "centers",
            value: cfg.num_centers,
            cap: MAX_CENTERS,
        });
    }
    let centers = draw_centers(cfg)?;
    let m = centers.rows();
    let eta = cfg.eta.as_slice();

    // the 1/n weight counts dropped samples too: the data term is the
    // empirical mean of f(x) 1_H(x)
    let n_total = samples.rows() as f64;
    let mut data = DMatrix::zeros(m, m);
    let mut dropped = 0;
    for x in samples.iter_rows() {
        if !cfg.domain.contains(x) {
            dropped += 1;
            continue;
        }
        let k = DVector::from_vec(kernel_column(&centers, x, eta));
        data.ger(1.0 / n_total, &k, &k, 1.0);
    }

    let quad_domain = if cfg.full_space_quadratic {
        Domain::FullSpace
    } else {
        Domain::Hypercube(cfg.domain.clone())
    };
    let objective = Objective {
        quad: assemble_quadratic(&centers, &cfg.eta, &quad_domain)?,
        data,
        gram: gram_sym(&centers, eta),
        lambda: cfg.lambda,
    };

    let c2 = gaussian_volume(&cfg.eta.scaled(2.0));
    let mut a = DMatrix::identity(m, m) / (m as f64 * c2);
    let mut value = objective.value(&a);
    let mut trajectory = vec![value];
    let mut min_iterate_eig = min_eigenvalue(&a);
    let mut grad_norm = f64::INFINITY;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    let accelerated = cfg.solver.accelerated;
    let mut previous_iterate = a.clone();
    let mut t = 1.0f64;
    for iter in 0..cfg.solver.max_iters {
        if iter % 10 == 0 || !accelerated {
            grad_norm = stationarity(&objective, &a);
            if grad_norm <= cfg.solver.tol_grad {
                stop = StopReason::GradientTolerance;
                break;
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let y = if accelerated && t > 1.0 {
            &a + (&a - &previous_iterate) * ((t - 1.0) / t_next)
        } else {
            a.clone()
        };
        let y_value = if accelerated && t > 1.0 { objective.value(&y) } else { value };
        let grad = objective.gradient(&y);
        let next = match cfg.solver.step_rule {
            StepRule::Fixed(gamma) => {
                let cand = project_psd(&(&y - &grad * gamma));
                let v = objective.value(&cand);
                Some((cand, v))
            }
            StepRule::Backtracking { beta, gamma0, armijo } => {
                let mut gamma = gamma0;
                let mut accepted = None;
                for _ in 0..80 {
                    let cand = project_psd(&(&y - &grad * gamma));
                    let v = objective.value(&cand);
                    let step = &cand - &y;
                    let linear = frobenius_dot(&grad, &step);
                    let bound = if accelerated {
                        y_value + linear + step.norm_squared() / (2.0 * gamma)
                    } else {
                        y_value + armijo * linear
                    };
                    if v <= bound {
                        accepted = Some((cand, v));
                        break;
                    }
                    gamma *= beta;
                }
                accepted
            }
        };
        let Some((cand, v)) = next else {
            stop = StopReason::LineSearchStalled;
            break;
        };
        iterations += 1;
        let last = value;
        if v <= value {
            previous_iterate = std::mem::replace(&mut a, cand);
            value = v;
            t = t_next;
            min_iterate_eig = min_iterate_eig.min(min_eigenvalue(&a));
        } else {
            // momentum overshot: keep the iterate and restart from a plain step
            previous_iterate = a.clone();
            t = 1.0;
        }
        trajectory.push(value);
        if t == 1.0 && v > last {
            continue;
        }
        if (last - value).abs() <= cfg.solver.tol_obj * last.abs().max(1e-300) {
            stop = StopReason::ObjectiveTolerance;
            break;
        }
    }
    if stop != StopReason::GradientTolerance {
        grad_norm = stationarity(&objective, &a);
        if grad_norm <= cfg.solver.tol_grad {
            stop = StopReason::GradientTolerance;
        }
    }

    let model = GaussianPsdModel::from_parts(a, centers, cfg.eta.clone(), None)?;
    let report = FitReport {
        objective: trajectory,
        final_gradient_norm: grad_norm,
        iterations,
        min_eigenvalue: model.min_eigenvalue(),
        min_iterate_eigenvalue: min_iterate_eig,
        dropped_samples: dropped,
        stop_reason: stop,
        converged: stop != StopReason::MaxIterations,
        l2_error: None,
    };
    Ok((model, report))
}

/// Hyperparameters
/// `eta = n^{2/(2 beta + d)}`, `lambda = n^{-(2 beta + 2 d)/(2 beta + d)}`,
/// `m = ceil(n^{d/(2 beta + d)} (ln n)^d)` with the unspecified constant in
/// `m` set to 1.
pub fn smoothness_schedule(n: usize, beta: f64, d: usize) -> Result<HyperparamSchedule> {
    if n < 2 || !(beta > 0.0) || d == 0 {
        return Err(PsdError::InvalidArgument(
            "need n >= 2, beta > 0, d >= 1".into(),
        ));
    }
    let nf = n as f64;
    let df = d as f64;
    let denom = 2.0 * beta + df;
    let eta = nf.powf(2.0 / denom);
    let lambda = nf.powf(-(2.0 * beta + 2.0 * df) / denom);
    let m = (nf.powf(df / denom) * nf.ln().powf(df)).ceil() as usize;
    Ok(HyperparamSchedule {
        eta: Precision::isotropic(eta, d)?,
        lambda,
        num_centers: m.max(1),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparamSchedule {
    pub eta: Precision,
    pub lambda: f64,
    pub num_centers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Error {
    pub value: f64,
    /// Standard error of the quasi-Monte-Carlo estimate (d > 3 only).
    pub std_error: Option<f64>,
}

/// `||model - reference||_{L2(domain)}`.
pub fn l2_error<F>(model: &GaussianPsdModel, reference: F, domain: &Hypercube) -> Result<L2Error>
where
    F: Fn(&[f64]) -> f64,
{
    check_dim(model.dim(), domain.dim(), "L2 domain")?;
    let sq = |x: &[f64]| {
        let diff = model.eval(x).unwrap_or(f64::NAN) - reference(x);
        diff * diff
    };
    if domain.dim() <= 3 {
        let spec = QuadratureSpec::adaptive(1e-12, 1e-9);
        let r = integrate_numeric(sq, domain, &spec)?;
        Ok(L2Error {
            value: r.value.max(0.0).sqrt(),
            std_error: None,
        })
    } else {
        let spec = QuadratureSpec {
            method: QuadratureMethod::QuasiRandom { count: 200_000 },
            abs_tol: 1e-12,
            rel_tol: 1e-9,
        };
        let r = integrate_numeric(sq, domain, &spec)?;
        let value = r.value.max(0.0).sqrt();
        // delta method on sqrt
        let se = if value > 0.0 { r.error_estimate / (2.0 * value) } else { r.error_estimate.sqrt() };
        Ok(L2Error {
            value,
            std_error: Some(se),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_cube(d: usize) -> Hypercube {
        Hypercube::cube(-3.0, 3.0, d).unwrap()
    }

    #[test]
    fn single_center_quartic_integral() {
        let c = PointMatrix::from_column(&[0.4]).unwrap();
        let q = assemble_quadratic(&c, &Precision::new(vec![1.0]).unwrap(), &Domain::FullSpace).unwrap();
        let a = DMatrix::from_element(1, 1, 1.7);
        assert_relative_eq!(q.value(&a), 1.7 * 1.7 * (PI / 4.0).sqrt(), max_relative = 1e-14);
        assert_eq!(q.value(&DMatrix::zeros(1, 1)), 0.0);
    }

    #[test]
    fn quadratic_matches_model_square_integral_full_space() {
        // int f^2 over R for f = sum A_ij k_i k_j, expanded by hand into
        // Gaussians: every quadruple (i,j,k,l) contributes
        // A_ij A_kl exp(-eta (sum x^2 - (sum x)^2/4)) sqrt(pi / (4 eta)).
        let xs = [-0.7, 0.2, 1.1];
        let eta = 1.3;
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 0.8, 0.1, -0.2, 0.1, 0.5]);
        let mut expected = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let p = [xs[i], xs[j], xs[k], xs[l]];
                        let s: f64 = p.iter().sum();
                        let s2: f64 = p.iter().map(|v| v * v).sum();
                        expected += a[(i, j)]
                            * a[(k, l)]
                            * (-eta * (s2 - s * s / 4.0)).exp()
                            * (PI / (4.0 * eta)).sqrt();
                    }
                }
            }
        }
        let q = assemble_quadratic(
            &PointMatrix::from_column(&xs).unwrap(),
            &Precision::new(vec![eta]).unwrap(),
            &Domain::FullSpace,
        )
        .unwrap();
        assert_relative_eq!(q.value(&a), expected, max_relative = 1e-13);
        for (i, j, k, l) in [(0, 1, 2, 0), (2, 2, 1, 0), (1, 0, 0, 1)] {
            let p = [xs[i], xs[j], xs[k], xs[l]];
            let s: f64 = p.iter().sum();
            let s2: f64 = p.iter().map(|v| v * v).sum();
            let t = (-eta * (s2 - s * s / 4.0)).exp() * (PI / (4.0 * eta)).sqrt();
            assert_relative_eq!(q.entry(i, j, k, l), t, max_relative = 1e-13);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let c = PointMatrix::from_rows(&[vec![0.0, 0.1], vec![0.5, -0.3], vec![-0.4, 0.6]]).unwrap();
        let q = assemble_quadratic(
            &c,
            &Precision::new(vec![1.5, 0.8]).unwrap(),
            &Domain::Hypercube(Hypercube::cube(-1.0, 1.0, 2).unwrap()),
        )
        .unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 0.7, -0.1, 0.1, -0.1, 0.4]);
        let g = q.gradient(&a);
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..=i {
                let mut e = DMatrix::zeros(3, 3);
                e[(i, j)] = h;
                e[(j, i)] = h;
                let fd = (q.value(&(&a + &e)) - q.value(&(&a - &e))) / (2.0 * h);
                let analytic = if i == j { g[(i, j)] } else { 2.0 * g[(i, j)] };
                assert_relative_eq!(fd, analytic, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let c = PointMatrix::from_column(&vec![0.0; MAX_CENTERS + 1]).unwrap();
        let err = assemble_quadratic(&c, &Precision::new(vec![1.0]).unwrap(), &Domain::FullSpace).unwrap_err();
        assert!(matches!(err, PsdError::CapExceeded { .. }));
    }

    #[test]
    fn schedule_arithmetic() {
        let h = smoothness_schedule(100, 1.0, 1).unwrap();
        assert_relative_eq!(h.eta.as_slice()[0], 100f64.powf(2.0 / 3.0), max_relative = 1e-15);
        assert_relative_eq!(h.eta.as_slice()[0], 21.544, epsilon = 1e-3);
        assert_relative_eq!(h.lambda, 0.00215, epsilon = 1e-5);
        let h = smoothness_schedule(1600, 2.0, 1).unwrap();
        assert_eq!(h.num_centers, 33);
        assert!(smoothness_schedule(1, 1.0, 1).is_err());
        let big = smoothness_schedule(100, 1e9, 2).unwrap();
        assert_relative_eq!(big.lambda, 0.01, max_relative = 1e-6);
        assert_relative_eq!(big.eta.as_slice()[0], 1.0, max_relative = 1e-6);
    }

    #[test]
    fn single_point_closed_form() {
        // L(a) = a^2 q - 2 a + lambda a^2, minimized at a = 1 / (q + lambda)
        let eta = 2.0;
        let lambda = 0.05;
        let x0 = 0.3;
        let samples = PointMatrix::from_column(&[x0; 10]).unwrap();
        let mut cfg = FitConfig::new(lambda, Precision::new(vec![eta]).unwrap(), 1, unit_cube(1), 0);
        cfg.center_source = CenterSource::Provided(PointMatrix::from_column(&[x0]).unwrap());
        cfg.full_space_quadratic = true;
        let (model, report) = fit(&samples, &cfg).unwrap();
        let q = (PI / (4.0 * eta)).sqrt();
        assert_relative_eq!(model.coeffs()[(0, 0)], 1.0 / (q + lambda), max_relative = 1e-8);
        assert!(report.converged);
    }

    #[test]
    fn heavy_regularization_shrinks_to_zero() {
        let samples = PointMatrix::from_column(&[-0.5, 0.1, 0.4, 1.0]).unwrap();
        let mut cfg = FitConfig::new(1e6, Precision::new(vec![2.0]).unwrap(), 5, unit_cube(1), 3);
        cfg.center_source =
            CenterSource::Provided(PointMatrix::from_column(&[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap());
        cfg.solver.max_iters = 500;
        let (model, _) = fit(&samples, &cfg).unwrap();
        assert!(model.coeffs().norm() <= 1e-3);
    }

    #[test]
    fn backtracking_is_monotone_and_psd() {
        let samples = PointMatrix::from_column(&[-1.0, -0.2, 0.0, 0.3, 0.35, 0.9, 1.4]).unwrap();
        let mut cfg = FitConfig::new(1e-3, Precision::new(vec![3.0]).unwrap(), 8, unit_cube(1), 11);
        cfg.solver.max_iters = 300;
        let (model, report) = fit(&samples, &cfg).unwrap();
        for w in report.objective.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(report.min_iterate_eigenvalue >= -1e-10);
        assert!(model.is_psd());
        assert!(report.objective.last().unwrap() <= &report.objective[0]);
    }

    #[test]
    fn out_of_domain_samples_are_counted() {
        let samples = PointMatrix::from_column(&[-5.0, 0.0, 0.5, 4.0]).unwrap();
        let mut cfg = FitConfig::new(1e-2, Precision::new(vec![1.0]).unwrap(), 3, unit_cube(1), 1);
        cfg.solver.max_iters = 20;
        let (_, report) = fit(&samples, &cfg).unwrap();
        assert_eq!(report.dropped_samples, 2);
    }

    #[test]
    fn l2_of_zero_model_is_reference_norm() {
        let zero = GaussianPsdModel::new(
            DMatrix::zeros(1, 1),
            PointMatrix::from_column(&[0.0]).unwrap(),
            Precision::new(vec![1.0]).unwrap(),
            None,
        )
        .unwrap();
        let dom = Hypercube::cube(-1.0, 1.0, 1).unwrap();
        let e = l2_error(&zero, |x: &[f64]| x[0], &dom).unwrap();
        assert_relative_eq!(e.value, (2.0f64 / 3.0).sqrt(), max_relative = 1e-9);
        let model = GaussianPsdModel::new(
            DMatrix::identity(1, 1),
            PointMatrix::from_column(&[0.2]).unwrap(),
            Precision::new(vec![1.0]).unwrap(),
            None,
        )
        .unwrap();
        let same = l2_error(&model, |x: &[f64]| model.eval(x).unwrap(), &dom).unwrap();
        assert!(same.value < 1e-9);
    }
}
