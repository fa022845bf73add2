//! Brute-force numerical references.
//!
//! Nothing in this module uses the Gaussian product identity, the closed-form
//! Gaussian volume or the error function: models are only touched through
//! pointwise evaluation, so agreement with the closed-form operations is
//! independent evidence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, PsdError, Result};
use crate::kernel::{Hypercube, PointMatrix};
use crate::model::GaussianPsdModel;

/// How [`integrate_numeric`] discretizes the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadratureMethod {
    /// Adaptive Gauss-Kronrod (10/21) per axis, nested across axes. Each axis
    /// starts from `initial_segments` equal panels so narrow peaks on a wide
    /// box are not skipped.
    Adaptive { initial_segments: usize },
    /// Composite Simpson rule with `points` nodes per axis (odd, >= 3).
    TensorGrid { points: usize },
    /// Halton points, any dimension.
    QuasiRandom { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl QuadratureSpec {
    pub fn adaptive(abs_tol: f64, rel_tol: f64) -> Self {
        QuadratureSpec {
            method: QuadratureMethod::Adaptive {
                initial_segments: 16,
            },
            abs_tol,
            rel_tol,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(PsdError::InvalidArgument(
                "quadrature tolerances must be > 0".into(),
            ));
        }
        match self.method {
            QuadratureMethod::Adaptive { initial_segments: 0 } => Err(
                PsdError::InvalidArgument("need at least one initial segment".into()),
            ),
            QuadratureMethod::TensorGrid { points } if points < 3 || points % 2 == 0 => Err(
                PsdError::InvalidArgument("Simpson grid needs an odd count >= 3".into()),
            ),
            QuadratureMethod::QuasiRandom { count: 0 } => {
                Err(PsdError::InvalidArgument("need at least one point".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    /// True when `error_estimate` is a heuristic rather than the sum of
    /// per-panel Gauss-Kronrod differences.
    pub heuristic: bool,
}

/// Numerically integrates `f` over `domain`.
pub fn integrate_numeric<F>(f: F, domain: &Hypercube, spec: &QuadratureSpec) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> f64,
{
    spec.validate()?;
    let d = domain.dim();
    match spec.method {
        QuadratureMethod::Adaptive { initial_segments } => {
            if d > 3 {
                return Err(PsdError::InvalidArgument(
                    "adaptive quadrature supports d <= 3".into(),
                ));
            }
            let mut point = vec![0.0; d];
            let (value, err) = nested_adaptive(&f, domain, spec, initial_segments, 0, &mut point)?;
            Ok(QuadratureResult {
                value,
                error_estimate: err,
                heuristic: d > 1,
            })
        }
        QuadratureMethod::TensorGrid { points } => {
            if d > 3 {
                return Err(PsdError::InvalidArgument(
                    "tensor grid supports d <= 3".into(),
                ));
            }
            let fine = simpson_grid(&f, domain, points)?;
            let half = points / 2 + usize::from((points / 2) % 2 == 0);
            let coarse = simpson_grid(&f, domain, half.max(3))?;
            Ok(QuadratureResult {
                value: fine,
                error_estimate: (fine - coarse).abs(),
                heuristic: true,
            })
        }
        QuadratureMethod::QuasiRandom { count } => {
            let vol = domain.volume();
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut x = vec![0.0; d];
            for k in 0..count {
                for (t, xt) in x.iter_mut().enumerate() {
                    let u = halton(k as u64 + 1, PRIMES[t % PRIMES.len()]);
                    *xt = domain.lower()[t] + u * (domain.upper()[t] - domain.lower()[t]);
                }
                let v = f(&x);
                if !v.is_finite() {
                    return Err(PsdError::NonFinite(x));
                }
                sum += v;
                sum_sq += v * v;
            }
            let n = count as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            Ok(QuadratureResult {
                value: vol * mean,
                error_estimate: vol * (var / n).sqrt(),
                heuristic: true,
            })
        }
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// First `count` Halton points (skipping index 0) scaled to `domain`.
pub(crate) fn halton_points(count: usize, domain: &Hypercube) -> PointMatrix {
    let d = domain.dim();
    let mut data = Vec::with_capacity(count * d);
    for k in 0..count {
        for t in 0..d {
            let u = halton(k as u64 + 1, PRIMES[t % PRIMES.len()]);
            data.push(domain.lower()[t] + u * (domain.upper()[t] - domain.lower()[t]));
        }
    }
    PointMatrix::new(count, d, data).expect("consistent shape")
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn nested_adaptive<F>(
    f: &F,
    domain: &Hypercube,
    spec: &QuadratureSpec,
    segments: usize,
    axis: usize,
    point: &mut [f64],
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let d = domain.dim();
    let (a, b) = (domain.lower()[axis], domain.upper()[axis]);
    if axis + 1 == d {
        let mut g = |t: f64| {
            point[axis] = t;
            let v = f(point);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(PsdError::NonFinite(point.to_vec()))
            }
        };
        return adaptive_gk(&mut g, a, b, spec.abs_tol, spec.rel_tol, segments);
    }
    // Inner integrals only need accuracy relative to the largest inner
    // value seen so far; tail slices contribute little to the outer sum.
    let mut peak = 0.0f64;
    let mut inner_err = 0.0f64;
    let mut g = |t: f64| {
        point[axis] = t;
        let mut p = point.to_vec();
        let inner = QuadratureSpec {
            abs_tol: spec.abs_tol.max(0.1 * spec.rel_tol * peak),
            rel_tol: spec.rel_tol.max(ROUNDOFF),
            ..*spec
        };
        let (v, e) = nested_adaptive(f, domain, &inner, segments, axis + 1, &mut p)?;
        peak = peak.max(v.abs());
        inner_err = inner_err.max(e);
        Ok(v)
    };
    let (v, e) = adaptive_gk(&mut g, a, b, spec.abs_tol, spec.rel_tol, segments)?;
    Ok((v, e + inner_err * (b - a)))
}

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525452740,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
/// 10-point Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// One 21-point Kronrod panel. The error estimate uses the QUADPACK scaling
/// `resasc * min(1, (200 |K - G| / resasc)^1.5)` with a rounding floor.
fn gk21<G>(g: &mut G, a: f64, b: f64) -> Result<(f64, f64)>
where
    G: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = g(center)?;
    let mut values = [(0.0, 0.0); 10];
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    let mut resabs = fc.abs() * WGK[10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let (lo, hi) = (g(center - dx)?, g(center + dx)?);
        values[j] = (lo, hi);
        kronrod += WGK[j] * (lo + hi);
        resabs += WGK[j] * (lo.abs() + hi.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (lo + hi);
        }
    }
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((values[j].0 - mean).abs() + (values[j].1 - mean).abs());
    }
    let h = half.abs();
    let (resabs, resasc) = (resabs * h, resasc * h);
    let mut err = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((kronrod * half, err))
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

const MAX_PANELS: usize = 4000;
const ROUNDOFF: f64 = 200.0 * f64::EPSILON;

/// Globally adaptive Gauss-Kronrod on `[a, b]`: bisect the panel with the
/// largest error until the total error meets the tolerance.
fn adaptive_gk<G>(g: &mut G, a: f64, b: f64, abs_tol: f64, rel_tol: f64, segments: usize) -> Result<(f64, f64)>
where
    G: FnMut(f64) -> Result<f64>,
{
    let mut heap = BinaryHeap::new();
    let width = (b - a) / segments as f64;
    let (mut total, mut err, mut magnitude) = (0.0, 0.0, 0.0);
    for s in 0..segments {
        let lo = a + width * s as f64;
        let hi = if s + 1 == segments { b } else { lo + width };
        let (value, e) = gk21(g, lo, hi)?;
        total += value;
        err += e;
        magnitude += value.abs();
        heap.push(Panel { a: lo, b: hi, value, err: e });
    }
    loop {
        // below this the Gauss-Kronrod difference is rounding noise
        let floor = ROUNDOFF * magnitude;
        if err <= abs_tol.max(rel_tol * total.abs()).max(floor) || heap.len() >= MAX_PANELS {
            // re-sum to drop the drift of the running totals
            let total: f64 = heap.iter().map(|p| p.value).sum();
            let err: f64 = heap.iter().map(|p| p.err).sum();
            return Ok((total, err));
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // panel can no longer be split in floating point
            err -= worst.err;
            heap.push(Panel { err: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk21(g, worst.a, mid)?;
        let (v2, e2) = gk21(g, mid, worst.b)?;
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.err;
        magnitude += v1.abs() + v2.abs() - worst.value.abs();
        heap.push(Panel { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, err: e2 });
    }
}

fn simpson_weights(points: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / (points - 1) as f64;
    let nodes = (0..points).map(|i| a + h * i as f64).collect();
    let weights = (0..points)
        .map(|i| {
            let w = if i == 0 || i + 1 == points {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    (nodes, weights)
}

fn simpson_grid<F>(f: &F, domain: &Hypercube, points: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let d = domain.dim();
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
        .map(|t| simpson_weights(points, domain.lower()[t], domain.upper()[t]))
        .collect();
    let total = points.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for t in 0..d {
            let idx = rem % points;
            rem /= points;
            x[t] = axes[t].0[idx];
            w *= axes[t].1[idx];
        }
        let v = f(&x);
        if !v.is_finite() {
            return Err(PsdError::NonFinite(x));
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Box around every base point of `model`, padded by `pad / sqrt(eta_t)` per
/// axis. With `pad = 12` the neglected tail mass of `f` is below `e^{-288}`.
pub fn covering_box(model: &GaussianPsdModel, pad: f64) -> Hypercube {
    let d = model.dim();
    let eta = model.precision().as_slice();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in model.points().iter_rows() {
        for t in 0..d {
            lo[t] = lo[t].min(row[t]);
            hi[t] = hi[t].max(row[t]);
        }
    }
    for t in 0..d {
        let w = pad / eta[t].sqrt();
        lo[t] -= w;
        hi[t] += w;
    }
    Hypercube::new(lo, hi).expect("padded box is non-degenerate")
}

/// Discretized Bayes filter on a uniform 1-d grid:
///
/// ```text
/// pred(x+) = sum_j tau(x+, x_j) p(x_j) dx
/// post(x+) = omega(y, x+) pred(x+) / normalizer
/// ```
///
/// Returns the normalized initial density followed by one density per
/// observation, each summing to one against the uniform weight `dx`.
pub fn grid_bayes_filter<T, O, P>(
    tau: T,
    omega: O,
    p0: P,
    observations: &[Vec<f64>],
    grid: &[f64],
) -> Result<Vec<Vec<f64>>>
where
    T: Fn(f64, f64) -> f64,
    O: Fn(&[f64], f64) -> f64,
    P: Fn(f64) -> f64,
{
    if grid.len() < 2 {
        return Err(PsdError::InvalidArgument("grid needs >= 2 points".into()));
    }
    let dx = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let normalize = |mut v: Vec<f64>| -> Result<Vec<f64>> {
        let mass: f64 = v.iter().sum::<f64>() * dx;
        if !(mass > 1e-300) {
            return Err(PsdError::ZeroEvidence { evidence: mass });
        }
        v.iter_mut().for_each(|p| *p /= mass);
        Ok(v)
    };
    let transition: Vec<Vec<f64>> = grid
        .iter()
        .map(|&xp| grid.iter().map(|&x| tau(xp, x)).collect())
        .collect();
    let mut out = vec![normalize(grid.iter().map(|&x| p0(x)).collect())?];
    for y in observations {
        let prev = out.last().expect("initial density");
        let post: Vec<f64> = grid
            .iter()
            .enumerate()
            .map(|(i, &xp)| {
                let pred: f64 = transition[i].iter().zip(prev).map(|(t, p)| t * p).sum::<f64>() * dx;
                omega(y, xp) * pred
            })
            .collect();
        out.push(normalize(post)?);
    }
    Ok(out)
}

/// Draws `count` i.i.d. samples from `model` restricted to `domain` by
/// uniform-proposal rejection sampling. The envelope is 1.2 times the largest
/// value found on a probe set (a tensor grid plus the base points).
pub fn rejection_sample(
    model: &GaussianPsdModel,
    domain: &Hypercube,
    count: usize,
    seed: u64,
) -> Result<PointMatrix> {
    let d = model.dim();
    check_dim(d, domain.dim(), "sampling domain")?;
    if count == 0 {
        return Err(PsdError::InvalidArgument("count must be >= 1".into()));
    }
    let per_axis: usize = match d {
        1 => 2001,
        2 => 201,
        3 => 41,
        _ => 9,
    };
    let mut envelope = 0.0f64;
    let mut x = vec![0.0; d];
    for flat in 0..per_axis.pow(d as u32) {
        let mut rem = flat;
        for (t, xt) in x.iter_mut().enumerate() {
            let idx = rem % per_axis;
            rem /= per_axis;
            *xt = domain.lower()[t]
                + (domain.upper()[t] - domain.lower()[t]) * idx as f64 / (per_axis - 1) as f64;
        }
        envelope = envelope.max(model.eval(&x)?);
    }
    for row in model.points().iter_rows() {
        if domain.contains(row) {
            envelope = envelope.max(model.eval(row)?);
        }
    }
    envelope *= 1.2;
    if !(envelope > 0.0) {
        return Err(PsdError::EnvelopeFailure { rate: 0.0 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(count * d);
    let mut accepted = 0usize;
    let mut attempts = 0u64;
    while accepted < count {
        for (t, xt) in x.iter_mut().enumerate() {
            *xt = rng.gen_range(domain.lower()[t]..domain.upper()[t]);
        }
        attempts += 1;
        if rng.gen::<f64>() * envelope < model.eval(&x)? {
            data.extend_from_slice(&x);
            accepted += 1;
        }
        if attempts >= 10_000_000 && (accepted as f64) < 1e-6 * attempts as f64 {
            return Err(PsdError::EnvelopeFailure {
                rate: accepted as f64 / attempts as f64,
            });
        }
    }
    PointMatrix::new(count, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn constant_over_unit_square() {
        let cube = Hypercube::cube(0.0, 1.0, 2).unwrap();
        for spec in [
            QuadratureSpec::adaptive(1e-14, 1e-14),
            QuadratureSpec {
                method: QuadratureMethod::TensorGrid { points: 11 },
                abs_tol: 1e-12,
                rel_tol: 1e-12,
            },
        ] {
            let r = integrate_numeric(|_| 1.0, &cube, &spec).unwrap();
            assert!((r.value - 1.0).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn classical_gaussian_integral() {
        let cube = Hypercube::new(vec![-10.0], vec![10.0]).unwrap();
        let r = integrate_numeric(|x| (-x[0] * x[0]).exp(), &cube, &QuadratureSpec::adaptive(1e-14, 1e-13))
            .unwrap();
        assert!((r.value - PI.sqrt()).abs() < 1e-10);
        assert!(!r.heuristic);
    }

    #[test]
    fn quasi_random_mean_of_linear() {
        let cube = Hypercube::cube(0.0, 1.0, 4).unwrap();
        let spec = QuadratureSpec {
            method: QuadratureMethod::QuasiRandom { count: 20_000 },
            abs_tol: 1e-3,
            rel_tol: 1e-3,
        };
        let r = integrate_numeric(|x| x.iter().sum(), &cube, &spec).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-3);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let cube = Hypercube::cube(-1.0, 1.0, 1).unwrap();
        let err = integrate_numeric(|_| f64::NAN, &cube, &QuadratureSpec::adaptive(1e-8, 1e-8)).unwrap_err();
        assert!(matches!(err, PsdError::NonFinite(_)));
    }

    #[test]
    fn grid_filter_uninformative_observation_is_prediction() {
        let grid: Vec<f64> = (0..201).map(|i| -5.0 + 0.05 * i as f64).collect();
        let tau = |xp: f64, x: f64| (-(xp - 0.5 * x).powi(2)).exp();
        let p0 = |x: f64| (-x * x).exp();
        let out = grid_bayes_filter(tau, |_, _| 1.0, p0, &[vec![0.3]], &grid).unwrap();
        let dx = 0.05;
        for dens in &out {
            assert!((dens.iter().sum::<f64>() * dx - 1.0).abs() < 1e-10);
        }
        // Chapman-Kolmogorov by hand
        let prior: Vec<f64> = out[0].clone();
        let mut pred: Vec<f64> = grid
            .iter()
            .map(|&xp| grid.iter().zip(&prior).map(|(&x, p)| tau(xp, x) * p).sum::<f64>() * dx)
            .collect();
        let mass: f64 = pred.iter().sum::<f64>() * dx;
        pred.iter_mut().for_each(|v| *v /= mass);
        for (a, b) in pred.iter().zip(&out[1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_filter_delta_transition_five_points() {
        // tau is the identity on the grid: posterior is omega * prior, renormalized
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0];
        let tau = |xp: f64, x: f64| if (xp - x).abs() < 0.5 { 1.0 } else { 0.0 };
        let p0 = |x: f64| [1.0, 2.0, 3.0, 2.0, 1.0][x as usize];
        let omega = |_: &[f64], x: f64| [0.0, 1.0, 1.0, 0.0, 0.0][x as usize];
        let out = grid_bayes_filter(tau, omega, p0, &[vec![0.0]], &grid).unwrap();
        // prior normalized: /9; post = (0, 2, 3, 0, 0)/5
        let expected = [0.0, 0.4, 0.6, 0.0, 0.0];
        for (a, b) in out[1].iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
        let err = grid_bayes_filter(tau, |_, _| 0.0, p0, &[vec![0.0]], &grid).unwrap_err();
        assert!(matches!(err, PsdError::ZeroEvidence { .. }));
    }

    #[test]
    fn rejection_sampling_is_seeded() {
        use crate::kernel::Precision;
        use nalgebra::DMatrix;
        let m = GaussianPsdModel::new(
            DMatrix::identity(1, 1),
            PointMatrix::from_column(&[0.4]).unwrap(),
            Precision::new(vec![1.0]).unwrap(),
            None,
        )
        .unwrap();
        let cube = Hypercube::cube(-5.0, 5.0, 1).unwrap();
        let a = rejection_sample(&m, &cube, 2000, 7).unwrap();
        let b = rejection_sample(&m, &cube, 2000, 7).unwrap();
        assert_eq!(a, b);
        let mean: f64 = a.as_slice().iter().sum::<f64>() / 2000.0;
        // variance of k^2 is 1/4 -> SE = 0.5/sqrt(2000)
        assert!((mean - 0.4).abs() < 3.0 * 0.5 / (2000f64).sqrt());
    }
}
