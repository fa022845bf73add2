#![allow(dead_code)]

pub mod golden;

use gauss_psd::{GaussianPsdModel, PointMatrix, Precision, VariableSplit};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize, half: f64) -> Vec<f64> {
    (0..d).map(|_| uniform(rng, -half, half)).collect()
}

/// Random PSD matrix `G G^T` of random rank (so singular cases occur).
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let rank = rng.gen_range(1..=n);
    let g = DMatrix::from_fn(n, rank, |_, _| uniform(rng, -1.0, 1.0));
    &g * g.transpose()
}

pub fn random_precision(rng: &mut ChaCha8Rng, d: usize) -> Precision {
    Precision::new((0..d).map(|_| uniform(rng, 0.3, 3.0)).collect()).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GaussianPsdModel {
    let pts: Vec<f64> = (0..n * d).map(|_| uniform(rng, -1.5, 1.5)).collect();
    GaussianPsdModel::new(
        random_psd(rng, n),
        PointMatrix::new(n, d, pts).unwrap(),
        random_precision(rng, d),
        None,
    )
    .unwrap()
}

/// Model over blocks `a` (first coordinate) and `b` (the rest).
pub fn random_two_block(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GaussianPsdModel {
    random_model(rng, n, d)
        .with_split(VariableSplit::new([("a", 1), ("b", d - 1)]).unwrap())
        .unwrap()
}

/// Kernel values `exp(-sum eta_t (p_t - x_t)^2)` for every base point.
pub fn kernels(m: &GaussianPsdModel, x: &[f64]) -> Vec<f64> {
    let eta = m.precision().as_slice();
    m.points()
        .iter_rows()
        .map(|p| {
            let s: f64 = p.iter().zip(x).zip(eta).map(|((a, b), e)| e * (a - b) * (a - b)).sum();
            (-s).exp()
        })
        .collect()
}

/// `sum_ij |A_ij| k_i k_j`: the scale of the rounding error in `f(x)`.
pub fn abs_scale(m: &GaussianPsdModel, x: &[f64]) -> f64 {
    let k = kernels(m, x);
    let a = m.coeffs();
    let mut s = 0.0;
    for i in 0..k.len() {
        for j in 0..k.len() {
            s += a[(i, j)].abs() * k[i] * k[j];
        }
    }
    s
}

pub fn psd_ok(m: &GaussianPsdModel) -> bool {
    m.min_eigenvalue() >= -1e-10 * (m.coeffs().trace() + 1.0)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Evaluates `sum_ij A_ij k_i(x) k_j(x)` from the raw parameters, without
/// going through the library's evaluation path.
pub struct DirectEval {
    n: usize,
    d: usize,
    points: Vec<f64>,
    eta: Vec<f64>,
    coeffs: Vec<f64>,
}

impl DirectEval {
    pub fn new(m: &GaussianPsdModel) -> Self {
        assert!(m.n() <= 64);
        DirectEval {
            n: m.n(),
            d: m.dim(),
            points: m.points().as_slice().to_vec(),
            eta: m.precision().as_slice().to_vec(),
            coeffs: m.coeffs().iter().copied().collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut k = [0.0f64; 64];
        for i in 0..self.n {
            let p = &self.points[i * self.d..(i + 1) * self.d];
            let mut s = 0.0;
            for t in 0..self.d {
                let diff = p[t] - x[t];
                s += self.eta[t] * diff * diff;
            }
            k[i] = (-s).exp();
        }
        let mut acc = 0.0;
        for j in 0..self.n {
            let mut col = 0.0;
            for i in 0..self.n {
                col += self.coeffs[j * self.n + i] * k[i];
            }
            acc += col * k[j];
        }
        acc
    }
}
