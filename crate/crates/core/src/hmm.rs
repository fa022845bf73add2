//! Filtering in hidden Markov models whose transition, observation and
//! initial densities are Gaussian PSD models.
//!
//! With transition `tau(x+, x) = f(x+, x; B, [X+, X], (eta+, eta))` (n points),
//! observation `omega(y, x) = f(y, x; C, [Y, X'], (eta_obs, eta'))` (m points)
//! and a prior on `x`, one step computes
//!
//! ```text
//! p(x+ | y_1:t) ∝ omega(y_t, x+) int tau(x+, x) p(x | y_1:t-1) dx.
//! ```
//!
//! From the second step on the posterior lives on the fixed base points
//! `X~ = (X' eta'/(eta'+eta+)) kron 1_n + 1_m kron (X+ eta+/(eta'+eta+))`
//! with precision `eta' + eta+`, and the step is a fixed matrix recursion on
//! its `nm x nm` coefficients. The first step goes through the generic
//! product / marginalization / reduction path because the prior can have any
//! number of base points.

use nalgebra::DMatrix;

use crate::error::{check_dim, PsdError, Result};
use crate::kernel::{gram_sym, kernel_column, weighted_center, PointMatrix, Precision};
use crate::linalg::{block_sum, frobenius_dot, kron_weighted, min_eigenvalue};
use crate::model::{pair_mass, Domain, GaussianPsdModel, VariableSplit};

/// Largest accepted `nm` (coefficient size of the filter state).
pub const MAX_STATE_SIZE: usize = 2048;
/// Largest accepted `n * nm` (side of the materialized product matrix).
pub const MAX_PRODUCT_SIZE: usize = 4096;

const NEXT: &str = "x_plus";
const STATE: &str = "x";
const OBS: &str = "y";

/// The three densities of the chain. Blocks are positional: transition
/// coordinates are `(next state, state)`, observation coordinates are
/// `(observation, state)`; any block names on the inputs are replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmComponents {
    transition: GaussianPsdModel,
    observation: GaussianPsdModel,
    initial: GaussianPsdModel,
}

impl HmmComponents {
    pub fn new(
        transition: GaussianPsdModel,
        observation: GaussianPsdModel,
        initial: GaussianPsdModel,
    ) -> Result<Self> {
        let d = initial.dim();
        check_dim(2 * d, transition.dim(), "transition dimension (next state + state)")?;
        if observation.dim() <= d {
            return Err(PsdError::DimensionMismatch {
                expected: d + 1,
                got: observation.dim(),
                context: "observation dimension (at least one observed coordinate + state)",
            });
        }
        let d_obs = observation.dim() - d;
        Ok(HmmComponents {
            transition: transition.with_split(VariableSplit::new([(NEXT, d), (STATE, d)])?)?,
            observation: observation.with_split(VariableSplit::new([(OBS, d_obs), (STATE, d)])?)?,
            initial: initial.with_split(VariableSplit::single(d))?,
        })
    }

    pub fn transition(&self) -> &GaussianPsdModel {
        &self.transition
    }

    pub fn observation(&self) -> &GaussianPsdModel {
        &self.observation
    }

    pub fn initial(&self) -> &GaussianPsdModel {
        &self.initial
    }

    pub fn state_dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn observation_dim(&self) -> usize {
        self.observation.dim() - self.state_dim()
    }

    fn state_points(&self, model: &GaussianPsdModel, offset: usize) -> PointMatrix {
        model.points().columns(offset, self.state_dim())
    }
}

/// Step-invariant data of the matrix recursion.
#[derive(Debug, Clone)]
pub struct FilterContext {
    components: HmmComponents,
    domain: Domain,
    /// `X~`, the base points of every posterior after the first step.
    base: PointMatrix,
    /// `eta' + eta+`.
    precision: Precision,
    /// `k_{eta~}(x_i, x~_l)` at index `i * nm + l`, `eta~ = eta (eta'+eta+) / (eta+eta'+eta+)`.
    product_weights: Vec<f64>,
    /// Pair masses of `X~'` at precision `eta + eta' + eta+`: integrating out the old state.
    marginal_mass: DMatrix<f64>,
    /// `k_{eta~'}(x'_a, x+_i)` at index `a * n + i`, `eta~' = eta' eta+ / (eta' + eta+)`.
    observation_weights: Vec<f64>,
    /// Pair masses of `X~` at precision `eta' + eta+`: the evidence.
    normalizer_mass: DMatrix<f64>,
}

impl FilterContext {
    pub fn components(&self) -> &HmmComponents {
        &self.components
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `X~`.
    pub fn base_points(&self) -> &PointMatrix {
        &self.base
    }

    pub fn state_precision(&self) -> &Precision {
        &self.precision
    }

    /// `nm`.
    pub fn state_size(&self) -> usize {
        self.base.rows()
    }

    /// Side of the materialized product matrix, `n * nm`.
    pub fn product_size(&self) -> usize {
        self.components.transition.n() * self.state_size()
    }
}

/// Posterior after `t` observations (`t = 0` is the initial density).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: usize,
    pub model: GaussianPsdModel,
}

impl FilterState {
    pub fn coeffs(&self) -> &DMatrix<f64> {
        self.model.coeffs()
    }
}

/// Intermediate matrices of one step of the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// Observation coefficients after fixing `y = y_t` (`m x m`).
    pub observation_slice: DMatrix<f64>,
    /// Product of transition and prior (`n nm x n nm`).
    pub joint: DMatrix<f64>,
    /// Predicted density on `X+` (`n x n`).
    pub predicted: DMatrix<f64>,
    /// Unnormalized posterior (`nm x nm`).
    pub unnormalized: DMatrix<f64>,
    pub evidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    /// `|int p(x_t | y_1:t) dx - 1|`, recomputed from the returned model.
    pub normalization_residual: f64,
    pub min_eigenvalue: f64,
    pub evidence: f64,
    pub state_size: usize,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    /// `states[0]` is the normalized initial density.
    pub states: Vec<FilterState>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Precomputes the step-invariant matrices.
pub fn filter_init(components: HmmComponents, domain: Domain) -> Result<FilterContext> {
    let d = components.state_dim();
    if let Domain::Hypercube(h) = &domain {
        check_dim(d, h.dim(), "filter domain")?;
    }
    let tr = &components.transition;
    let ob = &components.observation;
    let (n, m) = (tr.n(), ob.n());
    if n * m > MAX_STATE_SIZE {
        return Err(PsdError::CapExceeded {
            what: "state size n*m",
            value: n * m,
            cap: MAX_STATE_SIZE,
        });
    }
    if n * n * m > MAX_PRODUCT_SIZE {
        return Err(PsdError::CapExceeded {
            what: "product size n*n*m",
            value: n * n * m,
            cap: MAX_PRODUCT_SIZE,
        });
    }
    check_normalizable(tr, 0, d, "transition")?;
    check_normalizable(ob, components.observation_dim(), d, "observation")?;

    let eta_next = tr.precision().as_slice()[..d].to_vec();
    let eta_state = tr.precision().as_slice()[d..].to_vec();
    let eta_obs_state = ob.precision().as_slice()[components.observation_dim()..].to_vec();
    let x_next = tr.points().columns(0, d);
    let x_state = components.state_points(tr, d);
    let x_obs = components.state_points(ob, components.observation_dim());

    // X~: observation points outer, transition points inner
    let mut base = Vec::with_capacity(n * m * d);
    for a in 0..m {
        for i in 0..n {
            base.extend(weighted_center(x_obs.row(a), x_next.row(i), &eta_obs_state, &eta_next));
        }
    }
    let base = PointMatrix::new(n * m, d, base)?;
    let posterior_eta: Vec<f64> = eta_obs_state.iter().zip(&eta_next).map(|(a, b)| a + b).collect();
    let precision = Precision::new(posterior_eta.clone())?;

    let nm = n * m;
    let eta_tilde: Vec<f64> = eta_state
        .iter()
        .zip(&posterior_eta)
        .map(|(e, s)| e * s / (e + s))
        .collect();
    let mut product_weights = Vec::with_capacity(n * nm);
    let mut centers = Vec::with_capacity(n * nm * d);
    for i in 0..n {
        let xi = x_state.row(i);
        product_weights.extend(kernel_column(&base, xi, &eta_tilde));
        for l in 0..nm {
            centers.extend(weighted_center(xi, base.row(l), &eta_state, &posterior_eta));
        }
    }
    let centers = PointMatrix::new(n * nm, d, centers)?;
    let joint_eta: Vec<f64> = eta_state.iter().zip(&posterior_eta).map(|(a, b)| a + b).collect();
    let marginal_mass = pair_mass(&centers, &Precision::new(joint_eta)?, &domain);

    let eta_tilde_obs: Vec<f64> = eta_obs_state
        .iter()
        .zip(&eta_next)
        .map(|(a, b)| a * b / (a + b))
        .collect();
    let mut observation_weights = Vec::with_capacity(nm);
    for a in 0..m {
        observation_weights.extend(kernel_column(&x_next, x_obs.row(a), &eta_tilde_obs));
    }
    let normalizer_mass = pair_mass(&base, &precision, &domain);

    Ok(FilterContext {
        components,
        domain,
        base,
        precision,
        product_weights,
        marginal_mass,
        observation_weights,
        normalizer_mass,
    })
}

/// Rejects components whose conditional slices at their own base points
/// carry no mass (such a density cannot be conditioned there).
fn check_normalizable(model: &GaussianPsdModel, offset: usize, d: usize, what: &str) -> Result<()> {
    let any_mass = model.points().iter_rows().any(|row| {
        model
            .partial_eval(STATE, &row[offset..offset + d])
            .and_then(|s| s.integrate(&Domain::FullSpace))
            .map(|z| z > 1e-300)
            .unwrap_or(false)
    });
    if any_mass {
        Ok(())
    } else {
        Err(PsdError::InvalidArgument(format!(
            "{what} has zero conditional mass at all of its base points"
        )))
    }
}

fn evidence_check(evidence: f64) -> Result<f64> {
    if !(evidence > 1e-300) {
        return Err(PsdError::ZeroEvidence { evidence });
    }
    Ok(evidence)
}

/// One step by direct composition of the model operations:
/// multiply by the transition, integrate out the old state, reduce, multiply
/// by the observation slice at `y`, normalize. Returns the posterior and the
/// evidence.
pub fn filter_step_generic(
    components: &HmmComponents,
    prior: &GaussianPsdModel,
    y: &[f64],
    domain: &Domain,
) -> Result<(GaussianPsdModel, f64)> {
    check_dim(components.state_dim(), prior.dim(), "prior dimension")?;
    check_dim(components.observation_dim(), y.len(), "observation")?;
    let prior = prior.with_split(VariableSplit::single(prior.dim()))?;
    let joint = components.transition.multiply(&prior)?;
    let predicted = joint
        .marginalize(STATE, domain)?
        .reduce(prior.n())?
        .rename_block(NEXT, STATE)?;
    let slice = components.observation.partial_eval(OBS, y)?;
    let unnormalized = slice.multiply(&predicted)?;
    let evidence = evidence_check(unnormalized.integrate(domain)?)?;
    Ok((unnormalized.scaled(1.0 / evidence)?, evidence))
}

fn recursion_step(ctx: &FilterContext, prior: &DMatrix<f64>, y: &[f64]) -> Result<StepTrace> {
    let tr = &ctx.components.transition;
    let ob = &ctx.components.observation;
    let nm = ctx.state_size();
    check_dim(nm, prior.nrows(), "filter state size")?;
    let d_obs = ctx.components.observation_dim();
    let k = kernel_column(&ob.points().columns(0, d_obs), y, &ob.precision().as_slice()[..d_obs]);
    let m = ob.n();
    let observation_slice = DMatrix::from_fn(m, m, |a, b| ob.coeffs()[(a, b)] * k[a] * k[b]);
    let joint = kron_weighted(tr.coeffs(), prior, &ctx.product_weights);
    let predicted = block_sum(&joint.component_mul(&ctx.marginal_mass), nm);
    let unnormalized = kron_weighted(&observation_slice, &predicted, &ctx.observation_weights);
    let evidence = frobenius_dot(&unnormalized, &ctx.normalizer_mass);
    Ok(StepTrace {
        observation_slice,
        joint,
        predicted,
        unnormalized,
        evidence,
    })
}

/// Advances the filter by one observation, returning the intermediate
/// matrices of the recursion (none for the first step, which uses the
/// generic path).
pub fn filter_step_traced(
    ctx: &FilterContext,
    state: &FilterState,
    y: &[f64],
) -> Result<(FilterState, Option<StepTrace>)> {
    check_dim(ctx.components.observation_dim(), y.len(), "observation")?;
    if state.t == 0 {
        let (model, _) = filter_step_generic(&ctx.components, &state.model, y, &ctx.domain)?;
        return Ok((FilterState { t: 1, model }, None));
    }
    let trace = recursion_step(ctx, state.coeffs(), y)?;
    let evidence = evidence_check(trace.evidence)?;
    let model = GaussianPsdModel::from_parts(
        &trace.unnormalized / evidence,
        ctx.base.clone(),
        ctx.precision.clone(),
        None,
    )?;
    Ok((
        FilterState {
            t: state.t + 1,
            model,
        },
        Some(trace),
    ))
}

pub fn filter_step(ctx: &FilterContext, state: &FilterState, y: &[f64]) -> Result<FilterState> {
    filter_step_traced(ctx, state, y).map(|(s, _)| s)
}

/// Filters a whole observation sequence.
pub fn filter_run(ctx: &FilterContext, observations: &[Vec<f64>]) -> Result<FilterRun> {
    let initial = ctx.components.initial.normalize(&ctx.domain)?;
    let mut states = vec![FilterState {
        t: 0,
        model: initial,
    }];
    let mut diagnostics = Vec::with_capacity(observations.len());
    for (k, y) in observations.iter().enumerate() {
        let step = k + 1;
        let prev = states.last().expect("non-empty");
        let at = |e: PsdError| PsdError::AtStep {
            step,
            source: Box::new(e),
        };
        let (next, evidence) = if prev.t == 0 {
            let (model, evidence) =
                filter_step_generic(&ctx.components, &prev.model, y, &ctx.domain).map_err(at)?;
            (FilterState { t: 1, model }, evidence)
        } else {
            let (next, trace) = filter_step_traced(ctx, prev, y).map_err(at)?;
            (next, trace.map(|t| t.evidence).unwrap_or(f64::NAN))
        };
        let mass = next.model.integrate(&ctx.domain).map_err(at)?;
        diagnostics.push(StepDiagnostics {
            step,
            normalization_residual: (mass - 1.0).abs(),
            min_eigenvalue: min_eigenvalue(next.coeffs()),
            evidence,
            state_size: next.model.n(),
        });
        states.push(next);
    }
    Ok(FilterRun {
        states,
        diagnostics,
    })
}

/// `K_{X~,X~,(eta'+eta+)/2}`, exposed for checks against the recursion's
/// normalization constant.
pub fn posterior_half_gram(ctx: &FilterContext) -> DMatrix<f64> {
    gram_sym(&ctx.base, ctx.precision.scaled(0.5).as_slice())
}
