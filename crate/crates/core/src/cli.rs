//! The `psdm` command line.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 on numerical
//! failures (`NotPsd`, `ZeroMass`, `ZeroEvidence`, ...). Errors are written
//! to stderr as one JSON object `{"error": kind, "message": text}`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compression::{compress, compression_error, CompressionPlan};
use crate::error::{PsdError, Result};
use crate::hmm::{filter_init, filter_run};
use crate::io::{
    model_to_json, read_components, read_model, read_table_file, write_model, Metadata, LARGE_MODEL,
};
use crate::kernel::{Hypercube, PointMatrix, Precision};
use crate::learning::{fit, FitConfig};
use crate::model::{Domain, GaussianPsdModel, VariableSplit};
use crate::moments::{characteristic_function, condition, covariance, mean};
use crate::oracle::{covering_box, grid_bayes_filter, integrate_numeric, QuadratureSpec};

#[derive(Parser, Debug)]
#[command(name = "psdm", version, about = "Gaussian PSD probability models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to samples (CSV with header).
    Fit(FitArgs),
    /// Evaluate a model at points.
    Eval(EvalArgs),
    /// Integrate a model over the whole space or a box.
    Integrate(DomainArgs),
    /// Rescale a model to unit mass.
    Normalize(DomainOutArgs),
    /// Integrate out one block.
    Marginalize(MarginalizeArgs),
    /// Condition on a block taking a fixed value.
    Condition(ConditionArgs),
    /// Pointwise product of two models.
    Product(ProductArgs),
    /// Nyström compression onto fewer base points.
    Compress(CompressArgs),
    /// Mean, covariance and characteristic function.
    Moments(MomentsArgs),
    /// Filter an observation sequence through an HMM.
    HmmFilter(HmmArgs),
    /// Compare closed-form operations with numerical quadrature.
    OracleCheck(OracleArgs),
    /// Tabulate a model on a grid as CSV.
    DensityCurve(CurveArgs),
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    samples: PathBuf,
    /// Box as `lo:hi` (all axes) or `lo:hi,lo:hi,...`.
    #[arg(long, allow_hyphen_values = true)]
    domain: String,
    #[arg(long)]
    lambda: Option<f64>,
    /// Precision, one value for all axes or comma separated.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    centers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smoothness for the automatic (lambda, eta, centers) schedule.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the fit report (JSON) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated point; repeat for several points.
    #[arg(long, required = true, allow_hyphen_values = true)]
    at: Vec<String>,
}

#[derive(Args, Debug)]
struct DomainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args, Debug)]
struct DomainOutArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MarginalizeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    block: String,
    /// Box in the marginalized block's coordinates.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConditionArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    block: String,
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    /// Box in the remaining coordinates used for normalization.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProductArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of uniformly drawn target points (needs --domain).
    #[arg(long, conflicts_with = "points")]
    m: Option<usize>,
    /// CSV of target points.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    jitter: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write error statistics on --domain (JSON) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MomentsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Frequency for the characteristic function; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    cf: Vec<String>,
}

#[derive(Args, Debug)]
struct HmmArgs {
    #[arg(long)]
    components: PathBuf,
    /// Observations CSV (header + one observation per row).
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    /// Directory for step_NNN.json models and diagnostics.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// integrate | hypercube | marginalize | moments | hmm | all
    suite: String,
    #[arg(long, default_value_t = 10)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long)]
    model: PathBuf,
    /// `lo:hi:count` for all axes or one per axis, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
}

/// Runs the CLI on `args` (including the program name) and returns the exit status.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(
                err,
                "{{\"error\": {}, \"message\": {}}}",
                serde_json::to_string(e.kind()).unwrap_or_default(),
                serde_json::to_string(&e.to_string()).unwrap_or_default()
            );
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Fit(a) => cmd_fit(a, out, err),
        Command::Eval(a) => {
            let (model, _) = read_model(&a.model)?;
            for p in &a.at {
                let x = parse_vector(p, "--at")?;
                writeln!(out, "{}", scalar(model.eval(&x)?))?;
            }
            Ok(0)
        }
        Command::Integrate(a) => {
            let (model, _) = read_model(&a.model)?;
            let domain = parse_domain(a.domain.as_deref(), model.dim())?;
            writeln!(out, "{}", scalar(model.integrate(&domain)?))?;
            Ok(0)
        }
        Command::Normalize(a) => {
            let (model, meta) = read_model(&a.model)?;
            let domain = parse_domain(a.domain.as_deref(), model.dim())?;
            emit_model(&model.normalize(&domain)?, &meta, a.out.as_deref(), out, err)
        }
        Command::Marginalize(a) => {
            let (model, meta) = read_model(&a.model)?;
            let (_, width) = model.split().locate(&a.block)?;
            let domain = parse_domain(a.domain.as_deref(), width)?;
            emit_model(&model.marginalize(&a.block, &domain)?, &meta, a.out.as_deref(), out, err)
        }
        Command::Condition(a) => {
            let (model, meta) = read_model(&a.model)?;
            let (_, width) = model.split().locate(&a.block)?;
            let x0 = parse_vector(&a.at, "--at")?;
            let domain = parse_domain(a.domain.as_deref(), model.dim() - width)?;
            emit_model(&condition(&model, &a.block, &x0, &domain)?, &meta, a.out.as_deref(), out, err)
        }
        Command::Product(a) => {
            let (left, _) = read_model(&a.left)?;
            let (right, _) = read_model(&a.right)?;
            emit_model(&left.multiply(&right)?, &Metadata::new(), a.out.as_deref(), out, err)
        }
        Command::Compress(a) => cmd_compress(a, out, err),
        Command::Moments(a) => cmd_moments(a, out),
        Command::HmmFilter(a) => cmd_hmm(a, out, err),
        Command::OracleCheck(a) => cmd_oracle(a, out),
        Command::DensityCurve(a) => cmd_curve(a, out),
    }
}

/// Fixed-point with 12 decimals, or scientific for tiny magnitudes.
fn scalar(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:.12e}")
    } else {
        format!("{v:.12}")
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_vector(text: &str, flag: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| PsdError::InvalidArgument(format!("{flag}: `{s}` is not a finite number")))
        })
        .collect()
}

fn parse_box(text: &str, dim: usize) -> Result<Hypercube> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 1 && parts.len() != dim {
        return Err(PsdError::InvalidArgument(format!(
            "--domain: expected 1 or {dim} intervals, found {}",
            parts.len()
        )));
    }
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    for t in 0..dim {
        let part = parts[if parts.len() == 1 { 0 } else { t }];
        let bounds = parse_vector(&part.replace(':', ","), "--domain")?;
        if bounds.len() != 2 {
            return Err(PsdError::InvalidArgument(format!("--domain: `{part}` is not lo:hi")));
        }
        lower.push(bounds[0]);
        upper.push(bounds[1]);
    }
    Hypercube::new(lower, upper)
}

fn parse_domain(text: Option<&str>, dim: usize) -> Result<Domain> {
    match text {
        None => Ok(Domain::FullSpace),
        Some(t) => Ok(Domain::Hypercube(parse_box(t, dim)?)),
    }
}

fn emit_model(
    model: &GaussianPsdModel,
    meta: &Metadata,
    path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    if model.n() > LARGE_MODEL {
        writeln!(err, "warning: model has {} base points (> {LARGE_MODEL})", model.n())?;
    }
    match path {
        Some(p) => write_model(p, model, meta)?,
        None => write!(out, "{}", model_to_json(model, meta))?,
    }
    Ok(0)
}

fn cmd_fit(a: FitArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let table = read_table_file(&a.samples)?;
    let samples = table.to_points()?;
    let dim = samples.dim();
    if dim == 0 {
        return Err(PsdError::InvalidArgument("samples file has no columns".into()));
    }
    let domain = parse_box(&a.domain, dim)?;
    let mut cfg = match a.beta {
        Some(beta) => FitConfig::from_schedule(samples.rows(), beta, domain, a.seed)?,
        None => {
            let (Some(lambda), Some(_), Some(centers)) = (a.lambda, a.eta.as_ref(), a.centers) else {
                return Err(PsdError::InvalidArgument(
                    "fit needs --beta or all of --lambda, --eta, --centers".into(),
                ));
            };
            FitConfig::new(lambda, Precision::isotropic(1.0, dim)?, centers, domain, a.seed)
        }
    };
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(e) = &a.eta {
        let v = parse_vector(e, "--eta")?;
        cfg.eta = if v.len() == 1 { Precision::isotropic(v[0], dim)? } else { Precision::new(v)? };
    }
    if let Some(c) = a.centers {
        cfg.num_centers = c;
    }
    if let Some(it) = a.max_iters {
        cfg.solver.max_iters = it;
    }
    let (model, report) = fit(&samples, &cfg)?;
    let mut meta = Metadata::new();
    meta.insert("lambda".into(), num(cfg.lambda));
    meta.insert("centers".into(), cfg.num_centers.to_string());
    meta.insert("seed".into(), a.seed.to_string());
    meta.insert("iterations".into(), report.iterations.to_string());
    meta.insert("converged".into(), report.converged.to_string());
    if let Some(p) = &a.report {
        let text = serde_json::to_string_pretty(&report).map_err(|e| PsdError::Io(e.to_string()))?;
        std::fs::write(p, text + "\n").map_err(|e| PsdError::Io(format!("{}: {e}", p.display())))?;
    }
    emit_model(&model, &meta, a.out.as_deref(), out, err)
}

fn cmd_compress(a: CompressArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (model, meta) = read_model(&a.model)?;
    let dim = model.dim();
    let domain = a.domain.as_deref().map(|t| parse_box(t, dim)).transpose()?;
    let mut plan = match (a.m, &a.points) {
        (Some(m), None) => {
            let Some(d) = &domain else {
                return Err(PsdError::InvalidArgument("--m needs --domain".into()));
            };
            CompressionPlan::uniform(m, d.clone(), a.seed)
        }
        (None, Some(p)) => CompressionPlan::provided(read_table_file(p)?.to_points()?),
        _ => return Err(PsdError::InvalidArgument("compress needs --m or --points".into())),
    };
    plan.jitter = a.jitter;
    let compressed = compress(&model, &plan)?;
    if let (Some(p), Some(d)) = (&a.report, &domain) {
        let e = compression_error(&model, &compressed, d, None)?;
        let text = format!(
            "{{\"max_abs\": {}, \"mixed_bound\": {}}}\n",
            num(e.max_abs),
            num(e.mixed_bound)
        );
        std::fs::write(p, text).map_err(|e| PsdError::Io(format!("{}: {e}", p.display())))?;
    }
    emit_model(&compressed, &meta, a.out.as_deref(), out, err)
}

fn cmd_moments(a: MomentsArgs, out: &mut dyn Write) -> Result<i32> {
    let (model, _) = read_model(&a.model)?;
    let mu = mean(&model)?;
    let cov = covariance(&model)?;
    let d = model.dim();
    let list = |v: &mut dyn Iterator<Item = f64>| v.map(num).collect::<Vec<_>>().join(", ");
    let mut text = String::from("{\n");
    let _ = writeln!(text, "  \"auto_normalized\": {},", mu.auto_normalized);
    let _ = writeln!(text, "  \"mean\": [{}],", list(&mut mu.value.iter().copied()));
    let rows: Vec<String> = (0..d)
        .map(|i| format!("[{}]", list(&mut (0..d).map(|j| cov.value[(i, j)]))))
        .collect();
    let _ = write!(text, "  \"covariance\": [{}]", rows.join(", "));
    if !a.cf.is_empty() {
        let mut entries = Vec::new();
        for w in &a.cf {
            let omega = parse_vector(w, "--cf")?;
            let phi = characteristic_function(&model, &omega)?.value;
            entries.push(format!(
                "    {{\"omega\": [{}], \"re\": {}, \"im\": {}}}",
                list(&mut omega.iter().copied()),
                num(phi.re),
                num(phi.im)
            ));
        }
        let _ = write!(text, ",\n  \"characteristic_function\": [\n{}\n  ]", entries.join(",\n"));
    }
    text.push_str("\n}\n");
    write!(out, "{text}")?;
    Ok(0)
}

fn cmd_hmm(a: HmmArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let components = read_components(&a.components)?;
    let table = read_table_file(&a.obs)?;
    if !table.rows.is_empty() && table.columns.len() != components.observation_dim() {
        return Err(PsdError::DimensionMismatch {
            expected: components.observation_dim(),
            got: table.columns.len(),
            context: "observation columns",
        });
    }
    let domain = parse_domain(a.domain.as_deref(), components.state_dim())?;
    let ctx = filter_init(components, domain)?;
    let run = filter_run(&ctx, &table.rows)?;
    let mut diag = String::from("{\n  \"steps\": [");
    let lines: Vec<String> = run
        .diagnostics
        .iter()
        .map(|d| {
            format!(
                "\n    {{\"step\": {}, \"evidence\": {}, \"normalization_residual\": {}, \"min_eigenvalue\": {}, \"state_size\": {}}}",
                d.step,
                num(d.evidence),
                num(d.normalization_residual),
                num(d.min_eigenvalue),
                d.state_size
            )
        })
        .collect();
    diag.push_str(&lines.join(","));
    if !lines.is_empty() {
        diag.push_str("\n  ");
    }
    diag.push_str("]\n}\n");
    match &a.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for s in &run.states {
                let mut meta = Metadata::new();
                meta.insert("step".into(), s.t.to_string());
                write_model(&dir.join(format!("step_{:03}.json", s.t)), &s.model, &meta)?;
            }
            std::fs::write(dir.join("diagnostics.json"), &diag)?;
            write!(out, "{diag}")?;
            Ok(0)
        }
        None => {
            let last = run.states.last().expect("initial state present");
            let mut meta = Metadata::new();
            meta.insert("step".into(), last.t.to_string());
            write!(err, "{diag}")?;
            emit_model(&last.model, &meta, None, out, err)
        }
    }
}

fn cmd_curve(a: CurveArgs, out: &mut dyn Write) -> Result<i32> {
    let (model, _) = read_model(&a.model)?;
    let d = model.dim();
    let parts: Vec<&str> = a.grid.split(',').collect();
    if parts.len() != 1 && parts.len() != d {
        return Err(PsdError::InvalidArgument(format!(
            "--grid: expected 1 or {d} axis specs, found {}",
            parts.len()
        )));
    }
    let mut axes = Vec::with_capacity(d);
    for t in 0..d {
        let part = parts[if parts.len() == 1 { 0 } else { t }];
        let f: Vec<&str> = part.split(':').collect();
        let bad = || PsdError::InvalidArgument(format!("--grid: `{part}` is not lo:hi:count"));
        if f.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = f[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = f[1].trim().parse().map_err(|_| bad())?;
        let count: usize = f[2].trim().parse().map_err(|_| bad())?;
        if count < 2 || !(lo < hi) {
            return Err(bad());
        }
        axes.push((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect::<Vec<_>>());
    }
    let mut header: Vec<String> = if d == 1 {
        vec!["x".into()]
    } else {
        (1..=d).map(|t| format!("x{t}")).collect()
    };
    header.push("f".into());
    writeln!(out, "{}", header.join(","))?;
    let total: usize = axes.iter().map(Vec::len).product();
    let mut x = vec![0.0; d];
    for flat in 0..total {
        let mut rest = flat;
        for t in (0..d).rev() {
            x[t] = axes[t][rest % axes[t].len()];
            rest /= axes[t].len();
        }
        let f = model.eval(&x)?;
        let cols: Vec<String> = x.iter().map(|v| num(*v)).chain(std::iter::once(num(f))).collect();
        writeln!(out, "{}", cols.join(","))?;
    }
    Ok(0)
}

/// Random PSD model with `n` points in `[-1, 1]^d`, precisions in `[0.5, 3]`
/// and a random low-rank-plus-diagonal coefficient matrix.
fn random_model(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<GaussianPsdModel> {
    let rank = rng.gen_range(1..=n);
    let g = DMatrix::from_fn(n, rank, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let a = &g * g.transpose() + DMatrix::identity(n, n) * 0.05;
    let pts: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let eta: Vec<f64> = (0..d).map(|_| 0.5 + 2.5 * rng.gen::<f64>()).collect();
    GaussianPsdModel::new(a, PointMatrix::new(n, d, pts)?, Precision::new(eta)?, None)
}

struct SuiteResult {
    cases: usize,
    worst: f64,
    tolerance: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn quad(f: impl Fn(&[f64]) -> f64, cube: &Hypercube) -> Result<f64> {
    Ok(integrate_numeric(f, cube, &QuadratureSpec::adaptive(1e-14, 1e-11))?.value)
}

fn suite(name: &str, cases: usize, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    let tolerance = if name == "hmm" { 1e-4 } else { 1e-8 };
    for k in 0..cases {
        let d = 1 + k % 3;
        let n = rng.gen_range(1..=if d == 3 { 2 } else { 4 });
        match name {
            "integrate" => {
                let m = random_model(rng, n, d)?;
                let closed = m.integrate(&Domain::FullSpace)?;
                let numeric = quad(|x| m.eval(x).unwrap_or(f64::NAN), &covering_box(&m, 6.0))?;
                worst = worst.max(rel(closed, numeric));
            }
            "hypercube" => {
                let m = random_model(rng, n, d)?;
                let lo: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 1.5 - 1.5).collect();
                let hi: Vec<f64> = lo.iter().map(|l| l + 0.2 + rng.gen::<f64>() * 1.5).collect();
                let cube = Hypercube::new(lo, hi)?;
                let closed = m.integrate(&Domain::Hypercube(cube.clone()))?;
                let numeric = quad(|x| m.eval(x).unwrap_or(f64::NAN), &cube)?;
                worst = worst.max(rel(closed, numeric));
            }
            "marginalize" => {
                let d = 2 + k % 2;
                let m = random_model(rng, n, d)?
                    .with_split(VariableSplit::new([("a", 1), ("b", d - 1)])?)?;
                let marg = m.marginalize("a", &Domain::FullSpace)?;
                let xb: Vec<f64> = (0..d - 1).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let eta = m.precision().as_slice()[0];
                let (lo, hi) = m
                    .points()
                    .iter_rows()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(r[0]), h.max(r[0])));
                let w = 6.0 / eta.sqrt();
                let cube = Hypercube::new(vec![lo - w], vec![hi + w])?;
                let numeric = quad(
                    |xa| {
                        let mut x = vec![xa[0]];
                        x.extend_from_slice(&xb);
                        m.eval(&x).unwrap_or(f64::NAN)
                    },
                    &cube,
                )?;
                worst = worst.max(rel(marg.eval(&xb)?, numeric));
            }
            "moments" => {
                let d = 1 + k % 2;
                let m = random_model(rng, n, d)?;
                let cube = covering_box(&m, 6.0);
                let z = quad(|x| m.eval(x).unwrap_or(f64::NAN), &cube)?;
                let mu = mean(&m)?.value;
                let cov = covariance(&m)?.value;
                for t in 0..d {
                    let num_mean = quad(|x| x[t] * m.eval(x).unwrap_or(f64::NAN), &cube)? / z;
                    // absolute scale: the box is a few units wide
                    worst = worst.max((mu[t] - num_mean).abs() / (1.0 + num_mean.abs()));
                    let var = quad(|x| (x[t] - num_mean).powi(2) * m.eval(x).unwrap_or(f64::NAN), &cube)? / z;
                    worst = worst.max(rel(cov[(t, t)], var));
                }
            }
            "hmm" => {
                let l1 = hmm_grid_case(rng)?;
                worst = worst.max(l1);
            }
            other => {
                return Err(PsdError::InvalidArgument(format!("unknown oracle suite `{other}`")));
            }
        }
    }
    Ok(SuiteResult {
        cases,
        worst,
        tolerance,
    })
}

/// L1 distance between the PSD filter and the grid filter after 3 steps
/// of a random 1-d chain.
fn hmm_grid_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let diag = |rng: &mut ChaCha8Rng, k: usize, e1: f64, e2: f64| -> Result<GaussianPsdModel> {
        let cs: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let pts: Vec<f64> = cs.iter().flat_map(|c| [*c, *c + 0.2 * (rng.gen::<f64>() - 0.5)]).collect();
        GaussianPsdModel::new(DMatrix::identity(k, k), PointMatrix::new(k, 2, pts)?, Precision::new(vec![e1, e2])?, None)
    };
    let tr = diag(rng, 3, 1.0, 1.0)?;
    let ob = diag(rng, 2, 2.0, 1.0)?;
    let p0 = random_model(rng, 2, 1)?;
    let ctx = filter_init(crate::hmm::HmmComponents::new(tr.clone(), ob.clone(), p0.clone())?, Domain::FullSpace)?;
    let obs: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.gen::<f64>() - 0.5]).collect();
    let run = filter_run(&ctx, &obs)?;
    let grid: Vec<f64> = (0..2001).map(|i| -5.0 + 10.0 * i as f64 / 2000.0).collect();
    let dens = grid_bayes_filter(
        |xp, x| tr.eval(&[xp, x]).unwrap_or(f64::NAN),
        |y: &[f64], x| ob.eval(&[y[0], x]).unwrap_or(f64::NAN),
        |x| p0.eval(&[x]).unwrap_or(f64::NAN),
        &obs,
        &grid,
    )?;
    let last = run.states.last().expect("states");
    let mut l1 = 0.0;
    for (x, q) in grid.iter().zip(dens.last().expect("densities")) {
        l1 += (last.model.eval(&[*x])? - q).abs();
    }
    Ok(l1 * 10.0 / 2000.0)
}

fn cmd_oracle(a: OracleArgs, out: &mut dyn Write) -> Result<i32> {
    let names: Vec<&str> = if a.suite == "all" {
        vec!["integrate", "hypercube", "marginalize", "moments", "hmm"]
    } else {
        vec![a.suite.as_str()]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut ok = true;
    for name in names {
        let r = suite(name, a.cases, &mut rng)?;
        let pass = r.worst <= r.tolerance;
        ok &= pass;
        writeln!(
            out,
            "{{\"suite\": \"{name}\", \"cases\": {}, \"max_error\": {:.3e}, \"tolerance\": {:.0e}, \"pass\": {pass}}}",
            r.cases, r.worst, r.tolerance
        )?;
    }
    Ok(if ok { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_interval_broadcasts() {
        let b = parse_box("-1:2", 3).unwrap();
        assert_eq!(b.lower(), &[-1.0, -1.0, -1.0]);
        assert_eq!(b.upper(), &[2.0, 2.0, 2.0]);
        let b = parse_box("0:1,-3:-2", 2).unwrap();
        assert_eq!(b.lower(), &[0.0, -3.0]);
        assert!(parse_box("0:1,0:1", 3).is_err());
        assert!(parse_box("0:1:2", 1).is_err());
        assert!(parse_box("1:0", 1).is_err());
    }

    #[test]
    fn vectors_reject_non_finite() {
        assert_eq!(parse_vector("1, -2.5", "--at").unwrap(), vec![1.0, -2.5]);
        assert!(parse_vector("nan", "--at").is_err());
        assert!(parse_vector("1,,2", "--at").is_err());
    }

    #[test]
    fn scalars_switch_to_scientific_when_tiny() {
        assert_eq!(scalar(1.0), "1.000000000000");
        assert_eq!(scalar(0.0), "0.000000000000");
        assert_eq!(scalar(2.5e-7), "2.500000000000e-7");
    }

    #[test]
    fn missing_domain_means_full_space() {
        assert_eq!(parse_domain(None, 2).unwrap(), Domain::FullSpace);
    }
}
