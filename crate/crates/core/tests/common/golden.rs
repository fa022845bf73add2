//! CLI transcripts compared byte-for-byte against `tests/golden/*.txt`.
//! Set `UPDATE_GOLDEN=1` to rewrite the expected files.

use std::path::{Path, PathBuf};

use gauss_psd::hmm::HmmComponents;
use gauss_psd::io::{components_to_json, model_to_json, write_table, Metadata, Table};
use gauss_psd::{GaussianPsdModel, PointMatrix, Precision};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// `A = [[1, -1/2], [-1/2, 1/4]]`, `X = (0; 2)`, `eta = 1`.
pub fn negative_weight_model() -> GaussianPsdModel {
    GaussianPsdModel::new(
        DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 0.25]),
        PointMatrix::from_column(&[0.0, 2.0]).unwrap(),
        Precision::new(vec![1.0]).unwrap(),
        None,
    )
    .unwrap()
}

fn chain_components() -> HmmComponents {
    let diag = |cs: &[f64], e1: f64, e2: f64| {
        let pts: Vec<Vec<f64>> = cs.iter().map(|c| vec![*c, *c]).collect();
        GaussianPsdModel::new(
            DMatrix::identity(cs.len(), cs.len()),
            PointMatrix::from_rows(&pts).unwrap(),
            Precision::new(vec![e1, e2]).unwrap(),
            None,
        )
        .unwrap()
    };
    let p0 = GaussianPsdModel::new(
        DMatrix::identity(1, 1),
        PointMatrix::from_column(&[0.3]).unwrap(),
        Precision::new(vec![0.5]).unwrap(),
        None,
    )
    .unwrap();
    HmmComponents::new(
        diag(&[-1.0, -0.5, 0.0, 0.5, 1.0], 1.0, 1.0),
        diag(&[-1.0, 0.0, 1.0], 2.0, 1.0),
        p0,
    )
    .unwrap()
}

fn write_csv(path: &Path, columns: &[&str], rows: Vec<Vec<f64>>) {
    let table = Table {
        columns: columns.iter().map(|s| s.to_string()).collect(),
        rows,
    };
    write_table(std::fs::File::create(path).unwrap(), &table).unwrap();
}

/// Writes every input file used by the scenarios into `dir`.
pub fn write_inputs(dir: &Path) {
    let m = negative_weight_model();
    std::fs::write(dir.join("neg.json"), model_to_json(&m, &Metadata::new())).unwrap();
    let tampered = model_to_json(&m, &Metadata::new()).replace("-5.0000000000000000e-1", "-2.0000000000000000e0");
    std::fs::write(dir.join("tampered.json"), tampered).unwrap();
    let two = GaussianPsdModel::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        PointMatrix::from_rows(&[vec![0.0, 0.5], vec![1.0, -0.5]]).unwrap(),
        Precision::new(vec![1.0, 2.0]).unwrap(),
        Some(gauss_psd::VariableSplit::new([("a", 1), ("b", 1)]).unwrap()),
    )
    .unwrap();
    std::fs::write(dir.join("two.json"), model_to_json(&two, &Metadata::new())).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rows = Vec::new();
    while rows.len() < 60 {
        let v: f64 = StandardNormal.sample(&mut rng);
        if v.abs() <= 3.0 {
            rows.push(vec![v]);
        }
    }
    write_csv(&dir.join("samples.csv"), &["x"], rows);
    std::fs::write(dir.join("chain.json"), components_to_json(&chain_components())).unwrap();
    write_csv(&dir.join("obs.csv"), &["y"], vec![vec![0.4], vec![-0.3], vec![0.8]]);
    std::fs::write(dir.join("empty.csv"), "").unwrap();
    write_csv(&dir.join("targets.csv"), &["x"], vec![vec![0.0], vec![1.0], vec![2.0]]);
}

/// Scenario name and its command lines; `{dir}` expands to the work directory.
pub fn scenarios() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        (
            "basics",
            vec![
                "eval --model {dir}/neg.json --at 1 --at 0,",
                "eval --model {dir}/neg.json --at 1 --at 0 --at 2",
                "integrate --model {dir}/neg.json",
                "integrate --model {dir}/neg.json --domain -1:1",
                "normalize --model {dir}/neg.json --out {dir}/unit.json",
                "integrate --model {dir}/unit.json",
                "moments --model {dir}/neg.json --cf 0.5",
                "density-curve --model {dir}/neg.json --grid -1:3:5",
            ],
        ),
        (
            "blocks",
            vec![
                "marginalize --model {dir}/two.json --block a",
                "condition --model {dir}/two.json --block b --at 0.25",
                "product --left {dir}/neg.json --right {dir}/neg.json",
                "compress --model {dir}/neg.json --points {dir}/targets.csv",
            ],
        ),
        (
            "fit",
            vec![
                "fit --samples {dir}/samples.csv --domain -3:3 --lambda 1e-3 --eta 0.5 --centers 6 --seed 3 --max-iters 200",
                "fit --samples {dir}/samples.csv --domain -3:3 --beta 2 --seed 4 --max-iters 50 --out {dir}/fit.json",
                "eval --model {dir}/fit.json --at 0",
            ],
        ),
        (
            "hmm",
            vec![
                "hmm-filter --components {dir}/chain.json --obs {dir}/obs.csv --out-dir {dir}/steps",
                "eval --model {dir}/steps/step_003.json --at 0.5",
                "hmm-filter --components {dir}/chain.json --obs {dir}/empty.csv",
            ],
        ),
        (
            "errors",
            vec![
                "eval --model {dir}/neg.json --at 1,2",
                "integrate --model {dir}/tampered.json",
                "eval --model {dir}/neg.json --at 1 --bogus",
                "condition --model {dir}/neg.json --block x --at 0",
                "compress --model {dir}/neg.json --m 3",
            ],
        ),
        ("oracle", vec!["oracle-check integrate --cases 3 --seed 5"]),
    ]
}

/// Runs one scenario and returns its transcript with `dir` replaced by `{dir}`.
pub fn transcript(dir: &Path, commands: &[&str]) -> String {
    let dir_text = dir.to_str().unwrap();
    let mut text = String::new();
    for line in commands {
        let expanded = line.replace("{dir}", dir_text);
        let mut argv = vec!["psdm".to_string()];
        argv.extend(expanded.split_whitespace().map(String::from));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = gauss_psd::cli::run(argv, &mut out, &mut err);
        text.push_str(&format!("$ psdm {line}\n"));
        text.push_str(&String::from_utf8(out).unwrap());
        for l in String::from_utf8(err).unwrap().lines() {
            text.push_str(&format!("! {l}\n"));
        }
        text.push_str(&format!("[exit {code}]\n"));
    }
    text.replace(dir_text, "{dir}")
}

/// Compares (or with `UPDATE_GOLDEN` set, rewrites) every scenario.
/// Returns the names of mismatching scenarios.
pub fn check_all() -> Vec<String> {
    let tmp = tempfile::tempdir().unwrap();
    write_inputs(tmp.path());
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut failed = Vec::new();
    for (name, commands) in scenarios() {
        let got = transcript(tmp.path(), &commands);
        let path = golden_dir().join(format!("{name}.txt"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &got).unwrap();
            continue;
        }
        match std::fs::read_to_string(&path) {
            Ok(expected) if expected == got => {}
            _ => failed.push(name.to_string()),
        }
    }
    failed
}
