use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lsmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsmc")).args(args).output().expect("binary runs")
}

fn fixture(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_csv_column(path: &Path, col: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == col).unwrap();
    lines.map(|l| l.split(',').nth(j).unwrap().parse().unwrap()).collect()
}

fn toml_value(path: &Path) -> toml::Table {
    fs::read_to_string(path).unwrap().parse().unwrap()
}

fn float_matrix(v: &toml::Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_float().unwrap()).collect())
        .collect()
}

const SMALL_GBM: &str = r#"
[model]
kind = "gbm"
s0 = [68.05]
rate = 0.015
vols = [0.133]

[payoff]
kind = "vanilla_put"
strikes = [70.0]
weights = [1.0]

[grid]
num_exercise_dates = 10
steps_per_year = 252

[basis]
family = "laguerre"
max_degree = 3

[run]
n_paths = 4000
n_runs = 6
seed = 5
path_counts = [500]
reps = 4
"#;

#[test]
fn zero_vol_out_of_the_money_put_prices_to_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "job.toml", &SMALL_GBM.replace("vols = [0.133]", "vols = [0.0]").replace("70.0]", "60.0]"));
    let out = dir.path().join("out");
    let o = lsmc(&["--out", out.to_str().unwrap(), "price", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_csv_column(&out.join("price.csv"), "price"), vec![0.0]);
}

#[test]
fn price_writes_reports_and_fits_in_date_order() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "job.toml", SMALL_GBM);
    let out = dir.path().join("out");
    let o = lsmc(&["--out", out.to_str().unwrap(), "price", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("price "));
    let dates = read_csv_column(&out.join("fits.csv"), "date");
    assert_eq!(dates, (1..10).map(f64::from).collect::<Vec<_>>());
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.starts_with("# lsmc price "));
    assert!(report.contains("seed: 5"));
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "job.toml", SMALL_GBM);
    let mut bodies = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("w{workers}"));
        let o_str = out.to_str().unwrap();
        for cmd in ["price", "density"] {
            let o = lsmc(&["--workers", workers, "--out", o_str, cmd, "--config", cfg.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        }
        let mut files = Vec::new();
        for f in ["price.csv", "fits.csv", "samples.csv", "density.csv", "summary.csv"] {
            files.push(fs::read(out.join(f)).unwrap());
        }
        // Only the first line of the report may differ.
        let report = fs::read_to_string(out.join("report.txt")).unwrap();
        files.push(report.lines().skip(1).collect::<Vec<_>>().join("\n").into_bytes());
        bodies.push(files);
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn seed_flag_overrides_config_and_changes_result() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "job.toml", SMALL_GBM);
    let run = |seed: &str| {
        let out = dir.path().join(format!("s{seed}"));
        let o = lsmc(&["--seed", seed, "--out", out.to_str().unwrap(), "price", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        fs::read(out.join("price.csv")).unwrap()
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn density_two_runs_is_deterministic_and_normalised() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "job.toml", SMALL_GBM);
    let mut samples = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("d{k}"));
        let o = lsmc(&["--out", out.to_str().unwrap(), "density", "--config", cfg.to_str().unwrap(), "--runs", "2"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        samples.push(fs::read(out.join("samples.csv")).unwrap());
        let x = read_csv_column(&out.join("density.csv"), "abscissa");
        let y = read_csv_column(&out.join("density.csv"), "density");
        assert_eq!(x.len(), 512);
        let mass: f64 = (1..x.len()).map(|i| 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1])).sum();
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        assert_eq!(
            summary.lines().next().unwrap(),
            "strike,put_market,put_mu,put_sigma,call_market,call_mu,call_sigma"
        );
    }
    assert_eq!(samples[0], samples[1]);
    assert_eq!(String::from_utf8_lossy(&samples[0]).lines().count(), 3);
}

#[test]
fn convergence_with_one_path_count_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "job.toml", SMALL_GBM);
    let out = dir.path().join("out");
    let o = lsmc(&["--out", out.to_str().unwrap(), "convergence", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("n_paths,mean_abs_error,sd,mean_price,reference\n500,"));
}

#[test]
fn lattice_convergence_uses_exact_reference() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = lsmc(&[
        "--out",
        out.to_str().unwrap(),
        "convergence",
        "--config",
        &fixture("lattice/three_date.toml"),
        "--paths",
        "1000,100000",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mae = read_csv_column(&out.join("convergence.csv"), "mean_abs_error");
    let reference = read_csv_column(&out.join("convergence.csv"), "reference");
    assert!((reference[0] - 10.473718754).abs() < 1e-6);
    assert!(mae[1] < mae[0]);
}

#[test]
fn fixture_configs_all_validate() {
    // A 50-path convergence run loads and validates every fixture.
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let dir = TempDir::new().unwrap();
    let mut n = 0;
    for sub in ["table3", "table4", "lmm", "lattice"] {
        for entry in fs::read_dir(root.join(sub)).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "toml") && p.file_name().unwrap() != "model.toml" {
                let out = dir.path().join(format!("f{n}"));
                let o = lsmc(&[
                    "--out",
                    out.to_str().unwrap(),
                    "convergence",
                    "--config",
                    p.to_str().unwrap(),
                    "--paths",
                    "50",
                ]);
                // Reference-less fixtures must fail on the reference only.
                if o.status.code() != Some(0) {
                    assert!(stderr(&o).contains("run.reference"), "{}: {}", p.display(), stderr(&o));
                }
                n += 1;
            }
        }
    }
    assert!(n >= 30);
}

#[test]
fn table3_fixture_eur_k70() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = lsmc(&["--out", out.to_str().unwrap(), "price", "--config", &fixture("table3/eur_put_k70.toml")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let p = read_csv_column(&out.join("price.csv"), "price")[0];
    assert!((p - 2.63).abs() <= 0.05, "{p}");
}

#[test]
fn table4_fixture_dax_k70() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = lsmc(&["--out", out.to_str().unwrap(), "price", "--config", &fixture("table4/dax_put_k70.toml")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let p = read_csv_column(&out.join("price.csv"), "price")[0];
    assert!((p - 1.70).abs() <= 0.05, "{p}");
}

#[test]
fn oracle_reproduces_tree_price_and_intrinsic() {
    let o = lsmc(&[
        "oracle", "--s0", "68.05", "--strike", "70", "--rate", "0.015", "--sigma", "0.133", "--days", "49", "--steps", "49",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert!(line.starts_with("crr american put price 2.66"), "{line}");

    let o = lsmc(&["oracle", "--s0", "68.05", "--strike", "70", "--rate", "0.015", "--sigma", "0", "--maturity", "0.2"]);
    assert!(stdout(&o).contains("price 1.950000"), "{}", stdout(&o));

    let o = lsmc(&[
        "oracle", "--s0", "68.05", "--strike", "70", "--rate", "0.015", "--sigma", "0.133", "--days", "49", "--check",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("black_scholes"));
}

#[test]
fn gbm_cov_on_identical_columns_gives_unit_correlation() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("date,a,b\n");
    let mut p = 100.0f64;
    for d in 0..60 {
        p *= 1.0 + 0.01 * ((d * 7 % 5) as f64 - 2.0);
        csv.push_str(&format!("2020-{:02}-{:02},{p},{p}\n", 1 + d / 28, 1 + d % 28));
    }
    let input = write(dir.path(), "panel.csv", &csv);
    let out = dir.path().join("out");
    let o = lsmc(&["--out", out.to_str().unwrap(), "calibrate", "--input", input.to_str().unwrap(), "--method", "gbm-cov"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let frag = toml_value(&out.join("gbm-cov.toml"));
    let corr = float_matrix(&frag["model"]["corr"]);
    assert_eq!(corr[0][1], 1.0);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("window: 50 returns"));
}

#[test]
fn pca_lmm_on_rank_one_panel_has_one_factor() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("date,r1,r2,r3\n");
    let mut f = 0.0f64;
    for d in 0..80u32 {
        f += 0.01 * (((d * 37) % 11) as f64 - 5.0);
        let r: Vec<String> = [1.0, 2.0, 3.0].iter().map(|s| (0.01 * (s * f).exp()).to_string()).collect();
        csv.push_str(&format!("2021-{:02}-{:02},{}\n", 1 + d / 28, 1 + d % 28, r.join(",")));
    }
    let input = write(dir.path(), "rates.csv", &csv);
    let out = dir.path().join("out");
    let o = lsmc(&["--out", out.to_str().unwrap(), "calibrate", "--input", input.to_str().unwrap(), "--method", "pca-lmm"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lambda = float_matrix(&toml_value(&out.join("pca-lmm.toml"))["model"]["vol_matrix"]);
    assert_eq!(lambda.len(), 3);
    for row in &lambda {
        assert!(row[0].abs() > 1e-3);
        assert!(row[1].abs() < 1e-9 && row[2].abs() < 1e-9, "{row:?}");
    }
    assert!(fs::read_to_string(out.join("report.txt")).unwrap().contains("warning"));
}

#[test]
fn hn_mle_round_trip_through_synthetic_panel() {
    let dir = TempDir::new().unwrap();
    let panel_dir = dir.path().join("panel");
    let o = lsmc(&[
        "--out",
        panel_dir.to_str().unwrap(),
        "synth",
        "--config",
        &fixture("table4/eur_physical_synth.toml"),
        "--paths",
        "2041",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out");
    let o = lsmc(&[
        "--out",
        out.to_str().unwrap(),
        "calibrate",
        "--input",
        panel_dir.join("panel.csv").to_str().unwrap(),
        "--method",
        "hn-mle",
        "--rate",
        "0.015",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let frag = toml_value(&out.join("hn-mle.toml"));
    for (k, truth) in [("omega", 2.738e-5), ("alpha", 5.238e-5), ("beta", 0.086)] {
        let v = frag["model"][k].as_float().unwrap();
        assert!((v - truth).abs() / truth < 0.10, "{k}: {v} vs {truth}");
    }
}

#[test]
fn calibrated_fragment_plugs_into_a_job() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("date,a,b\n");
    let (mut p, mut q) = (50.0f64, 80.0f64);
    for d in 0..120u32 {
        p *= 1.0 + 0.004 * (((d * 13) % 7) as f64 - 3.0);
        q *= 1.0 + 0.003 * (((d * 5) % 9) as f64 - 4.0);
        csv.push_str(&format!("2022-{:02}-{:02},{p},{q}\n", 1 + d / 28, 1 + d % 28));
    }
    let input = write(dir.path(), "panel.csv", &csv);
    let o = lsmc(&["--out", dir.path().to_str().unwrap(), "calibrate", "--input", input.to_str().unwrap(), "--method", "gbm-cov", "--rate", "0.02"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let job = r#"
fragments = ["gbm-cov.toml"]

[payoff]
kind = "dual_strike_put"
strikes = [50.0, 80.0]
weights = [1.0, 1.0]

[grid]
num_exercise_dates = 5
steps_per_year = 52

[basis]
family = "bivariate"

[run]
n_paths = 2000
seed = 1
"#;
    let cfg = write(dir.path(), "job.toml", job);
    let o = lsmc(&["--out", dir.path().join("o").to_str().unwrap(), "price", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (SMALL_GBM.replace("n_paths = 4000", "n_paths = 0"), "run.n_paths"),
        (SMALL_GBM.replace("seed = 5\n", ""), "run.seed"),
        (SMALL_GBM.replace("weights = [1.0]", "weights = [1.0, 1.0]"), "payoff.weights"),
        (SMALL_GBM.replace("steps_per_year = 252", "steps_per_year = 252\ndt_years = 0.1"), "grid"),
        (SMALL_GBM.replace("n_runs = 6", "n_runz = 6"), "n_runz"),
        (SMALL_GBM.replace("kind = \"gbm\"", "kind = \"bachelier\""), "bachelier"),
    ];
    for (i, (text, key)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), text);
        let o = lsmc(&["--out", dir.path().join("o").to_str().unwrap(), "price", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "case {i}: {}", stderr(&o));
        assert!(stderr(&o).contains(key), "case {i}: {}", stderr(&o));
    }
    // Nothing is written for a rejected config.
    assert!(!dir.path().join("o").join("price.csv").exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(lsmc(&["price"]).status.code(), Some(1));
    assert_eq!(lsmc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lsmc(&["price", "--config", "/definitely/missing.toml"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_two_with_line_number() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "bad.csv", "date,a,b\n2020-01-01,1,2\n2020-01-02,x,2\n");
    let o = lsmc(&["--out", dir.path().to_str().unwrap(), "calibrate", "--input", input.to_str().unwrap(), "--method", "gbm-cov"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn numerical_errors_exit_three() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("date,p\n");
    for d in 0..60 {
        csv.push_str(&format!("2020-{:02}-{:02},100\n", 1 + d / 28, 1 + d % 28));
    }
    let input = write(dir.path(), "flat.csv", &csv);
    let o = lsmc(&["--out", dir.path().to_str().unwrap(), "calibrate", "--input", input.to_str().unwrap(), "--method", "hn-mle"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn nested_fragments_resolve_files_from_their_own_directory() {
    let dir = TempDir::new().unwrap();
    let job = format!(
        "fragments = [\"{}\"]\n\n[run]\nn_paths = 500\nseed = 2\n",
        fixture("lmm/futures_call_k99.toml")
    );
    let cfg = write(dir.path(), "job.toml", &job);
    let o = lsmc(&["--out", dir.path().join("o").to_str().unwrap(), "price", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let looped = write(dir.path(), "loop.toml", "fragments = [\"loop.toml\"]\n");
    let o = lsmc(&["price", "--config", looped.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
