use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate, Utc, Weekday};
use lsmc::calibration::{
    estimate_gbm_cov, fit_hn_mle, interpolate_constant_maturity, log_returns, maturity_from_label,
    pca_vol_structure, MleOptions, PricePanel,
};
use lsmc::engine::PriceEstimate;
use lsmc::grid::TimeGrid;
use lsmc::lattice::exact_snell_oracle;
use lsmc::models::hn_long_run_vol;
use lsmc::oracles::{black_scholes_european, crr_price, CrrSpec, Exercise, Side};
use lsmc::payoff::PayoffKind;
use lsmc::runs::{
    convergence, multi_run, write_convergence, write_density, write_fit_report, write_price_report, write_samples,
    write_summary_table, Source, SummaryRow,
};

use crate::config::{Job, ModelConfig};
use crate::error::CliError;

/// Steps used for the CRR reference price of `convergence`.
pub const REFERENCE_CRR_STEPS: usize = 2000;

pub struct OutputTarget {
    pub dir: PathBuf,
}

impl OutputTarget {
    /// `--out` wins; then `output.directory` (relative to the config file); then the working directory.
    pub fn resolve(flag: Option<&Path>, job: Option<&Job>) -> Result<Self, CliError> {
        let dir = match (flag, job.and_then(|j| j.config.output.directory.as_ref().map(|d| j.base_dir.join(d)))) {
            (Some(f), _) => f.to_path_buf(),
            (None, Some(d)) => d,
            (None, None) => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputTarget { dir })
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    /// Human-readable report; only the first line varies between runs.
    pub fn report(&self, command: &str, body: &str) -> Result<(), CliError> {
        let text = format!("# lsmc {command} {}\n{body}", Utc::now().to_rfc3339());
        let path = self.dir.join("report.txt");
        fs::write(&path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }
}

fn describe(job: &Job) -> String {
    let c = &job.config;
    let model = match &c.model {
        ModelConfig::Gbm { .. } => "gbm",
        ModelConfig::Lmm { .. } => "lmm",
        ModelConfig::HestonNandi { .. } => "heston_nandi",
        ModelConfig::Lattice { .. } => "lattice",
    };
    format!(
        "model: {model}\npayoff: {:?} strikes {:?}\ngrid: {} dates x {} steps, dt {}\n",
        c.payoff.kind, c.payoff.strikes, c.grid.num_exercise_dates, c.grid.steps_per_exercise,
        job.grid().map(|g| g.dt_years).unwrap_or(f64::NAN)
    )
}

fn estimate_lines(est: &PriceEstimate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "price: {}", est.price);
    let _ = writeln!(s, "std_error: {}", est.std_error);
    let _ = writeln!(s, "continuation_mean: {}", est.continuation_mean);
    let _ = writeln!(s, "immediate: {}", est.immediate);
    let _ = writeln!(s, "n_paths: {}", est.n_paths);
    let worst = est
        .per_date_fits
        .iter()
        .map(|f| f.condition)
        .fold(0.0f64, |a, b| if b.is_nan() { a } else { a.max(b) });
    let _ = writeln!(s, "worst gram condition: {worst:e}");
    s
}

pub fn price(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<String, CliError> {
    let job = Job::load(config)?;
    let seed = job.seed(seed)?;
    let pipeline = job.pipeline()?;
    let target = OutputTarget::resolve(out, Some(&job))?;
    let est = pipeline.run(job.config.run.n_paths, seed)?;
    write_price_report(&est, target.create("price.csv")?)?;
    write_fit_report(&est, target.create("fits.csv")?)?;
    let body = format!("{}basis: {}\nseed: {seed}\n{}", describe(&job), pipeline.basis.name(), estimate_lines(&est));
    target.report("price", &body)?;
    Ok(format!("price {:.6} (se {:.6})", est.price, est.std_error))
}

pub fn density(config: &Path, seed: Option<u64>, runs: Option<usize>, out: Option<&Path>) -> Result<String, CliError> {
    let job = Job::load(config)?;
    let seed = job.seed(seed)?;
    let n_runs = runs.unwrap_or(job.config.run.n_runs);
    if n_runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let pipeline = job.pipeline()?;
    let target = OutputTarget::resolve(out, Some(&job))?;
    let dist = multi_run(&pipeline, n_runs, job.config.run.n_paths, seed)?;
    write_samples(&dist, target.create("samples.csv")?)?;
    write_density(&dist, target.create("density.csv")?)?;

    let output = &job.config.output;
    let key_name = output.summary_key.clone().unwrap_or_else(|| "strike".into());
    let key = output.summary_label.clone().unwrap_or_else(|| {
        let ks: Vec<String> = job.config.payoff.strikes.iter().map(f64::to_string).collect();
        ks.join("/")
    });
    let stats = Some((dist.mean, dist.sd));
    let row = if job.payoff_kind() == PayoffKind::VanillaCall {
        SummaryRow { key, put_market: None, put: None, call_market: output.market_price, call: stats }
    } else {
        SummaryRow { key, put_market: output.market_price, put: stats, call_market: None, call: None }
    };
    write_summary_table(&key_name, &[row], target.create("summary.csv")?)?;

    let body = format!(
        "{}basis: {}\nseed: {seed}\nruns: {n_runs} x {} paths\nmean: {}\nsd: {}\nbandwidth: {}\n",
        describe(&job),
        pipeline.basis.name(),
        job.config.run.n_paths,
        dist.mean,
        dist.sd,
        dist.bandwidth
    );
    target.report("density", &body)?;
    Ok(format!("mean {:.6} sd {:.6} over {n_runs} runs", dist.mean, dist.sd))
}

/// Exact value for lattices, a CRR American price for a univariate vanilla GBM
/// job, otherwise `run.reference`.
fn reference_price(job: &Job, source: &Source) -> Result<f64, CliError> {
    if let Some(r) = job.config.run.reference {
        return Ok(r);
    }
    if let Source::Lattice(l) = source {
        return Ok(exact_snell_oracle(l));
    }
    let payoff = &job.config.payoff;
    let side = match payoff.kind {
        PayoffKind::VanillaPut => Some(Side::Put),
        PayoffKind::VanillaCall => Some(Side::Call),
        _ => None,
    };
    match (&job.config.model, side) {
        (ModelConfig::Gbm { s0, rate, vols, .. }, Some(side))
            if s0.len() == 1 && payoff.weights == [1.0] && payoff.offset == 0.0 =>
        {
            let grid = job.grid()?;
            let spec = CrrSpec {
                s0: s0[0],
                strike: payoff.strikes[0],
                rate: *rate,
                sigma: vols[0],
                maturity: grid.maturity_years(),
                steps: REFERENCE_CRR_STEPS,
                exercise: Exercise::American,
                side,
            };
            Ok(crr_price(&spec)?.price)
        }
        _ => Err(CliError::Config(
            "run.reference is required unless the model is a lattice or a univariate GBM vanilla option".into(),
        )),
    }
}

pub fn convergence_cmd(
    config: &Path,
    seed: Option<u64>,
    path_counts: Option<Vec<usize>>,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let job = Job::load(config)?;
    let seed = job.seed(seed)?;
    let counts = path_counts.unwrap_or_else(|| job.config.run.path_counts.clone());
    if counts.is_empty() {
        return Err(CliError::Config("run.path_counts is empty (or pass --paths)".into()));
    }
    if counts.contains(&0) {
        return Err(CliError::Config("run.path_counts entries must be at least 1".into()));
    }
    let pipeline = job.pipeline()?;
    let reference = reference_price(&job, &pipeline.source)?;
    let target = OutputTarget::resolve(out, Some(&job))?;
    let rows = convergence(&pipeline, &counts, job.config.run.reps, reference, seed)?;
    write_convergence(&rows, reference, target.create("convergence.csv")?)?;
    let mut body = format!("{}basis: {}\nseed: {seed}\nreference: {reference}\n", describe(&job), pipeline.basis.name());
    for r in &rows {
        let _ = writeln!(body, "N={} mae={} sd={}", r.n_paths, r.mean_abs_error, r.sd);
    }
    target.report("convergence", &body)?;
    let last = rows.last().expect("non-empty");
    Ok(format!("reference {reference:.6}; N={} mean abs error {:.6}", last.n_paths, last.mean_abs_error))
}

pub struct OracleArgs {
    pub s0: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub steps: usize,
    pub side: Side,
    pub exercise: Exercise,
    pub check: bool,
}

/// Tolerance for the Black-Scholes versus CRR European cross-check.
pub const BS_CRR_TOLERANCE: f64 = 0.005;

pub fn oracle(a: &OracleArgs) -> Result<String, CliError> {
    let spec = CrrSpec {
        s0: a.s0,
        strike: a.strike,
        rate: a.rate,
        sigma: a.sigma,
        maturity: a.maturity,
        steps: a.steps,
        exercise: a.exercise,
        side: a.side,
    };
    let p = crr_price(&spec)?;
    let mut line = format!(
        "crr {:?} {:?} price {:.6} early_exercise_premium {:.6}",
        a.exercise, a.side, p.price, p.early_exercise_premium
    )
    .to_lowercase();
    if a.check {
        let bs = black_scholes_european(a.s0, a.strike, a.rate, a.sigma, a.maturity, a.side)?;
        let eu = crr_price(&CrrSpec { exercise: Exercise::European, ..spec })?.price;
        let diff = (bs - eu).abs();
        let _ = write!(line, "\nblack_scholes {bs:.6} crr_european {eu:.6} diff {diff:.6}");
        if diff >= BS_CRR_TOLERANCE {
            return Err(CliError::Numerical(format!(
                "{line}\nBlack-Scholes and CRR European differ by {diff:.6} (tolerance {BS_CRR_TOLERANCE})"
            )));
        }
    }
    Ok(line)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PcaLmm,
    GbmCov,
    HnMle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::PcaLmm => "pca-lmm",
            Method::GbmCov => "gbm-cov",
            Method::HnMle => "hn-mle",
        }
    }
}

pub struct CalibrateArgs {
    pub input: PathBuf,
    pub method: Method,
    pub window: Option<usize>,
    pub columns: Vec<String>,
    /// Annual continuously compounded rate written into gbm / heston_nandi fragments.
    pub rate: f64,
    pub horizons: Vec<u32>,
    pub spot: Option<String>,
    pub free_gamma: bool,
    pub day_count: u32,
    pub seed: u64,
}

fn read_panel(path: &Path) -> Result<PricePanel, CliError> {
    let f = File::open(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    PricePanel::read_csv(f).map_err(|e| match e {
        lsmc::Error::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        e => e.into(),
    })
}

fn select(panel: &PricePanel, columns: &[String], want: usize, method: Method) -> Result<Vec<String>, CliError> {
    let labels = if columns.is_empty() { panel.labels.clone() } else { columns.to_vec() };
    for l in &labels {
        if !panel.labels.contains(l) {
            return Err(CliError::Usage(format!("--columns: no column named {l}")));
        }
    }
    if want > 0 && labels.len() != want {
        return Err(CliError::Usage(format!(
            "{} needs exactly {want} columns, got {} (use --columns)",
            method.name(),
            labels.len()
        )));
    }
    Ok(labels)
}

fn tail(v: &[f64], window: Option<usize>) -> &[f64] {
    match window {
        Some(w) if w + 1 < v.len() => &v[v.len() - w - 1..],
        _ => v,
    }
}

fn sub_panel(panel: &PricePanel, labels: &[String]) -> Result<PricePanel, CliError> {
    let cols: Vec<Vec<f64>> = labels.iter().map(|l| panel.column_by_label(l)).collect::<Result<_, _>>()?;
    let rows = (0..panel.dates.len()).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
    Ok(PricePanel::new(panel.dates.clone(), labels.to_vec(), rows)?)
}

fn last(v: &[f64]) -> Result<f64, CliError> {
    v.iter()
        .rev()
        .copied()
        .find(|x| x.is_finite())
        .ok_or_else(|| CliError::Data("column has no values".into()))
}

fn matrix(m: &[Vec<f64>]) -> toml::Value {
    toml::Value::Array(
        m.iter()
            .map(|r| toml::Value::Array(r.iter().map(|v| toml::Value::Float(*v)).collect()))
            .collect(),
    )
}

fn floats(v: &[f64]) -> toml::Value {
    toml::Value::Array(v.iter().map(|x| toml::Value::Float(*x)).collect())
}

pub fn calibrate(a: &CalibrateArgs, out: Option<&Path>) -> Result<String, CliError> {
    let panel = read_panel(&a.input)?;
    let target = OutputTarget::resolve(out, None)?;
    let mut model = toml::Table::new();
    let mut body = format!("input: {}\nmethod: {}\n", a.input.display(), a.method.name());
    let summary;
    match a.method {
        Method::GbmCov => {
            let labels = select(&panel, &a.columns, 2, a.method)?;
            let x = panel.column_by_label(&labels[0])?;
            let y = panel.column_by_label(&labels[1])?;
            let window = a.window.unwrap_or(50);
            let est = estimate_gbm_cov(&x, &y, window, a.day_count)?;
            model.insert("kind".into(), "gbm".into());
            model.insert("s0".into(), floats(&[last(&x)?, last(&y)?]));
            model.insert("rate".into(), a.rate.into());
            model.insert("vols".into(), floats(&[est.sigma1, est.sigma2]));
            model.insert("corr".into(), matrix(&[vec![1.0, est.rho], vec![est.rho, 1.0]]));
            let _ = writeln!(body, "columns: {}, {}\nwindow: {window} returns", labels[0], labels[1]);
            let _ = writeln!(body, "rho: {}\nsigma1: {}\nsigma2: {}", est.rho, est.sigma1, est.sigma2);
            summary = format!("rho {:.6} sigma1 {:.6} sigma2 {:.6}", est.rho, est.sigma1, est.sigma2);
        }
        Method::HnMle => {
            let labels = select(&panel, &a.columns, 1, a.method)?;
            let prices = panel.column_by_label(&labels[0])?;
            let returns = log_returns(tail(&prices, a.window))?;
            let r_daily = a.rate / a.day_count as f64;
            let opts = MleOptions { seed: a.seed, ..MleOptions::default() };
            let fit = fit_hn_mle(&returns, r_daily, !a.free_gamma, &opts)?;
            let s = &fit.spec;
            model.insert("kind".into(), "heston_nandi".into());
            for (k, v) in [
                ("lambda", s.lambda),
                ("omega", s.omega),
                ("alpha", s.alpha),
                ("beta", s.beta),
                ("gamma", s.gamma),
                ("r_daily", s.r_daily),
                ("s0", last(&prices)?),
            ] {
                model.insert(k.into(), v.into());
            }
            let _ = writeln!(body, "column: {}\nreturns: {}", labels[0], returns.len());
            let _ = writeln!(
                body,
                "log_likelihood: {}\nstart_log_likelihood: {}\niterations: {}\nrestart: {}\npersistence: {}",
                fit.log_likelihood,
                fit.start_log_likelihood,
                fit.iterations,
                fit.restart,
                s.persistence()
            );
            if let Ok((_, vol)) = hn_long_run_vol(s, a.day_count) {
                let _ = writeln!(body, "long_run_vol: {vol}");
            }
            summary = format!("log-likelihood {:.4} omega {:e} alpha {:e} beta {:.6}", fit.log_likelihood, s.omega, s.alpha, s.beta);
        }
        Method::PcaLmm => {
            let mut labels = select(&panel, &a.columns, 0, a.method)?;
            labels.retain(|l| Some(l) != a.spot.as_ref());
            let spot = a.spot.as_ref().map(|s| panel.column_by_label(s)).transpose()?;
            let rates = if labels.iter().any(|l| l.contains('@')) {
                let maturities: Vec<NaiveDate> = labels.iter().map(|l| maturity_from_label(l)).collect::<Result<_, _>>()?;
                let quotes = sub_panel(&panel, &labels)?;
                let _ = writeln!(body, "constant-maturity horizons (months): {:?}", a.horizons);
                interpolate_constant_maturity(&quotes, &maturities, &a.horizons)?
            } else {
                sub_panel(&panel, &labels)?
            };
            let rates = match a.window {
                Some(w) if w + 1 < rates.dates.len() => {
                    let k = rates.dates.len() - w - 1;
                    PricePanel::new(rates.dates[k..].to_vec(), rates.labels.clone(), rates.rows[k..].to_vec())?
                }
                _ => rates,
            };
            let pca = pca_vol_structure(&rates, a.day_count)?;
            model.insert("kind".into(), "lmm".into());
            model.insert("vol_matrix".into(), matrix(&pca.lambda));
            if let Some(spot) = spot {
                let mut init = vec![last(&spot)?];
                for j in 0..rates.n_series() {
                    init.push(last(&rates.column(j))?);
                }
                model.insert("initial_forwards".into(), floats(&init));
            }
            let _ = writeln!(body, "series: {}\nobservations: {}", rates.labels.join(", "), pca.n_observations);
            let _ = writeln!(body, "eigenvalues: {:?}", pca.eigenvalues);
            let _ = writeln!(body, "factor_variances: {:?}", pca.factor_variances);
            let _ = writeln!(body, "total_vol: {:?}", pca.total_vol);
            let _ = writeln!(body, "factor_sum: {:?}", pca.factor_sum);
            if let Some(w) = &pca.rank_warning {
                let _ = writeln!(body, "warning: {w}");
            }
            let top = pca.eigenvalues.first().copied().unwrap_or(0.0);
            let kept = pca.eigenvalues.get(2).copied().unwrap_or(0.0);
            let _ = writeln!(body, "eigenvalue ratio (first/third): {:e}", top / kept);
            summary = format!("{} series, eigenvalues {:?}", rates.n_series(), &pca.eigenvalues[..pca.eigenvalues.len().min(3)]);
        }
    }
    let mut root = toml::Table::new();
    root.insert("model".into(), toml::Value::Table(model));
    let text = toml::to_string(&root).map_err(|e| CliError::Data(e.to_string()))?;
    let name = format!("{}.toml", a.method.name());
    fs::write(target.dir.join(&name), text)?;
    target.report("calibrate", &body)?;
    Ok(format!("wrote {name}: {summary}"))
}

fn next_weekday(d: NaiveDate) -> NaiveDate {
    let mut d = d + Days::new(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d + Days::new(1);
    }
    d
}

/// Stitches `n_paths` simulated paths into one long level panel: every path
/// contributes its relative changes over each fine step of the grid, chained
/// from the initial state, one weekday per step.
pub fn synth(config: &Path, seed: Option<u64>, n_paths: usize, out: Option<&Path>) -> Result<String, CliError> {
    if n_paths == 0 {
        return Err(CliError::Usage("--paths must be at least 1".into()));
    }
    let job = Job::load(config)?;
    let seed = job.seed(seed)?;
    let pipeline = job.pipeline()?;
    let model = match &pipeline.source {
        Source::Model { model, .. } => model,
        Source::Lattice(_) => return Err(CliError::Config("synth needs a simulated model, not a lattice".into())),
    };
    let g = pipeline.grid;
    let fine = TimeGrid { num_exercise_dates: g.total_steps(), steps_per_exercise: 1, ..g };
    let paths = model.simulate(&fine, n_paths, seed)?;
    let dim = paths.dim();
    let mut level = paths.state(0, 0).to_vec();
    let mut date = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut dates = vec![date];
    let mut rows = vec![level.clone()];
    for p in 0..n_paths {
        for t in 1..paths.num_dates() {
            for (i, l) in level.iter_mut().enumerate() {
                *l *= paths.value(p, t, i) / paths.value(p, t - 1, i);
            }
            date = next_weekday(date);
            dates.push(date);
            rows.push(level.clone());
        }
    }
    let labels = (0..dim).map(|i| format!("x{i}")).collect();
    let panel = PricePanel::new(dates, labels, rows)?;
    let target = OutputTarget::resolve(out, Some(&job))?;
    panel.write_csv(target.create("panel.csv")?)?;
    Ok(format!("wrote panel.csv: {} rows x {dim} series", panel.dates.len()))
}
