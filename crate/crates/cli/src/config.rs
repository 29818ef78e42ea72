//! Job configuration: a TOML file with `model`, `payoff`, `grid`, `basis`,
//! `run`, optional `discount` and `output` tables, and an optional top-level
//! `fragments` list of further TOML files (typically written by `calibrate`)
//! whose tables are merged underneath the main file.

use std::fs;
use std::path::{Path, PathBuf};

use lsmc::basis::{bivariate_paper_basis, BasisSystem, BasisTerm, CustomBasis, WeightedLaguerre};
use lsmc::discount::DiscountSpec;
use lsmc::grid::TimeGrid;
use lsmc::lattice::Lattice;
use lsmc::models::{risk_neutralize_hn, GbmSpec, HnSpec, LmmSpec, PathModel};
use lsmc::payoff::{PayoffKind, PayoffSpec};
use lsmc::runs::{Pipeline, Source};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub fragments: Vec<PathBuf>,
    pub model: ModelConfig,
    pub payoff: PayoffSpec,
    pub grid: GridConfig,
    pub basis: BasisConfig,
    #[serde(default)]
    pub discount: Option<DiscountConfig>,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Gbm {
        s0: Vec<f64>,
        rate: f64,
        vols: Vec<f64>,
        /// Defaults to the identity.
        #[serde(default)]
        corr: Option<Vec<Vec<f64>>>,
    },
    Lmm {
        #[serde(default)]
        initial_forwards: Option<Vec<f64>>,
        #[serde(default = "quarter")]
        accrual: f64,
        #[serde(default)]
        vol_matrix: Option<Vec<Vec<f64>>>,
        /// CSV with one row per forward rate and one column per factor.
        #[serde(default)]
        vol_matrix_file: Option<PathBuf>,
    },
    HestonNandi {
        lambda: f64,
        omega: f64,
        alpha: f64,
        beta: f64,
        #[serde(default)]
        gamma: f64,
        r_daily: f64,
        s0: f64,
        #[serde(default)]
        sigma0_sq: Option<f64>,
        /// Apply the risk-neutral substitution before simulating.
        #[serde(default = "yes")]
        risk_neutralize: bool,
    },
    /// Non-recombining binomial tree; payoffs come from the `payoff` table.
    Lattice {
        s0: f64,
        up: f64,
        down: f64,
        p_up: f64,
        steps: usize,
        discount: f64,
    },
}

/// The period length of a constant rate comes from the grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscountConfig {
    ConstantRate { annual_rate: f64 },
    PathAccrual,
}

fn quarter() -> f64 {
    0.25
}

fn yes() -> bool {
    true
}

fn one_step() -> usize {
    1
}

fn trading_days() -> u32 {
    252
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub num_exercise_dates: usize,
    #[serde(default = "one_step")]
    pub steps_per_exercise: usize,
    /// Fine step in years; alternatively give `steps_per_year`.
    #[serde(default)]
    pub dt_years: Option<f64>,
    #[serde(default)]
    pub steps_per_year: Option<f64>,
    #[serde(default = "trading_days")]
    pub day_count: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisConfig {
    Laguerre {
        #[serde(default = "three")]
        max_degree: usize,
        /// Defaults to the first strike.
        #[serde(default)]
        scaling: Option<f64>,
        #[serde(default)]
        coordinate: usize,
    },
    Bivariate {
        /// Defaults to the two strikes.
        #[serde(default)]
        scaling: Option<[f64; 2]>,
        #[serde(default)]
        coordinates: Option<[usize; 2]>,
    },
    Custom {
        scaling: Vec<f64>,
        terms: Vec<BasisTerm>,
    },
    LatticeIndicator,
}

fn three() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_paths: usize,
    #[serde(default = "one_run")]
    pub n_runs: usize,
    /// Required unless `--seed` is given.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Sample sizes for `convergence`.
    #[serde(default)]
    pub path_counts: Vec<usize>,
    #[serde(default = "twenty")]
    pub reps: usize,
    /// Reference price for `convergence`; computed from an oracle when absent.
    #[serde(default)]
    pub reference: Option<f64>,
}

fn one_run() -> usize {
    1
}

fn twenty() -> usize {
    20
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    /// Market quote placed in the summary table of `density`.
    #[serde(default)]
    pub market_price: Option<f64>,
    /// Key column of the summary table: `strike` (default) or `date`.
    #[serde(default)]
    pub summary_key: Option<String>,
    #[serde(default)]
    pub summary_label: Option<String>,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

const MAX_FRAGMENT_DEPTH: usize = 8;

/// Reads `path` with its fragments merged underneath, recursively. File paths
/// inside a fragment are made relative to the fragment's own directory.
fn expand(path: &Path, depth: usize) -> Result<toml::Table, CliError> {
    if depth > MAX_FRAGMENT_DEPTH {
        return Err(CliError::Config(format!("fragments nested too deeply at {}", path.display())));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut own = read_table(path)?;
    if depth > 0 {
        if let Some(toml::Value::Table(model)) = own.get_mut("model") {
            if let Some(toml::Value::String(f)) = model.get_mut("vol_matrix_file") {
                *f = dir.join(&*f).display().to_string();
            }
        }
    }
    let mut merged = toml::Table::new();
    if let Some(frags) = own.remove("fragments") {
        let frags = frags
            .as_array()
            .ok_or_else(|| CliError::Config("fragments must be a list of paths".into()))?;
        for f in frags {
            let rel = f
                .as_str()
                .ok_or_else(|| CliError::Config("fragments must be a list of paths".into()))?;
            merge(&mut merged, expand(&dir.join(rel), depth + 1)?);
        }
    }
    merge(&mut merged, own);
    Ok(merged)
}

/// A validated job: the parsed config plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: JobConfig,
    pub base_dir: PathBuf,
}

impl Job {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let merged = expand(path, 0)?;
        let config: JobConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let job = Job { config, base_dir };
        // Builds every component once so bad keys are reported before any work.
        job.pipeline()?;
        Ok(job)
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.config.run.seed)
            .ok_or_else(|| CliError::Config("run.seed is required (or pass --seed)".into()))
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        let g = &self.config.grid;
        let dt = match (g.dt_years, g.steps_per_year) {
            (Some(dt), None) => dt,
            (None, Some(n)) if n > 0.0 => 1.0 / n,
            (None, Some(n)) => return Err(CliError::Config(format!("grid.steps_per_year must be positive, got {n}"))),
            _ => {
                return Err(CliError::Config(
                    "grid: give exactly one of dt_years or steps_per_year".into(),
                ))
            }
        };
        let grid = TimeGrid {
            num_exercise_dates: g.num_exercise_dates,
            steps_per_exercise: g.steps_per_exercise,
            dt_years: dt,
            day_count: g.day_count,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn read_matrix(&self, file: &Path) -> Result<Vec<Vec<f64>>, CliError> {
        let path = self.base_dir.join(file);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("model.vol_matrix_file {}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            match cells {
                Ok(r) => rows.push(r),
                Err(_) if rows.is_empty() && i == 0 => continue, // header
                Err(e) => {
                    return Err(CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)));
                }
            }
        }
        Ok(rows)
    }

    fn source(&self) -> Result<Source, CliError> {
        let payoff = self.config.payoff.clone();
        payoff.validate()?;
        let model: Box<dyn PathModel> = match &self.config.model {
            ModelConfig::Gbm { s0, rate, vols, corr } => {
                let d = s0.len();
                let corr = corr.clone().unwrap_or_else(|| {
                    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
                });
                let spec = GbmSpec {
                    s0: s0.clone(),
                    rate: *rate,
                    vols: vols.clone(),
                    corr,
                };
                spec.validate()?;
                Box::new(spec)
            }
            ModelConfig::Lmm {
                initial_forwards,
                accrual,
                vol_matrix,
                vol_matrix_file,
            } => {
                let vol_matrix = match (vol_matrix, vol_matrix_file) {
                    (Some(m), None) => m.clone(),
                    (None, Some(f)) => self.read_matrix(f)?,
                    _ => {
                        return Err(CliError::Config(
                            "model: give exactly one of vol_matrix or vol_matrix_file".into(),
                        ))
                    }
                };
                let initial_forwards = initial_forwards
                    .clone()
                    .ok_or_else(|| CliError::Config("model.initial_forwards is required".into()))?;
                let spec = LmmSpec {
                    initial_forwards,
                    accrual: *accrual,
                    vol_matrix,
                };
                spec.validate()?;
                Box::new(spec)
            }
            ModelConfig::HestonNandi {
                lambda,
                omega,
                alpha,
                beta,
                gamma,
                r_daily,
                s0,
                sigma0_sq,
                risk_neutralize,
            } => {
                let spec = HnSpec {
                    lambda: *lambda,
                    omega: *omega,
                    alpha: *alpha,
                    beta: *beta,
                    gamma: *gamma,
                    r_daily: *r_daily,
                    s0: *s0,
                    sigma0_sq: *sigma0_sq,
                };
                spec.validate()?;
                let spec = if *risk_neutralize { risk_neutralize_hn(&spec) } else { spec };
                spec.initial_variance()?;
                Box::new(spec)
            }
            ModelConfig::Lattice {
                s0,
                up,
                down,
                p_up,
                steps,
                discount,
            } => {
                let lattice = Lattice::binomial(*s0, *up, *down, *p_up, *steps, *discount, &payoff)?;
                return Ok(Source::Lattice(lattice));
            }
        };
        if payoff.dim() != model.dim() {
            return Err(CliError::Config(format!(
                "payoff.weights has {} entries but the model state has {} coordinates",
                payoff.dim(),
                model.dim()
            )));
        }
        Ok(Source::Model { model, payoff })
    }

    fn basis(&self, source: &Source) -> Result<Box<dyn BasisSystem>, CliError> {
        let strikes = &self.config.payoff.strikes;
        Ok(match (&self.config.basis, source) {
            (BasisConfig::LatticeIndicator, Source::Lattice(l)) => Box::new(l.indicator_basis()),
            (BasisConfig::LatticeIndicator, _) => {
                return Err(CliError::Config("basis.family lattice_indicator needs model.kind = lattice".into()))
            }
            (
                BasisConfig::Laguerre {
                    max_degree,
                    scaling,
                    coordinate,
                },
                _,
            ) => Box::new(WeightedLaguerre::new(*max_degree, scaling.unwrap_or(strikes[0]), *coordinate)?),
            (BasisConfig::Bivariate { scaling, coordinates }, _) => {
                let scaling = match scaling {
                    Some(s) => *s,
                    None if strikes.len() == 2 => [strikes[0], strikes[1]],
                    None => return Err(CliError::Config("basis.scaling is required for this payoff".into())),
                };
                let mut b = bivariate_paper_basis(scaling)?;
                if let Some(c) = coordinates {
                    b.coordinates = *c;
                }
                Box::new(b)
            }
            (BasisConfig::Custom { scaling, terms }, _) => Box::new(CustomBasis::new(terms.clone(), scaling.clone())?),
        })
    }

    fn discount(&self, grid: &TimeGrid) -> DiscountSpec {
        match (&self.config.discount, &self.config.model) {
            (Some(DiscountConfig::ConstantRate { annual_rate }), _) => DiscountSpec::constant(*annual_rate, grid),
            (Some(DiscountConfig::PathAccrual), _) => DiscountSpec::PathAccrual,
            (None, ModelConfig::Gbm { rate, .. }) => DiscountSpec::constant(*rate, grid),
            (None, _) => DiscountSpec::PathAccrual,
        }
    }

    pub fn pipeline(&self) -> Result<Pipeline, CliError> {
        let grid = self.grid()?;
        let source = self.source()?;
        let basis = self.basis(&source)?;
        let dim = match &source {
            Source::Model { model, .. } => model.dim(),
            Source::Lattice(l) => l.dim(),
        };
        basis.check_dim(dim)?;
        if let Source::Lattice(l) = &source {
            if l.horizon() != grid.num_exercise_dates {
                return Err(CliError::Config(format!(
                    "grid.num_exercise_dates is {} but model.steps is {}",
                    grid.num_exercise_dates,
                    l.horizon()
                )));
            }
        }
        if self.config.run.n_paths == 0 {
            return Err(CliError::Config("run.n_paths must be at least 1".into()));
        }
        if self.config.run.n_runs == 0 {
            return Err(CliError::Config("run.n_runs must be at least 1".into()));
        }
        Ok(Pipeline {
            discount: self.discount(&grid),
            source,
            basis,
            grid,
        })
    }

    pub fn payoff_kind(&self) -> PayoffKind {
        self.config.payoff.kind
    }
}
