use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lsmc::oracles::{Exercise, Side};
use lsmc_cli::commands::{self, CalibrateArgs, Method, OracleArgs};
use lsmc_cli::CliError;

#[derive(Parser)]
#[command(name = "lsmc", version, about = "Least-squares Monte Carlo pricing of early-exercise options")]
struct Cli {
    /// Seed for every random stream; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    PcaLmm,
    GbmCov,
    HnMle,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Put,
    Call,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExerciseArg {
    American,
    European,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate model parameters from a price panel and write a config fragment.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Number of trailing daily returns used (gbm-cov default 50, others use all).
        #[arg(long)]
        window: Option<usize>,
        /// Comma-separated column labels to use.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        /// Annual continuously compounded rate written into the fragment.
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        /// Constant-maturity horizons in months for `NAME@YYYY-MM-DD` quote columns.
        #[arg(long, value_delimiter = ',', default_value = "3,6,9,12")]
        horizons: Vec<u32>,
        /// Column holding the spot rate; enables `initial_forwards` in pca-lmm fragments.
        #[arg(long)]
        spot: Option<String>,
        /// Estimate the HN leverage parameter instead of fixing it at zero.
        #[arg(long)]
        free_gamma: bool,
        #[arg(long, default_value_t = 252)]
        day_count: u32,
    },
    /// Price one job and write price.csv, fits.csv and report.txt.
    Price {
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat the pricing run and write samples.csv, density.csv, summary.csv.
    Density {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.n_runs`.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Mean absolute error against a reference price for several sample sizes.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated path counts; overrides `run.path_counts`.
        #[arg(long, value_delimiter = ',')]
        paths: Option<Vec<usize>>,
    },
    /// CRR binomial price, optionally cross-checked against Black-Scholes.
    Oracle {
        #[arg(long)]
        s0: f64,
        #[arg(long)]
        strike: f64,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        sigma: f64,
        /// Maturity in years; alternatively `--days` with `--day-count`.
        #[arg(long, conflicts_with = "days")]
        maturity: Option<f64>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long, default_value_t = 252)]
        day_count: u32,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, value_enum, default_value = "put")]
        side: SideArg,
        #[arg(long, value_enum, default_value = "american")]
        exercise: ExerciseArg,
        /// Also compare Black-Scholes with the European tree; fails when they differ by 0.005 or more.
        #[arg(long)]
        check: bool,
    },
    /// Simulate the job's model and write a stitched level panel (panel.csv).
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        paths: usize,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--workers: {e}")))?;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Price { config } => commands::price(&config, cli.seed, out),
        Command::Density { config, runs } => commands::density(&config, cli.seed, runs, out),
        Command::Convergence { config, paths } => commands::convergence_cmd(&config, cli.seed, paths, out),
        Command::Synth { config, paths } => commands::synth(&config, cli.seed, paths, out),
        Command::Oracle {
            s0,
            strike,
            rate,
            sigma,
            maturity,
            days,
            day_count,
            steps,
            side,
            exercise,
            check,
        } => {
            let maturity = match (maturity, days) {
                (Some(m), _) => m,
                (None, Some(d)) => d as f64 / day_count as f64,
                (None, None) => return Err(CliError::Usage("give --maturity or --days".into())),
            };
            commands::oracle(&OracleArgs {
                s0,
                strike,
                rate,
                sigma,
                maturity,
                steps,
                side: match side {
                    SideArg::Put => Side::Put,
                    SideArg::Call => Side::Call,
                },
                exercise: match exercise {
                    ExerciseArg::American => Exercise::American,
                    ExerciseArg::European => Exercise::European,
                },
                check,
            })
        }
        Command::Calibrate {
            input,
            method,
            window,
            columns,
            rate,
            horizons,
            spot,
            free_gamma,
            day_count,
        } => commands::calibrate(
            &CalibrateArgs {
                input,
                method: match method {
                    MethodArg::PcaLmm => Method::PcaLmm,
                    MethodArg::GbmCov => Method::GbmCov,
                    MethodArg::HnMle => Method::HnMle,
                },
                window,
                columns,
                rate,
                horizons,
                spot,
                free_gamma,
                day_count,
                seed: cli.seed.unwrap_or(0),
            },
            out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lsmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
