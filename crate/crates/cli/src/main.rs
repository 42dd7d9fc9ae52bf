//! Command-line front end: forecast, score, search, rolling evaluation,
//! ablations, synthetic data and random-feature diagnostics.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rffcast", version, about = "Hotspot forecasting with random Fourier features and lagged KDE")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Event CSV with columns category,date,x_ft,y_ft.
    #[arg(long, global = true)]
    pub events: Option<PathBuf>,
    /// Hyperparameter JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Search space JSON (field -> list of values, or [lo, hi] for bo).
    #[arg(long, global = true)]
    pub space: Option<PathBuf>,
    /// Day 0 of the dataset.
    #[arg(long, global = true)]
    pub epoch: Option<NaiveDate>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed; derives the RFF, BO and simulation seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of rolling windows.
    #[arg(long, global = true, default_value_t = 13)]
    pub windows: usize,
    /// Drop events outside the grid instead of failing.
    #[arg(long, global = true)]
    pub allow_out_of_bounds: bool,
    /// Study region JSON; defaults to the events' bounding box.
    #[arg(long, global = true)]
    pub region: Option<PathBuf>,
    /// Keep only events of this category.
    #[arg(long, global = true)]
    pub category: Option<String>,
    /// Cap on stacked training periods.
    #[arg(long, global = true)]
    pub max_train_periods: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct Window {
    /// First day of the forecast window.
    #[arg(long)]
    pub start: NaiveDate,
    /// Window length: days, or one of 1w, 2w, 1m, 2m, 3m.
    #[arg(long, default_value = "1w")]
    pub period: String,
}

#[derive(Debug, Clone, Args)]
pub struct Folds {
    /// Forecast window length for the yearly folds (days or 1w..3m).
    #[arg(long, default_value = "1w")]
    pub period: String,
    /// Day of year (1..=365, non-leap calendar) on which each fold starts.
    #[arg(long, default_value_t = 60)]
    pub start_doy: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMode {
    Grid,
    Bo,
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Process {
    Poisson,
    Hawkes,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on events before the window, forecast it and write artifacts.
    Forecast {
        #[command(flatten)]
        window: Window,
        /// Events of the forecast window, for scoring and map colors.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Score a saved selection against events in a window.
    Score {
        #[command(flatten)]
        window: Window,
        /// selection.csv written by `forecast`.
        #[arg(long)]
        selection: PathBuf,
    },
    /// Hyperparameter search over yearly cross-validation folds.
    Search {
        #[arg(value_enum)]
        mode: SearchMode,
        #[command(flatten)]
        folds: Folds,
        #[arg(long, default_value_t = 10)]
        n_init: usize,
        #[arg(long, default_value_t = 20)]
        n_iter: usize,
        /// Worker threads for grid evaluation (default: all cores).
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Train once, then score consecutive windows without refitting.
    Rolling {
        #[command(flatten)]
        window: Window,
    },
    /// Compare the configuration with its ablated variants on the same folds.
    Ablate {
        #[command(flatten)]
        folds: Folds,
        #[arg(long, default_value_t = 656.168)]
        baseline_bandwidth_ft: f64,
        #[arg(long, default_value_t = 61.0)]
        baseline_window_days: f64,
    },
    /// Generate synthetic events with a ground-truth sidecar.
    Simulate {
        #[arg(value_enum)]
        process: Process,
        /// Synthetic spec JSON; a built-in example is used when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Random-feature kernel approximation error against d.
    RffCheck {
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,50,100,200,500,1000")]
        d: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 30)]
        seeds: usize,
    },
    /// Convert competition-table CSV rows into hyperparameter JSON files.
    ImportTable {
        /// Table CSV; the bundled competition table when absent.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .any(|e| e.downcast_ref::<rffcast::Error>().is_some_and(|e| e.is_numerical()));
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
