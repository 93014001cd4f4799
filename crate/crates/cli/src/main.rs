//! `sentifuse`: label aggregation, campaign serving, training and
//! evaluation protocols, and geospatial analysis from one binary.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::TrainFlags;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation (exit 1).
    Usage(String),
    /// Invalid or missing input data (exit 2).
    Input(String),
    /// Anything that went wrong while running (exit 3).
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Runtime(m) => m,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sentifuse",
    version,
    about = "Sentiment fusion pipeline for urban outdoor images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "sentifuse-out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate 1-5 volunteer grades into sentiment labels.
    AggregateLabels {
        /// CSV with image_id,volunteer_id,grade,form_id.
        #[arg(long)]
        grades: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Build agreement subsets from five binary votes per image.
    Consensus {
        /// CSV with image_id,vote (one row per vote).
        #[arg(long)]
        votes: PathBuf,
        /// Single agreement level (3, 4 or 5); all three when omitted.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check a dataset manifest and its record files.
    ValidateManifest {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Serve labeling campaigns over HTTP.
    ServeAnnotation {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Holds campaigns.log and an images/ directory.
        #[arg(long, env = "SENTIFUSE_DATA_DIR", default_value = "sentifuse-data")]
        data_dir: PathBuf,
        /// Hours before an unsubmitted form returns to the pool.
        #[arg(long, default_value_t = 24)]
        lease_hours: u64,
    },
    /// Stratified k-fold cross-validation on one dataset.
    Cv {
        #[arg(long)]
        manifest: PathBuf,
        /// Also save a model trained on the whole dataset.
        #[arg(long)]
        save_model: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-validation for every attribute setting on one or more datasets.
    Ablation {
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-validation with and without extra indoor training images.
    IndoorInfluence {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        indoor: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train on one dataset and test on another, or a full matrix.
    CrossEval {
        /// Datasets for the all-against-all matrix.
        #[arg(long)]
        manifest: Vec<PathBuf>,
        #[arg(long, requires = "test")]
        train: Option<PathBuf>,
        #[arg(long, requires = "train")]
        test: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Drop points that fall inside building footprints.
    GeoFilter {
        /// CSV with image_id,lat,lon,label.
        #[arg(long)]
        points: PathBuf,
        /// GeoJSON polygons.
        #[arg(long)]
        footprints: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Density clustering of one sentiment class (or all three).
    Cluster {
        #[arg(long)]
        points: PathBuf,
        /// Radius in degrees (class default when omitted).
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        minpts: Option<usize>,
        #[arg(long)]
        class: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sentiment distribution per census-tract income bucket.
    IncomeReport {
        #[arg(long)]
        points: PathBuf,
        /// GeoJSON census tracts.
        #[arg(long)]
        tracts: PathBuf,
        /// Tract property holding median household income.
        #[arg(long, default_value = "median_income")]
        income_attr: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-class count grids.
    Heatmap {
        #[arg(long)]
        points: PathBuf,
        /// Cell size in degrees.
        #[arg(long)]
        cell_size: f64,
        /// min_lat,min_lon,max_lat,max_lon (point extent when omitted).
        #[arg(long, value_delimiter = ',')]
        bbox: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write a seeded synthetic dataset and its point list.
    Synth {
        #[arg(long, default_value_t = 600)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        deep_dim: usize,
        /// 2 or 3.
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Attributes carry no class signal.
        #[arg(long)]
        uninformative: bool,
        #[arg(long, default_value = "synthetic")]
        name: String,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
