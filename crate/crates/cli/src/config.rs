use std::path::{Path, PathBuf};

use clap::Args;
use sentifuse_core::experiment::{AttributeSet, TrainConfig};
use sentifuse_core::fusion::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Optional TOML file with training defaults; command-line flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub attrs: Option<String>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub folds: Option<usize>,
    pub hidden: Option<[usize; 3]>,
    pub stratified: Option<bool>,
    pub standardize: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Attribute blocks fused with the deep features: none, sun, yolo, sun+yolo.
    #[arg(long)]
    pub attrs: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Hidden layer widths, e.g. 1024,1024,24 (default depends on D).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Use plain (unstratified) folds.
    #[arg(long)]
    pub no_stratify: bool,
    /// Skip per-feature standardization.
    #[arg(long)]
    pub no_standardize: bool,
    /// TOML file with defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Fully resolved training settings, recorded next to every report.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedTraining {
    pub attrs: AttributeSet,
    pub train: TrainConfig,
}

impl TrainFlags {
    pub fn resolve(&self, default_attrs: AttributeSet) -> Result<ResolvedTraining, Failure> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let defaults = TrainConfig::default();
        let attrs = match self.attrs.clone().or(file.attrs) {
            Some(s) => s
                .parse::<AttributeSet>()
                .map_err(|e| Failure::Usage(format!("--attrs: {e}")))?,
            None => default_attrs,
        };
        let hidden = match &self.hidden {
            Some(h) if h.len() == 3 => Some([h[0], h[1], h[2]]),
            Some(h) => {
                return Err(Failure::Usage(format!(
                    "--hidden takes three comma-separated widths, got {}",
                    h.len()
                )))
            }
            None => file.hidden,
        };
        let train = TrainConfig {
            epochs: self.epochs.or(file.epochs).unwrap_or(defaults.epochs),
            batch_size: self
                .batch_size
                .or(file.batch_size)
                .unwrap_or(defaults.batch_size),
            adam: AdamConfig {
                learning_rate: self
                    .learning_rate
                    .or(file.learning_rate)
                    .unwrap_or(defaults.adam.learning_rate),
                ..defaults.adam
            },
            hidden,
            seed: self.seed.or(file.seed).unwrap_or(defaults.seed),
            folds: self.folds.or(file.folds).unwrap_or(defaults.folds),
            stratified: !self.no_stratify && file.stratified.unwrap_or(defaults.stratified),
            standardize: !self.no_standardize && file.standardize.unwrap_or(defaults.standardize),
        };
        if train.batch_size == 0 {
            return Err(Failure::Usage("--batch-size must be at least 1".into()));
        }
        if !(train.adam.learning_rate >= 0.0 && train.adam.learning_rate.is_finite()) {
            return Err(Failure::Usage("--lr must be a non-negative number".into()));
        }
        if train.folds < 2 {
            return Err(Failure::Usage("--folds must be at least 2".into()));
        }
        if hidden.is_some_and(|h| h.contains(&0)) {
            return Err(Failure::Usage("--hidden widths must be positive".into()));
        }
        Ok(ResolvedTraining { attrs, train })
    }
}
