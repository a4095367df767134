use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use nystrom_hdc::{load_tudataset, split, Dataset, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Everything a run needs. Loaded from an optional JSON file, then
/// overridden by whatever flags were given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// TU file prefix; defaults to the dataset directory's name.
    pub name: Option<String>,
    /// Seeds both the train/test split and training.
    pub seed: u64,
    pub test_fraction: f64,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            name: None,
            seed: 7,
            test_fraction: 0.2,
            model: ModelConfig::default(),
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TUDataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub landmarks: Option<usize>,
    #[arg(long)]
    pub hops: Option<usize>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub pool_factor: Option<f64>,
    #[arg(long)]
    pub lanes: Option<usize>,
    /// Hybrid uniform + DPP landmark selection (`--dpp false` for uniform).
    #[arg(long)]
    pub dpp: Option<bool>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($field)+ = v;
                }
            };
        }
        if self.dataset.is_some() {
            c.dataset = self.dataset.clone();
        }
        if self.name.is_some() {
            c.name = self.name.clone();
        }
        set!(seed => seed);
        set!(test_fraction => test_fraction);
        set!(dim => model.dim);
        set!(landmarks => model.landmarks);
        set!(hops => model.hops);
        set!(width => model.width);
        set!(gamma => model.gamma);
        set!(pool_factor => model.pool_factor);
        set!(lanes => model.lanes);
        set!(dpp => model.dpp);
        if !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
            return Err(UsageError(format!("test_fraction {} not in (0, 1)", c.test_fraction)).into());
        }
        c.model.validate()?;
        Ok(c)
    }
}

impl RunConfig {
    pub fn load_dataset(&self) -> Result<Dataset> {
        let dir = self
            .dataset
            .as_deref()
            .ok_or_else(|| UsageError("no dataset given (--dataset or \"dataset\" in the config)".into()))?;
        Ok(load_tudataset(dir, &dataset_name(dir, self.name.as_deref()))?)
    }

    pub fn load_split(&self) -> Result<(Dataset, Dataset)> {
        let ds = self.load_dataset()?;
        Ok(split(&ds, self.test_fraction, self.seed)?)
    }
}

pub fn dataset_name(dir: &Path, name: Option<&str>) -> String {
    match name {
        Some(n) => n.to_string(),
        None => dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_defaults() {
        let args = RunArgs {
            landmarks: Some(9),
            dpp: Some(false),
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.model.landmarks, 9);
        assert!(!c.model.dpp);
        assert_eq!(c.model.dim, ModelConfig::default().dim);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn rejects_bad_fraction() {
        let args = RunArgs {
            test_fraction: Some(1.0),
            ..Default::default()
        };
        assert!(args.resolve().unwrap_err().is::<UsageError>());
    }

    #[test]
    fn name_defaults_to_directory() {
        assert_eq!(dataset_name(Path::new("data/MUTAG"), None), "MUTAG");
        assert_eq!(dataset_name(Path::new("x"), Some("Y")), "Y");
    }
}
