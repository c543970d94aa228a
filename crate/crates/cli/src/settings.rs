//! Resolved pipeline configuration.
//!
//! Precedence: command-line flags override config-file keys override the
//! built-in defaults. The config file is plain `key = value` text with `#`
//! comments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use spectrec_core::dataset::InputFormat;

#[derive(Debug, Clone)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub workdir: PathBuf,
    pub format: InputFormat,
    pub k_core: usize,
    pub min_year: Option<i32>,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub k0: usize,
    pub k1: usize,
    pub k2: usize,
    pub n_clusters_user: Option<usize>,
    pub n_clusters_item: Option<usize>,
    pub drop_trivial: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub reg_lambda: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub sampling_rate: usize,
    pub max_iters: usize,
    pub eval_every: usize,
    pub init_scale: f64,
    pub model: String,
    pub n_values: Vec<usize>,
    /// User subsample for the in-training validation hook.
    pub eval_sample: Option<usize>,
    pub item_feature_files: Vec<PathBuf>,
    pub user_feature_files: Vec<PathBuf>,
    pub seeds: Option<Vec<u64>>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            input: None,
            workdir: PathBuf::from("workdir"),
            format: InputFormat::Csv,
            k_core: 5,
            min_year: None,
            ratios: (0.8, 0.1, 0.1),
            seed: 42,
            k0: 200,
            k1: 10,
            k2: 10,
            n_clusters_user: None,
            n_clusters_item: None,
            drop_trivial: false,
            learning_rate: 0.05,
            batch_size: 5000,
            reg_lambda: 0.3,
            eta1: 0.01,
            eta2: 0.01,
            sampling_rate: 5,
            max_iters: 200,
            eval_every: 1,
            init_scale: 0.01,
            model: "scf-splr".into(),
            n_values: vec![2, 5, 10, 20],
            eval_sample: Some(1000),
            item_feature_files: Vec::new(),
            user_feature_files: Vec::new(),
            seeds: None,
        }
    }
}

impl Settings {
    pub fn load(config: Option<&Path>) -> Result<Self> {
        let mut settings = Settings::default();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .with_context(|| format!("config line {}: expected key = value", lineno + 1))?;
                settings
                    .set(key.trim(), value.trim())
                    .with_context(|| format!("config line {}", lineno + 1))?;
            }
        }
        Ok(settings)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "workdir" => self.workdir = PathBuf::from(value),
            "format" => self.format = parse_format(value)?,
            "k_core" => self.k_core = value.parse()?,
            "min_year" => self.min_year = Some(value.parse()?),
            "ratios" => self.ratios = parse_ratios(value)?,
            "seed" => self.seed = value.parse()?,
            "k0" => self.k0 = value.parse()?,
            "k1" => self.k1 = value.parse()?,
            "k2" => self.k2 = value.parse()?,
            "n_clusters_user" => self.n_clusters_user = Some(value.parse()?),
            "n_clusters_item" => self.n_clusters_item = Some(value.parse()?),
            "drop_trivial" => self.drop_trivial = value.parse()?,
            "learning_rate" => self.learning_rate = value.parse()?,
            "batch_size" => self.batch_size = value.parse()?,
            "reg_lambda" => self.reg_lambda = value.parse()?,
            "eta1" => self.eta1 = value.parse()?,
            "eta2" => self.eta2 = value.parse()?,
            "sampling_rate" => self.sampling_rate = value.parse()?,
            "max_iters" => self.max_iters = value.parse()?,
            "eval_every" => self.eval_every = value.parse()?,
            "init_scale" => self.init_scale = value.parse()?,
            "model" => self.model = validate_model(value)?.to_string(),
            "n_values" => self.n_values = parse_list(value)?,
            "eval_sample" => {
                self.eval_sample = if value == "none" {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            "item_feature_files" => {
                self.item_feature_files = value.split(',').map(PathBuf::from).collect()
            }
            "user_feature_files" => {
                self.user_feature_files = value.split(',').map(PathBuf::from).collect()
            }
            "seeds" => self.seeds = Some(parse_list(value)?),
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// The training seeds to run: the explicit list, or the single base
    /// seed.
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(list) if !list.is_empty() => list.clone(),
            _ => vec![self.seed],
        }
    }
}

pub fn parse_format(value: &str) -> Result<InputFormat> {
    match value {
        "csv" => Ok(InputFormat::Csv),
        "tsv" => Ok(InputFormat::Tsv),
        other => bail!("unknown format {other:?} (expected csv or tsv)"),
    }
}

pub fn parse_ratios(value: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .context("ratios must be three comma-separated numbers")?;
    if parts.len() != 3 {
        bail!("ratios must have exactly three parts, got {}", parts.len());
    }
    Ok((parts[0], parts[1], parts[2]))
}

pub fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(anyhow::Error::from))
        .collect()
}

pub const MODEL_IDS: &[&str] = &[
    "mp",
    "pointwise",
    "mf-bpr",
    "scf-bpr",
    "mf-splr",
    "scf-splr",
    "multi-feature",
];

pub fn validate_model(value: &str) -> Result<&str> {
    MODEL_IDS
        .iter()
        .find(|m| **m == value)
        .copied()
        .ok_or_else(|| {
            anyhow::anyhow!(
                "unknown model {value:?}; expected one of {}",
                MODEL_IDS.join(", ")
            )
        })
}

/// BPR-named models pin both weighting parameters to zero.
pub fn effective_etas(model: &str, settings: &Settings) -> (f64, f64) {
    match model {
        "mf-bpr" | "scf-bpr" | "mp" | "pointwise" => (0.0, 0.0),
        _ => (settings.eta1, settings.eta2),
    }
}
