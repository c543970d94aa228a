//! Working-directory layout and artifact discovery.
//!
//! Subcommands communicate through files under the workdir:
//! `splits/`, `features/`, `clusters/`, `models/`, `reports/`. Loaders
//! report which subcommand produces a missing artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use spectrec_core::dataset::{self, DatasetSplit, InteractionMatrix};
use spectrec_core::model::io::AnyModel;
use spectrec_core::spectral::{self, ClusterAssignment, Side, SpectralFeatures};

pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn splits_dir(&self) -> PathBuf {
        self.root.join("splits")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn clusters_dir(&self) -> PathBuf {
        self.root.join("clusters")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn split_path(&self, name: &str) -> PathBuf {
        self.splits_dir().join(format!("{name}.tsv"))
    }

    pub fn id_map_path(&self, side: Side) -> PathBuf {
        self.splits_dir().join(match side {
            Side::User => "users.tsv",
            Side::Item => "items.tsv",
        })
    }

    pub fn features_path(&self, side: Side) -> PathBuf {
        self.features_dir().join(format!("{}.txt", side.as_str()))
    }

    pub fn clusters_path(&self, side: Side) -> PathBuf {
        self.clusters_dir().join(format!("{}.tsv", side.as_str()))
    }

    /// Checkpoint path; a seed suffix appears only for multi-seed runs.
    pub fn model_path(&self, model: &str, seed: Option<u64>) -> PathBuf {
        match seed {
            Some(s) => self.models_dir().join(format!("{model}-s{s}.txt")),
            None => self.models_dir().join(format!("{model}.txt")),
        }
    }

    pub fn history_path(&self, model: &str, seed: Option<u64>) -> PathBuf {
        match seed {
            Some(s) => self.models_dir().join(format!("{model}-s{s}.history.jsonl")),
            None => self.models_dir().join(format!("{model}.history.jsonl")),
        }
    }

    pub fn report_path(&self, model: &str, ext: &str) -> PathBuf {
        self.reports_dir().join(format!("{model}.{ext}"))
    }

    pub fn write_splits(&self, split: &DatasetSplit) -> Result<()> {
        let dir = self.splits_dir();
        fs::create_dir_all(&dir)?;
        dataset::io::write_records(&self.split_path("train"), &split.train)?;
        dataset::io::write_records(&self.split_path("validation"), &split.validation)?;
        dataset::io::write_records(&self.split_path("test"), &split.test)?;
        dataset::io::write_id_map(&self.id_map_path(Side::User), split.train.user_ids())?;
        dataset::io::write_id_map(&self.id_map_path(Side::Item), split.train.item_ids())?;
        Ok(())
    }

    pub fn load_splits(&self) -> Result<DatasetSplit> {
        let missing = |p: &Path| !p.exists();
        if missing(&self.split_path("train")) || missing(&self.id_map_path(Side::User)) {
            bail!(
                "no dataset splits under {}; run `prepare` first",
                self.splits_dir().display()
            );
        }
        let user_ids = dataset::io::read_id_map(&self.id_map_path(Side::User))?;
        let item_ids = dataset::io::read_id_map(&self.id_map_path(Side::Item))?;
        let load = |name: &str| -> Result<InteractionMatrix> {
            dataset::io::read_records(&self.split_path(name), user_ids.clone(), item_ids.clone())
                .with_context(|| format!("reading split {name}"))
        };
        Ok(DatasetSplit {
            train: load("train")?,
            validation: load("validation")?,
            test: load("test")?,
        })
    }

    pub fn load_features(&self, side: Side) -> Result<SpectralFeatures> {
        let path = self.features_path(side);
        if !path.exists() {
            bail!(
                "no {} spectral features at {}; run `spectral` first",
                side.as_str(),
                path.display()
            );
        }
        Ok(spectral::io::read_features(&path)?)
    }

    pub fn load_clusters(&self, side: Side) -> Result<ClusterAssignment> {
        let path = self.clusters_path(side);
        if !path.exists() {
            bail!(
                "no {} clusters at {}; run `cluster` first",
                side.as_str(),
                path.display()
            );
        }
        Ok(spectral::io::read_clusters(&path, side)?)
    }

    pub fn load_model(&self, model: &str, seed: Option<u64>) -> Result<AnyModel> {
        let path = self.model_path(model, seed);
        if !path.exists() {
            bail!(
                "no checkpoint at {}; run `train --model {model}` first",
                path.display()
            );
        }
        Ok(spectrec_core::model::io::read_any_checkpoint(&path)?)
    }
}
