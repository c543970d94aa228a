use std::fs::File;
use std::io::BufReader;

use anyhow::{bail, Context, Result};
use spectrec_core::dataset::{k_core_filter, load_interactions_with_min_year, split_dataset};

use crate::settings::Settings;
use crate::workspace::Workspace;

pub fn run(settings: &Settings) -> Result<()> {
    let input = settings
        .input
        .as_ref()
        .context("prepare needs --input (or an `input` config key)")?;
    let file = File::open(input)
        .with_context(|| format!("cannot open input {}", input.display()))?;
    let raw = load_interactions_with_min_year(
        BufReader::new(file),
        settings.format,
        settings.min_year,
    )?;
    println!(
        "loaded {} records ({} users x {} items)",
        raw.n_records(),
        raw.n_users(),
        raw.n_items()
    );

    let filtered = k_core_filter(&raw, settings.k_core)?;
    println!(
        "{}-core kept {} records ({} users x {} items)",
        settings.k_core,
        filtered.n_records(),
        filtered.n_users(),
        filtered.n_items()
    );
    if filtered.n_records() == 0 {
        bail!("k-core filtering removed everything; lower --k-core");
    }

    let split = split_dataset(&filtered, settings.ratios, settings.seed)?;
    println!(
        "split into {} train / {} validation / {} test records",
        split.train.n_records(),
        split.validation.n_records(),
        split.test.n_records()
    );

    let workspace = Workspace::new(&settings.workdir);
    workspace.write_splits(&split)?;
    println!("wrote splits under {}", workspace.splits_dir().display());
    Ok(())
}
