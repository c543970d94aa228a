use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use spectrec_core::synth::{planted_dataset, PlantedConfig};

/// Writes the sampled interactions as CSV plus planted-label sidecars
/// (`<out>.user_labels.tsv`, `<out>.item_labels.tsv`).
pub fn run(out: &Path, cfg: PlantedConfig) -> Result<()> {
    let planted = planted_dataset(&cfg)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(out)
        .with_context(|| format!("cannot create {}", out.display()))?;
    let matrix = &planted.interactions;
    for &(u, i) in matrix.records() {
        writeln!(
            f,
            "{},{}",
            matrix.user_ids()[u as usize],
            matrix.item_ids()[i as usize]
        )?;
    }

    let write_labels = |suffix: &str, labels: &[u32]| -> Result<()> {
        let path = out.with_extension(format!("{suffix}.tsv"));
        let mut f = fs::File::create(&path)?;
        for (idx, label) in labels.iter().enumerate() {
            writeln!(f, "{idx}\t{label}")?;
        }
        println!("wrote {}", path.display());
        Ok(())
    };
    write_labels("user_labels", &planted.user_labels)?;
    write_labels("item_labels", &planted.item_labels)?;
    println!(
        "wrote {} records ({} users x {} items) to {}",
        matrix.n_records(),
        matrix.n_users(),
        matrix.n_items(),
        out.display()
    );
    Ok(())
}
