use std::fs;
use std::io::Write;

use anyhow::{bail, Context, Result};
use serde_json::json;
use spectrec_core::evaluation::{evaluate_run, gauc};
use spectrec_core::model::{recommend_top_n, Predictor};
use spectrec_core::preference::build_preference_sets;
use spectrec_core::spectral::Side;

use crate::settings::{effective_etas, Settings};
use crate::workspace::Workspace;

pub fn run(settings: &Settings, split_name: &str, sample: Option<usize>) -> Result<()> {
    let workspace = Workspace::new(&settings.workdir);
    let data = workspace.load_splits()?;
    let heldout = match split_name {
        "test" => &data.test,
        "validation" | "valid" => &data.validation,
        other => bail!("unknown split {other:?}; expected test or validation"),
    };
    if heldout.n_records() == 0 {
        bail!("{split_name} split has no records");
    }

    // GAUC needs the preference sets, hence the cluster artifacts.
    let user_clusters = workspace.load_clusters(Side::User)?;
    let item_clusters = workspace.load_clusters(Side::Item)?;
    let sets = build_preference_sets(&data.train, &user_clusters, &item_clusters)?;
    let (eta1, eta2) = effective_etas(&settings.model, settings);

    let seeds = settings.seed_list();
    let multi_seed = seeds.len() > 1;
    // metric name -> one value per seed, insertion-ordered.
    let mut names: Vec<String> = Vec::new();
    let mut per_seed: Vec<Vec<f64>> = Vec::new();
    let mut users_evaluated = 0usize;

    fs::create_dir_all(workspace.reports_dir())?;
    let jsonl_path = workspace.report_path(&settings.model, "jsonl");
    let mut jsonl = fs::File::create(&jsonl_path)?;

    for &seed in &seeds {
        let model = workspace.load_model(&settings.model, multi_seed.then_some(seed))?;
        let report = evaluate_run(
            &model,
            &data.train,
            heldout,
            &settings.n_values,
            sample,
            settings.seed,
        )?;
        users_evaluated = report.users_evaluated;
        let mut metrics = report.metrics.clone();
        metrics.push(("gauc".to_string(), gauc(&model, &sets, eta1, eta2)));
        for (idx, (name, value)) in metrics.iter().enumerate() {
            if names.len() <= idx {
                names.push(name.clone());
                per_seed.push(Vec::new());
            }
            per_seed[idx].push(*value);
            let record = json!({
                "model": settings.model,
                "seed": seed,
                "split": split_name,
                "metric": name,
                "value": value,
            });
            writeln!(jsonl, "{record}")?;
        }
    }

    // Human-readable table: mean with std over seeds when multi-seed.
    let table_path = workspace.report_path(&settings.model, "txt");
    let mut table = String::new();
    table.push_str(&format!(
        "model {}  split {}  seeds {}  users {}\n",
        settings.model,
        split_name,
        seeds.len(),
        users_evaluated
    ));
    table.push_str(&format!("{:<10} {:>12} {:>12}\n", "metric", "mean", "std"));
    for (name, values) in names.iter().zip(&per_seed) {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (values.len() - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        table.push_str(&format!("{name:<10} {mean:>12.6} {std:>12.6}\n"));
    }
    fs::write(&table_path, &table)?;
    print!("{table}");
    println!(
        "wrote {} and {}",
        jsonl_path.display(),
        table_path.display()
    );
    Ok(())
}

pub fn recommend(
    settings: &Settings,
    external_user: &str,
    n: usize,
    seed_suffix: Option<u64>,
) -> Result<()> {
    let workspace = Workspace::new(&settings.workdir);
    let data = workspace.load_splits()?;
    let model = workspace.load_model(&settings.model, seed_suffix)?;
    let user = data
        .train
        .user_ids()
        .iter()
        .position(|id| id == external_user)
        .with_context(|| format!("unknown user id {external_user:?}"))?;
    if model.n_items() != data.train.n_items() {
        bail!(
            "checkpoint covers {} items but the splits have {}",
            model.n_items(),
            data.train.n_items()
        );
    }
    let exclude = data.train.items_by_user()[user].clone();
    let items = recommend_top_n(&model, user, n, &exclude);
    for item in items {
        println!("{}", data.train.item_ids()[item as usize]);
    }
    Ok(())
}
