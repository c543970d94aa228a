use std::fs;
use std::io::Write;

use anyhow::{bail, Context, Result};
use spectrec_core::dataset::DatasetSplit;
use spectrec_core::evaluation::evaluate_run;
use spectrec_core::matrix::DenseMatrix;
use spectrec_core::model::{io as model_io, Predictor};
use spectrec_core::preference::{build_preference_sets_multi, PreferenceSets};
use spectrec_core::spectral::{cluster_rows, ClusterAssignment, Side, SpectralFeatures};
use spectrec_core::training::{
    train, train_multi, train_pointwise, EpochMetric, ModelKind, PopularityModel, TrainConfig,
    TrainOutcome,
};

use crate::settings::{effective_etas, Settings};
use crate::workspace::Workspace;

pub fn run(settings: &Settings) -> Result<()> {
    let workspace = Workspace::new(&settings.workdir);
    let data = workspace.load_splits()?;
    fs::create_dir_all(workspace.models_dir())?;

    let seeds = settings.seed_list();
    let multi_seed = seeds.len() > 1;
    for seed in seeds {
        let suffix = multi_seed.then_some(seed);
        train_one(settings, &workspace, &data, seed, suffix)?;
    }
    Ok(())
}

fn train_one(
    settings: &Settings,
    workspace: &Workspace,
    data: &DatasetSplit,
    seed: u64,
    suffix: Option<u64>,
) -> Result<()> {
    let model = settings.model.as_str();
    let (eta1, eta2) = effective_etas(model, settings);
    let cfg = TrainConfig {
        learning_rate: settings.learning_rate,
        batch_size: settings.batch_size,
        reg_lambda: settings.reg_lambda,
        eta1,
        eta2,
        sampling_rate: settings.sampling_rate,
        max_iters: settings.max_iters,
        seed,
        eval_every: settings.eval_every,
        init_scale: settings.init_scale,
    };
    let checkpoint = workspace.model_path(model, suffix);

    // Validation hook shared by all trained models.
    let has_validation = data.validation.n_records() > 0;
    let eval_sample = settings.eval_sample;
    let validation_metrics = move |epoch: usize,
                                   params: &dyn Predictor,
                                   data: &DatasetSplit|
          -> Vec<EpochMetric> {
        match evaluate_run(params, &data.train, &data.validation, &[5], eval_sample, seed) {
            Ok(report) => ["f1@5", "ndcg@5"]
                .iter()
                .filter_map(|name| {
                    report.get(name).map(|value| EpochMetric {
                        epoch,
                        split: "valid".into(),
                        metric: (*name).into(),
                        value,
                    })
                })
                .collect(),
            Err(_) => Vec::new(),
        }
    };
    let mut hook =
        move |epoch: usize, params: &dyn Predictor| validation_metrics(epoch, params, data);
    let hook_opt: Option<&mut spectrec_core::training::EvalHook<'_>> =
        has_validation.then_some(&mut hook as _);

    let history = match model {
        "mp" => {
            let popularity = PopularityModel::from_train(&data.train);
            model_io::write_popularity(&checkpoint, &popularity)?;
            println!("wrote popularity model to {}", checkpoint.display());
            None
        }
        "pointwise" => {
            let outcome = train_pointwise(data, settings.k0, &cfg, hook_opt)?;
            model_io::write_checkpoint(&checkpoint, &outcome.params)?;
            report_outcome(model, seed, &checkpoint, &outcome);
            Some(outcome.history)
        }
        "mf-bpr" | "mf-splr" => {
            let sets = pairwise_sets(workspace, data)?;
            let outcome = train(ModelKind::Mf, settings.k0, data, &sets, None, &cfg, hook_opt)?;
            model_io::write_checkpoint(&checkpoint, &outcome.params)?;
            report_outcome(model, seed, &checkpoint, &outcome);
            Some(outcome.history)
        }
        "scf-bpr" | "scf-splr" => {
            let sets = pairwise_sets(workspace, data)?;
            let user_features =
                load_truncated(workspace, Side::User, settings.k1, data.train.n_users())?;
            let item_features =
                load_truncated(workspace, Side::Item, settings.k2, data.train.n_items())?;
            let outcome = train(
                ModelKind::Scf,
                settings.k0,
                data,
                &sets,
                Some((&user_features, &item_features)),
                &cfg,
                hook_opt,
            )?;
            model_io::write_checkpoint(&checkpoint, &outcome.params)?;
            report_outcome(model, seed, &checkpoint, &outcome);
            Some(outcome.history)
        }
        "multi-feature" => {
            let (item_blocks, user_blocks, sets) =
                multi_feature_inputs(settings, workspace, data, seed)?;
            let mut multi_hook =
                move |epoch: usize, params: &spectrec_core::model::MultiFeatureParams| {
                    validation_metrics(epoch, params as &dyn Predictor, data)
                };
            let multi_hook_opt: Option<&mut spectrec_core::training::MultiEvalHook<'_>> =
                has_validation.then_some(&mut multi_hook as _);
            let outcome = train_multi(
                settings.k0,
                data,
                &sets,
                item_blocks,
                user_blocks,
                &cfg,
                multi_hook_opt,
            )?;
            model_io::write_multi_checkpoint(&checkpoint, &outcome.params)?;
            report_outcome(model, seed, &checkpoint, &outcome);
            Some(outcome.history)
        }
        other => bail!("model {other:?} cannot be trained"),
    };

    if let Some(history) = history {
        let path = workspace.history_path(model, suffix);
        let mut f = fs::File::create(&path)?;
        for record in &history {
            writeln!(f, "{}", serde_json::to_string(record)?)?;
        }
        println!("wrote {} history records to {}", history.len(), path.display());
    }
    Ok(())
}

fn report_outcome<P>(model: &str, seed: u64, checkpoint: &std::path::Path, outcome: &TrainOutcome<P>) {
    match outcome.best_epoch {
        Some(epoch) => println!(
            "{model} (seed {seed}): kept epoch {epoch} snapshot, wrote {}",
            checkpoint.display()
        ),
        None => println!(
            "{model} (seed {seed}): kept final parameters, wrote {}",
            checkpoint.display()
        ),
    }
}

/// Preference sets for the pairwise objectives, from the stored cluster
/// assignments.
fn pairwise_sets(workspace: &Workspace, data: &DatasetSplit) -> Result<PreferenceSets> {
    let user_clusters = workspace.load_clusters(Side::User)?;
    let item_clusters = workspace.load_clusters(Side::Item)?;
    validate_labels(&user_clusters, data.train.n_users(), "user")?;
    validate_labels(&item_clusters, data.train.n_items(), "item")?;
    Ok(build_preference_sets_multi(
        &data.train,
        &[user_clusters],
        &[item_clusters],
    )?)
}

fn validate_labels(assignment: &ClusterAssignment, expected: usize, what: &str) -> Result<()> {
    if assignment.labels.len() != expected {
        bail!(
            "{what} cluster file covers {} vertices but the split has {expected}; rerun `cluster`",
            assignment.labels.len()
        );
    }
    Ok(())
}

/// Loads one side's spectral features and keeps the first `k` columns.
/// Zero-width requests never touch the feature files.
fn load_truncated(
    workspace: &Workspace,
    side: Side,
    k: usize,
    n_vertices: usize,
) -> Result<DenseMatrix> {
    if k == 0 {
        return Ok(DenseMatrix::zeros(n_vertices, 0));
    }
    let feats = workspace.load_features(side)?;
    truncate_features(&feats, k, side)
}

fn truncate_features(feats: &SpectralFeatures, k: usize, side: Side) -> Result<DenseMatrix> {
    if k > feats.k() {
        bail!(
            "requested {k} {} spectral dimensions but the feature file has {}; rerun `spectral` with a larger K",
            side.as_str(),
            feats.k()
        );
    }
    let n = feats.n_vertices();
    let mut out = DenseMatrix::zeros(n, k);
    for v in 0..n {
        out.row_mut(v).copy_from_slice(&feats.features.row(v)[..k]);
    }
    Ok(out)
}

/// Feature blocks and union preference sets for the multi-feature model:
/// the stored spectral features plus any external feature files, each
/// block clustered for the potential sets.
#[allow(clippy::type_complexity)]
fn multi_feature_inputs(
    settings: &Settings,
    workspace: &Workspace,
    data: &DatasetSplit,
    seed: u64,
) -> Result<(Vec<DenseMatrix>, Vec<DenseMatrix>, PreferenceSets)> {
    let n_users = data.train.n_users();
    let n_items = data.train.n_items();

    let mut user_blocks: Vec<DenseMatrix> = Vec::new();
    let mut item_blocks: Vec<DenseMatrix> = Vec::new();
    if settings.k1 > 0 {
        user_blocks.push(load_truncated(workspace, Side::User, settings.k1, n_users)?);
    }
    if settings.k2 > 0 {
        item_blocks.push(load_truncated(workspace, Side::Item, settings.k2, n_items)?);
    }
    for (paths, blocks, side, expected) in [
        (
            &settings.user_feature_files,
            &mut user_blocks,
            Side::User,
            n_users,
        ),
        (
            &settings.item_feature_files,
            &mut item_blocks,
            Side::Item,
            n_items,
        ),
    ] {
        for path in paths {
            let feats = load_external_features(path, expected, side)?;
            blocks.push(feats);
        }
    }
    if user_blocks.is_empty() && item_blocks.is_empty() {
        bail!("multi-feature needs at least one feature block; set k1/k2 or pass feature files");
    }

    // One clustering per block per side, unioned into the potential sets.
    let user_clusters = workspace.load_clusters(Side::User)?;
    let item_clusters = workspace.load_clusters(Side::Item)?;
    validate_labels(&user_clusters, n_users, "user")?;
    validate_labels(&item_clusters, n_items, "item")?;
    let mut user_assignments = vec![user_clusters];
    let mut item_assignments = vec![item_clusters];
    let extra_user = settings.user_feature_files.len();
    let extra_item = settings.item_feature_files.len();
    for (idx, block) in user_blocks.iter().skip(user_blocks.len() - extra_user).enumerate() {
        let n_clusters = settings
            .n_clusters_user
            .unwrap_or_else(|| (n_users as f64).sqrt().ceil() as usize);
        user_assignments.push(cluster_rows(
            block,
            n_clusters,
            seed ^ (0x60 + idx as u64),
            Side::User,
        )?);
    }
    for (idx, block) in item_blocks.iter().skip(item_blocks.len() - extra_item).enumerate() {
        let n_clusters = settings
            .n_clusters_item
            .unwrap_or_else(|| (n_items as f64).sqrt().ceil() as usize);
        item_assignments.push(cluster_rows(
            block,
            n_clusters,
            seed ^ (0x70 + idx as u64),
            Side::Item,
        )?);
    }
    let sets = build_preference_sets_multi(&data.train, &user_assignments, &item_assignments)?;
    Ok((item_blocks, user_blocks, sets))
}

fn load_external_features(path: &std::path::Path, expected_rows: usize, side: Side) -> Result<DenseMatrix> {
    let feats = spectrec_core::spectral::io::read_features(path)
        .with_context(|| format!("reading feature file {}", path.display()))?;
    if feats.n_vertices() != expected_rows {
        bail!(
            "feature file {} has {} rows but the {} side has {expected_rows}",
            path.display(),
            feats.n_vertices(),
            side.as_str()
        );
    }
    Ok(feats.features)
}
