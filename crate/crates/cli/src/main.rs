//! `spectrec` — spectral collaborative filtering pipeline.
//!
//! Subcommands communicate through files in a working directory so each
//! stage can be rerun independently:
//!
//! ```text
//! spectrec synth --out data.csv
//! spectrec prepare --input data.csv
//! spectrec spectral
//! spectrec cluster
//! spectrec train --model scf-splr
//! spectrec evaluate --model scf-splr
//! spectrec recommend --model scf-splr --user u17 -n 10
//! ```

mod commands;
mod settings;
mod workspace;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use settings::Settings;

#[derive(Parser)]
#[command(name = "spectrec", version, about = "Spectral collaborative filtering pipeline")]
struct Cli {
    /// Plain-text `key = value` config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Working directory holding all pipeline artifacts.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load raw interactions, k-core filter, split, and write split files.
    Prepare {
        /// Raw interaction log (`user_id,item_id[,timestamp]`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Input separator: csv or tsv.
        #[arg(long)]
        format: Option<String>,
        /// Minimum interactions per user and per item.
        #[arg(long)]
        k_core: Option<usize>,
        /// Train,validation,test fractions (e.g. 0.8,0.1,0.1).
        #[arg(long)]
        ratios: Option<String>,
        /// Drop records whose year column is older than this.
        #[arg(long)]
        min_year: Option<i32>,
        /// Shuffle seed for the split.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build both hypergraph Laplacians and write spectral feature files.
    Spectral {
        /// User-side spectral dimensions (columns of E).
        #[arg(long)]
        k1: Option<usize>,
        /// Item-side spectral dimensions (columns of F).
        #[arg(long)]
        k2: Option<usize>,
        /// Skip near-null eigenpairs (eigenvalue < 1e-9).
        #[arg(long)]
        drop_trivial: bool,
        /// Eigensolver start-vector seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cluster vertices into latent communities/categories.
    Cluster {
        /// User cluster count (default: ceil(sqrt(n_users))).
        #[arg(long)]
        clusters_user: Option<usize>,
        /// Item cluster count (default: ceil(sqrt(n_items))).
        #[arg(long)]
        clusters_item: Option<usize>,
        /// K-means seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-user positive/potential set sizes for
        /// diagnostics.
        #[arg(long)]
        dump_sets: bool,
    },
    /// Train a model and write its checkpoint plus metric history.
    Train {
        /// One of: mp, pointwise, mf-bpr, scf-bpr, mf-splr, scf-splr,
        /// multi-feature.
        #[arg(long)]
        model: Option<String>,
        /// Latent factor dimension K0.
        #[arg(long)]
        k0: Option<usize>,
        /// User spectral dimensions used by the model (truncates the
        /// feature file).
        #[arg(long)]
        k1: Option<usize>,
        /// Item spectral dimensions used by the model.
        #[arg(long)]
        k2: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        reg_lambda: Option<f64>,
        /// Weight of (positive, potential) pairs.
        #[arg(long)]
        eta1: Option<f64>,
        /// Weight of (potential, negative) pairs.
        #[arg(long)]
        eta2: Option<f64>,
        /// Potential/negative samples per record (m).
        #[arg(long)]
        sampling_rate: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Epoch stride between validation evaluations.
        #[arg(long)]
        eval_every: Option<usize>,
        #[arg(long)]
        init_scale: Option<f64>,
        /// Validation-user subsample per evaluation (`none` for all).
        #[arg(long)]
        eval_sample: Option<String>,
        /// Train one model per seed (comma-separated); checkpoints get a
        /// -s<seed> suffix when more than one.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra item feature files for the multi-feature model.
        #[arg(long)]
        item_feature_files: Option<String>,
        /// Extra user feature files for the multi-feature model.
        #[arg(long)]
        user_feature_files: Option<String>,
    },
    /// Evaluate a trained model and write its report.
    Evaluate {
        #[arg(long)]
        model: Option<String>,
        /// Which held-out split to score: test or validation.
        #[arg(long)]
        split: Option<String>,
        /// Ranking cutoffs, comma-separated.
        #[arg(long)]
        n_values: Option<String>,
        /// Evaluate a seeded random user subset of this size.
        #[arg(long)]
        sample: Option<usize>,
        /// Seeds whose checkpoints to aggregate (mean and std).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        eta1: Option<f64>,
        #[arg(long)]
        eta2: Option<f64>,
    },
    /// Print top-n recommendations for one user.
    Recommend {
        #[arg(long)]
        model: Option<String>,
        /// External user id as it appeared in the raw input.
        #[arg(long)]
        user: String,
        #[arg(short, default_value_t = 10)]
        n: usize,
        /// Seed suffix of the checkpoint to load (multi-seed runs).
        #[arg(long)]
        seed_suffix: Option<u64>,
    },
    /// Generate a planted-block synthetic dataset.
    Synth {
        /// Output interactions file (labels go to <out>.user_labels.tsv /
        /// <out>.item_labels.tsv).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        user_blocks: usize,
        #[arg(long, default_value_t = 4)]
        item_blocks: usize,
        /// Within-block purchase probability.
        #[arg(long, default_value_t = 0.3)]
        p_in: f64,
        /// Cross-block purchase probability.
        #[arg(long, default_value_t = 0.01)]
        p_out: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    reset_sigpipe();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

/// Rust ignores SIGPIPE by default, turning `spectrec ... | head` into a
/// broken-pipe panic; restore the conventional terminate-on-SIGPIPE.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    if let Some(workdir) = cli.workdir {
        settings.workdir = workdir;
    }

    match cli.command {
        Command::Prepare {
            input,
            format,
            k_core,
            ratios,
            min_year,
            seed,
        } => {
            if let Some(v) = input {
                settings.input = Some(v);
            }
            if let Some(v) = format {
                settings.format = settings::parse_format(&v)?;
            }
            if let Some(v) = k_core {
                settings.k_core = v;
            }
            if let Some(v) = ratios {
                settings.ratios = settings::parse_ratios(&v)?;
            }
            if let Some(v) = min_year {
                settings.min_year = Some(v);
            }
            if let Some(v) = seed {
                settings.seed = v;
            }
            commands::prepare::run(&settings)
        }
        Command::Spectral {
            k1,
            k2,
            drop_trivial,
            seed,
        } => {
            if let Some(v) = k1 {
                settings.k1 = v;
            }
            if let Some(v) = k2 {
                settings.k2 = v;
            }
            if drop_trivial {
                settings.drop_trivial = true;
            }
            if let Some(v) = seed {
                settings.seed = v;
            }
            commands::spectral::run(&settings)
        }
        Command::Cluster {
            clusters_user,
            clusters_item,
            seed,
            dump_sets,
        } => {
            if let Some(v) = clusters_user {
                settings.n_clusters_user = Some(v);
            }
            if let Some(v) = clusters_item {
                settings.n_clusters_item = Some(v);
            }
            if let Some(v) = seed {
                settings.seed = v;
            }
            commands::spectral::run_cluster(&settings, dump_sets)
        }
        Command::Train {
            model,
            k0,
            k1,
            k2,
            learning_rate,
            batch_size,
            reg_lambda,
            eta1,
            eta2,
            sampling_rate,
            max_iters,
            eval_every,
            init_scale,
            eval_sample,
            seeds,
            seed,
            item_feature_files,
            user_feature_files,
        } => {
            if let Some(v) = model {
                settings.model = settings::validate_model(&v)?.to_string();
            }
            if let Some(v) = k0 {
                settings.k0 = v;
            }
            if let Some(v) = k1 {
                settings.k1 = v;
            }
            if let Some(v) = k2 {
                settings.k2 = v;
            }
            if let Some(v) = learning_rate {
                settings.learning_rate = v;
            }
            if let Some(v) = batch_size {
                settings.batch_size = v;
            }
            if let Some(v) = reg_lambda {
                settings.reg_lambda = v;
            }
            if let Some(v) = eta1 {
                settings.eta1 = v;
            }
            if let Some(v) = eta2 {
                settings.eta2 = v;
            }
            if let Some(v) = sampling_rate {
                settings.sampling_rate = v;
            }
            if let Some(v) = max_iters {
                settings.max_iters = v;
            }
            if let Some(v) = eval_every {
                settings.eval_every = v;
            }
            if let Some(v) = init_scale {
                settings.init_scale = v;
            }
            if let Some(v) = eval_sample {
                settings.set("eval_sample", &v)?;
            }
            if let Some(v) = seeds {
                settings.seeds = Some(settings::parse_list(&v)?);
            }
            if let Some(v) = seed {
                settings.seed = v;
            }
            if let Some(v) = item_feature_files {
                settings.item_feature_files = v.split(',').map(PathBuf::from).collect();
            }
            if let Some(v) = user_feature_files {
                settings.user_feature_files = v.split(',').map(PathBuf::from).collect();
            }
            commands::train::run(&settings)
        }
        Command::Evaluate {
            model,
            split,
            n_values,
            sample,
            seeds,
            seed,
            eta1,
            eta2,
        } => {
            if let Some(v) = model {
                settings.model = settings::validate_model(&v)?.to_string();
            }
            if let Some(v) = n_values {
                settings.n_values = settings::parse_list(&v)?;
            }
            if let Some(v) = seeds {
                settings.seeds = Some(settings::parse_list(&v)?);
            }
            if let Some(v) = seed {
                settings.seed = v;
            }
            if let Some(v) = eta1 {
                settings.eta1 = v;
            }
            if let Some(v) = eta2 {
                settings.eta2 = v;
            }
            commands::evaluate::run(&settings, split.as_deref().unwrap_or("test"), sample)
        }
        Command::Recommend {
            model,
            user,
            n,
            seed_suffix,
        } => {
            if let Some(v) = model {
                settings.model = settings::validate_model(&v)?.to_string();
            }
            commands::evaluate::recommend(&settings, &user, n, seed_suffix)
        }
        Command::Synth {
            out,
            users,
            items,
            user_blocks,
            item_blocks,
            p_in,
            p_out,
            seed,
        } => commands::synth::run(
            &out,
            spectrec_core::synth::PlantedConfig {
                n_users: users,
                n_items: items,
                user_blocks,
                item_blocks,
                p_in,
                p_out,
                seed: seed.unwrap_or(settings.seed),
            },
        ),
    }
}
