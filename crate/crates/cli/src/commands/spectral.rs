use anyhow::Result;
use spectrec_core::spectral::{
    build_laplacian, cluster_vertices, io as spectral_io, spectral_features, Side,
};

use crate::settings::Settings;
use crate::workspace::Workspace;

pub fn run(settings: &Settings) -> Result<()> {
    let workspace = Workspace::new(&settings.workdir);
    let split = workspace.load_splits()?;
    std::fs::create_dir_all(workspace.features_dir())?;

    for (side, k, salt) in [
        (Side::User, settings.k1, 0x5Au64),
        (Side::Item, settings.k2, 0x5Bu64),
    ] {
        if k == 0 {
            println!("{} side: K = 0, skipping", side.as_str());
            continue;
        }
        let lap = build_laplacian(&split.train, side, None)?;
        let feats = spectral_features(&lap, k, settings.seed ^ salt, settings.drop_trivial)?;
        let path = workspace.features_path(side);
        spectral_io::write_features(&path, &feats)?;
        println!(
            "{} side: {} vertices, {} hyperedges, wrote {} eigenpairs to {} (lambda_1 = {:.3e})",
            side.as_str(),
            lap.n_vertices(),
            lap.n_hyperedges(),
            feats.k(),
            path.display(),
            feats.eigenvalues.first().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn run_cluster(settings: &Settings, dump_sets: bool) -> Result<()> {
    let workspace = Workspace::new(&settings.workdir);
    std::fs::create_dir_all(workspace.clusters_dir())?;

    let mut assignments = Vec::new();
    for (side, requested, salt) in [
        (Side::User, settings.n_clusters_user, 0x5Cu64),
        (Side::Item, settings.n_clusters_item, 0x5Du64),
    ] {
        let feats = workspace.load_features(side)?;
        let n = feats.n_vertices();
        let n_clusters = requested.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize);
        let assignment = cluster_vertices(&feats, n_clusters, settings.seed ^ salt)?;
        let path = workspace.clusters_path(side);
        spectral_io::write_clusters(&path, &assignment)?;
        let occupied = assignment
            .members()
            .iter()
            .filter(|m| !m.is_empty())
            .count();
        println!(
            "{} side: {} vertices into {} clusters ({} occupied), wrote {}",
            side.as_str(),
            n,
            n_clusters,
            occupied,
            path.display()
        );
        assignments.push(assignment);
    }

    if dump_sets {
        use std::io::Write;
        let split = workspace.load_splits()?;
        let sets = spectrec_core::preference::build_preference_sets(
            &split.train,
            &assignments[0],
            &assignments[1],
        )?;
        let path = workspace.clusters_dir().join("set_sizes.tsv");
        let mut f = std::fs::File::create(&path)?;
        for u in 0..sets.n_users() {
            writeln!(f, "{u}\t{}\t{}", sets.positive(u).len(), sets.potential(u).len())?;
        }
        println!("wrote per-user set sizes to {}", path.display());
    }
    Ok(())
}
