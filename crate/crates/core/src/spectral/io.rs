//! On-disk formats for spectral features and cluster assignments.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ClusterAssignment, Side, SpectralFeatures};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Writes a feature file: `n_vertices K side` header, one line of K
/// eigenvalues, then one row of K floats per vertex.
pub fn write_features(path: &Path, feats: &SpectralFeatures) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let n = feats.n_vertices();
    let k = feats.k();
    writeln!(f, "{} {} {}", n, k, feats.side.as_str())?;
    writeln!(f, "{}", join_floats(&feats.eigenvalues))?;
    for v in 0..n {
        writeln!(f, "{}", join_floats(feats.features.row(v)))?;
    }
    Ok(())
}

pub fn read_features(path: &Path) -> Result<SpectralFeatures> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let mut fields = header.split_whitespace();
    let parse_count = |f: Option<&str>, what: &str| -> Result<usize> {
        f.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("bad {what} in feature header"),
        })
    };
    let n = parse_count(fields.next(), "vertex count")?;
    let k = parse_count(fields.next(), "feature dimension")?;
    let side = Side::parse(fields.next().unwrap_or(""))?;

    let (_, ev_line) = lines.next().ok_or(Error::Parse {
        line: 2,
        message: "missing eigenvalue line".into(),
    })?;
    let eigenvalues = parse_floats(ev_line, 2, k)?;

    let mut features = DenseMatrix::zeros(n, k);
    for v in 0..n {
        let (lineno, line) = lines.next().ok_or(Error::Parse {
            line: v + 3,
            message: "missing feature row".into(),
        })?;
        let row = parse_floats(line, lineno + 1, k)?;
        features.row_mut(v).copy_from_slice(&row);
    }
    Ok(SpectralFeatures {
        features,
        eigenvalues,
        side,
    })
}

/// Writes `vertex_index<TAB>cluster_index` lines.
pub fn write_clusters(path: &Path, assignment: &ClusterAssignment) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for (v, &c) in assignment.labels.iter().enumerate() {
        writeln!(f, "{v}\t{c}")?;
    }
    Ok(())
}

/// Reads a cluster file back; the side is not stored and must be supplied.
pub fn read_clusters(path: &Path, side: Side) -> Result<ClusterAssignment> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split('\t');
        let v: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: "bad vertex index".into(),
            })?;
        let c: u32 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: "bad cluster index".into(),
            })?;
        if v != labels.len() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("vertex indices must be dense, got {v}"),
            });
        }
        labels.push(c);
    }
    let n_clusters = labels.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    Ok(ClusterAssignment {
        labels,
        n_clusters,
        centroids: DenseMatrix::zeros(0, 0),
        side,
    })
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_floats(line: &str, lineno: usize, expect: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|f| f.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line: lineno,
            message: format!("bad float: {e}"),
        })?;
    if values.len() != expect {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected {expect} floats, got {}", values.len()),
        });
    }
    Ok(values)
}
