//! The hybrid predictor and its parameters.
//!
//! The score of user u for item i is the sum of three bilinear terms
//!
//!   r(u, i) = U_u . V_i  +  P_u . F_i  +  E_u . Q_i
//!
//! where U, V are free latent factors, F and E are fixed item/user spectral
//! features, and P, Q are learned projections against them. With empty
//! feature matrices the model degenerates to plain matrix factorization.
//! A multi-feature generalization sums one bilinear term per supplied
//! feature block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};

/// Anything that can score a (user, item) cell.
pub trait Predictor {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn score(&self, user: usize, item: usize) -> f64;

    fn score_diff(&self, user: usize, preferred: usize, dispreferred: usize) -> f64 {
        self.score(user, preferred) - self.score(user, dispreferred)
    }
}

/// Learned factors plus fixed spectral features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// n_users x K0 user latent factors.
    pub user_factors: DenseMatrix,
    /// n_items x K0 item latent factors.
    pub item_factors: DenseMatrix,
    /// n_users x K2 preference over item spectral dimensions.
    pub user_preference: DenseMatrix,
    /// n_items x K1 fitness over user spectral dimensions.
    pub item_fitness: DenseMatrix,
    /// Fixed n_users x K1 user spectral features.
    pub user_features: DenseMatrix,
    /// Fixed n_items x K2 item spectral features.
    pub item_features: DenseMatrix,
}

impl ModelParams {
    pub fn k0(&self) -> usize {
        self.user_factors.cols()
    }

    pub fn k1(&self) -> usize {
        self.user_features.cols()
    }

    pub fn k2(&self) -> usize {
        self.item_features.cols()
    }

    pub fn all_finite(&self) -> bool {
        self.user_factors.all_finite()
            && self.item_factors.all_finite()
            && self.user_preference.all_finite()
            && self.item_fitness.all_finite()
    }

    /// Squared Frobenius norm over the learned matrices (fixed features
    /// excluded).
    pub fn norm_squared(&self) -> f64 {
        [
            &self.user_factors,
            &self.item_factors,
            &self.user_preference,
            &self.item_fitness,
        ]
        .iter()
        .map(|m| m.data().iter().map(|x| x * x).sum::<f64>())
        .sum()
    }
}

impl Predictor for ModelParams {
    fn n_users(&self) -> usize {
        self.user_factors.rows()
    }

    fn n_items(&self) -> usize {
        self.item_factors.rows()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.user_factors.row(user), self.item_factors.row(item))
            + dot(self.user_preference.row(user), self.item_features.row(item))
            + dot(self.user_features.row(user), self.item_fitness.row(item))
    }
}

/// Initializes learned parameters i.i.d. uniform on [-scale, +scale];
/// `features` become the fixed (E, F) matrices and dictate K1/K2.
pub fn init_params(
    dims: (usize, usize, usize, usize, usize),
    features: (DenseMatrix, DenseMatrix),
    seed: u64,
    scale: f64,
) -> Result<ModelParams> {
    let (n_users, n_items, k0, k1, k2) = dims;
    let (user_features, item_features) = features;
    if user_features.rows() != n_users && !(k1 == 0 && user_features.rows() == 0) {
        return Err(Error::InvalidArgument(format!(
            "user feature rows {} != n_users {}",
            user_features.rows(),
            n_users
        )));
    }
    if item_features.rows() != n_items && !(k2 == 0 && item_features.rows() == 0) {
        return Err(Error::InvalidArgument(format!(
            "item feature rows {} != n_items {}",
            item_features.rows(),
            n_items
        )));
    }
    if user_features.cols() != k1 {
        return Err(Error::InvalidArgument(format!(
            "user feature columns {} != K1 {}",
            user_features.cols(),
            k1
        )));
    }
    if item_features.cols() != k2 {
        return Err(Error::InvalidArgument(format!(
            "item feature columns {} != K2 {}",
            item_features.cols(),
            k2
        )));
    }
    let user_features = if user_features.rows() == 0 && k1 == 0 {
        DenseMatrix::zeros(n_users, 0)
    } else {
        user_features
    };
    let item_features = if item_features.rows() == 0 && k2 == 0 {
        DenseMatrix::zeros(n_items, 0)
    } else {
        item_features
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut user_factors = DenseMatrix::zeros(n_users, k0);
    let mut item_factors = DenseMatrix::zeros(n_items, k0);
    let mut user_preference = DenseMatrix::zeros(n_users, k2);
    let mut item_fitness = DenseMatrix::zeros(n_items, k1);
    user_factors.fill_uniform(&mut rng, scale);
    item_factors.fill_uniform(&mut rng, scale);
    user_preference.fill_uniform(&mut rng, scale);
    item_fitness.fill_uniform(&mut rng, scale);

    Ok(ModelParams {
        user_factors,
        item_factors,
        user_preference,
        item_fitness,
        user_features,
        item_features,
    })
}

/// Returns the `n` highest-scoring items outside `exclude`, descending by
/// score with ascending item index breaking ties.
pub fn recommend_top_n<P: Predictor + ?Sized>(
    predictor: &P,
    user: usize,
    n: usize,
    exclude: &[u32],
) -> Vec<u32> {
    debug_assert!(exclude.windows(2).all(|w| w[0] <= w[1]), "exclude sorted");
    let mut scored: Vec<(f64, u32)> = (0..predictor.n_items() as u32)
        .filter(|i| exclude.binary_search(i).is_err())
        .map(|i| (predictor.score(user, i as usize), i))
        .collect();
    // partial_cmp keeps -0.0 == +0.0 so equal scores tie on index.
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    scored.truncate(n);
    scored.into_iter().map(|(_, i)| i).collect()
}

/// One fixed feature matrix paired with its learned projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub features: DenseMatrix,
    pub projection: DenseMatrix,
}

/// Multi-feature predictor: an MF core plus any number of item-side and
/// user-side feature blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFeatureParams {
    pub user_factors: DenseMatrix,
    pub item_factors: DenseMatrix,
    /// Item feature blocks: fixed F^(j) (n_items x d_j) with learned
    /// user-side projection P^(j) (n_users x d_j).
    pub item_blocks: Vec<FeatureBlock>,
    /// User feature blocks: fixed E^(k) (n_users x d_k) with learned
    /// item-side projection Q^(k) (n_items x d_k).
    pub user_blocks: Vec<FeatureBlock>,
}

impl MultiFeatureParams {
    pub fn all_finite(&self) -> bool {
        self.user_factors.all_finite()
            && self.item_factors.all_finite()
            && self.item_blocks.iter().all(|b| b.projection.all_finite())
            && self.user_blocks.iter().all(|b| b.projection.all_finite())
    }

    pub fn norm_squared(&self) -> f64 {
        let core: f64 = [&self.user_factors, &self.item_factors]
            .iter()
            .map(|m| m.data().iter().map(|x| x * x).sum::<f64>())
            .sum();
        let blocks: f64 = self
            .item_blocks
            .iter()
            .chain(&self.user_blocks)
            .map(|b| b.projection.data().iter().map(|x| x * x).sum::<f64>())
            .sum();
        core + blocks
    }
}

impl Predictor for MultiFeatureParams {
    fn n_users(&self) -> usize {
        self.user_factors.rows()
    }

    fn n_items(&self) -> usize {
        self.item_factors.rows()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        let mut s = dot(self.user_factors.row(user), self.item_factors.row(item));
        for block in &self.item_blocks {
            s += dot(block.projection.row(user), block.features.row(item));
        }
        for block in &self.user_blocks {
            s += dot(block.features.row(user), block.projection.row(item));
        }
        s
    }
}

/// Initializes a multi-feature model; block projections are sized from
/// their paired feature matrices. Draws happen in the same order as
/// [`init_params`] so a single-block model matches it bitwise.
pub fn init_multi_params(
    n_users: usize,
    n_items: usize,
    k0: usize,
    item_features: Vec<DenseMatrix>,
    user_features: Vec<DenseMatrix>,
    seed: u64,
    scale: f64,
) -> Result<MultiFeatureParams> {
    for f in &item_features {
        if f.rows() != n_items {
            return Err(Error::InvalidArgument(format!(
                "item feature block has {} rows, expected {}",
                f.rows(),
                n_items
            )));
        }
    }
    for f in &user_features {
        if f.rows() != n_users {
            return Err(Error::InvalidArgument(format!(
                "user feature block has {} rows, expected {}",
                f.rows(),
                n_users
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut user_factors = DenseMatrix::zeros(n_users, k0);
    let mut item_factors = DenseMatrix::zeros(n_items, k0);
    user_factors.fill_uniform(&mut rng, scale);
    item_factors.fill_uniform(&mut rng, scale);
    let item_blocks = item_features
        .into_iter()
        .map(|features| {
            let mut projection = DenseMatrix::zeros(n_users, features.cols());
            projection.fill_uniform(&mut rng, scale);
            FeatureBlock {
                features,
                projection,
            }
        })
        .collect();
    let user_blocks = user_features
        .into_iter()
        .map(|features| {
            let mut projection = DenseMatrix::zeros(n_items, features.cols());
            projection.fill_uniform(&mut rng, scale);
            FeatureBlock {
                features,
                projection,
            }
        })
        .collect();
    Ok(MultiFeatureParams {
        user_factors,
        item_factors,
        item_blocks,
        user_blocks,
    })
}

impl From<ModelParams> for MultiFeatureParams {
    fn from(p: ModelParams) -> Self {
        MultiFeatureParams {
            user_factors: p.user_factors,
            item_factors: p.item_factors,
            item_blocks: vec![FeatureBlock {
                features: p.item_features,
                projection: p.user_preference,
            }],
            user_blocks: vec![FeatureBlock {
                features: p.user_features,
                projection: p.item_fitness,
            }],
        }
    }
}

impl MultiFeatureParams {
    /// Inverse of the `From<ModelParams>` conversion; requires exactly one
    /// block per side.
    pub fn into_model_params(mut self) -> Result<ModelParams> {
        if self.item_blocks.len() != 1 || self.user_blocks.len() != 1 {
            return Err(Error::InvalidArgument(
                "expected exactly one feature block per side".into(),
            ));
        }
        let item_block = self.item_blocks.pop().unwrap();
        let user_block = self.user_blocks.pop().unwrap();
        Ok(ModelParams {
            user_factors: self.user_factors,
            item_factors: self.item_factors,
            user_preference: item_block.projection,
            item_fitness: user_block.projection,
            user_features: user_block.features,
            item_features: item_block.features,
        })
    }
}

/// Checkpoint IO: a text header `n_users n_items K0 K1 K2` followed by each
/// matrix as a labeled row block at 17 significant digits. Multi-feature
/// and popularity models get their own headers (`multi ...` / `mp ...`).
pub mod io {
    use std::fs;
    use std::io::Write;
    use std::path::Path;

    use super::{FeatureBlock, ModelParams, MultiFeatureParams, Predictor};
    use crate::error::{Error, Result};
    use crate::matrix::DenseMatrix;
    use crate::training::PopularityModel;

    pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
        let mut f = fs::File::create(path)?;
        writeln!(
            f,
            "{} {} {} {} {}",
            params.n_users(),
            params.n_items(),
            params.k0(),
            params.k1(),
            params.k2()
        )?;
        write_block(&mut f, "U", &params.user_factors)?;
        write_block(&mut f, "V", &params.item_factors)?;
        write_block(&mut f, "P", &params.user_preference)?;
        write_block(&mut f, "Q", &params.item_fitness)?;
        write_block(&mut f, "E", &params.user_features)?;
        write_block(&mut f, "F", &params.item_features)?;
        Ok(())
    }

    fn write_block(f: &mut fs::File, label: &str, m: &DenseMatrix) -> Result<()> {
        writeln!(f, "{label}")?;
        for i in 0..m.rows() {
            let line = m
                .row(i)
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyInput)?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|f| f.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad checkpoint header: {e}"),
            })?;
        if dims.len() != 5 {
            return Err(Error::Parse {
                line: 1,
                message: "checkpoint header needs 5 dimensions".into(),
            });
        }
        let (n_users, n_items, k0, k1, k2) = (dims[0], dims[1], dims[2], dims[3], dims[4]);
        let mut lineno = 1usize;
        let mut read_block = |label: &str, rows: usize, cols: usize| -> Result<DenseMatrix> {
            lineno += 1;
            match lines.next() {
                Some(l) if l.trim() == label => {}
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected block label {label:?}, got {other:?}"),
                    })
                }
            }
            let mut m = DenseMatrix::zeros(rows, cols);
            for r in 0..rows {
                lineno += 1;
                let line = lines.next().ok_or(Error::Parse {
                    line: lineno,
                    message: format!("missing row {r} of block {label}"),
                })?;
                let values: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| v.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse {
                        line: lineno,
                        message: format!("bad float in block {label}: {e}"),
                    })?;
                if values.len() != cols {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!(
                            "block {label} row {r}: expected {cols} values, got {}",
                            values.len()
                        ),
                    });
                }
                m.row_mut(r).copy_from_slice(&values);
            }
            Ok(m)
        };
        let user_factors = read_block("U", n_users, k0)?;
        let item_factors = read_block("V", n_items, k0)?;
        let user_preference = read_block("P", n_users, k2)?;
        let item_fitness = read_block("Q", n_items, k1)?;
        let user_features = read_block("E", n_users, k1)?;
        let item_features = read_block("F", n_items, k2)?;
        Ok(ModelParams {
            user_factors,
            item_factors,
            user_preference,
            item_fitness,
            user_features,
            item_features,
        })
    }

    pub fn write_multi_checkpoint(path: &Path, params: &MultiFeatureParams) -> Result<()> {
        let mut f = fs::File::create(path)?;
        writeln!(
            f,
            "multi {} {} {} {} {}",
            params.n_users(),
            params.n_items(),
            params.user_factors.cols(),
            params.item_blocks.len(),
            params.user_blocks.len()
        )?;
        write_block(&mut f, "U", &params.user_factors)?;
        write_block(&mut f, "V", &params.item_factors)?;
        for (j, block) in params.item_blocks.iter().enumerate() {
            write_block(&mut f, &format!("F{j} {}", block.features.cols()), &block.features)?;
            write_block(&mut f, &format!("P{j} {}", block.features.cols()), &block.projection)?;
        }
        for (k, block) in params.user_blocks.iter().enumerate() {
            write_block(&mut f, &format!("E{k} {}", block.features.cols()), &block.features)?;
            write_block(&mut f, &format!("Q{k} {}", block.features.cols()), &block.projection)?;
        }
        Ok(())
    }

    pub fn write_popularity(path: &Path, model: &PopularityModel) -> Result<()> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "mp {} {}", model.n_users(), model.n_items())?;
        let line = model
            .counts()
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(f, "{line}")?;
        Ok(())
    }

    /// Any persisted model, dispatched by the checkpoint header.
    #[derive(Debug, Clone)]
    pub enum AnyModel {
        Plain(ModelParams),
        Multi(MultiFeatureParams),
        Popularity(PopularityModel),
    }

    impl Predictor for AnyModel {
        fn n_users(&self) -> usize {
            match self {
                AnyModel::Plain(m) => m.n_users(),
                AnyModel::Multi(m) => m.n_users(),
                AnyModel::Popularity(m) => m.n_users(),
            }
        }

        fn n_items(&self) -> usize {
            match self {
                AnyModel::Plain(m) => m.n_items(),
                AnyModel::Multi(m) => m.n_items(),
                AnyModel::Popularity(m) => m.n_items(),
            }
        }

        fn score(&self, user: usize, item: usize) -> f64 {
            match self {
                AnyModel::Plain(m) => m.score(user, item),
                AnyModel::Multi(m) => m.score(user, item),
                AnyModel::Popularity(m) => m.score(user, item),
            }
        }
    }

    pub fn read_any_checkpoint(path: &Path) -> Result<AnyModel> {
        let text = fs::read_to_string(path)?;
        let header = text.lines().next().ok_or(Error::EmptyInput)?;
        if header.starts_with("mp ") {
            read_popularity_text(&text).map(AnyModel::Popularity)
        } else if header.starts_with("multi ") {
            read_multi_text(&text).map(AnyModel::Multi)
        } else {
            read_checkpoint(path).map(AnyModel::Plain)
        }
    }

    fn read_popularity_text(text: &str) -> Result<PopularityModel> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyInput)?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .skip(1)
            .map(|f| f.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad popularity header: {e}"),
            })?;
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: 1,
                message: "popularity header needs 2 dimensions".into(),
            });
        }
        let counts_line = lines.next().ok_or(Error::Parse {
            line: 2,
            message: "missing counts".into(),
        })?;
        let counts: Vec<f64> = counts_line
            .split_whitespace()
            .map(|v| v.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 2,
                message: format!("bad count: {e}"),
            })?;
        if counts.len() != dims[1] {
            return Err(Error::Parse {
                line: 2,
                message: format!("expected {} counts, got {}", dims[1], counts.len()),
            });
        }
        Ok(PopularityModel::from_parts(dims[0], counts))
    }

    struct BlockReader<'a> {
        lines: std::str::Lines<'a>,
        lineno: usize,
    }

    impl<'a> BlockReader<'a> {
        /// Reads a block whose label line is `label` or `label <extra>`;
        /// `cols` of None takes the width from the first token after the
        /// label.
        fn block(&mut self, label: &str, rows: usize, cols: Option<usize>) -> Result<DenseMatrix> {
            self.lineno += 1;
            let got = self.lines.next().map(str::trim);
            let cols = match (got, cols) {
                (Some(l), Some(c)) if l == label => c,
                (Some(l), None) if l.starts_with(label) => l[label.len()..]
                    .split_whitespace()
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or(Error::Parse {
                        line: self.lineno,
                        message: format!("missing column count on block {label}"),
                    })?,
                (other, _) => {
                    return Err(Error::Parse {
                        line: self.lineno,
                        message: format!("expected block {label:?}, got {other:?}"),
                    })
                }
            };
            let mut m = DenseMatrix::zeros(rows, cols);
            for r in 0..rows {
                self.lineno += 1;
                let line = self.lines.next().ok_or(Error::Parse {
                    line: self.lineno,
                    message: format!("missing row {r} of block {label}"),
                })?;
                let values: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| v.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse {
                        line: self.lineno,
                        message: format!("bad float in block {label}: {e}"),
                    })?;
                if values.len() != cols {
                    return Err(Error::Parse {
                        line: self.lineno,
                        message: format!("block {label}: expected {cols} values"),
                    });
                }
                m.row_mut(r).copy_from_slice(&values);
            }
            Ok(m)
        }
    }

    fn read_multi_text(text: &str) -> Result<MultiFeatureParams> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyInput)?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .skip(1)
            .map(|f| f.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad multi header: {e}"),
            })?;
        if dims.len() != 5 {
            return Err(Error::Parse {
                line: 1,
                message: "multi header needs 5 dimensions".into(),
            });
        }
        let (n_users, n_items, k0, n_item_blocks, n_user_blocks) =
            (dims[0], dims[1], dims[2], dims[3], dims[4]);

        let mut reader = BlockReader { lines, lineno: 1 };
        let user_factors = reader.block("U", n_users, Some(k0))?;
        let item_factors = reader.block("V", n_items, Some(k0))?;
        let mut item_blocks = Vec::with_capacity(n_item_blocks);
        for j in 0..n_item_blocks {
            let features = reader.block(&format!("F{j}"), n_items, None)?;
            let projection = reader.block(&format!("P{j}"), n_users, None)?;
            item_blocks.push(FeatureBlock {
                features,
                projection,
            });
        }
        let mut user_blocks = Vec::with_capacity(n_user_blocks);
        for k in 0..n_user_blocks {
            let features = reader.block(&format!("E{k}"), n_users, None)?;
            let projection = reader.block(&format!("Q{k}"), n_items, None)?;
            user_blocks.push(FeatureBlock {
                features,
                projection,
            });
        }
        Ok(MultiFeatureParams {
            user_factors,
            item_factors,
            item_blocks,
            user_blocks,
        })
    }
}
