//! Pairwise ranking objective, gradients, and the mini-batch SGD loop, plus
//! the popularity and pointwise baselines.
//!
//! The objective scores every (preferred, dispreferred) pair through
//! ln sigma of the score difference: (positive, negative) pairs at weight 1,
//! (positive, potential) at eta1, (potential, negative) at eta2, minus an
//! L2 penalty on the learned parameters. Training ascends sampled stochastic
//! gradients per Algorithm: shuffle records each epoch, draw m potential and
//! m negative items per record, accumulate pair gradients over a batch, and
//! apply one update per touched row (regularization once per touched row
//! per batch).

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{DatasetSplit, InteractionMatrix};
use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::model::{
    init_multi_params, ModelParams, MultiFeatureParams, Predictor,
};
use crate::preference::{sample_training_pairs, PreferenceSets, TrainingPair};

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let z = t.exp();
        z / (1.0 + z)
    }
}

/// Numerically stable ln(sigmoid(x)).
pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Hyperparameters of the SGD loop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub reg_lambda: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Potential/negative samples drawn per record (m).
    pub sampling_rate: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Epoch stride between eval-hook invocations; the final epoch is
    /// always evaluated.
    pub eval_every: usize,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 5000,
            reg_lambda: 0.3,
            eta1: 0.01,
            eta2: 0.01,
            sampling_rate: 5,
            max_iters: 200,
            seed: 42,
            eval_every: 1,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan()
            || self.learning_rate < 0.0
            || self.batch_size == 0
            || self.sampling_rate == 0
        {
            return Err(Error::InvalidArgument(
                "need learning_rate >= 0, batch_size >= 1, sampling_rate >= 1".into(),
            ));
        }
        if self.reg_lambda < 0.0 || self.eta1 < 0.0 || self.eta2 < 0.0 {
            return Err(Error::InvalidArgument(
                "reg_lambda, eta1, eta2 must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Whether the predictor carries spectral feature terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mf,
    Scf,
}

/// One metric observation; emitted as a line-delimited record
/// `{"epoch":..,"split":..,"metric":..,"value":..}`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EpochMetric {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Callback run every `eval_every` epochs; returned records are collected
/// into the history, and `f1@5` on split `valid` drives best-epoch
/// selection.
pub type EvalHook<'a> = dyn FnMut(usize, &dyn Predictor) -> Vec<EpochMetric> + 'a;

/// As [`EvalHook`] but with concrete parameter access (snapshots,
/// block-level diagnostics).
pub type MultiEvalHook<'a> = dyn FnMut(usize, &MultiFeatureParams) -> Vec<EpochMetric> + 'a;

/// Final parameters (best validation epoch when a hook reports one, last
/// epoch otherwise) plus the collected metric history.
#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochMetric>,
}

const SELECTION_METRIC: &str = "f1@5";
const SELECTION_SPLIT: &str = "valid";

/// Trains an MF or SCF model with the SPLR objective. `features` supplies
/// the fixed (user E, item F) spectral matrices and is required for
/// [`ModelKind::Scf`]; MF runs with zero-width feature terms.
pub fn train(
    kind: ModelKind,
    k0: usize,
    data: &DatasetSplit,
    sets: &PreferenceSets,
    features: Option<(&DenseMatrix, &DenseMatrix)>,
    cfg: &TrainConfig,
    hook: Option<&mut EvalHook<'_>>,
) -> Result<TrainOutcome<ModelParams>> {
    let n_users = data.train.n_users();
    let n_items = data.train.n_items();
    let (user_features, item_features) = match kind {
        ModelKind::Mf => (DenseMatrix::zeros(n_users, 0), DenseMatrix::zeros(n_items, 0)),
        ModelKind::Scf => {
            let (e, f) = features.ok_or_else(|| {
                Error::InvalidArgument("scf training requires spectral features".into())
            })?;
            (e.clone(), f.clone())
        }
    };
    let mut adapter;
    let multi_hook: Option<&mut MultiEvalHook<'_>> = match hook {
        Some(h) => {
            adapter = move |epoch: usize, p: &MultiFeatureParams| h(epoch, p as &dyn Predictor);
            Some(&mut adapter)
        }
        None => None,
    };
    let outcome = train_multi(
        k0,
        data,
        sets,
        vec![item_features],
        vec![user_features],
        cfg,
        multi_hook,
    )?;
    Ok(TrainOutcome {
        params: outcome.params.into_model_params()?,
        best_epoch: outcome.best_epoch,
        history: outcome.history,
    })
}

/// Multi-feature SPLR training: one bilinear term per feature block.
pub fn train_multi(
    k0: usize,
    data: &DatasetSplit,
    sets: &PreferenceSets,
    item_feature_blocks: Vec<DenseMatrix>,
    user_feature_blocks: Vec<DenseMatrix>,
    cfg: &TrainConfig,
    mut hook: Option<&mut MultiEvalHook<'_>>,
) -> Result<TrainOutcome<MultiFeatureParams>> {
    cfg.validate()?;
    let train = &data.train;
    if sets.n_users() != train.n_users() || sets.n_items() != train.n_items() {
        return Err(Error::InvalidArgument(
            "preference sets do not match the training matrix".into(),
        ));
    }
    let mut params = init_multi_params(
        train.n_users(),
        train.n_items(),
        k0,
        item_feature_blocks,
        user_feature_blocks,
        cfg.seed,
        cfg.init_scale,
    )?;

    let mut history: Vec<EpochMetric> = Vec::new();
    let mut best: Option<(f64, usize, MultiFeatureParams)> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_1005_u64);
    let mut records: Vec<(u32, u32)> = train.records().to_vec();
    let mut acc = GradAccum::new(&params);

    for epoch in 1..=cfg.max_iters {
        records.shuffle(&mut rng);
        for (batch_idx, batch) in records.chunks(cfg.batch_size).enumerate() {
            acc.clear();
            for &(u, i) in batch {
                let pairs =
                    sample_training_pairs(sets, (u, i), cfg.sampling_rate, cfg.eta1, cfg.eta2, &mut rng);
                for pair in pairs {
                    accumulate_pair(&params, &pair, &mut acc);
                }
            }
            apply_batch(&mut params, &acc, cfg.learning_rate, cfg.reg_lambda).map_err(|_| {
                Error::TrainingDiverged {
                    epoch,
                    batch: batch_idx,
                }
            })?;
        }

        if let Some(hook) = hook.as_deref_mut() {
            if cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.max_iters) {
                let metrics = hook(epoch, &params);
                for m in &metrics {
                    if m.split == SELECTION_SPLIT && m.metric == SELECTION_METRIC {
                        let better = best.as_ref().is_none_or(|(v, _, _)| m.value > *v);
                        if better {
                            best = Some((m.value, epoch, params.clone()));
                        }
                    }
                }
                history.extend(metrics);
            }
        }
    }

    let (best_epoch, params) = match best {
        Some((_, epoch, snapshot)) => (Some(epoch), snapshot),
        None => (None, params),
    };
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
    })
}

/// Per-batch delta store: rows keyed by (matrix, row index) in first-touch
/// order.
struct GradAccum {
    user_factor: RowDeltas,
    item_factor: RowDeltas,
    item_block_proj: Vec<RowDeltas>,
    user_block_proj: Vec<RowDeltas>,
}

impl GradAccum {
    fn new(params: &MultiFeatureParams) -> Self {
        Self {
            user_factor: RowDeltas::new(params.user_factors.cols()),
            item_factor: RowDeltas::new(params.item_factors.cols()),
            item_block_proj: params
                .item_blocks
                .iter()
                .map(|b| RowDeltas::new(b.projection.cols()))
                .collect(),
            user_block_proj: params
                .user_blocks
                .iter()
                .map(|b| RowDeltas::new(b.projection.cols()))
                .collect(),
        }
    }

    fn clear(&mut self) {
        self.user_factor.clear();
        self.item_factor.clear();
        for d in &mut self.item_block_proj {
            d.clear();
        }
        for d in &mut self.user_block_proj {
            d.clear();
        }
    }
}

struct RowDeltas {
    dim: usize,
    index: std::collections::HashMap<u32, usize>,
    rows: Vec<(u32, Vec<f64>)>,
}

impl RowDeltas {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            index: std::collections::HashMap::new(),
            rows: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.index.clear();
        self.rows.clear();
    }

    fn row_mut(&mut self, row: u32) -> &mut [f64] {
        let dim = self.dim;
        let slot = *self.index.entry(row).or_insert_with(|| {
            self.rows.push((row, vec![0.0; dim]));
            self.rows.len() - 1
        });
        &mut self.rows[slot].1
    }
}

/// Adds one pair's weighted gradient (no regularization) to the batch
/// accumulator; parameters are read, never written.
fn accumulate_pair(params: &MultiFeatureParams, pair: &TrainingPair, acc: &mut GradAccum) {
    let u = pair.user as usize;
    let i = pair.preferred as usize;
    let j = pair.dispreferred as usize;
    let coef = pair.weight * sigmoid(-params.score_diff(u, i, j));

    {
        let du = acc.user_factor.row_mut(pair.user);
        let vi = params.item_factors.row(i);
        let vj = params.item_factors.row(j);
        for c in 0..du.len() {
            du[c] += coef * (vi[c] - vj[c]);
        }
    }
    {
        let uu = params.user_factors.row(u);
        let dvi = acc.item_factor.row_mut(pair.preferred);
        for c in 0..dvi.len() {
            dvi[c] += coef * uu[c];
        }
        let dvj = acc.item_factor.row_mut(pair.dispreferred);
        for c in 0..dvj.len() {
            dvj[c] -= coef * uu[c];
        }
    }
    for (b, block) in params.item_blocks.iter().enumerate() {
        let dp = acc.item_block_proj[b].row_mut(pair.user);
        let fi = block.features.row(i);
        let fj = block.features.row(j);
        for c in 0..dp.len() {
            dp[c] += coef * (fi[c] - fj[c]);
        }
    }
    for (b, block) in params.user_blocks.iter().enumerate() {
        let eu = block.features.row(u);
        let dqi = acc.user_block_proj[b].row_mut(pair.preferred);
        for c in 0..dqi.len() {
            dqi[c] += coef * eu[c];
        }
        let dqj = acc.user_block_proj[b].row_mut(pair.dispreferred);
        for c in 0..dqj.len() {
            dqj[c] -= coef * eu[c];
        }
    }
}

/// Ascent step: row += lr * (delta - reg * row) for every touched row,
/// reading batch-start values. Errors on non-finite results.
fn apply_batch(
    params: &mut MultiFeatureParams,
    acc: &GradAccum,
    lr: f64,
    reg: f64,
) -> std::result::Result<(), ()> {
    fn apply(
        m: &mut DenseMatrix,
        deltas: &RowDeltas,
        lr: f64,
        reg: f64,
    ) -> std::result::Result<(), ()> {
        let mut ok = true;
        for (row, delta) in &deltas.rows {
            let target = m.row_mut(*row as usize);
            for c in 0..target.len() {
                target[c] += lr * (delta[c] - reg * target[c]);
                ok &= target[c].is_finite();
            }
        }
        if ok {
            Ok(())
        } else {
            Err(())
        }
    }
    apply(&mut params.user_factors, &acc.user_factor, lr, reg)?;
    apply(&mut params.item_factors, &acc.item_factor, lr, reg)?;
    for (b, deltas) in acc.item_block_proj.iter().enumerate() {
        apply(&mut params.item_blocks[b].projection, deltas, lr, reg)?;
    }
    for (b, deltas) in acc.user_block_proj.iter().enumerate() {
        apply(&mut params.user_blocks[b].projection, deltas, lr, reg)?;
    }
    Ok(())
}

/// Exact pairwise objective over all (positive, negative), (positive,
/// potential), and (potential, negative) pairs, minus the L2 penalty.
/// The triple sum is quadratic per user; intended for small instances and
/// as a test oracle.
pub fn splr_objective(
    params: &ModelParams,
    sets: &PreferenceSets,
    eta1: f64,
    eta2: f64,
    reg_lambda: f64,
) -> f64 {
    let mut total = 0.0;
    for u in 0..sets.n_users() {
        let negatives = sets.negative_items(u);
        for &i in sets.positive(u) {
            let si = params.score(u, i as usize);
            for &j in &negatives {
                total += ln_sigmoid(si - params.score(u, j as usize));
            }
            if eta1 != 0.0 {
                for &j in sets.potential(u) {
                    total += eta1 * ln_sigmoid(si - params.score(u, j as usize));
                }
            }
        }
        if eta2 != 0.0 {
            for &i in sets.potential(u) {
                let si = params.score(u, i as usize);
                for &j in &negatives {
                    total += eta2 * ln_sigmoid(si - params.score(u, j as usize));
                }
            }
        }
    }
    total - reg_lambda / 2.0 * params.norm_squared()
}

/// Weighted gradient rows for one training pair: the ln-sigmoid pull plus
/// `-reg_lambda` times each touched row (applied once per row even when the
/// pair touches it twice).
#[derive(Debug, Clone, Default)]
pub struct PairGradient {
    pub user_factor_rows: Vec<(u32, Vec<f64>)>,
    pub item_factor_rows: Vec<(u32, Vec<f64>)>,
    pub user_preference_rows: Vec<(u32, Vec<f64>)>,
    pub item_fitness_rows: Vec<(u32, Vec<f64>)>,
}

pub fn pair_gradient(params: &ModelParams, pair: &TrainingPair, reg_lambda: f64) -> PairGradient {
    let u = pair.user as usize;
    let i = pair.preferred as usize;
    let j = pair.dispreferred as usize;
    let coef = pair.weight * sigmoid(-params.score_diff(u, i, j));

    let minus_reg = |row: &[f64]| -> Vec<f64> { row.iter().map(|x| -reg_lambda * x).collect() };

    let mut grad = PairGradient::default();

    let vi = params.item_factors.row(i);
    let vj = params.item_factors.row(j);
    let mut du = minus_reg(params.user_factors.row(u));
    for c in 0..du.len() {
        du[c] += coef * (vi[c] - vj[c]);
    }
    grad.user_factor_rows.push((pair.user, du));

    let uu = params.user_factors.row(u);
    if i == j {
        // The pulls cancel; only regularization remains.
        grad.item_factor_rows
            .push((pair.preferred, minus_reg(params.item_factors.row(i))));
    } else {
        let mut dvi = minus_reg(params.item_factors.row(i));
        let mut dvj = minus_reg(params.item_factors.row(j));
        for c in 0..uu.len() {
            dvi[c] += coef * uu[c];
            dvj[c] -= coef * uu[c];
        }
        grad.item_factor_rows.push((pair.preferred, dvi));
        grad.item_factor_rows.push((pair.dispreferred, dvj));
    }

    if params.k2() > 0 {
        let fi = params.item_features.row(i);
        let fj = params.item_features.row(j);
        let mut dp = minus_reg(params.user_preference.row(u));
        for c in 0..dp.len() {
            dp[c] += coef * (fi[c] - fj[c]);
        }
        grad.user_preference_rows.push((pair.user, dp));
    }
    if params.k1() > 0 {
        let eu = params.user_features.row(u);
        if i == j {
            grad.item_fitness_rows
                .push((pair.preferred, minus_reg(params.item_fitness.row(i))));
        } else {
            let mut dqi = minus_reg(params.item_fitness.row(i));
            let mut dqj = minus_reg(params.item_fitness.row(j));
            for c in 0..eu.len() {
                dqi[c] += coef * eu[c];
                dqj[c] -= coef * eu[c];
            }
            grad.item_fitness_rows.push((pair.preferred, dqi));
            grad.item_fitness_rows.push((pair.dispreferred, dqj));
        }
    }
    grad
}

/// Items by descending training popularity, ascending index on ties.
pub fn rank_most_popular(train: &InteractionMatrix) -> Vec<u32> {
    let mut counts = vec![0usize; train.n_items()];
    for &(_, i) in train.records() {
        counts[i as usize] += 1;
    }
    let mut items: Vec<u32> = (0..train.n_items() as u32).collect();
    items.sort_by(|&a, &b| {
        counts[b as usize]
            .cmp(&counts[a as usize])
            .then(a.cmp(&b))
    });
    items
}

/// Non-personalized popularity scorer: score(u, i) = training count of i.
#[derive(Debug, Clone)]
pub struct PopularityModel {
    n_users: usize,
    counts: Vec<f64>,
}

impl PopularityModel {
    pub fn from_train(train: &InteractionMatrix) -> Self {
        let mut counts = vec![0.0; train.n_items()];
        for &(_, i) in train.records() {
            counts[i as usize] += 1.0;
        }
        Self {
            n_users: train.n_users(),
            counts,
        }
    }

    pub fn from_parts(n_users: usize, counts: Vec<f64>) -> Self {
        Self { n_users, counts }
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

impl Predictor for PopularityModel {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn score(&self, _user: usize, item: usize) -> f64 {
        self.counts[item]
    }
}

/// Pointwise squared-error baseline: fits observed cells to 1 and, per
/// positive, `sampling_rate` sampled missing cells to 0, by seeded SGD with
/// L2 regularization. The factor structure is plain MF (no feature terms).
pub fn train_pointwise(
    data: &DatasetSplit,
    k0: usize,
    cfg: &TrainConfig,
    mut hook: Option<&mut EvalHook<'_>>,
) -> Result<TrainOutcome<ModelParams>> {
    cfg.validate()?;
    let train = &data.train;
    let n_users = train.n_users();
    let n_items = train.n_items();
    let mut params = crate::model::init_params(
        (n_users, n_items, k0, 0, 0),
        (DenseMatrix::zeros(n_users, 0), DenseMatrix::zeros(n_items, 0)),
        cfg.seed,
        cfg.init_scale,
    )?;
    let positives = train.items_by_user();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_1005_u64);
    let mut records: Vec<(u32, u32)> = train.records().to_vec();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=cfg.max_iters {
        records.shuffle(&mut rng);
        for (batch_idx, batch) in records.chunks(cfg.batch_size).enumerate() {
            for &(u, i) in batch {
                sgd_pointwise_step(&mut params, u, i, 1.0, cfg);
                let user_pos = &positives[u as usize];
                if user_pos.len() < n_items {
                    for _ in 0..cfg.sampling_rate {
                        let mut candidate = rng.gen_range(0..n_items as u32);
                        while user_pos.binary_search(&candidate).is_ok() {
                            candidate = rng.gen_range(0..n_items as u32);
                        }
                        sgd_pointwise_step(&mut params, u, candidate, 0.0, cfg);
                    }
                }
            }
            if !params.all_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch: batch_idx,
                });
            }
        }
        if let Some(hook) = hook.as_deref_mut() {
            if cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.max_iters) {
                let metrics = hook(epoch, &params);
                for m in &metrics {
                    if m.split == SELECTION_SPLIT && m.metric == SELECTION_METRIC {
                        let better = best.as_ref().is_none_or(|(v, _, _)| m.value > *v);
                        if better {
                            best = Some((m.value, epoch, params.clone()));
                        }
                    }
                }
                history.extend(metrics);
            }
        }
    }
    let (best_epoch, params) = match best {
        Some((_, epoch, snapshot)) => (Some(epoch), snapshot),
        None => (None, params),
    };
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
    })
}

fn sgd_pointwise_step(params: &mut ModelParams, u: u32, i: u32, target: f64, cfg: &TrainConfig) {
    let uu = params.user_factors.row(u as usize).to_vec();
    let vi = params.item_factors.row(i as usize);
    let err = target - dot(&uu, vi);
    let lr = cfg.learning_rate;
    let reg = cfg.reg_lambda;
    {
        let vi = params.item_factors.row(i as usize).to_vec();
        let urow = params.user_factors.row_mut(u as usize);
        for c in 0..urow.len() {
            urow[c] += lr * (err * vi[c] - reg * urow[c]);
        }
    }
    {
        let irow = params.item_factors.row_mut(i as usize);
        for c in 0..irow.len() {
            irow[c] += lr * (err * uu[c] - reg * irow[c]);
        }
    }
}

/// Mean squared error of the pointwise model over explicit (user, item,
/// target) triples; exposed for diagnostics and tests.
pub fn pointwise_loss(params: &ModelParams, cells: &[(u32, u32, f64)]) -> f64 {
    let mut total = 0.0;
    for &(u, i, target) in cells {
        let err = target - params.score(u as usize, i as usize);
        total += err * err;
    }
    total / cells.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::InteractionMatrix;
    use crate::preference::build_preference_sets;
    use crate::spectral::{ClusterAssignment, Side};

    fn assignment(labels: Vec<u32>, n_clusters: usize, side: Side) -> ClusterAssignment {
        ClusterAssignment {
            labels,
            n_clusters,
            centroids: DenseMatrix::zeros(0, 0),
            side,
        }
    }

    /// 4 users x 6 items with two user communities and two item categories.
    fn toy() -> (DatasetSplit, PreferenceSets) {
        let train = InteractionMatrix::from_index_pairs(
            4,
            6,
            vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 4), (3, 4), (3, 5)],
        )
        .unwrap();
        let users = assignment(vec![0, 0, 1, 1], 2, Side::User);
        let items = assignment(vec![0, 0, 0, 1, 1, 1], 2, Side::Item);
        let sets = build_preference_sets(&train, &users, &items).unwrap();
        let empty = InteractionMatrix::new(
            4,
            6,
            vec![],
            train.user_ids().to_vec(),
            train.item_ids().to_vec(),
        )
        .unwrap();
        (
            DatasetSplit {
                train,
                validation: empty.clone(),
                test: empty,
            },
            sets,
        )
    }

    fn zero_params(sets: &PreferenceSets, k0: usize) -> ModelParams {
        crate::model::init_params(
            (sets.n_users(), sets.n_items(), k0, 0, 0),
            (
                DenseMatrix::zeros(sets.n_users(), 0),
                DenseMatrix::zeros(sets.n_items(), 0),
            ),
            0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn ln_sigmoid_hand_values() {
        assert!((ln_sigmoid(0.0) - (-0.6931471805599453)).abs() < 1e-15);
        assert!((ln_sigmoid(1.0) - (-0.31326168751822286)).abs() < 1e-15);
        // Stable far into both tails.
        assert!(ln_sigmoid(800.0).abs() < 1e-300);
        assert!((ln_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!((sigmoid(-1.0) - 0.2689414213699951).abs() < 1e-16);
    }

    #[test]
    fn objective_of_zero_params_counts_pairs() {
        let (_, sets) = toy();
        let mut n_pairs = 0usize;
        for u in 0..sets.n_users() {
            let pos = sets.positive(u).len();
            let pot = sets.potential(u).len();
            let neg = sets.negative_len(u);
            n_pairs += pos * neg + pos * pot + pot * neg;
        }
        let params = zero_params(&sets, 3);
        let got = splr_objective(&params, &sets, 1.0, 1.0, 0.0);
        let want = n_pairs as f64 * (-0.6931471805599453);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn objective_with_zero_etas_is_bpr() {
        let (_, sets) = toy();
        let params = {
            let mut p = zero_params(&sets, 2);
            p.user_factors.fill_uniform(&mut ChaCha8Rng::seed_from_u64(4), 0.5);
            p.item_factors.fill_uniform(&mut ChaCha8Rng::seed_from_u64(5), 0.5);
            p
        };
        let got = splr_objective(&params, &sets, 0.0, 0.0, 0.1);
        // Independent BPR sum.
        let mut want = 0.0;
        for u in 0..sets.n_users() {
            for &i in sets.positive(u) {
                for &j in &sets.negative_items(u) {
                    want += ln_sigmoid(
                        params.score(u, i as usize) - params.score(u, j as usize),
                    );
                }
            }
        }
        want -= 0.1 / 2.0 * params.norm_squared();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn objective_single_pair_hand_value() {
        // One user, positive i0, negative i1, scores fixed so the margin
        // is exactly 1.
        let train = InteractionMatrix::from_index_pairs(1, 2, vec![(0, 0)]).unwrap();
        let users = assignment(vec![0], 1, Side::User);
        let items = assignment(vec![0, 1], 2, Side::Item);
        let sets = build_preference_sets(&train, &users, &items).unwrap();
        let mut params = zero_params(&sets, 1);
        params.user_factors.set(0, 0, 1.0);
        params.item_factors.set(0, 0, 1.0);
        params.item_factors.set(1, 0, 0.0);
        let got = splr_objective(&params, &sets, 0.3, 0.7, 0.0);
        assert!((got - (-0.31326168751822286)).abs() < 1e-12);
    }

    #[test]
    fn pair_gradient_hand_case() {
        // K0 = 1, U_u = 1, V_i = 2, V_j = 1: margin 1, sigma(-1) = 0.268941...
        let train = InteractionMatrix::from_index_pairs(1, 2, vec![(0, 0)]).unwrap();
        let users = assignment(vec![0], 1, Side::User);
        let items = assignment(vec![0, 1], 2, Side::Item);
        let sets = build_preference_sets(&train, &users, &items).unwrap();
        let mut params = zero_params(&sets, 1);
        params.user_factors.set(0, 0, 1.0);
        params.item_factors.set(0, 0, 2.0);
        params.item_factors.set(1, 0, 1.0);
        let pair = TrainingPair {
            user: 0,
            preferred: 0,
            dispreferred: 1,
            weight: 1.0,
        };
        let s = 0.2689414213699951;

        let grad = pair_gradient(&params, &pair, 0.0);
        assert!((grad.user_factor_rows[0].1[0] - s).abs() < 1e-15);
        assert!((grad.item_factor_rows[0].1[0] - s).abs() < 1e-15);
        assert!((grad.item_factor_rows[1].1[0] + s).abs() < 1e-15);

        let reg = pair_gradient(&params, &pair, 0.1);
        assert!((reg.user_factor_rows[0].1[0] - (s - 0.1)).abs() < 1e-15);
        assert!((reg.item_factor_rows[0].1[0] - (s - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn pair_gradient_identical_items_is_pure_regularization() {
        let train = InteractionMatrix::from_index_pairs(1, 2, vec![(0, 0)]).unwrap();
        let users = assignment(vec![0], 1, Side::User);
        let items = assignment(vec![0, 1], 2, Side::Item);
        let sets = build_preference_sets(&train, &users, &items).unwrap();
        let mut params = zero_params(&sets, 1);
        params.user_factors.set(0, 0, 1.0);
        params.item_factors.set(0, 0, 2.0);
        let pair = TrainingPair {
            user: 0,
            preferred: 0,
            dispreferred: 0,
            weight: 1.0,
        };
        let grad = pair_gradient(&params, &pair, 0.5);
        assert_eq!(grad.user_factor_rows[0].1[0], -0.5 * 1.0);
        assert_eq!(grad.item_factor_rows.len(), 1);
        assert_eq!(grad.item_factor_rows[0].1[0], -0.5 * 2.0);
    }

    /// Sums pair gradients over every pair of the exact objective with
    /// reg_lambda = 0, then adds the -reg * theta term once globally; this
    /// matches the derivative of `splr_objective`.
    fn full_gradient(
        params: &ModelParams,
        sets: &PreferenceSets,
        eta1: f64,
        eta2: f64,
        reg_lambda: f64,
    ) -> (DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix) {
        let mut du = DenseMatrix::zeros(params.n_users(), params.k0());
        let mut dv = DenseMatrix::zeros(params.n_items(), params.k0());
        let mut dp = DenseMatrix::zeros(params.n_users(), params.k2());
        let mut dq = DenseMatrix::zeros(params.n_items(), params.k1());
        let mut add = |pair: &TrainingPair| {
            let g = pair_gradient(params, pair, 0.0);
            for (r, delta) in &g.user_factor_rows {
                for (c, d) in delta.iter().enumerate() {
                    let v = du.get(*r as usize, c) + d;
                    du.set(*r as usize, c, v);
                }
            }
            for (r, delta) in &g.item_factor_rows {
                for (c, d) in delta.iter().enumerate() {
                    let v = dv.get(*r as usize, c) + d;
                    dv.set(*r as usize, c, v);
                }
            }
            for (r, delta) in &g.user_preference_rows {
                for (c, d) in delta.iter().enumerate() {
                    let v = dp.get(*r as usize, c) + d;
                    dp.set(*r as usize, c, v);
                }
            }
            for (r, delta) in &g.item_fitness_rows {
                for (c, d) in delta.iter().enumerate() {
                    let v = dq.get(*r as usize, c) + d;
                    dq.set(*r as usize, c, v);
                }
            }
        };
        for u in 0..sets.n_users() {
            let negatives = sets.negative_items(u);
            for &i in sets.positive(u) {
                for &j in &negatives {
                    add(&TrainingPair {
                        user: u as u32,
                        preferred: i,
                        dispreferred: j,
                        weight: 1.0,
                    });
                }
                if eta1 != 0.0 {
                    for &j in sets.potential(u) {
                        add(&TrainingPair {
                            user: u as u32,
                            preferred: i,
                            dispreferred: j,
                            weight: eta1,
                        });
                    }
                }
            }
            if eta2 != 0.0 {
                for &i in sets.potential(u) {
                    for &j in &negatives {
                        add(&TrainingPair {
                            user: u as u32,
                            preferred: i,
                            dispreferred: j,
                            weight: eta2,
                        });
                    }
                }
            }
        }
        let sub_reg = |d: &mut DenseMatrix, p: &DenseMatrix| {
            for r in 0..d.rows() {
                for c in 0..d.cols() {
                    let v = d.get(r, c) - reg_lambda * p.get(r, c);
                    d.set(r, c, v);
                }
            }
        };
        sub_reg(&mut du, &params.user_factors);
        sub_reg(&mut dv, &params.item_factors);
        sub_reg(&mut dp, &params.user_preference);
        sub_reg(&mut dq, &params.item_fitness);
        (du, dv, dp, dq)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        // Random small instances; every learned coordinate checked by
        // central differences of the exact objective.
        let n = 6;
        let (k0, k1, k2) = (3, 2, 2);
        let (eta1, eta2, reg) = (0.4, 0.25, 0.15);
        let h = 1e-5;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let mut records = Vec::new();
            for u in 0..n as u32 {
                for i in 0..n as u32 {
                    if rng.gen_range(0.0..1.0) < 0.35 {
                        records.push((u, i));
                    }
                }
            }
            if records.is_empty() {
                records.push((0, 0));
            }
            let train = InteractionMatrix::from_index_pairs(n, n, records).unwrap();
            let users = assignment((0..n as u32).map(|u| u % 2).collect(), 2, Side::User);
            let items = assignment((0..n as u32).map(|i| i % 3).collect(), 3, Side::Item);
            let sets = build_preference_sets(&train, &users, &items).unwrap();

            let mut e = DenseMatrix::zeros(n, k1);
            let mut f = DenseMatrix::zeros(n, k2);
            e.fill_uniform(&mut rng, 0.8);
            f.fill_uniform(&mut rng, 0.8);
            let params = crate::model::init_params(
                (n, n, k0, k1, k2),
                (e, f),
                1234 + seed,
                0.3,
            )
            .unwrap();

            let (du, dv, dp, dq) = full_gradient(&params, &sets, eta1, eta2, reg);

            let check = |analytic: f64, fd: f64, what: &str| {
                let denom = analytic.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (analytic - fd).abs() / denom <= 1e-4,
                    "{what}: analytic {analytic} vs fd {fd}"
                );
            };
            let objective = |p: &ModelParams| splr_objective(p, &sets, eta1, eta2, reg);
            for r in 0..n {
                for c in 0..k0 {
                    let mut plus = params.clone();
                    plus.user_factors.set(r, c, params.user_factors.get(r, c) + h);
                    let mut minus = params.clone();
                    minus.user_factors.set(r, c, params.user_factors.get(r, c) - h);
                    let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                    check(du.get(r, c), fd, "U");

                    let mut plus = params.clone();
                    plus.item_factors.set(r, c, params.item_factors.get(r, c) + h);
                    let mut minus = params.clone();
                    minus.item_factors.set(r, c, params.item_factors.get(r, c) - h);
                    let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                    check(dv.get(r, c), fd, "V");
                }
                for c in 0..k2 {
                    let mut plus = params.clone();
                    plus.user_preference
                        .set(r, c, params.user_preference.get(r, c) + h);
                    let mut minus = params.clone();
                    minus
                        .user_preference
                        .set(r, c, params.user_preference.get(r, c) - h);
                    let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                    check(dp.get(r, c), fd, "P");
                }
                for c in 0..k1 {
                    let mut plus = params.clone();
                    plus.item_fitness.set(r, c, params.item_fitness.get(r, c) + h);
                    let mut minus = params.clone();
                    minus.item_fitness.set(r, c, params.item_fitness.get(r, c) - h);
                    let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                    check(dq.get(r, c), fd, "Q");
                }
            }
        }
    }

    #[test]
    fn full_batch_step_does_not_decrease_objective() {
        let (_, sets) = toy();
        let params = {
            let mut p = zero_params(&sets, 2);
            p.user_factors.fill_uniform(&mut ChaCha8Rng::seed_from_u64(7), 0.2);
            p.item_factors.fill_uniform(&mut ChaCha8Rng::seed_from_u64(8), 0.2);
            p
        };
        let (eta1, eta2, reg) = (0.5, 0.5, 0.05);
        let before = splr_objective(&params, &sets, eta1, eta2, reg);
        let (du, dv, _, _) = full_gradient(&params, &sets, eta1, eta2, reg);
        let lr = 1e-3;
        let mut stepped = params.clone();
        for r in 0..stepped.user_factors.rows() {
            for c in 0..stepped.user_factors.cols() {
                let v = stepped.user_factors.get(r, c) + lr * du.get(r, c);
                stepped.user_factors.set(r, c, v);
            }
        }
        for r in 0..stepped.item_factors.rows() {
            for c in 0..stepped.item_factors.cols() {
                let v = stepped.item_factors.get(r, c) + lr * dv.get(r, c);
                stepped.item_factors.set(r, c, v);
            }
        }
        let after = splr_objective(&stepped, &sets, eta1, eta2, reg);
        assert!(after >= before, "{after} < {before}");
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let (data, sets) = toy();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 3,
            max_iters: 4,
            eta1: 0.1,
            eta2: 0.1,
            sampling_rate: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let outcome = train(ModelKind::Mf, 3, &data, &sets, None, &cfg, None).unwrap();
        let init = crate::model::init_params(
            (4, 6, 3, 0, 0),
            (DenseMatrix::zeros(4, 0), DenseMatrix::zeros(6, 0)),
            cfg.seed,
            cfg.init_scale,
        )
        .unwrap();
        assert_eq!(outcome.params, init);
    }

    #[test]
    fn training_never_mutates_fixed_features() {
        let (data, sets) = toy();
        let mut user_features = DenseMatrix::zeros(4, 2);
        let mut item_features = DenseMatrix::zeros(6, 3);
        user_features.fill_uniform(&mut ChaCha8Rng::seed_from_u64(1), 0.6);
        item_features.fill_uniform(&mut ChaCha8Rng::seed_from_u64(2), 0.6);
        let cfg = TrainConfig {
            batch_size: 4,
            max_iters: 10,
            eta1: 0.2,
            eta2: 0.2,
            sampling_rate: 3,
            seed: 13,
            reg_lambda: 0.05,
            ..TrainConfig::default()
        };
        let outcome = train(
            ModelKind::Scf,
            3,
            &data,
            &sets,
            Some((&user_features, &item_features)),
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(outcome.params.user_features.data(), user_features.data());
        assert_eq!(outcome.params.item_features.data(), item_features.data());
        // And the learned parts did move.
        assert!(outcome
            .params
            .user_preference
            .data()
            .iter()
            .any(|&v| v.abs() > 0.011));
    }

    #[test]
    fn training_is_deterministic() {
        let (data, sets) = toy();
        let cfg = TrainConfig {
            batch_size: 4,
            max_iters: 6,
            reg_lambda: 0.02,
            sampling_rate: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(ModelKind::Mf, 4, &data, &sets, None, &cfg, None).unwrap();
        let b = train(ModelKind::Mf, 4, &data, &sets, None, &cfg, None).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn objective_increases_over_training() {
        let (data, sets) = toy();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 8,
            reg_lambda: 0.0,
            eta1: 0.1,
            eta2: 0.1,
            sampling_rate: 3,
            max_iters: 50,
            seed: 3,
            ..TrainConfig::default()
        };
        let init = crate::model::init_params(
            (4, 6, 2, 0, 0),
            (DenseMatrix::zeros(4, 0), DenseMatrix::zeros(6, 0)),
            cfg.seed,
            cfg.init_scale,
        )
        .unwrap();
        let before = splr_objective(&init, &sets, cfg.eta1, cfg.eta2, 0.0);
        let outcome = train(ModelKind::Mf, 2, &data, &sets, None, &cfg, None).unwrap();
        let after = splr_objective(&outcome.params, &sets, cfg.eta1, cfg.eta2, 0.0);
        assert!(after > before, "{after} <= {before}");
    }

    /// Minimal BPR reference: same record shuffling, same negative
    /// sampler, plain (positive, negative) pairs only.
    fn reference_bpr(
        data: &DatasetSplit,
        sets: &PreferenceSets,
        k0: usize,
        cfg: &TrainConfig,
    ) -> ModelParams {
        let train = &data.train;
        let mut params = crate::model::init_params(
            (train.n_users(), train.n_items(), k0, 0, 0),
            (
                DenseMatrix::zeros(train.n_users(), 0),
                DenseMatrix::zeros(train.n_items(), 0),
            ),
            cfg.seed,
            cfg.init_scale,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_1005_u64);
        let mut records: Vec<(u32, u32)> = train.records().to_vec();
        for _epoch in 1..=cfg.max_iters {
            records.shuffle(&mut rng);
            for batch in records.chunks(cfg.batch_size) {
                let mut du: Vec<(u32, Vec<f64>)> = Vec::new();
                let mut dv: Vec<(u32, Vec<f64>)> = Vec::new();
                let bump = |store: &mut Vec<(u32, Vec<f64>)>, row: u32| -> usize {
                    match store.iter().position(|(r, _)| *r == row) {
                        Some(p) => p,
                        None => {
                            store.push((row, vec![0.0; k0]));
                            store.len() - 1
                        }
                    }
                };
                for &(u, i) in batch {
                    let pairs =
                        sample_training_pairs(sets, (u, i), cfg.sampling_rate, 0.0, 0.0, &mut rng);
                    for pair in pairs {
                        let coef = pair.weight
                            * sigmoid(-params.score_diff(
                                pair.user as usize,
                                pair.preferred as usize,
                                pair.dispreferred as usize,
                            ));
                        let vi = params.item_factors.row(pair.preferred as usize).to_vec();
                        let vj = params.item_factors.row(pair.dispreferred as usize).to_vec();
                        let uu = params.user_factors.row(pair.user as usize).to_vec();
                        let slot = bump(&mut du, pair.user);
                        for c in 0..k0 {
                            du[slot].1[c] += coef * (vi[c] - vj[c]);
                        }
                        let slot = bump(&mut dv, pair.preferred);
                        for c in 0..k0 {
                            dv[slot].1[c] += coef * uu[c];
                        }
                        let slot = bump(&mut dv, pair.dispreferred);
                        for c in 0..k0 {
                            dv[slot].1[c] -= coef * uu[c];
                        }
                    }
                }
                for (r, delta) in du {
                    let row = params.user_factors.row_mut(r as usize);
                    for c in 0..k0 {
                        row[c] += cfg.learning_rate * (delta[c] - cfg.reg_lambda * row[c]);
                    }
                }
                for (r, delta) in dv {
                    let row = params.item_factors.row_mut(r as usize);
                    for c in 0..k0 {
                        row[c] += cfg.learning_rate * (delta[c] - cfg.reg_lambda * row[c]);
                    }
                }
            }
        }
        params
    }

    #[test]
    fn zero_eta_training_matches_reference_bpr_bitwise() {
        let (data, sets) = toy();
        let cfg = TrainConfig {
            batch_size: 3,
            reg_lambda: 0.05,
            eta1: 0.0,
            eta2: 0.0,
            sampling_rate: 2,
            max_iters: 8,
            seed: 21,
            ..TrainConfig::default()
        };
        let ours = train(ModelKind::Mf, 3, &data, &sets, None, &cfg, None).unwrap();
        let reference = reference_bpr(&data, &sets, 3, &cfg);
        assert_eq!(ours.params.user_factors.data(), reference.user_factors.data());
        assert_eq!(ours.params.item_factors.data(), reference.item_factors.data());
    }

    #[test]
    fn hook_history_and_best_epoch_selection() {
        let (data, sets) = toy();
        let cfg = TrainConfig {
            batch_size: 8,
            max_iters: 6,
            eval_every: 2,
            seed: 2,
            ..TrainConfig::default()
        };
        // Synthetic hook: f1@5 peaks at epoch 4.
        let mut hook = |epoch: usize, _params: &dyn Predictor| {
            vec![EpochMetric {
                epoch,
                split: "valid".into(),
                metric: "f1@5".into(),
                value: if epoch == 4 { 0.9 } else { 0.1 },
            }]
        };
        let outcome = train(
            ModelKind::Mf,
            2,
            &data,
            &sets,
            None,
            &cfg,
            Some(&mut hook),
        )
        .unwrap();
        assert_eq!(outcome.best_epoch, Some(4));
        assert_eq!(outcome.history.len(), 3); // epochs 2, 4, 6
        let line = serde_json::to_string(&outcome.history[0]).unwrap();
        assert_eq!(
            line,
            r#"{"epoch":2,"split":"valid","metric":"f1@5","value":0.1}"#
        );
    }

    #[test]
    fn most_popular_ranking() {
        let train = InteractionMatrix::from_index_pairs(
            5,
            3,
            vec![(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (0, 1), (1, 1), (2, 1), (0, 2)],
        )
        .unwrap();
        assert_eq!(rank_most_popular(&train), vec![0, 1, 2]);

        let tie = InteractionMatrix::from_index_pairs(2, 3, vec![(0, 1), (1, 2), (0, 0)]).unwrap();
        assert_eq!(rank_most_popular(&tie), vec![0, 1, 2]);

        let empty = InteractionMatrix::from_index_pairs(0, 0, vec![]).unwrap();
        assert!(rank_most_popular(&empty).is_empty());
    }

    #[test]
    fn pointwise_fits_single_cell() {
        let train = InteractionMatrix::from_index_pairs(1, 1, vec![(0, 0)]).unwrap();
        let empty = InteractionMatrix::from_index_pairs(1, 1, vec![]).unwrap();
        let data = DatasetSplit {
            train,
            validation: empty.clone(),
            test: empty,
        };
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 1,
            reg_lambda: 1e-4,
            sampling_rate: 1,
            max_iters: 400,
            seed: 9,
            init_scale: 0.1,
            ..TrainConfig::default()
        };
        let outcome = train_pointwise(&data, 2, &cfg, None).unwrap();
        let score = outcome.params.score(0, 0);
        assert!((score - 1.0).abs() < 0.05, "score {score}");
    }

    #[test]
    fn pointwise_zero_learning_rate_is_frozen() {
        let (data, _) = toy();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            max_iters: 3,
            seed: 31,
            ..TrainConfig::default()
        };
        let outcome = train_pointwise(&data, 3, &cfg, None).unwrap();
        let init = crate::model::init_params(
            (4, 6, 3, 0, 0),
            (DenseMatrix::zeros(4, 0), DenseMatrix::zeros(6, 0)),
            cfg.seed,
            cfg.init_scale,
        )
        .unwrap();
        assert_eq!(outcome.params, init);
    }

    #[test]
    fn pointwise_first_epoch_reduces_loss() {
        let (data, _) = toy();
        let cells: Vec<(u32, u32, f64)> = data
            .train
            .records()
            .iter()
            .map(|&(u, i)| (u, i, 1.0))
            .collect();
        let cfg = TrainConfig {
            learning_rate: 0.02,
            batch_size: 8,
            reg_lambda: 0.0,
            sampling_rate: 1,
            max_iters: 1,
            seed: 17,
            init_scale: 0.05,
            ..TrainConfig::default()
        };
        let init = crate::model::init_params(
            (4, 6, 3, 0, 0),
            (DenseMatrix::zeros(4, 0), DenseMatrix::zeros(6, 0)),
            cfg.seed,
            cfg.init_scale,
        )
        .unwrap();
        let before = pointwise_loss(&init, &cells);
        let outcome = train_pointwise(&data, 3, &cfg, None).unwrap();
        let after = pointwise_loss(&outcome.params, &cells);
        assert!(after < before, "{after} >= {before}");
    }
}
