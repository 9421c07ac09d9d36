//! A small histogram gradient-boosting learner.
//!
//! It exists to evaluate candidate features: the out-of-fold baseline gives
//! every row a prediction from a model that never saw it, and
//! [`feature_boost`] measures how much a candidate column lowers validation
//! loss when boosted on top of that baseline.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tabular::{Column, Dataset, RowIndexSet, Task};

const MISSING_BIN: u8 = u8::MAX;
const LEAF_L2: f64 = 1e-3;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bins: usize,
    pub early_stop_patience: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams { rounds: 100, learning_rate: 0.1, max_depth: 3, min_leaf: 20, bins: 32, early_stop_patience: 5 }
    }
}

impl BoostParams {
    /// Checks ranges. `rounds = 0` is allowed and yields an identity model.
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.max_depth == 0 || self.min_leaf == 0 || self.early_stop_patience == 0 {
            return Err(Error::invalid("booster learning_rate, max_depth, min_leaf and patience must be positive"));
        }
        if !(2..=254).contains(&self.bins) {
            return Err(Error::invalid(format!("booster bins must be in [2, 254], got {}", self.bins)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loss {
    Squared,
    Logistic,
}

impl From<Task> for Loss {
    fn from(t: Task) -> Self {
        match t {
            Task::Regression => Loss::Squared,
            Task::Binary => Loss::Logistic,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Loss {
    fn grad_hess(self, margin: f64, y: f64) -> (f64, f64) {
        match self {
            Loss::Squared => (margin - y, 1.0),
            Loss::Logistic => {
                let p = sigmoid(margin);
                (p - y, (p * (1.0 - p)).max(1e-16))
            }
        }
    }

    /// RMSE for regression, mean log loss for binary.
    fn evaluate(self, margins: impl Iterator<Item = (f64, f64)>) -> f64 {
        let (mut total, mut n) = (0.0, 0usize);
        for (m, y) in margins {
            total += match self {
                Loss::Squared => (m - y).powi(2),
                // log(1 + e^m) - y m, written to avoid overflow
                Loss::Logistic => m.max(0.0) + (-m.abs()).exp().ln_1p() - y * m,
            };
            n += 1;
        }
        match self {
            Loss::Squared => (total / n as f64).sqrt(),
            Loss::Logistic => total / n as f64,
        }
    }
}

/// Validation loss of `margins` against `y` on `rows`.
pub fn loss(task: Task, y: &[f64], margins: &[f64], rows: &[usize]) -> f64 {
    Loss::from(task).evaluate(rows.iter().map(|&r| (margins[r], y[r])))
}

/// Maps raw cells to bins learned from training rows.
#[derive(Debug, Clone, PartialEq)]
enum Binner {
    /// `v <= cuts[b]` for the first such `b`; values above every cut land in
    /// the last bin.
    Numeric { cuts: Vec<f64> },
    /// Category code to frequency rank, rare ranks merged into the last bin.
    Categorical { bin_of: Vec<Option<u8>> },
}

impl Binner {
    fn fit(col: &Column, train: &[usize], bins: usize) -> Self {
        match col {
            Column::Numeric(v) => {
                let mut vals: Vec<f64> = train.iter().map(|&r| v[r]).filter(|x| !x.is_nan()).collect();
                vals.sort_by(f64::total_cmp);
                let mut uniq = vals.clone();
                uniq.dedup();
                let cuts = if uniq.len() <= bins {
                    uniq.pop();
                    uniq
                } else {
                    let mut c: Vec<f64> = (1..bins).map(|i| vals[i * vals.len() / bins]).collect();
                    c.dedup();
                    if c.last() == vals.last() {
                        c.pop();
                    }
                    c
                };
                Binner::Numeric { cuts }
            }
            Column::Categorical { codes, levels } => {
                let mut freq = vec![0usize; levels.len()];
                for &r in train {
                    if let Some(c) = codes[r] {
                        freq[c as usize] += 1;
                    }
                }
                let mut order: Vec<usize> = (0..levels.len()).filter(|&c| freq[c] > 0).collect();
                order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
                let mut bin_of = vec![None; levels.len()];
                for (rank, &c) in order.iter().enumerate() {
                    bin_of[c] = Some(rank.min(bins - 1) as u8);
                }
                Binner::Categorical { bin_of }
            }
        }
    }

    fn n_bins(&self) -> usize {
        match self {
            Binner::Numeric { cuts } => cuts.len() + 1,
            Binner::Categorical { bin_of } => bin_of.iter().flatten().map(|&b| b as usize + 1).max().unwrap_or(0),
        }
    }

    fn bin(&self, col: &Column, row: usize) -> u8 {
        match (self, col) {
            (Binner::Numeric { cuts }, Column::Numeric(v)) => {
                let x = v[row];
                if x.is_nan() {
                    MISSING_BIN
                } else {
                    cuts.partition_point(|&c| c < x) as u8
                }
            }
            (Binner::Categorical { bin_of }, Column::Categorical { codes, .. }) => codes[row]
                .and_then(|c| bin_of.get(c as usize).copied().flatten())
                .unwrap_or(MISSING_BIN),
            _ => MISSING_BIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, bin: u8, default_left: bool, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_value(&self, mut bin_at: impl FnMut(usize) -> u8) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(w) => return w,
                Node::Split { feature, bin, default_left, left, right } => {
                    let b = bin_at(feature);
                    let go_left = if b == MISSING_BIN { default_left } else { b <= bin };
                    at = if go_left { left } else { right };
                }
            }
        }
    }
}

/// A fitted ensemble. Margins are `base + Σ tree outputs` (learning rate is
/// folded into the leaf weights); for binary tasks margins are log-odds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostModel {
    pub base_score: f64,
    pub learning_rate: f64,
    trees: Vec<Tree>,
    binners: Vec<Binner>,
    feature_gain: Vec<f64>,
    total_gain: f64,
}

impl BoostModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.binners.len()
    }

    /// Total split gain accumulated while fitting.
    pub fn total_gain(&self) -> f64 {
        self.total_gain
    }

    /// Margins for `rows`, added to `init` when the model was fitted on
    /// init scores.
    pub fn predict(&self, features: &[&Column], rows: &[usize], init: Option<&[f64]>) -> Vec<f64> {
        rows.iter()
            .map(|&r| {
                let start = init.map_or(self.base_score, |i| i[r] + self.base_score);
                start + self.trees.iter().map(|t| t.leaf_value(|f| self.binners[f].bin(features[f], r))).sum::<f64>()
            })
            .collect()
    }
}

/// Cumulative split gain per feature; features never split on score 0.
pub fn attribution(model: &BoostModel) -> Vec<f64> {
    model.feature_gain.clone()
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: BoostModel,
    /// Validation loss after each round, round 1 first.
    pub valid_losses: Vec<f64>,
    /// Validation loss of the starting margins.
    pub initial_loss: f64,
}

struct Grower<'a> {
    bins: &'a [Vec<u8>],
    n_bins: &'a [usize],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a BoostParams,
    nodes: Vec<Node>,
    gains: Vec<(usize, f64)>,
    /// Leaf weight for every training row, in local index space.
    row_value: Vec<f64>,
}

struct Best {
    gain: f64,
    feature: usize,
    bin: u8,
    default_left: bool,
}

impl Grower<'_> {
    fn best_split(&self, rows: &[usize], g_sum: f64, h_sum: f64) -> Option<Best> {
        let min_leaf = self.params.min_leaf;
        if rows.len() < 2 * min_leaf {
            return None;
        }
        let parent = g_sum * g_sum / (h_sum + LEAF_L2);
        let mut best: Option<Best> = None;
        for (f, col) in self.bins.iter().enumerate() {
            let nb = self.n_bins[f];
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            let (mut mg, mut mh, mut mc) = (0.0, 0.0, 0usize);
            for &r in rows {
                let b = col[r];
                if b == MISSING_BIN {
                    mg += self.grad[r];
                    mh += self.hess[r];
                    mc += 1;
                } else {
                    let b = b as usize;
                    hg[b] += self.grad[r];
                    hh[b] += self.hess[r];
                    hc[b] += 1;
                }
            }
            let (mut lg, mut lh, mut lc) = (0.0, 0.0, 0usize);
            for b in 0..nb - 1 {
                lg += hg[b];
                lh += hh[b];
                lc += hc[b];
                for default_left in [true, false] {
                    let (g_l, h_l, c_l) = if default_left { (lg + mg, lh + mh, lc + mc) } else { (lg, lh, lc) };
                    let c_r = rows.len() - c_l;
                    if c_l < min_leaf || c_r < min_leaf {
                        continue;
                    }
                    let (g_r, h_r) = (g_sum - g_l, h_sum - h_l);
                    let gain = g_l * g_l / (h_l + LEAF_L2) + g_r * g_r / (h_r + LEAF_L2) - parent;
                    if gain > MIN_GAIN && best.as_ref().is_none_or(|bb| gain > bb.gain) {
                        best = Some(Best { gain, feature: f, bin: b as u8, default_left });
                    }
                    if mc == 0 {
                        break;
                    }
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g_sum: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h_sum: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let id = self.nodes.len();
        let split = if depth < self.params.max_depth { self.best_split(&rows, g_sum, h_sum) } else { None };
        let Some(best) = split else {
            let w = -g_sum / (h_sum + LEAF_L2) * self.params.learning_rate;
            for &r in &rows {
                self.row_value[r] = w;
            }
            self.nodes.push(Node::Leaf(w));
            return id;
        };
        self.gains.push((best.feature, best.gain));
        self.nodes.push(Node::Leaf(0.0));
        let col = &self.bins[best.feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
            let b = col[r];
            if b == MISSING_BIN {
                best.default_left
            } else {
                b <= best.bin
            }
        });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split { feature: best.feature, bin: best.bin, default_left: best.default_left, left, right };
        id
    }
}

fn base_score(loss: Loss, y: &[f64], train: &[usize]) -> f64 {
    let mean = train.iter().map(|&r| y[r]).sum::<f64>() / train.len() as f64;
    match loss {
        Loss::Squared => mean,
        Loss::Logistic => {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    }
}

/// Fits a boosted ensemble on `train` rows with early stopping on `valid`.
///
/// `y`, `init` and every feature column are indexed by dataset row. When
/// `init` is given the ensemble learns residuals on top of it and the base
/// score is 0. Row order in `train`/`valid` does not affect the result.
pub fn fit(
    features: &[&Column],
    y: &[f64],
    task: Task,
    init: Option<&[f64]>,
    train: &[usize],
    valid: &[usize],
    params: &BoostParams,
) -> Result<FitOutput> {
    params.validate()?;
    if features.is_empty() {
        return Err(Error::invalid("fit needs at least one feature column"));
    }
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if features.iter().all(|c| train.iter().all(|&r| c.is_missing(r))) {
        return Err(Error::AllMissing);
    }
    let loss = Loss::from(task);
    let mut train = train.to_vec();
    train.sort_unstable();
    let mut valid = valid.to_vec();
    valid.sort_unstable();

    let binners: Vec<Binner> = features.iter().map(|c| Binner::fit(c, &train, params.bins)).collect();
    let n_bins: Vec<usize> = binners.iter().map(Binner::n_bins).collect();
    let train_bins: Vec<Vec<u8>> =
        binners.iter().zip(features).map(|(b, c)| train.iter().map(|&r| b.bin(c, r)).collect()).collect();
    let valid_bins: Vec<Vec<u8>> =
        binners.iter().zip(features).map(|(b, c)| valid.iter().map(|&r| b.bin(c, r)).collect()).collect();

    let base = if init.is_some() { 0.0 } else { base_score(loss, y, &train) };
    let start = |r: usize| init.map_or(base, |i| i[r]);
    let mut train_margin: Vec<f64> = train.iter().map(|&r| start(r)).collect();
    let mut valid_margin: Vec<f64> = valid.iter().map(|&r| start(r)).collect();
    let y_train: Vec<f64> = train.iter().map(|&r| y[r]).collect();
    let y_valid: Vec<f64> = valid.iter().map(|&r| y[r]).collect();
    let valid_loss = |m: &[f64]| loss.evaluate(m.iter().copied().zip(y_valid.iter().copied()));
    let initial_loss = if valid.is_empty() { f64::NAN } else { valid_loss(&valid_margin) };

    let mut trees = Vec::new();
    let mut feature_gain = vec![0.0; features.len()];
    let mut total_gain = 0.0;
    let mut valid_losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut grad = vec![0.0; train.len()];
    let mut hess = vec![0.0; train.len()];
    for _ in 0..params.rounds {
        for (i, (&m, &t)) in train_margin.iter().zip(&y_train).enumerate() {
            (grad[i], hess[i]) = loss.grad_hess(m, t);
        }
        let mut grower = Grower {
            bins: &train_bins,
            n_bins: &n_bins,
            grad: &grad,
            hess: &hess,
            params,
            nodes: Vec::new(),
            gains: Vec::new(),
            row_value: vec![0.0; train.len()],
        };
        grower.grow((0..train.len()).collect(), 0);
        for (m, v) in train_margin.iter_mut().zip(&grower.row_value) {
            *m += v;
        }
        for (f, g) in grower.gains {
            feature_gain[f] += g;
            total_gain += g;
        }
        let tree = Tree { nodes: grower.nodes };
        for (i, m) in valid_margin.iter_mut().enumerate() {
            *m += tree.leaf_value(|f| valid_bins[f][i]);
        }
        trees.push(tree);
        if valid.is_empty() {
            continue;
        }
        let l = valid_loss(&valid_margin);
        valid_losses.push(l);
        if l < best {
            best = l;
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.early_stop_patience {
                break;
            }
        }
    }
    let model =
        BoostModel { base_score: base, learning_rate: params.learning_rate, trees, binners, feature_gain, total_gain };
    Ok(FitOutput { model, valid_losses, initial_loss })
}

/// Out-of-fold baseline margins for a train/validation partition.
#[derive(Debug, Clone)]
pub struct OofBaseline {
    /// Indexed by dataset row; rows outside train ∪ valid are NaN.
    pub predictions: Vec<f64>,
    /// Baseline validation loss.
    pub l_init: f64,
    /// Train rows held out by each fold.
    pub folds: Vec<Vec<usize>>,
}

/// Every train row is predicted by the fold model that did not see it;
/// validation rows get the average of all fold models.
pub fn oof_baseline(
    ds: &Dataset,
    train: &RowIndexSet,
    valid: &RowIndexSet,
    folds: usize,
    params: &BoostParams,
    seed: u64,
) -> Result<OofBaseline> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if train.len() < folds {
        return Err(Error::invalid(format!("{} training rows cannot fill {folds} folds", train.len())));
    }
    let mut perm = train.indices().to_vec();
    perm.sort_unstable();
    perm.shuffle(&mut seed::derived_rng(seed, "oof-folds", &[]));
    let held: Vec<Vec<usize>> = (0..folds).map(|k| perm.iter().skip(k).step_by(folds).copied().collect()).collect();

    let features: Vec<&Column> = ds.columns().iter().collect();
    let y = ds.target();
    let mut predictions = vec![f64::NAN; ds.n_rows()];
    let mut valid_sum = vec![0.0; valid.len()];
    for (k, out_rows) in held.iter().enumerate() {
        let in_rows: Vec<usize> =
            held.iter().enumerate().filter(|&(j, _)| j != k).flat_map(|(_, rows)| rows.iter().copied()).collect();
        if ds.task() == Task::Binary {
            let pos = in_rows.iter().filter(|&&r| y[r] == 1.0).count();
            if pos == 0 || pos == in_rows.len() {
                return Err(Error::SingleClassFold { fold: k });
            }
        }
        let fitted = fit(&features, y, ds.task(), None, &in_rows, out_rows, params)?;
        for (r, p) in out_rows.iter().zip(fitted.model.predict(&features, out_rows, None)) {
            predictions[*r] = p;
        }
        for (s, p) in valid_sum.iter_mut().zip(fitted.model.predict(&features, valid.indices(), None)) {
            *s += p;
        }
    }
    for (&r, s) in valid.indices().iter().zip(valid_sum) {
        predictions[r] = s / folds as f64;
    }
    let l_init = loss(ds.task(), y, &predictions, valid.indices());
    Ok(OofBaseline { predictions, l_init, folds: held })
}

/// Shared inputs of incremental-gain evaluations.
#[derive(Debug, Clone, Copy)]
pub struct BoostContext<'a> {
    pub y: &'a [f64],
    pub task: Task,
    /// Baseline margins indexed by dataset row.
    pub baseline: &'a [f64],
    pub params: &'a BoostParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureBoostScore {
    pub delta: f64,
    pub l_init: f64,
    pub l_best: f64,
}

/// Boosts on `columns` alone on top of the baseline and reports
/// `l_init - l_best`, with `l_best` the lowest validation loss over rounds
/// 1..R. Negative values mean the candidate hurt.
pub fn feature_boost_detail(
    ctx: &BoostContext<'_>,
    train: &[usize],
    valid: &[usize],
    columns: &[&Column],
) -> Result<FeatureBoostScore> {
    if ctx.params.rounds == 0 {
        return Err(Error::invalid("feature boosting needs at least one round"));
    }
    if valid.is_empty() {
        return Err(Error::invalid("feature boosting needs validation rows"));
    }
    let out = fit(columns, ctx.y, ctx.task, Some(ctx.baseline), train, valid, ctx.params)?;
    let l_best = out.valid_losses.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(FeatureBoostScore { delta: out.initial_loss - l_best, l_init: out.initial_loss, l_best })
}

pub fn feature_boost(ctx: &BoostContext<'_>, train: &[usize], valid: &[usize], columns: &[&Column]) -> Result<f64> {
    feature_boost_detail(ctx, train, valid, columns).map(|s| s.delta)
}
