//! Operator probing: score every operator on a subsample by the mean of its
//! top-k candidate gains and keep the best `n_top`.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::booster::{self, BoostContext, BoostParams};
use crate::error::{Error, Result};
use crate::oper::{self, CandidateFeature, Operator};
use crate::seed;
use crate::tabular::{self, Column, ColumnMeta, Dataset, RowIndexSet, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub r_probe: f64,
    /// Lower bound on probe subset size (per partition), capped at the
    /// partition size.
    pub min_rows: usize,
    pub n_cand: usize,
    pub k: usize,
    /// Defaults to `ceil(p / 2)`.
    pub n_top: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { r_probe: 0.1, min_rows: 500, n_cand: 32, k: 8, n_top: None }
    }
}

impl ProbeConfig {
    pub fn n_top_for(&self, p: usize) -> usize {
        self.n_top.unwrap_or(p.div_ceil(2))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.r_probe > 0.0 && self.r_probe <= 1.0) {
            return Err(Error::invalid(format!("r_probe must be in (0,1], got {}", self.r_probe)));
        }
        if self.k < 1 || self.k > self.n_cand {
            return Err(Error::invalid(format!("need 1 <= k <= n_cand, got k={}, n_cand={}", self.k, self.n_cand)));
        }
        let n_top = self.n_top_for(p);
        if n_top < 1 || n_top > p {
            return Err(Error::invalid(format!("need 1 <= n_top <= {p}, got {n_top}")));
        }
        Ok(())
    }
}

/// Uniform draw without replacement from the operator's type-compatible
/// operand universe. Returns the whole universe when it is small enough.
pub fn type_aware_sample(op: Operator, features: &[ColumnMeta], n_cand: usize, seed: u64) -> Vec<CandidateFeature> {
    let universe = oper::operand_universe(op, features);
    let picked: Vec<usize> = if universe.len() <= n_cand {
        (0..universe.len()).collect()
    } else {
        let mut rng = seed::derived_rng(seed, "probe-sample", &[]);
        let mut idx = index::sample(&mut rng, universe.len(), n_cand).into_vec();
        idx.sort_unstable();
        idx
    };
    picked
        .into_iter()
        .map(|i| CandidateFeature::new(op, &universe[i], features).expect("universe is type-compatible"))
        .collect()
}

/// Mean of the `k` largest values, or of all values when fewer exist.
/// Empty input scores negative infinity.
pub fn top_k_mean(deltas: &[f64], k: usize) -> f64 {
    let mut sorted: Vec<f64> = deltas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.truncate(k);
    if sorted.is_empty() {
        f64::NEG_INFINITY
    } else {
        sorted.iter().sum::<f64>() / sorted.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorScore {
    pub operator: Operator,
    pub candidates: Vec<String>,
    /// Gain of every candidate that could be evaluated, in candidate order.
    pub deltas: Vec<f64>,
    pub top_k: Vec<f64>,
    pub score: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub scores: Vec<OperatorScore>,
    /// Selected operators in roster order.
    pub selected: Vec<Operator>,
    pub probe_train_rows: usize,
    pub probe_valid_rows: usize,
    pub l_init: f64,
}

fn probe_subset(rows: &RowIndexSet, cfg: &ProbeConfig, labels: Option<&[u32]>, seed: u64) -> Result<RowIndexSet> {
    let floor = cfg.min_rows.min(rows.len()) as f64 / rows.len() as f64;
    tabular::subsample(rows, cfg.r_probe.max(floor).min(1.0), labels.is_some(), labels, seed)
}

/// Column of dataset length; rows outside `rows` are missing.
pub(crate) fn materialize_full(c: &CandidateFeature, ds: &Dataset, rows: &RowIndexSet, stats: &RowIndexSet) -> Result<Column> {
    let part = oper::materialize(c, ds, rows, stats)?;
    let n = ds.n_rows();
    Ok(match part {
        Column::Numeric(v) => {
            let mut full = vec![f64::NAN; n];
            for (&r, x) in rows.indices().iter().zip(v) {
                full[r] = x;
            }
            Column::Numeric(full)
        }
        Column::Categorical { codes, levels } => {
            let mut full = vec![None; n];
            for (&r, x) in rows.indices().iter().zip(codes) {
                full[r] = x;
            }
            Column::Categorical { codes: full, levels }
        }
    })
}

/// Scores every operator in `ops` on probe subsets of `train`/`valid` and
/// keeps the top `n_top`. Operators without evaluable candidates are never
/// selected. Candidate draws are seeded by operator name, so scores do not
/// depend on roster order.
#[allow(clippy::too_many_arguments)]
pub fn operator_probing(
    ds: &Dataset,
    train: &RowIndexSet,
    valid: &RowIndexSet,
    ops: &[Operator],
    cfg: &ProbeConfig,
    params: &BoostParams,
    folds: usize,
    seed: u64,
) -> Result<ProbeOutcome> {
    cfg.validate(ops.len())?;
    let labels = ds.labels();
    let labels = (ds.task() == Task::Binary).then_some(labels.as_deref()).flatten();
    let p_train = probe_subset(train, cfg, labels, seed::derive(seed, "probe-train", &[]))?;
    let p_valid = probe_subset(valid, cfg, labels, seed::derive(seed, "probe-valid", &[]))?;
    if p_train.len() < folds.max(2) * params.min_leaf {
        return Err(Error::ProbeTooSmall { rows: p_train.len(), folds });
    }
    let base = booster::oof_baseline(ds, &p_train, &p_valid, folds, params, seed::derive(seed, "probe-oof", &[]))?;
    let ctx = BoostContext { y: ds.target(), task: ds.task(), baseline: &base.predictions, params };
    let eval_rows = p_train.union(&p_valid);

    let sampled: Vec<Vec<CandidateFeature>> = ops
        .iter()
        .map(|&op| type_aware_sample(op, ds.features(), cfg.n_cand, seed::derive(seed, "probe-op", &[name_hash(op)])))
        .collect();
    let jobs: Vec<(usize, usize)> =
        sampled.iter().enumerate().flat_map(|(o, cs)| (0..cs.len()).map(move |c| (o, c))).collect();
    let deltas: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(o, c)| {
            let col = materialize_full(&sampled[o][c], ds, &eval_rows, &p_train).ok()?;
            booster::feature_boost(&ctx, p_train.indices(), p_valid.indices(), &[&col]).ok()
        })
        .collect();

    let mut scores: Vec<OperatorScore> = ops
        .iter()
        .zip(&sampled)
        .map(|(&op, cs)| OperatorScore {
            operator: op,
            candidates: cs.iter().map(|c| c.key.clone()).collect(),
            deltas: Vec::new(),
            top_k: Vec::new(),
            score: f64::NEG_INFINITY,
            selected: false,
        })
        .collect();
    for (&(o, _), d) in jobs.iter().zip(&deltas) {
        if let Some(d) = d {
            scores[o].deltas.push(*d);
        }
    }
    for s in &mut scores {
        s.score = top_k_mean(&s.deltas, cfg.k);
        let mut top = s.deltas.clone();
        top.sort_by(|a, b| b.total_cmp(a));
        top.truncate(cfg.k);
        s.top_k = top;
    }

    let mut order: Vec<usize> = (0..ops.len()).filter(|&o| scores[o].score.is_finite()).collect();
    order.sort_by(|&a, &b| scores[b].score.total_cmp(&scores[a].score).then(a.cmp(&b)));
    order.truncate(cfg.n_top_for(ops.len()));
    order.sort_unstable();
    for &o in &order {
        scores[o].selected = true;
    }
    Ok(ProbeOutcome {
        selected: order.iter().map(|&o| ops[o]).collect(),
        scores,
        probe_train_rows: p_train.len(),
        probe_valid_rows: p_valid.len(),
        l_init: base.l_init,
    })
}

fn name_hash(op: Operator) -> u64 {
    seed::derive(0, op.name(), &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::ColumnKind;

    fn features(num: usize) -> Vec<ColumnMeta> {
        (0..num).map(|i| ColumnMeta { name: format!("f{i}"), kind: ColumnKind::Numeric, index: i }).collect()
    }

    #[test]
    fn top_k_mean_cases() {
        assert!((top_k_mean(&[0.5, 0.2, -0.1, 0.3], 2) - 0.4).abs() < 1e-15);
        assert_eq!(top_k_mean(&[0.5], 3), 0.5);
        assert_eq!(top_k_mean(&[], 3), f64::NEG_INFINITY);
        // adding values below the current top-k never raises the score
        assert!(top_k_mean(&[0.5, 0.2, -0.3], 3) <= top_k_mean(&[0.5, 0.2], 2));
    }

    #[test]
    fn sampling_rules() {
        let f = features(5);
        let s = type_aware_sample(Operator::Abs, &f, 3, 1);
        assert_eq!(s.len(), 3);
        let mut keys: Vec<&str> = s.iter().map(|c| c.key.as_str()).collect();
        keys.dedup();
        assert_eq!(keys.len(), 3);
        assert_eq!(s, type_aware_sample(Operator::Abs, &f, 3, 1));
        assert!(type_aware_sample(Operator::GroupByThenMean, &f, 3, 1).is_empty());
        assert_eq!(type_aware_sample(Operator::Mul, &f, 100, 1).len(), 10);
    }

    #[test]
    fn config_validation() {
        assert!(ProbeConfig::default().validate(22).is_ok());
        assert_eq!(ProbeConfig::default().n_top_for(22), 11);
        assert!(ProbeConfig { k: 0, ..Default::default() }.validate(22).is_err());
        assert!(ProbeConfig { n_top: Some(23), ..Default::default() }.validate(22).is_err());
        assert!(ProbeConfig { r_probe: 0.0, ..Default::default() }.validate(22).is_err());
    }
}
