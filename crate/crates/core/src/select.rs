//! Candidate selection: a reliability-scored first round, successive halving
//! on doubling data blocks, then attribution-ranked top-K.

use rayon::prelude::*;
use serde::Serialize;

use crate::booster::{self, BoostContext};
use crate::error::{Error, Result};
use crate::oper::CandidateFeature;
use crate::seed;
use crate::tabular::{self, BlockSchedule, Column, RowIndexSet, Task};

/// Repeated-subsample gains of one candidate and the penalized score
/// `R = μ - λ·σ/√n` built from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRecord {
    /// Index into the candidate list the round was given.
    pub candidate: usize,
    pub key: String,
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator), 0 for one sample.
    pub std: f64,
    pub se: f64,
    pub reliability: f64,
}

impl ScoreRecord {
    pub fn from_samples(candidate: usize, key: impl Into<String>, samples: Vec<f64>, lambda: f64) -> Self {
        let n = samples.len() as f64;
        let (mean, std) = if samples.iter().any(|s| !s.is_finite()) {
            (f64::NEG_INFINITY, 0.0)
        } else {
            let mean = samples.iter().sum::<f64>() / n;
            let std = if samples.len() > 1 {
                (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, std)
        };
        let se = std / n.sqrt();
        let reliability = if lambda == 0.0 { mean } else { mean - lambda * se };
        ScoreRecord { candidate, key: key.into(), samples, mean, std, se, reliability }
    }
}

/// Sorts by reliability descending, ties by canonical expression.
pub fn rank_records(records: &mut [ScoreRecord]) {
    records.sort_by(|a, b| b.reliability.total_cmp(&a.reliability).then_with(|| a.key.cmp(&b.key)));
}

/// Candidates paired with their materialized columns (dataset-row indexed).
#[derive(Debug, Clone, Copy)]
pub struct Pool<'a> {
    pub candidates: &'a [CandidateFeature],
    pub columns: &'a [Column],
}

impl Pool<'_> {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityParams {
    pub n_sub: usize,
    pub r_rel: f64,
    pub lambda: f64,
}

impl Default for ReliabilityParams {
    fn default() -> Self {
        ReliabilityParams { n_sub: 3, r_rel: 0.8, lambda: 0.2 }
    }
}

/// Training rows of the `s`-th reliability subsample (stratified for binary
/// tasks when labels are given).
pub fn reliability_subsample(block0: &RowIndexSet, r_rel: f64, labels: Option<&[u32]>, seed: u64, s: usize) -> Result<RowIndexSet> {
    tabular::subsample(block0, r_rel, labels.is_some(), labels, seed::derive(seed, "reliability", &[s as u64]))
}

fn delta_or_floor(ctx: &BoostContext<'_>, train: &[usize], valid: &[usize], col: &Column) -> f64 {
    booster::feature_boost(ctx, train, valid, &[col]).unwrap_or(f64::NEG_INFINITY)
}

/// Round 0: `n_sub` gains per candidate on independent subsamples of the
/// first block against fixed validation rows. Candidates whose evaluation
/// fails score negative infinity.
pub fn reliability_round(
    pool: Pool<'_>,
    block0: &RowIndexSet,
    valid: &RowIndexSet,
    ctx: &BoostContext<'_>,
    params: ReliabilityParams,
    seed: u64,
) -> Result<Vec<ScoreRecord>> {
    if params.n_sub < 1 || !(params.r_rel > 0.0 && params.r_rel <= 1.0) {
        return Err(Error::invalid(format!("invalid reliability parameters {params:?}")));
    }
    let labels: Option<Vec<u32>> =
        (ctx.task == Task::Binary).then(|| ctx.y.iter().map(|&v| v as u32).collect());
    let subsamples: Vec<RowIndexSet> = (0..params.n_sub)
        .map(|s| reliability_subsample(block0, params.r_rel, labels.as_deref(), seed, s))
        .collect::<Result<_>>()?;
    if let Some(small) = subsamples.iter().find(|s| s.len() < ctx.params.min_leaf) {
        return Err(Error::SubsampleTooSmall { rows: small.len(), min_leaf: ctx.params.min_leaf });
    }
    let mut records: Vec<ScoreRecord> = (0..pool.len())
        .into_par_iter()
        .map(|c| {
            let samples = subsamples
                .iter()
                .map(|sub| delta_or_floor(ctx, sub.indices(), valid.indices(), &pool.columns[c]))
                .collect();
            ScoreRecord::from_samples(c, pool.candidates[c].key.clone(), samples, params.lambda)
        })
        .collect();
    rank_records(&mut records);
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateTrace {
    pub candidate: usize,
    /// Score per round reached; round 0 holds the reliability score.
    pub round_scores: Vec<f64>,
    /// Last round the candidate was scored in.
    pub survival_round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalvingOutcome {
    /// Candidates scored in each round.
    pub evaluated: Vec<usize>,
    /// Candidates surviving the final positivity filter, best first.
    pub survivors: Vec<usize>,
    pub traces: Vec<CandidateTrace>,
}

/// Successive halving over `blocks`.
///
/// `ranked` is the round-0 ranking. After every round but the last the top
/// `ceil(keep_ratio·count)` (at least one) move on; later rounds rescore
/// survivors with one gain on that round's block. Candidates whose final-round
/// score is not positive are dropped. `baselines` holds one baseline per
/// round, or a single baseline shared by all rounds.
#[allow(clippy::too_many_arguments)]
pub fn successive_halving(
    ranked: &[ScoreRecord],
    pool: Pool<'_>,
    blocks: &BlockSchedule,
    valid: &RowIndexSet,
    ctx: &BoostContext<'_>,
    baselines: &[&[f64]],
    keep_ratio: f64,
) -> Result<HalvingOutcome> {
    if ranked.is_empty() {
        return Err(Error::invalid("successive halving needs at least one candidate"));
    }
    if blocks.is_empty() || !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::invalid("successive halving needs blocks and keep_ratio in (0,1]"));
    }
    let rounds = blocks.len();
    let mut traces: Vec<Option<CandidateTrace>> = vec![None; pool.len()];
    for r in ranked {
        traces[r.candidate] = Some(CandidateTrace { candidate: r.candidate, round_scores: vec![r.reliability], survival_round: 0 });
    }
    let mut current: Vec<(usize, f64)> = ranked.iter().map(|r| (r.candidate, r.reliability)).collect();
    let mut evaluated = vec![current.len()];
    for round in 0..rounds {
        if round > 0 {
            let baseline = baselines.get(round).or(baselines.first()).copied().expect("at least one baseline");
            let round_ctx = BoostContext { baseline, ..*ctx };
            let train = blocks.rounds[round].indices();
            let scores: Vec<f64> = current
                .par_iter()
                .map(|&(c, _)| delta_or_floor(&round_ctx, train, valid.indices(), &pool.columns[c]))
                .collect();
            for ((c, s), new) in current.iter_mut().zip(scores) {
                *s = new;
                let t = traces[*c].as_mut().expect("traced");
                t.round_scores.push(new);
                t.survival_round = round;
            }
            current.sort_by(|a, b| {
                b.1.total_cmp(&a.1).then_with(|| pool.candidates[a.0].key.cmp(&pool.candidates[b.0].key))
            });
            evaluated.push(current.len());
        }
        if round + 1 == rounds {
            current.retain(|&(_, s)| s > 0.0);
        } else {
            let keep = ((keep_ratio * current.len() as f64).ceil() as usize).max(1);
            current.truncate(keep);
        }
    }
    Ok(HalvingOutcome {
        evaluated,
        survivors: current.into_iter().map(|(c, _)| c).collect(),
        traces: traces.into_iter().flatten().collect(),
    })
}

/// Fits one booster on all survivor columns on top of the baseline and
/// returns up to `top_k` survivors with positive gain, best first.
pub fn final_select(
    survivors: &[usize],
    pool: Pool<'_>,
    ctx: &BoostContext<'_>,
    train: &RowIndexSet,
    valid: &RowIndexSet,
    top_k: usize,
) -> Result<Vec<(usize, f64)>> {
    if top_k < 1 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    if survivors.is_empty() {
        return Ok(Vec::new());
    }
    let cols: Vec<&Column> = survivors.iter().map(|&c| &pool.columns[c]).collect();
    let fitted = booster::fit(&cols, ctx.y, ctx.task, Some(ctx.baseline), train.indices(), valid.indices(), ctx.params)?;
    let gains = booster::attribution(&fitted.model);
    let mut ranked: Vec<(usize, f64)> =
        survivors.iter().zip(gains).filter(|(_, g)| *g > 0.0).map(|(&c, g)| (c, g)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| pool.candidates[a.0].key.cmp(&pool.candidates[b.0].key)));
    ranked.truncate(top_k);
    Ok(ranked)
}
