//! End-to-end pipeline: clustering, probing, constrained generation,
//! reliability-scored halving and attribution, with per-stage timings.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assoc::{self, SimilarityMatrix};
use crate::booster::{self, BoostContext, BoostParams, OofBaseline};
use crate::cluster::{self, ClusterAssignment, FcmParams};
use crate::error::{Error, Result};
use crate::oper::{self, CandidateCounts, CandidateFeature, Operator};
use crate::probe::{self, ProbeConfig, ProbeOutcome};
use crate::seed;
use crate::select::{self, Pool, ReliabilityParams, ScoreRecord};
use crate::tabular::{self, Column, Dataset, RowIndexSet, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    Off,
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub mode: ClusterMode,
    pub tau: usize,
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig { mode: ClusterMode::Soft, tau: 16, m: 2.0, tol: 1e-5, max_iter: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbingConfig {
    pub enabled: bool,
    pub r_probe: f64,
    pub min_rows: usize,
    pub n_cand: usize,
    pub k: usize,
    pub n_top: Option<usize>,
}

impl Default for ProbingConfig {
    fn default() -> Self {
        let p = ProbeConfig::default();
        ProbingConfig { enabled: true, r_probe: p.r_probe, min_rows: p.min_rows, n_cand: p.n_cand, k: p.k, n_top: p.n_top }
    }
}

impl ProbingConfig {
    pub fn probe(&self) -> ProbeConfig {
        ProbeConfig { r_probe: self.r_probe, min_rows: self.min_rows, n_cand: self.n_cand, k: self.k, n_top: self.n_top }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilityConfig {
    pub enabled: bool,
    pub n_sub: usize,
    pub lambda: f64,
    pub r_rel: f64,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        let p = ReliabilityParams::default();
        ReliabilityConfig { enabled: true, n_sub: p.n_sub, lambda: p.lambda, r_rel: p.r_rel }
    }
}

impl ReliabilityConfig {
    /// Disabled scoring is a single unpenalized gain, the same draw an
    /// `n_sub = 1` round makes.
    pub fn params(&self) -> ReliabilityParams {
        if self.enabled {
            ReliabilityParams { n_sub: self.n_sub, r_rel: self.r_rel, lambda: self.lambda }
        } else {
            ReliabilityParams { n_sub: 1, r_rel: self.r_rel, lambda: 0.0 }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub valid_ratio: f64,
    pub folds: usize,
    pub blocks_log2: u32,
    pub keep_ratio: f64,
    pub top_k: usize,
    /// Recompute the out-of-fold baseline on every halving block.
    pub baseline_per_round: bool,
    /// Operator roster by name; the default 22-operator set when absent.
    pub operators: Option<Vec<String>>,
    pub clustering: ClusteringConfig,
    pub probing: ProbingConfig,
    pub reliability: ReliabilityConfig,
    pub booster: BoostParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            valid_ratio: 0.2,
            folds: 5,
            blocks_log2: 3,
            keep_ratio: 0.5,
            top_k: 10,
            baseline_per_round: false,
            operators: None,
            clustering: ClusteringConfig::default(),
            probing: ProbingConfig::default(),
            reliability: ReliabilityConfig::default(),
            booster: BoostParams::default(),
        }
    }
}

impl PipelineConfig {
    /// Everything off: plain expand-and-reduce over the full operator set.
    pub fn all_off() -> Self {
        let mut cfg = PipelineConfig::default();
        cfg.set_flags(false, false, false);
        cfg
    }

    /// Toggles clustering (S), probing (O) and reliability scoring (R).
    /// Clustering switches between `Off` and soft mode.
    pub fn set_flags(&mut self, clustering: bool, probing: bool, reliability: bool) {
        self.clustering.mode = match (clustering, self.clustering.mode) {
            (false, _) => ClusterMode::Off,
            (true, ClusterMode::Off) => ClusterMode::Soft,
            (true, mode) => mode,
        };
        self.probing.enabled = probing;
        self.reliability.enabled = reliability;
    }

    pub fn operator_set(&self) -> Result<Vec<Operator>> {
        match &self.operators {
            None => Ok(oper::default_operator_set()),
            Some(names) => {
                let ops: Vec<Operator> = names.iter().map(|n| Operator::from_name(n)).collect::<Result<_>>()?;
                if ops.is_empty() {
                    return Err(Error::invalid("operator roster is empty"));
                }
                Ok(ops)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.booster.validate()?;
        if self.booster.rounds == 0 {
            return Err(Error::invalid("booster.rounds must be positive"));
        }
        let p = self.operator_set()?.len();
        if self.probing.enabled {
            self.probing.probe().validate(p)?;
        }
        let r = &self.reliability;
        if !(r.r_rel > 0.0 && r.r_rel <= 1.0) || (r.enabled && (r.n_sub < 1 || r.lambda < 0.0)) {
            return Err(Error::invalid("reliability needs n_sub >= 1, r_rel in (0,1], lambda >= 0"));
        }
        if self.clustering.mode != ClusterMode::Off && (self.clustering.tau < 1 || self.clustering.m < 1.0) {
            return Err(Error::invalid("clustering needs tau >= 1 and m >= 1"));
        }
        if self.top_k < 1 || self.folds < 2 || !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return Err(Error::invalid("need top_k >= 1, folds >= 2 and keep_ratio in (0,1]"));
        }
        if !(self.valid_ratio > 0.0 && self.valid_ratio < 1.0) {
            return Err(Error::invalid("valid_ratio must be in (0,1)"));
        }
        Ok(())
    }
}

/// Predicted binary-candidate shrinkage `(n_top / p) · (tau / d)`.
pub fn predicted_reduction(d: usize, p: usize, tau: usize, n_top: usize) -> Result<f64> {
    if d == 0 || p == 0 || tau == 0 || n_top == 0 || tau > d || n_top > p {
        return Err(Error::invalid(format!("predicted_reduction needs positive inputs with tau <= d and n_top <= p (d={d}, p={p}, tau={tau}, n_top={n_top})")));
    }
    Ok((n_top as f64 / p as f64) * (tau as f64 / d as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRatio {
    pub expression: String,
    pub mean: f64,
    pub std: f64,
    /// `|μ| / σ`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariabilitySummary {
    pub candidates: Vec<CandidateRatio>,
    /// Candidates with zero spread, excluded from the ratio aggregate.
    pub zero_variance: Vec<String>,
    pub mean_ratio: Option<f64>,
    pub sigma_max: f64,
}

/// `|μ|/σ` per candidate, its mean over candidates with σ > 0, and the
/// largest σ. Candidates with non-finite samples are skipped.
pub fn variability_summary(records: &[ScoreRecord]) -> VariabilitySummary {
    let mut candidates = Vec::new();
    let mut zero_variance = Vec::new();
    let mut sigma_max: f64 = 0.0;
    for r in records.iter().filter(|r| r.mean.is_finite()) {
        sigma_max = sigma_max.max(r.std);
        if r.std > 0.0 {
            candidates.push(CandidateRatio { expression: r.key.clone(), mean: r.mean, std: r.std, ratio: r.mean.abs() / r.std });
        } else {
            zero_variance.push(r.key.clone());
        }
    }
    let mean_ratio =
        (!candidates.is_empty()).then(|| candidates.iter().map(|c| c.ratio).sum::<f64>() / candidates.len() as f64);
    VariabilitySummary { candidates, zero_variance, mean_ratio, sigma_max }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub split: f64,
    pub similarity: f64,
    pub clustering: f64,
    pub probing: f64,
    pub generation: f64,
    pub baseline: f64,
    pub scoring_rounds: Vec<f64>,
    pub attribution: f64,
    pub final_metric: f64,
    /// similarity + clustering + probing + generation
    pub run_seconds: f64,
    /// baseline + scoring rounds + attribution
    pub eval_seconds: f64,
    pub total_seconds: f64,
}

impl StageTimings {
    fn finish(&mut self) {
        self.run_seconds = ms(self.similarity + self.clustering + self.probing + self.generation);
        self.eval_seconds = ms(self.baseline + self.scoring_rounds.iter().sum::<f64>() + self.attribution);
        self.total_seconds = ms(self.run_seconds + self.eval_seconds);
    }
}

fn ms(secs: f64) -> f64 {
    (secs * 1000.0).round() / 1000.0
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot = ms(start.elapsed().as_secs_f64());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub mode: ClusterMode,
    pub k: usize,
    pub theta: Option<f64>,
    pub assignments: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CountSummary {
    pub unconstrained: CandidateCounts,
    pub unconstrained_total: usize,
    pub generated: CandidateCounts,
    pub generated_total: usize,
    /// Generated candidates that are missing on every training row.
    pub dropped_empty: usize,
    /// Candidates scored in each halving round.
    pub round_survivors: Vec<usize>,
    pub final_survivors: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateReport {
    pub expression: String,
    pub round_scores: Vec<f64>,
    pub delta_samples: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub reliability: f64,
    pub survival_round: usize,
    pub final_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedFeature {
    pub expression: String,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    /// `rmse` for regression, `auc` for binary.
    pub name: String,
    pub baseline: f64,
    pub engineered: f64,
    /// Validation loss the candidate gains were measured against.
    pub l_init: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub config: PipelineConfig,
    pub n_rows: usize,
    pub n_features: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub operators: Vec<String>,
    pub clustering: Option<ClusterSummary>,
    pub probing: Option<ProbeOutcome>,
    pub counts: CountSummary,
    pub predicted_reduction: Option<f64>,
    pub measured_reduction: Option<f64>,
    pub measured_binary_reduction: Option<f64>,
    pub candidates: Vec<CandidateReport>,
    pub selected: Vec<SelectedFeature>,
    pub variability: Option<VariabilitySummary>,
    pub metric: Option<MetricSummary>,
    pub timings: StageTimings,
}

impl PipelineReport {
    fn new(ds: &Dataset, cfg: &PipelineConfig) -> Self {
        PipelineReport {
            complete: false,
            failed_stage: None,
            error: None,
            config: cfg.clone(),
            n_rows: ds.n_rows(),
            n_features: ds.n_features(),
            n_train: 0,
            n_valid: 0,
            operators: Vec::new(),
            clustering: None,
            probing: None,
            counts: CountSummary::default(),
            predicted_reduction: None,
            measured_reduction: None,
            measured_binary_reduction: None,
            candidates: Vec::new(),
            selected: Vec::new(),
            variability: None,
            metric: None,
            timings: StageTimings::default(),
        }
    }
}

/// Engineered table: original features followed by selected candidates.
#[derive(Debug, Clone)]
pub struct EngineeredData {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
}

impl EngineeredData {
    /// CSV with the original header plus canonical expressions; the target
    /// column comes last.
    pub fn to_csv(&self, ds: &Dataset) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = self.names.iter().map(|n| csv_field(n)).collect();
        header.push(csv_field(ds.target_name()));
        out.push_str(&header.join(","));
        out.push('\n');
        for r in 0..ds.n_rows() {
            let mut row: Vec<String> = self.columns.iter().map(|c| csv_field(&c.render(r))).collect();
            row.push(csv_field(&ds.render_target(r)));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: PipelineReport,
    pub engineered: EngineeredData,
}

/// A stage error with the report accumulated up to the failure.
#[derive(Debug)]
pub struct PipelineFailure {
    pub report: Box<PipelineReport>,
    pub error: Error,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.report.failed_stage.as_deref().unwrap_or("?"), self.error)
    }
}

impl std::error::Error for PipelineFailure {}

/// Train/validation partition used by every stage.
pub fn partition(ds: &Dataset, cfg: &PipelineConfig) -> Result<(RowIndexSet, RowIndexSet)> {
    tabular::split(ds, cfg.valid_ratio, ds.task() == Task::Binary, seed::derive(cfg.seed, "split", &[]))
}

/// Similarity over the training partition.
pub fn similarity_stage(ds: &Dataset, train: &RowIndexSet) -> Result<SimilarityMatrix> {
    assoc::similarity_matrix(ds, train)
}

/// Hard or soft assignment per the config. Soft mode with `m = 1` falls back
/// to hard clustering.
pub fn cluster_stage(s: &SimilarityMatrix, cfg: &PipelineConfig) -> Result<Option<ClusterAssignment>> {
    let c = &cfg.clustering;
    match c.mode {
        ClusterMode::Off => Ok(None),
        ClusterMode::Hard => Ok(Some(ClusterAssignment::Hard(cluster::hard_cluster(s, c.tau)?))),
        ClusterMode::Soft if c.m <= 1.0 => Ok(Some(ClusterAssignment::Hard(cluster::hard_cluster(s, c.tau)?))),
        ClusterMode::Soft => {
            let k = cluster::cluster_count(s.order(), c.tau)?;
            let emb = cluster::spectral_embed(s, k)?;
            let fcm = FcmParams { m: c.m, tol: c.tol, max_iter: c.max_iter };
            let u = cluster::fcm(&emb, k, fcm, seed::derive(cfg.seed, "fcm", &[]))?;
            Ok(Some(ClusterAssignment::Soft(cluster::soft_assign(&u, k))))
        }
    }
}

pub fn summarize_clusters(assign: &ClusterAssignment, ds: &Dataset) -> ClusterSummary {
    let (mode, theta) = match assign {
        ClusterAssignment::Hard(_) => (ClusterMode::Hard, None),
        ClusterAssignment::Soft(s) => (ClusterMode::Soft, Some(s.theta)),
    };
    let assignments = ds.features().iter().map(|f| (f.name.clone(), assign.labels_of(f.index))).collect();
    ClusterSummary { mode, k: assign.k(), theta, assignments }
}

pub fn probe_stage(ds: &Dataset, train: &RowIndexSet, valid: &RowIndexSet, cfg: &PipelineConfig) -> Result<ProbeOutcome> {
    let ops = cfg.operator_set()?;
    probe::operator_probing(
        ds,
        train,
        valid,
        &ops,
        &cfg.probing.probe(),
        &cfg.booster,
        cfg.folds,
        seed::derive(cfg.seed, "probe", &[]),
    )
}

/// Everything decided before scoring: partitions, clusters, kept operators and the candidate list.
#[derive(Debug, Clone)]
pub struct Plan {
    pub train: RowIndexSet,
    pub valid: RowIndexSet,
    pub assignment: Option<ClusterAssignment>,
    pub probe: Option<ProbeOutcome>,
    pub operators: Vec<Operator>,
    pub candidates: Vec<CandidateFeature>,
    pub unconstrained: CandidateCounts,
    pub predicted_reduction: f64,
}

impl Plan {
    pub fn generated(&self) -> CandidateCounts {
        oper::count_by_arity(&self.candidates)
    }

    pub fn measured_reduction(&self) -> f64 {
        self.candidates.len() as f64 / self.unconstrained.total() as f64
    }

    pub fn measured_binary_reduction(&self) -> Option<f64> {
        (self.unconstrained.binary > 0).then(|| self.generated().binary as f64 / self.unconstrained.binary as f64)
    }
}

macro_rules! stage {
    ($report:expr, $name:literal, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(error) => {
                $report.failed_stage = Some($name.to_string());
                $report.error = Some(error.to_string());
                $report.timings.finish();
                return Err(PipelineFailure { report: Box::new($report), error });
            }
        }
    };
}

fn plan_into(ds: &Dataset, cfg: &PipelineConfig, report: &mut PipelineReport) -> std::result::Result<Plan, (&'static str, Error)> {
    cfg.validate().map_err(|e| ("config", e))?;
    let roster = cfg.operator_set().map_err(|e| ("config", e))?;
    let (train, valid) = timed(&mut report.timings.split, || partition(ds, cfg)).map_err(|e| ("split", e))?;
    report.n_train = train.len();
    report.n_valid = valid.len();

    let assignment = if cfg.clustering.mode == ClusterMode::Off {
        None
    } else {
        let s = timed(&mut report.timings.similarity, || similarity_stage(ds, &train)).map_err(|e| ("similarity", e))?;
        let a = timed(&mut report.timings.clustering, || cluster_stage(&s, cfg)).map_err(|e| ("clustering", e))?;
        report.clustering = a.as_ref().map(|a| summarize_clusters(a, ds));
        a
    };

    let probe = if cfg.probing.enabled {
        let p = timed(&mut report.timings.probing, || probe_stage(ds, &train, &valid, cfg)).map_err(|e| ("probing", e))?;
        report.probing = Some(p.clone());
        Some(p)
    } else {
        None
    };
    let operators = probe.as_ref().map_or_else(|| roster.clone(), |p| p.selected.clone());
    report.operators = operators.iter().map(|o| o.name().to_string()).collect();

    let start = Instant::now();
    let candidates = oper::enumerate_candidates(ds.features(), &operators, assignment.as_ref());
    report.timings.generation = ms(start.elapsed().as_secs_f64());
    let unconstrained = oper::unconstrained_count(ds.features(), &roster);
    let d = ds.n_features();
    let tau = if assignment.is_some() { cfg.clustering.tau.min(d) } else { d };
    let predicted = predicted_reduction(d.max(1), roster.len(), tau.max(1), operators.len().max(1)).map_err(|e| ("generation", e))?;
    Ok(Plan { train, valid, assignment, probe, operators, candidates, unconstrained, predicted_reduction: predicted })
}

/// Runs the planning stages only, up to candidate enumeration.
pub fn plan(ds: &Dataset, cfg: &PipelineConfig) -> std::result::Result<(Plan, PipelineReport), PipelineFailure> {
    let mut report = PipelineReport::new(ds, cfg);
    match plan_into(ds, cfg, &mut report) {
        Ok(p) => {
            fill_plan_counts(&mut report, &p);
            Ok((p, report))
        }
        Err((stage, error)) => {
            report.failed_stage = Some(stage.to_string());
            report.error = Some(error.to_string());
            report.timings.finish();
            Err(PipelineFailure { report: Box::new(report), error })
        }
    }
}

fn fill_plan_counts(report: &mut PipelineReport, p: &Plan) {
    report.counts.unconstrained = p.unconstrained;
    report.counts.unconstrained_total = p.unconstrained.total();
    report.counts.generated = p.generated();
    report.counts.generated_total = p.candidates.len();
    report.predicted_reduction = Some(p.predicted_reduction);
    report.measured_reduction = Some(p.measured_reduction());
    report.measured_binary_reduction = p.measured_binary_reduction();
}

/// Validation metric of a booster on `columns`: RMSE or AUC.
fn validation_metric(ds: &Dataset, columns: &[&Column], train: &RowIndexSet, valid: &RowIndexSet, params: &BoostParams) -> Result<f64> {
    let out = booster::fit(columns, ds.target(), ds.task(), None, train.indices(), valid.indices(), params)?;
    let margins = out.model.predict(columns, valid.indices(), None);
    let y: Vec<f64> = valid.indices().iter().map(|&r| ds.target()[r]).collect();
    Ok(match ds.task() {
        Task::Regression => (margins.iter().zip(&y).map(|(m, t)| (m - t).powi(2)).sum::<f64>() / y.len() as f64).sqrt(),
        Task::Binary => auc(&margins, &y),
    })
}

/// Area under the ROC curve with midrank ties.
pub fn auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = mid;
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&l| l == 1.0).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return f64::NAN;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1.0).map(|(r, _)| r).sum();
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}

/// Runs the whole pipeline. On a stage error the partial report is returned
/// inside [`PipelineFailure`] with `complete = false`.
pub fn run(ds: &Dataset, cfg: &PipelineConfig) -> std::result::Result<RunOutput, PipelineFailure> {
    let (plan, mut report) = plan(ds, cfg)?;
    let Plan { train, valid, candidates, .. } = plan;
    let eval_rows = train.union(&valid);

    // Materialization counts toward generation time, not scoring.
    let start = Instant::now();
    let columns: Vec<Column> = {
        use rayon::prelude::*;
        let built: Vec<Result<Column>> =
            candidates.par_iter().map(|c| probe::materialize_full(c, ds, &eval_rows, &train)).collect();
        stage!(report, "generation", built.into_iter().collect::<Result<Vec<_>>>())
    };
    let keep: Vec<usize> =
        (0..candidates.len()).filter(|&i| !train.indices().iter().all(|&r| columns[i].is_missing(r))).collect();
    report.counts.dropped_empty = candidates.len() - keep.len();
    let (candidates, columns): (Vec<CandidateFeature>, Vec<Column>) = if keep.len() == candidates.len() {
        (candidates, columns)
    } else {
        let mut cols: Vec<Option<Column>> = columns.into_iter().map(Some).collect();
        keep.iter().map(|&i| (candidates[i].clone(), cols[i].take().expect("unique"))).unzip()
    };
    report.timings.generation = ms(report.timings.generation + start.elapsed().as_secs_f64());
    let pool = Pool { candidates: &candidates, columns: &columns };

    let seed_of = |stage: &str| seed::derive(cfg.seed, stage, &[]);
    let blocks = stage!(report, "scoring", tabular::make_blocks(&train, cfg.blocks_log2, seed_of("blocks")));
    let mut baselines: Vec<OofBaseline> = Vec::new();
    {
        let start = Instant::now();
        let base = stage!(report, "baseline", booster::oof_baseline(ds, &train, &valid, cfg.folds, &cfg.booster, seed_of("baseline")));
        baselines.push(base);
        if cfg.baseline_per_round {
            for (r, block) in blocks.rounds.iter().enumerate().take(blocks.len() - 1) {
                let b = stage!(
                    report,
                    "baseline",
                    booster::oof_baseline(ds, block, &valid, cfg.folds, &cfg.booster, seed::derive(cfg.seed, "baseline", &[r as u64]))
                );
                baselines.insert(r, b);
            }
        }
        report.timings.baseline = ms(start.elapsed().as_secs_f64());
    }
    let full_baseline = &baselines.last().expect("baseline").predictions;
    let l_init = baselines.last().expect("baseline").l_init;
    let ctx0 = BoostContext { y: ds.target(), task: ds.task(), baseline: &baselines[0].predictions, params: &cfg.booster };

    let mut records = Vec::new();
    let mut halving = None;
    if !pool.is_empty() {
        let start = Instant::now();
        records = stage!(
            report,
            "scoring",
            select::reliability_round(pool, &blocks.rounds[0], &valid, &ctx0, cfg.reliability.params(), seed_of("reliability"))
        );
        report.timings.scoring_rounds.push(ms(start.elapsed().as_secs_f64()));
        let start = Instant::now();
        let baseline_refs: Vec<&[f64]> = baselines.iter().map(|b| b.predictions.as_slice()).collect();
        let h = stage!(
            report,
            "scoring",
            select::successive_halving(&records, pool, &blocks, &valid, &ctx0, &baseline_refs, cfg.keep_ratio)
        );
        report.timings.scoring_rounds.push(ms(start.elapsed().as_secs_f64()));
        report.counts.round_survivors = h.evaluated.clone();
        report.counts.final_survivors = h.survivors.len();
        halving = Some(h);
    }

    let ctx = BoostContext { baseline: full_baseline, ..ctx0 };
    let selected = match &halving {
        Some(h) => stage!(
            report,
            "attribution",
            timed(&mut report.timings.attribution, || select::final_select(&h.survivors, pool, &ctx, &train, &valid, cfg.top_k))
        ),
        None => Vec::new(),
    };
    report.counts.selected = selected.len();
    report.selected = selected
        .iter()
        .map(|&(c, gain)| SelectedFeature { expression: candidates[c].key.clone(), gain })
        .collect();

    let gain_of: BTreeMap<usize, f64> = selected.iter().copied().collect();
    if let Some(h) = &halving {
        let by_candidate: BTreeMap<usize, &ScoreRecord> = records.iter().map(|r| (r.candidate, r)).collect();
        report.candidates = h
            .traces
            .iter()
            .map(|t| {
                let r = by_candidate[&t.candidate];
                CandidateReport {
                    expression: r.key.clone(),
                    round_scores: t.round_scores.clone(),
                    delta_samples: r.samples.clone(),
                    mu: r.mean,
                    sigma: r.std,
                    reliability: r.reliability,
                    survival_round: t.survival_round,
                    final_gain: gain_of.get(&t.candidate).copied(),
                }
            })
            .collect();
    }
    report.variability = Some(variability_summary(&records));

    let mut names: Vec<String> = ds.features().iter().map(|f| f.name.clone()).collect();
    let mut out_cols: Vec<Column> = ds.columns().to_vec();
    for &(c, _) in &selected {
        names.push(candidates[c].key.clone());
        // statistics come from training rows; every row gets a value
        out_cols.push(stage!(report, "attribution", probe::materialize_full(&candidates[c], ds, &ds.all_rows(), &train)));
    }

    let start = Instant::now();
    let base_cols: Vec<&Column> = ds.columns().iter().collect();
    let eng_cols: Vec<&Column> = out_cols.iter().collect();
    let metric = stage!(report, "final_metric", (|| -> Result<MetricSummary> {
        Ok(MetricSummary {
            name: if ds.task() == Task::Regression { "rmse" } else { "auc" }.to_string(),
            baseline: validation_metric(ds, &base_cols, &train, &valid, &cfg.booster)?,
            engineered: validation_metric(ds, &eng_cols, &train, &valid, &cfg.booster)?,
            l_init,
        })
    })());
    report.timings.final_metric = ms(start.elapsed().as_secs_f64());
    report.metric = Some(metric);
    report.timings.finish();
    report.complete = true;
    Ok(RunOutput { report, engineered: EngineeredData { names, columns: out_cols } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Tau,
    Lambda,
    Nsub,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(SweepParam::Tau),
            "lambda" => Ok(SweepParam::Lambda),
            "nsub" => Ok(SweepParam::Nsub),
            other => Err(Error::invalid(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub run_seconds: f64,
    pub eval_seconds: f64,
    pub total_seconds: f64,
    pub generated: usize,
    pub selected: usize,
    pub metric: f64,
}

impl SweepRow {
    fn from_report(value: f64, r: &PipelineReport) -> Self {
        SweepRow {
            value,
            run_seconds: r.timings.run_seconds,
            eval_seconds: r.timings.eval_seconds,
            total_seconds: r.timings.total_seconds,
            generated: r.counts.generated_total,
            selected: r.counts.selected,
            metric: r.metric.as_ref().map_or(f64::NAN, |m| m.engineered),
        }
    }
}

/// One pipeline run per value, all with the base config's seed.
pub fn sweep(ds: &Dataset, base: &PipelineConfig, param: SweepParam, values: &[f64]) -> std::result::Result<Vec<(SweepRow, PipelineReport)>, PipelineFailure> {
    if values.is_empty() {
        let error = Error::invalid("sweep needs at least one value");
        let mut report = PipelineReport::new(ds, base);
        report.failed_stage = Some("config".into());
        report.error = Some(error.to_string());
        return Err(PipelineFailure { report: Box::new(report), error });
    }
    values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match param {
                SweepParam::Tau => cfg.clustering.tau = v as usize,
                SweepParam::Lambda => cfg.reliability.lambda = v,
                SweepParam::Nsub => cfg.reliability.n_sub = v as usize,
            }
            let out = run(ds, &cfg)?;
            Ok((SweepRow::from_report(v, &out.report), out.report))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub clustering: bool,
    pub probing: bool,
    pub reliability: bool,
    pub run_seconds: f64,
    pub eval_seconds: f64,
    pub metric: f64,
    pub generated: usize,
    pub selected: usize,
}

impl AblationRow {
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.clustering, "S"), (self.probing, "O"), (self.reliability, "R")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, l)| *l)
            .collect();
        if parts.is_empty() {
            "baseline".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// The eight on/off combinations of clustering, probing and reliability.
pub fn ablation_grid() -> Vec<(bool, bool, bool)> {
    (0..8u8).map(|b| (b & 1 != 0, b & 2 != 0, b & 4 != 0)).collect()
}

pub fn ablate(ds: &Dataset, base: &PipelineConfig) -> std::result::Result<Vec<(AblationRow, PipelineReport)>, PipelineFailure> {
    ablation_grid()
        .into_iter()
        .map(|(s, o, r)| {
            let mut cfg = base.clone();
            cfg.set_flags(s, o, r);
            let out = run(ds, &cfg)?;
            let rep = out.report;
            Ok((
                AblationRow {
                    clustering: s,
                    probing: o,
                    reliability: r,
                    run_seconds: rep.timings.run_seconds,
                    eval_seconds: rep.timings.eval_seconds,
                    metric: rep.metric.as_ref().map_or(f64::NAN, |m| m.engineered),
                    generated: rep.counts.generated_total,
                    selected: rep.counts.selected,
                },
                rep,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reduction_law() {
        assert_abs_diff_eq!(predicted_reduction(64, 20, 16, 5).unwrap(), 0.0625, epsilon = 1e-15);
        assert_eq!(predicted_reduction(10, 7, 10, 7).unwrap(), 1.0);
        let full = predicted_reduction(64, 20, 16, 10).unwrap();
        assert_abs_diff_eq!(predicted_reduction(64, 20, 8, 10).unwrap(), full / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(predicted_reduction(64, 20, 16, 5).unwrap(), full / 2.0, epsilon = 1e-15);
        assert!(predicted_reduction(4, 2, 8, 1).is_err());
    }

    #[test]
    fn variability() {
        let recs = vec![
            ScoreRecord::from_samples(0, "a", vec![0.1, 0.2, 0.3], 0.2),
            ScoreRecord::from_samples(1, "b", vec![0.5, 0.5, 0.5], 0.2),
        ];
        let v = variability_summary(&recs);
        assert_eq!(v.zero_variance, vec!["b".to_string()]);
        assert_abs_diff_eq!(v.candidates[0].ratio, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.sigma_max, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(v.mean_ratio.unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]), 0.75);
        assert_eq!(auc(&[1.0, 1.0], &[0.0, 1.0]), 0.5);
    }

    #[test]
    fn grid_and_flags() {
        let g = ablation_grid();
        assert_eq!(g.len(), 8);
        assert!(g.contains(&(false, false, false)) && g.contains(&(true, true, true)));
        let off = PipelineConfig::all_off();
        assert_eq!(off.clustering.mode, ClusterMode::Off);
        assert!(!off.probing.enabled && !off.reliability.enabled);
        assert_eq!(off.reliability.params(), ReliabilityParams { n_sub: 1, r_rel: 0.8, lambda: 0.0 });
        let row = AblationRow { clustering: true, probing: true, reliability: false, run_seconds: 0.0, eval_seconds: 0.0, metric: 0.0, generated: 0, selected: 0 };
        assert_eq!(row.label(), "S+O");
    }
}
