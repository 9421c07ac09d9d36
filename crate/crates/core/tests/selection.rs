mod common;

use proptest::prelude::*;

use scopefe::booster::{self, BoostContext, BoostParams};
use scopefe::oper::{self, CandidateFeature, Operator};
use scopefe::select::{self, Pool, ReliabilityParams, ScoreRecord};
use scopefe::tabular::{self, Column, Dataset, RowIndexSet};

struct Setup {
    ds: Dataset,
    train: RowIndexSet,
    valid: RowIndexSet,
    baseline: Vec<f64>,
    params: BoostParams,
    cands: Vec<CandidateFeature>,
    cols: Vec<Column>,
}

impl Setup {
    /// `mul(x1,x2)` first, then `n_noise` candidates that avoid the signal pair.
    fn planted(seed: u64, n: usize, n_noise: usize) -> Setup {
        let ds = common::planted(seed, n, 12);
        let (train, valid) = tabular::split(&ds, 0.2, false, seed).unwrap();
        let params = BoostParams::default();
        let baseline = booster::oof_baseline(&ds, &train, &valid, 5, &params, seed).unwrap().predictions;
        let f = ds.features();
        let mut cands = vec![CandidateFeature::new(Operator::from_name("mul").unwrap(), &[0, 1], f).unwrap()];
        'fill: for op in ["add", "sub", "max", "min", "mul"] {
            for i in 2..12 {
                for j in i + 1..12 {
                    if cands.len() > n_noise {
                        break 'fill;
                    }
                    cands.push(CandidateFeature::new(Operator::from_name(op).unwrap(), &[i, j], f).unwrap());
                }
            }
        }
        let rows = train.union(&valid);
        let mut cols = Vec::new();
        for c in &cands {
            let dense = oper::materialize(c, &ds, &rows, &train).unwrap();
            // scatter back to dataset row order
            let mut full = vec![f64::NAN; ds.n_rows()];
            for (k, &r) in rows.indices().iter().enumerate() {
                full[r] = dense.as_numeric().unwrap()[k];
            }
            cols.push(Column::Numeric(full));
        }
        Setup { ds, train, valid, baseline, params, cands, cols }
    }

    fn ctx(&self) -> BoostContext<'_> {
        BoostContext { y: self.ds.target(), task: self.ds.task(), baseline: &self.baseline, params: &self.params }
    }

    fn pool(&self) -> Pool<'_> {
        Pool { candidates: &self.cands, columns: &self.cols }
    }
}

fn halving(s: &Setup, seed: u64, rel: ReliabilityParams) -> select::HalvingOutcome {
    let blocks = tabular::make_blocks(&s.train, 3, seed).unwrap();
    let ranked = select::reliability_round(s.pool(), &blocks.rounds[0], &s.valid, &s.ctx(), rel, seed).unwrap();
    select::successive_halving(&ranked, s.pool(), &blocks, &s.valid, &s.ctx(), &[&s.baseline], 0.5).unwrap()
}

#[test]
fn halving_counts() {
    let s = Setup::planted(1, 1200, 7);
    assert_eq!(s.cands.len(), 8);
    let out = halving(&s, 1, ReliabilityParams::default());
    assert_eq!(out.evaluated, vec![8, 4, 2, 1]);
    assert!(out.survivors.len() <= 1);

    let lone = Setup::planted(2, 1200, 0);
    let out = halving(&lone, 2, ReliabilityParams::default());
    assert_eq!(out.evaluated, vec![1, 1, 1, 1]);
    assert_eq!(out.traces[0].survival_round, 3);
}

#[test]
fn planted_product_survives_halving() {
    let mut hits = 0;
    for seed in 0..5 {
        let s = Setup::planted(10 + seed, 2000, 50);
        assert_eq!(s.cands.len(), 51);
        let out = halving(&s, seed, ReliabilityParams::default());
        if out.survivors.contains(&0) {
            hits += 1;
        }
    }
    assert!(hits >= 4, "planted candidate survived on {hits}/5 seeds");
}

#[test]
fn single_subsample_without_penalty_is_plain_feature_boost() {
    let s = Setup::planted(3, 1000, 5);
    let blocks = tabular::make_blocks(&s.train, 3, 3).unwrap();
    let rel = ReliabilityParams { n_sub: 1, r_rel: 0.8, lambda: 0.0 };
    let recs = select::reliability_round(s.pool(), &blocks.rounds[0], &s.valid, &s.ctx(), rel, 3).unwrap();
    let sub = select::reliability_subsample(&blocks.rounds[0], 0.8, None, 3, 0).unwrap();
    for r in &recs {
        let plain = booster::feature_boost(&s.ctx(), sub.indices(), s.valid.indices(), &[&s.cols[r.candidate]]).unwrap();
        assert_eq!(r.reliability.to_bits(), plain.to_bits());
        assert_eq!((r.std, r.se), (0.0, 0.0));
    }
}

#[test]
fn round_results_do_not_depend_on_thread_count() {
    let s = Setup::planted(4, 800, 10);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| halving(&s, 4, ReliabilityParams::default()));
    let b = four.install(|| halving(&s, 4, ReliabilityParams::default()));
    assert_eq!(a, b);
}

fn leak_and_constant() -> (Setup, Vec<usize>) {
    let mut s = Setup::planted(5, 1000, 3);
    s.cols[1] = Column::Numeric(s.ds.target().to_vec());
    s.cols[2] = Column::Numeric(vec![1.0; s.ds.n_rows()]);
    (s, vec![2, 1])
}

#[test]
fn final_selection_rules() {
    let (s, survivors) = leak_and_constant();
    let picked = select::final_select(&survivors, s.pool(), &s.ctx(), &s.train, &s.valid, 10).unwrap();
    assert_eq!(picked.len(), 1);
    assert_eq!(picked[0].0, 1);

    let all = [0, 1, 3];
    let everything = select::final_select(&all, s.pool(), &s.ctx(), &s.train, &s.valid, 10).unwrap();
    let fitted_cols: Vec<&Column> = all.iter().map(|&c| &s.cols[c]).collect();
    let model = booster::fit(&fitted_cols, s.ds.target(), s.ds.task(), Some(&s.baseline), s.train.indices(), s.valid.indices(), &s.params)
        .unwrap()
        .model;
    let positive = booster::attribution(&model).iter().filter(|g| **g > 0.0).count();
    assert_eq!(everything.len(), positive);
    assert!(everything.windows(2).all(|w| w[0].1 >= w[1].1));

    let top = select::final_select(&all, s.pool(), &s.ctx(), &s.train, &s.valid, 1).unwrap();
    assert_eq!(top, everything[..1].to_vec());
    assert!(select::final_select(&all, s.pool(), &s.ctx(), &s.train, &s.valid, 0).is_err());
}

proptest! {
    #[test]
    fn reliability_is_monotone_in_lambda(
        samples in prop::collection::vec(-1.0f64..1.0, 1..6),
        l1 in 0.0f64..10.0,
        l2 in 0.0f64..10.0,
    ) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = ScoreRecord::from_samples(0, "c", samples.clone(), lo);
        let b = ScoreRecord::from_samples(0, "c", samples.clone(), hi);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        prop_assert!((a.mean - mean).abs() <= 1e-12);
        if a.std > 0.0 {
            prop_assert!(b.reliability <= a.reliability);
        } else {
            prop_assert_eq!(a.reliability, b.reliability);
        }
    }

    #[test]
    fn zero_lambda_ranks_by_mean(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..12)) {
        let mut recs: Vec<ScoreRecord> =
            rows.iter().enumerate().map(|(i, s)| ScoreRecord::from_samples(i, format!("c{i:02}"), s.clone(), 0.0)).collect();
        select::rank_records(&mut recs);
        prop_assert!(recs.windows(2).all(|w| w[0].mean > w[1].mean || (w[0].mean == w[1].mean && w[0].key < w[1].key)));
    }
}
