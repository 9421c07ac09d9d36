use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use scopefe::booster::{self, BoostContext, BoostParams};
use scopefe::tabular::{Column, Dataset, RowIndexSet, Task};

fn normals(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

fn std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn dataset(cols: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
    let named = cols.into_iter().enumerate().map(|(i, c)| (format!("x{}", i + 1), Column::Numeric(c))).collect();
    Dataset::new(named, "y", y, Task::Regression).unwrap()
}

fn halves(n: usize) -> (RowIndexSet, RowIndexSet) {
    let cut = n * 4 / 5;
    (RowIndexSet::new((0..cut).collect(), 0), RowIndexSet::new((cut..n).collect(), 0))
}

#[test]
fn identity_map_fit() {
    // the finest binning the booster supports; the default 32 bins leave
    // about 0.03 std of quantization error on this map
    let params = BoostParams { bins: 254, min_leaf: 1, ..BoostParams::default() };
    for seed in 0..5 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 1000;
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
        let x = Column::Numeric(y.clone());
        let rows: Vec<usize> = (0..n).collect();
        let (train, valid) = rows.split_at(800);
        let out = booster::fit(&[&x], &y, Task::Regression, None, train, valid, &params).unwrap();
        let pred = out.model.predict(&[&x], valid, None);
        let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
        let err = rmse(&pred, &yv);
        assert!(err <= 0.01 * std(&y), "seed {seed}: rmse {err} vs std {}", std(&y));
    }
}

#[test]
fn fits_are_deterministic() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let x = Column::Numeric(normals(&mut r, 500));
    let y: Vec<f64> = x.as_numeric().unwrap().iter().map(|v| v.sin() + 0.1 * r.sample::<f64, _>(StandardNormal)).collect();
    let rows: Vec<usize> = (0..500).collect();
    let fit = || booster::fit(&[&x], &y, Task::Regression, None, &rows[..400], &rows[400..], &BoostParams::default()).unwrap();
    let (a, b) = (fit(), fit());
    assert_eq!(a.valid_losses, b.valid_losses);
    assert_eq!(format!("{:?}", a.model), format!("{:?}", b.model));
}

#[test]
fn noise_baseline_loss_matches_target_spread() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let n = 2000;
    let cols = vec![normals(&mut r, n), normals(&mut r, n)];
    let y = normals(&mut r, n);
    let ds = dataset(cols, y.clone());
    let (train, valid) = halves(n);
    let base = booster::oof_baseline(&ds, &train, &valid, 5, &BoostParams::default(), 1).unwrap();
    let sd = std(&y);
    assert!((base.l_init - sd).abs() <= 0.1 * sd, "l_init {} vs std {sd}", base.l_init);
}

#[test]
fn oof_rows_are_never_seen_by_their_model() {
    let ds = dataset(vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]], vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let train = RowIndexSet::new(vec![0, 1, 2, 3], 0);
    let valid = RowIndexSet::new(vec![4], 0);
    let params = BoostParams { min_leaf: 1, ..BoostParams::default() };
    let base = booster::oof_baseline(&ds, &train, &valid, 2, &params, 9).unwrap();
    assert_eq!(base.folds.len(), 2);
    let mut held: Vec<usize> = base.folds.concat();
    held.sort_unstable();
    assert_eq!(held, vec![0, 1, 2, 3]);
    assert!(base.folds.iter().all(|f| f.len() == 2));
    // with two folds, each prediction comes from the model trained on the other fold
    for (k, fold) in base.folds.iter().enumerate() {
        let other = &base.folds[1 - k];
        let x = ds.column(0);
        let fitted = booster::fit(&[x], ds.target(), Task::Regression, None, other, fold, &params).unwrap();
        let pred = fitted.model.predict(&[x], fold, None);
        for (r, p) in fold.iter().zip(pred) {
            assert_eq!(base.predictions[*r], p);
        }
    }
    assert!(base.predictions[4].is_finite());
}

struct Fixture {
    ds: Dataset,
    train: RowIndexSet,
    valid: RowIndexSet,
    baseline: Vec<f64>,
    l_init: f64,
    params: BoostParams,
}

fn fixture(n: usize, seed: u64) -> Fixture {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let cols = vec![normals(&mut r, n), normals(&mut r, n), normals(&mut r, n)];
    let y: Vec<f64> = (0..n).map(|i| cols[0][i] * cols[1][i] + 0.5 * cols[2][i] + 0.2 * r.sample::<f64, _>(StandardNormal)).collect();
    let ds = dataset(cols, y);
    let (train, valid) = halves(n);
    let params = BoostParams::default();
    let base = booster::oof_baseline(&ds, &train, &valid, 5, &params, seed).unwrap();
    Fixture { ds, train, valid, baseline: base.predictions, l_init: base.l_init, params }
}

impl Fixture {
    fn ctx(&self) -> BoostContext<'_> {
        BoostContext { y: self.ds.target(), task: Task::Regression, baseline: &self.baseline, params: &self.params }
    }

    fn delta(&self, col: &Column) -> f64 {
        booster::feature_boost(&self.ctx(), self.train.indices(), self.valid.indices(), &[col]).unwrap()
    }
}

#[test]
fn target_leak_gains() {
    let fx = fixture(1000, 5);
    let leak = Column::Numeric(fx.ds.target().to_vec());
    let d = booster::feature_boost_detail(&fx.ctx(), fx.train.indices(), fx.valid.indices(), &[&leak]).unwrap();
    assert!(d.delta > 0.0);
    assert_eq!(d.l_init, fx.l_init);
    assert!(d.l_best < d.l_init);
}

#[test]
fn constant_candidate_is_neutral() {
    let fx = fixture(1000, 6);
    let d = fx.delta(&Column::Numeric(vec![3.0; 1000]));
    assert!(d.abs() <= 1e-3 * fx.l_init, "constant gain {d} vs l_init {}", fx.l_init);
}

#[test]
fn attribution_identities() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let x = Column::Numeric(normals(&mut r, 300));
    let y: Vec<f64> = x.as_numeric().unwrap().iter().map(|v| 2.0 * v).collect();
    let rows: Vec<usize> = (0..300).collect();
    let single = booster::fit(&[&x], &y, Task::Regression, None, &rows, &[], &BoostParams::default()).unwrap();
    let gains = booster::attribution(&single.model);
    assert_eq!(gains.len(), 1);
    assert!(gains[0] > 0.0 && gains[0] == single.model.total_gain());

    let none = BoostParams { rounds: 0, ..BoostParams::default() };
    let empty = booster::fit(&[&x], &y, Task::Regression, None, &rows, &[], &none).unwrap();
    assert_eq!(booster::attribution(&empty.model), vec![0.0]);
}

#[test]
fn attribution_follows_signal_strength() {
    for seed in 0..5 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 2000;
        let x1 = normals(&mut r, n);
        let x2 = normals(&mut r, n);
        let y: Vec<f64> = (0..n).map(|i| x1[i] + 0.01 * x2[i] + 0.1 * r.sample::<f64, _>(StandardNormal)).collect();
        let (c1, c2) = (Column::Numeric(x1), Column::Numeric(x2));
        let rows: Vec<usize> = (0..n).collect();
        let out = booster::fit(&[&c1, &c2], &y, Task::Regression, None, &rows[..1600], &rows[1600..], &BoostParams::default()).unwrap();
        let g = booster::attribution(&out.model);
        assert!(g[0] > g[1], "seed {seed}: gains {g:?}");
    }
}

#[test]
fn binary_logloss_improves_on_separable_labels() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let n = 600;
    let x = normals(&mut r, n);
    let y: Vec<f64> = x.iter().map(|v| f64::from(u8::from(*v > 0.2))).collect();
    let ds = Dataset::new(vec![("x".into(), Column::Numeric(x))], "y", y, Task::Binary).unwrap();
    let (train, valid) = halves(n);
    let out = booster::fit(&[ds.column(0)], ds.target(), Task::Binary, None, train.indices(), valid.indices(), &BoostParams::default()).unwrap();
    let last = *out.valid_losses.last().unwrap();
    assert!(last < 0.5 * out.initial_loss, "logloss {last} from {}", out.initial_loss);
}
