use proptest::prelude::*;

use scopefe::tabular::{self, Column, Dataset, RowIndexSet, Task};

fn dataset(n: usize, labels: Option<Vec<f64>>) -> Dataset {
    let x = Column::Numeric((0..n).map(|i| i as f64).collect());
    match labels {
        Some(y) => Dataset::new(vec![("x".into(), x)], "y", y, Task::Binary).unwrap(),
        None => Dataset::new(vec![("x".into(), x)], "y", vec![0.5; n], Task::Regression).unwrap(),
    }
}

#[test]
fn split_examples() {
    let ds = dataset(10, None);
    let (train, valid) = tabular::split(&ds, 0.2, false, 7).unwrap();
    assert_eq!((train.len(), valid.len()), (8, 2));
    assert_eq!(tabular::split(&ds, 0.2, false, 7).unwrap(), (train, valid));

    let y: Vec<f64> = (0..100).map(|i| f64::from(i % 2 == 0)).collect();
    let ds = dataset(100, Some(y.clone()));
    let (_, valid) = tabular::split(&ds, 0.2, true, 1).unwrap();
    let ones = valid.indices().iter().filter(|&&r| y[r] == 1.0).count();
    assert_eq!((ones, valid.len() - ones), (10, 10));

    let lonely = dataset(5, Some(vec![0.0, 0.0, 0.0, 0.0, 1.0]));
    assert!(tabular::split(&lonely, 0.2, true, 1).is_err());
}

#[test]
fn subsample_examples() {
    let src = RowIndexSet::new((0..1000).collect(), 0);
    assert_eq!(tabular::subsample(&src, 0.1, false, None, 3).unwrap().len(), 100);
    assert_eq!(tabular::subsample(&src, 1.0, false, None, 3).unwrap().indices(), src.indices());
    let labels: Vec<u32> = (0..1000).map(|i| u32::from(i % 10 == 0)).collect();
    let s = tabular::subsample(&src, 0.1, true, Some(&labels), 3).unwrap();
    let minority = s.indices().iter().filter(|&&r| labels[r] == 1).count();
    assert_eq!((s.len() - minority, minority), (90, 10));
    assert!(tabular::subsample(&src, 0.1, true, None, 3).is_err());
}

#[test]
fn block_examples() {
    let train = RowIndexSet::new((0..800).collect(), 0);
    let sizes: Vec<usize> = tabular::make_blocks(&train, 3, 5).unwrap().rounds.iter().map(RowIndexSet::len).collect();
    assert_eq!(sizes, vec![100, 200, 400, 800]);
    let single = tabular::make_blocks(&train, 0, 5).unwrap();
    assert_eq!(single.rounds.len(), 1);
    assert_eq!(single.rounds[0].indices(), train.indices());
    assert!(tabular::make_blocks(&RowIndexSet::new(vec![0, 1, 2], 0), 2, 0).is_err());
}

proptest! {
    #[test]
    fn split_is_disjoint_and_exhaustive(n in 2usize..400, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = dataset(n, None);
        let (train, valid) = tabular::split(&ds, ratio, false, seed).unwrap();
        prop_assert!(!train.is_empty() && !valid.is_empty());
        let mut all: Vec<usize> = train.indices().iter().chain(valid.indices()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_split_tracks_class_shares(n in 20usize..300, p in 0.1f64..0.9, ratio in 0.1f64..0.5, seed in any::<u64>()) {
        let y: Vec<f64> = (0..n).map(|i| f64::from((i as f64) < p * n as f64)).collect();
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        prop_assume!(ones >= 2 && n - ones >= 2);
        let ds = dataset(n, Some(y.clone()));
        let (_, valid) = tabular::split(&ds, ratio, true, seed).unwrap();
        for (class, size) in [(1.0, ones), (0.0, n - ones)] {
            let got = valid.indices().iter().filter(|&&r| y[r] == class).count() as f64;
            prop_assert!((got - ratio * size as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn subsample_size_and_membership(n in 1usize..500, ratio in 0.01f64..=1.0, seed in any::<u64>()) {
        let src = RowIndexSet::new((0..n).map(|i| 3 * i).collect(), 0);
        let s = tabular::subsample(&src, ratio, false, None, seed).unwrap();
        prop_assert_eq!(s.len(), ((ratio * n as f64).round() as usize).max(1));
        let mut seen = s.indices().to_vec();
        seen.dedup();
        prop_assert_eq!(seen.len(), s.len());
        prop_assert!(s.indices().iter().all(|r| r % 3 == 0 && *r < 3 * n));
        prop_assert_eq!(tabular::subsample(&src, ratio, false, None, seed).unwrap(), s);
    }

    #[test]
    fn blocks_nest_and_end_at_train(n in 16usize..600, log2 in 0u32..4, seed in any::<u64>()) {
        let train = RowIndexSet::new((0..n).map(|i| i * 2 + 1).collect(), 0);
        let b = tabular::make_blocks(&train, log2, seed).unwrap();
        prop_assert_eq!(b.rounds.len(), log2 as usize + 1);
        prop_assert_eq!(b.rounds.last().unwrap().indices(), train.indices());
        for w in b.rounds.windows(2) {
            prop_assert!(w[0].indices().iter().all(|r| w[1].indices().binary_search(r).is_ok()));
            prop_assert!(w[1].len() == n || w[1].len() == 2 * w[0].len());
        }
    }
}
