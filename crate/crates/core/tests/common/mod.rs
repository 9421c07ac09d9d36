#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use scopefe::tabular::{Column, Dataset, Task};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

pub fn numeric_dataset(cols: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
    let named = cols.into_iter().enumerate().map(|(i, c)| (format!("x{}", i + 1), Column::Numeric(c))).collect();
    Dataset::new(named, "y", y, Task::Regression).unwrap()
}

/// `y = x1·x2 + 0.1·noise` over `d` standard normal features.
pub fn planted(seed: u64, n: usize, d: usize) -> Dataset {
    let mut r = rng(seed);
    let cols: Vec<Vec<f64>> = (0..d).map(|_| normals(&mut r, n)).collect();
    let noise = normals(&mut r, n);
    let y = (0..n).map(|i| cols[0][i] * cols[1][i] + 0.1 * noise[i]).collect();
    numeric_dataset(cols, y)
}

/// Numeric features plus categorical ones derived from latent groups.
pub fn mixed(seed: u64, n: usize, numeric: usize, categorical: usize) -> Dataset {
    let mut r = rng(seed);
    let z = normals(&mut r, n);
    let mut named: Vec<(String, Column)> = (0..numeric)
        .map(|j| {
            let c: Vec<f64> = (0..n).map(|i| if j % 2 == 0 { z[i] + r.sample::<f64, _>(StandardNormal) } else { r.sample(StandardNormal) }).collect();
            (format!("x{}", j + 1), Column::Numeric(c))
        })
        .collect();
    for j in 0..categorical {
        let card = 3 + j as u32 % 3;
        let codes = (0..n).map(|i| if r.gen_bool(0.02) { None } else { Some(((z[i] + 3.0).max(0.0) as u32 + r.gen_range(0..2)) % card) }).collect();
        named.push((format!("c{}", j + 1), Column::Categorical { codes, levels: (0..card).map(|l| format!("k{l}")).collect() }));
    }
    let y = (0..n).map(|i| z[i] * z[i] + 0.3 * r.sample::<f64, _>(StandardNormal)).collect();
    Dataset::new(named, "y", y, Task::Regression).unwrap()
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 { 1.0 } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}
