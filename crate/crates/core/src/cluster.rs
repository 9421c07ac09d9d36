//! Feature clustering and the pair-admissibility indicator.
//!
//! Hard mode cuts an average-linkage dendrogram over `1 - S`. Soft mode embeds
//! the features with the top eigenvectors of the normalized similarity
//! matrix, runs fuzzy c-means in that space and thresholds the memberships.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use serde::Serialize;

use crate::assoc::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::seed;

/// Number of clusters for `d` features and target cluster size `tau`.
pub fn cluster_count(d: usize, tau: usize) -> Result<usize> {
    if d < 2 || tau < 1 {
        return Err(Error::invalid(format!("cluster_count needs d >= 2 and tau >= 1, got d={d}, tau={tau}")));
    }
    Ok(d.div_ceil(tau).max(2).min(d))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HardAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftAssignment {
    /// Sorted, non-empty label set per feature.
    pub sets: Vec<Vec<usize>>,
    pub k: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ClusterAssignment {
    Hard(HardAssignment),
    Soft(SoftAssignment),
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        match self {
            ClusterAssignment::Hard(h) => h.k,
            ClusterAssignment::Soft(s) => s.k,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            ClusterAssignment::Hard(h) => h.labels.len(),
            ClusterAssignment::Soft(s) => s.sets.len(),
        }
    }

    /// Label set of feature `i`.
    pub fn labels_of(&self, i: usize) -> Vec<usize> {
        match self {
            ClusterAssignment::Hard(h) => vec![h.labels[i]],
            ClusterAssignment::Soft(s) => s.sets[i].clone(),
        }
    }

    pub fn pair_allowed(&self, i: usize, j: usize) -> bool {
        match self {
            ClusterAssignment::Hard(h) => h.labels[i] == h.labels[j],
            ClusterAssignment::Soft(s) => {
                let (a, b) = (&s.sets[i], &s.sets[j]);
                // both sorted
                let (mut p, mut q) = (0, 0);
                while p < a.len() && q < b.len() {
                    match a[p].cmp(&b[q]) {
                        std::cmp::Ordering::Equal => return true,
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                    }
                }
                false
            }
        }
    }
}

/// Average-linkage agglomerative clustering on `1 - S`.
///
/// Equal merge distances are resolved by the pair of clusters whose smallest
/// member indices are lexicographically lowest. Labels are numbered by the
/// smallest member of each cluster.
pub fn hard_cluster(s: &SimilarityMatrix, tau: usize) -> Result<HardAssignment> {
    let d = s.order();
    let k = cluster_count(d, tau)?;
    let mut members: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
    let mut dist: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| 1.0 - s.get(i, j)).collect()).collect();
    let mut alive: Vec<bool> = vec![true; d];
    let mut count = d;
    while count > k {
        // Cluster slot `a` always holds its smallest member at slot index a,
        // so scanning slots in order realizes the tie-break.
        let mut best: Option<(f64, usize, usize)> = None;
        for a in (0..d).filter(|&a| alive[a]) {
            for b in (a + 1..d).filter(|&b| alive[b]) {
                if best.is_none_or(|(bd, _, _)| dist[a][b] < bd) {
                    best = Some((dist[a][b], a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two live clusters");
        let (na, nb) = (members[a].len() as f64, members[b].len() as f64);
        for c in (0..d).filter(|&c| alive[c] && c != a && c != b) {
            let merged = (na * dist[a][c] + nb * dist[b][c]) / (na + nb);
            dist[a][c] = merged;
            dist[c][a] = merged;
        }
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        alive[b] = false;
        count -= 1;
    }
    let mut labels = vec![0; d];
    for (label, slot) in (0..d).filter(|&a| alive[a]).enumerate() {
        for &f in &members[slot] {
            labels[f] = label;
        }
    }
    Ok(HardAssignment { labels, k })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// Row-normalized coordinates, one row per feature.
    pub points: Vec<Vec<f64>>,
    /// Retained eigenvectors before row normalization, column per eigenpair.
    pub eigenvectors: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// The normalized affinity the eigenpairs belong to, row-major.
    pub affinity: Vec<Vec<f64>>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        Embedding { points, eigenvectors: Vec::new(), eigenvalues: Vec::new(), affinity: Vec::new() }
    }
}

/// Spectral embedding of the features with `q = min(2K, d - 1)` dimensions.
pub fn spectral_embed(s: &SimilarityMatrix, k: usize) -> Result<Embedding> {
    let d = s.order();
    if d < 2 || k < 1 {
        return Err(Error::invalid(format!("spectral_embed needs d >= 2 and K >= 1, got d={d}, K={k}")));
    }
    let q = (2 * k).min(d - 1);
    let deg: Vec<f64> = (0..d).map(|i| s.row(i).iter().sum()).collect();
    let a = DMatrix::from_fn(d, d, |i, j| s.get(i, j) / (deg[i] * deg[j]).sqrt());
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 1000 * d)
        .ok_or_else(|| Error::Eigen(format!("no convergence for d={d}")))?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let mut eigenvectors = Vec::with_capacity(q);
    let mut eigenvalues = Vec::with_capacity(q);
    for &c in order.iter().take(q) {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let pivot = v.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvectors.push(v);
        eigenvalues.push(eig.eigenvalues[c]);
    }

    let points = (0..d)
        .map(|i| {
            let row: Vec<f64> = eigenvectors.iter().map(|v| v[i]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                log::warn!("feature {i} has a zero spectral embedding row");
                let mut unit = vec![0.0; q];
                unit[0] = 1.0;
                unit
            }
        })
        .collect();
    let affinity = (0..d).map(|i| (0..d).map(|j| a[(i, j)]).collect()).collect();
    Ok(Embedding { points, eigenvectors, eigenvalues, affinity })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcmParams {
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmParams {
    fn default() -> Self {
        FcmParams { m: 2.0, tol: 1e-5, max_iter: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    /// d×K membership degrees; rows sum to one.
    pub u: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<f64>>,
    /// Objective after every update sweep, starting with the seeded centroids.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Farthest-point seeding: a random first row, then repeatedly the row
/// farthest from every chosen centroid (lowest index on ties).
fn seed_centroids(x: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut chosen = vec![seed::derived_rng(seed, "fcm-init", &[]).gen_range(0..d)];
    let mut nearest: Vec<f64> = x.iter().map(|p| sq_dist(p, &x[chosen[0]])).collect();
    while chosen.len() < k {
        let next = (0..d)
            .filter(|i| !chosen.contains(i))
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if nearest[b] >= nearest[i] => Some(b),
                _ => Some(i),
            })
            .expect("K <= d");
        chosen.push(next);
        for (i, p) in x.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &x[next]));
        }
    }
    chosen.into_iter().map(|i| x[i].clone()).collect()
}

fn update_memberships(x: &[Vec<f64>], v: &[Vec<f64>], m: f64) -> Vec<Vec<f64>> {
    let k = v.len();
    x.iter()
        .map(|p| {
            let d2: Vec<f64> = v.iter().map(|c| sq_dist(p, c)).collect();
            if let Some(hit) = d2.iter().position(|&e| e == 0.0) {
                let mut row = vec![0.0; k];
                row[hit] = 1.0;
                return row;
            }
            // u_k ∝ d2_k^(-1/(m-1)), evaluated in log space
            let logits: Vec<f64> = d2.iter().map(|e| -e.ln() / (m - 1.0)).collect();
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|e| e / total).collect()
        })
        .collect()
}

fn update_centroids(x: &[Vec<f64>], u: &[Vec<f64>], m: f64, previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let q = x[0].len();
    (0..previous.len())
        .map(|k| {
            let mut num = vec![0.0; q];
            let mut den = 0.0;
            for (p, row) in x.iter().zip(u) {
                let w = row[k].powf(m);
                den += w;
                for (n, xi) in num.iter_mut().zip(p) {
                    *n += w * xi;
                }
            }
            if den > 0.0 {
                num.iter().map(|n| n / den).collect()
            } else {
                previous[k].clone()
            }
        })
        .collect()
}

pub fn fcm_objective(x: &[Vec<f64>], u: &[Vec<f64>], v: &[Vec<f64>], m: f64) -> f64 {
    x.iter()
        .zip(u)
        .map(|(p, row)| row.iter().zip(v).map(|(uk, c)| uk.powf(m) * sq_dist(p, c)).sum::<f64>())
        .sum()
}

/// Fuzzy c-means over the embedded points.
pub fn fcm(x: &Embedding, k: usize, params: FcmParams, seed: u64) -> Result<Membership> {
    let pts = &x.points;
    let d = pts.len();
    if k < 1 || k > d {
        return Err(Error::invalid(format!("fcm needs 1 <= K <= d, got K={k}, d={d}")));
    }
    if params.m <= 1.0 || !params.m.is_finite() {
        return Err(Error::invalid(format!("fuzziness m must exceed 1, got {}", params.m)));
    }
    let m = params.m;
    let mut v = seed_centroids(pts, k, seed);
    let mut u = update_memberships(pts, &v, m);
    let mut objective = vec![fcm_objective(pts, &u, &v, m)];
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        v = update_centroids(pts, &u, m, &v);
        let next = update_memberships(pts, &v, m);
        let shift = next
            .iter()
            .zip(&u)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        u = next;
        objective.push(fcm_objective(pts, &u, &v, m));
        if shift < params.tol {
            break;
        }
    }
    Ok(Membership { u, centroids: v, objective, iterations })
}

/// Thresholds memberships at `K / 10`, falling back to the argmax cluster.
pub fn soft_assign(u: &Membership, k: usize) -> SoftAssignment {
    let theta = k as f64 / 10.0;
    if theta >= 1.0 {
        log::warn!("membership threshold {theta} is unreachable for K={k}; soft clustering reduces to argmax");
    }
    let sets = u
        .u
        .iter()
        .map(|row| {
            let set: Vec<usize> = (0..k).filter(|&c| row[c] >= theta).collect();
            if set.is_empty() {
                let best = (0..k).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                vec![best]
            } else {
                set
            }
        })
        .collect();
    SoftAssignment { sets, k, theta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn block_matrix(sizes: &[usize], within: f64, across: f64) -> SimilarityMatrix {
        let group: Vec<usize> = sizes.iter().enumerate().flat_map(|(g, &n)| std::iter::repeat_n(g, n)).collect();
        let d = group.len();
        let vals = (0..d * d)
            .map(|e| {
                let (i, j) = (e / d, e % d);
                if i == j {
                    1.0
                } else if group[i] == group[j] {
                    within
                } else {
                    across
                }
            })
            .collect();
        SimilarityMatrix::from_rows(d, vals).unwrap()
    }

    #[test]
    fn cluster_count_rule() {
        assert_eq!(cluster_count(32, 16).unwrap(), 2);
        assert_eq!(cluster_count(8, 16).unwrap(), 2);
        assert_eq!(cluster_count(54, 16).unwrap(), 4);
        assert_eq!(cluster_count(3, 1).unwrap(), 3);
        assert!(cluster_count(1, 1).is_err());
    }

    #[test]
    fn hard_recovers_blocks() {
        let s = block_matrix(&[3, 3], 0.9, 0.1);
        let h = hard_cluster(&s, 3).unwrap();
        assert_eq!(h.labels, vec![0, 0, 0, 1, 1, 1]);
        let two = hard_cluster(&block_matrix(&[1, 1], 1.0, 0.3), 16).unwrap();
        assert_eq!(two.labels, vec![0, 1]);
        let flat = block_matrix(&[5], 0.5, 0.5);
        assert_eq!(hard_cluster(&flat, 2).unwrap(), hard_cluster(&flat, 2).unwrap());
    }

    #[test]
    fn two_feature_embedding_is_unit() {
        let s = SimilarityMatrix::from_rows(2, vec![1.0, 0.4, 0.4, 1.0]).unwrap();
        let e = spectral_embed(&s, 2).unwrap();
        assert_eq!(e.dim(), 1);
        for p in &e.points {
            assert_abs_diff_eq!(p[0].abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fcm_singular_point_is_crisp() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let u = update_memberships(&pts, &[vec![0.0, 0.0], vec![1.0, 1.0]], 2.0);
        assert_eq!(u[0], vec![1.0, 0.0]);
        assert_abs_diff_eq!(u[1].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(fcm(&Embedding::from_points(pts.clone()), 4, FcmParams::default(), 0).is_err());
        let bad = FcmParams { m: 1.0, ..FcmParams::default() };
        assert!(fcm(&Embedding::from_points(pts), 2, bad, 0).is_err());
    }

    #[test]
    fn soft_assign_threshold_and_fallback() {
        let mk = |rows: Vec<Vec<f64>>| Membership { u: rows, centroids: vec![], objective: vec![], iterations: 0 };
        let a = soft_assign(&mk(vec![vec![0.5, 0.3, 0.1, 0.1], vec![0.25; 4], vec![0.45, 0.1, 0.0, 0.45]]), 4);
        assert_abs_diff_eq!(a.theta, 0.4);
        assert_eq!(a.sets, vec![vec![0], vec![0], vec![0, 3]]);
        let mut wide = vec![0.0; 20];
        wide[7] = 0.9;
        wide[3] = 0.1;
        assert_eq!(soft_assign(&mk(vec![wide]), 20).sets, vec![vec![7]]);
    }

    #[test]
    fn pair_indicator() {
        let hard = ClusterAssignment::Hard(HardAssignment { labels: vec![0, 0, 1], k: 2 });
        assert!(hard.pair_allowed(0, 1));
        assert!(!hard.pair_allowed(0, 2));
        let soft = ClusterAssignment::Soft(SoftAssignment { sets: vec![vec![1, 2], vec![2, 3], vec![0]], k: 4, theta: 0.4 });
        assert!(soft.pair_allowed(0, 1));
        assert!(soft.pair_allowed(1, 0));
        assert!(!soft.pair_allowed(1, 2));
    }
}
