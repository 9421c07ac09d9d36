//! Pairwise feature association and the similarity matrix built from it.
//!
//! Numeric pairs use absolute Pearson correlation, categorical pairs use
//! bias-corrected Cramér's V and mixed pairs use eta-squared. All statistics
//! work on pairwise-complete rows.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tabular::{Column, Dataset, RowIndexSet};

/// Absolute Pearson correlation over rows where both values are present.
pub fn pearson_abs(x: &[f64], y: &[f64]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::InsufficientOverlap);
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(0.0);
    }
    Ok((sxy.abs() / (sxx * syy).sqrt()).min(1.0))
}

/// Bias-corrected Cramér's V (no Yates correction).
pub fn cramers_v(x: &[Option<u32>], y: &[Option<u32>]) -> Result<f64> {
    let mut rows_of: HashMap<u32, usize> = HashMap::new();
    let mut cols_of: HashMap<u32, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    let mut n = 0usize;
    for (a, b) in x.iter().zip(y) {
        let (Some(a), Some(b)) = (a, b) else { continue };
        let next = rows_of.len();
        let r = *rows_of.entry(*a).or_insert(next);
        let next = cols_of.len();
        let c = *cols_of.entry(*b).or_insert(next);
        *cells.entry((r, c)).or_insert(0.0) += 1.0;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientOverlap);
    }
    let (k, r) = (rows_of.len(), cols_of.len());
    if k <= 1 || r <= 1 || n < 2 {
        return Ok(0.0);
    }
    let mut row_tot = vec![0.0; k];
    let mut col_tot = vec![0.0; r];
    for (&(i, j), &v) in &cells {
        row_tot[i] += v;
        col_tot[j] += v;
    }
    let nf = n as f64;
    // Terms are summed in sorted order so the result does not depend on
    // which argument labels the rows.
    let mut terms = Vec::with_capacity(k * r);
    for (i, rt) in row_tot.iter().enumerate() {
        for (j, ct) in col_tot.iter().enumerate() {
            let expected = rt * ct / nf;
            let observed = cells.get(&(i, j)).copied().unwrap_or(0.0);
            terms.push((observed - expected).powi(2) / expected);
        }
    }
    terms.sort_by(f64::total_cmp);
    let chi2: f64 = terms.iter().sum();

    let (kf, rf) = (k as f64, r as f64);
    let phi2 = chi2 / nf;
    let phi2_corr = (phi2 - (kf - 1.0) * (rf - 1.0) / (nf - 1.0)).max(0.0);
    let k_corr = kf - (kf - 1.0).powi(2) / (nf - 1.0);
    let r_corr = rf - (rf - 1.0).powi(2) / (nf - 1.0);
    let denom = (k_corr - 1.0).min(r_corr - 1.0);
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((phi2_corr / denom).sqrt().min(1.0))
}

/// Share of the numeric variance explained by the categorical grouping.
pub fn eta_squared(cat: &[Option<u32>], num: &[f64]) -> Result<f64> {
    let pairs: Vec<(u32, f64)> = cat
        .iter()
        .zip(num)
        .filter_map(|(c, &v)| c.filter(|_| !v.is_nan()).map(|c| (c, v)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InsufficientOverlap);
    }
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut groups: HashMap<u32, (f64, f64)> = HashMap::new();
    for &(c, v) in &pairs {
        let g = groups.entry(c).or_insert((0.0, 0.0));
        g.0 += v;
        g.1 += 1.0;
    }
    let ss_total: f64 = pairs.iter().map(|p| (p.1 - mean).powi(2)).sum();
    if ss_total <= 0.0 {
        return Ok(0.0);
    }
    let mut between: Vec<f64> = groups.values().map(|&(s, c)| c * (s / c - mean).powi(2)).collect();
    between.sort_by(f64::total_cmp);
    let ss_between: f64 = between.iter().sum();
    Ok((ss_between / ss_total).clamp(0.0, 1.0))
}

/// Symmetric d×d association matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    order: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix from row-major values, checking the invariants.
    pub fn from_rows(order: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != order * order {
            return Err(Error::invalid("similarity matrix shape mismatch"));
        }
        for i in 0..order {
            if values[i * order + i] != 1.0 {
                return Err(Error::invalid("similarity diagonal must be 1"));
            }
            for j in 0..order {
                let v = values[i * order + j];
                if !(0.0..=1.0).contains(&v) || v != values[j * order + i] {
                    return Err(Error::invalid(format!("invalid similarity at ({i},{j})")));
                }
            }
        }
        Ok(SimilarityMatrix { order, values })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.order + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.order..(i + 1) * self.order]
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = names.join(",");
        out.push('\n');
        for i in 0..self.order {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn gather(col: &Column, rows: &[usize]) -> Column {
    match col {
        Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
        Column::Categorical { codes, levels } => Column::Categorical {
            codes: rows.iter().map(|&r| codes[r]).collect(),
            levels: levels.clone(),
        },
    }
}

/// Dispatches on the column kinds of a pair. Mixed pairs always pass the
/// categorical column first.
pub fn pair_similarity(a: &Column, b: &Column) -> Result<f64> {
    match (a, b) {
        (Column::Numeric(x), Column::Numeric(y)) => pearson_abs(x, y),
        (Column::Categorical { codes: x, .. }, Column::Categorical { codes: y, .. }) => cramers_v(x, y),
        (Column::Categorical { codes, .. }, Column::Numeric(v)) | (Column::Numeric(v), Column::Categorical { codes, .. }) => {
            eta_squared(codes, v)
        }
    }
}

/// Similarity over the given rows. A pair whose statistic fails gets 0.
pub fn similarity_matrix(ds: &Dataset, rows: &RowIndexSet) -> Result<SimilarityMatrix> {
    let d = ds.n_features();
    if d < 2 {
        return Err(Error::invalid(format!("similarity needs at least 2 features, got {d}")));
    }
    let cols: Vec<Column> = ds.columns().iter().map(|c| gather(c, rows.indices())).collect();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let sims: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            pair_similarity(&cols[i], &cols[j]).unwrap_or_else(|e| {
                log::warn!("similarity({}, {}) set to 0: {e}", ds.features()[i].name, ds.features()[j].name);
                0.0
            })
        })
        .collect();
    let mut values = vec![0.0; d * d];
    for i in 0..d {
        values[i * d + i] = 1.0;
    }
    for (&(i, j), &s) in pairs.iter().zip(&sims) {
        values[i * d + j] = s;
        values[j * d + i] = s;
    }
    Ok(SimilarityMatrix { order: d, values })
}
