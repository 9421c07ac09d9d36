//! Operators, candidate expressions, constrained enumeration and
//! materialization of candidate columns.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::tabular::{Column, ColumnKind, ColumnMeta, Dataset, RowIndexSet};

const LOG_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Unary,
    Binary,
}

/// Operand kind accepted by an operator slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Numeric,
    Categorical,
    Any,
}

impl Slot {
    pub fn accepts(self, kind: ColumnKind) -> bool {
        matches!(
            (self, kind),
            (Slot::Any, _) | (Slot::Numeric, ColumnKind::Numeric) | (Slot::Categorical, ColumnKind::Categorical)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "abs")]
    Abs,
    #[serde(rename = "log")]
    Log,
    #[serde(rename = "sqrt")]
    Sqrt,
    #[serde(rename = "square")]
    Square,
    #[serde(rename = "sigmoid")]
    Sigmoid,
    #[serde(rename = "round")]
    Round,
    #[serde(rename = "freq")]
    Freq,
    #[serde(rename = "sin")]
    Sin,
    #[serde(rename = "cos")]
    Cos,
    #[serde(rename = "add")]
    Add,
    #[serde(rename = "sub")]
    Sub,
    #[serde(rename = "mul")]
    Mul,
    #[serde(rename = "div")]
    Div,
    #[serde(rename = "min")]
    Min,
    #[serde(rename = "max")]
    Max,
    GroupByThenMean,
    GroupByThenMin,
    GroupByThenMax,
    GroupByThenMedian,
    GroupByThenStd,
    GroupByThenRank,
    Combine,
    CombineThenFreq,
    GroupByThenNUnique,
}

use Operator::*;

/// Every operator the library knows, default roster first.
pub const CATALOG: [Operator; 24] = [
    Abs,
    Log,
    Sqrt,
    Square,
    Sigmoid,
    Round,
    Freq,
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    GroupByThenMean,
    GroupByThenMin,
    GroupByThenMax,
    GroupByThenMedian,
    GroupByThenStd,
    GroupByThenRank,
    Combine,
    CombineThenFreq,
    GroupByThenNUnique,
    Sin,
    Cos,
];

/// The default 22-operator roster. Trigonometric operators are opt-in.
pub fn default_operator_set() -> Vec<Operator> {
    CATALOG[..22].to_vec()
}

impl Operator {
    pub fn name(self) -> &'static str {
        match self {
            Abs => "abs",
            Log => "log",
            Sqrt => "sqrt",
            Square => "square",
            Sigmoid => "sigmoid",
            Round => "round",
            Freq => "freq",
            Sin => "sin",
            Cos => "cos",
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Div => "div",
            Min => "min",
            Max => "max",
            GroupByThenMean => "GroupByThenMean",
            GroupByThenMin => "GroupByThenMin",
            GroupByThenMax => "GroupByThenMax",
            GroupByThenMedian => "GroupByThenMedian",
            GroupByThenStd => "GroupByThenStd",
            GroupByThenRank => "GroupByThenRank",
            Combine => "Combine",
            CombineThenFreq => "CombineThenFreq",
            GroupByThenNUnique => "GroupByThenNUnique",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        CATALOG.iter().copied().find(|o| o.name() == name).ok_or_else(|| Error::UnknownOperator(name.to_string()))
    }

    pub fn slots(self) -> &'static [Slot] {
        match self {
            Freq => &[Slot::Any],
            Abs | Log | Sqrt | Square | Sigmoid | Round | Sin | Cos => &[Slot::Numeric],
            Add | Sub | Mul | Div | Min | Max => &[Slot::Numeric, Slot::Numeric],
            GroupByThenMean | GroupByThenMin | GroupByThenMax | GroupByThenMedian | GroupByThenStd | GroupByThenRank => {
                &[Slot::Categorical, Slot::Numeric]
            }
            Combine | CombineThenFreq | GroupByThenNUnique => &[Slot::Categorical, Slot::Categorical],
        }
    }

    pub fn arity(self) -> Arity {
        if self.slots().len() == 1 {
            Arity::Unary
        } else {
            Arity::Binary
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Add | Mul | Min | Max)
    }

    pub fn output_kind(self) -> ColumnKind {
        if self == Combine {
            ColumnKind::Categorical
        } else {
            ColumnKind::Numeric
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One operator applied to original features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CandidateFeature {
    pub op: Operator,
    pub operands: Vec<usize>,
    /// Canonical expression, e.g. `mul(x1,x2)`.
    pub key: String,
}

impl CandidateFeature {
    /// Builds a candidate, checking operand kinds and canonicalizing the
    /// operand order of commutative operators.
    pub fn new(op: Operator, operands: &[usize], features: &[ColumnMeta]) -> Result<Self> {
        let slots = op.slots();
        if operands.len() != slots.len() {
            return Err(Error::KindMismatch { op: op.name().into(), detail: format!("expected {} operands", slots.len()) });
        }
        for (slot, &f) in slots.iter().zip(operands) {
            let meta = features.get(f).ok_or_else(|| Error::UnknownColumn(format!("#{f}")))?;
            if !slot.accepts(meta.kind) {
                return Err(Error::KindMismatch {
                    op: op.name().into(),
                    detail: format!("`{}` is {:?}, slot wants {:?}", meta.name, meta.kind, slot),
                });
            }
        }
        if operands.len() == 2 && operands[0] == operands[1] {
            return Err(Error::KindMismatch { op: op.name().into(), detail: "operands must differ".into() });
        }
        let mut operands = operands.to_vec();
        if op.is_commutative() {
            operands.sort_unstable();
        }
        let names: Vec<&str> = operands.iter().map(|&f| features[f].name.as_str()).collect();
        let key = format!("{}({})", op.name(), names.join(","));
        Ok(CandidateFeature { op, operands, key })
    }

    pub fn output_kind(&self) -> ColumnKind {
        self.op.output_kind()
    }
}

fn compatible(features: &[ColumnMeta], slot: Slot) -> Vec<usize> {
    features.iter().filter(|m| slot.accepts(m.kind)).map(|m| m.index).collect()
}

/// Operand tuples an operator admits, in canonical enumeration order.
pub fn operand_universe(op: Operator, features: &[ColumnMeta]) -> Vec<Vec<usize>> {
    let slots = op.slots();
    let first = compatible(features, slots[0]);
    if slots.len() == 1 {
        return first.into_iter().map(|f| vec![f]).collect();
    }
    let second = compatible(features, slots[1]);
    let mut out = Vec::new();
    for &i in &first {
        for &j in &second {
            if i == j || (op.is_commutative() && i > j) {
                continue;
            }
            out.push(vec![i, j]);
        }
    }
    out
}

/// All type-compatible candidates, binary ones filtered by the cluster
/// indicator when an assignment is given.
pub fn enumerate_candidates(
    features: &[ColumnMeta],
    ops: &[Operator],
    assign: Option<&ClusterAssignment>,
) -> Vec<CandidateFeature> {
    let mut out = Vec::new();
    for &op in ops {
        for operands in operand_universe(op, features) {
            if let (Some(a), [i, j]) = (assign, operands.as_slice()) {
                if !a.pair_allowed(*i, *j) {
                    continue;
                }
            }
            out.push(CandidateFeature::new(op, &operands, features).expect("universe is type-compatible"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CandidateCounts {
    pub unary: usize,
    pub binary: usize,
}

impl CandidateCounts {
    pub fn total(&self) -> usize {
        self.unary + self.binary
    }
}

/// Closed-form size of the unconstrained candidate space.
pub fn unconstrained_count(features: &[ColumnMeta], ops: &[Operator]) -> CandidateCounts {
    let mut counts = CandidateCounts::default();
    for &op in ops {
        let slots = op.slots();
        let a = compatible(features, slots[0]).len();
        if slots.len() == 1 {
            counts.unary += a;
            continue;
        }
        counts.binary += if slots[0] == slots[1] {
            if op.is_commutative() {
                a * a.saturating_sub(1) / 2
            } else {
                a * a.saturating_sub(1)
            }
        } else {
            a * compatible(features, slots[1]).len()
        };
    }
    counts
}

pub fn count_by_arity(cands: &[CandidateFeature]) -> CandidateCounts {
    let binary = cands.iter().filter(|c| c.op.arity() == Arity::Binary).count();
    CandidateCounts { unary: cands.len() - binary, binary }
}

fn finite_or_missing(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

fn numeric(ds: &Dataset, f: usize, op: Operator) -> Result<&[f64]> {
    ds.column(f).as_numeric().ok_or_else(|| Error::KindMismatch { op: op.name().into(), detail: "expected numeric".into() })
}

fn codes(ds: &Dataset, f: usize, op: Operator) -> Result<&[Option<u32>]> {
    ds.column(f).as_codes().ok_or_else(|| Error::KindMismatch { op: op.name().into(), detail: "expected categorical".into() })
}

/// Hashable cell identity used by frequency encodings.
fn cell_key(col: &Column, row: usize) -> Option<u64> {
    match col {
        Column::Numeric(v) => (!v[row].is_nan()).then(|| (v[row] + 0.0).to_bits()),
        Column::Categorical { codes, .. } => codes[row].map(u64::from),
    }
}

fn group_values(keys: &[Option<u32>], vals: &[f64], stats_rows: &[usize]) -> HashMap<u32, Vec<f64>> {
    let mut groups: HashMap<u32, Vec<f64>> = HashMap::new();
    for &r in stats_rows {
        if let Some(k) = keys[r] {
            if !vals[r].is_nan() {
                groups.entry(k).or_default().push(vals[r]);
            }
        }
    }
    for g in groups.values_mut() {
        g.sort_by(f64::total_cmp);
    }
    groups
}

fn aggregate(op: Operator, sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    match op {
        GroupByThenMean => sorted.iter().sum::<f64>() / n,
        GroupByThenMin => sorted[0],
        GroupByThenMax => sorted[sorted.len() - 1],
        GroupByThenMedian => {
            let h = sorted.len() / 2;
            if sorted.len() % 2 == 1 {
                sorted[h]
            } else {
                0.5 * (sorted[h - 1] + sorted[h])
            }
        }
        GroupByThenStd => {
            if sorted.len() < 2 {
                return f64::NAN;
            }
            let mean = sorted.iter().sum::<f64>() / n;
            (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        }
        _ => unreachable!("not an aggregate"),
    }
}

/// Evaluates a candidate on `rows`. Every data-dependent statistic
/// (frequencies, group aggregates, rank references, combined levels) comes
/// from `stats_rows` only. The output is aligned with `rows`.
pub fn materialize(c: &CandidateFeature, ds: &Dataset, rows: &RowIndexSet, stats_rows: &RowIndexSet) -> Result<Column> {
    let op = c.op;
    if c.operands.len() != op.slots().len() || c.operands.iter().any(|&f| f >= ds.n_features()) {
        return Err(Error::KindMismatch { op: op.name().into(), detail: "bad operands".into() });
    }
    for (slot, &f) in op.slots().iter().zip(&c.operands) {
        if !slot.accepts(ds.column(f).kind()) {
            return Err(Error::KindMismatch { op: op.name().into(), detail: format!("feature #{f} has the wrong kind") });
        }
    }
    let rows = rows.indices();
    let stats = stats_rows.indices();
    let map_num = |x: &[f64], f: &dyn Fn(f64) -> f64| -> Column {
        Column::Numeric(rows.iter().map(|&r| if x[r].is_nan() { f64::NAN } else { finite_or_missing(f(x[r])) }).collect())
    };
    let zip_num = |x: &[f64], y: &[f64], f: &dyn Fn(f64, f64) -> f64| -> Column {
        Column::Numeric(
            rows.iter()
                .map(|&r| if x[r].is_nan() || y[r].is_nan() { f64::NAN } else { finite_or_missing(f(x[r], y[r])) })
                .collect(),
        )
    };
    let a = c.operands[0];
    let out = match op {
        Abs => map_num(numeric(ds, a, op)?, &f64::abs),
        Log => map_num(numeric(ds, a, op)?, &|v| (v.abs() + LOG_EPS).ln()),
        Sqrt => map_num(numeric(ds, a, op)?, &|v| v.abs().sqrt()),
        Square => map_num(numeric(ds, a, op)?, &|v| v * v),
        Sigmoid => map_num(numeric(ds, a, op)?, &|v| 1.0 / (1.0 + (-v).exp())),
        Round => map_num(numeric(ds, a, op)?, &f64::round),
        Sin => map_num(numeric(ds, a, op)?, &f64::sin),
        Cos => map_num(numeric(ds, a, op)?, &f64::cos),
        Freq => {
            let col = ds.column(a);
            let mut counts: HashMap<u64, f64> = HashMap::new();
            for &r in stats {
                if let Some(k) = cell_key(col, r) {
                    *counts.entry(k).or_insert(0.0) += 1.0;
                }
            }
            Column::Numeric(
                rows.iter().map(|&r| cell_key(col, r).and_then(|k| counts.get(&k).copied()).unwrap_or(f64::NAN)).collect(),
            )
        }
        Add | Sub | Mul | Div | Min | Max => {
            let (x, y) = (numeric(ds, a, op)?, numeric(ds, c.operands[1], op)?);
            match op {
                Add => zip_num(x, y, &|p, q| p + q),
                Sub => zip_num(x, y, &|p, q| p - q),
                Mul => zip_num(x, y, &|p, q| p * q),
                Div => zip_num(x, y, &|p, q| if q == 0.0 { f64::NAN } else { p / q }),
                Min => zip_num(x, y, &f64::min),
                _ => zip_num(x, y, &f64::max),
            }
        }
        GroupByThenMean | GroupByThenMin | GroupByThenMax | GroupByThenMedian | GroupByThenStd => {
            let (keys, vals) = (codes(ds, a, op)?, numeric(ds, c.operands[1], op)?);
            let agg: HashMap<u32, f64> =
                group_values(keys, vals, stats).into_iter().map(|(k, g)| (k, aggregate(op, &g))).collect();
            Column::Numeric(
                rows.iter().map(|&r| keys[r].and_then(|k| agg.get(&k).copied()).unwrap_or(f64::NAN)).collect(),
            )
        }
        GroupByThenRank => {
            let (keys, vals) = (codes(ds, a, op)?, numeric(ds, c.operands[1], op)?);
            let groups = group_values(keys, vals, stats);
            Column::Numeric(
                rows.iter()
                    .map(|&r| match (keys[r].and_then(|k| groups.get(&k)), vals[r]) {
                        (Some(g), v) if !v.is_nan() => g.partition_point(|&e| e <= v) as f64 / g.len() as f64,
                        _ => f64::NAN,
                    })
                    .collect(),
            )
        }
        Combine | CombineThenFreq => {
            let (x, y) = (codes(ds, a, op)?, codes(ds, c.operands[1], op)?);
            let mut pair_code: HashMap<(u32, u32), u32> = HashMap::new();
            let mut freq: Vec<f64> = Vec::new();
            let mut first_seen: Vec<(u32, u32)> = Vec::new();
            for &r in stats {
                if let (Some(p), Some(q)) = (x[r], y[r]) {
                    let code = *pair_code.entry((p, q)).or_insert_with(|| {
                        first_seen.push((p, q));
                        freq.push(0.0);
                        (first_seen.len() - 1) as u32
                    });
                    freq[code as usize] += 1.0;
                }
            }
            let lookup = |r: usize| match (x[r], y[r]) {
                (Some(p), Some(q)) => pair_code.get(&(p, q)).copied(),
                _ => None,
            };
            if op == Combine {
                let level = |f: usize, code: u32| match ds.column(f) {
                    Column::Categorical { levels, .. } => levels[code as usize].clone(),
                    Column::Numeric(_) => unreachable!(),
                };
                let levels = first_seen.iter().map(|&(p, q)| format!("{}|{}", level(a, p), level(c.operands[1], q))).collect();
                Column::Categorical { codes: rows.iter().map(|&r| lookup(r)).collect(), levels }
            } else {
                Column::Numeric(rows.iter().map(|&r| lookup(r).map_or(f64::NAN, |c| freq[c as usize])).collect())
            }
        }
        GroupByThenNUnique => {
            let (keys, vals) = (codes(ds, a, op)?, codes(ds, c.operands[1], op)?);
            let mut seen: HashMap<u32, std::collections::HashSet<u32>> = HashMap::new();
            for &r in stats {
                if let (Some(k), Some(v)) = (keys[r], vals[r]) {
                    seen.entry(k).or_default().insert(v);
                }
            }
            Column::Numeric(
                rows.iter().map(|&r| keys[r].and_then(|k| seen.get(&k)).map_or(f64::NAN, |s| s.len() as f64)).collect(),
            )
        }
    };
    Ok(out)
}
