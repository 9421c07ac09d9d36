//! Dataset model, CSV ingestion and row sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub index: usize,
}

/// Column storage. Numeric missing cells are NaN; categorical missing cells
/// are `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical { codes: Vec<Option<u32>>, levels: Vec<String> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_nan(),
            Column::Categorical { codes, .. } => codes[row].is_none(),
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical { .. } => None,
        }
    }

    pub fn as_codes(&self) -> Option<&[Option<u32>]> {
        match self {
            Column::Numeric(_) => None,
            Column::Categorical { codes, .. } => Some(codes),
        }
    }

    /// Number of distinct levels for categorical columns, 0 for numeric.
    pub fn cardinality(&self) -> usize {
        match self {
            Column::Numeric(_) => 0,
            Column::Categorical { levels, .. } => levels.len(),
        }
    }

    /// Renders one cell for CSV output; missing cells render empty.
    pub fn render(&self, row: usize) -> String {
        match self {
            Column::Numeric(v) if v[row].is_nan() => String::new(),
            Column::Numeric(v) => format!("{}", v[row]),
            Column::Categorical { codes, levels } => match codes[row] {
                Some(c) => levels[c as usize].clone(),
                None => String::new(),
            },
        }
    }
}

/// An immutable column-typed table with a target vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    meta: Vec<ColumnMeta>,
    columns: Vec<Column>,
    target_name: String,
    target: Vec<f64>,
    task: Task,
    target_levels: Option<[String; 2]>,
}

impl Dataset {
    /// Builds a dataset from in-memory columns. Binary targets must be 0/1.
    pub fn new(columns: Vec<(String, Column)>, target_name: &str, target: Vec<f64>, task: Task) -> Result<Self> {
        let n = target.len();
        if n == 0 {
            return Err(Error::NoRows);
        }
        let mut seen = HashSet::new();
        let mut meta = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (index, (name, col)) in columns.into_iter().enumerate() {
            if !seen.insert(name.clone()) || name == target_name {
                return Err(Error::DuplicateColumn(name));
            }
            if col.len() != n {
                return Err(Error::invalid(format!(
                    "column `{name}` has {} rows, target has {n}",
                    col.len()
                )));
            }
            if let Column::Categorical { codes, levels } = &col {
                if codes.iter().flatten().any(|&c| c as usize >= levels.len()) {
                    return Err(Error::invalid(format!("column `{name}` has out-of-range category codes")));
                }
            }
            meta.push(ColumnMeta { name, kind: col.kind(), index });
            cols.push(col);
        }
        for (row, &v) in target.iter().enumerate() {
            let bad = match task {
                Task::Regression => !v.is_finite(),
                Task::Binary => v != 0.0 && v != 1.0,
            };
            if bad {
                return Err(Error::InvalidTarget { row, value: v.to_string(), reason: "not a valid target" });
            }
        }
        let target_levels = (task == Task::Binary).then(|| ["0".to_string(), "1".to_string()]);
        Ok(Dataset { meta, columns: cols, target_name: target_name.to_string(), target, task, target_levels })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn features(&self) -> &[ColumnMeta] {
        &self.meta
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.name == name)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Class labels for binary tasks.
    pub fn labels(&self) -> Option<Vec<u32>> {
        (self.task == Task::Binary).then(|| self.target.iter().map(|&v| v as u32).collect())
    }

    pub fn all_rows(&self) -> RowIndexSet {
        RowIndexSet::new((0..self.n_rows()).collect(), 0)
    }

    /// Renders the target cell for `row` using the original label text.
    pub fn render_target(&self, row: usize) -> String {
        match &self.target_levels {
            Some(levels) => levels[self.target[row] as usize].clone(),
            None => format!("{}", self.target[row]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub target: String,
    /// Inferred from the target column when `None`.
    pub task: Option<Task>,
    pub categorical_threshold: usize,
    pub kinds: HashMap<String, ColumnKind>,
}

impl LoadOptions {
    pub fn new(target: impl Into<String>) -> Self {
        LoadOptions { target: target.into(), task: None, categorical_threshold: 20, kinds: HashMap::new() }
    }
}

fn is_missing_cell(s: &str) -> bool {
    s.is_empty() || s == "NA"
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_csv(file, opts)
}

pub fn read_csv(reader: impl Read, opts: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let target_pos = headers.iter().position(|h| *h == opts.target).ok_or_else(|| Error::MissingTarget(opts.target.clone()))?;
    for name in opts.kinds.keys() {
        if !headers.contains(name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            cells[j].push(cell.to_string());
        }
    }
    let n = cells[0].len();
    if n == 0 {
        return Err(Error::NoRows);
    }

    let mut columns = Vec::with_capacity(headers.len() - 1);
    for (j, name) in headers.iter().enumerate() {
        if j == target_pos {
            continue;
        }
        let raw = &cells[j];
        if raw.iter().all(|c| is_missing_cell(c)) {
            return Err(Error::EmptyColumn(name.clone()));
        }
        let kind = match opts.kinds.get(name) {
            Some(&k) => k,
            None => infer_kind(raw, opts.categorical_threshold),
        };
        columns.push((name.clone(), build_column(name, raw, kind)?));
    }

    let (target, task, levels) = parse_target(&cells[target_pos], opts.task)?;
    let mut ds = Dataset::new(columns, &opts.target, target, task)?;
    ds.target_levels = levels;
    Ok(ds)
}

/// Numeric when every present cell parses and the column has more than
/// `threshold` distinct values or no repeated value at all.
fn infer_kind(raw: &[String], threshold: usize) -> ColumnKind {
    let mut distinct = HashSet::new();
    let mut present = 0;
    for c in raw.iter().filter(|c| !is_missing_cell(c)) {
        present += 1;
        match c.parse::<f64>() {
            Ok(v) => {
                distinct.insert(v.to_bits());
            }
            Err(_) => return ColumnKind::Categorical,
        }
    }
    if distinct.len() > threshold || distinct.len() == present {
        ColumnKind::Numeric
    } else {
        ColumnKind::Categorical
    }
}

fn build_column(name: &str, raw: &[String], kind: ColumnKind) -> Result<Column> {
    match kind {
        ColumnKind::Numeric => {
            let mut values = Vec::with_capacity(raw.len());
            for c in raw {
                if is_missing_cell(c) {
                    values.push(f64::NAN);
                } else {
                    let v = c
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("column `{name}` forced numeric but `{c}` does not parse")))?;
                    values.push(v);
                }
            }
            Ok(Column::Numeric(values))
        }
        ColumnKind::Categorical => {
            let mut lookup: HashMap<&str, u32> = HashMap::new();
            let mut levels = Vec::new();
            let codes = raw
                .iter()
                .map(|c| {
                    if is_missing_cell(c) {
                        return None;
                    }
                    Some(*lookup.entry(c.as_str()).or_insert_with(|| {
                        levels.push(c.clone());
                        (levels.len() - 1) as u32
                    }))
                })
                .collect();
            Ok(Column::Categorical { codes, levels })
        }
    }
}

type ParsedTarget = (Vec<f64>, Task, Option<[String; 2]>);

fn parse_target(raw: &[String], task: Option<Task>) -> Result<ParsedTarget> {
    if let Some(row) = raw.iter().position(|c| is_missing_cell(c)) {
        return Err(Error::InvalidTarget { row, value: raw[row].clone(), reason: "missing target" });
    }
    let mut distinct: Vec<&str> = raw.iter().map(String::as_str).collect::<HashSet<_>>().into_iter().collect();
    let all_numeric = raw.iter().all(|c| c.parse::<f64>().is_ok());
    let task = task.unwrap_or(if distinct.len() == 2 { Task::Binary } else { Task::Regression });
    match task {
        Task::Regression => {
            let mut values = Vec::with_capacity(raw.len());
            for (row, c) in raw.iter().enumerate() {
                let v = c.parse::<f64>().map_err(|_| Error::InvalidTarget {
                    row,
                    value: c.clone(),
                    reason: "regression target must be numeric",
                })?;
                values.push(v);
            }
            Ok((values, task, None))
        }
        Task::Binary => {
            if distinct.len() > 2 {
                return Err(Error::UnsupportedTask(format!(
                    "multiclass target with {} classes",
                    distinct.len()
                )));
            }
            if all_numeric {
                distinct.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
            } else {
                distinct.sort_unstable();
            }
            let zero = distinct[0].to_string();
            let one = distinct.get(1).map(|s| s.to_string()).unwrap_or_else(|| format!("not-{zero}"));
            let values = raw.iter().map(|c| if *c == zero { 0.0 } else { 1.0 }).collect();
            Ok((values, task, Some([zero, one])))
        }
    }
}

/// An ordered set of row indices plus the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIndexSet {
    indices: Vec<usize>,
    pub seed: u64,
}

impl RowIndexSet {
    pub fn new(indices: Vec<usize>, seed: u64) -> Self {
        RowIndexSet { indices, seed }
    }

    /// Validates bounds and uniqueness against a table of `n` rows.
    pub fn checked(indices: Vec<usize>, n: usize, seed: u64) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("row index {i} out of range or duplicated")));
            }
        }
        Ok(RowIndexSet { indices, seed })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn union(&self, other: &RowIndexSet) -> RowIndexSet {
        let mut indices = self.indices.clone();
        indices.extend_from_slice(&other.indices);
        RowIndexSet { indices, seed: self.seed }
    }
}

fn group_by_class(rows: &[usize], labels: &[u32]) -> BTreeMap<u32, Vec<usize>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &r in rows {
        groups.entry(labels[r]).or_default().push(r);
    }
    groups
}

/// Splits all rows of `ds` into disjoint train and validation sets.
pub fn split(ds: &Dataset, valid_ratio: f64, stratify: bool, seed: u64) -> Result<(RowIndexSet, RowIndexSet)> {
    if !(valid_ratio > 0.0 && valid_ratio < 1.0) {
        return Err(Error::invalid(format!("valid_ratio must be in (0,1), got {valid_ratio}")));
    }
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::invalid("need at least 2 rows to split"));
    }
    let mut rng = seed::derived_rng(seed, "split", &[]);
    let mut valid = Vec::new();
    let mut train = Vec::new();
    if stratify {
        let labels = ds.labels().ok_or_else(|| Error::invalid("stratified split requires a classification task"))?;
        let all: Vec<usize> = (0..n).collect();
        for (class, mut rows) in group_by_class(&all, &labels) {
            if rows.len() < 2 {
                return Err(Error::TooFewInClass { class });
            }
            rows.shuffle(&mut rng);
            let take = ((valid_ratio * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
            valid.extend_from_slice(&rows[..take]);
            train.extend_from_slice(&rows[take..]);
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        let take = ((valid_ratio * n as f64).round() as usize).clamp(1, n - 1);
        valid.extend_from_slice(&rows[..take]);
        train.extend_from_slice(&rows[take..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((RowIndexSet::new(train, seed), RowIndexSet::new(valid, seed)))
}

/// Draws `round(ratio * |src|)` rows (at least one) without replacement.
///
/// Selected rows keep their order in `src`. Stratified draws apportion the
/// total across classes by largest remainder, so each class deviates from its
/// exact share by less than one row. `labels` is indexed by dataset row.
pub fn subsample(src: &RowIndexSet, ratio: f64, stratify: bool, labels: Option<&[u32]>, seed: u64) -> Result<RowIndexSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!("subsample ratio must be in (0,1], got {ratio}")));
    }
    if stratify && labels.is_none() {
        return Err(Error::invalid("stratified subsample requested without labels"));
    }
    if src.is_empty() {
        return Err(Error::invalid("cannot subsample an empty row set"));
    }
    if ratio == 1.0 {
        return Ok(RowIndexSet::new(src.indices.clone(), seed));
    }
    let total = ((ratio * src.len() as f64).round() as usize).max(1);
    let mut rng = seed::derived_rng(seed, "subsample", &[]);
    let mut picked: Vec<usize> = if stratify {
        let labels = labels.expect("checked above");
        let groups = group_by_class(&src.indices, labels);
        let exact: Vec<f64> = groups.values().map(|g| g.len() as f64 * total as f64 / src.len() as f64).collect();
        let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..quota.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let mut left = total - quota.iter().sum::<usize>();
        for &g in order.iter().cycle().take(order.len() * 2) {
            if left == 0 {
                break;
            }
            if quota[g] < groups.values().nth(g).map_or(0, Vec::len) {
                quota[g] += 1;
                left -= 1;
            }
        }
        let mut out = Vec::with_capacity(total);
        for (g, rows) in groups.values().enumerate() {
            let mut rows = rows.clone();
            rows.shuffle(&mut rng);
            out.extend_from_slice(&rows[..quota[g]]);
        }
        out
    } else {
        let mut rows = src.indices.clone();
        rows.shuffle(&mut rng);
        rows.truncate(total);
        rows
    };
    let position: HashMap<usize, usize> = src.indices.iter().enumerate().map(|(p, &r)| (r, p)).collect();
    picked.sort_by_key(|r| position[r]);
    Ok(RowIndexSet::new(picked, seed))
}

/// Nested training blocks for successive halving; the last block is the full
/// training set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockSchedule {
    pub rounds: Vec<RowIndexSet>,
}

impl BlockSchedule {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

pub fn make_blocks(train: &RowIndexSet, n_blocks_log2: u32, seed: u64) -> Result<BlockSchedule> {
    let n = train.len();
    let parts = 1usize.checked_shl(n_blocks_log2).filter(|&p| p <= n).ok_or_else(|| {
        Error::invalid(format!("2^{n_blocks_log2} blocks exceed {n} training rows"))
    })?;
    let mut perm = train.indices.clone();
    perm.shuffle(&mut seed::derived_rng(seed, "blocks", &[]));
    let base = ((n as f64 / parts as f64).round() as usize).max(1);
    let rounds = (0..=n_blocks_log2)
        .map(|r| {
            let size = if r == n_blocks_log2 { n } else { (base << r).min(n) };
            let mut rows = perm[..size].to_vec();
            rows.sort_unstable();
            RowIndexSet::new(rows, seed)
        })
        .collect();
    Ok(BlockSchedule { rounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), &LoadOptions::new("y"))
    }

    fn binary_ds(n: usize, ones: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| if i < ones { 1.0 } else { 0.0 }).collect();
        Dataset::new(vec![("x".into(), Column::Numeric(x))], "y", y, Task::Binary).unwrap()
    }

    #[test]
    fn infers_numeric_and_categorical_columns() {
        let ds = load("a,b,y\n1,x,0.5\n2,y,1.0\n").unwrap();
        assert_eq!(ds.features()[0].kind, ColumnKind::Numeric);
        assert_eq!(ds.features()[1].kind, ColumnKind::Categorical);
        assert_eq!(ds.target_name(), "y");

        let ds = load("a,b,y\n1,x,0.5\n2,y,1.0\n2,y,1.5\n").unwrap();
        assert_eq!(ds.n_features(), 2);
        // two distinct numeric values with a repeat is below the threshold
        assert_eq!(ds.features()[0].kind, ColumnKind::Categorical);
        assert_eq!(ds.task(), Task::Regression);
        assert_eq!(ds.target(), &[0.5, 1.0, 1.5]);

        let mut opts = LoadOptions::new("y");
        opts.categorical_threshold = 1;
        let ds = read_csv("a,b,y\n1,x,0.5\n2,y,1.0\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.features()[0].kind, ColumnKind::Numeric);
        assert_eq!(ds.features()[1].kind, ColumnKind::Categorical);
    }

    #[test]
    fn low_cardinality_numbers_are_categorical() {
        let mut text = String::from("a,y\n");
        for i in 0..100 {
            text.push_str(&format!("{},{}\n", i % 2, i));
        }
        let ds = load(&text).unwrap();
        assert_eq!(ds.features()[0].kind, ColumnKind::Categorical);
        assert_eq!(ds.task(), Task::Regression);

        let mut text = String::from("a,y\n");
        for i in 0..100 {
            text.push_str(&format!("{},{}\n", i, i % 2));
        }
        let ds = load(&text).unwrap();
        assert_eq!(ds.features()[0].kind, ColumnKind::Numeric);
        assert_eq!(ds.task(), Task::Binary);
    }

    #[test]
    fn kind_override_wins() {
        let mut opts = LoadOptions::new("y");
        opts.kinds.insert("a".into(), ColumnKind::Numeric);
        let ds = read_csv("a,y\n1,0\n2,1\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.features()[0].kind, ColumnKind::Numeric);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load("a,y\n"), Err(Error::NoRows)));
        assert!(matches!(load("a,b\n1,2\n"), Err(Error::MissingTarget(_))));
        assert!(matches!(load("a,b,y\n,1,2\nNA,2,3\n"), Err(Error::EmptyColumn(c)) if c == "a"));
        assert!(matches!(load("a,y\n1,a\n2,b\n3,c\n"), Err(Error::InvalidTarget { .. })));
        let mut opts = LoadOptions::new("y");
        opts.task = Some(Task::Binary);
        assert!(matches!(read_csv("a,y\n1,a\n2,b\n3,c\n".as_bytes(), &opts), Err(Error::UnsupportedTask(_))));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &LoadOptions::new("y")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn missing_cells_are_first_class() {
        let ds = load("a,b,y\n1,,1\nNA,q,2\n3,r,3\n").unwrap();
        let mut opts = LoadOptions::new("y");
        opts.kinds.insert("a".into(), ColumnKind::Numeric);
        let forced = read_csv("a,b,y\n1,,1\nNA,q,2\n3,r,3\n".as_bytes(), &opts).unwrap();
        assert!(forced.column(0).is_missing(1));
        assert!(ds.column(1).is_missing(0));
        assert!(!ds.column(1).is_missing(1));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = binary_ds(10, 5);
        let (tr, va) = split(&ds, 0.2, false, 7).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
        assert!(tr.indices().iter().all(|i| !va.indices().contains(i)));
        assert_eq!(split(&ds, 0.2, false, 7).unwrap(), (tr, va));
        assert!(split(&ds, 1.0, false, 7).is_err());
    }

    #[test]
    fn stratified_split_balances_classes() {
        let ds = binary_ds(100, 50);
        let (tr, va) = split(&ds, 0.2, true, 3).unwrap();
        let ones = va.indices().iter().filter(|&&i| ds.target()[i] == 1.0).count();
        assert_eq!((va.len(), ones), (20, 10));
        assert_eq!(tr.len(), 80);
        assert!(matches!(split(&binary_ds(10, 1), 0.2, true, 3), Err(Error::TooFewInClass { class: 1 })));
        let reg = Dataset::new(vec![("x".into(), Column::Numeric(vec![0.0; 4]))], "y", vec![1.0; 4], Task::Regression).unwrap();
        assert!(split(&reg, 0.5, true, 0).is_err());
    }

    #[test]
    fn subsample_rules() {
        let src = RowIndexSet::new((0..1000).collect(), 0);
        assert_eq!(subsample(&src, 0.1, false, None, 1).unwrap().len(), 100);
        assert_eq!(subsample(&src, 1.0, false, None, 1).unwrap().indices(), src.indices());
        assert_eq!(subsample(&src, 1e-6, false, None, 1).unwrap().len(), 1);
        assert!(subsample(&src, 0.1, true, None, 1).is_err());

        let labels: Vec<u32> = (0..1000).map(|i| u32::from(i >= 900)).collect();
        let s = subsample(&src, 0.1, true, Some(&labels), 5).unwrap();
        let ones = s.indices().iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!((s.len() - ones, ones), (90, 10));
        assert_eq!(s, subsample(&src, 0.1, true, Some(&labels), 5).unwrap());
    }

    #[test]
    fn blocks_double() {
        let train = RowIndexSet::new((0..800).collect(), 0);
        let b = make_blocks(&train, 3, 11).unwrap();
        let sizes: Vec<usize> = b.rounds.iter().map(RowIndexSet::len).collect();
        assert_eq!(sizes, vec![100, 200, 400, 800]);
        for w in b.rounds.windows(2) {
            assert!(w[0].indices().iter().all(|i| w[1].indices().binary_search(i).is_ok()));
        }
        let single = make_blocks(&train, 0, 11).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.rounds[0].indices(), train.indices());
        assert!(make_blocks(&RowIndexSet::new(vec![0, 1, 2], 0), 2, 0).is_err());
    }
}
