//! Mixed-type tabular data with an explicit missingness mask.
//!
//! A [`Dataset`] is a list of named [`Column`]s. Continuous cells are stored
//! as `f64`; categorical cells are stored as level indices (also as `f64`,
//! always integral) into the column's sorted level list. Every column carries
//! a boolean mask where `true` marks a missing cell. Masked cells hold an
//! unspecified placeholder and are only reachable through accessors that
//! return `Option`.

mod csv_io;
mod dummy;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng;

pub use csv_io::{format_cell, read_csv, read_raw_csv, write_csv, write_csv_to, RawTable, ReadOptions, MISSING_TOKEN_OUT};
pub use dummy::{dummy_decode, dummy_encode, DummyCodec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("column '{column}', row {row}: cannot parse '{value}' as a number")]
    Parse { column: String, row: usize, value: String },
    #[error("schema has {schema} columns but the file has {file}")]
    SchemaWidth { schema: usize, file: usize },
    #[error("schema column {index} is '{expected}' but the file has '{found}'")]
    SchemaName { index: usize, expected: String, found: String },
    #[error("column '{column}': level '{level}' is not one of the declared levels")]
    UnknownLevel { column: String, level: String },
    #[error("column '{0}' not found")]
    NoSuchColumn(String),
    #[error("column '{0}' is not categorical")]
    NotCategorical(String),
    #[error("column '{column}' needs at least {needed} levels, has {found}")]
    TooFewLevels { column: String, needed: usize, found: usize },
    #[error("invalid level list for '{0}': levels must be non-empty, sorted and distinct")]
    InvalidLevels(String),
    #[error("column '{column}' has {found} rows, expected {expected}")]
    Length { column: String, found: usize, expected: usize },
    #[error("duplicate column name '{0}'")]
    DuplicateName(String),
    #[error("level index {index} out of range for column '{column}'")]
    LevelOutOfRange { column: String, index: usize },
    #[error("expected {expected} values for codec '{column}', got {found}")]
    CodecWidth { column: String, expected: usize, found: usize },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("split of {n} rows with test fraction {fraction} leaves an empty partition")]
    EmptyPartition { n: usize, fraction: f64 },
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    /// Levels are non-empty, distinct and in lexicographic (byte) order.
    Categorical { levels: Vec<String> },
}

impl ColumnKind {
    /// Build a categorical kind from arbitrary level names, sorting and
    /// de-duplicating them.
    pub fn categorical<I, S>(levels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut levels: Vec<String> = levels.into_iter().map(Into::into).collect();
        levels.sort();
        levels.dedup();
        if levels.is_empty() {
            return Err(DataError::InvalidLevels(String::new()));
        }
        Ok(ColumnKind::Categorical { levels })
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match self {
            ColumnKind::Categorical { levels } => Some(levels),
            ColumnKind::Continuous => None,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels().map_or(0, <[String]>::len)
    }
}

fn levels_are_canonical(levels: &[String]) -> bool {
    !levels.is_empty() && levels.windows(2).all(|w| w[0] < w[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    kind: ColumnKind,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl Column {
    pub fn continuous(name: impl Into<String>, cells: Vec<Option<f64>>) -> Self {
        let mask = cells.iter().map(Option::is_none).collect();
        let values = cells.into_iter().map(|c| c.unwrap_or(0.0)).collect();
        Column { name: name.into(), kind: ColumnKind::Continuous, values, mask }
    }

    /// Fully observed continuous column.
    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Self {
        let mask = vec![false; values.len()];
        Column { name: name.into(), kind: ColumnKind::Continuous, values, mask }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>, cells: Vec<Option<u32>>) -> Result<Self> {
        let name = name.into();
        if !levels_are_canonical(&levels) {
            return Err(DataError::InvalidLevels(name));
        }
        if let Some(&bad) = cells.iter().flatten().find(|&&c| c as usize >= levels.len()) {
            return Err(DataError::LevelOutOfRange { column: name, index: bad as usize });
        }
        let mask = cells.iter().map(Option::is_none).collect();
        let values = cells.into_iter().map(|c| c.map_or(0.0, f64::from)).collect();
        Ok(Column { name, kind: ColumnKind::Categorical { levels }, values, mask })
    }

    /// Categorical column from level names; the level list is the sorted set
    /// of names that occur. Fails when no cell is observed.
    pub fn categorical_from_names<S: AsRef<str>>(name: impl Into<String>, cells: &[Option<S>]) -> Result<Self> {
        let name = name.into();
        let levels = match ColumnKind::categorical(cells.iter().flatten().map(|s| s.as_ref().to_string())) {
            Ok(ColumnKind::Categorical { levels }) => levels,
            _ => return Err(DataError::InvalidLevels(name)),
        };
        let codes = cells
            .iter()
            .map(|c| c.as_ref().map(|s| levels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap() as u32))
            .collect();
        Column::categorical(name, levels, codes)
    }

    pub(crate) fn from_parts(name: String, kind: ColumnKind, values: Vec<f64>, mask: Vec<bool>) -> Self {
        debug_assert_eq!(values.len(), mask.len());
        Column { name, kind, values, mask }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ColumnKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.mask[row]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Cell value; categorical cells yield their level index.
    pub fn get(&self, row: usize) -> Option<f64> {
        (!self.mask[row]).then(|| self.values[row])
    }

    pub fn level(&self, row: usize) -> Option<u32> {
        match self.kind {
            ColumnKind::Categorical { .. } => self.get(row).map(|v| v as u32),
            ColumnKind::Continuous => None,
        }
    }

    pub fn level_name(&self, row: usize) -> Option<&str> {
        let levels = self.kind.levels()?;
        self.level(row).map(|l| levels[l as usize].as_str())
    }

    pub fn cells(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.values.iter().zip(&self.mask).map(|(&v, &m)| (!m).then_some(v))
    }

    pub fn observed(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells().flatten()
    }

    /// Placeholder-bearing raw storage, for crate-internal consumers that
    /// track the mask themselves.
    pub(crate) fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn rename(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn take_rows(&self, rows: &[usize]) -> Column {
        Column {
            name: self.name.clone(),
            kind: self.kind.clone(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
            mask: rows.iter().map(|&r| self.mask[r]).collect(),
        }
    }

    /// Copy with `mask` applied on top of the current one.
    pub fn with_extra_mask(&self, extra: &[bool]) -> Column {
        let mut out = self.clone();
        for (m, &e) in out.mask.iter_mut().zip(extra) {
            *m |= e;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        let mut seen = HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(DataError::Length { column: c.name.clone(), found: c.len(), expected: n_rows });
            }
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::DuplicateName(c.name.clone()));
            }
        }
        Ok(Dataset { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_by_name(&self, name: &str) -> Result<&Column> {
        self.index_of(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| DataError::NoSuchColumn(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn into_columns(self) -> Vec<Column> {
        self.columns
    }

    /// Fraction of masked cells per column.
    pub fn missing_proportions(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| if self.n_rows == 0 { 0.0 } else { c.n_missing() as f64 / self.n_rows as f64 })
            .collect()
    }

    pub fn n_missing(&self) -> usize {
        self.columns.iter().map(Column::n_missing).sum()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset { columns: self.columns.iter().map(|c| c.take_rows(rows)).collect(), n_rows: rows.len() }
    }

    pub fn select_columns(&self, names: &[&str]) -> Result<Dataset> {
        let columns = names
            .iter()
            .map(|n| self.column_by_name(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(columns)
    }

    /// Copy without the named columns. Unknown names are an error.
    pub fn drop_columns(&self, names: &[&str]) -> Result<Dataset> {
        for n in names {
            self.column_by_name(n)?;
        }
        let columns = self.columns.iter().filter(|c| !names.contains(&c.name.as_str())).cloned().collect();
        Dataset::new(columns)
    }

    pub fn with_column(&self, column: Column) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        columns.push(column);
        Dataset::new(columns)
    }

    /// Copy with column `index` replaced.
    pub fn replace_column(&self, index: usize, column: Column) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        columns[index] = column;
        Dataset::new(columns)
    }

    /// Copy with every mask cleared; caller guarantees the stored values are
    /// meaningful.
    pub(crate) fn unmasked(columns: Vec<Column>) -> Dataset {
        let columns: Vec<Column> = columns
            .into_iter()
            .map(|mut c| {
                c.mask.iter_mut().for_each(|m| *m = false);
                c
            })
            .collect();
        Dataset::new(columns).expect("columns already validated")
    }

    /// Row-wise copy of the missingness pattern: `masks[col][row]`.
    pub fn mask_matrix(&self) -> Vec<Vec<bool>> {
        self.columns.iter().map(|c| c.mask.clone()).collect()
    }
}

/// Random disjoint row partition into (train, test). Each side keeps the
/// original row order. `test_fraction` is commonly 1/3.
pub fn train_test_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::BadFraction(test_fraction));
    }
    let n = d.n_rows();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(DataError::EmptyPartition { n, fraction: test_fraction });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng_from_seed(seed));
    let (test, train) = order.split_at_mut(n_test);
    test.sort_unstable();
    train.sort_unstable();
    Ok((d.select_rows(train), d.select_rows(test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = Column::continuous("x", (0..10).map(|i| if i < 3 { None } else { Some(i as f64) }).collect());
        let full = Column::from_values("full", (0..10).map(f64::from).collect());
        let none = Column::continuous("none", vec![None; 10]);
        Dataset::new(vec![x, full, none]).unwrap()
    }

    #[test]
    fn missing_proportions_per_column() {
        assert_eq!(toy().missing_proportions(), vec![0.3, 0.0, 1.0]);
    }

    #[test]
    fn masked_cells_read_as_none() {
        let d = toy();
        assert_eq!(d.column(0).get(0), None);
        assert_eq!(d.column(0).get(5), Some(5.0));
    }

    #[test]
    fn rejects_unequal_lengths_and_duplicate_names() {
        let a = Column::from_values("a", vec![1.0, 2.0]);
        let b = Column::from_values("b", vec![1.0]);
        assert!(matches!(Dataset::new(vec![a.clone(), b]), Err(DataError::Length { .. })));
        assert!(matches!(Dataset::new(vec![a.clone(), a]), Err(DataError::DuplicateName(_))));
    }

    #[test]
    fn categorical_levels_must_be_canonical() {
        let bad = Column::categorical("c", vec!["b".into(), "a".into()], vec![Some(0)]);
        assert!(matches!(bad, Err(DataError::InvalidLevels(_))));
        let out = Column::categorical("c", vec!["a".into()], vec![Some(1)]);
        assert!(matches!(out, Err(DataError::LevelOutOfRange { .. })));
    }

    #[test]
    fn categorical_from_names_sorts_levels() {
        let c = Column::categorical_from_names("c", &[Some("b"), Some("a"), None, Some("b")]).unwrap();
        assert_eq!(c.kind().levels().unwrap(), ["a", "b"]);
        assert_eq!(c.level(0), Some(1));
        assert_eq!(c.level(2), None);
        assert_eq!(c.level_name(1), Some("a"));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let d = Dataset::new(vec![Column::from_values("id", (0..9).map(f64::from).collect())]).unwrap();
        let (train, test) = train_test_split(&d, 1.0 / 3.0, 5).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (6, 3));
        let mut ids: Vec<f64> = train.column(0).observed().chain(test.column(0).observed()).collect();
        ids.sort_by(f64::total_cmp);
        assert_eq!(ids, (0..9).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_seeded() {
        let d = Dataset::new(vec![Column::from_values("id", (0..4000).map(f64::from).collect())]).unwrap();
        let (a, _) = train_test_split(&d, 1.0 / 3.0, 11).unwrap();
        let (b, _) = train_test_split(&d, 1.0 / 3.0, 11).unwrap();
        let (c, _) = train_test_split(&d, 1.0 / 3.0, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let d = Dataset::new(vec![Column::from_values("id", vec![1.0, 2.0])]).unwrap();
        assert!(matches!(train_test_split(&d, 0.0, 1), Err(DataError::BadFraction(_))));
        assert!(matches!(train_test_split(&d, 0.1, 1), Err(DataError::EmptyPartition { .. })));
    }
}
