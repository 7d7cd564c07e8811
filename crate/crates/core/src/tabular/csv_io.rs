use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Column, ColumnKind, DataError, Dataset, Result};

/// Token written for masked cells.
pub const MISSING_TOKEN_OUT: &str = "NA";

#[derive(Debug, Clone)]
pub struct ReadOptions {
    /// Explicit `(name, kind)` for every column, in file order.
    pub schema: Option<Vec<(String, ColumnKind)>>,
    /// Columns to read as categorical even when every cell parses as a number.
    /// Ignored when `schema` is given.
    pub categorical: Vec<String>,
    /// Cells equal to one of these (exact, case-sensitive) are missing.
    pub missing_tokens: Vec<String>,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions { schema: None, categorical: Vec::new(), missing_tokens: vec![String::new(), "NA".to_string()] }
    }
}

impl ReadOptions {
    pub fn with_schema(schema: Vec<(String, ColumnKind)>) -> Self {
        ReadOptions { schema: Some(schema), ..Default::default() }
    }
}

/// Header plus unparsed cells, rectangular.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

pub fn read_raw_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    RawTable::from_reader(file)
}

impl RawTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<RawTable> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(DataError::Ragged { row: i + 1, found: rec.len(), expected: header.len() });
            }
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(RawTable { header, rows })
    }

    fn column_cells<'a>(&'a self, j: usize, opts: &'a ReadOptions) -> impl Iterator<Item = Option<&'a str>> + 'a {
        self.rows.iter().map(move |r| {
            let s = r[j].as_str();
            (!opts.missing_tokens.iter().any(|t| t == s)).then_some(s)
        })
    }

    pub fn to_dataset(&self, opts: &ReadOptions) -> Result<Dataset> {
        if let Some(schema) = &opts.schema {
            if schema.len() != self.header.len() {
                return Err(DataError::SchemaWidth { schema: schema.len(), file: self.header.len() });
            }
            for (index, ((name, _), found)) in schema.iter().zip(&self.header).enumerate() {
                if name != found {
                    return Err(DataError::SchemaName { index, expected: name.clone(), found: found.clone() });
                }
            }
        }
        let mut columns = Vec::with_capacity(self.header.len());
        for (j, name) in self.header.iter().enumerate() {
            let cells: Vec<Option<&str>> = self.column_cells(j, opts).collect();
            let declared = opts.schema.as_ref().map(|s| &s[j].1);
            let column = match declared {
                Some(ColumnKind::Continuous) => parse_continuous(name, &cells)?,
                Some(ColumnKind::Categorical { levels }) => parse_declared_categorical(name, levels, &cells)?,
                None => {
                    let forced = opts.categorical.iter().any(|c| c == name);
                    let numeric = cells.iter().flatten().all(|s| s.trim().parse::<f64>().is_ok());
                    if numeric && !forced {
                        parse_continuous(name, &cells)?
                    } else {
                        Column::categorical_from_names(name.clone(), &cells)?
                    }
                }
            };
            columns.push(column);
        }
        Dataset::new(columns)
    }
}

fn parse_continuous(name: &str, cells: &[Option<&str>]) -> Result<Column> {
    let parsed = cells
        .iter()
        .enumerate()
        .map(|(row, c)| {
            c.map(|s| {
                s.trim().parse::<f64>().map_err(|_| DataError::Parse {
                    column: name.to_string(),
                    row: row + 1,
                    value: s.to_string(),
                })
            })
            .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Column::continuous(name, parsed))
}

fn parse_declared_categorical(name: &str, levels: &[String], cells: &[Option<&str>]) -> Result<Column> {
    let codes = cells
        .iter()
        .map(|c| {
            c.map(|s| {
                levels
                    .binary_search_by(|l| l.as_str().cmp(s))
                    .map(|i| i as u32)
                    .map_err(|_| DataError::UnknownLevel { column: name.to_string(), level: s.to_string() })
            })
            .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Column::categorical(name, levels.to_vec(), codes)
}

/// Read a CSV file with a header row. Without a schema, all-numeric columns
/// become continuous and everything else categorical with sorted levels.
pub fn read_csv(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<Dataset> {
    read_raw_csv(path)?.to_dataset(opts)
}

pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_csv_to(d, std::io::BufWriter::new(file))
}

/// Text of one cell as written to CSV: `NA` when masked, the level name for
/// categorical cells, shortest round-trip formatting for numbers.
pub fn format_cell(c: &Column, row: usize) -> String {
    match (c.kind(), c.get(row)) {
        (_, None) => MISSING_TOKEN_OUT.to_string(),
        (ColumnKind::Continuous, Some(v)) => format!("{v}"),
        (ColumnKind::Categorical { levels }, Some(v)) => levels[v as usize].clone(),
    }
}

/// Serialize with `NA` for masked cells and shortest round-trip formatting
/// for numbers.
pub fn write_csv_to<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(d.names())?;
    let mut record: Vec<String> = Vec::with_capacity(d.n_cols());
    for row in 0..d.n_rows() {
        record.clear();
        record.extend(d.columns().iter().map(|c| format_cell(c, row)));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| DataError::Io { path: "<csv writer>".into(), source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, opts: &ReadOptions) -> Result<Dataset> {
        RawTable::from_reader(text.as_bytes())?.to_dataset(opts)
    }

    #[test]
    fn na_token_masks_one_cell() {
        let d = parse("a,b\n1,x\nNA,y\n3,x\n", &ReadOptions::default()).unwrap();
        let masked: usize = d.columns().iter().map(Column::n_missing).sum();
        assert_eq!(masked, 1);
        assert!(d.column(0).is_missing(1));
    }

    #[test]
    fn empty_cell_is_missing_too() {
        let d = parse("a,b\n1,\n2,3\n", &ReadOptions::default()).unwrap();
        assert!(d.column(1).is_missing(0));
        assert!(!d.column(1).is_missing(1));
    }

    #[test]
    fn numeric_column_is_continuous() {
        let d = parse("v\n1.5\n2.0\n3.1\n", &ReadOptions::default()).unwrap();
        assert_eq!(d.column(0).kind(), &ColumnKind::Continuous);
        assert_eq!(d.column(0).observed().collect::<Vec<_>>(), vec![1.5, 2.0, 3.1]);
    }

    #[test]
    fn text_column_is_categorical_with_sorted_levels() {
        let d = parse("c\na\nb\na\n", &ReadOptions::default()).unwrap();
        let c = d.column(0);
        assert_eq!(c.kind().levels().unwrap(), ["a", "b"]);
        assert_eq!((0..3).map(|r| c.level(r).unwrap()).collect::<Vec<_>>(), vec![0, 1, 0]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(parse("a,b\n1,2\n3\n", &ReadOptions::default()), Err(DataError::Ragged { row: 2, .. })));
    }

    #[test]
    fn declared_continuous_must_parse() {
        let opts = ReadOptions::with_schema(vec![("a".into(), ColumnKind::Continuous)]);
        assert!(matches!(parse("a\n1\nx\n", &opts), Err(DataError::Parse { row: 2, .. })));
    }

    #[test]
    fn schema_width_checked() {
        let opts = ReadOptions::with_schema(vec![("a".into(), ColumnKind::Continuous)]);
        assert!(matches!(parse("a,b\n1,2\n", &opts), Err(DataError::SchemaWidth { .. })));
    }

    #[test]
    fn unseen_level_is_an_error_under_schema() {
        let kind = ColumnKind::categorical(["a", "b"]).unwrap();
        let opts = ReadOptions::with_schema(vec![("c".into(), kind)]);
        assert!(matches!(parse("c\na\nz\n", &opts), Err(DataError::UnknownLevel { .. })));
    }

    #[test]
    fn forced_categorical_numbers() {
        let opts = ReadOptions { categorical: vec!["y".into()], ..Default::default() };
        let d = parse("y\n1\n0\n1\n", &opts).unwrap();
        assert_eq!(d.column(0).kind().levels().unwrap(), ["0", "1"]);
    }

    #[test]
    fn write_then_read_preserves_cells() {
        let text = "x,c\n0.1,\"with, comma\"\nNA,b\n-2.5e-7,NA\n";
        let d = parse(text, &ReadOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap(), &ReadOptions::default()).unwrap();
        assert_eq!(d, back);
    }
}
