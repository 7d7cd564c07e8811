//! K−1 dummy coding of categorical columns and its probability-based
//! inverse.

use super::{Column, ColumnKind, DataError, Dataset, Result};

/// Describes how one categorical column was expanded into binary columns.
///
/// The first level in canonical order is the excluded (reference) level;
/// `columns[j]` holds the indicator of `levels[j + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DummyCodec {
    pub source: String,
    pub levels: Vec<String>,
    pub columns: Vec<String>,
}

impl DummyCodec {
    pub fn excluded_level(&self) -> &str {
        &self.levels[0]
    }

    /// Back-transform one row of (possibly out-of-range) indicator
    /// imputations to a level index.
    ///
    /// The excluded level scores `1 - sum(probs)`; the highest score wins and
    /// ties go to the earlier level.
    pub fn decode(&self, probs: &[f64]) -> Result<u32> {
        if probs.len() != self.columns.len() {
            return Err(DataError::CodecWidth {
                column: self.source.clone(),
                expected: self.columns.len(),
                found: probs.len(),
            });
        }
        let excluded = 1.0 - probs.iter().sum::<f64>();
        let mut best = (0u32, excluded);
        for (j, &p) in probs.iter().enumerate() {
            if p > best.1 {
                best = (j as u32 + 1, p);
            }
        }
        Ok(best.0)
    }
}

/// Replace each named categorical column by K−1 continuous 0/1 columns named
/// `<column>_<level>`, in level order. Masked source rows are masked on every
/// emitted column.
pub fn dummy_encode(d: &Dataset, columns: &[&str]) -> Result<(Dataset, Vec<DummyCodec>)> {
    for name in columns {
        let c = d.column_by_name(name)?;
        match c.kind() {
            ColumnKind::Continuous => return Err(DataError::NotCategorical(name.to_string())),
            ColumnKind::Categorical { levels } if levels.len() < 2 => {
                return Err(DataError::TooFewLevels { column: name.to_string(), needed: 2, found: levels.len() })
            }
            _ => {}
        }
    }
    let mut out = Vec::with_capacity(d.n_cols());
    let mut codecs = Vec::new();
    for c in d.columns() {
        if !columns.contains(&c.name()) {
            out.push(c.clone());
            continue;
        }
        let levels = c.kind().levels().expect("checked above").to_vec();
        let mut names = Vec::with_capacity(levels.len() - 1);
        for (k, level) in levels.iter().enumerate().skip(1) {
            let name = format!("{}_{}", c.name(), level);
            let cells = c.cells().map(|v| v.map(|v| if v as usize == k { 1.0 } else { 0.0 })).collect();
            out.push(Column::continuous(name.clone(), cells));
            names.push(name);
        }
        codecs.push(DummyCodec { source: c.name().to_string(), levels, columns: names });
    }
    Ok((Dataset::new(out)?, codecs))
}

/// Inverse of [`dummy_encode`]: each codec's indicator columns are collapsed
/// back into one categorical column, placed where the first indicator was.
/// A row masked on any indicator is masked on the result.
pub fn dummy_decode(d: &Dataset, codecs: &[DummyCodec]) -> Result<Dataset> {
    let mut out: Vec<Column> = Vec::with_capacity(d.n_cols());
    let mut consumed = vec![false; d.n_cols()];
    for (j, c) in d.columns().iter().enumerate() {
        if consumed[j] {
            continue;
        }
        let Some(codec) = codecs.iter().find(|k| k.columns.first().map(String::as_str) == Some(c.name())) else {
            out.push(c.clone());
            continue;
        };
        let idx = codec
            .columns
            .iter()
            .map(|n| d.index_of(n).ok_or_else(|| DataError::NoSuchColumn(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        idx.iter().for_each(|&i| consumed[i] = true);
        let mut cells = Vec::with_capacity(d.n_rows());
        let mut probs = vec![0.0; idx.len()];
        for row in 0..d.n_rows() {
            let mut missing = false;
            for (p, &i) in probs.iter_mut().zip(&idx) {
                match d.column(i).get(row) {
                    Some(v) => *p = v,
                    None => missing = true,
                }
            }
            cells.push(if missing { None } else { Some(codec.decode(&probs)?) });
        }
        out.push(Column::categorical(codec.source.clone(), codec.levels.clone(), cells)?);
    }
    Dataset::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoking() -> Dataset {
        let cells = [Some("Smoker"), Some("Not smoker"), Some("Ex-smoker"), None, Some("Smoker")];
        let c = Column::categorical_from_names("smoking", &cells).unwrap();
        let x = Column::from_values("x", vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        Dataset::new(vec![x, c]).unwrap()
    }

    #[test]
    fn three_levels_emit_two_columns_excluding_first_alphabetical() {
        let (enc, codecs) = dummy_encode(&smoking(), &["smoking"]).unwrap();
        assert_eq!(codecs[0].excluded_level(), "Ex-smoker");
        assert_eq!(enc.names(), vec!["x", "smoking_Not smoker", "smoking_Smoker"]);
        assert_eq!(enc.column(1).get(1), Some(1.0));
        assert_eq!(enc.column(2).get(1), Some(0.0));
        assert_eq!(enc.column(1).get(2), Some(0.0));
        assert_eq!(enc.column(2).get(2), Some(0.0));
    }

    #[test]
    fn masked_source_masks_every_emitted_column() {
        let (enc, _) = dummy_encode(&smoking(), &["smoking"]).unwrap();
        assert!(enc.column(1).is_missing(3));
        assert!(enc.column(2).is_missing(3));
    }

    #[test]
    fn binary_column_emits_one_column() {
        let c = Column::categorical_from_names("b", &[Some("no"), Some("yes")]).unwrap();
        let (enc, codecs) = dummy_encode(&Dataset::new(vec![c]).unwrap(), &["b"]).unwrap();
        assert_eq!(enc.n_cols(), 1);
        assert_eq!(codecs[0].columns, vec!["b_yes"]);
    }

    #[test]
    fn encode_errors() {
        assert!(matches!(dummy_encode(&smoking(), &["nope"]), Err(DataError::NoSuchColumn(_))));
        assert!(matches!(dummy_encode(&smoking(), &["x"]), Err(DataError::NotCategorical(_))));
    }

    fn codec3() -> DummyCodec {
        DummyCodec {
            source: "c".into(),
            levels: vec!["a".into(), "b".into(), "c".into()],
            columns: vec!["c_b".into(), "c_c".into()],
        }
    }

    #[test]
    fn decode_excluded_level_from_residual_probability() {
        // 1 - (0.2 + 0.3) = 0.5 beats both encoded scores
        assert_eq!(codec3().decode(&[0.2, 0.3]).unwrap(), 0);
    }

    #[test]
    fn decode_argmax_and_ties() {
        assert_eq!(codec3().decode(&[1.0, 0.0]).unwrap(), 1);
        // excluded scores 0.0; the two 0.5 scores tie and the earlier level wins
        assert_eq!(codec3().decode(&[0.5, 0.5]).unwrap(), 1);
        assert!(matches!(codec3().decode(&[0.5]), Err(DataError::CodecWidth { .. })));
    }

    #[test]
    fn decode_accepts_out_of_range_regression_output() {
        assert_eq!(codec3().decode(&[-0.4, 1.3]).unwrap(), 2);
    }

    #[test]
    fn encode_decode_round_trip() {
        let d = smoking();
        let (enc, codecs) = dummy_encode(&d, &["smoking"]).unwrap();
        assert_eq!(dummy_decode(&enc, &codecs).unwrap(), d);
    }
}
