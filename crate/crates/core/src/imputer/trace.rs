use std::io::Write;

use serde::Serialize;

use super::{ErrorSource, ImputeError, Result};

/// One error flavour (apparent or out-of-bag) for one variable and
/// iteration. `nmse` is always present; the others depend on the variable
/// type. `f1` is filled for binary variables, `macro_f1` for variables with
/// more than two levels.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorSet {
    pub nmse: f64,
    pub mse: Option<f64>,
    pub mer: Option<f64>,
    pub f1: Option<f64>,
    pub macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableErrors {
    pub variable: String,
    pub column: usize,
    /// 1-based.
    pub iteration: usize,
    pub categorical: bool,
    /// No forest was trained (no observed rows or no usable predictors); the
    /// variable keeps its initialization and scores NMSE 1.
    pub init_only: bool,
    pub apparent: ErrorSet,
    pub oob: ErrorSet,
}

/// Everything measured while fitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorTrace {
    pub records: Vec<VariableErrors>,
    /// Weight of each variable in the imputation sequence.
    pub weights: Vec<f64>,
    /// Global weighted NMSE per iteration (index 0 = iteration 1).
    pub global_apparent: Vec<f64>,
    pub global_oob: Vec<f64>,
}

/// `sum_j w_j * nmse_j / sum_j w_j`.
pub fn global_nmse(nmse: &[f64], weights: &[f64]) -> Result<f64> {
    if nmse.len() != weights.len() {
        return Err(ImputeError::Config(format!("{} NMSE values for {} weights", nmse.len(), weights.len())));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(ImputeError::NothingToConverge);
    }
    Ok(nmse.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(e, w)| e * w).sum::<f64>() / total)
}

impl ErrorTrace {
    pub fn iterations(&self) -> usize {
        self.global_oob.len()
    }

    pub fn global(&self, source: ErrorSource) -> &[f64] {
        match source {
            ErrorSource::Oob => &self.global_oob,
            ErrorSource::Apparent => &self.global_apparent,
        }
    }

    pub fn record(&self, column: usize, iteration: usize) -> Option<&VariableErrors> {
        self.records.iter().find(|r| r.column == column && r.iteration == iteration)
    }

    /// One row per (variable, iteration) with apparent/OOB metrics and the
    /// iteration's global NMSE. Not-applicable metrics are left empty.
    pub fn write_csv<W: Write>(&self, writer: W, n_iter: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_io = |e: csv::Error| ImputeError::Io(std::io::Error::other(e));
        w.write_record([
            "variable",
            "iteration",
            "type",
            "init_only",
            "apparent_mse",
            "oob_mse",
            "apparent_nmse",
            "oob_nmse",
            "apparent_mer",
            "oob_mer",
            "apparent_f1",
            "oob_f1",
            "apparent_macro_f1",
            "oob_macro_f1",
            "global_apparent_nmse",
            "global_oob_nmse",
            "retained",
        ])
        .map_err(to_io)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
        for r in &self.records {
            let i = r.iteration - 1;
            w.write_record([
                r.variable.clone(),
                r.iteration.to_string(),
                if r.categorical { "categorical" } else { "continuous" }.to_string(),
                r.init_only.to_string(),
                opt(r.apparent.mse),
                opt(r.oob.mse),
                format!("{}", r.apparent.nmse),
                format!("{}", r.oob.nmse),
                opt(r.apparent.mer),
                opt(r.oob.mer),
                opt(r.apparent.f1),
                opt(r.oob.f1),
                opt(r.apparent.macro_f1),
                opt(r.oob.macro_f1),
                format!("{}", self.global_apparent[i]),
                format!("{}", self.global_oob[i]),
                (r.iteration <= n_iter).to_string(),
            ])
            .map_err(to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_nmse_examples() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(global_nmse(&[0.7], &[0.2]).unwrap(), 0.7));
        assert!(close(global_nmse(&[0.5, 1.5], &[0.3, 0.3]).unwrap(), 1.0));
        assert!(close(global_nmse(&[0.4, 123.0], &[0.5, 0.0]).unwrap(), 0.4));
        assert!(matches!(global_nmse(&[0.4], &[0.0]), Err(ImputeError::NothingToConverge)));
    }
}
