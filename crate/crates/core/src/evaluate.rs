//! Scoring imputations against the truth, and the repeated
//! split / ampute / fit / impute / score loop.

use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::ampute::{ampute, AmputationSpec, AmputeError};
use crate::imputer::{fit, transform, ImputeError, ImputerConfig};
use crate::metrics;
use crate::rng::derive_seed;
use crate::tabular::{train_test_split, ColumnKind, DataError, Dataset};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Ampute(#[from] AmputeError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no repetitions requested")]
    NoRepetitions,
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Error of one column over its originally masked cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableScore {
    pub variable: String,
    pub categorical: bool,
    pub n_masked: usize,
    /// `None` when the masked truth has no spread (NMSE undefined).
    pub nmse: Option<f64>,
    pub mer: Option<f64>,
}

fn check_shapes(truth: &Dataset, other: &Dataset, what: &str) -> Result<()> {
    if truth.n_rows() != other.n_rows() || truth.n_cols() != other.n_cols() {
        return Err(EvalError::Shape(format!(
            "truth is {}x{}, {what} is {}x{}",
            truth.n_rows(),
            truth.n_cols(),
            other.n_rows(),
            other.n_cols()
        )));
    }
    for (a, b) in truth.columns().iter().zip(other.columns()) {
        if a.name() != b.name() || a.kind() != b.kind() {
            return Err(EvalError::Shape(format!("column '{}' differs in name or type in {what}", a.name())));
        }
    }
    Ok(())
}

/// Per-column error of `imputed` against `truth` on the cells that are
/// masked in `amputed`. Continuous columns get NMSE with the masked truth's
/// mean as reference; categorical columns get MER and the Brier-based NMSE
/// of the hard imputations against the masked truth's class proportions.
/// Columns without masked cells are left out.
pub fn score_imputation(truth: &Dataset, amputed: &Dataset, imputed: &Dataset) -> Result<Vec<VariableScore>> {
    check_shapes(truth, amputed, "amputed data")?;
    check_shapes(truth, imputed, "imputed data")?;
    let mut scores = Vec::new();
    for ((t, a), i) in truth.columns().iter().zip(amputed.columns()).zip(imputed.columns()) {
        let rows: Vec<usize> = (0..truth.n_rows()).filter(|&r| a.is_missing(r)).collect();
        if rows.is_empty() {
            continue;
        }
        let cell = |c: &crate::tabular::Column, r: usize, what: &str| {
            c.get(r).ok_or_else(|| EvalError::Shape(format!("'{}' row {r} is missing in {what}", c.name())))
        };
        let truth_v = rows.iter().map(|&r| cell(t, r, "truth")).collect::<Result<Vec<_>>>()?;
        let imputed_v = rows.iter().map(|&r| cell(i, r, "imputed data")).collect::<Result<Vec<_>>>()?;
        let score = match t.kind() {
            ColumnKind::Continuous => VariableScore {
                variable: t.name().to_string(),
                categorical: false,
                n_masked: rows.len(),
                nmse: metrics::nmse_continuous(&truth_v, &imputed_v, metrics::mean(&truth_v)).ok(),
                mer: None,
            },
            ColumnKind::Categorical { levels } => {
                let k = levels.len();
                let tl: Vec<u32> = truth_v.iter().map(|&v| v as u32).collect();
                let il: Vec<u32> = imputed_v.iter().map(|&v| v as u32).collect();
                let one_hot: Vec<f64> =
                    il.iter().flat_map(|&c| (0..k).map(move |j| if j == c as usize { 1.0 } else { 0.0 })).collect();
                let props = metrics::class_proportions(&tl, k);
                VariableScore {
                    variable: t.name().to_string(),
                    categorical: true,
                    n_masked: rows.len(),
                    nmse: metrics::nmse_categorical(&tl, &one_hot, k, &props).ok(),
                    mer: metrics::mer(&tl, &il).ok(),
                }
            }
        };
        scores.push(score);
    }
    Ok(scores)
}

/// Linear-interpolation quantile of a non-empty sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub repetitions: usize,
    pub seed: u64,
    pub test_fraction: f64,
    /// Template; its seed is replaced per repetition and split side.
    pub amputation: AmputationSpec,
    /// Template; its seed is replaced per repetition.
    pub imputer: ImputerConfig,
    /// Columns kept out of imputation (typically the outcome).
    pub exclude: Vec<String>,
}

pub const METHOD_FOREST: &str = "rf_impute";
pub const METHOD_BASELINE: &str = "mean_mode";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub seed: u64,
    pub n_iter: usize,
    pub forest: Vec<VariableScore>,
    pub baseline: Vec<VariableScore>,
    /// Per-variable OOB NMSE of the retained iteration (iteration 1 when no
    /// iteration was retained).
    pub oob_nmse: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub variable: String,
    pub method: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub repetitions: Vec<RepetitionResult>,
    pub test_nmse: Vec<Summary>,
    pub oob_nmse: Vec<Summary>,
    pub n_iter: Vec<usize>,
}

/// Wall-clock timings kept apart from the report so the report stays
/// reproducible.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub repetition: usize,
    pub fit_seconds: f64,
    pub impute_seconds: f64,
    pub baseline_fit_seconds: f64,
    pub baseline_impute_seconds: f64,
}

fn summarize(variable: &str, method: &str, values: &[f64]) -> Summary {
    let (q1, q3) = (quantile(values, 0.25), quantile(values, 0.75));
    Summary { variable: variable.into(), method: method.into(), median: median(values), q1, q3, iqr: q3 - q1, n: values.len() }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Run `cfg.repetitions` rounds on a complete dataset. Repetition `r` uses
/// its own seed derived from `cfg.seed`, so results do not depend on how
/// many repetitions run.
pub fn benchmark(complete: &Dataset, cfg: &BenchmarkConfig) -> Result<(BenchmarkReport, Vec<Timing>)> {
    if cfg.repetitions == 0 {
        return Err(EvalError::NoRepetitions);
    }
    let exclude: Vec<&str> = cfg.exclude.iter().map(String::as_str).collect();
    let mut repetitions = Vec::new();
    let mut timings = Vec::new();
    for r in 0..cfg.repetitions {
        let seed = derive_seed(cfg.seed, &[r as u64]);
        let (train, test) = train_test_split(complete, cfg.test_fraction, seed)?;
        let mut spec = cfg.amputation.clone();
        spec.seed = derive_seed(seed, &[1]);
        let (train_a, _) = ampute(&train, &spec)?;
        spec.seed = derive_seed(seed, &[2]);
        let (test_a, _) = ampute(&test, &spec)?;
        let (train_a, test_a, test_truth) =
            (train_a.drop_columns(&exclude)?, test_a.drop_columns(&exclude)?, test.drop_columns(&exclude)?);

        let imputer = ImputerConfig { seed: derive_seed(seed, &[3]), ..cfg.imputer.clone() };
        let (fitted, fit_time) = timed(|| fit(&train_a, &imputer));
        let (_, model) = fitted?;
        let (imputed, impute_time) = timed(|| transform(&model, &test_a));
        let forest = score_imputation(&test_truth, &test_a, &imputed?)?;

        let mean_mode = ImputerConfig { max_iterations: 0, ..imputer };
        let (fitted, baseline_fit_time) = timed(|| fit(&train_a, &mean_mode));
        let (_, baseline_model) = fitted?;
        let (imputed, baseline_impute_time) = timed(|| transform(&baseline_model, &test_a));
        let baseline = score_imputation(&test_truth, &test_a, &imputed?)?;

        let iteration = model.n_iter().max(1);
        let oob_nmse = model
            .sequence()
            .iter()
            .filter(|&&c| train_a.column(c).n_missing() > 0)
            .filter_map(|&c| model.trace().record(c, iteration).map(|rec| (rec.variable.clone(), rec.oob.nmse)))
            .collect();
        repetitions.push(RepetitionResult { repetition: r, seed, n_iter: model.n_iter(), forest, baseline, oob_nmse });
        timings.push(Timing {
            repetition: r,
            fit_seconds: fit_time.as_secs_f64(),
            impute_seconds: impute_time.as_secs_f64(),
            baseline_fit_seconds: baseline_fit_time.as_secs_f64(),
            baseline_impute_seconds: baseline_impute_time.as_secs_f64(),
        });
    }

    let mut variables: Vec<String> = Vec::new();
    for rep in &repetitions {
        for s in &rep.forest {
            if !variables.contains(&s.variable) {
                variables.push(s.variable.clone());
            }
        }
    }
    let collect = |pick: &dyn Fn(&RepetitionResult) -> Option<f64>| -> Vec<f64> { repetitions.iter().filter_map(pick).collect() };
    let mut test_nmse = Vec::new();
    let mut oob_nmse = Vec::new();
    for v in &variables {
        let find = |scores: &[VariableScore]| scores.iter().find(|s| &s.variable == v).and_then(|s| s.nmse);
        for (method, values) in [
            (METHOD_FOREST, collect(&|rep| find(&rep.forest))),
            (METHOD_BASELINE, collect(&|rep| find(&rep.baseline))),
        ] {
            if !values.is_empty() {
                test_nmse.push(summarize(v, method, &values));
            }
        }
        let oob = collect(&|rep| rep.oob_nmse.iter().find(|(name, _)| name == v).map(|(_, e)| *e));
        if !oob.is_empty() {
            oob_nmse.push(summarize(v, METHOD_FOREST, &oob));
        }
    }
    let n_iter = repetitions.iter().map(|r| r.n_iter).collect();
    Ok((BenchmarkReport { repetitions, test_nmse, oob_nmse, n_iter }, timings))
}

impl BenchmarkReport {
    pub fn test_summary(&self, variable: &str, method: &str) -> Option<&Summary> {
        self.test_nmse.iter().find(|s| s.variable == variable && s.method == method)
    }

    pub fn oob_summary(&self, variable: &str) -> Option<&Summary> {
        self.oob_nmse.iter().find(|s| s.variable == variable)
    }

    /// Median over repetitions of `|OOB NMSE - test NMSE|` for a variable.
    pub fn median_oob_gap(&self, variable: &str) -> Option<f64> {
        let gaps: Vec<f64> = self
            .repetitions
            .iter()
            .filter_map(|rep| {
                let test = rep.forest.iter().find(|s| s.variable == variable)?.nmse?;
                let oob = rep.oob_nmse.iter().find(|(n, _)| n == variable)?.1;
                Some((oob - test).abs())
            })
            .collect();
        (!gaps.is_empty()).then(|| median(&gaps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ampute::Mechanism;
    use crate::imputer::ForestSettings;
    use crate::simgen::{simulate, SimCoefficients, SimSpec};
    use crate::tabular::Column;

    fn sim(n: usize, seed: u64) -> Dataset {
        let spec = SimSpec { n_rows: n, seed, ..Default::default() };
        simulate(&spec, &SimCoefficients { beta: 0.4, intercept: -1.8, auroc: 0.0, prevalence: 0.0 }).unwrap()
    }

    #[test]
    fn perfect_and_mean_imputations() {
        let truth = Dataset::new(vec![
            Column::from_values("a", vec![1.0, 2.0, 3.0, 4.0]),
            Column::from_values("b", vec![5.0, 6.0, 7.0, 8.0]),
            Column::categorical_from_names("c", &[Some("x"), Some("y"), Some("y"), Some("x")]).unwrap(),
        ])
        .unwrap();
        let amputed = Dataset::new(vec![
            Column::continuous("a", vec![None, Some(2.0), None, Some(4.0)]),
            Column::from_values("b", vec![5.0, 6.0, 7.0, 8.0]),
            Column::categorical("c", vec!["x".into(), "y".into()], vec![None, Some(1), None, Some(0)]).unwrap(),
        ])
        .unwrap();
        let scores = score_imputation(&truth, &amputed, &truth).unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].nmse, Some(0.0));
        assert_eq!(scores[1].mer, Some(0.0));
        assert_eq!(scores[1].nmse, Some(0.0));

        // masked truth of `a` is {1, 3}; imputing its mean scores exactly 1
        let mean_filled = truth.replace_column(0, Column::from_values("a", vec![2.0, 2.0, 2.0, 4.0])).unwrap();
        let scores = score_imputation(&truth, &amputed, &mean_filled).unwrap();
        assert_eq!(scores[0].nmse, Some(1.0));
        assert_eq!(scores[0].n_masked, 2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = sim(10, 1);
        let b = sim(11, 1);
        assert!(matches!(score_imputation(&a, &a, &b), Err(EvalError::Shape(_))));
    }

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn small_benchmark_runs_and_is_deterministic() {
        let d = sim(300, 2);
        let cfg = BenchmarkConfig {
            repetitions: 2,
            seed: 5,
            test_fraction: 1.0 / 3.0,
            amputation: AmputationSpec::new(Mechanism::Mcar, vec!["V1".into(), "V2".into(), "V3".into(), "V4".into()], 0),
            imputer: ImputerConfig { forest: ForestSettings { num_trees: 20, ..Default::default() }, ..Default::default() },
            exclude: vec!["outcome".into()],
        };
        let (a, timings) = benchmark(&d, &cfg).unwrap();
        let (b, _) = benchmark(&d, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(timings.len(), 2);
        assert_eq!(a.test_nmse.len(), 8);
        for v in ["V1", "V2", "V3", "V4"] {
            let base = a.test_summary(v, METHOD_BASELINE).unwrap();
            assert!((base.median - 1.0).abs() < 0.3, "{v} baseline {}", base.median);
            assert!(a.oob_summary(v).is_some());
            assert!(a.median_oob_gap(v).is_some());
        }
    }
}
