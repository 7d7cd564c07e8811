//! Iterative random-forest imputation with replayable models.
//!
//! [`fit`] fills masked cells with an initialization, then sweeps the
//! variables in a fixed sequence. For each variable a forest is trained on
//! the rows where it is observed, using the current (partly imputed) values
//! of its predictors, and its originally missing cells are overwritten with
//! the forest's predictions. Updates are visible to the next variable in the
//! same sweep. After every sweep the weighted NMSE over all variables is
//! compared with the previous sweep (the initialization counts as 1.0); as
//! soon as it stops decreasing the loop ends and only the sweeps before it
//! are kept for replay.
//!
//! [`transform`] replays the kept sweeps on new rows: same initialization
//! values, same sequence, same forests.

mod config;
mod format;
mod trace;

use std::collections::BTreeMap;

use log::debug;
use thiserror::Error;

use crate::forest::{self, FeatureKind, FeatureMatrix, Forest, ForestError, Predictions, Response};
use crate::metrics;
use crate::rng;
use crate::tabular::{Column, ColumnKind, DataError, Dataset};

pub use config::{
    ErrorSource, ForestSettings, ImputerConfig, InitScheme, InitValue, Initialization, OrderRule, PredictorMatrix,
};
pub use format::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use trace::{global_nmse, ErrorSet, ErrorTrace, VariableErrors};

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("need at least 2 rows to fit, got {0}")]
    TooFewRows(usize),
    #[error("column '{0}' has no observed values and no custom initialization")]
    AllMissing(String),
    #[error("nothing to converge on: every variable weight is zero")]
    NothingToConverge,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model format version {found} is not supported (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

pub type Result<T> = std::result::Result<T, ImputeError>;

/// Settings recorded in the model for reference.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConfigSnapshot {
    pub num_trees: usize,
    pub mtry: Option<usize>,
    pub min_node_size: Option<usize>,
    pub max_depth: usize,
    pub convergence: ErrorSource,
    pub max_iterations: usize,
    pub p_obs_threshold: f64,
    pub p_miss_threshold: f64,
    pub init_scheme: InitScheme,
    pub seed: u64,
}

impl ConfigSnapshot {
    fn of(cfg: &ImputerConfig) -> Self {
        ConfigSnapshot {
            num_trees: cfg.forest.num_trees,
            mtry: cfg.forest.mtry,
            min_node_size: cfg.forest.min_node_size,
            max_depth: cfg.forest.max_depth,
            convergence: cfg.convergence,
            max_iterations: cfg.max_iterations,
            p_obs_threshold: cfg.p_obs_threshold,
            p_miss_threshold: cfg.p_miss_threshold,
            init_scheme: cfg.initialization.scheme,
            seed: cfg.seed,
        }
    }
}

/// Everything needed to impute new observations the way the training data
/// was imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationModel {
    pub(crate) schema: Vec<(String, ColumnKind)>,
    /// Most frequent observed training level per categorical column.
    pub(crate) majority_levels: Vec<u32>,
    pub(crate) init_values: Vec<f64>,
    pub(crate) sequence: Vec<usize>,
    /// Predictor columns of each sequence position.
    pub(crate) predictors: Vec<Vec<usize>>,
    pub(crate) n_iter: usize,
    /// `forests[i][s]`: iteration `i + 1`, sequence position `s`.
    pub(crate) forests: Vec<Vec<Option<Forest>>>,
    pub(crate) trace: ErrorTrace,
    pub(crate) config: ConfigSnapshot,
}

impl ImputationModel {
    pub fn schema(&self) -> &[(String, ColumnKind)] {
        &self.schema
    }

    pub fn init_values(&self) -> &[f64] {
        &self.init_values
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn predictors(&self, position: usize) -> &[usize] {
        &self.predictors[position]
    }

    /// Iterations replayed by [`transform`].
    pub fn n_iter(&self) -> usize {
        self.n_iter
    }

    /// Iterations trained, including the final non-improving one.
    pub fn trained_iterations(&self) -> usize {
        self.forests.len()
    }

    pub fn forest(&self, iteration: usize, position: usize) -> Option<&Forest> {
        self.forests.get(iteration.checked_sub(1)?)?.get(position)?.as_ref()
    }

    pub fn trace(&self) -> &ErrorTrace {
        &self.trace
    }

    pub fn config(&self) -> &ConfigSnapshot {
        &self.config
    }

    /// Majority training level of a categorical column.
    pub fn majority_level(&self, column: usize) -> Option<&str> {
        let levels = self.schema[column].1.levels()?;
        Some(&levels[self.majority_levels[column] as usize])
    }

    /// Global NMSE (per `source`) of the iteration whose state is replayed,
    /// 1.0 when that is the initialization.
    pub fn retained_global_nmse(&self, source: ErrorSource) -> f64 {
        if self.n_iter == 0 {
            1.0
        } else {
            self.trace.global(source)[self.n_iter - 1]
        }
    }
}

fn feature_kind(kind: &ColumnKind) -> FeatureKind {
    match kind {
        ColumnKind::Continuous => FeatureKind::Numeric,
        ColumnKind::Categorical { levels } => FeatureKind::Categorical { n_levels: levels.len() as u32 },
    }
}

fn mode_of(observed: impl Iterator<Item = f64>, n_levels: usize) -> Option<u32> {
    let mut counts = vec![0usize; n_levels];
    let mut any = false;
    for v in observed {
        counts[v as usize] += 1;
        any = true;
    }
    // ties go to the first level in canonical order
    any.then(|| counts.iter().enumerate().fold((0, 0), |b, (k, &c)| if c > b.1 { (k, c) } else { b }).0 as u32)
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[m] } else { (values[m - 1] + values[m]) / 2.0 })
}

fn init_value(column: &Column, init: &Initialization) -> Result<f64> {
    if let Some(custom) = init.custom.get(column.name()) {
        return match (column.kind(), custom) {
            (ColumnKind::Continuous, InitValue::Number(v)) if v.is_finite() => Ok(*v),
            (ColumnKind::Categorical { levels }, InitValue::Level(l)) => levels
                .iter()
                .position(|x| x == l)
                .map(|i| i as f64)
                .ok_or_else(|| ImputeError::Config(format!("'{l}' is not a level of '{}'", column.name()))),
            _ => Err(ImputeError::Config(format!("custom initialization for '{}' has the wrong type", column.name()))),
        };
    }
    let missing = || ImputeError::AllMissing(column.name().to_string());
    match column.kind() {
        ColumnKind::Categorical { levels } => {
            mode_of(column.observed(), levels.len()).map(f64::from).ok_or_else(missing)
        }
        ColumnKind::Continuous => {
            let n = column.len() - column.n_missing();
            if n == 0 {
                return Err(missing());
            }
            match init.scheme {
                InitScheme::MeanMode => Ok(column.observed().sum::<f64>() / n as f64),
                InitScheme::MedianMode => median(column.observed().collect()).ok_or_else(missing),
            }
        }
    }
}

/// Fill masked cells with the initialization. Returns the completed dataset
/// (no masked cells) and the per-column fill values; categorical fill values
/// are level indices.
pub fn initialize(d: &Dataset, init: &Initialization) -> Result<(Dataset, Vec<f64>)> {
    let values = d.columns().iter().map(|c| init_value(c, init)).collect::<Result<Vec<_>>>()?;
    let columns = d.columns().iter().zip(&values).map(|(c, &v)| fill(c, v)).collect();
    Ok((Dataset::unmasked(columns), values))
}

fn fill(c: &Column, value: f64) -> Column {
    let values = c.cells().map(|x| x.unwrap_or(value)).collect();
    Column::from_parts(c.name().to_string(), c.kind().clone(), values, c.mask().to_vec())
}

fn resolve_columns(d: &Dataset, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| d.index_of(n).ok_or_else(|| ImputeError::Data(DataError::NoSuchColumn(n.clone()))))
        .collect()
}

/// Columns to impute, in imputation order.
pub fn imputation_order(d: &Dataset, cfg: &ImputerConfig) -> Result<Vec<usize>> {
    let selected: Vec<usize> = match &cfg.variables_to_impute {
        Some(names) => resolve_columns(d, names)?,
        None => (0..d.n_cols()).collect(),
    };
    let props = d.missing_proportions();
    let mut order = selected.clone();
    match &cfg.order {
        OrderRule::IncreasingMissingness => {
            order.sort_by(|&a, &b| props[a].total_cmp(&props[b]).then(a.cmp(&b)));
        }
        OrderRule::DecreasingMissingness => {
            order.sort_by(|&a, &b| props[b].total_cmp(&props[a]).then(a.cmp(&b)));
        }
        OrderRule::Custom(names) => {
            order = resolve_columns(d, names)?;
            if order.iter().any(|c| !selected.contains(c)) {
                return Err(ImputeError::Config("custom order names a column that is not imputed".into()));
            }
        }
    }
    let mut seen = vec![false; d.n_cols()];
    for &c in &order {
        if std::mem::replace(&mut seen[c], true) {
            return Err(ImputeError::Config(format!("column '{}' listed twice", d.column(c).name())));
        }
    }
    Ok(order)
}

/// Availability of predictor `x` for target `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsableCaseStats {
    /// Share of rows with `x` missing among rows where `y` is observed
    /// (0 when `y` is never observed).
    pub p_obs: f64,
    /// Share of rows with `x` observed among rows where `y` is missing
    /// (1 when `y` is never missing).
    pub p_miss: f64,
}

pub fn usable_case_stats(d: &Dataset, y: usize, x: usize) -> UsableCaseStats {
    let (my, mx) = (d.column(y).mask(), d.column(x).mask());
    let (mut obs_y, mut obs_y_miss_x, mut miss_y, mut miss_y_obs_x) = (0usize, 0usize, 0usize, 0usize);
    for (&a, &b) in my.iter().zip(mx) {
        if a {
            miss_y += 1;
            miss_y_obs_x += usize::from(!b);
        } else {
            obs_y += 1;
            obs_y_miss_x += usize::from(b);
        }
    }
    UsableCaseStats {
        p_obs: if obs_y == 0 { 0.0 } else { obs_y_miss_x as f64 / obs_y as f64 },
        p_miss: if miss_y == 0 { 1.0 } else { miss_y_obs_x as f64 / miss_y as f64 },
    }
}

/// Keep candidates with `p_obs <= p_obs_threshold` and
/// `p_miss >= p_miss_threshold`. The defaults (1, 0) keep everything.
pub fn usable_case_filter(d: &Dataset, y: usize, candidates: &[usize], cfg: &ImputerConfig) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&x| {
            let s = usable_case_stats(d, y, x);
            s.p_obs <= cfg.p_obs_threshold && s.p_miss >= cfg.p_miss_threshold
        })
        .collect()
}

fn validate(d: &Dataset, cfg: &ImputerConfig) -> Result<()> {
    if d.n_rows() < 2 {
        return Err(ImputeError::TooFewRows(d.n_rows()));
    }
    for t in [cfg.p_obs_threshold, cfg.p_miss_threshold] {
        if !(0.0..=1.0).contains(&t) {
            return Err(ImputeError::Config(format!("usable-case threshold {t} outside [0, 1]")));
        }
    }
    if let Some(pm) = &cfg.predictor_matrix {
        if pm.size() != d.n_cols() {
            return Err(ImputeError::Config(format!("predictor matrix is {0}x{0} for {1} columns", pm.size(), d.n_cols())));
        }
    }
    if let Some(w) = &cfg.weights {
        for (name, &v) in w {
            if d.index_of(name).is_none() {
                return Err(ImputeError::Data(DataError::NoSuchColumn(name.clone())));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ImputeError::Config(format!("weight {v} for '{name}' must be finite and >= 0")));
            }
        }
    }
    if cfg.forest.num_trees == 0 {
        return Err(ImputeError::Config("num_trees must be at least 1".into()));
    }
    Ok(())
}

/// Working state: column-major values plus each column's forest kind.
struct State {
    values: Vec<Vec<f64>>,
    kinds: Vec<FeatureKind>,
}

impl State {
    fn features(&self, predictors: &[usize], rows: &[usize]) -> Result<FeatureMatrix> {
        let columns = predictors.iter().map(|&p| rows.iter().map(|&r| self.values[p][r]).collect()).collect();
        let kinds = predictors.iter().map(|&p| self.kinds[p]).collect();
        Ok(FeatureMatrix::new(kinds, columns)?)
    }

    /// Overwrite `rows` of `column` with forest output (argmax for
    /// probability forests).
    fn write(&mut self, column: usize, rows: &[usize], pred: &Predictions) {
        let target = &mut self.values[column];
        for (k, &r) in rows.iter().enumerate() {
            target[r] = match self.kinds[column] {
                FeatureKind::Numeric => pred.row(k)[0],
                FeatureKind::Categorical { .. } => pred.argmax(k) as f64,
            };
        }
    }
}

fn errors_from(truth: &Target, pred: &Predictions, rows: &[usize]) -> ErrorSet {
    if rows.is_empty() {
        return ErrorSet { nmse: 1.0, ..Default::default() };
    }
    match truth {
        Target::Continuous { y, mean } => {
            let t: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let p: Vec<f64> = rows.iter().map(|&i| pred.row(i)[0]).collect();
            ErrorSet {
                nmse: metrics::nmse_continuous(&t, &p, *mean).unwrap_or(1.0),
                mse: metrics::mse(&t, &p).ok(),
                ..Default::default()
            }
        }
        Target::Categorical { labels, proportions } => {
            let r = proportions.len();
            let t: Vec<u32> = rows.iter().map(|&i| labels[i]).collect();
            let probs: Vec<f64> = rows.iter().flat_map(|&i| pred.row(i).iter().copied()).collect();
            let hard: Vec<u32> = rows.iter().map(|&i| pred.argmax(i) as u32).collect();
            ErrorSet {
                nmse: metrics::nmse_categorical(&t, &probs, r, proportions).unwrap_or(1.0),
                mse: None,
                mer: metrics::mer(&t, &hard).ok(),
                f1: if r == 2 { metrics::f1(&t, &hard, 1).ok() } else { None },
                macro_f1: if r > 2 { metrics::macro_f1(&t, &hard).ok() } else { None },
            }
        }
    }
}

/// Observed response of one variable with its reference statistics, which
/// stay fixed across iterations.
enum Target {
    Continuous { y: Vec<f64>, mean: f64 },
    Categorical { labels: Vec<u32>, proportions: Vec<f64> },
}

struct Plan {
    sequence: Vec<usize>,
    predictors: Vec<Vec<usize>>,
    weights: Vec<f64>,
    obs_rows: Vec<Vec<usize>>,
    miss_rows: Vec<Vec<usize>>,
}

fn plan(d: &Dataset, cfg: &ImputerConfig) -> Result<Plan> {
    let sequence = imputation_order(d, cfg)?;
    let p = d.n_cols();
    let full = PredictorMatrix::full(p);
    let pm = cfg.predictor_matrix.as_ref().unwrap_or(&full);
    let props = d.missing_proportions();
    let weights: Vec<f64> = sequence
        .iter()
        .map(|&c| match &cfg.weights {
            None => props[c],
            Some(w) => w.get(d.column(c).name()).copied().unwrap_or(0.0),
        })
        .collect();
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(ImputeError::NothingToConverge);
    }
    let predictors = sequence
        .iter()
        .map(|&y| {
            let candidates: Vec<usize> = (0..p).filter(|&x| x != y && pm.allows(y, x)).collect();
            usable_case_filter(d, y, &candidates, cfg)
        })
        .collect();
    let rows = |missing: bool| -> Vec<Vec<usize>> {
        sequence
            .iter()
            .map(|&c| (0..d.n_rows()).filter(|&r| d.column(c).is_missing(r) == missing).collect())
            .collect()
    };
    Ok(Plan { obs_rows: rows(false), miss_rows: rows(true), sequence, predictors, weights })
}

/// Fit the imputer on `d`. Returns the imputed dataset (no masked cells)
/// and the replayable model.
pub fn fit(d: &Dataset, cfg: &ImputerConfig) -> Result<(Dataset, ImputationModel)> {
    validate(d, cfg)?;
    let plan = plan(d, cfg)?;
    let (completed, init_values) = initialize(d, &cfg.initialization)?;
    let kinds: Vec<FeatureKind> = d.columns().iter().map(|c| feature_kind(c.kind())).collect();
    let mut state = State { values: completed.columns().iter().map(|c| c.raw_values().to_vec()).collect(), kinds };

    let targets: Vec<Target> = plan
        .sequence
        .iter()
        .zip(&plan.obs_rows)
        .map(|(&c, obs)| {
            let col = d.column(c);
            match col.kind() {
                ColumnKind::Continuous => {
                    let mean = if obs.is_empty() { 0.0 } else { col.observed().sum::<f64>() / obs.len() as f64 };
                    Target::Continuous { y: col.raw_values().to_vec(), mean }
                }
                ColumnKind::Categorical { levels } => {
                    let labels: Vec<u32> = col.raw_values().iter().map(|&v| v as u32).collect();
                    let observed: Vec<u32> = obs.iter().map(|&r| labels[r]).collect();
                    let proportions = if observed.is_empty() {
                        vec![0.0; levels.len()]
                    } else {
                        metrics::class_proportions(&observed, levels.len())
                    };
                    Target::Categorical { labels, proportions }
                }
            }
        })
        .collect();

    let mut trace = ErrorTrace { weights: plan.weights.clone(), ..Default::default() };
    let mut forests: Vec<Vec<Option<Forest>>> = Vec::new();
    let mut best_values = state.values.clone();
    let mut best = 1.0;
    let mut n_iter = 0;

    for iteration in 1..=cfg.max_iterations {
        let mut sweep = Vec::with_capacity(plan.sequence.len());
        let (mut nmse_app, mut nmse_oob) = (Vec::new(), Vec::new());
        for (pos, &col) in plan.sequence.iter().enumerate() {
            let (obs, miss) = (&plan.obs_rows[pos], &plan.miss_rows[pos]);
            let predictors = &plan.predictors[pos];
            let categorical = d.column(col).kind().is_categorical();
            let mut record = VariableErrors {
                variable: d.column(col).name().to_string(),
                column: col,
                iteration,
                categorical,
                init_only: true,
                apparent: ErrorSet { nmse: 1.0, ..Default::default() },
                oob: ErrorSet { nmse: 1.0, ..Default::default() },
            };
            let mut trained = None;
            if obs.len() >= 2 && !predictors.is_empty() {
                let x = state.features(predictors, obs)?;
                let params = cfg.forest.params(rng::derive_seed(cfg.seed, &[iteration as u64, pos as u64]));
                let target = &targets[pos];
                let mut f = match target {
                    Target::Continuous { y, .. } => {
                        let y_obs: Vec<f64> = obs.iter().map(|&r| y[r]).collect();
                        forest::fit_forest(&x, Response::Regression(&y_obs), &params)?
                    }
                    Target::Categorical { labels, proportions } => {
                        let y_obs: Vec<u32> = obs.iter().map(|&r| labels[r]).collect();
                        forest::fit_forest(&x, Response::Classes { labels: &y_obs, n_classes: proportions.len() }, &params)?
                    }
                };
                // metrics are indexed by position within `obs`
                let local: Vec<usize> = (0..obs.len()).collect();
                let local_target = localize(target, obs);
                let apparent = f.predict(&x)?;
                record.apparent = errors_from(&local_target, &apparent, &local);
                let oob = f.oob_predict()?;
                let covered: Vec<usize> = local.iter().copied().filter(|&i| oob.covered[i]).collect();
                record.oob = errors_from(&local_target, &oob.predictions, &covered);
                record.init_only = false;
                f.discard_oob();
                if !miss.is_empty() {
                    let xm = state.features(predictors, miss)?;
                    let pred = f.predict(&xm)?;
                    state.write(col, miss, &pred);
                }
                trained = Some(f);
            }
            nmse_app.push(record.apparent.nmse);
            nmse_oob.push(record.oob.nmse);
            trace.records.push(record);
            sweep.push(trained);
        }
        forests.push(sweep);
        let g_app = global_nmse(&nmse_app, &plan.weights)?;
        let g_oob = global_nmse(&nmse_oob, &plan.weights)?;
        trace.global_apparent.push(g_app);
        trace.global_oob.push(g_oob);
        let g = match cfg.convergence {
            ErrorSource::Oob => g_oob,
            ErrorSource::Apparent => g_app,
        };
        debug!("iteration {iteration}: global NMSE apparent {g_app:.6}, oob {g_oob:.6}");
        if g < best {
            best = g;
            n_iter = iteration;
            best_values.clone_from(&state.values);
        } else {
            break;
        }
    }

    let columns = d
        .columns()
        .iter()
        .zip(best_values)
        .map(|(c, v)| Column::from_parts(c.name().to_string(), c.kind().clone(), v, vec![false; d.n_rows()]))
        .collect();
    let majority_levels = d
        .columns()
        .iter()
        .map(|c| if c.kind().is_categorical() { mode_of(c.observed(), c.kind().n_levels()).unwrap_or(0) } else { 0 })
        .collect();
    let model = ImputationModel {
        schema: d.columns().iter().map(|c| (c.name().to_string(), c.kind().clone())).collect(),
        majority_levels,
        init_values,
        sequence: plan.sequence,
        predictors: plan.predictors,
        n_iter,
        forests,
        trace,
        config: ConfigSnapshot::of(cfg),
    };
    Ok((Dataset::new(columns)?, model))
}

/// Restrict a target to `rows`, renumbered from 0.
fn localize(target: &Target, rows: &[usize]) -> Target {
    match target {
        Target::Continuous { y, mean } => Target::Continuous { y: rows.iter().map(|&r| y[r]).collect(), mean: *mean },
        Target::Categorical { labels, proportions } => Target::Categorical {
            labels: rows.iter().map(|&r| labels[r]).collect(),
            proportions: proportions.clone(),
        },
    }
}

/// Check that `d` has exactly the model's columns, kinds and levels.
pub fn check_schema(m: &ImputationModel, d: &Dataset) -> Result<()> {
    if d.n_cols() != m.schema.len() {
        return Err(ImputeError::Schema(format!("model has {} columns, data has {}", m.schema.len(), d.n_cols())));
    }
    for ((name, kind), c) in m.schema.iter().zip(d.columns()) {
        if name != c.name() {
            return Err(ImputeError::Schema(format!("expected column '{name}', found '{}'", c.name())));
        }
        if kind != c.kind() {
            return Err(ImputeError::Schema(format!("column '{name}' has a different type or level set")));
        }
    }
    Ok(())
}

/// Impute `d` with a fitted model. Observed cells are returned unchanged.
pub fn transform(m: &ImputationModel, d: &Dataset) -> Result<Dataset> {
    check_schema(m, d)?;
    let kinds = d.columns().iter().map(|c| feature_kind(c.kind())).collect();
    let values = d
        .columns()
        .iter()
        .zip(&m.init_values)
        .map(|(c, &init)| c.cells().map(|v| v.unwrap_or(init)).collect())
        .collect();
    let mut state = State { values, kinds };
    let miss_rows: Vec<Vec<usize>> =
        m.sequence.iter().map(|&c| (0..d.n_rows()).filter(|&r| d.column(c).is_missing(r)).collect()).collect();
    for sweep in m.forests.iter().take(m.n_iter) {
        for (pos, &col) in m.sequence.iter().enumerate() {
            let (Some(f), rows) = (&sweep[pos], &miss_rows[pos]) else { continue };
            if rows.is_empty() {
                continue;
            }
            let x = state.features(&m.predictors[pos], rows)?;
            let pred = f.predict(&x)?;
            state.write(col, rows, &pred);
        }
    }
    let columns = d
        .columns()
        .iter()
        .zip(state.values)
        .map(|(c, v)| Column::from_parts(c.name().to_string(), c.kind().clone(), v, vec![false; d.n_rows()]))
        .collect();
    Ok(Dataset::new(columns)?)
}

/// Observed-value weights helper: uniform weight 1 for each named column.
pub fn uniform_weights<'a>(names: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, f64> {
    names.into_iter().map(|n| (n.to_string(), 1.0)).collect()
}
