use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use serde::Serialize;

use rfimpute::ampute::{AmputationReport, AmputationSpec, Mechanism};
use rfimpute::evaluate::{benchmark, score_imputation, BenchmarkConfig, BenchmarkReport, VariableScore};
use rfimpute::imputer::{
    ErrorSource, ForestSettings, ImputeError, InitScheme, InitValue, Initialization, OrderRule, PredictorMatrix,
};
use rfimpute::simgen::{calibrate, simulate, SimCoefficients, SimSpec};
use rfimpute::tabular::{format_cell, read_raw_csv, write_csv, ColumnKind, Dataset, RawTable, ReadOptions};
use rfimpute::{fit, load_model, save_model, transform, ImputationModel, ImputerConfig};

use crate::args::*;
use crate::table::Table;

/// Invalid combination of arguments discovered after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn log_config(command: &str, value: &impl Serialize) {
    match serde_json::to_string(value) {
        Ok(json) => info!("{command} config: {json}"),
        Err(e) => warn!("could not serialize {command} config: {e}"),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_options(categorical: &[String]) -> ReadOptions {
    ReadOptions { categorical: categorical.to_vec(), ..Default::default() }
}

fn read_table(path: &Path, categorical: &[String]) -> Result<(RawTable, Dataset)> {
    let raw = read_raw_csv(path)?;
    let d = raw.to_dataset(&read_options(categorical))?;
    Ok((raw, d))
}

/// Write `raw`'s columns in their original order, taking the cells of every
/// column that `imputed` has from `imputed` and copying the rest verbatim.
fn write_merged(raw: &RawTable, imputed: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(&raw.header)?;
    let sources: Vec<Option<usize>> = raw.header.iter().map(|h| imputed.index_of(h)).collect();
    for (r, row) in raw.rows.iter().enumerate() {
        let record: Vec<String> = sources
            .iter()
            .zip(row)
            .map(|(src, cell)| match src {
                Some(c) => format_cell(imputed.column(*c), r),
                None => cell.clone(),
            })
            .collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let spec = SimSpec {
        n_rows: a.n,
        rho: a.rho,
        include_noise: a.noise,
        target_auroc: a.auroc,
        target_prevalence: a.prevalence,
        seed: a.seed,
        ..Default::default()
    };
    log_config("simulate", a);
    let coeffs = calibrate(&spec)?;
    info!("calibrated beta {:.6}, intercept {:.6}", coeffs.beta, coeffs.intercept);
    let d = simulate(&spec, &coeffs)?;
    write_csv(&d, &a.output)?;

    #[derive(Serialize)]
    struct Meta<'a> {
        n_rows: usize,
        rho: f64,
        noise: bool,
        target_auroc: f64,
        target_prevalence: f64,
        seed: u64,
        coefficients: &'a SimCoefficients,
        columns: Vec<String>,
    }
    let meta = Meta {
        n_rows: spec.n_rows,
        rho: spec.rho,
        noise: spec.include_noise,
        target_auroc: spec.target_auroc,
        target_prevalence: spec.target_prevalence,
        seed: spec.seed,
        coefficients: &coeffs,
        columns: spec.column_names(),
    };
    write_json(&sidecar(&a.output, ".meta.json"), &meta)?;
    println!(
        "wrote {} rows x {} columns; calibrated AUROC {:.4}, prevalence {:.4}",
        d.n_rows(),
        d.n_cols(),
        coeffs.auroc,
        coeffs.prevalence
    );
    Ok(())
}

fn mechanism(m: MechanismArg) -> Mechanism {
    match m {
        MechanismArg::Mcar => Mechanism::Mcar,
        MechanismArg::Mar2 => Mechanism::Mar2,
        MechanismArg::Mar2Out => Mechanism::Mar2Out,
        MechanismArg::MarCirc => Mechanism::MarCirc,
        MechanismArg::MarCircOut => Mechanism::MarCircOut,
        MechanismArg::Mnar => Mechanism::Mnar,
    }
}

/// Resolve the amputation flags (and optional spec file) against the data.
/// `skip` lists columns never chosen as default targets.
fn amputation_spec(a: &AmputationArgs, seed: u64, d: &Dataset, skip: &[String]) -> Result<AmputationSpec> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            AmputationSpec::from_kv(&text).map_err(|e| usage(e.to_string()))?
        }
        None => {
            let m = a.mechanism.ok_or_else(|| usage("--mechanism or --spec is required"))?;
            AmputationSpec::new(mechanism(m), Vec::new(), seed)
        }
    };
    if let Some(m) = a.mechanism {
        spec.mechanism = mechanism(m);
    }
    spec.seed = seed;
    if !a.targets.is_empty() {
        spec.targets = a.targets.clone();
    }
    if !a.drivers.is_empty() {
        spec.drivers = a.drivers.clone();
    }
    if a.outcome.is_some() {
        spec.outcome = a.outcome.clone();
    }
    if !a.noise.is_empty() {
        spec.noise = a.noise.clone();
    }
    for (slot, v) in [
        (&mut spec.rate, a.rate),
        (&mut spec.lower_rate, a.lower_rate),
        (&mut spec.upper_rate, a.upper_rate),
        (&mut spec.noise_rate, a.noise_rate),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if spec.targets.is_empty() {
        spec.targets = d
            .names()
            .into_iter()
            .filter(|n| spec.outcome.as_deref() != Some(*n) && !spec.noise.iter().any(|x| x == n) && !skip.iter().any(|x| x == n))
            .map(String::from)
            .collect();
    }
    let m = spec.mechanism;
    if matches!(m, Mechanism::Mar2 | Mechanism::Mar2Out) && spec.drivers.is_empty() {
        return Err(usage(format!("{m} needs --drivers (one per target)")));
    }
    if m.uses_outcome() && spec.outcome.is_none() {
        return Err(usage(format!("{m} needs --outcome")));
    }
    Ok(spec)
}

fn print_amputation_report(d: &Dataset, report: &AmputationReport) {
    let mut strata = Table::new(&["column", "stratum", "rows", "masked", "target rate", "achieved"]);
    for s in &report.strata {
        strata.row(vec![
            s.column.clone(),
            s.stratum.clone(),
            s.size.to_string(),
            s.masked.to_string(),
            format!("{:.1}%", 100.0 * s.rate),
            format!("{:.1}%", 100.0 * s.achieved_rate()),
        ]);
    }
    print!("{strata}");
    println!();
    let mut cols = Table::new(&["column", "missing", "missing %"]);
    for c in d.columns() {
        cols.row(vec![
            c.name().to_string(),
            c.n_missing().to_string(),
            format!("{:.1}%", 100.0 * c.n_missing() as f64 / d.n_rows().max(1) as f64),
        ]);
    }
    print!("{cols}");
}

pub fn ampute_cmd(a: &AmputeArgs) -> Result<()> {
    let (_, d) = read_table(&a.input, &a.categorical)?;
    let spec = amputation_spec(&a.amputation, a.seed, &d, &[])?;
    log_config("ampute", a);
    info!("resolved amputation spec: {}", spec.to_kv().trim_end().replace('\n', "; "));
    let (out, report) = rfimpute::ampute(&d, &spec)?;
    write_csv(&out, &a.output)?;
    print_amputation_report(&out, &report);
    Ok(())
}

fn parse_weight(name: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| usage(format!("weight for '{name}' is not a number: '{v}'")))
}

/// Build the imputer configuration for the columns of `d`.
fn imputer_config(a: &ImputerArgs, seed: u64, d: &Dataset) -> Result<ImputerConfig> {
    let mut custom = BTreeMap::new();
    for (name, value) in &a.init_values {
        let col = d.column_by_name(name).map_err(|e| usage(e.to_string()))?;
        let v = match col.kind() {
            ColumnKind::Continuous => InitValue::Number(
                value.parse().map_err(|_| usage(format!("--init-value for '{name}' must be a number")))?,
            ),
            ColumnKind::Categorical { .. } => InitValue::Level(value.clone()),
        };
        custom.insert(name.clone(), v);
    }
    let weights = if a.weights.is_empty() {
        None
    } else {
        Some(a.weights.iter().map(|(k, v)| Ok((k.clone(), parse_weight(k, v)?))).collect::<Result<BTreeMap<_, _>>>()?)
    };
    let predictor_matrix = if a.no_predictor.is_empty() {
        None
    } else {
        let mut pm = PredictorMatrix::full(d.n_cols());
        for name in &a.no_predictor {
            let i = d.index_of(name).ok_or_else(|| usage(format!("--no-predictor: no column '{name}'")))?;
            pm.exclude_predictor(i);
        }
        Some(pm)
    };
    let order = if !a.sequence.is_empty() {
        OrderRule::Custom(a.sequence.clone())
    } else {
        match a.order {
            OrderArg::Increasing => OrderRule::IncreasingMissingness,
            OrderArg::Decreasing => OrderRule::DecreasingMissingness,
        }
    };
    Ok(ImputerConfig {
        initialization: Initialization {
            scheme: match a.init {
                InitArg::MeanMode => InitScheme::MeanMode,
                InitArg::MedianMode => InitScheme::MedianMode,
            },
            custom,
        },
        forest: ForestSettings { num_trees: a.trees, mtry: a.mtry, min_node_size: a.min_node_size, max_depth: a.max_depth },
        convergence: match a.convergence {
            ConvergenceArg::Oob => ErrorSource::Oob,
            ConvergenceArg::Apparent => ErrorSource::Apparent,
        },
        weights,
        max_iterations: a.max_iter,
        predictor_matrix,
        p_obs_threshold: a.p_obs,
        p_miss_threshold: a.p_miss,
        variables_to_impute: (!a.variables.is_empty()).then(|| a.variables.clone()),
        order,
        seed,
    })
}

#[derive(Serialize)]
struct FitMetadata<'a> {
    config: &'a ImputerConfig,
    excluded: &'a [String],
    columns: Vec<&'a str>,
    sequence: Vec<&'a str>,
    predictors: Vec<Vec<&'a str>>,
    weights: &'a [f64],
    n_iter: usize,
    trained_iterations: usize,
    global_oob_nmse: &'a [f64],
    global_apparent_nmse: &'a [f64],
    retained_global_nmse: f64,
}

fn fit_metadata<'a>(m: &'a ImputationModel, cfg: &'a ImputerConfig, excluded: &'a [String]) -> FitMetadata<'a> {
    let names: Vec<&str> = m.schema().iter().map(|(n, _)| n.as_str()).collect();
    FitMetadata {
        config: cfg,
        excluded,
        sequence: m.sequence().iter().map(|&c| names[c]).collect(),
        predictors: (0..m.sequence().len()).map(|p| m.predictors(p).iter().map(|&c| names[c]).collect()).collect(),
        columns: names,
        weights: &m.trace().weights,
        n_iter: m.n_iter(),
        trained_iterations: m.trained_iterations(),
        global_oob_nmse: &m.trace().global_oob,
        global_apparent_nmse: &m.trace().global_apparent,
        retained_global_nmse: m.retained_global_nmse(cfg.convergence),
    }
}

pub fn fit_cmd(a: &FitArgs) -> Result<()> {
    let (raw, full) = read_table(&a.input, &a.categorical)?;
    let exclude: Vec<&str> = a.exclude.iter().map(String::as_str).collect();
    let d = full.drop_columns(&exclude)?;
    let cfg = imputer_config(&a.imputer, a.seed, &d)?;
    log_config("fit", a);
    log_config("imputer", &cfg);
    let (imputed, model) = fit(&d, &cfg)?;
    info!("retained {} of {} trained iteration(s)", model.n_iter(), model.trained_iterations());

    save_model(&model, &a.model)?;
    write_merged(&raw, &imputed, &a.output)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| sidecar(&a.model, ".trace.csv"));
    let file = File::create(&trace_path).with_context(|| format!("cannot create {}", trace_path.display()))?;
    model.trace().write_csv(BufWriter::new(file), model.n_iter())?;
    let meta_path = a.metadata.clone().unwrap_or_else(|| sidecar(&a.model, ".json"));
    write_json(&meta_path, &fit_metadata(&model, &cfg, &a.exclude))?;

    let mut t = Table::new(&["iteration", "global OOB NMSE", "global apparent NMSE", "retained"]);
    for (i, (oob, app)) in model.trace().global_oob.iter().zip(&model.trace().global_apparent).enumerate() {
        t.row(vec![(i + 1).to_string(), format!("{oob:.6}"), format!("{app:.6}"), (i < model.n_iter()).to_string()]);
    }
    print!("{t}");
    Ok(())
}

/// Cells of categorical model columns whose level the model never saw are
/// replaced by the column's majority training level.
fn map_unseen_levels(raw: &mut RawTable, model: &ImputationModel, missing: &[String]) {
    for (c, (name, kind)) in model.schema().iter().enumerate() {
        let (Some(levels), Some(j)) = (kind.levels(), raw.header.iter().position(|h| h == name)) else { continue };
        let majority = model.majority_level(c).expect("categorical column").to_string();
        let mut replaced = 0usize;
        for row in &mut raw.rows {
            let cell = &mut row[j];
            if !missing.contains(cell) && !levels.contains(cell) {
                *cell = majority.clone();
                replaced += 1;
            }
        }
        if replaced > 0 {
            warn!("column '{name}': {replaced} cell(s) with a level unseen at fit time set to majority level '{majority}'");
        }
    }
}

pub fn impute_cmd(a: &ImputeArgs) -> Result<()> {
    log_config("impute", a);
    let model = load_model(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    let mut raw = read_raw_csv(&a.input)?;
    let opts = ReadOptions::with_schema(model.schema().to_vec());
    map_unseen_levels(&mut raw, &model, &opts.missing_tokens);

    let mut positions = Vec::with_capacity(model.schema().len());
    for (name, _) in model.schema() {
        let j = raw
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ImputeError::Schema(format!("input has no column '{name}'")))?;
        positions.push(j);
    }
    let subset = RawTable {
        header: positions.iter().map(|&j| raw.header[j].clone()).collect(),
        rows: raw.rows.iter().map(|r| positions.iter().map(|&j| r[j].clone()).collect()).collect(),
    };
    let d = subset.to_dataset(&opts)?;
    let imputed = transform(&model, &d)?;
    write_merged(&raw, &imputed, &a.output)?;
    println!("imputed {} cell(s) in {} row(s)", d.n_missing(), d.n_rows());
    Ok(())
}

fn score_table(scores: &[VariableScore]) -> Table {
    let mut t = Table::new(&["variable", "type", "masked", "NMSE", "MER"]);
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for s in scores {
        t.row(vec![
            s.variable.clone(),
            if s.categorical { "categorical" } else { "continuous" }.to_string(),
            s.n_masked.to_string(),
            opt(s.nmse),
            opt(s.mer),
        ]);
    }
    t
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    log_config("evaluate", a);
    let (_, truth) = read_table(&a.truth, &a.categorical)?;
    let schema: Vec<(String, ColumnKind)> = truth.columns().iter().map(|c| (c.name().to_string(), c.kind().clone())).collect();
    let opts = ReadOptions::with_schema(schema);
    let amputed = read_raw_csv(&a.amputed)?.to_dataset(&opts)?;
    let imputed = read_raw_csv(&a.imputed)?.to_dataset(&opts)?;
    let scores = score_imputation(&truth, &amputed, &imputed)?;
    print!("{}", score_table(&scores));
    if let Some(path) = &a.json {
        write_json(path, &scores)?;
    }
    Ok(())
}

fn benchmark_table(report: &BenchmarkReport) -> Table {
    let mut t = Table::new(&["variable", "method", "median NMSE", "Q1", "Q3", "IQR", "n"]);
    for s in &report.test_nmse {
        t.row(vec![
            s.variable.clone(),
            s.method.clone(),
            format!("{:.4}", s.median),
            format!("{:.4}", s.q1),
            format!("{:.4}", s.q3),
            format!("{:.4}", s.iqr),
            s.n.to_string(),
        ]);
    }
    for s in &report.oob_nmse {
        t.row(vec![
            s.variable.clone(),
            format!("{} (OOB)", s.method),
            format!("{:.4}", s.median),
            format!("{:.4}", s.q1),
            format!("{:.4}", s.q3),
            format!("{:.4}", s.iqr),
            s.n.to_string(),
        ]);
    }
    t
}

pub fn benchmark_cmd(a: &BenchmarkArgs) -> Result<()> {
    let (_, d) = read_table(&a.input, &a.categorical)?;
    if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
        return Err(usage("--test-fraction must lie in (0, 1)"));
    }
    let amputation = amputation_spec(&a.amputation, a.seed, &d, &a.exclude)?;
    let exclude: Vec<&str> = a.exclude.iter().map(String::as_str).collect();
    let imputer = imputer_config(&a.imputer, a.seed, &d.drop_columns(&exclude)?)?;
    log_config("benchmark", a);
    log_config("imputer", &imputer);
    info!("resolved amputation spec: {}", amputation.to_kv().trim_end().replace('\n', "; "));
    let cfg = BenchmarkConfig {
        repetitions: a.repetitions,
        seed: a.seed,
        test_fraction: a.test_fraction,
        amputation,
        imputer,
        exclude: a.exclude.clone(),
    };
    let (report, timings) = benchmark(&d, &cfg)?;
    write_json(&a.output, &report)?;
    if let Some(path) = &a.timings {
        write_json(path, &timings)?;
    }
    print!("{}", benchmark_table(&report));
    let n_zero = report.n_iter.iter().filter(|&&n| n == 0).count();
    println!("n_iter: {:?} ({n_zero} of {} stopped at initialization)", report.n_iter, report.n_iter.len());
    let total = |f: fn(&rfimpute::evaluate::Timing) -> f64| timings.iter().map(f).sum::<f64>();
    eprintln!(
        "runtime (s): forest fit {:.2}, forest impute {:.3}, mean/mode fit {:.3}, mean/mode impute {:.3}",
        total(|t| t.fit_seconds),
        total(|t| t.impute_seconds),
        total(|t| t.baseline_fit_seconds),
        total(|t| t.baseline_impute_seconds)
    );
    Ok(())
}
