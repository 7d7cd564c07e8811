//! Missingness simulators.
//!
//! Every mechanism splits the rows into strata and masks
//! `round(rate * stratum size)` rows of each stratum, drawn without
//! replacement. Strata come from the driver column's mean (rows equal to the
//! mean count as "lower") and, for the `_out` variants, from a binary
//! outcome. Strata are computed on the input before anything is masked, so
//! the order of targets does not matter.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use thiserror::Error;

use crate::rng::derived_rng;
use crate::tabular::{ColumnKind, DataError, Dataset};

#[derive(Debug, Error)]
pub enum AmputeError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("column '{column}' is already missing at row {row}")]
    AlreadyMissing { column: String, row: usize },
    #[error("driver column '{0}' has missing values")]
    DriverMissing(String),
    #[error("column '{0}' cannot drive its own missingness under this mechanism")]
    DriverIsTarget(String),
    #[error("{mechanism} needs {expected} driver column(s), got {found}")]
    DriverCount { mechanism: Mechanism, expected: usize, found: usize },
    #[error("{0} needs an outcome column")]
    MissingOutcome(Mechanism),
    #[error("outcome column '{0}' must be binary and fully observed")]
    NonBinaryOutcome(String),
    #[error("outcome column '{0}' cannot be amputed")]
    OutcomeTargeted(String),
    #[error("{0} needs at least one target column")]
    NoTargets(Mechanism),
    #[error("driver column '{0}' is not continuous")]
    CategoricalDriver(String),
    #[error("rate {0} outside [0, 1]")]
    BadRate(f64),
    #[error("amputation spec: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, AmputeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Mcar,
    Mar2,
    Mar2Out,
    MarCirc,
    MarCircOut,
    Mnar,
}

impl Mechanism {
    pub const ALL: [Mechanism; 6] =
        [Mechanism::Mcar, Mechanism::Mar2, Mechanism::Mar2Out, Mechanism::MarCirc, Mechanism::MarCircOut, Mechanism::Mnar];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Mcar => "MCAR",
            Mechanism::Mar2 => "MAR_2",
            Mechanism::Mar2Out => "MAR_2_out",
            Mechanism::MarCirc => "MAR_circ",
            Mechanism::MarCircOut => "MAR_circ_out",
            Mechanism::Mnar => "MNAR",
        }
    }

    pub fn uses_outcome(self) -> bool {
        matches!(self, Mechanism::Mar2Out | Mechanism::MarCircOut)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = AmputeError;

    fn from_str(s: &str) -> Result<Self> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| AmputeError::Parse(format!("unknown mechanism '{s}'")))
    }
}

/// Masking rates per outcome-by-driver stratum for the `_out` variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeRates {
    pub lower_positive: f64,
    pub lower_negative: f64,
    pub upper_positive: f64,
    pub upper_negative: f64,
}

impl Default for OutcomeRates {
    fn default() -> Self {
        OutcomeRates { lower_positive: 0.10, lower_negative: 0.36, upper_positive: 0.20, upper_negative: 0.30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmputationSpec {
    pub mechanism: Mechanism,
    pub targets: Vec<String>,
    /// One driver per target. Empty means the mechanism's default wiring:
    /// the next target (circular variants) or the target itself (MNAR).
    pub drivers: Vec<String>,
    /// Binary outcome for the `_out` variants.
    pub outcome: Option<String>,
    /// Columns that always receive MCAR missingness at `noise_rate`.
    pub noise: Vec<String>,
    /// MCAR rate.
    pub rate: f64,
    /// Rate below/above the driver mean for MAR and MNAR.
    pub lower_rate: f64,
    pub upper_rate: f64,
    pub outcome_rates: OutcomeRates,
    pub noise_rate: f64,
    pub seed: u64,
}

impl AmputationSpec {
    pub fn new(mechanism: Mechanism, targets: Vec<String>, seed: u64) -> Self {
        AmputationSpec {
            mechanism,
            targets,
            drivers: Vec::new(),
            outcome: None,
            noise: Vec::new(),
            rate: 0.30,
            lower_rate: 0.10,
            upper_rate: 0.50,
            outcome_rates: OutcomeRates::default(),
            noise_rate: 0.30,
            seed,
        }
    }

    /// `key=value` lines; lists are comma-separated.
    pub fn to_kv(&self) -> String {
        let r = &self.outcome_rates;
        let mut lines = vec![
            format!("mechanism={}", self.mechanism),
            format!("targets={}", self.targets.join(",")),
            format!("drivers={}", self.drivers.join(",")),
            format!("outcome={}", self.outcome.as_deref().unwrap_or("")),
            format!("noise={}", self.noise.join(",")),
            format!("rate={}", self.rate),
            format!("lower_rate={}", self.lower_rate),
            format!("upper_rate={}", self.upper_rate),
            format!("outcome_rates={},{},{},{}", r.lower_positive, r.lower_negative, r.upper_positive, r.upper_negative),
            format!("noise_rate={}", self.noise_rate),
            format!("seed={}", self.seed),
        ];
        lines.push(String::new());
        lines.join("\n")
    }

    /// Parse `key=value` lines. Blank lines and `#` comments are skipped;
    /// `mechanism` is required, every other key has a default.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut spec = AmputationSpec::new(Mechanism::Mcar, Vec::new(), 0);
        let mut seen_mechanism = false;
        let list = |v: &str| -> Vec<String> {
            v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
        };
        let num = |k: &str, v: &str| -> Result<f64> {
            v.parse().map_err(|_| AmputeError::Parse(format!("'{k}' expects a number, got '{v}'")))
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AmputeError::Parse(format!("expected key=value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "mechanism" => {
                    spec.mechanism = v.parse()?;
                    seen_mechanism = true;
                }
                "targets" => spec.targets = list(v),
                "drivers" => spec.drivers = list(v),
                "outcome" => spec.outcome = (!v.is_empty()).then(|| v.to_string()),
                "noise" => spec.noise = list(v),
                "rate" => spec.rate = num(k, v)?,
                "lower_rate" => spec.lower_rate = num(k, v)?,
                "upper_rate" => spec.upper_rate = num(k, v)?,
                "noise_rate" => spec.noise_rate = num(k, v)?,
                "outcome_rates" => {
                    let r = v.split(',').map(|x| num(k, x.trim())).collect::<Result<Vec<_>>>()?;
                    let [a, b, c, d] = r[..] else {
                        return Err(AmputeError::Parse("'outcome_rates' expects four numbers".into()));
                    };
                    spec.outcome_rates = OutcomeRates { lower_positive: a, lower_negative: b, upper_positive: c, upper_negative: d };
                }
                "seed" => spec.seed = v.parse().map_err(|_| AmputeError::Parse(format!("bad seed '{v}'")))?,
                _ => return Err(AmputeError::Parse(format!("unknown key '{k}'"))),
            }
        }
        if !seen_mechanism {
            return Err(AmputeError::Parse("missing 'mechanism'".into()));
        }
        Ok(spec)
    }

    fn rates(&self) -> [f64; 7] {
        let r = &self.outcome_rates;
        [
            self.rate,
            self.lower_rate,
            self.upper_rate,
            r.lower_positive,
            r.lower_negative,
            r.upper_positive,
            r.upper_negative,
        ]
    }

    /// Driver column name for each target.
    fn resolved_drivers(&self) -> Result<Vec<String>> {
        let m = self.mechanism;
        let k = self.targets.len();
        let drivers = match m {
            Mechanism::Mcar => return Ok(Vec::new()),
            Mechanism::Mnar => self.targets.clone(),
            Mechanism::MarCirc | Mechanism::MarCircOut if self.drivers.is_empty() => {
                if k < 2 {
                    return Err(AmputeError::DriverCount { mechanism: m, expected: 2, found: k });
                }
                (0..k).map(|i| self.targets[(i + 1) % k].clone()).collect()
            }
            _ => self.drivers.clone(),
        };
        if drivers.len() != k {
            return Err(AmputeError::DriverCount { mechanism: m, expected: k, found: drivers.len() });
        }
        if m != Mechanism::Mnar {
            if let Some((t, _)) = self.targets.iter().zip(&drivers).find(|(t, d)| t == d) {
                return Err(AmputeError::DriverIsTarget(t.clone()));
            }
        }
        Ok(drivers)
    }
}

/// Masking outcome for one stratum of one column.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumReport {
    pub column: String,
    /// `all`, `lower`, `upper`, or `lower/positive` style labels.
    pub stratum: String,
    pub rate: f64,
    pub size: usize,
    pub masked: usize,
}

impl StratumReport {
    pub fn achieved_rate(&self) -> f64 {
        if self.size == 0 {
            0.0
        } else {
            self.masked as f64 / self.size as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AmputationReport {
    pub strata: Vec<StratumReport>,
}

impl AmputationReport {
    pub fn masked_in(&self, column: &str) -> usize {
        self.strata.iter().filter(|s| s.column == column).map(|s| s.masked).sum()
    }
}

fn binary_outcome(d: &Dataset, name: &str) -> Result<Vec<bool>> {
    let col = d.column_by_name(name)?;
    let bad = || AmputeError::NonBinaryOutcome(name.to_string());
    if col.n_missing() > 0 {
        return Err(bad());
    }
    match col.kind() {
        ColumnKind::Categorical { levels } if levels.len() == 2 => Ok(col.observed().map(|v| v == 1.0).collect()),
        ColumnKind::Categorical { .. } => Err(bad()),
        ColumnKind::Continuous => col
            .observed()
            .map(|v| if v == 1.0 { Ok(true) } else if v == 0.0 { Ok(false) } else { Err(bad()) })
            .collect(),
    }
}

/// Per-row "upper" flag: value strictly above the column mean.
fn upper_flags(d: &Dataset, name: &str) -> Result<Vec<bool>> {
    let col = d.column_by_name(name)?;
    if col.kind().is_categorical() {
        return Err(AmputeError::CategoricalDriver(name.to_string()));
    }
    if col.n_missing() > 0 {
        return Err(AmputeError::DriverMissing(name.to_string()));
    }
    let values: Vec<f64> = col.observed().collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(values.iter().map(|&v| v > mean).collect())
}

/// Masks one column. `stratum_of(row)` indexes into `strata`, a list of
/// (label, rate) pairs.
fn mask_column(
    d: &Dataset,
    name: &str,
    stratum_of: impl Fn(usize) -> usize,
    strata: &[(&str, f64)],
    seed: u64,
    report: &mut AmputationReport,
) -> Result<Vec<bool>> {
    let col_index = d.index_of(name).ok_or_else(|| DataError::NoSuchColumn(name.to_string()))?;
    let col = d.column(col_index);
    if let Some(row) = (0..d.n_rows()).find(|&r| col.is_missing(r)) {
        return Err(AmputeError::AlreadyMissing { column: name.to_string(), row });
    }
    let mut members = vec![Vec::new(); strata.len()];
    for r in 0..d.n_rows() {
        members[stratum_of(r)].push(r);
    }
    let mut rng = derived_rng(seed, &[col_index as u64]);
    let mut mask = vec![false; d.n_rows()];
    for (&(label, rate), rows) in strata.iter().zip(&members) {
        let take = (rate * rows.len() as f64).round() as usize;
        for i in index::sample(&mut rng, rows.len(), take) {
            mask[rows[i]] = true;
        }
        report.strata.push(StratumReport { column: name.to_string(), stratum: label.to_string(), rate, size: rows.len(), masked: take });
    }
    Ok(mask)
}

/// Apply `spec` to a dataset whose targeted cells are all observed.
/// Returns the masked dataset and the per-stratum counts.
pub fn ampute(d: &Dataset, spec: &AmputationSpec) -> Result<(Dataset, AmputationReport)> {
    if let Some(&r) = spec.rates().iter().chain([&spec.noise_rate]).find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(AmputeError::BadRate(r));
    }
    let m = spec.mechanism;
    if spec.targets.is_empty() && spec.noise.is_empty() {
        return Err(AmputeError::NoTargets(m));
    }
    let outcome = match (&spec.outcome, m.uses_outcome()) {
        (Some(name), true) => Some(binary_outcome(d, name)?),
        (None, true) => return Err(AmputeError::MissingOutcome(m)),
        _ => None,
    };
    if let Some(name) = &spec.outcome {
        d.column_by_name(name)?;
        if spec.targets.contains(name) || spec.noise.contains(name) {
            return Err(AmputeError::OutcomeTargeted(name.clone()));
        }
    }
    let drivers = spec.resolved_drivers()?;

    let mut report = AmputationReport::default();
    let mut masks: Vec<(String, Vec<bool>)> = Vec::new();
    for (i, target) in spec.targets.iter().enumerate() {
        let mask = if m == Mechanism::Mcar {
            mask_column(d, target, |_| 0, &[("all", spec.rate)], spec.seed, &mut report)?
        } else {
            let upper = upper_flags(d, &drivers[i])?;
            match &outcome {
                None => {
                    let strata = [("lower", spec.lower_rate), ("upper", spec.upper_rate)];
                    mask_column(d, target, |r| usize::from(upper[r]), &strata, spec.seed, &mut report)?
                }
                Some(y) => {
                    let q = spec.outcome_rates;
                    let strata = [
                        ("lower/positive", q.lower_positive),
                        ("lower/negative", q.lower_negative),
                        ("upper/positive", q.upper_positive),
                        ("upper/negative", q.upper_negative),
                    ];
                    let of = |r: usize| 2 * usize::from(upper[r]) + usize::from(!y[r]);
                    mask_column(d, target, of, &strata, spec.seed, &mut report)?
                }
            }
        };
        masks.push((target.clone(), mask));
    }
    for name in &spec.noise {
        if spec.targets.contains(name) {
            return Err(AmputeError::Parse(format!("'{name}' is both a target and a noise column")));
        }
        let mask = mask_column(d, name, |_| 0, &[("all", spec.noise_rate)], spec.seed, &mut report)?;
        masks.push((name.clone(), mask));
    }

    let mut out = d.clone();
    for (name, mask) in masks {
        let i = out.index_of(&name).expect("checked above");
        let col = out.column(i).with_extra_mask(&mask);
        out = out.replace_column(i, col)?;
    }
    Ok((out, report))
}
