use std::collections::BTreeMap;

use serde::Serialize;

use crate::forest::ForestParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    MeanMode,
    MedianMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum InitValue {
    Number(f64),
    Level(String),
}

/// How masked cells are filled before the first iteration. `custom`
/// overrides the scheme for the columns it names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Initialization {
    pub scheme: InitScheme,
    pub custom: BTreeMap<String, InitValue>,
}

impl Default for Initialization {
    fn default() -> Self {
        Initialization { scheme: InitScheme::MeanMode, custom: BTreeMap::new() }
    }
}

/// Which error drives convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSource {
    Oob,
    Apparent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderRule {
    /// Least-missing variable first (ties by column position).
    IncreasingMissingness,
    DecreasingMissingness,
    /// Explicit sequence of column names.
    Custom(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestSettings {
    pub num_trees: usize,
    pub mtry: Option<usize>,
    pub min_node_size: Option<usize>,
    /// 0 = unlimited.
    pub max_depth: usize,
}

impl Default for ForestSettings {
    fn default() -> Self {
        ForestSettings { num_trees: 500, mtry: None, min_node_size: None, max_depth: 0 }
    }
}

impl ForestSettings {
    pub(crate) fn params(&self, seed: u64) -> ForestParams {
        ForestParams {
            num_trees: self.num_trees,
            mtry: self.mtry,
            min_node_size: self.min_node_size,
            max_depth: self.max_depth,
            seed,
        }
    }
}

/// `allowed[y][x]`: may column `x` serve as a predictor for column `y`.
/// The diagonal is always false.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorMatrix {
    allowed: Vec<Vec<bool>>,
}

impl PredictorMatrix {
    /// Every other column predicts every column.
    pub fn full(p: usize) -> Self {
        PredictorMatrix { allowed: (0..p).map(|y| (0..p).map(|x| x != y).collect()).collect() }
    }

    pub fn from_rows(allowed: Vec<Vec<bool>>) -> Option<Self> {
        let p = allowed.len();
        let square = allowed.iter().all(|r| r.len() == p);
        let diag_clear = allowed.iter().enumerate().all(|(i, r)| !r[i]);
        (square && diag_clear).then_some(PredictorMatrix { allowed })
    }

    pub fn size(&self) -> usize {
        self.allowed.len()
    }

    pub fn allows(&self, target: usize, predictor: usize) -> bool {
        self.allowed[target][predictor]
    }

    /// Setting the diagonal is ignored.
    pub fn set(&mut self, target: usize, predictor: usize, allowed: bool) {
        if target != predictor {
            self.allowed[target][predictor] = allowed;
        }
    }

    /// Forbid `predictor` as a predictor of every column.
    pub fn exclude_predictor(&mut self, predictor: usize) {
        for row in &mut self.allowed {
            row[predictor] = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputerConfig {
    pub initialization: Initialization,
    pub forest: ForestSettings,
    pub convergence: ErrorSource,
    /// Per-column weights in the global NMSE; `None` uses each column's
    /// missing proportion. Columns absent from the map weigh 0.
    pub weights: Option<BTreeMap<String, f64>>,
    pub max_iterations: usize,
    pub predictor_matrix: Option<PredictorMatrix>,
    /// A predictor is dropped for a target when the proportion of missing
    /// predictor values among observed target rows exceeds this.
    pub p_obs_threshold: f64,
    /// A predictor is dropped for a target when the proportion of observed
    /// predictor values among missing target rows is below this.
    pub p_miss_threshold: f64,
    /// `None` = every column.
    pub variables_to_impute: Option<Vec<String>>,
    pub order: OrderRule,
    pub seed: u64,
}

impl Default for ImputerConfig {
    fn default() -> Self {
        ImputerConfig {
            initialization: Initialization::default(),
            forest: ForestSettings::default(),
            convergence: ErrorSource::Oob,
            weights: None,
            max_iterations: 10,
            predictor_matrix: None,
            p_obs_threshold: 1.0,
            p_miss_threshold: 0.0,
            variables_to_impute: None,
            order: OrderRule::IncreasingMissingness,
            seed: 0,
        }
    }
}
