//! Random forests with bootstrap bagging, regression and probability modes,
//! and out-of-bag predictions.
//!
//! Trees are grown on a with-replacement bootstrap of size `n`. At every node
//! `mtry` predictors are drawn without replacement and the split that
//! maximises the decrease in weighted response variance (regression) or Gini
//! impurity (probability) is chosen. Numeric thresholds are midpoints between
//! adjacent distinct values present in the node; categorical predictors are
//! split by ordering their levels at the node (by mean response, or by the
//! frequency of the first class) and scanning that order. Equally good
//! splits resolve to the lowest predictor index, then the lowest threshold.
//!
//! Each tree draws from its own ChaCha8 stream derived from `(seed, tree)`,
//! and tree outputs are always combined in tree order, so a forest is
//! bit-identical whatever the size of the rayon pool.

pub(crate) mod codec;
mod tree;

use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng;
pub(crate) use tree::Tree;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("a forest needs at least one predictor")]
    NoFeatures,
    #[error("a forest needs at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("feature {feature} has {found} rows, expected {expected}")]
    Length { feature: usize, found: usize, expected: usize },
    #[error("response has {found} rows, expected {expected}")]
    ResponseLength { found: usize, expected: usize },
    #[error("feature {feature}, row {row}: value {value} is not valid for this feature")]
    BadValue { feature: usize, row: usize, value: f64 },
    #[error("class label {label} out of range for {n_classes} classes")]
    BadLabel { label: u32, n_classes: usize },
    #[error("invalid forest parameters: {0}")]
    Params(String),
    #[error("prediction features do not match the training features")]
    FeatureMismatch,
    #[error("forest carries no out-of-bag record")]
    NoOobRecord,
}

pub type Result<T> = std::result::Result<T, ForestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    /// Values are level indices `0..n_levels`, stored as integral `f64`.
    Categorical { n_levels: u32 },
}

/// Column-major predictor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    kinds: Vec<FeatureKind>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl FeatureMatrix {
    /// Numeric values must be finite. Categorical values must be
    /// non-negative integers; indices at or beyond `n_levels` are accepted
    /// and treated as an unseen level at prediction time.
    pub fn new(kinds: Vec<FeatureKind>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if kinds.len() != columns.len() {
            return Err(ForestError::Params(format!("{} kinds for {} columns", kinds.len(), columns.len())));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (feature, (kind, col)) in kinds.iter().zip(&columns).enumerate() {
            if col.len() != n_rows {
                return Err(ForestError::Length { feature, found: col.len(), expected: n_rows });
            }
            let bad = |v: f64| match kind {
                FeatureKind::Numeric => !v.is_finite(),
                FeatureKind::Categorical { .. } => !(v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64),
            };
            if let Some(row) = col.iter().position(|&v| bad(v)) {
                return Err(ForestError::BadValue { feature, row, value: col[row] });
            }
        }
        Ok(FeatureMatrix { kinds, columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    #[inline]
    pub(crate) fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestMode {
    Regression,
    /// Leaves hold class-frequency vectors of length `n_classes`.
    Probability { n_classes: usize },
}

impl ForestMode {
    pub fn n_outputs(&self) -> usize {
        match *self {
            ForestMode::Regression => 1,
            ForestMode::Probability { n_classes } => n_classes,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Response<'a> {
    Regression(&'a [f64]),
    Classes { labels: &'a [u32], n_classes: usize },
}

impl Response<'_> {
    fn len(&self) -> usize {
        match self {
            Response::Regression(y) => y.len(),
            Response::Classes { labels, .. } => labels.len(),
        }
    }

    fn mode(&self) -> ForestMode {
        match *self {
            Response::Regression(_) => ForestMode::Regression,
            Response::Classes { n_classes, .. } => ForestMode::Probability { n_classes },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub num_trees: usize,
    /// Predictors tried per node; `None` means `floor(sqrt(p))`, at least 1.
    pub mtry: Option<usize>,
    /// Nodes holding at most this many bootstrap draws are not split;
    /// `None` means 5 for regression and 10 for probability forests.
    pub min_node_size: Option<usize>,
    /// 0 = unlimited.
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { num_trees: 500, mtry: None, min_node_size: None, max_depth: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Resolved {
    pub mtry: usize,
    pub min_node_size: usize,
    pub max_depth: usize,
}

impl ForestParams {
    pub(crate) fn resolve(&self, n_features: usize, mode: ForestMode) -> Result<Resolved> {
        if self.num_trees == 0 {
            return Err(ForestError::Params("num_trees must be at least 1".into()));
        }
        let mtry = self.mtry.unwrap_or_else(|| ((n_features as f64).sqrt().floor() as usize).max(1));
        if mtry == 0 || mtry > n_features {
            return Err(ForestError::Params(format!("mtry {mtry} outside [1, {n_features}]")));
        }
        let min_node_size = self.min_node_size.unwrap_or(match mode {
            ForestMode::Regression => 5,
            ForestMode::Probability { .. } => 10,
        });
        if min_node_size == 0 {
            return Err(ForestError::Params("min_node_size must be at least 1".into()));
        }
        Ok(Resolved { mtry, min_node_size, max_depth: self.max_depth })
    }
}

/// Row-major prediction output: one value per row (regression) or one
/// probability vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub n_outputs: usize,
    pub values: Vec<f64>,
}

impl Predictions {
    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_outputs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_outputs..(i + 1) * self.n_outputs]
    }

    /// Index of the largest entry of row `i`; ties go to the lower index.
    pub fn argmax(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OobRecord {
    sums: Vec<f64>,
    trees_excluding: Vec<u32>,
}

/// Out-of-bag predictions for the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OobPrediction {
    /// Rows that no tree left out are `NaN`.
    pub predictions: Predictions,
    pub covered: Vec<bool>,
    pub trees_excluding: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub(crate) mode: ForestMode,
    pub(crate) kinds: Vec<FeatureKind>,
    /// Majority training level per categorical feature (0 for numeric ones);
    /// stands in for levels the forest never saw.
    pub(crate) fallback_levels: Vec<u32>,
    pub(crate) trees: Vec<Tree>,
    pub(crate) tree_seeds: Vec<u64>,
    pub(crate) n_train: usize,
    pub(crate) resolved: Resolved,
    pub(crate) oob: Option<OobRecord>,
}

/// Per-feature views of the training matrix prepared once per forest.
pub(crate) struct TrainingData<'a> {
    pub x: &'a FeatureMatrix,
    /// Dense rank of each row's value among the distinct values (numeric
    /// features only; empty for categorical ones).
    pub ranks: Vec<Vec<u32>>,
    pub uniques: Vec<Vec<f64>>,
    pub response: Response<'a>,
    pub fallback_levels: Vec<u32>,
}

impl<'a> TrainingData<'a> {
    fn new(x: &'a FeatureMatrix, response: Response<'a>) -> Self {
        let n = x.n_rows();
        let mut ranks = Vec::with_capacity(x.n_features());
        let mut uniques = Vec::with_capacity(x.n_features());
        let mut fallback_levels = Vec::with_capacity(x.n_features());
        for (j, kind) in x.kinds().iter().enumerate() {
            let col = x.column(j);
            match kind {
                FeatureKind::Numeric => {
                    let mut order: Vec<u32> = (0..n as u32).collect();
                    order.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                    let mut rank = vec![0u32; n];
                    let mut uniq: Vec<f64> = Vec::new();
                    for &r in &order {
                        let v = col[r as usize];
                        if uniq.last() != Some(&v) {
                            uniq.push(v);
                        }
                        rank[r as usize] = (uniq.len() - 1) as u32;
                    }
                    ranks.push(rank);
                    uniques.push(uniq);
                    fallback_levels.push(0);
                }
                FeatureKind::Categorical { n_levels } => {
                    let mut counts = vec![0usize; *n_levels as usize];
                    for &v in col {
                        if let Some(c) = counts.get_mut(v as usize) {
                            *c += 1;
                        }
                    }
                    let majority = counts
                        .iter()
                        .enumerate()
                        .fold((0, 0), |best, (k, &c)| if c > best.1 { (k, c) } else { best })
                        .0;
                    ranks.push(Vec::new());
                    uniques.push(Vec::new());
                    fallback_levels.push(majority as u32);
                }
            }
        }
        TrainingData { x, ranks, uniques, response, fallback_levels }
    }
}

/// Bootstrap draw counts per training row for the tree with this seed.
fn bootstrap_counts(rng: &mut rng::Rng, n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Train a forest.
///
/// `x` must not contain unseen categorical levels (`>= n_levels`), and the
/// response must be complete. A constant response is fine and yields
/// single-leaf trees.
pub fn fit_forest(x: &FeatureMatrix, y: Response<'_>, params: &ForestParams) -> Result<Forest> {
    let n = x.n_rows();
    if x.n_features() == 0 {
        return Err(ForestError::NoFeatures);
    }
    if n < 2 {
        return Err(ForestError::TooFewRows(n));
    }
    if y.len() != n {
        return Err(ForestError::ResponseLength { found: y.len(), expected: n });
    }
    match y {
        Response::Regression(v) => {
            if let Some(row) = v.iter().position(|v| !v.is_finite()) {
                return Err(ForestError::Params(format!("non-finite response at row {row}")));
            }
        }
        Response::Classes { labels, n_classes } => {
            if n_classes == 0 {
                return Err(ForestError::Params("probability forest needs at least one class".into()));
            }
            if let Some(&label) = labels.iter().find(|&&l| l as usize >= n_classes) {
                return Err(ForestError::BadLabel { label, n_classes });
            }
        }
    }
    for (feature, kind) in x.kinds().iter().enumerate() {
        if let FeatureKind::Categorical { n_levels } = *kind {
            if let Some(row) = x.column(feature).iter().position(|&v| v >= n_levels as f64) {
                return Err(ForestError::BadValue { feature, row, value: x.value(row, feature) });
            }
        }
    }
    let mode = y.mode();
    let resolved = params.resolve(x.n_features(), mode)?;
    let data = TrainingData::new(x, y);
    let r = mode.n_outputs();

    let tree_seeds: Vec<u64> = (0..params.num_trees).map(|t| rng::derive_seed(params.seed, &[t as u64])).collect();
    let built: Vec<(Tree, Vec<u32>, Vec<f64>)> = tree_seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = rng::rng_from_seed(seed);
            let counts = bootstrap_counts(&mut rng, n);
            let tree = tree::grow(&data, &counts, resolved, mode, &mut rng);
            let oob_rows: Vec<u32> = (0..n as u32).filter(|&i| counts[i as usize] == 0).collect();
            let mut payload = Vec::with_capacity(oob_rows.len() * r);
            for &i in &oob_rows {
                payload.extend_from_slice(tree.leaf(x, i as usize, &data.fallback_levels));
            }
            (tree, oob_rows, payload)
        })
        .collect();

    let mut sums = vec![0.0; n * r];
    let mut trees_excluding = vec![0u32; n];
    let mut trees = Vec::with_capacity(built.len());
    for (tree, oob_rows, payload) in built {
        for (k, &i) in oob_rows.iter().enumerate() {
            let i = i as usize;
            trees_excluding[i] += 1;
            for (s, p) in sums[i * r..(i + 1) * r].iter_mut().zip(&payload[k * r..(k + 1) * r]) {
                *s += p;
            }
        }
        trees.push(tree);
    }

    Ok(Forest {
        mode,
        kinds: x.kinds().to_vec(),
        fallback_levels: data.fallback_levels,
        trees,
        tree_seeds,
        n_train: n,
        resolved,
        oob: Some(OobRecord { sums, trees_excluding }),
    })
}

impl Forest {
    pub fn mode(&self) -> ForestMode {
        self.mode
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.kinds.len()
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn mtry(&self) -> usize {
        self.resolved.mtry
    }

    pub fn min_node_size(&self) -> usize {
        self.resolved.min_node_size
    }

    pub fn max_depth(&self) -> usize {
        self.resolved.max_depth
    }

    /// Node count of every tree, in tree order.
    pub fn node_counts(&self) -> Vec<usize> {
        self.trees.iter().map(Tree::n_nodes).collect()
    }

    /// Depth of the deepest leaf of every tree (a single leaf has depth 0).
    pub fn depths(&self) -> Vec<usize> {
        self.trees.iter().map(Tree::depth).collect()
    }

    /// Bootstrap draw counts of tree `t`, regenerated from its seed.
    pub fn inbag_counts(&self, t: usize) -> Vec<u32> {
        bootstrap_counts(&mut rng::rng_from_seed(self.tree_seeds[t]), self.n_train)
    }

    /// Leaf payload that tree `t` assigns to row `row` of `x`.
    pub fn tree_predict_row(&self, t: usize, x: &FeatureMatrix, row: usize) -> Result<Vec<f64>> {
        self.check_features(x)?;
        Ok(self.trees[t].leaf(x, row, &self.fallback_levels).to_vec())
    }

    fn check_features(&self, x: &FeatureMatrix) -> Result<()> {
        if x.kinds() != self.kinds.as_slice() {
            return Err(ForestError::FeatureMismatch);
        }
        Ok(())
    }

    /// Average of the leaf payloads over all trees. Categorical values the
    /// forest never saw are routed as the feature's majority training level.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Predictions> {
        self.check_features(x)?;
        let r = self.mode.n_outputs();
        let scale = self.trees.len() as f64;
        let mut values = vec![0.0; x.n_rows() * r];
        values.par_chunks_mut(r * 256).enumerate().for_each(|(chunk, out)| {
            for (k, slot) in out.chunks_mut(r).enumerate() {
                let row = chunk * 256 + k;
                for tree in &self.trees {
                    for (s, p) in slot.iter_mut().zip(tree.leaf(x, row, &self.fallback_levels)) {
                        *s += p;
                    }
                }
                slot.iter_mut().for_each(|s| *s /= scale);
            }
        });
        Ok(Predictions { n_outputs: r, values })
    }

    /// Out-of-bag predictions recorded at training time. Each covered row
    /// averages only the trees whose bootstrap left it out.
    pub fn oob_predict(&self) -> Result<OobPrediction> {
        let oob = self.oob.as_ref().ok_or(ForestError::NoOobRecord)?;
        let r = self.mode.n_outputs();
        let mut values = oob.sums.clone();
        for (i, &count) in oob.trees_excluding.iter().enumerate() {
            for v in &mut values[i * r..(i + 1) * r] {
                *v = if count == 0 { f64::NAN } else { *v / count as f64 };
            }
        }
        Ok(OobPrediction {
            predictions: Predictions { n_outputs: r, values },
            covered: oob.trees_excluding.iter().map(|&c| c > 0).collect(),
            trees_excluding: oob.trees_excluding.clone(),
        })
    }

    /// Drop the out-of-bag record (it is `O(n)` and only needed for error
    /// estimation right after training).
    pub fn discard_oob(&mut self) {
        self.oob = None;
    }
}

#[cfg(test)]
mod tests;
