use rand::seq::index;

use super::{FeatureKind, FeatureMatrix, ForestMode, Resolved, Response, TrainingData};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Leaf {
        offset: u32,
    },
    /// Rows with `value <= threshold` go left.
    Numeric {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Rows whose level bit is set in `left_set` go left.
    Categorical {
        feature: u32,
        left_set: Vec<u64>,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    pub nodes: Vec<Node>,
    /// Leaf payloads, `n_outputs` values per leaf.
    pub leaf_values: Vec<f64>,
    pub n_outputs: usize,
}

#[inline]
fn bit(set: &[u64], level: usize) -> bool {
    set.get(level / 64).is_some_and(|w| (w >> (level % 64)) & 1 == 1)
}

impl Tree {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Numeric { left, right, .. } | Node::Categorical { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    #[inline]
    pub fn leaf(&self, x: &FeatureMatrix, row: usize, fallback: &[u32]) -> &[f64] {
        let mut id = 0usize;
        loop {
            match &self.nodes[id] {
                Node::Leaf { offset } => {
                    let o = *offset as usize;
                    return &self.leaf_values[o..o + self.n_outputs];
                }
                Node::Numeric { feature, threshold, left, right } => {
                    id = if x.value(row, *feature as usize) <= *threshold { *left } else { *right } as usize;
                }
                Node::Categorical { feature, left_set, left, right } => {
                    let f = *feature as usize;
                    let FeatureKind::Categorical { n_levels } = x.kinds()[f] else { unreachable!() };
                    let mut level = x.value(row, f) as usize;
                    if level >= n_levels as usize {
                        level = fallback[f] as usize;
                    }
                    id = if bit(left_set, level) { *left } else { *right } as usize;
                }
            }
        }
    }
}

/// Response summary of a set of weighted rows.
#[derive(Clone, Debug)]
struct Stats {
    weight: f64,
    /// Regression: weighted sum of y. Probability: unused.
    sum: f64,
    /// Probability: weighted class counts.
    counts: Vec<f64>,
}

impl Stats {
    fn new(r: usize) -> Self {
        Stats { weight: 0.0, sum: 0.0, counts: vec![0.0; r] }
    }
}

enum SplitRule {
    Numeric(f64),
    Categorical(Vec<u64>),
}

struct Candidate {
    feature: usize,
    gain: f64,
    rule: SplitRule,
}

struct Grower<'a, 'd> {
    data: &'a TrainingData<'d>,
    weights: &'a [u32],
    params: Resolved,
    mode: ForestMode,
    n_outputs: usize,
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
    keys: Vec<u64>,
    scratch: Vec<u32>,
    radix_buf: Vec<u64>,
}

/// Sorts `(rank << 32) | row` keys. Rows arrive in ascending order, so a
/// stable LSD radix pass over the rank bytes gives the same order as a full
/// key sort.
fn sort_keys(keys: &mut Vec<u64>, buf: &mut Vec<u64>, n_unique: usize) {
    if keys.len() < 128 {
        keys.sort_unstable();
        return;
    }
    let rank_bits = usize::BITS - n_unique.saturating_sub(1).leading_zeros();
    let passes = rank_bits.div_ceil(8);
    buf.clear();
    buf.resize(keys.len(), 0);
    for pass in 0..passes {
        let shift = 32 + 8 * pass;
        let mut offsets = [0usize; 257];
        for &k in keys.iter() {
            offsets[((k >> shift) & 0xFF) as usize + 1] += 1;
        }
        if offsets.contains(&keys.len()) {
            continue;
        }
        for b in 0..256 {
            offsets[b + 1] += offsets[b];
        }
        for &k in keys.iter() {
            let slot = &mut offsets[((k >> shift) & 0xFF) as usize];
            buf[*slot] = k;
            *slot += 1;
        }
        std::mem::swap(keys, buf);
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Grow one tree on the rows with non-zero bootstrap `counts`.
pub(crate) fn grow(
    data: &TrainingData<'_>,
    counts: &[u32],
    params: Resolved,
    mode: ForestMode,
    rng: &mut Rng,
) -> Tree {
    let mut samples: Vec<u32> = (0..counts.len() as u32).filter(|&i| counts[i as usize] > 0).collect();
    let n_outputs = mode.n_outputs();
    let mut g = Grower {
        data,
        weights: counts,
        params,
        mode,
        n_outputs,
        nodes: Vec::new(),
        leaf_values: Vec::new(),
        keys: Vec::new(),
        scratch: Vec::new(),
        radix_buf: Vec::new(),
    };
    // (node id, start, end, depth)
    let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
    g.nodes.push(Node::Leaf { offset: 0 });
    while let Some((id, start, end, depth)) = stack.pop() {
        let stats = g.stats(&samples[start..end]);
        let split = if g.splittable(&samples[start..end], &stats, depth) {
            g.best_split(&samples[start..end], &stats, rng)
        } else {
            None
        };
        match split {
            None => g.nodes[id] = g.make_leaf(&stats),
            Some(c) => {
                let n_left = g.partition(&mut samples[start..end], &c);
                let left = g.nodes.len();
                g.nodes.push(Node::Leaf { offset: 0 });
                g.nodes.push(Node::Leaf { offset: 0 });
                let (left, right) = (left as u32, left as u32 + 1);
                let feature = c.feature as u32;
                g.nodes[id] = match c.rule {
                    SplitRule::Numeric(threshold) => Node::Numeric { feature, threshold, left, right },
                    SplitRule::Categorical(left_set) => Node::Categorical { feature, left_set, left, right },
                };
                // right first so the left subtree is grown first
                stack.push((right as usize, start + n_left, end, depth + 1));
                stack.push((left as usize, start, start + n_left, depth + 1));
            }
        }
    }
    Tree { nodes: g.nodes, leaf_values: g.leaf_values, n_outputs }
}

impl Grower<'_, '_> {
    fn stats(&self, rows: &[u32]) -> Stats {
        let mut s = Stats::new(self.n_outputs);
        for &i in rows {
            let w = self.weights[i as usize] as f64;
            s.weight += w;
            match self.data.response {
                Response::Regression(y) => s.sum += w * y[i as usize],
                Response::Classes { labels, .. } => s.counts[labels[i as usize] as usize] += w,
            }
        }
        s
    }

    fn splittable(&self, rows: &[u32], stats: &Stats, depth: usize) -> bool {
        if rows.len() < 2 || stats.weight <= self.params.min_node_size as f64 {
            return false;
        }
        if self.params.max_depth > 0 && depth >= self.params.max_depth {
            return false;
        }
        match self.data.response {
            Response::Regression(y) => {
                let first = y[rows[0] as usize];
                rows.iter().any(|&i| y[i as usize] != first)
            }
            Response::Classes { .. } => stats.counts.iter().all(|&c| c < stats.weight),
        }
    }

    fn make_leaf(&mut self, stats: &Stats) -> Node {
        let offset = self.leaf_values.len() as u32;
        match self.mode {
            ForestMode::Regression => self.leaf_values.push(stats.sum / stats.weight),
            ForestMode::Probability { .. } => {
                self.leaf_values.extend(stats.counts.iter().map(|c| c / stats.weight));
            }
        }
        Node::Leaf { offset }
    }

    /// Score whose increase over the parent equals the impurity decrease:
    /// `sum^2 / w` (variance) or `sum_k c_k^2 / w` (Gini).
    fn parent_score(&self, stats: &Stats) -> f64 {
        match self.mode {
            ForestMode::Regression => stats.sum * stats.sum / stats.weight,
            ForestMode::Probability { .. } => stats.counts.iter().map(|c| c * c).sum::<f64>() / stats.weight,
        }
    }

    /// Weighted node impurity (SSE or Gini mass), used to reject gains that
    /// are only rounding noise.
    fn impurity(&self, rows: &[u32], stats: &Stats) -> f64 {
        match self.data.response {
            Response::Regression(y) => {
                let mean = stats.sum / stats.weight;
                rows.iter()
                    .map(|&i| {
                        let d = y[i as usize] - mean;
                        self.weights[i as usize] as f64 * d * d
                    })
                    .sum()
            }
            Response::Classes { .. } => stats.weight - self.parent_score(stats),
        }
    }

    fn best_split(&mut self, rows: &[u32], stats: &Stats, rng: &mut Rng) -> Option<Candidate> {
        let p = self.data.x.n_features();
        let mut features = index::sample(rng, p, self.params.mtry).into_vec();
        features.sort_unstable();
        let parent = self.parent_score(stats);
        let min_gain = 1e-12 * self.impurity(rows, stats);
        let mut best: Option<Candidate> = None;
        for f in features {
            let found = match self.data.x.kinds()[f] {
                FeatureKind::Numeric => self.numeric_split(rows, stats, f),
                FeatureKind::Categorical { n_levels } => self.categorical_split(rows, stats, f, n_levels as usize),
            };
            if let Some((score, rule)) = found {
                let gain = score - parent;
                if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate { feature: f, gain, rule });
                }
            }
        }
        best
    }

    fn add(&self, s: &mut Stats, sq: &mut f64, i: usize, sign: f64) {
        let w = self.weights[i] as f64 * sign;
        s.weight += w;
        match self.data.response {
            Response::Regression(y) => s.sum += w * y[i],
            Response::Classes { labels, .. } => {
                let c = &mut s.counts[labels[i] as usize];
                *sq -= *c * *c;
                *c += w;
                *sq += *c * *c;
            }
        }
    }

    fn split_score(&self, left: &Stats, right: &Stats, sq_left: f64, sq_right: f64) -> f64 {
        match self.mode {
            ForestMode::Regression => left.sum * left.sum / left.weight + right.sum * right.sum / right.weight,
            ForestMode::Probability { .. } => sq_left / left.weight + sq_right / right.weight,
        }
    }

    fn numeric_split(&mut self, rows: &[u32], stats: &Stats, f: usize) -> Option<(f64, SplitRule)> {
        let n_unique = self.data.uniques[f].len();
        if n_unique < 2 {
            return None;
        }
        self.numeric_split_sorted(rows, stats, f)
    }

    fn numeric_split_sorted(&mut self, rows: &[u32], stats: &Stats, f: usize) -> Option<(f64, SplitRule)> {
        let rank = &self.data.ranks[f];
        let mut keys = std::mem::take(&mut self.keys);
        keys.clear();
        keys.extend(rows.iter().map(|&i| ((rank[i as usize] as u64) << 32) | i as u64));
        sort_keys(&mut keys, &mut self.radix_buf, self.data.uniques[f].len());
        let best = if keys[0] >> 32 == keys[keys.len() - 1] >> 32 {
            None
        } else {
            match self.data.response {
                Response::Regression(y) => self.scan_regression(&keys, stats, y),
                Response::Classes { .. } => self.scan_generic(&keys, stats),
            }
        };
        self.keys = keys;
        let (score, r) = best?;
        let uniq = &self.data.uniques[f];
        // next distinct value present in the node
        let hi_rank = self.keys.iter().map(|k| (k >> 32) as u32).find(|&x| x > r).expect("split has a right side");
        Some((score, SplitRule::Numeric(midpoint(uniq[r as usize], uniq[hi_rank as usize]))))
    }

    /// Best (score, last rank on the left) over rank-sorted `keys`.
    fn scan_regression(&self, keys: &[u64], stats: &Stats, y: &[f64]) -> Option<(f64, u32)> {
        let (total_w, total_s) = (stats.weight, stats.sum);
        let (mut lw, mut ls) = (0.0, 0.0);
        let mut best: Option<(f64, u32)> = None;
        for pair in keys.windows(2) {
            let i = (pair[0] & 0xFFFF_FFFF) as usize;
            let w = self.weights[i] as f64;
            lw += w;
            ls += w * y[i];
            let r_here = (pair[0] >> 32) as u32;
            if r_here == (pair[1] >> 32) as u32 {
                continue;
            }
            let rs = total_s - ls;
            let score = ls * ls / lw + rs * rs / (total_w - lw);
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, r_here));
            }
        }
        best
    }

    fn scan_generic(&self, keys: &[u64], stats: &Stats) -> Option<(f64, u32)> {
        let mut left = Stats::new(self.n_outputs);
        let mut right = stats.clone();
        let mut sq_left = 0.0;
        let mut sq_right: f64 = right.counts.iter().map(|c| c * c).sum();
        let mut best: Option<(f64, u32)> = None;
        for pair in keys.windows(2) {
            let i = (pair[0] & 0xFFFF_FFFF) as usize;
            self.add(&mut left, &mut sq_left, i, 1.0);
            self.add(&mut right, &mut sq_right, i, -1.0);
            let r_here = (pair[0] >> 32) as u32;
            if r_here == (pair[1] >> 32) as u32 {
                continue;
            }
            let score = self.split_score(&left, &right, sq_left, sq_right);
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, r_here));
            }
        }
        best
    }

    fn categorical_split(&mut self, rows: &[u32], stats: &Stats, f: usize, n_levels: usize) -> Option<(f64, SplitRule)> {
        let col = self.data.x.column(f);
        let mut per_level: Vec<Stats> = vec![Stats::new(self.n_outputs); n_levels];
        for &i in rows {
            let mut sq = 0.0;
            let level = col[i as usize] as usize;
            self.add(&mut per_level[level], &mut sq, i as usize, 1.0);
        }
        let mut present: Vec<(usize, f64)> = per_level
            .iter()
            .enumerate()
            .filter(|(_, s)| s.weight > 0.0)
            .map(|(k, s)| {
                let key = match self.mode {
                    ForestMode::Regression => s.sum / s.weight,
                    ForestMode::Probability { .. } => s.counts[0] / s.weight,
                };
                (k, key)
            })
            .collect();
        if present.len() < 2 {
            return None;
        }
        present.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

        let mut left = Stats::new(self.n_outputs);
        let mut right = stats.clone();
        let mut best: Option<(f64, usize)> = None;
        for (pos, &(k, _)) in present.iter().enumerate().take(present.len() - 1) {
            let s = &per_level[k];
            left.weight += s.weight;
            right.weight -= s.weight;
            left.sum += s.sum;
            right.sum -= s.sum;
            for (c, (l, r)) in s.counts.iter().zip(left.counts.iter_mut().zip(right.counts.iter_mut())) {
                *l += c;
                *r -= c;
            }
            let sq_left = left.counts.iter().map(|c| c * c).sum();
            let sq_right = right.counts.iter().map(|c| c * c).sum();
            let score = self.split_score(&left, &right, sq_left, sq_right);
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, pos));
            }
        }
        let (score, cut) = best?;
        let words = n_levels.div_ceil(64);
        let mut left_set = vec![0u64; words];
        let mut left_weight = 0.0;
        for &(k, _) in &present[..=cut] {
            left_set[k / 64] |= 1 << (k % 64);
            left_weight += per_level[k].weight;
        }
        // levels absent from this node follow the majority level, or the
        // heavier child when the majority level is absent too
        let fallback = self.data.fallback_levels[f] as usize;
        let absent_left = if per_level[fallback].weight > 0.0 {
            bit(&left_set, fallback)
        } else {
            left_weight >= stats.weight - left_weight
        };
        if absent_left {
            for (k, s) in per_level.iter().enumerate() {
                if s.weight == 0.0 {
                    left_set[k / 64] |= 1 << (k % 64);
                }
            }
        }
        Some((score, SplitRule::Categorical(left_set)))
    }

    /// Stable partition of `rows` into (left, right); returns the left count.
    fn partition(&mut self, rows: &mut [u32], c: &Candidate) -> usize {
        let col = self.data.x.column(c.feature);
        let goes_left = |i: u32| match &c.rule {
            SplitRule::Numeric(t) => col[i as usize] <= *t,
            SplitRule::Categorical(set) => bit(set, col[i as usize] as usize),
        };
        self.scratch.clear();
        let mut n_left = 0;
        for k in 0..rows.len() {
            let i = rows[k];
            if goes_left(i) {
                rows[n_left] = i;
                n_left += 1;
            } else {
                self.scratch.push(i);
            }
        }
        rows[n_left..].copy_from_slice(&self.scratch);
        n_left
    }
}
