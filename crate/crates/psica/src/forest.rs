//! Regression random forests, one per treatment arm.
//!
//! Trees are CART-style: each split maximizes the reduction in the
//! (multiplicity-weighted) sum of squared effect deviations among a random
//! subset of `mtry` features. The forest records the bootstrap multiplicity
//! of every training row in every tree, which makes the bias-corrected
//! infinitesimal-jackknife variance of the forest prediction computable
//! after fitting (and after reload from disk).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureColumn, FeatureTable, SplitTest};
use crate::error::{Error, Result};
use crate::rng::stream;

const TREE_STREAM: u64 = 0x7265_6774;

/// Forest fitting parameters. `mtry` is the resolved feature count per
/// split (callers map symbolic "all"/"sqrt" choices onto it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    pub mtry: usize,
    /// Nodes with fewer (weighted) rows than this are not split.
    pub min_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            num_trees: 100,
            mtry: 1,
            min_split: 2,
            max_depth: None,
            seed: 0,
        }
    }
}

/// A fitted regression tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegressionTreeNode {
    Split {
        feature: usize,
        test: SplitTest,
        size: u64,
        left: Box<RegressionTreeNode>,
        right: Box<RegressionTreeNode>,
    },
    Leaf {
        mean: f64,
        size: u64,
    },
}

impl RegressionTreeNode {
    pub fn predict(&self, table: &FeatureTable, row: usize) -> f64 {
        let mut node = self;
        loop {
            match node {
                RegressionTreeNode::Leaf { mean, .. } => return *mean,
                RegressionTreeNode::Split {
                    feature,
                    test,
                    left,
                    right,
                    ..
                } => {
                    node = if test.goes_left(table.value(row, *feature)) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn size(&self) -> u64 {
        match self {
            RegressionTreeNode::Leaf { size, .. } | RegressionTreeNode::Split { size, .. } => *size,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            RegressionTreeNode::Leaf { .. } => 1,
            RegressionTreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// A candidate split with deterministic tie-breaking: higher gain wins,
/// then the lower feature index, then the lower threshold or the
/// lexicographically smaller level set.
struct Candidate {
    gain: f64,
    feature: usize,
    test: SplitTest,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        let Some(other) = other else { return true };
        if self.gain != other.gain {
            return self.gain > other.gain;
        }
        if self.feature != other.feature {
            return self.feature < other.feature;
        }
        match (&self.test, &other.test) {
            (SplitTest::Threshold(a), SplitTest::Threshold(b)) => a < b,
            (SplitTest::LevelSet(a), SplitTest::LevelSet(b)) => a < b,
            _ => false,
        }
    }
}

struct TreeBuilder<'a> {
    table: &'a FeatureTable,
    effects: &'a [f64],
    weights: &'a [u32],
    params: &'a ForestParams,
}

struct NodeStats {
    sum_w: f64,
    sum_wy: f64,
    sum_wy2: f64,
}

impl NodeStats {
    fn from_rows(rows: &[usize], effects: &[f64], weights: &[u32]) -> NodeStats {
        let mut s = NodeStats {
            sum_w: 0.0,
            sum_wy: 0.0,
            sum_wy2: 0.0,
        };
        for &r in rows {
            let w = weights[r] as f64;
            let y = effects[r];
            s.sum_w += w;
            s.sum_wy += w * y;
            s.sum_wy2 += w * y * y;
        }
        s
    }

    fn mean(&self) -> f64 {
        self.sum_wy / self.sum_w
    }

    /// (Σwy)²/Σw — the part of the weighted SSE a split can improve.
    fn score(&self) -> f64 {
        self.sum_wy * self.sum_wy / self.sum_w
    }

    fn sse(&self) -> f64 {
        (self.sum_wy2 - self.score()).max(0.0)
    }
}

impl<'a> TreeBuilder<'a> {
    fn build<R: Rng>(&self, rows: Vec<usize>, depth: usize, rng: &mut R) -> RegressionTreeNode {
        debug_assert!(!rows.is_empty(), "tree node with no effective rows");
        let stats = NodeStats::from_rows(&rows, self.effects, self.weights);
        let size = stats.sum_w as u64;

        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if rows.len() < 2 || (size as usize) < self.params.min_split || depth_capped {
            return RegressionTreeNode::Leaf {
                mean: stats.mean(),
                size,
            };
        }

        let p = self.table.n_features();
        let mut chosen = rand::seq::index::sample(rng, p, self.params.mtry.min(p)).into_vec();
        chosen.sort_unstable();

        let mut best: Option<Candidate> = None;
        for feature in chosen {
            let candidate = match self.table.column(feature) {
                FeatureColumn::Numeric(values) => {
                    self.best_numeric_split(&rows, &stats, feature, values)
                }
                FeatureColumn::Categorical(codes) => {
                    self.best_categorical_split(&rows, &stats, feature, codes)
                }
            };
            if let Some(c) = candidate {
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }

        // Accept only splits that reduce the SSE beyond float noise.
        let tolerance = 1e-12 * stats.sse();
        let Some(best) = best.filter(|c| c.gain > tolerance) else {
            return RegressionTreeNode::Leaf {
                mean: stats.mean(),
                size,
            };
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| best.test.goes_left(self.table.value(r, best.feature)));
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        RegressionTreeNode::Split {
            feature: best.feature,
            test: best.test,
            size,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_numeric_split(
        &self,
        rows: &[usize],
        stats: &NodeStats,
        feature: usize,
        values: &[f64],
    ) -> Option<Candidate> {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

        let parent_score = stats.score();
        let mut best: Option<Candidate> = None;
        let mut sum_w = 0.0;
        let mut sum_wy = 0.0;
        for window in order.windows(2) {
            let (r, next) = (window[0], window[1]);
            let w = self.weights[r] as f64;
            sum_w += w;
            sum_wy += w * self.effects[r];
            let (v, v_next) = (values[r], values[next]);
            if v >= v_next {
                continue;
            }
            let rest_w = stats.sum_w - sum_w;
            let rest_wy = stats.sum_wy - sum_wy;
            let gain = sum_wy * sum_wy / sum_w + rest_wy * rest_wy / rest_w - parent_score;
            let candidate = Candidate {
                gain,
                feature,
                test: SplitTest::Threshold(v.midpoint(v_next)),
            };
            if candidate.beats(&best) {
                best = Some(candidate);
            }
        }
        best
    }

    fn best_categorical_split(
        &self,
        rows: &[usize],
        stats: &NodeStats,
        feature: usize,
        codes: &[u32],
    ) -> Option<Candidate> {
        // Per-level totals for the levels present at this node.
        let mut level_codes: Vec<u32> = rows.iter().map(|&r| codes[r]).collect();
        level_codes.sort_unstable();
        level_codes.dedup();
        if level_codes.len() < 2 {
            return None;
        }
        let index_of = |code: u32| level_codes.binary_search(&code).unwrap();
        let mut w_by_level = vec![0.0f64; level_codes.len()];
        let mut wy_by_level = vec![0.0f64; level_codes.len()];
        for &r in rows {
            let i = index_of(codes[r]);
            let w = self.weights[r] as f64;
            w_by_level[i] += w;
            wy_by_level[i] += w * self.effects[r];
        }

        let parent_score = stats.score();
        let gain_of = |sum_w: f64, sum_wy: f64| {
            let rest_w = stats.sum_w - sum_w;
            let rest_wy = stats.sum_wy - sum_wy;
            sum_wy * sum_wy / sum_w + rest_wy * rest_wy / rest_w - parent_score
        };

        let n_levels = level_codes.len();
        let mut best: Option<Candidate> = None;
        if n_levels <= 10 {
            // Exhaustive binary partitions; the last level stays on the
            // right so each partition is visited once.
            for mask in 1u32..(1 << (n_levels - 1)) {
                let mut sum_w = 0.0;
                let mut sum_wy = 0.0;
                let mut subset = Vec::new();
                for (i, &code) in level_codes.iter().enumerate().take(n_levels - 1) {
                    if mask & (1 << i) != 0 {
                        sum_w += w_by_level[i];
                        sum_wy += wy_by_level[i];
                        subset.push(code);
                    }
                }
                let candidate = Candidate {
                    gain: gain_of(sum_w, sum_wy),
                    feature,
                    test: SplitTest::LevelSet(subset),
                };
                if candidate.beats(&best) {
                    best = Some(candidate);
                }
            }
        } else {
            // Classical reduction: order levels by mean effect, then scan
            // as if ordinal.
            let mut order: Vec<usize> = (0..n_levels).collect();
            order.sort_by(|&a, &b| {
                let ma = wy_by_level[a] / w_by_level[a];
                let mb = wy_by_level[b] / w_by_level[b];
                ma.total_cmp(&mb).then(level_codes[a].cmp(&level_codes[b]))
            });
            let mut sum_w = 0.0;
            let mut sum_wy = 0.0;
            let mut subset = Vec::new();
            for &i in order.iter().take(n_levels - 1) {
                sum_w += w_by_level[i];
                sum_wy += wy_by_level[i];
                subset.push(level_codes[i]);
                let mut sorted = subset.clone();
                sorted.sort_unstable();
                let candidate = Candidate {
                    gain: gain_of(sum_w, sum_wy),
                    feature,
                    test: SplitTest::LevelSet(sorted),
                };
                if candidate.beats(&best) {
                    best = Some(candidate);
                }
            }
        }
        best
    }
}

/// Fits one regression tree on rows with the given multiplicities.
/// Rows with multiplicity zero are excluded.
pub fn fit_tree<R: Rng>(
    table: &FeatureTable,
    effects: &[f64],
    weights: &[u32],
    params: &ForestParams,
    rng: &mut R,
) -> RegressionTreeNode {
    let rows: Vec<usize> = (0..table.n_rows()).filter(|&r| weights[r] > 0).collect();
    let builder = TreeBuilder {
        table,
        effects,
        weights,
        params,
    };
    builder.build(rows, 0, rng)
}

/// A bagged ensemble of regression trees fit to bootstrap resamples of one
/// treatment arm. Immutable after fitting; prediction is safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<RegressionTreeNode>,
    /// `membership_counts[b][i]` is the multiplicity of training row `i`
    /// in the bootstrap resample behind tree `b`.
    membership_counts: Vec<Vec<u32>>,
    params: ForestParams,
    training_n: usize,
    /// Sample variance of the arm's effects; scales the variance floor.
    effect_variance: f64,
}

pub const FOREST_FORMAT: &str = "psica-forest";
pub const FOREST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestDocument {
    format: String,
    version: u32,
    model: ForestModel,
}

impl ForestModel {
    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTreeNode] {
        &self.trees
    }

    pub fn membership_counts(&self) -> &[Vec<u32>] {
        &self.membership_counts
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn training_n(&self) -> usize {
        self.training_n
    }

    /// Mean prediction over all trees.
    pub fn predict(&self, table: &FeatureTable, row: usize) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(table, row)).sum();
        sum / self.trees.len() as f64
    }

    /// Per-tree predictions, in tree order.
    pub fn tree_predictions(&self, table: &FeatureTable, row: usize) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(table, row)).collect()
    }

    /// Bias-corrected infinitesimal-jackknife variance of the forest
    /// prediction at one query row: the sum over training rows of the
    /// squared covariance between bootstrap multiplicity and tree
    /// prediction, minus the `n/B²`-scaled Monte-Carlo term, clamped below
    /// at a floor of `1e-12` times the arm's effect variance.
    pub fn ij_variance(&self, table: &FeatureTable, row: usize) -> f64 {
        let preds = self.tree_predictions(table, row);
        self.ij_variance_from_predictions(&preds)
    }

    pub fn ij_variance_from_predictions(&self, tree_preds: &[f64]) -> f64 {
        let b = self.trees.len() as f64;
        let n = self.training_n;
        let mean = tree_preds.iter().sum::<f64>() / b;

        let mut cov_raw = vec![0.0f64; n];
        let mut count_total = vec![0.0f64; n];
        let mut dev_total = 0.0f64;
        let mut dev_sq_total = 0.0f64;
        for (counts, &pred) in self.membership_counts.iter().zip(tree_preds) {
            let dev = pred - mean;
            dev_total += dev;
            dev_sq_total += dev * dev;
            for i in 0..n {
                let c = counts[i] as f64;
                cov_raw[i] += c * dev;
                count_total[i] += c;
            }
        }

        let mut variance = 0.0;
        for i in 0..n {
            let cov = (cov_raw[i] - count_total[i] / b * dev_total) / b;
            variance += cov * cov;
        }
        let monte_carlo_bias = n as f64 / (b * b) * dev_sq_total;
        (variance - monte_carlo_bias).max(self.variance_floor())
    }

    pub fn variance_floor(&self) -> f64 {
        1e-12 * self.effect_variance
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ForestDocument {
            format: FOREST_FORMAT.to_string(),
            version: FOREST_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<ForestModel> {
        let doc: ForestDocument = serde_json::from_str(text)?;
        if doc.format != FOREST_FORMAT {
            return Err(Error::BadModel(format!(
                "expected format '{FOREST_FORMAT}', found '{}'",
                doc.format
            )));
        }
        if doc.version != FOREST_VERSION {
            return Err(Error::BadModel(format!(
                "unsupported forest document version {}",
                doc.version
            )));
        }
        Ok(doc.model)
    }
}

/// Fits `params.num_trees` trees, each on its own bootstrap resample of
/// `arm`, recording resample multiplicities. Trees own independent random
/// streams derived from `(seed, tree index)`, so the result is identical
/// for a fixed seed under any parallel schedule.
pub fn fit_forest(arm: &Dataset, params: &ForestParams) -> Result<ForestModel> {
    let n = arm.n_rows();
    if n < 2 {
        return Err(Error::InvalidParam(format!(
            "forest fitting needs at least 2 rows, got {n}"
        )));
    }
    if params.num_trees == 0 {
        return Err(Error::InvalidParam("num_trees must be at least 1".into()));
    }
    let p = arm.n_features();
    if params.mtry == 0 || params.mtry > p {
        return Err(Error::InvalidParam(format!(
            "mtry must be in 1..={p}, got {}",
            params.mtry
        )));
    }

    let fitted: Vec<(RegressionTreeNode, Vec<u32>)> = (0..params.num_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(params.seed, &[TREE_STREAM, b as u64]);
            let counts = crate::dataset::bootstrap_counts(n, &mut rng);
            let tree = fit_tree(arm.features(), arm.effects(), &counts, params, &mut rng);
            (tree, counts)
        })
        .collect();

    let mut trees = Vec::with_capacity(fitted.len());
    let mut membership_counts = Vec::with_capacity(fitted.len());
    for (tree, counts) in fitted {
        debug_assert_eq!(counts.iter().map(|&c| c as usize).sum::<usize>(), n);
        trees.push(tree);
        membership_counts.push(counts);
    }

    let mean = arm.effects().iter().sum::<f64>() / n as f64;
    let effect_variance = arm
        .effects()
        .iter()
        .map(|y| (y - mean) * (y - mean))
        .sum::<f64>()
        / (n - 1) as f64;

    Ok(ForestModel {
        trees,
        membership_counts,
        params: params.clone(),
        training_n: n,
        effect_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Feature, FeatureKind, FeatureSchema};
    use rand::Rng;

    fn numeric_table(columns: Vec<Vec<f64>>) -> FeatureTable {
        let schema = FeatureSchema::new(
            (0..columns.len())
                .map(|j| Feature {
                    name: format!("x{}", j + 1),
                    kind: FeatureKind::Numeric,
                })
                .collect(),
        )
        .unwrap();
        FeatureTable::new(schema, columns.into_iter().map(FeatureColumn::Numeric).collect())
            .unwrap()
    }

    fn numeric_dataset(x: Vec<f64>, y: Vec<f64>) -> Dataset {
        let n = x.len();
        let table = numeric_table(vec![x]);
        // Alternating two-arm assignment; forest fitting only uses one arm.
        let treatments = (0..n).map(|i| (i % 2) as u32).collect();
        Dataset::new(table, y, treatments, vec!["a".into(), "b".into()]).unwrap()
    }

    fn unit_weights(n: usize) -> Vec<u32> {
        vec![1; n]
    }

    #[test]
    fn constant_effects_yield_single_leaf() {
        let table = numeric_table(vec![vec![0.0, 1.0, 2.0, 3.0]]);
        let params = ForestParams {
            mtry: 1,
            min_split: 2,
            ..ForestParams::default()
        };
        let mut rng = stream(1, &[]);
        let tree = fit_tree(&table, &[2.5; 4], &unit_weights(4), &params, &mut rng);
        match tree {
            RegressionTreeNode::Leaf { mean, size } => {
                assert_eq!(mean, 2.5);
                assert_eq!(size, 4);
            }
            other => panic!("expected a leaf, got {other:?}"),
        }
    }

    #[test]
    fn step_function_splits_in_the_gap() {
        // Oracle: enumerate every candidate threshold and verify the fitted
        // root split attains the maximum SSE reduction.
        let mut rng = stream(17, &[]);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let table = numeric_table(vec![x.clone()]);
        let params = ForestParams {
            mtry: 1,
            min_split: 2,
            ..ForestParams::default()
        };
        let tree = fit_tree(&table, &y, &unit_weights(n), &params, &mut rng);
        let RegressionTreeNode::Split { test: SplitTest::Threshold(t), .. } = &tree else {
            panic!("expected a root split");
        };

        // Brute-force search over midpoints.
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let mean_all = y.iter().sum::<f64>() / n as f64;
        let sse = |vals: &[(f64, f64)]| {
            let m = vals.iter().map(|v| v.1).sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v.1 - m) * (v.1 - m)).sum::<f64>()
        };
        let pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        let sse_all = pairs
            .iter()
            .map(|v| (v.1 - mean_all) * (v.1 - mean_all))
            .sum::<f64>();
        let mut best_gain = f64::NEG_INFINITY;
        let mut best_threshold = f64::NAN;
        for w in sorted.windows(2) {
            if w[0] >= w[1] {
                continue;
            }
            let mid = (w[0] + w[1]) / 2.0;
            let left: Vec<(f64, f64)> = pairs.iter().copied().filter(|v| v.0 <= mid).collect();
            let right: Vec<(f64, f64)> = pairs.iter().copied().filter(|v| v.0 > mid).collect();
            let gain = sse_all - sse(&left) - sse(&right);
            if gain > best_gain {
                best_gain = gain;
                best_threshold = mid;
            }
        }
        assert_eq!(*t, best_threshold);

        // The max-gain threshold for a clean step sits in the sign-change gap.
        let below = sorted.iter().copied().filter(|&v| v <= 0.0).fold(f64::MIN, f64::max);
        let above = sorted.iter().copied().filter(|&v| v > 0.0).fold(f64::MAX, f64::min);
        assert!(*t > below && *t < above, "threshold {t} outside ({below}, {above})");
    }

    #[test]
    fn min_split_stops_small_nodes() {
        let table = numeric_table(vec![vec![0.0, 1.0]]);
        let params = ForestParams {
            mtry: 1,
            min_split: 3,
            ..ForestParams::default()
        };
        let mut rng = stream(4, &[]);
        let tree = fit_tree(&table, &[1.0, 3.0], &unit_weights(2), &params, &mut rng);
        match tree {
            RegressionTreeNode::Leaf { mean, size } => {
                assert_eq!(mean, 2.0);
                assert_eq!(size, 2);
            }
            other => panic!("expected a leaf, got {other:?}"),
        }
    }

    #[test]
    fn categorical_split_separates_levels() {
        let schema = FeatureSchema::new(vec![Feature {
            name: "g".into(),
            kind: FeatureKind::Categorical {
                levels: vec!["a".into(), "b".into(), "c".into()],
            },
        }])
        .unwrap();
        let codes = vec![0, 1, 2, 0, 1, 2, 0, 1];
        let y: Vec<f64> = codes
            .iter()
            .map(|&c| if c == 2 { 10.0 } else { 0.0 })
            .collect();
        let table =
            FeatureTable::new(schema, vec![FeatureColumn::Categorical(codes)]).unwrap();
        let params = ForestParams {
            mtry: 1,
            min_split: 2,
            ..ForestParams::default()
        };
        let mut rng = stream(9, &[]);
        let tree = fit_tree(&table, &y, &unit_weights(8), &params, &mut rng);
        let RegressionTreeNode::Split { test: SplitTest::LevelSet(set), left, right, .. } = &tree
        else {
            panic!("expected a categorical root split");
        };
        // Level "c" must end up alone on one side.
        let isolated_left = set == &vec![2];
        let isolated_right = set == &vec![0, 1];
        assert!(isolated_left || isolated_right, "split set {set:?}");
        let (lo, hi) = if isolated_left {
            (right, left)
        } else {
            (left, right)
        };
        assert_eq!(lo.predict(&table, 0), 0.0);
        assert_eq!(hi.predict(&table, 2), 10.0);
    }

    #[test]
    fn constant_forest_predicts_constant_exactly() {
        let d = numeric_dataset((0..20).map(|i| i as f64).collect(), vec![2.5; 20]);
        let params = ForestParams {
            num_trees: 37,
            mtry: 1,
            min_split: 2,
            seed: 5,
            ..ForestParams::default()
        };
        let f = fit_forest(&d, &params).unwrap();
        for row in 0..d.n_rows() {
            assert_eq!(f.predict(d.features(), row), 2.5);
        }
        assert!(f
            .trees()
            .iter()
            .all(|t| matches!(t, RegressionTreeNode::Leaf { .. })));
    }

    #[test]
    fn same_seed_gives_identical_forests() {
        let mut rng = stream(33, &[]);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| v * 2.0 + rng.gen_range(-0.1..0.1)).collect();
        let d = numeric_dataset(x, y);
        let params = ForestParams {
            num_trees: 8,
            mtry: 1,
            min_split: 5,
            seed: 11,
            ..ForestParams::default()
        };
        let a = fit_forest(&d, &params).unwrap();
        let b = fit_forest(&d, &params).unwrap();
        assert_eq!(a.membership_counts(), b.membership_counts());
        assert_eq!(a, b);
    }

    #[test]
    fn forest_tracks_m1_arm_mean_function() {
        // The first arm of the M1 benchmark: mean 2·tanh(2x) + 3, noise sd
        // 0.8, two irrelevant features.
        let mut rng = stream(2718, &[]);
        let n = 450;
        let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.gen_range(-1.0..1.0);
            cols[0].push(x);
            cols[1].push(rng.gen_range(-1.0..1.0));
            cols[2].push(rng.gen_range(-1.0..1.0));
            let noise: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.8;
            y.push(2.0 * (2.0 * x).tanh() + 3.0 + noise);
        }
        let table = numeric_table(cols);
        let treatments = vec![0u32; n];
        let d = Dataset::new(table, y, treatments, vec!["t1".into(), "t2".into()]).unwrap();
        let params = ForestParams {
            num_trees: 100,
            mtry: 3,
            min_split: 45,
            seed: 7,
            ..ForestParams::default()
        };
        let f = fit_forest(&d, &params).unwrap();

        let queries = numeric_table(vec![vec![-1.0, 0.0, 1.0], vec![0.0; 3], vec![0.0; 3]]);
        for row in 0..3 {
            let x = queries.numeric_column(0)[row];
            let truth = 2.0 * (2.0 * x).tanh() + 3.0;
            let pred = f.predict(&queries, row);
            assert!(
                (pred - truth).abs() <= 0.15,
                "x={x}: predicted {pred}, true {truth}"
            );
        }
    }

    #[test]
    fn prediction_is_mean_of_tree_predictions() {
        let mut rng = stream(88, &[]);
        let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| v.sin() + rng.gen_range(-0.2..0.2)).collect();
        let d = numeric_dataset(x, y);
        let params = ForestParams {
            num_trees: 11,
            mtry: 1,
            min_split: 4,
            seed: 3,
            ..ForestParams::default()
        };
        let f = fit_forest(&d, &params).unwrap();
        for row in [0usize, 7, 23] {
            let per_tree = f.tree_predictions(d.features(), row);
            let mean = per_tree.iter().sum::<f64>() / per_tree.len() as f64;
            assert_eq!(f.predict(d.features(), row), mean);
        }
    }

    #[test]
    fn tree_order_permutation_keeps_predictions() {
        let mut rng = stream(90, &[]);
        let x: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| 3.0 * v + rng.gen_range(-0.3..0.3)).collect();
        let d = numeric_dataset(x, y);
        let params = ForestParams {
            num_trees: 16,
            mtry: 1,
            min_split: 5,
            seed: 21,
            ..ForestParams::default()
        };
        let f = fit_forest(&d, &params).unwrap();
        let mut reversed = f.clone();
        reversed.trees.reverse();
        reversed.membership_counts.reverse();
        for row in 0..d.n_rows() {
            let a = f.predict(d.features(), row);
            let b = reversed.predict(d.features(), row);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn ij_variance_is_zero_for_constant_data() {
        let d = numeric_dataset((0..30).map(|i| i as f64).collect(), vec![1.5; 30]);
        let params = ForestParams {
            num_trees: 25,
            mtry: 1,
            min_split: 3,
            seed: 2,
            ..ForestParams::default()
        };
        let f = fit_forest(&d, &params).unwrap();
        assert_eq!(f.ij_variance(d.features(), 0), 0.0);
    }

    #[test]
    fn ij_variance_never_negative() {
        let mut rng = stream(412, &[]);
        let x: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| v + rng.gen_range(-0.5..0.5)).collect();
        let d = numeric_dataset(x, y);
        let params = ForestParams {
            num_trees: 50,
            mtry: 1,
            min_split: 8,
            seed: 6,
            ..ForestParams::default()
        };
        let f = fit_forest(&d, &params).unwrap();
        let queries: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let table = numeric_table(vec![queries]);
        for row in 0..table.n_rows() {
            assert!(f.ij_variance(&table, row) >= 0.0);
        }
    }

    #[test]
    fn forest_round_trips_through_json() {
        let mut rng = stream(55, &[]);
        let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| v * v).collect();
        let d = numeric_dataset(x, y);
        let params = ForestParams {
            num_trees: 6,
            mtry: 1,
            min_split: 4,
            seed: 14,
            ..ForestParams::default()
        };
        let f = fit_forest(&d, &params).unwrap();
        let reloaded = ForestModel::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, reloaded);
        // The jackknife variance must be recomputable after reload.
        assert_eq!(
            f.ij_variance(d.features(), 3),
            reloaded.ij_variance(d.features(), 3)
        );
    }
}
