//! The PSICA tree: a decision tree over best-treatment probabilities.
//!
//! Each observation carries a probability vector `P_i` (one entry per
//! treatment, summing to one). The tree recursively splits the feature
//! space to maximize information gain — the drop in a misassignment-cost
//! loss — and labels every node with the treatments that can be ruled out
//! at risk level alpha (useless) and the rest (potential), together with
//! the renormalized probabilities over the potential set.
//!
//! Growth method 3 splits on raw gain; method 4 additionally masks
//! candidate splits whose child probability distributions do not differ
//! significantly under a chi-square test with variance-based count
//! inflation.

mod export;

pub use export::{TreeDocument, TREE_FORMAT, TREE_VERSION};

use crate::bestprob::ProbabilityMatrix;
use crate::dataset::{
    FeatureColumn, FeatureSchema, FeatureTable, SplitRule, SplitTest, TreatmentSet,
};
use crate::error::{Error, Result};
use crate::stats::chi_square_independence;

/// Standard deviation of U[0, 1]; numerator of the inflation factor.
pub const SD_UNIFORM: f64 = 0.288_675_134_594_812_9; // 1/sqrt(12)

/// Default cap on the count inflation factor.
pub const DEFAULT_OMEGA_MAX: f64 = 10.0;

/// Misassignment costs: `cost(k, j)` is the cost of giving treatment `j`
/// when `k` is actually best. The diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    m: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    /// Unit cost for every wrong assignment.
    pub fn zero_one(m: usize) -> Self {
        let mut values = vec![1.0; m * m];
        for k in 0..m {
            values[k * m + k] = 0.0;
        }
        CostMatrix { m, values }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidParam("cost matrix cannot be empty".into()));
        }
        let mut values = Vec::with_capacity(m * m);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidParam(format!(
                    "cost matrix row {k} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                if k == j && c != 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "cost matrix diagonal entry ({k},{k}) must be 0, got {c}"
                    )));
                }
                if !(c >= 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "cost matrix entry ({k},{j}) must be non-negative, got {c}"
                    )));
                }
                values.push(c);
            }
        }
        Ok(CostMatrix { m, values })
    }

    pub fn n_treatments(&self) -> usize {
        self.m
    }

    pub fn cost(&self, best: usize, given: usize) -> f64 {
        self.values[best * self.m + given]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn is_zero_one(&self) -> bool {
        self.values
            .chunks(self.m)
            .enumerate()
            .all(|(k, row)| row.iter().enumerate().all(|(j, &c)| {
                if k == j { c == 0.0 } else { c == 1.0 }
            }))
    }
}

/// Everything a node reports: its size, aggregated probabilities, the
/// useless/potential treatment split at the tree's risk level, truncated
/// probabilities and the node loss.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSummary {
    pub size: usize,
    pub agg_probs: Vec<f64>,
    pub useless: TreatmentSet,
    pub potential: TreatmentSet,
    pub trunc_probs: Vec<f64>,
    pub loss: f64,
}

/// Tree growing strategy: full growth on gain (method 3) or chi-square
/// prepruned gain (method 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthMethod {
    Full,
    Preprune,
}

impl GrowthMethod {
    pub fn tag(&self) -> u8 {
        match self {
            GrowthMethod::Full => 3,
            GrowthMethod::Preprune => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            3 => Ok(GrowthMethod::Full),
            4 => Ok(GrowthMethod::Preprune),
            other => Err(Error::BadModel(format!("unknown growth method {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrowConfig {
    pub method: GrowthMethod,
    pub alpha: f64,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub costs: CostMatrix,
    pub omega_max: f64,
}

impl GrowConfig {
    pub fn new(method: GrowthMethod, alpha: f64, min_leaf: usize, m: usize) -> Self {
        GrowConfig {
            method,
            alpha,
            min_leaf,
            max_depth: None,
            costs: CostMatrix::zero_one(m),
            omega_max: DEFAULT_OMEGA_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsicaNode {
    Internal {
        rule: SplitRule,
        summary: NodeSummary,
        left: Box<PsicaNode>,
        right: Box<PsicaNode>,
    },
    Leaf {
        summary: NodeSummary,
    },
}

impl PsicaNode {
    pub fn summary(&self) -> &NodeSummary {
        match self {
            PsicaNode::Internal { summary, .. } | PsicaNode::Leaf { summary } => summary,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, PsicaNode::Leaf { .. })
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            PsicaNode::Leaf { .. } => 1,
            PsicaNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            PsicaNode::Leaf { .. } => 1,
            PsicaNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// Sum of leaf losses in this subtree.
    pub fn total_leaf_loss(&self) -> f64 {
        match self {
            PsicaNode::Leaf { summary } => summary.loss,
            PsicaNode::Internal { left, right, .. } => {
                left.total_leaf_loss() + right.total_leaf_loss()
            }
        }
    }

    fn leaves<'a>(&'a self, out: &mut Vec<&'a NodeSummary>) {
        match self {
            PsicaNode::Leaf { summary } => out.push(summary),
            PsicaNode::Internal { left, right, .. } => {
                left.leaves(out);
                right.leaves(out);
            }
        }
    }
}

/// True iff `sub` can be obtained from `full` by replacing subtrees with
/// leaves: every internal node of `sub` exists in `full` with the same
/// rule, in the same position.
pub fn is_edge_subgraph(sub: &PsicaNode, full: &PsicaNode) -> bool {
    match (sub, full) {
        (PsicaNode::Leaf { .. }, _) => true,
        (
            PsicaNode::Internal {
                rule: sub_rule,
                left: sub_left,
                right: sub_right,
                ..
            },
            PsicaNode::Internal {
                rule: full_rule,
                left: full_left,
                right: full_right,
                ..
            },
        ) => {
            sub_rule == full_rule
                && is_edge_subgraph(sub_left, full_left)
                && is_edge_subgraph(sub_right, full_right)
        }
        (PsicaNode::Internal { .. }, PsicaNode::Leaf { .. }) => false,
    }
}

/// A fitted PSICA tree, self-contained for prediction and export: it
/// carries the feature schema and treatment names it was grown with.
#[derive(Debug, Clone, PartialEq)]
pub struct PsicaTree {
    root: PsicaNode,
    schema: FeatureSchema,
    treatments: Vec<String>,
    alpha: f64,
    growth_method: GrowthMethod,
    min_leaf: usize,
    costs: CostMatrix,
}

impl PsicaTree {
    pub fn root(&self) -> &PsicaNode {
        &self.root
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn treatments(&self) -> &[String] {
        &self.treatments
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn growth_method(&self) -> GrowthMethod {
        self.growth_method
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }

    pub fn costs(&self) -> &CostMatrix {
        &self.costs
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Leaf summaries in left-to-right order.
    pub fn leaves(&self) -> Vec<&NodeSummary> {
        let mut out = Vec::new();
        self.root.leaves(&mut out);
        out
    }

    pub fn conforms(&self, table: &FeatureTable) -> Result<()> {
        if table.schema() != &self.schema {
            return Err(Error::SchemaMismatch(
                "feature table schema differs from the schema the tree was grown with".into(),
            ));
        }
        Ok(())
    }

    fn route_unchecked(&self, table: &FeatureTable, row: usize) -> (usize, &NodeSummary) {
        let mut node = &self.root;
        let mut leaf_ordinal = 0;
        loop {
            match node {
                PsicaNode::Leaf { summary } => return (leaf_ordinal, summary),
                PsicaNode::Internal {
                    rule, left, right, ..
                } => {
                    if rule.test.goes_left(table.value(row, rule.feature)) {
                        node = left;
                    } else {
                        leaf_ordinal += left.leaf_count();
                        node = right;
                    }
                }
            }
        }
    }

    /// Routes one row to its leaf; returns the leaf's left-to-right index
    /// and summary.
    pub fn route(&self, table: &FeatureTable, row: usize) -> Result<(usize, &NodeSummary)> {
        self.conforms(table)?;
        Ok(self.route_unchecked(table, row))
    }

    /// The leaf label for one row: its potential-treatment set and
    /// truncated probabilities.
    pub fn predict_label(
        &self,
        table: &FeatureTable,
        row: usize,
    ) -> Result<(TreatmentSet, Vec<f64>)> {
        let (_, summary) = self.route(table, row)?;
        Ok((summary.potential, summary.trunc_probs.clone()))
    }

    /// Leaf index for every row of `table` (schema checked once).
    pub fn leaf_assignments(&self, table: &FeatureTable) -> Result<Vec<usize>> {
        self.conforms(table)?;
        Ok((0..table.n_rows())
            .map(|row| self.route_unchecked(table, row).0)
            .collect())
    }
}

/// Column means of `p` over the rows in `delta`. Errors on an empty set.
pub fn aggregate_probabilities(delta: &[usize], p: &ProbabilityMatrix) -> Result<Vec<f64>> {
    if delta.is_empty() {
        return Err(Error::InvalidParam(
            "cannot aggregate over an empty row set".into(),
        ));
    }
    let m = p.n_treatments();
    let mut agg = vec![0.0; m];
    for &i in delta {
        for (a, v) in agg.iter_mut().zip(p.row(i)) {
            *a += v;
        }
    }
    for a in &mut agg {
        *a /= delta.len() as f64;
    }
    Ok(agg)
}

/// The treatments whose aggregated probabilities, accumulated from the
/// smallest upward, stay within the risk level. Never the full set.
pub fn useless_treatments(agg: &[f64], alpha: f64) -> TreatmentSet {
    let m = agg.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| agg[a].total_cmp(&agg[b]).then(a.cmp(&b)));
    let mut useless = TreatmentSet::empty();
    let mut cumulative = 0.0;
    for (taken, &k) in order.iter().enumerate() {
        if taken == m - 1 {
            break;
        }
        cumulative += agg[k];
        if cumulative <= alpha {
            useless.insert(k);
        } else {
            break;
        }
    }
    useless
}

/// Renormalizes `agg` over the complement of `useless`; zero elsewhere.
pub fn truncated_probabilities(agg: &[f64], useless: TreatmentSet) -> Vec<f64> {
    let denom: f64 = agg
        .iter()
        .enumerate()
        .filter(|(k, _)| !useless.contains(*k))
        .map(|(_, v)| v)
        .sum();
    agg.iter()
        .enumerate()
        .map(|(k, &v)| if useless.contains(k) { 0.0 } else { v / denom })
        .collect()
}

/// The misassignment cost of a node, given its size and aggregated
/// probabilities: sum over best-treatments `k` of the node's mass on `k`
/// times the cost of the truncated-probability assignment rule.
fn loss_from_aggregates(size: usize, agg: &[f64], costs: &CostMatrix, alpha: f64) -> f64 {
    let useless = useless_treatments(agg, alpha);
    let trunc = truncated_probabilities(agg, useless);
    loss_from_parts(size, agg, &trunc, useless, costs)
}

fn loss_from_parts(
    size: usize,
    agg: &[f64],
    trunc: &[f64],
    useless: TreatmentSet,
    costs: &CostMatrix,
) -> f64 {
    let m = agg.len();
    let mut loss = 0.0;
    for k in 0..m {
        let mut assignment_cost = 0.0;
        for j in 0..m {
            if j != k && !useless.contains(j) {
                assignment_cost += costs.cost(k, j) * trunc[j];
            }
        }
        loss += size as f64 * agg[k] * assignment_cost;
    }
    loss
}

/// Full node summary over the rows in `delta`.
pub fn node_summary(
    delta: &[usize],
    p: &ProbabilityMatrix,
    costs: &CostMatrix,
    alpha: f64,
) -> Result<NodeSummary> {
    let agg = aggregate_probabilities(delta, p)?;
    let useless = useless_treatments(&agg, alpha);
    let trunc = truncated_probabilities(&agg, useless);
    let loss = loss_from_parts(delta.len(), &agg, &trunc, useless, costs);
    Ok(NodeSummary {
        size: delta.len(),
        agg_probs: agg,
        useless,
        potential: useless.complement(p.n_treatments()),
        trunc_probs: trunc,
        loss,
    })
}

/// The loss of the node formed by `delta`.
pub fn node_loss(
    delta: &[usize],
    p: &ProbabilityMatrix,
    costs: &CostMatrix,
    alpha: f64,
) -> Result<f64> {
    Ok(node_summary(delta, p, costs, alpha)?.loss)
}

/// Parent loss minus summed child losses.
pub fn information_gain(
    parent: &[usize],
    left: &[usize],
    right: &[usize],
    p: &ProbabilityMatrix,
    costs: &CostMatrix,
    alpha: f64,
) -> Result<f64> {
    Ok(node_loss(parent, p, costs, alpha)?
        - node_loss(left, p, costs, alpha)?
        - node_loss(right, p, costs, alpha)?)
}

/// Count inflation factor: sd(U[0,1]) over the sample sd of the child's
/// pooled probability values, capped at `omega_max`. A degenerate sd maps
/// to the cap.
pub fn inflation_factor(pooled_sd: f64, omega_max: f64) -> f64 {
    if !pooled_sd.is_finite() || pooled_sd <= 0.0 {
        omega_max
    } else {
        (SD_UNIFORM / pooled_sd).min(omega_max)
    }
}

/// Sample standard deviation of all probability entries of `p` over the
/// rows in `delta` (pooled across treatments).
pub fn pooled_probability_sd(delta: &[usize], p: &ProbabilityMatrix) -> f64 {
    let m = p.n_treatments();
    let count = (delta.len() * m) as f64;
    if count < 2.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &i in delta {
        for &v in p.row(i) {
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / count;
    ((sum_sq - count * mean * mean).max(0.0) / (count - 1.0)).sqrt()
}

/// Applies the ceiling after snapping values within 1e-9 of an integer,
/// so float dust cannot inflate an exact product.
fn inflated_count(value: f64) -> u64 {
    let snapped = if (value - value.round()).abs() < 1e-9 {
        value.round()
    } else {
        value
    };
    snapped.ceil().max(0.0) as u64
}

fn chi_square_counts(
    size: usize,
    agg: &[f64],
    pooled_sd: f64,
    omega_max: f64,
) -> Vec<u64> {
    let omega = inflation_factor(pooled_sd, omega_max);
    agg.iter()
        .map(|&a| inflated_count(a * size as f64 * omega))
        .collect()
}

/// The prepruning mask: true iff the two children's aggregated probability
/// distributions differ significantly under a chi-square test on inflated
/// counts at risk level `alpha`.
pub fn chi_square_mask(
    left: &[usize],
    right: &[usize],
    p: &ProbabilityMatrix,
    alpha: f64,
    omega_max: f64,
) -> Result<bool> {
    let left_agg = aggregate_probabilities(left, p)?;
    let right_agg = aggregate_probabilities(right, p)?;
    let left_counts = chi_square_counts(
        left.len(),
        &left_agg,
        pooled_probability_sd(left, p),
        omega_max,
    );
    let right_counts = chi_square_counts(
        right.len(),
        &right_agg,
        pooled_probability_sd(right, p),
        omega_max,
    );
    let table: Vec<(u64, u64)> = left_counts
        .into_iter()
        .zip(right_counts)
        .collect();
    Ok(chi_square_independence(&table).significant_at(alpha))
}

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

/// Running totals for one split side: row count, per-treatment probability
/// sums, and the sum of squared probability entries (for the pooled sd).
#[derive(Clone)]
struct SideTotals {
    count: usize,
    prob_sums: Vec<f64>,
    prob_sq_sum: f64,
}

impl SideTotals {
    fn zero(m: usize) -> Self {
        SideTotals {
            count: 0,
            prob_sums: vec![0.0; m],
            prob_sq_sum: 0.0,
        }
    }

    fn add_row(&mut self, row: &[f64]) {
        self.count += 1;
        for (s, &v) in self.prob_sums.iter_mut().zip(row) {
            *s += v;
            self.prob_sq_sum += v * v;
        }
    }

    fn add(&mut self, other: &SideTotals) {
        self.count += other.count;
        for (s, &v) in self.prob_sums.iter_mut().zip(&other.prob_sums) {
            *s += v;
        }
        self.prob_sq_sum += other.prob_sq_sum;
    }

    fn subtract_from(&self, total: &SideTotals) -> SideTotals {
        SideTotals {
            count: total.count - self.count,
            prob_sums: total
                .prob_sums
                .iter()
                .zip(&self.prob_sums)
                .map(|(t, s)| t - s)
                .collect(),
            prob_sq_sum: total.prob_sq_sum - self.prob_sq_sum,
        }
    }

    fn aggregates(&self) -> Vec<f64> {
        self.prob_sums.iter().map(|s| s / self.count as f64).collect()
    }

    fn pooled_sd(&self, m: usize) -> f64 {
        let count = (self.count * m) as f64;
        if count < 2.0 {
            return 0.0;
        }
        let sum: f64 = self.prob_sums.iter().sum();
        let mean = sum / count;
        ((self.prob_sq_sum - count * mean * mean).max(0.0) / (count - 1.0)).sqrt()
    }
}

struct Grower<'a> {
    p: &'a ProbabilityMatrix,
    table: &'a FeatureTable,
    config: &'a GrowConfig,
    gain_floor: f64,
}

impl<'a> Grower<'a> {
    fn split_node(&self, rows: Vec<usize>, summary: NodeSummary, depth: usize) -> PsicaNode {
        let stop = rows.len() < 2 * self.config.min_leaf
            || self.config.max_depth.is_some_and(|d| depth >= d);
        if stop {
            return PsicaNode::Leaf { summary };
        }

        let best = self.best_split(&rows, &summary);
        let Some(best) = best.filter(|c| c.gain > self.gain_floor) else {
            return PsicaNode::Leaf { summary };
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| best.test.goes_left(self.table.value(r, best.feature)));
        let left_summary = node_summary(&left_rows, self.p, &self.config.costs, self.config.alpha)
            .expect("left child non-empty");
        let right_summary =
            node_summary(&right_rows, self.p, &self.config.costs, self.config.alpha)
                .expect("right child non-empty");

        PsicaNode::Internal {
            rule: SplitRule {
                feature: best.feature,
                test: best.test,
            },
            summary,
            left: Box::new(self.split_node(left_rows, left_summary, depth + 1)),
            right: Box::new(self.split_node(right_rows, right_summary, depth + 1)),
        }
    }

    fn best_split(&self, rows: &[usize], parent: &NodeSummary) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for feature in 0..self.table.n_features() {
            let candidate = match self.table.column(feature) {
                FeatureColumn::Numeric(values) => {
                    self.best_numeric_split(rows, parent, feature, values)
                }
                FeatureColumn::Categorical(codes) => {
                    self.best_categorical_split(rows, parent, feature, codes)
                }
            };
            if let Some(c) = candidate {
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Gain of a candidate split described by its left-side totals, or
    /// None when a child would fall below `min_leaf` or the prepruning
    /// mask rejects it.
    fn candidate_gain(
        &self,
        parent: &NodeSummary,
        total: &SideTotals,
        left: &SideTotals,
    ) -> Option<f64> {
        let right = left.subtract_from(total);
        if left.count < self.config.min_leaf || right.count < self.config.min_leaf {
            return None;
        }
        let m = self.p.n_treatments();
        let left_agg = left.aggregates();
        let right_agg = right.aggregates();

        if self.config.method == GrowthMethod::Preprune {
            let table: Vec<(u64, u64)> = chi_square_counts(
                left.count,
                &left_agg,
                left.pooled_sd(m),
                self.config.omega_max,
            )
            .into_iter()
            .zip(chi_square_counts(
                right.count,
                &right_agg,
                right.pooled_sd(m),
                self.config.omega_max,
            ))
            .collect();
            if !chi_square_independence(&table).significant_at(self.config.alpha) {
                return None;
            }
        }

        let left_loss =
            loss_from_aggregates(left.count, &left_agg, &self.config.costs, self.config.alpha);
        let right_loss = loss_from_aggregates(
            right.count,
            &right_agg,
            &self.config.costs,
            self.config.alpha,
        );
        Some(parent.loss - left_loss - right_loss)
    }

    fn best_numeric_split(
        &self,
        rows: &[usize],
        parent: &NodeSummary,
        feature: usize,
        values: &[f64],
    ) -> Option<Candidate> {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

        let m = self.p.n_treatments();
        let mut total = SideTotals::zero(m);
        for &r in &order {
            total.add_row(self.p.row(r));
        }

        let mut best: Option<Candidate> = None;
        let mut left = SideTotals::zero(m);
        for window in order.windows(2) {
            let (r, next) = (window[0], window[1]);
            left.add_row(self.p.row(r));
            if values[r] >= values[next] {
                continue;
            }
            if let Some(gain) = self.candidate_gain(parent, &total, &left) {
                let candidate = Candidate {
                    gain,
                    feature,
                    test: SplitTest::Threshold(values[r].midpoint(values[next])),
                };
                if candidate.beats(&best) {
                    best = Some(candidate);
                }
            }
        }
        best
    }

    fn best_categorical_split(
        &self,
        rows: &[usize],
        parent: &NodeSummary,
        feature: usize,
        codes: &[u32],
    ) -> Option<Candidate> {
        let m = self.p.n_treatments();
        let mut level_codes: Vec<u32> = rows.iter().map(|&r| codes[r]).collect();
        level_codes.sort_unstable();
        level_codes.dedup();
        let n_levels = level_codes.len();
        if n_levels < 2 {
            return None;
        }
        let mut by_level: Vec<SideTotals> = vec![SideTotals::zero(m); n_levels];
        for &r in rows {
            let i = level_codes.binary_search(&codes[r]).unwrap();
            by_level[i].add_row(self.p.row(r));
        }
        let mut total = SideTotals::zero(m);
        for side in &by_level {
            total.add(side);
        }

        let mut best: Option<Candidate> = None;
        if n_levels <= 10 {
            for mask in 1u32..(1 << (n_levels - 1)) {
                let mut left = SideTotals::zero(m);
                let mut subset = Vec::new();
                for i in 0..n_levels - 1 {
                    if mask & (1 << i) != 0 {
                        left.add(&by_level[i]);
                        subset.push(level_codes[i]);
                    }
                }
                if let Some(gain) = self.candidate_gain(parent, &total, &left) {
                    let candidate = Candidate {
                        gain,
                        feature,
                        test: SplitTest::LevelSet(subset),
                    };
                    if candidate.beats(&best) {
                        best = Some(candidate);
                    }
                }
            }
        } else {
            // Too many levels for exhaustion: order levels by their mean
            // probability of the node's leading treatment, then scan as if
            // ordinal.
            let leading = parent
                .agg_probs
                .iter()
                .enumerate()
                .max_by(|(ka, a), (kb, b)| a.total_cmp(b).then(kb.cmp(ka)))
                .map(|(k, _)| k)
                .unwrap_or(0);
            let mut order: Vec<usize> = (0..n_levels).collect();
            order.sort_by(|&a, &b| {
                let pa = by_level[a].prob_sums[leading] / by_level[a].count as f64;
                let pb = by_level[b].prob_sums[leading] / by_level[b].count as f64;
                pa.total_cmp(&pb).then(level_codes[a].cmp(&level_codes[b]))
            });
            let mut left = SideTotals::zero(m);
            let mut subset = Vec::new();
            for &i in order.iter().take(n_levels - 1) {
                left.add(&by_level[i]);
                subset.push(level_codes[i]);
                if let Some(gain) = self.candidate_gain(parent, &total, &left) {
                    let mut sorted = subset.clone();
                    sorted.sort_unstable();
                    let candidate = Candidate {
                        gain,
                        feature,
                        test: SplitTest::LevelSet(sorted),
                    };
                    if candidate.beats(&best) {
                        best = Some(candidate);
                    }
                }
            }
        }
        best
    }
}

/// Grows a PSICA tree over the probability matrix `p` and features
/// `table`. Splitting is greedy on information gain (times the chi-square
/// mask for method 4) and stops when a node is too small, too deep, or no
/// candidate clears the gain floor of `1e-9` times the root loss.
pub fn grow(
    p: &ProbabilityMatrix,
    table: &FeatureTable,
    treatments: &[String],
    config: &GrowConfig,
) -> Result<PsicaTree> {
    if p.n_rows() != table.n_rows() {
        return Err(Error::InvalidParam(format!(
            "probability matrix has {} rows but the feature table has {}",
            p.n_rows(),
            table.n_rows()
        )));
    }
    if treatments.len() != p.n_treatments() {
        return Err(Error::InvalidParam(format!(
            "{} treatment names for {} probability columns",
            treatments.len(),
            p.n_treatments()
        )));
    }
    if config.costs.n_treatments() != p.n_treatments() {
        return Err(Error::InvalidParam(format!(
            "cost matrix is {0}x{0} but there are {1} treatments",
            config.costs.n_treatments(),
            p.n_treatments()
        )));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidParam(format!(
            "alpha must be in (0, 1), got {}",
            config.alpha
        )));
    }
    if config.min_leaf == 0 {
        return Err(Error::InvalidParam("min_leaf must be at least 1".into()));
    }

    let rows: Vec<usize> = (0..p.n_rows()).collect();
    let root_summary = node_summary(&rows, p, &config.costs, config.alpha)?;
    let grower = Grower {
        p,
        table,
        config,
        gain_floor: 1e-9 * root_summary.loss,
    };
    let root = grower.split_node(rows, root_summary, 0);
    Ok(PsicaTree {
        root,
        schema: table.schema().clone(),
        treatments: treatments.to_vec(),
        alpha: config.alpha,
        growth_method: config.method,
        min_leaf: config.min_leaf,
        costs: config.costs.clone(),
    })
}

/// Bottom-up pruning policies. Summaries are taken from the grown tree;
/// collapsing a split turns its node into a leaf carrying the summary the
/// node already had.
#[derive(Debug, Clone, PartialEq)]
pub enum PrunePolicy {
    /// Merge sibling leaves whose potential-treatment sets are equal.
    CollapseSameLabel,
    /// Remove splits whose recomputed gain is below the threshold.
    MinGain(f64),
    /// Greedily remove the smallest-gain splits until at most this many
    /// leaves remain.
    MaxLeaves(usize),
}

pub fn prune(tree: &PsicaTree, policy: &PrunePolicy) -> PsicaTree {
    let mut pruned = tree.clone();
    match policy {
        PrunePolicy::CollapseSameLabel => collapse_same_label(&mut pruned.root),
        PrunePolicy::MinGain(threshold) => collapse_below_gain(&mut pruned.root, *threshold),
        PrunePolicy::MaxLeaves(budget) => {
            let budget = (*budget).max(1);
            while pruned.root.leaf_count() > budget {
                let Some(path) = smallest_gain_collapsible(&pruned.root) else {
                    break;
                };
                collapse_at(&mut pruned.root, &path);
            }
        }
    }
    pruned
}

fn make_leaf(node: &mut PsicaNode) {
    let summary = node.summary().clone();
    *node = PsicaNode::Leaf { summary };
}

fn collapse_same_label(node: &mut PsicaNode) {
    if let PsicaNode::Internal { left, right, .. } = node {
        collapse_same_label(left);
        collapse_same_label(right);
        if let (PsicaNode::Leaf { summary: l }, PsicaNode::Leaf { summary: r }) =
            (left.as_ref(), right.as_ref())
        {
            if l.potential == r.potential {
                make_leaf(node);
            }
        }
    }
}

fn collapse_below_gain(node: &mut PsicaNode, threshold: f64) {
    if let PsicaNode::Internal {
        summary,
        left,
        right,
        ..
    } = node
    {
        collapse_below_gain(left, threshold);
        collapse_below_gain(right, threshold);
        if left.is_leaf() && right.is_leaf() {
            let gain = summary.loss - left.summary().loss - right.summary().loss;
            if gain < threshold {
                make_leaf(node);
            }
        }
    }
}

/// Finds the collapsible split (both children leaves) with the smallest
/// recomputed gain; ties go to the first in pre-order. The path is a list
/// of left/right turns from the root.
fn smallest_gain_collapsible(node: &PsicaNode) -> Option<Vec<bool>> {
    fn walk(node: &PsicaNode, path: &mut Vec<bool>, best: &mut Option<(f64, Vec<bool>)>) {
        if let PsicaNode::Internal { left, right, .. } = node {
            if left.is_leaf() && right.is_leaf() {
                let gain = node.summary().loss - left.summary().loss - right.summary().loss;
                if best.as_ref().is_none_or(|(g, _)| gain < *g) {
                    *best = Some((gain, path.clone()));
                }
            } else {
                path.push(false);
                walk(left, path, best);
                path.pop();
                path.push(true);
                walk(right, path, best);
                path.pop();
            }
        }
    }
    let mut best = None;
    walk(node, &mut Vec::new(), &mut best);
    best.map(|(_, path)| path)
}

fn collapse_at(node: &mut PsicaNode, path: &[bool]) {
    match path.split_first() {
        None => make_leaf(node),
        Some((&go_right, rest)) => {
            if let PsicaNode::Internal { left, right, .. } = node {
                collapse_at(if go_right { right } else { left }, rest);
            }
        }
    }
}

#[cfg(test)]
mod tests;
