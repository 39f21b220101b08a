//! Evaluation metrics for a fitted tree against a simulation oracle.

use rand::Rng;

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::psicatree::{PsicaNode, PsicaTree};

use super::OracleLabel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Fraction of rows whose true best set is contained in the leaf's
    /// potential set.
    pub accuracy: f64,
    /// Fraction of rows where the leaf offers strictly more treatments
    /// than are truly best.
    pub uncertainty: f64,
    /// Share of tree mass sitting immediately above splits on irrelevant
    /// features.
    pub suspect: f64,
    /// Expected probability that a decision maker sampling from the
    /// leaf's truncated probabilities picks a truly best treatment.
    pub decision_accuracy: f64,
}

fn check_rows(table: &FeatureTable, oracle: &OracleLabel) -> Result<()> {
    if table.n_rows() != oracle.len() {
        return Err(Error::InvalidParam(format!(
            "oracle covers {} rows but the table has {}",
            oracle.len(),
            table.n_rows()
        )));
    }
    Ok(())
}

pub fn accuracy(tree: &PsicaTree, table: &FeatureTable, oracle: &OracleLabel) -> Result<f64> {
    check_rows(table, oracle)?;
    let leaves = tree.leaves();
    let assignments = tree.leaf_assignments(table)?;
    let hits = assignments
        .iter()
        .enumerate()
        .filter(|&(row, &leaf)| oracle.best(row).is_subset_of(&leaves[leaf].potential))
        .count();
    Ok(hits as f64 / table.n_rows() as f64)
}

pub fn uncertainty(tree: &PsicaTree, table: &FeatureTable, oracle: &OracleLabel) -> Result<f64> {
    check_rows(table, oracle)?;
    let leaves = tree.leaves();
    let assignments = tree.leaf_assignments(table)?;
    let hits = assignments
        .iter()
        .enumerate()
        .filter(|&(row, &leaf)| leaves[leaf].potential.len() > oracle.best(row).len())
        .count();
    Ok(hits as f64 / table.n_rows() as f64)
}

/// Sum of node sizes over internal nodes splitting on a feature outside
/// `relevant`, divided by the sum of all node sizes (internal and
/// terminal). A tree that never touches an irrelevant feature scores 0.
pub fn suspect(tree: &PsicaTree, relevant: &[usize]) -> f64 {
    fn walk(node: &PsicaNode, relevant: &[usize], above_irrelevant: &mut u64, all: &mut u64) {
        *all += node.summary().size as u64;
        if let PsicaNode::Internal {
            rule, left, right, ..
        } = node
        {
            if !relevant.contains(&rule.feature) {
                *above_irrelevant += node.summary().size as u64;
            }
            walk(left, relevant, above_irrelevant, all);
            walk(right, relevant, above_irrelevant, all);
        }
    }
    let mut above_irrelevant = 0;
    let mut all = 0;
    walk(tree.root(), relevant, &mut above_irrelevant, &mut all);
    if all == 0 {
        return 0.0;
    }
    above_irrelevant as f64 / all as f64
}

/// Exact expectation of the multinomial decision rule: the mean over rows
/// of the truncated-probability mass on the truly best treatments.
pub fn decision_accuracy(
    tree: &PsicaTree,
    table: &FeatureTable,
    oracle: &OracleLabel,
) -> Result<f64> {
    check_rows(table, oracle)?;
    let leaves = tree.leaves();
    let assignments = tree.leaf_assignments(table)?;
    let total: f64 = assignments
        .iter()
        .enumerate()
        .map(|(row, &leaf)| {
            oracle
                .best(row)
                .iter()
                .map(|k| leaves[leaf].trunc_probs[k])
                .sum::<f64>()
        })
        .sum();
    Ok(total / table.n_rows() as f64)
}

/// The sampled form: one multinomial draw from each row's truncated
/// probabilities. Same mean as [`decision_accuracy`], more variance.
pub fn decision_accuracy_sampled<R: Rng>(
    tree: &PsicaTree,
    table: &FeatureTable,
    oracle: &OracleLabel,
    rng: &mut R,
) -> Result<f64> {
    check_rows(table, oracle)?;
    let leaves = tree.leaves();
    let assignments = tree.leaf_assignments(table)?;
    let mut hits = 0usize;
    for (row, &leaf) in assignments.iter().enumerate() {
        let trunc = &leaves[leaf].trunc_probs;
        let mut u: f64 = rng.gen();
        let mut drawn = trunc.len() - 1;
        for (k, &p) in trunc.iter().enumerate() {
            if u < p {
                drawn = k;
                break;
            }
            u -= p;
        }
        if oracle.best(row).contains(drawn) {
            hits += 1;
        }
    }
    Ok(hits as f64 / table.n_rows() as f64)
}

/// All four metrics in one pass.
pub fn evaluate(
    tree: &PsicaTree,
    table: &FeatureTable,
    oracle: &OracleLabel,
    relevant: &[usize],
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        accuracy: accuracy(tree, table, oracle)?,
        uncertainty: uncertainty(tree, table, oracle)?,
        suspect: suspect(tree, relevant),
        decision_accuracy: decision_accuracy(tree, table, oracle)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bestprob::ProbabilityMatrix;
    use crate::dataset::{Feature, FeatureColumn, FeatureKind, FeatureSchema, TreatmentSet};
    use crate::psicatree::{grow, GrowConfig, GrowthMethod};
    use crate::rng::stream;

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

    fn prob_matrix(rows: &[Vec<f64>]) -> ProbabilityMatrix {
        let n = rows.len();
        let m = rows[0].len();
        ProbabilityMatrix::new(rows.iter().flatten().copied().collect(), n, m, 1, 0).unwrap()
    }

    /// Grows a tree over the given per-row probabilities and one feature.
    fn tree_over(x: Vec<f64>, probs: Vec<Vec<f64>>, min_leaf: usize) -> (PsicaTree, FeatureTable) {
        let table = numeric_table(vec![x]);
        let m = probs[0].len();
        let names: Vec<String> = (0..m).map(|k| format!("t{}", k + 1)).collect();
        let tree = grow(
            &prob_matrix(&probs),
            &table,
            &names,
            &GrowConfig::new(GrowthMethod::Full, 0.05, min_leaf, m),
        )
        .unwrap();
        (tree, table)
    }

    fn uniform_oracle(n: usize, set: TreatmentSet) -> OracleLabel {
        OracleLabel::new(vec![set; n])
    }

    #[test]
    fn full_set_labels_are_accurate_but_uncertain() {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        // Balanced probabilities keep both treatments potential.
        let probs = vec![vec![0.5, 0.5]; n];
        let (tree, table) = tree_over(x, probs, 2);
        let truth = uniform_oracle(n, TreatmentSet::from_indices([1]));
        assert_eq!(accuracy(&tree, &table, &truth).unwrap(), 1.0);
        assert_eq!(uncertainty(&tree, &table, &truth).unwrap(), 1.0);
    }

    #[test]
    fn wrong_singleton_labels_score_zero() {
        let n = 30;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let probs = vec![vec![0.97, 0.03]; n]; // decisive for t1
        let (tree, table) = tree_over(x, probs, 2);
        assert_eq!(tree.leaves()[0].potential, TreatmentSet::from_indices([0]));
        let truth = uniform_oracle(n, TreatmentSet::from_indices([1]));
        assert_eq!(accuracy(&tree, &table, &truth).unwrap(), 0.0);
        assert_eq!(uncertainty(&tree, &table, &truth).unwrap(), 0.0);
    }

    #[test]
    fn exact_labels_give_perfect_scores() {
        let n = 200;
        let mut rng = stream(7, &[]);
        use rand::Rng;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let probs: Vec<Vec<f64>> = x
            .iter()
            .map(|&v| {
                if v < 0.0 {
                    vec![0.98, 0.02]
                } else {
                    vec![0.02, 0.98]
                }
            })
            .collect();
        let truth = OracleLabel::new(
            x.iter()
                .map(|&v| TreatmentSet::from_indices([usize::from(v >= 0.0)]))
                .collect(),
        );
        let (tree, table) = tree_over(x, probs, 20);
        let report = evaluate(&tree, &table, &truth, &[0]).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.uncertainty, 0.0);
        assert_eq!(report.suspect, 0.0);
        assert_eq!(report.decision_accuracy, 1.0);
    }

    #[test]
    fn accuracy_matches_brute_force_subset_check() {
        let n = 150;
        let mut rng = stream(41, &[]);
        use rand::Rng;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let probs: Vec<Vec<f64>> = x
            .iter()
            .map(|&v| {
                if v < -0.3 {
                    vec![0.9, 0.07, 0.03]
                } else if v < 0.4 {
                    vec![0.3, 0.4, 0.3]
                } else {
                    vec![0.02, 0.08, 0.9]
                }
            })
            .collect();
        let truth = OracleLabel::new(
            (0..n)
                .map(|i| {
                    let r = i % 3;
                    TreatmentSet::from_indices(if r == 0 {
                        vec![0]
                    } else if r == 1 {
                        vec![1, 2]
                    } else {
                        vec![2]
                    })
                })
                .collect(),
        );
        let (tree, table) = tree_over(x, probs, 15);

        let leaves = tree.leaves();
        let assignments = tree.leaf_assignments(&table).unwrap();
        let mut acc_hits = 0;
        let mut unc_hits = 0;
        for row in 0..n {
            let potential = leaves[assignments[row]].potential;
            let t = truth.best(row);
            if t.iter().all(|k| potential.contains(k)) {
                acc_hits += 1;
            }
            if potential.len() > t.len() {
                unc_hits += 1;
            }
        }
        assert_eq!(
            accuracy(&tree, &table, &truth).unwrap(),
            acc_hits as f64 / n as f64
        );
        assert_eq!(
            uncertainty(&tree, &table, &truth).unwrap(),
            unc_hits as f64 / n as f64
        );
    }

    #[test]
    fn suspect_counts_irrelevant_split_mass() {
        // Feature 1 is pure noise for the probabilities; feature 2 carries
        // the signal, so the single split lands on it.
        let n = 100;
        let mut rng = stream(3, &[]);
        use rand::Rng;
        let x_noise: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x_signal: Vec<f64> = (0..n).map(|i| if i < n / 2 { -1.0 } else { 1.0 }).collect();
        let probs: Vec<Vec<f64>> = x_signal
            .iter()
            .map(|&v| {
                if v < 0.0 {
                    vec![0.95, 0.05]
                } else {
                    vec![0.05, 0.95]
                }
            })
            .collect();
        let table = numeric_table(vec![x_noise, x_signal]);
        let tree = grow(
            &prob_matrix(&probs),
            &table,
            &["t1".into(), "t2".into()],
            &GrowConfig::new(GrowthMethod::Full, 0.05, 50, 2),
        )
        .unwrap();
        assert_eq!(tree.leaf_count(), 2);

        // Splitting feature (index 1) relevant: suspect 0.
        assert_eq!(suspect(&tree, &[1]), 0.0);
        // Same split declared irrelevant: root size n over n + n/2 + n/2.
        assert_eq!(suspect(&tree, &[0]), 0.5);
    }

    #[test]
    fn root_only_tree_has_zero_suspect() {
        let n = 20;
        let (tree, _) = tree_over(
            (0..n).map(|i| i as f64).collect(),
            vec![vec![0.5, 0.5]; n],
            2,
        );
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(suspect(&tree, &[]), 0.0);
    }

    #[test]
    fn decision_accuracy_is_truncated_mass_on_truth() {
        let n = 50;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let probs = vec![vec![0.7, 0.3]; n];
        let (tree, table) = tree_over(x, probs, 2);
        assert_eq!(tree.leaf_count(), 1);
        let truth = uniform_oracle(n, TreatmentSet::from_indices([0]));
        let delta = decision_accuracy(&tree, &table, &truth).unwrap();
        assert!((delta - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sampled_decision_accuracy_converges_to_exact() {
        let n = 60;
        let mut rng = stream(99, &[]);
        use rand::Rng;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let probs: Vec<Vec<f64>> = x
            .iter()
            .map(|&v| {
                if v < 0.0 {
                    vec![0.75, 0.25]
                } else {
                    vec![0.4, 0.6]
                }
            })
            .collect();
        let truth = OracleLabel::new(
            x.iter()
                .map(|&v| TreatmentSet::from_indices([usize::from(v >= 0.0)]))
                .collect(),
        );
        let (tree, table) = tree_over(x, probs, 20);
        let exact = decision_accuracy(&tree, &table, &truth).unwrap();

        // 100_000 row-draws in total: repeat the n-row sampled metric.
        let reps = 100_000 / n + 1;
        let mut total = 0.0;
        for _ in 0..reps {
            total += decision_accuracy_sampled(&tree, &table, &truth, &mut rng).unwrap();
        }
        let sampled = total / reps as f64;
        assert!(
            (sampled - exact).abs() < 0.005,
            "sampled {sampled}, exact {exact}"
        );
    }
}
