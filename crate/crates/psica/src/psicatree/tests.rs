use super::*;
use crate::bestprob::ProbabilityMatrix;
use crate::dataset::{Feature, FeatureColumn, FeatureKind, FeatureSchema};
use crate::rng::stream;
use rand::Rng;

fn prob_matrix(rows: &[Vec<f64>]) -> ProbabilityMatrix {
    let n = rows.len();
    let m = rows[0].len();
    let values: Vec<f64> = rows.iter().flatten().copied().collect();
    ProbabilityMatrix::new(values, n, m, 1, 0).unwrap()
}

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
    FeatureTable::new(schema, columns.into_iter().map(FeatureColumn::Numeric).collect()).unwrap()
}

fn names(m: usize) -> Vec<String> {
    (0..m).map(|k| format!("t{}", k + 1)).collect()
}

/// Literal triple-sum of the general cost formula, with its own
/// useless-set computation; the test-side oracle for node_loss.
fn brute_force_loss(
    delta: &[usize],
    p: &ProbabilityMatrix,
    costs: &CostMatrix,
    alpha: f64,
) -> f64 {
    let m = p.n_treatments();
    let mut agg = vec![0.0; m];
    for &i in delta {
        for k in 0..m {
            agg[k] += p.row(i)[k];
        }
    }
    for a in &mut agg {
        *a /= delta.len() as f64;
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| agg[a].total_cmp(&agg[b]).then(a.cmp(&b)));
    let mut useless = vec![false; m];
    let mut cum = 0.0;
    for (taken, &k) in order.iter().enumerate() {
        if taken == m - 1 {
            break;
        }
        cum += agg[k];
        if cum <= alpha {
            useless[k] = true;
        } else {
            break;
        }
    }
    let denom: f64 = (0..m).filter(|&k| !useless[k]).map(|k| agg[k]).sum();
    let trunc: Vec<f64> = (0..m)
        .map(|k| if useless[k] { 0.0 } else { agg[k] / denom })
        .collect();

    let mut loss = 0.0;
    for &i in delta {
        for k in 0..m {
            for j in 0..m {
                if j != k && !useless[j] {
                    loss += costs.cost(k, j) * trunc[j] * p.row(i)[k];
                }
            }
        }
    }
    loss
}

#[test]
fn aggregate_single_row_is_identity() {
    let p = prob_matrix(&[vec![0.2, 0.8]]);
    assert_eq!(aggregate_probabilities(&[0], &p).unwrap(), vec![0.2, 0.8]);
}

#[test]
fn aggregate_two_rows_averages() {
    let p = prob_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(
        aggregate_probabilities(&[0, 1], &p).unwrap(),
        vec![0.5, 0.5]
    );
}

#[test]
fn aggregate_matches_brute_force_mean() {
    let mut rng = stream(50, &[]);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    let p = prob_matrix(&rows);
    let delta: Vec<usize> = (0..50).step_by(3).collect();
    let agg = aggregate_probabilities(&delta, &p).unwrap();
    for k in 0..3 {
        let expected: f64 =
            delta.iter().map(|&i| rows[i][k]).sum::<f64>() / delta.len() as f64;
        assert!((agg[k] - expected).abs() < 1e-12);
    }
    assert!(aggregate_probabilities(&[], &p).is_err());
}

#[test]
fn useless_treatments_accumulate_up_to_alpha() {
    let set = useless_treatments(&[0.03, 0.01, 0.96], 0.05);
    assert_eq!(set, TreatmentSet::from_indices([0, 1]));
}

#[test]
fn useless_treatments_empty_when_mass_is_balanced() {
    assert!(useless_treatments(&[0.5, 0.5], 0.05).is_empty());
}

#[test]
fn useless_treatments_boundary_is_inclusive() {
    let set = useless_treatments(&[0.05, 0.95], 0.05);
    assert_eq!(set, TreatmentSet::from_indices([0]));
}

#[test]
fn useless_treatments_never_cover_everything() {
    // Degenerate vector: even with every entry under alpha, one treatment
    // must remain potential.
    let set = useless_treatments(&[0.0, 0.0, 0.0], 0.05);
    assert_eq!(set.len(), 2);
    assert!(!set.contains(2) || set.len() < 3);
}

#[test]
fn useless_sets_grow_with_alpha() {
    let mut rng = stream(61, &[]);
    for _ in 0..500 {
        let m = rng.gen_range(2..=5);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let agg: Vec<f64> = raw.into_iter().map(|v| v / sum).collect();
        let lo = rng.gen_range(0.005..0.5);
        let hi = rng.gen_range(lo..0.9);
        let small = useless_treatments(&agg, lo);
        let large = useless_treatments(&agg, hi);
        assert!(small.is_subset_of(&large), "agg {agg:?} lo {lo} hi {hi}");
    }
}

#[test]
fn truncated_probabilities_renormalize() {
    let trunc = truncated_probabilities(&[0.7, 0.28, 0.02], TreatmentSet::from_indices([2]));
    assert!((trunc[0] - 0.714286).abs() < 1e-6);
    assert!((trunc[1] - 0.285714).abs() < 1e-6);
    assert_eq!(trunc[2], 0.0);
}

#[test]
fn truncated_probabilities_identity_without_useless() {
    let agg = [0.4, 0.35, 0.25];
    let trunc = truncated_probabilities(&agg, TreatmentSet::empty());
    for (t, a) in trunc.iter().zip(agg.iter()) {
        assert!((t - a).abs() < 1e-15);
    }
}

#[test]
fn truncated_probabilities_sum_to_one() {
    let mut rng = stream(77, &[]);
    for _ in 0..1000 {
        let m = rng.gen_range(2..=6);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.001..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let agg: Vec<f64> = raw.into_iter().map(|v| v / sum).collect();
        let useless = useless_treatments(&agg, rng.gen_range(0.01..0.3));
        let trunc = truncated_probabilities(&agg, useless);
        assert!((trunc.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for k in useless.iter() {
            assert_eq!(trunc[k], 0.0);
        }
    }
}

#[test]
fn pure_node_has_zero_loss() {
    let p = prob_matrix(&vec![vec![1.0, 0.0]; 8]);
    let delta: Vec<usize> = (0..8).collect();
    let loss = node_loss(&delta, &p, &CostMatrix::zero_one(2), 0.05).unwrap();
    assert_eq!(loss, 0.0);
}

#[test]
fn balanced_node_loss_is_half_size() {
    let p = prob_matrix(&vec![vec![0.5, 0.5]; 10]);
    let delta: Vec<usize> = (0..10).collect();
    let loss = node_loss(&delta, &p, &CostMatrix::zero_one(2), 0.05).unwrap();
    assert!((loss - 5.0).abs() < 1e-12);
}

#[test]
fn three_treatment_loss_example() {
    // agg (0.7, 0.28, 0.02) over 100 rows, alpha 0.05, zero-one costs:
    // useless = {t3}, trunc = (5/7, 2/7, 0), loss = 42.
    let p = prob_matrix(&vec![vec![0.7, 0.28, 0.02]; 100]);
    let delta: Vec<usize> = (0..100).collect();
    let costs = CostMatrix::zero_one(3);
    let loss = node_loss(&delta, &p, &costs, 0.05).unwrap();
    assert!((loss - 42.0).abs() < 1e-9, "loss {loss}");
    let oracle = brute_force_loss(&delta, &p, &costs, 0.05);
    assert!((loss - oracle).abs() < 1e-9 * oracle.max(1.0));
}

#[test]
fn general_loss_matches_triple_sum_for_random_costs() {
    let mut rng = stream(99, &[]);
    for _ in 0..200 {
        let m = rng.gen_range(2..=5);
        let n = rng.gen_range(1..=30);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.001..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        let p = prob_matrix(&rows);
        let mut cost_rows = vec![vec![0.0; m]; m];
        for k in 0..m {
            for j in 0..m {
                if k != j {
                    cost_rows[k][j] = rng.gen_range(0.0..3.0);
                }
            }
        }
        let costs = CostMatrix::from_rows(cost_rows).unwrap();
        let alpha = rng.gen_range(0.01..0.3);
        let delta: Vec<usize> = (0..n).collect();
        let loss = node_loss(&delta, &p, &costs, alpha).unwrap();
        let oracle = brute_force_loss(&delta, &p, &costs, alpha);
        assert!(
            (loss - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
            "loss {loss} oracle {oracle}"
        );
    }
}

#[test]
fn zero_one_loss_equals_simplified_form() {
    let mut rng = stream(123, &[]);
    for _ in 0..500 {
        let m = rng.gen_range(2..=5);
        let n = rng.gen_range(1..=40);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.001..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        let p = prob_matrix(&rows);
        let costs = CostMatrix::zero_one(m);
        let alpha = rng.gen_range(0.01..0.4);
        let delta: Vec<usize> = (0..n).collect();
        let summary = node_summary(&delta, &p, &costs, alpha).unwrap();
        let simplified: f64 = n as f64
            * summary
                .agg_probs
                .iter()
                .zip(&summary.trunc_probs)
                .map(|(a, t)| a * (1.0 - t))
                .sum::<f64>();
        assert!(
            (summary.loss - simplified).abs() <= 1e-9 * simplified.abs().max(1.0),
            "general {} simplified {simplified}",
            summary.loss
        );
    }
}

#[test]
fn gain_of_pure_split_is_parent_loss() {
    let mut rows = vec![vec![1.0, 0.0]; 10];
    rows.extend(vec![vec![0.0, 1.0]; 10]);
    let p = prob_matrix(&rows);
    let parent: Vec<usize> = (0..20).collect();
    let left: Vec<usize> = (0..10).collect();
    let right: Vec<usize> = (10..20).collect();
    let costs = CostMatrix::zero_one(2);
    let gain = information_gain(&parent, &left, &right, &p, &costs, 0.05).unwrap();
    assert!((gain - 10.0).abs() < 1e-12, "gain {gain}");
}

#[test]
fn gain_of_identical_children_is_zero() {
    let rows: Vec<Vec<f64>> = (0..20).map(|_| vec![0.3, 0.45, 0.25]).collect();
    let p = prob_matrix(&rows);
    let parent: Vec<usize> = (0..20).collect();
    let left: Vec<usize> = (0..8).collect();
    let right: Vec<usize> = (8..20).collect();
    let costs = CostMatrix::zero_one(3);
    let gain = information_gain(&parent, &left, &right, &p, &costs, 0.05).unwrap();
    assert!(gain.abs() <= 1e-9, "gain {gain}");
}

#[test]
fn gain_matches_brute_force_for_random_splits() {
    let mut rng = stream(321, &[]);
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    let p = prob_matrix(&rows);
    let costs = CostMatrix::zero_one(3);
    for _ in 0..50 {
        let cut = rng.gen_range(1..39);
        let parent: Vec<usize> = (0..40).collect();
        let left: Vec<usize> = (0..cut).collect();
        let right: Vec<usize> = (cut..40).collect();
        let gain = information_gain(&parent, &left, &right, &p, &costs, 0.05).unwrap();
        let oracle = brute_force_loss(&parent, &p, &costs, 0.05)
            - brute_force_loss(&left, &p, &costs, 0.05)
            - brute_force_loss(&right, &p, &costs, 0.05);
        assert!((gain - oracle).abs() < 1e-9 * oracle.abs().max(1.0));
    }
}

#[test]
fn mask_separates_disjoint_mass() {
    let mut rows = vec![vec![1.0, 0.0]; 50];
    rows.extend(vec![vec![0.0, 1.0]; 50]);
    let p = prob_matrix(&rows);
    let left: Vec<usize> = (0..50).collect();
    let right: Vec<usize> = (50..100).collect();
    assert!(chi_square_mask(&left, &right, &p, 0.05, DEFAULT_OMEGA_MAX).unwrap());
}

#[test]
fn mask_rejects_identical_distributions() {
    let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![0.4, 0.6]).collect();
    let p = prob_matrix(&rows);
    let left: Vec<usize> = (0..30).collect();
    let right: Vec<usize> = (30..60).collect();
    assert!(!chi_square_mask(&left, &right, &p, 0.05, DEFAULT_OMEGA_MAX).unwrap());
}

#[test]
fn inflation_factor_is_one_at_uniform_sd() {
    // A single row (0.5 - d, 0.5 + d) with d = 1/sqrt(24) has a pooled
    // sample sd of exactly 1/sqrt(12).
    let d = 1.0 / 24f64.sqrt();
    let p = prob_matrix(&[vec![0.5 - d, 0.5 + d]]);
    let sd = pooled_probability_sd(&[0], &p);
    assert!((sd - SD_UNIFORM).abs() < 1e-12);
    assert!((inflation_factor(sd, DEFAULT_OMEGA_MAX) - 1.0).abs() < 1e-12);
}

#[test]
fn inflation_factor_is_capped() {
    assert_eq!(inflation_factor(0.0, 10.0), 10.0);
    assert_eq!(inflation_factor(1e-9, 10.0), 10.0);
    assert!(inflation_factor(0.5, 10.0) < 1.0);
}

#[test]
fn constant_probabilities_grow_a_single_leaf() {
    let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![0.3, 0.7]).collect();
    let p = prob_matrix(&rows);
    let table = numeric_table(vec![(0..30).map(|i| i as f64).collect()]);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 2, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    assert_eq!(tree.leaf_count(), 1);
    assert!(tree.root().is_leaf());
}

/// Piecewise probabilities over x: decisive t1 below the cut, decisive t2
/// above it.
fn two_region_setup(n: usize, cut: f64) -> (ProbabilityMatrix, FeatureTable) {
    let mut rng = stream(5150, &[]);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|&v| {
            if v < cut {
                vec![0.95, 0.05]
            } else {
                vec![0.05, 0.95]
            }
        })
        .collect();
    (prob_matrix(&rows), numeric_table(vec![x]))
}

#[test]
fn grow_recovers_a_two_region_boundary() {
    let (p, table) = two_region_setup(200, 0.1);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 20, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    assert_eq!(tree.leaf_count(), 2);
    let PsicaNode::Internal { rule, .. } = tree.root() else {
        panic!("expected a root split");
    };
    let SplitTest::Threshold(t) = rule.test else {
        panic!("expected a numeric rule");
    };
    assert!((t - 0.1).abs() < 0.05, "threshold {t}");
    let leaves = tree.leaves();
    assert_eq!(leaves[0].potential, TreatmentSet::from_indices([0]));
    assert_eq!(leaves[1].potential, TreatmentSet::from_indices([1]));
}

#[test]
fn grown_leaves_respect_min_leaf_and_useless_mass() {
    let (p, table) = two_region_setup(300, -0.2);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 30, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    for leaf in tree.leaves() {
        assert!(leaf.size >= 30);
        let useless_mass: f64 = leaf.useless.iter().map(|k| leaf.agg_probs[k]).sum();
        assert!(useless_mass <= 0.05 + 1e-12);
    }
    // Sibling sizes add up along the whole tree.
    fn check_sizes(node: &PsicaNode) {
        if let PsicaNode::Internal {
            left,
            right,
            summary,
            ..
        } = node
        {
            assert_eq!(left.summary().size + right.summary().size, summary.size);
            check_sizes(left);
            check_sizes(right);
        }
    }
    check_sizes(tree.root());
}

#[test]
fn same_label_leaves_collapse_to_root() {
    // Probabilities differ slightly across the cut but the labels agree,
    // so collapse-same-label prunes everything.
    let mut rng = stream(404, &[]);
    let x: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|&v| {
            if v < 0.0 {
                vec![0.8, 0.2]
            } else {
                vec![0.6, 0.4]
            }
        })
        .collect();
    let p = prob_matrix(&rows);
    let table = numeric_table(vec![x]);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 10, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    assert!(tree.leaf_count() >= 2, "setup should split at least once");
    for leaf in tree.leaves() {
        assert_eq!(leaf.potential, TreatmentSet::full(2));
    }
    let pruned = prune(&tree, &PrunePolicy::CollapseSameLabel);
    assert_eq!(pruned.leaf_count(), 1);
    assert_eq!(pruned.root().summary(), tree.root().summary());
}

#[test]
fn max_leaves_one_collapses_to_root() {
    let (p, table) = two_region_setup(200, 0.0);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 20, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    let pruned = prune(&tree, &PrunePolicy::MaxLeaves(1));
    assert_eq!(pruned.leaf_count(), 1);
}

#[test]
fn pruned_losses_rise_as_leaves_shrink() {
    // Four regions with distinct decisive labels force a deeper tree.
    let mut rng = stream(808, &[]);
    let x: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|&v| {
            if v < -0.5 {
                vec![0.9, 0.05, 0.05]
            } else if v < 0.0 {
                vec![0.05, 0.9, 0.05]
            } else if v < 0.5 {
                vec![0.05, 0.05, 0.9]
            } else {
                vec![0.4, 0.4, 0.2]
            }
        })
        .collect();
    let p = prob_matrix(&rows);
    let table = numeric_table(vec![x]);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 40, 3);
    let tree = grow(&p, &table, &names(3), &config).unwrap();
    assert!(tree.leaf_count() >= 3);

    let mut last_loss = -1.0;
    for budget in (1..=tree.leaf_count()).rev() {
        let pruned = prune(&tree, &PrunePolicy::MaxLeaves(budget));
        assert!(pruned.leaf_count() <= budget.max(1));
        let loss = pruned.root().total_leaf_loss();
        assert!(
            loss + 1e-9 >= last_loss,
            "loss decreased: {loss} after {last_loss}"
        );
        last_loss = loss;
    }
}

#[test]
fn min_gain_pruning_keeps_strong_splits() {
    let (p, table) = two_region_setup(200, 0.0);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 20, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    // The decisive boundary split has a huge gain; a tiny threshold keeps it.
    let kept = prune(&tree, &PrunePolicy::MinGain(1e-6));
    assert!(kept.leaf_count() >= 2);
    // An absurd threshold removes everything.
    let removed = prune(&tree, &PrunePolicy::MinGain(1e12));
    assert_eq!(removed.leaf_count(), 1);
}

#[test]
fn root_only_tree_labels_every_row_identically() {
    let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![0.45, 0.55]).collect();
    let p = prob_matrix(&rows);
    let table = numeric_table(vec![(0..10).map(|i| i as f64).collect()]);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 2, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    assert_eq!(tree.leaf_count(), 1);
    let root_summary = tree.root().summary().clone();
    for row in 0..10 {
        let (potential, trunc) = tree.predict_label(&table, row).unwrap();
        assert_eq!(potential, root_summary.potential);
        assert_eq!(trunc, root_summary.trunc_probs);
    }
}

#[test]
fn routing_matches_manual_rule_walk() {
    // Mixed numeric + categorical tree; the oracle re-evaluates every rule
    // by hand from the raw table values.
    let mut rng = stream(31337, &[]);
    let n = 300;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3u32)).collect();
    let rows: Vec<Vec<f64>> = x
        .iter()
        .zip(&g)
        .map(|(&v, &c)| {
            if c == 2 {
                vec![0.05, 0.9, 0.05]
            } else if v < 0.0 {
                vec![0.9, 0.05, 0.05]
            } else {
                vec![0.05, 0.05, 0.9]
            }
        })
        .collect();
    let p = prob_matrix(&rows);
    let schema = FeatureSchema::new(vec![
        Feature {
            name: "x1".into(),
            kind: FeatureKind::Numeric,
        },
        Feature {
            name: "g".into(),
            kind: FeatureKind::Categorical {
                levels: vec!["a".into(), "b".into(), "c".into()],
            },
        },
    ])
    .unwrap();
    let table = FeatureTable::new(
        schema,
        vec![FeatureColumn::Numeric(x.clone()), FeatureColumn::Categorical(g.clone())],
    )
    .unwrap();
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 25, 3);
    let tree = grow(&p, &table, &names(3), &config).unwrap();
    assert!(tree.leaf_count() >= 2);

    fn manual_walk<'t>(
        node: &'t PsicaNode,
        x: f64,
        g: u32,
    ) -> &'t NodeSummary {
        match node {
            PsicaNode::Leaf { summary } => summary,
            PsicaNode::Internal {
                rule, left, right, ..
            } => {
                let goes_left = match (&rule.test, rule.feature) {
                    (SplitTest::Threshold(t), 0) => x <= *t,
                    (SplitTest::LevelSet(set), 1) => set.contains(&g),
                    other => panic!("unexpected rule {other:?}"),
                };
                manual_walk(if goes_left { left } else { right }, x, g)
            }
        }
    }

    for _ in 0..100 {
        let row = rng.gen_range(0..n);
        let (_, summary) = tree.route(&table, row).unwrap();
        let expected = manual_walk(tree.root(), x[row], g[row]);
        assert_eq!(summary, expected);
    }
}

#[test]
fn route_rejects_foreign_schema() {
    let (p, table) = two_region_setup(100, 0.0);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 10, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    let other = numeric_table(vec![vec![0.0; 5], vec![0.0; 5]]);
    assert!(matches!(
        tree.route(&other, 0),
        Err(crate::error::Error::SchemaMismatch(_))
    ));
}

#[test]
fn preprune_is_edge_subgraph_in_simple_setup() {
    let (p, table) = two_region_setup(300, 0.25);
    let full = grow(
        &p,
        &table,
        &names(2),
        &GrowConfig::new(GrowthMethod::Full, 0.05, 30, 2),
    )
    .unwrap();
    let pre = grow(
        &p,
        &table,
        &names(2),
        &GrowConfig::new(GrowthMethod::Preprune, 0.05, 30, 2),
    )
    .unwrap();
    assert!(is_edge_subgraph(pre.root(), full.root()));
}

#[test]
fn interchange_round_trip_preserves_tree() {
    let mut rng = stream(2025, &[]);
    let n = 200;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4u32)).collect();
    let rows: Vec<Vec<f64>> = x
        .iter()
        .zip(&g)
        .map(|(&v, &c)| {
            if c == 0 {
                vec![0.9, 0.1]
            } else if v < 0.0 {
                vec![0.7, 0.3]
            } else {
                vec![0.1, 0.9]
            }
        })
        .collect();
    let p = prob_matrix(&rows);
    let schema = FeatureSchema::new(vec![
        Feature {
            name: "x1".into(),
            kind: FeatureKind::Numeric,
        },
        Feature {
            name: "grp".into(),
            kind: FeatureKind::Categorical {
                levels: vec!["K1".into(), "K2".into(), "K3".into(), "K4".into()],
            },
        },
    ])
    .unwrap();
    let table = FeatureTable::new(
        schema,
        vec![FeatureColumn::Numeric(x), FeatureColumn::Categorical(g)],
    )
    .unwrap();
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 20, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    assert!(tree.node_count() > 1);

    let json = tree.to_json().unwrap();
    let reloaded = PsicaTree::from_json(&json).unwrap();
    assert_eq!(tree, reloaded);
    // Serialization is deterministic.
    assert_eq!(json, reloaded.to_json().unwrap());
}

#[test]
fn dot_export_has_one_box_per_node() {
    let (p, table) = two_region_setup(200, 0.0);
    let config = GrowConfig::new(GrowthMethod::Full, 0.05, 20, 2);
    let tree = grow(&p, &table, &names(2), &config).unwrap();
    let dot = tree.to_dot();
    assert!(dot.starts_with("digraph psica_tree {"));
    let boxes = dot.matches("[label=").count();
    // Every node carries a label attribute; edges carry yes/no labels.
    let edge_labels = dot.matches("label=\"yes\"").count() + dot.matches("label=\"no\"").count();
    assert_eq!(boxes - edge_labels, tree.node_count());
    assert!(dot.contains("label: {t1}"));
}

#[test]
fn cost_matrix_validation() {
    assert!(CostMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.5]]).is_err());
    assert!(CostMatrix::from_rows(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
    let ok = CostMatrix::from_rows(vec![vec![0.0, 2.0], vec![1.0, 0.0]]).unwrap();
    assert!(!ok.is_zero_one());
    assert!(CostMatrix::zero_one(3).is_zero_one());
}
