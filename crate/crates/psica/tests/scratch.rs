// Temporary calibration probe; deleted before finalizing.
use psica::evalsim::{run_replicate, PipelineMethod, SimModelId};
use psica::psicatree::{prune, GrowthMethod, PrunePolicy};

#[test]
#[ignore]
fn probe_criterion_timings() {
    for (model, n, method, label) in [
        (SimModelId::M1, 300, PipelineMethod::M2, "c1-m1"),
        (SimModelId::M2, 300, PipelineMethod::M2, "c1-m2"),
        (SimModelId::M5, 1800, PipelineMethod::M1, "c2-m5"),
        (SimModelId::M4, 300, PipelineMethod::M1, "c3-m4-300"),
        (SimModelId::M4, 900, PipelineMethod::M1, "c3-m4-900"),
        (SimModelId::M4, 1800, PipelineMethod::M1, "c3-m4-1800"),
        (SimModelId::M2, 900, PipelineMethod::M1, "c5-m2-900"),
        (SimModelId::M3, 1800, PipelineMethod::M2, "c4-m3-1800"),
    ] {
        let start = std::time::Instant::now();
        let art = run_replicate(
            model,
            n,
            method,
            GrowthMethod::Full,
            200,
            100,
            0.05,
            false,
            42,
        )
        .unwrap();
        let m = art.metrics;
        println!(
            "{label}: a={:.3} u={:.3} s={:.3} d={:.3} leaves={} ({:.2?})",
            m.accuracy,
            m.uncertainty,
            m.suspect,
            m.decision_accuracy,
            art.tree.leaf_count(),
            start.elapsed()
        );
    }
}

#[test]
#[ignore]
fn probe_fig1_demo() {
    for seed in [1u64, 2, 3, 4, 5] {
        let start = std::time::Instant::now();
        let art = run_replicate(
            SimModelId::Fig1,
            1500,
            PipelineMethod::M1,
            GrowthMethod::Full,
            200,
            100,
            0.05,
            false,
            seed,
        )
        .unwrap();
        let collapsed = prune(&art.tree, &PrunePolicy::CollapseSameLabel);
        let labels: Vec<String> = collapsed
            .leaves()
            .iter()
            .map(|l| l.potential.display_with(collapsed.treatments()))
            .collect();
        println!(
            "fig1 seed={seed}: leaves(before)={} leaves(after)={} labels={labels:?} ({:.2?})",
            art.tree.leaf_count(),
            collapsed.leaf_count(),
            start.elapsed()
        );
    }
}
