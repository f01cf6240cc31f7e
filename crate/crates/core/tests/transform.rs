use kgprep::model::Dis;
use kgprep::rdfize::{rdfize, KnowledgeGraph, RdfizeOptions};
use kgprep::store::{csv_size, CsvDialect};
use kgprep::testing::{random_dis, rng, RandomDisConfig};
use kgprep::transform::{optimize, rule1_project, rule2_pushdown_join, rule3_merge};
use proptest::prelude::*;

fn graph(dis: &Dis) -> KnowledgeGraph {
    rdfize(dis, &RdfizeOptions::default()).unwrap().0
}

fn total_bytes(dis: &Dis) -> u64 {
    dis.sources.values().map(|r| csv_size(r, CsvDialect::default())).sum()
}

fn config(seed: u64) -> RandomDisConfig {
    RandomDisConfig {
        duplicate_fraction: (seed % 10) as f64 * 0.1,
        joins: !seed.is_multiple_of(3),
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn optimize_preserves_the_graph(seed in any::<u64>()) {
        let dis = random_dis(&mut rng(seed), &config(seed));
        let out = optimize(&dis);
        prop_assert_eq!(graph(&out.dis), graph(&dis));
        prop_assert!(out.dis.validate().is_valid(), "{:?}", out.dis.validate());
        prop_assert!(out.plan.passes <= dis.mappings.len() + dis.sources.len() + 2);
        prop_assert!(total_bytes(&out.dis) <= total_bytes(&dis));
        for s in out.stats.sources.values() {
            prop_assert!(s.rows_after <= s.rows_before, "{:?}", s);
        }
        let again = optimize(&out.dis);
        prop_assert_eq!(again.plan.effective_steps(), 0, "{:#?}", again.plan);
    }

    #[test]
    fn each_rule_alone_preserves_the_graph(seed in any::<u64>()) {
        let dis = random_dis(&mut rng(seed), &config(seed));
        let want = graph(&dis);
        prop_assert_eq!(graph(&rule1_project(&dis).dis), want.clone());
        prop_assert_eq!(graph(&rule3_merge(&dis).dis), want.clone());
        let mut pushed = dis.clone();
        pushed.mappings = dis.mappings.iter().map(rule2_pushdown_join).collect();
        prop_assert_eq!(graph(&pushed), want);
    }
}

#[test]
fn random_instances_exercise_every_rewrite() {
    use kgprep::transform::StepAction;
    let (mut merges, mut projections, mut pushdowns, mut joins) = (0, 0, 0, 0);
    for seed in 0..200 {
        let dis = random_dis(&mut rng(seed), &config(seed));
        joins += dis.mappings.iter().filter(|r| r.body.len() > 1).count();
        for step in optimize(&dis).plan.steps {
            match step.action {
                StepAction::Merge { .. } => merges += 1,
                StepAction::Project { .. } => projections += 1,
                StepAction::PushdownJoin { .. } => pushdowns += 1,
            }
        }
    }
    println!("merges={merges} projections={projections} pushdowns={pushdowns} joins={joins}");
    assert!(merges >= 20 && projections >= 20 && pushdowns >= 20 && joins >= 20);
}
