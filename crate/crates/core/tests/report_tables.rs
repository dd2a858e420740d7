use fairfront_core::config::ExplorationConfig;
use fairfront_core::grid::Progress;
use fairfront_core::metrics::MetricId;
use fairfront_core::models::ModelFamily;
use fairfront_core::pareto::{extract_frontier, DominanceMode, Grouping, ObjectivePair};
use fairfront_core::pipeline::{parse_records, records_json, render_report, run_exploration};
use fairfront_core::report::{pareto_table, ParetoTable};
use fairfront_core::synth::{synthetic_dataset, SyntheticSpec};
use fairfront_core::EvaluationRecord;
use proptest::prelude::*;

fn run(cfg: &str) -> (ExplorationConfig, Vec<EvaluationRecord>) {
    let cfg = ExplorationConfig::from_json(cfg).unwrap();
    let d = synthetic_dataset(&SyntheticSpec {
        n_rows: 240,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let recs = run_exploration(&d, &cfg, &Progress::new(0), None).unwrap();
    (cfg, recs)
}

const TREES: &str = r#"{
  "families": ["decision_tree"],
  "spaces": {"decision_tree": {"max_features": ["none"], "class_weight": ["none"],
             "min_samples_split": [2, 8, 20], "min_samples_leaf": [1, 4, 12, 20]}},
  "splits": {"n_splits": 3},
  "seed": 11
}"#;

#[test]
fn frontier_tables_are_ordered_and_complete() {
    let (cfg, recs) = run(TREES);
    for m in MetricId::CASE_STUDY {
        let sets = extract_frontier(&recs, ObjectivePair::accuracy_vs(m), DominanceMode::Weak, Grouping::PerFamily);
        assert_eq!(sets.len(), 1);
        let t = pareto_table(&sets[0], &cfg.metrics);
        assert_eq!(t.rows.len(), sets[0].members.len());
        assert!(t.rows.windows(2).all(|w| w[0].accuracy <= w[1].accuracy));
        // 2 + metrics + hyperparameters
        assert_eq!(t.header().len(), 2 + 5 + 5);
        let csv = String::from_utf8(t.to_csv()).unwrap();
        assert_eq!(csv.lines().count(), 1 + t.rows.len());
        for s in MetricId::CASE_STUDY {
            assert!(csv.lines().next().unwrap().split(',').any(|c| c == s.as_str()));
        }
    }
}

#[test]
fn report_regenerates_identically_from_persisted_records() {
    let (cfg, recs) = run(TREES);
    let first = render_report(&recs, &cfg, TREES).unwrap();
    let reloaded = parse_records(&records_json(&recs)).unwrap();
    assert_eq!(render_report(&reloaded, &cfg, TREES).unwrap(), first);
    assert!(first.contains(TREES));
    assert!(first.contains("Moving from the most-accurate to the fairest member changes accuracy by"));
    assert_eq!(first.matches("\n### decision_tree · ").count(), 5);
    assert!(!first.contains("## Multi-model frontiers"));
}

#[test]
fn multi_family_report_has_combined_tables() {
    let cfg = r#"{
      "families": ["logistic_regression", "svc"],
      "spaces": {"logistic_regression": {"C": [0.01, 1]}, "svc": {"C": [1], "kernel": ["linear", "rbf"]}},
      "metrics": ["statistical_parity", "equal_opportunity"],
      "splits": {"n_splits": 2},
      "settings": {"svc_epochs": 3}
    }"#;
    let (c, recs) = run(cfg);
    let md = render_report(&recs, &c, cfg).unwrap();
    assert_eq!(md.matches("\n### ").count(), 2 * 2 + 2);
    assert!(md.contains("### all families · equal_opportunity"));
    let sets = extract_frontier(
        &recs,
        ObjectivePair::accuracy_vs(MetricId::StatisticalParity),
        DominanceMode::Weak,
        Grouping::AllFamilies,
    );
    let t = pareto_table(&sets[0], &c.metrics);
    // union of hyperparameters, in family order
    assert_eq!(t.hyperparameters, vec!["C", "penalty", "kernel"]);
    for row in &t.rows {
        let filled = row.hyperparameters.iter().filter(|h| h.is_some()).count();
        assert_eq!(filled, 2);
        assert!(matches!(row.family, ModelFamily::LogisticRegression | ModelFamily::Svc));
    }
}

proptest! {
    #[test]
    fn csv_round_trips_to_six_decimals(
        scores in prop::collection::vec((0.0f64..1.0, prop::option::of(0.0f64..1.0)), 0..20),
    ) {
        let (cfg, recs) = run_cached();
        let base = &recs[0];
        let mut members = Vec::new();
        for (k, &(acc, sc)) in scores.iter().enumerate() {
            let mut r = base.clone();
            r.index = k;
            r.accuracy.as_mut().unwrap().mean = acc;
            let m = r.metrics.get_mut(&MetricId::EqualOpportunity).unwrap();
            m.score = sc.map(|v| fairfront_core::grid::Stat { mean: v, variance: 0.0 });
            members.push(r);
        }
        let mut set = extract_frontier(&[], ObjectivePair::accuracy_vs(MetricId::AccuracyEquality), DominanceMode::Weak, Grouping::AllFamilies).remove(0);
        set.members = members;
        let t = pareto_table(&set, &cfg.metrics);
        let back = ParetoTable::from_csv(&t.to_csv(), t.y_objective).unwrap();
        prop_assert_eq!(back.rows.len(), t.rows.len());
        for (a, b) in t.rows.iter().zip(&back.rows) {
            prop_assert!((a.accuracy - b.accuracy).abs() <= 5e-7);
            for (x, y) in a.scores.iter().zip(&b.scores) {
                match (x, y) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 5e-7),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
            prop_assert_eq!(&a.hyperparameters, &b.hyperparameters);
        }
        prop_assert_eq!(back.to_csv(), t.to_csv());
    }
}

fn run_cached() -> &'static (ExplorationConfig, Vec<EvaluationRecord>) {
    static CELL: std::sync::OnceLock<(ExplorationConfig, Vec<EvaluationRecord>)> = std::sync::OnceLock::new();
    CELL.get_or_init(|| run(TREES))
}
