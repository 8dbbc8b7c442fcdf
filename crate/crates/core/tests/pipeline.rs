use std::fs::File;

use wag::graph::{init_general_graph, KnowledgeGraph};
use wag::ingestion::{load_cohort_dir, write_subject_csv};
use wag::providers::{stub_knowledge, StubEmbedder, StubQueryParser};
use wag::retrieval::{parse_query, retrieve, RetrievalConfig, RetrievalResult};
use wag::synthetic::{metric_catalogue, synthetic_cohort, synthetic_knowledge, CohortSpec};

#[test]
fn cohort_csv_round_trip() {
    let metrics = metric_catalogue();
    let spec = CohortSpec {
        subjects: 3,
        days: 20,
        ..CohortSpec::default()
    };
    let cohort = synthetic_cohort(&metrics, &spec, 4);
    let dir = tempfile::tempdir().unwrap();
    for s in &cohort {
        write_subject_csv(s, File::create(dir.path().join(format!("{}.csv", s.subject_id))).unwrap()).unwrap();
    }
    let back = load_cohort_dir(dir.path()).unwrap();
    assert_eq!(back, cohort);
}

#[test]
fn integrating_known_metrics_is_a_no_op() {
    let metrics = metric_catalogue();
    let fixture = synthetic_knowledge(&metrics, 2);
    let knowledge = stub_knowledge(Some(&fixture));
    let mut g = init_general_graph(&metrics, &knowledge).unwrap();
    let before = g.clone();
    let report = g.integrate_metrics(&metrics, &knowledge).unwrap();
    assert!(report.created.is_empty());
    assert_eq!(report.new_edges, 0);
    assert_eq!(g, before);
}

#[test]
fn retrieval_survives_graph_reload_and_serde() {
    let metrics = metric_catalogue();
    let cohort = synthetic_cohort(&metrics, &CohortSpec { subjects: 3, ..CohortSpec::default() }, 8);
    let mut g = init_general_graph(&metrics, &stub_knowledge(Some(&synthetic_knowledge(&metrics, 8)))).unwrap();
    g.embed_names(&StubEmbedder).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    g.save(&path).unwrap();
    let reloaded = KnowledgeGraph::load(&path).unwrap();

    let dict: Vec<String> = g.nodes().map(|n| n.name.clone()).collect();
    let parsed = parse_query("Is anything unusual about my steps taken over the past 14 days?", &dict, &StubQueryParser).unwrap();
    let cfg = RetrievalConfig::default();
    let a = retrieve(&g, &cohort, &cohort[0], &parsed, &cfg, &StubEmbedder).unwrap();
    let b = retrieve(&reloaded, &cohort, &cohort[0], &parsed, &cfg, &StubEmbedder).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.primaries[0].primary.node_name, "Steps taken");

    let json = serde_json::to_string(&a).unwrap();
    let back: RetrievalResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
}
