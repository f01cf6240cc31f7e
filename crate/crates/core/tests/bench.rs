use kgprep::bench::{
    cells, distinct_rows, generate_workload, run_cell, run_matrix, CellSpec, Framework, JoinScenario, WorkloadSpec,
};

fn spec(base_rows: usize) -> WorkloadSpec {
    WorkloadSpec { base_rows, join_scenarios: vec![], ..Default::default() }
}

#[test]
fn duplicate_fraction_bounds_distinct_tuples() {
    let dir = tempfile::tempdir().unwrap();
    let s = WorkloadSpec { base_rows: 1000, attributes_per_source: 2, ..spec(1000) };
    let w = generate_workload(&s, &CellSpec::Merge { volume: 1.0, duplicate_fraction: 0.75 }, dir.path()).unwrap();
    let counts = distinct_rows(&w).unwrap();
    assert_eq!(counts.len(), 3);
    assert!(counts.values().all(|n| *n <= 250), "{counts:?}");
}

#[test]
fn same_seed_same_bytes_other_seed_differs() {
    let dir = tempfile::tempdir().unwrap();
    let cell = CellSpec::Merge { volume: 0.5, duplicate_fraction: 0.25 };
    let read = |sub: &str, seed: u64| {
        let w = generate_workload(&WorkloadSpec { seed, ..spec(400) }, &cell, &dir.path().join(sub)).unwrap();
        w.files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(read("a", 1), read("b", 1));
    assert_ne!(read("a", 1), read("c", 2));
}

#[test]
fn tiny_workload_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(10);
    for cell in [
        CellSpec::Merge { volume: 1.0, duplicate_fraction: 0.5 },
        CellSpec::Join { scenario: JoinScenario::OneSideClean },
    ] {
        let w = generate_workload(&s, &cell, &dir.path().join(cell.label())).unwrap();
        let (t, tg) = run_cell(&w, &cell, Framework::Traditional, &s).unwrap();
        let (p, pg) = run_cell(&w, &cell, Framework::Preprocessed, &s).unwrap();
        assert_eq!(t.distinct_triples, p.distinct_triples);
        assert_eq!(tg.unwrap(), pg.unwrap());
        assert!(p.generated_triples <= t.generated_triples);
    }
}

#[test]
fn one_fraction_each_gives_two_records() {
    let dir = tempfile::tempdir().unwrap();
    let s = WorkloadSpec { volume_fractions: vec![1.0], duplicate_fractions: vec![0.5], ..spec(50) };
    let report = run_matrix(&s, dir.path()).unwrap();
    assert_eq!(report.cells.len(), 2);
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    let cell = &json["cells"][0];
    for key in [
        "group",
        "volume",
        "duplicateFraction",
        "framework",
        "wallTimeMillis",
        "generatedTriples",
        "distinctTriples",
        "preprocessedBytes",
        "originalBytes",
    ] {
        assert!(!cell[key].is_null(), "{key} missing");
    }
    assert_eq!(json["seed"], 42);
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn default_grid_has_the_expected_cells() {
    let all = cells(&WorkloadSpec::default());
    assert_eq!(all.iter().filter(|c| matches!(c, CellSpec::Merge { .. })).count(), 12);
    assert_eq!(all.iter().filter(|c| matches!(c, CellSpec::Join { .. })).count(), 3);
}

#[test]
fn duplicates_cost_the_traditional_pipeline_only() {
    let dir = tempfile::tempdir().unwrap();
    let s = WorkloadSpec { duplicate_fractions: vec![0.25, 0.5, 0.75], volume_fractions: vec![1.0], ..spec(2000) };
    let report = run_matrix(&s, dir.path()).unwrap();
    let by = |f: Framework| report.cells.iter().filter(move |c| c.framework == f).collect::<Vec<_>>();
    let t = by(Framework::Traditional);
    let p = by(Framework::Preprocessed);
    for w in t.windows(2) {
        assert!(w[1].generated_triples >= w[0].generated_triples);
    }
    for w in p.windows(2) {
        assert!(w[1].processed_rows < w[0].processed_rows);
    }
    for (tc, pc) in t.iter().zip(&p) {
        assert!(pc.processed_rows < tc.processed_rows);
        assert_eq!(pc.equivalent, Some(true));
    }
}

#[test]
fn fixed_pool_keeps_preprocessed_size_flat() {
    let dir = tempfile::tempdir().unwrap();
    let s = WorkloadSpec { duplicate_fractions: vec![0.5], fixed_pool: true, ..spec(4000) };
    let report = run_matrix(&s, dir.path()).unwrap();
    let p: Vec<_> = report.cells.iter().filter(|c| c.framework == Framework::Preprocessed).collect();
    assert_eq!(p.len(), 4);
    let first = p[0].preprocessed_bytes;
    assert!(p.iter().all(|c| c.preprocessed_bytes == first));
    let ratio = p[3].original_bytes as f64 / p[0].original_bytes as f64;
    assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
}

#[test]
fn zero_timeout_is_recorded_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let s = WorkloadSpec { timeout_secs: 0, volume_fractions: vec![1.0], duplicate_fractions: vec![0.5], ..spec(50) };
    let report = run_matrix(&s, dir.path()).unwrap();
    assert_eq!(report.timeouts(), 2);
    assert!(report.cells.iter().all(|c| c.equivalent.is_none()));
    assert!(report.table().contains("timeout"));
}
