use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use subscope::ops::{Report, RecommendedReplication};
use subscope::ErrorBody;
use subscope_core::search::SearchResultDoc;
use subscope_core::synthetic::planted_cohort;

fn subscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = subscope(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn error_of(out: &Output) -> ErrorBody {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr carries a JSON error")
}

fn write_cohort(dir: &Path, tag: &str, n: usize, seed: u64) -> (String, String) {
    let csv = dir.join(format!("{tag}.csv"));
    let schema = dir.join(format!("{tag}.schema.json"));
    planted_cohort(tag, n, 10, seed).export_files(&csv, &schema).unwrap();
    (csv.display().to_string(), schema.display().to_string())
}

fn p(path: &PathBuf) -> &str {
    path.to_str().unwrap()
}

#[test]
fn recommend_round_trip_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("session.json");
    let (s2, s2_schema) = write_cohort(dir.path(), "S2", 400, 3);
    let (t, t_schema) = write_cohort(dir.path(), "T", 400, 1003);

    ok(&["ingest", "--session", p(&session), "--tag", "S2", &s2, &s2_schema]);
    ok(&["ingest", "--session", p(&session), "--tag", "T", &t, &t_schema]);
    let cs: Value = serde_json::from_slice(&ok(&["constraints", "--session", p(&session), "--seed", "3"])).unwrap();
    assert_eq!(cs["must_link"].as_array().unwrap().len(), 20);
    assert_eq!(cs["cohort"], "S2");
    let doc: SearchResultDoc = serde_json::from_slice(&ok(&["search", "--session", p(&session)])).unwrap();
    assert!(!doc.clusters.is_empty());

    let rep: RecommendedReplication =
        serde_json::from_slice(&ok(&["replicate", "--session", p(&session), "--recommend"])).unwrap();
    assert!(rep.recommendation.objective >= rep.recommendation.initial_objective);
    assert_eq!(rep.committed.subpopulation_a.id, format!("{}.1", rep.cluster_id));
    assert_eq!(rep.committed.subpopulation_b.id, "T-1");

    let report: Report = serde_json::from_slice(&ok(&["report", "--session", p(&session)])).unwrap();
    assert_eq!(report.sections.len(), 1);
    let v = &report.sections[0].validation;
    assert!(v.dimensionality_equal);
    assert!(v.size.absolute_difference <= 0.05, "gap {}", v.size.absolute_difference);

    let md = String::from_utf8(ok(&["report", "--session", p(&session), "--format", "markdown"])).unwrap();
    assert!(md.starts_with("# Replication report"));
    assert!(md.contains(&format!("## {} vs T-1", rep.committed.subpopulation_a.id)));
}

#[test]
fn report_without_commits_fails() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("session.json");
    let (s2, schema) = write_cohort(dir.path(), "S2", 60, 1);
    ok(&["ingest", "--session", p(&session), "--tag", "S2", &s2, &schema]);
    let out = subscope(&["report", "--session", p(&session)]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_of(&out);
    assert_eq!(err.error.code, "missing_prerequisite");
    assert_eq!(err.error.message, "no committed subpopulations");
}

#[test]
fn file_mode_search_writes_a_search_result() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write_cohort(dir.path(), "S2", 200, 5);
    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"alpha": 0.5, "max_dimensionality": 3}"#).unwrap();
    let result = dir.path().join("result.json");
    ok(&["search", "--config", p(&config), &csv, &schema, "-o", p(&result)]);
    let doc: SearchResultDoc = serde_json::from_slice(&std::fs::read(&result).unwrap()).unwrap();
    assert_eq!(doc.cohort, "S2");
    assert_eq!(doc.config.max_dimensionality, 3);
    assert!(doc.subspaces.iter().all(|s| s.columns.len() <= 3));
    assert!(doc.q_best_trace.windows(2).all(|w| w[0].q_best <= w[1].q_best));
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write_cohort(dir.path(), "S2", 60, 5);
    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"alpha": 0.5, "beta": 1}"#).unwrap();
    let err = error_of(&subscope(&["search", "--config", p(&config), &csv, &schema]));
    assert_eq!(err.error.code, "invalid_body");

    std::fs::write(&config, r#"{"alpha": 2}"#).unwrap();
    let err = error_of(&subscope(&["search", "--config", p(&config), &csv, &schema]));
    assert_eq!(err.error.code, "invalid_input");
}

#[test]
fn missing_artifacts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("none.json");
    let err = error_of(&subscope(&["layout", "--session", p(&session)]));
    assert_eq!(err.error.code, "missing_prerequisite");

    let (csv, schema) = write_cohort(dir.path(), "S2", 60, 5);
    let session = dir.path().join("s.json");
    ok(&["ingest", "--session", p(&session), "--tag", "S2", &csv, &schema]);
    let err = error_of(&subscope(&["replicate", "--session", p(&session), "--recommend"]));
    assert_eq!(err.error.code, "missing_prerequisite");

    let err = error_of(&subscope(&["ingest", "--session", p(&session), "--tag", "S2", &csv, &schema]));
    assert_eq!(err.error.code, "conflict");
}

#[test]
fn usage_errors_are_machine_readable() {
    let out = subscope(&["replicate", "--session", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out).error.code, "usage");
}

#[test]
fn rectangles_from_file_and_commit_by_index() {
    let dir = tempfile::tempdir().unwrap();
    let session = dir.path().join("session.json");
    let (s2, s2_schema) = write_cohort(dir.path(), "S2", 200, 8);
    let (t, t_schema) = write_cohort(dir.path(), "T", 200, 1008);
    ok(&["ingest", "--session", p(&session), "--tag", "S2", &s2, &s2_schema]);
    ok(&["ingest", "--session", p(&session), "--tag", "T", &t, &t_schema]);
    ok(&["search", "--session", p(&session)]);
    let clusters: Value = serde_json::from_slice(&ok(&["clusters", "--session", p(&session), "--k", "1"])).unwrap();
    let top = &clusters[0];
    let cid = top["id"].as_str().unwrap().to_string();
    let col = top["columns"][0].as_str().unwrap().to_string();
    let rects = dir.path().join("rects.json");
    std::fs::write(
        &rects,
        format!(r#"[{{"intervals": {{"{col}": [-10, 10]}}}}, {{"intervals": {{"{col}": [0.2, 0.6]}}}}]"#),
    )
    .unwrap();
    let cands: Value = serde_json::from_slice(&ok(&[
        "replicate", "--session", p(&session), "--cluster", &cid, "--rects", p(&rects),
    ]))
    .unwrap();
    assert_eq!(cands.as_array().unwrap().len(), 2);
    assert_eq!(cands[0]["tpr"], 1.0);
    assert_eq!(cands[0]["fpr"], 1.0);

    let committed: Value = serde_json::from_slice(&ok(&[
        "replicate", "--session", p(&session), "--cluster", &cid, "--rects", p(&rects), "--commit", "1",
    ]))
    .unwrap();
    assert_eq!(committed["subpopulation_b"]["label_provenance"], "predicted");
    let layout: Value = serde_json::from_slice(&ok(&["layout", "--session", p(&session), "--beta", "1"])).unwrap();
    let ids: Vec<&str> = layout["points"].as_array().unwrap().iter().map(|p| p["cluster_id"].as_str().unwrap()).collect();
    assert!(ids.contains(&format!("{cid}.1").as_str()));
    assert!(ids.contains(&"T-1"));
}
