mod support;

use std::fs;

use support::*;

fn run_into(fx: &Fixture, name: &str, workers: usize) -> std::path::PathBuf {
    let out = fx.path(name);
    let o = chartforge(&fx.run_args(&out, workers));
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn run_writes_records_artifacts_and_reports() {
    let fx = Fixture::new();
    let out = fx.path("run");
    let o = chartforge(&fx.run_args(&out, 3));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), format!("12 tasks, 1 failed, error ratio 8.33% -> {}", out.display()));

    let records = fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), TASKS);
    for name in ["manifest.json", "dataset/tasks.jsonl", "scripts/t00/attempt_0.py", "scripts/t00/attempt_0.traceback.txt", "images/t00.png"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert!(!out.join("images/t07.png").exists());
    for table in ["error", "similarity", "image", "iterations", "errors-topk"] {
        assert!(out.join(format!("reports/{table}.csv")).is_file(), "{table}");
        assert!(out.join(format!("reports/{table}.json")).is_file(), "{table}");
    }
    // No judge pass yet.
    assert!(!out.join("reports/audit.csv").exists());
}

#[test]
fn runs_are_byte_identical_across_worker_counts() {
    let fx = Fixture::new();
    let a = run_into(&fx, "a", 1);
    let b = run_into(&fx, "b", 6);
    assert_eq!(fs::read(a.join("records.jsonl")).unwrap(), fs::read(b.join("records.jsonl")).unwrap());
    assert_eq!(tree(&a.join("reports")), tree(&b.join("reports")));
    assert_eq!(tree(&a.join("scripts")), tree(&b.join("scripts")));
    assert_eq!(tree(&a.join("images")), tree(&b.join("images")));
}

#[test]
fn report_is_idempotent_and_matches_written_file() {
    let fx = Fixture::new();
    let run = run_into(&fx, "run", 2);
    let dir = run.to_str().unwrap();
    let first = chartforge(&["report", dir, "--table", "error"]);
    let second = chartforge(&["report", dir, "--table", "error"]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.stdout, fs::read(run.join("reports/error.csv")).unwrap());

    let json = chartforge(&["report", dir, "--table", "error", "--format", "json"]);
    assert_eq!(json.stdout, fs::read(run.join("reports/error.json")).unwrap());
}

#[test]
fn error_and_topk_tables() {
    let fx = Fixture::new();
    let run = run_into(&fx, "run", 2);
    let dir = run.to_str().unwrap();

    let table = stdout(&chartforge(&["report", dir, "--table", "error", "--label", "mock"]));
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("Method,Pairwise,Statistical distribution,(Irregularly) gridded,3D and Volumetric,Total")
    );
    // t07 is the only failure. The pooled gridded column holds t02, t03,
    // t07 and t08.
    assert_eq!(lines.next(), Some("mock,0.00,0.00,25.00,0.00,8.33"));

    let topk = stdout(&chartforge(&["report", dir, "--table", "errors-topk", "--k", "3"]));
    let rows: Vec<Vec<String>> = csv::Reader::from_reader(topk.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], "BadKeywordArgument(stem, use_line_collection)");
    assert_eq!(rows[0][2], "5");
    assert_eq!(rows[1][2], "2");
    assert_eq!(rows[2][2], "1");
}

#[test]
fn iterations_table_counts_fixes() {
    let fx = Fixture::new();
    let run = run_into(&fx, "run", 2);
    let table = stdout(&chartforge(&["report", run.to_str().unwrap(), "--table", "iterations", "--label", "x"]));
    assert_eq!(table, "Method,1,2,3\nx,5,2,0\n");
}

#[test]
fn audit_table_needs_a_judge_pass() {
    let fx = Fixture::new();
    let run = run_into(&fx, "run", 2);
    let dir = run.to_str().unwrap();
    let o = chartforge(&["report", dir, "--table", "audit"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing inputs"), "{}", stderr(&o));

    let judge = chartforge(&[
        "judge",
        dir,
        "--provider",
        "mock",
        "--mock-script",
        fx.judge_mock.to_str().unwrap(),
    ]);
    assert!(judge.status.success(), "{}", stderr(&judge));
    // Eleven charts; t00, t03, t06 and t09 are judged appropriate.
    assert!(stdout(&judge).contains("audit: 36.4% appropriate over 11 charts"), "{}", stdout(&judge));
    assert!(stdout(&judge).contains("over 11 pairs"), "{}", stdout(&judge));
    assert!(run.join("reports/audit.jsonl").is_file());
    assert!(run.join("reports/perceptual.jsonl").is_file());

    let audit = stdout(&chartforge(&["report", dir, "--table", "audit"]));
    assert!(audit.lines().nth(1).unwrap().ends_with(",36.4"), "{audit}");
    let image = stdout(&chartforge(&["report", dir, "--table", "image"]));
    assert_eq!(image.lines().count(), 2, "{image}");
}

#[test]
fn sample_is_seeded() {
    let fx = Fixture::new();
    let run = run_into(&fx, "run", 2);
    let dir = run.to_str().unwrap();
    let a = fx.path("sa");
    let b = fx.path("sb");
    for out in [&a, &b] {
        let o = chartforge(&["sample", dir, "--n", "5", "--seed", "3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(tree(&a), tree(&b));
    let review = fs::read_to_string(a.join("review.csv")).unwrap();
    assert_eq!(review.lines().count(), 6);
    assert!(fs::read_to_string(a.join("labels.txt")).unwrap().contains("Successful"));

    let too_many = chartforge(&["sample", dir, "--n", "12"]);
    assert_eq!(too_many.status.code(), Some(1));
    assert!(stderr(&too_many).contains("needs 12"), "{}", stderr(&too_many));
}

#[test]
fn live_provider_refuses_without_key() {
    let fx = Fixture::new();
    let out = fx.path("live");
    let o = chartforge(&["run", fx.dataset.to_str().unwrap(), "--provider", "live", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CHARTFORGE_API_KEY"), "{}", stderr(&o));
    assert!(!out.exists());

    let run = run_into(&fx, "run", 1);
    let judge = chartforge(&["judge", run.to_str().unwrap()]);
    assert_eq!(judge.status.code(), Some(2));
    assert!(stderr(&judge).contains("CHARTFORGE_API_KEY"));
}

#[test]
fn usage_errors_exit_two() {
    let fx = Fixture::new();
    let run = run_into(&fx, "run", 1);
    assert_eq!(chartforge(&["run", "--backend", "bogus"]).status.code(), Some(2));
    assert_eq!(chartforge(&["report", run.to_str().unwrap(), "--table", "nope"]).status.code(), Some(2));
    // Existing run directory without --force.
    let again = chartforge(&fx.run_args(&run, 1));
    assert_eq!(again.status.code(), Some(2), "{}", stderr(&again));
    let mut forced = fx.run_args(&run, 1);
    forced.push("--force".into());
    assert!(chartforge(&forced).status.success());
    // Mock provider without a script.
    let o = chartforge(&["run", fx.dataset.to_str().unwrap(), "--provider", "mock", "--out", fx.path("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_run_dir_is_a_runtime_error() {
    let fx = Fixture::new();
    let o = chartforge(&["report", fx.path("absent").to_str().unwrap(), "--table", "error"]);
    assert_eq!(o.status.code(), Some(1));
}
