use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn voie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voie")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn column<'a>(csv: &'a str, name: &str) -> &'a str {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    row[header.iter().position(|h| *h == name).unwrap()]
}

#[test]
fn exact_enumeration_matches_theory() {
    let o = voie(&["simulate", "--generator", "baseline=0:10", "--n", "8", "--p1", "0.25", "--exact"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(column(&out, "assignments"), "420");
    assert_eq!(column(&out, "exact_mean"), column(&out, "target"));
    assert_eq!(column(&out, "exact_variance"), column(&out, "theoretical_variance"));
}

#[test]
fn too_few_reps_is_an_error() {
    let o = voie(&["simulate", "--generator", "baseline=0:10", "--n", "300", "--mode", "mc", "--reps", "10"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("at least 1000"));
}

#[test]
fn estimate_from_bucket_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "buckets.csv",
        "bucket,count,mean,variance\ncv2,10,5,1\nv1,10,3,2\ncc,20,0.5,0.4\n",
    );
    let o = voie(&["estimate", &input, "--header"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(column(&out, "tau_hat"), "1.5");
    let var: f64 = column(&out, "var_upper_hat").parse().unwrap();
    assert!((var - 0.32).abs() < 1e-12);
}

#[test]
fn estimate_from_units_needs_variance_flag_for_singletons() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "units.csv",
        "path,y1,y2\nv1v2,12,24\ncv2,20,24\ncc,30,30\ncc,40,40\n",
    );
    let strict = voie(&["estimate", &input]);
    assert!(!strict.status.success());
    let o = voie(&["estimate", &input, "--allow-missing-variance"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "progressive,12,,,,0.05");
}

#[test]
fn aggregate_normalizes_by_baseline_change() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "effects.csv", "id,tau_hat,var_upper_hat\na,1,1\nb,2,1\nz,5,0\n");
    let o = voie(&["aggregate", &input, "--baseline-prev", "100", "--baseline-curr", "103"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(column(&out, "delta_hat"), "1.5");
    assert_eq!(column(&out, "var_hat"), "0.5");
    assert_eq!(column(&out, "normalized"), "0.5");
    assert_eq!(column(&out, "excluded"), "z");
}

#[test]
fn report_matches_golden_file_and_skips_missing_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let q = dir.path().join("q.csv");
    let o = voie(&[
        "report",
        fixture("filter_rules.csv").to_str().unwrap(),
        "--group-by",
        "allocation",
        "--out",
        out.to_str().unwrap(),
        "--quantiles-out",
        q.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("11 loaded, 1 rejected, 4 excluded, 7 retained"));
    let golden = std::fs::read_to_string(fixture("filter_rules.allocation.golden.csv")).unwrap();
    assert_eq!(std::fs::read_to_string(out).unwrap(), golden);
    assert!(!q.exists());
    assert!(stderr(&o).contains("no per-day effect series"));
}

#[test]
fn report_rejects_unknown_grouping() {
    let o = voie(&["report", fixture("filter_rules.csv").to_str().unwrap(), "--group-by", "weekday"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("weekday"));
}
