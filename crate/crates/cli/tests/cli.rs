use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn les3(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_les3")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A temp dir holding `d.txt`, a 600-set power-law corpus.
fn corpus() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let out = les3(
        &["gen", "--mode", "power-law", "--alpha", "2", "--sets", "600", "--universe", "600", "--seed", "4", "--out", "d.txt"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let data = dir.path().join("d.txt");
    (dir, data)
}

fn build(dir: &Path, extra: &[&str], out: &str) -> Output {
    let mut args = vec!["build", "--data", "d.txt", "--seed", "2", "--out", out];
    args.extend_from_slice(extra);
    les3(&args, dir)
}

#[test]
fn gen_is_deterministic_and_writes_dictionary() {
    let (dir, data) = corpus();
    let again = les3(
        &["gen", "--mode", "power-law", "--alpha", "2", "--sets", "600", "--universe", "600", "--seed", "4", "--out", "e.txt"],
        dir.path(),
    );
    assert_eq!(code(&again), 0);
    assert_eq!(std::fs::read(&data).unwrap(), std::fs::read(dir.path().join("e.txt")).unwrap());
    let dict = std::fs::read_to_string(dir.path().join("d.txt.dict.tsv")).unwrap();
    assert_eq!(dict.lines().count(), 600);
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 600);
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let missing_out = les3(&["gen", "--mode", "uniform", "--sets", "10", "--universe", "10", "--prob", "0.2"], dir.path());
    assert_eq!(code(&missing_out), 1);
    assert_eq!(code(&les3(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&les3(&["--help"], dir.path())), 0);
    let bad_prob = les3(&["gen", "--mode", "uniform", "--sets", "10", "--universe", "10", "--prob", "1.5", "--out", "x"], dir.path());
    assert_eq!(code(&bad_prob), 1);
}

#[test]
fn build_is_reproducible_and_reports_groups() {
    let (dir, _) = corpus();
    let a = build(dir.path(), &["--method", "par-c", "--groups", "6"], "a.les3");
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert!(stdout(&a).contains("groups: 6"));
    assert!(stdout(&a).contains("index_bytes: "));
    build(dir.path(), &["--method", "par-c", "--groups", "6"], "b.les3");
    assert_eq!(std::fs::read(dir.path().join("a.les3")).unwrap(), std::fs::read(dir.path().join("b.les3")).unwrap());
    let auto = build(dir.path(), &["--method", "random", "--auto"], "c.les3");
    assert!(stdout(&auto).contains("groups: 3"), "{}", stdout(&auto));
}

#[test]
fn single_group_queries_scan_everything() {
    let (dir, _) = corpus();
    build(dir.path(), &["--method", "random", "--groups", "1"], "one.les3");
    let out = les3(&["query", "--index", "one.les3", "--data", "d.txt", "--knn", "3", "--sample", "4"], dir.path());
    assert_eq!(code(&out), 0);
    for line in stdout(&out).lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3].parse::<f64>().unwrap(), 600.0);
    }
}

#[test]
fn query_rows_and_aggregate() {
    let (dir, _) = corpus();
    build(dir.path(), &["--method", "l2p", "--groups", "8", "--htgm-levels", "0,3"], "h.les3");
    let out = les3(&["query", "--index", "h.les3", "--data", "d.txt", "--knn", "10", "--sample", "100"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "query,hits,frontier,candidates,pe,elapsed_us");
    assert_eq!(lines.len(), 102);
    assert!(lines[101].starts_with("mean,10.0,"));

    let range = les3(&["query", "--index", "h.les3", "--data", "d.txt", "--range", "0.7", "--sample", "20"], dir.path());
    for line in stdout(&range).lines().skip(1) {
        let frontier = line.split(',').nth(2).unwrap();
        if !frontier.is_empty() {
            assert!(frontier.parse::<f64>().unwrap() >= 0.7);
        }
    }

    let json = les3(
        &["query", "--index", "h.les3", "--data", "d.txt", "--knn", "2", "--sample", "3", "--format", "json"],
        dir.path(),
    );
    let doc: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
    assert_eq!(doc["aggregate"]["query"], "mean");
    for field in ["hits", "frontier", "candidates", "pe", "elapsed_us"] {
        assert!(doc["rows"][0].get(field).is_some(), "missing {field}");
    }
}

#[test]
fn query_file_may_hold_unseen_tokens() {
    let (dir, _) = corpus();
    build(dir.path(), &["--method", "random", "--groups", "4"], "r.les3");
    std::fs::write(dir.path().join("q.txt"), "1 2 3\nnever-seen 5\n").unwrap();
    let out = les3(&["query", "--index", "r.les3", "--data", "d.txt", "--knn", "1", "--queries", "q.txt"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 4);
}

#[test]
fn bench_oracle_passes_and_empty_methods_is_usage() {
    let (dir, _) = corpus();
    let out = les3(&["bench", "--data", "d.txt", "--methods", "random,par-d", "--groups", "4", "--oracle", "--sample", "30"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "method,groups,partition_ms,gpo,pe,mean_query_us,verification_count,mismatches");
    assert_eq!(lines.filter(|l| l.ends_with(",0")).count(), 2);
    assert_eq!(code(&les3(&["bench", "--data", "d.txt", "--methods"], dir.path())), 1);
    assert_eq!(code(&les3(&["bench", "--data", "d.txt", "--methods", "kmeans"], dir.path())), 1);
}

#[test]
fn insert_closed_rejects_unknown_tokens_and_open_extends() {
    let (dir, _) = corpus();
    build(dir.path(), &["--method", "random", "--groups", "4"], "r.les3");
    std::fs::write(dir.path().join("add.txt"), "1 2\n3 fresh-token\n").unwrap();
    let closed = les3(&["insert", "--index", "r.les3", "--data", "d.txt", "--add", "add.txt", "--out", "r2.les3"], dir.path());
    assert_eq!(code(&closed), 2);
    assert!(String::from_utf8_lossy(&closed.stderr).contains("line 2"));

    let open = les3(
        &["insert", "--index", "r.les3", "--data", "d.txt", "--add", "add.txt", "--mode", "open", "--out", "r2.les3", "--data-out", "d2.txt"],
        dir.path(),
    );
    assert_eq!(code(&open), 0, "{}", String::from_utf8_lossy(&open.stderr));
    assert!(stdout(&open).contains("sets: 602"));
    let q = les3(&["query", "--index", "r2.les3", "--data", "d2.txt", "--knn", "1", "--sample", "5"], dir.path());
    assert_eq!(code(&q), 0, "{}", String::from_utf8_lossy(&q.stderr));
    let stale = les3(&["query", "--index", "r2.les3", "--data", "d.txt", "--knn", "1", "--sample", "5"], dir.path());
    assert_eq!(code(&stale), 2);
}

#[test]
fn corrupt_index_is_a_data_error() {
    let (dir, _) = corpus();
    build(dir.path(), &["--method", "random", "--groups", "4"], "r.les3");
    let path = dir.path().join("r.les3");
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&path, bytes).unwrap();
    let out = les3(&["query", "--index", "r.les3", "--data", "d.txt", "--knn", "1", "--sample", "1"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn updates_reports_exact_rows() {
    let dir = TempDir::new().unwrap();
    let out = les3(
        &[
            "updates", "--mode", "power-law", "--alpha", "2", "--sets", "300", "--universe", "300", "--method", "random",
            "--groups", "4", "--ratios", "0.5", "--universe-mode", "open", "--queries", "10", "--knn", "3",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("0.5,open,150,"), "{row}");
    assert!(row.ends_with(",0"));
}
