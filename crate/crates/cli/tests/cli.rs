use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn eoe(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eoe"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn linear_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/linear-planted.toml")
}

#[test]
fn shipped_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            eoe_core::harness::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn compare_writes_report_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = eoe(&["compare", "--replications", "50", "--out", out.to_str().unwrap()], Some(&linear_config()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["replications"], 50);
    assert_eq!(report["ordering_consistent"], true);
    let samples = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 4 * 50);
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "schema_version = 1\nreplications = 10\n");
    let o = eoe(&["compare"], Some(&cfg));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["dataset", "model", "clustering_1", "clustering_2"] {
        assert!(err.contains(key), "{err}");
    }
}

#[test]
fn missing_clustering_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(linear_config())
        .unwrap()
        .replace("kind = \"random\"\nk = 20", "kind = \"file\"\npath = \"/no/such/file.tsv\"");
    let cfg = write_config(dir.path(), &body);
    let o = eoe(&["partition"], Some(&cfg));
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_self_check_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = "schema_version = 1\nreplications = 20\n\
        [dataset]\nkind = \"synthetic\"\n[dataset.synthetic]\nn_bidders = 60\nn_keyphrases = 120\nn_days = 3\ncommunities = 4\n\
        [model]\nkind = \"auction\"\nbite_band = [0.95, 1.0]\n\
        [clustering_1]\nkind = \"rldg\"\nk = 4\n[clustering_2]\nkind = \"random\"\nk = 4\n";
    let cfg = write_config(dir.path(), body);
    let o = eoe(&["compare"], Some(&cfg));
    assert!(o.status.success());
    let o = eoe(&["compare", "--check"], Some(&cfg));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside the configured band"));
}

#[test]
fn runtime_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.csv");
    std::fs::write(&params, "unit,alpha,beta,gamma\n0,1,not-a-number,0\n").unwrap();
    let body = std::fs::read_to_string(linear_config())
        .unwrap()
        .replace("noise_sd = 0.5", &format!("noise_sd = 0.5\nparams_path = {params:?}"));
    let cfg = write_config(dir.path(), &body);
    let o = eoe(&["simulate", "--replications", "5"], Some(&cfg));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn partition_then_reuse_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = eoe(&["partition", "--out", dir.path().to_str().unwrap()], Some(&linear_config()));
    assert!(o.status.success());
    let body = std::fs::read_to_string(linear_config()).unwrap();
    let (head, _) = body.split_once("[clustering_1]").unwrap();
    let reuse = format!(
        "{head}[clustering_1]\nkind = \"file\"\npath = {:?}\n[clustering_2]\nkind = \"file\"\npath = {:?}\n",
        dir.path().join("clustering_1.tsv"),
        dir.path().join("clustering_2.tsv")
    );
    let cfg = write_config(dir.path(), &reuse);
    let o = eoe(&["simulate", "--replications", "20"], Some(&cfg));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["clusterings"][0]["n_clusters"], 20);
}

#[test]
fn gen_data_round_trips_through_file_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let body = "schema_version = 1\n[dataset]\nkind = \"synthetic\"\n[dataset.synthetic]\nn_bidders = 30\nn_keyphrases = 60\nn_days = 2\n\
        [model]\nkind = \"auction\"\n[clustering_1]\nkind = \"random\"\nk = 3\n[clustering_2]\nkind = \"random\"\nk = 5\n";
    let cfg = write_config(dir.path(), body);
    let o = eoe(&["gen-data", "--seed", "4", "--out", dir.path().to_str().unwrap()], Some(&cfg));
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let bids = dir.path().join("bids.tsv");
    let file_cfg = body.replace(
        "kind = \"synthetic\"\n[dataset.synthetic]\nn_bidders = 30\nn_keyphrases = 60\nn_days = 2\n",
        &format!("kind = \"file\"\npath = {bids:?}\n"),
    );
    let cfg = write_config(dir.path(), &file_cfg);
    let o = eoe(&["gen-data"], Some(&cfg));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reloaded: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary, reloaded);
}

#[test]
fn figure2_csv_has_baseline_rows() {
    let o = eoe(&["figure2", "--format", "csv"], Some(&linear_config()));
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,method,pass,cut_ratio"));
    assert_eq!(text.matches(",random,0,").count(), 2);
}
