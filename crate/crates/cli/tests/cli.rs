use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_straggler-lab"));
    cmd.env_remove("STRAGGLER_LAB_THREADS")
        .env("RUST_LOG", "error");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SIX_GROUP: [&str; 6] = [
    "allocate",
    "--sizes",
    "180,170,160,140,130,120",
    "--rates",
    "1.25,1.35,1.45,1.55,1.65,1.75",
    "--k",
];

#[test]
fn allocate_six_groups_json() {
    let mut args = SIX_GROUP.to_vec();
    args.extend(["400", "--json"]);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let alloc: Vec<i64> = doc["allocation"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_i64().unwrap())
        .collect();
    assert_eq!(alloc.iter().sum::<i64>(), 400);
    for (k, e) in alloc.iter().zip([71, 71, 70, 65, 63, 60]) {
        assert!((k - e).abs() <= 1);
    }
    assert_eq!(doc["xi"].as_array().unwrap().len(), 6);
}

#[test]
fn allocate_homogeneous_splits_evenly() {
    let out = run(&[
        "allocate", "--sizes", "50,50,50", "--rates", "2,2,2", "--k", "60", "--json",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["allocation"], serde_json::json!([20, 20, 20]));
}

#[test]
fn allocate_table_output_lists_every_group() {
    let mut args = SIX_GROUP.to_vec();
    args.push("400");
    let text = stdout(&run(&args));
    assert!(text.contains("k_max = 71"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn allocate_validation_exits_2_naming_the_field() {
    let out = run(&[
        "allocate", "--sizes", "100,100", "--rates", "1,1", "--k", "500",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--k"), "{}", stderr(&out));

    let out = run(&[
        "allocate", "--sizes", "100,100", "--rates", "1,-1", "--k", "50",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--rates"));

    let out = run(&["allocate", "--sizes", "100", "--rates", "1,2", "--k", "50"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--sizes/--rates"));
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn fig3_writes_reproducible_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&[
            "fig3",
            "--trials",
            "200",
            "--seed",
            "4",
            "--n-grid",
            "400,800",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let text = read(a.path(), "fig3.csv");
    assert_eq!(text, read(b.path(), "fig3.csv"));
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,mean_mds,mean_group_opt,mean_group_even,se_mds,se_group_opt,se_group_even"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn fig4_columns_and_floor() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "fig4",
        "--trials",
        "100",
        "--l-grid",
        "2,4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read(dir.path(), "fig4.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "L,scenario1,scenario2,floor,trend");
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] >= v[3] && v[2] >= v[3]);
    }
}

#[test]
fn fig5_writes_both_panels() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "fig5",
        "--trials",
        "50",
        "--alpha-low",
        "0,1e-9",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let low = read(dir.path(), "fig5_low.csv");
    assert_eq!(
        low.lines().next().unwrap(),
        "alpha,exec_mds,exec_product,exec_group"
    );
    assert_eq!(low.lines().count(), 3);
    assert_eq!(read(dir.path(), "fig5_high.csv").lines().count(), 22);
}

#[test]
fn bad_overrides_exit_2_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_str().unwrap();
    for args in [
        vec!["fig3", "--trials", "0", "--out", path],
        vec!["fig3", "--n-grid", "402", "--out", path],
        vec!["fig4", "--l-grid", "0", "--out", path],
        vec!["fig5", "--alpha-high", "-1", "--out", path],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn thread_variable_is_validated() {
    let out = bin()
        .env("STRAGGLER_LAB_THREADS", "many")
        .args(["allocate", "--sizes", "4", "--rates", "1", "--k", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("STRAGGLER_LAB_THREADS"));
    let out = bin()
        .env("STRAGGLER_LAB_THREADS", "1")
        .args(["allocate", "--sizes", "4", "--rates", "1", "--k", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn simulate_runs_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(
        &config,
        r#"
schema_version = 1
k = 100
trials = 300
master_seed = 2
alpha_grid = [0.0, 1e-8]

[system]
sizes = [300, 100]
rates = [1.0, 2.0]

[[codes]]
type = "mds"

[[codes]]
type = "group"
allocation = "even"
"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        config.to_str().unwrap(),
        "--json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["trials"], 300);
    assert_eq!(doc["dominance_violations"], 0);
    assert!(dir.path().join("summary.json").exists());

    fs::write(&config, "schema_version = 9\nk = 1\ntrials = 1\ncodes = [{ type = \"mds\" }]\n[system]\nsizes=[2]\nrates=[1.0]\n").unwrap();
    let out = run(&["simulate", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("schema_version"));
}

#[test]
fn demo_decodes_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let out = run(&[
        "demo",
        "--time-scale",
        "10",
        "--json",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(doc["relative_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(doc["used_workers"], 400);
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 900);
}

#[test]
fn demo_reports_a_dead_group() {
    let out = run(&["demo", "--time-scale", "0", "--kill-group", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("group 2"));
}
