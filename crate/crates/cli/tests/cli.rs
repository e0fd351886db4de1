use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use subdiff::datasets::barabasi_albert;
use subdiff::graph::{read_edge_list, read_edge_set, write_edge_list};

fn subdiff(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subdiff"))
        .args(args)
        .env("SUBDIFF_OUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], root: &Path) -> String {
    let out = subdiff(args, root);
    assert!(
        out.status.success(),
        "subdiff {args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ba_input(dir: &Path) -> PathBuf {
    let path = dir.join("g.edges");
    write_edge_list(&path, &barabasi_albert(30, 2, 5).unwrap()).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(subdiff(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(subdiff(&["--version"], tmp.path()).status.code(), Some(0));
    assert_eq!(subdiff(&["edit", "--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(subdiff(&[], tmp.path()).status.code(), Some(1));
    assert_eq!(subdiff(&["frobnicate"], tmp.path()).status.code(), Some(1));
    let out = subdiff(
        &["corrupt", "--input", "g.edges", "--mode", "drop", "--frac", "0.1"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown corruption mode"));
}

#[test]
fn failures_exit_two_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.edges");
    let out = subdiff(&["stats", "--input", s(&missing)], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.edges"));

    let bad = tmp.path().join("bad.edges");
    std::fs::write(&bad, "0 1\n1 -2\n").unwrap();
    let out = subdiff(&["stats", "--input", s(&bad)], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative node id"));
}

#[test]
fn corrupt_writes_consistent_edge_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let input = ba_input(tmp.path());
    let out = tmp.path().join("run");
    ok(
        &["corrupt", "--input", s(&input), "--mode", "remove", "--frac", "0.1", "--seed", "7", "--out", s(&out)],
        tmp.path(),
    );
    let target = read_edge_list(out.join("target.edges")).unwrap();
    let observed = read_edge_list(out.join("observed.edges")).unwrap();
    let missing = read_edge_set(out.join("missing.edges")).unwrap();
    let added = read_edge_set(out.join("added.edges")).unwrap();
    assert_eq!(missing.len(), (0.1 * target.edge_count() as f64).floor() as usize);
    assert!(added.is_empty());
    assert_eq!(observed.edge_count() + missing.len(), target.edge_count());
    assert!(missing.iter().all(|e| target.has_edge(e.0, e.1) && !observed.has_edge(e.0, e.1)));
    assert_eq!(observed.components().1, 1);
}

#[test]
fn out_root_env_sets_default_location() {
    let tmp = tempfile::tempdir().unwrap();
    let input = ba_input(tmp.path());
    ok(&["corrupt", "--input", s(&input), "--mode", "add", "--frac", "0.1"], tmp.path());
    assert!(tmp.path().join("corrupt").join("added.edges").exists());
}

#[test]
fn stats_prints_json() {
    let tmp = tempfile::tempdir().unwrap();
    let input = ba_input(tmp.path());
    let stdout = ok(&["stats", "--input", s(&input)], tmp.path());
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["triangle_count"].as_u64().is_some());
    assert!(v["char_path_length"].as_f64().unwrap() >= 1.0);
}

/// corrupt → sample → train → edit → eval → stitch, all through the binary.
#[test]
fn stage_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let input = ba_input(root);
    let run = root.join("run");
    ok(
        &["corrupt", "--input", s(&input), "--mode", "remove", "--frac", "0.1", "--seed", "7", "--out", s(&run)],
        root,
    );
    let samples = run.join("samples");
    ok(
        &[
            "sample",
            "--input",
            s(&run.join("observed.edges")),
            "--nmax",
            "12",
            "--out",
            s(&samples),
        ],
        root,
    );
    let manifest = json(&samples.join("manifest.json"));
    let entries = manifest["subgraphs"].as_array().unwrap();
    assert_eq!(entries.len(), 30);
    assert!(entries.iter().all(|e| e["nodes"].as_u64().unwrap() <= 12));

    let ckpt = run.join("model.json");
    ok(
        &[
            "train",
            "--samples",
            s(&samples),
            "--steps",
            "3",
            "--t-max",
            "6",
            "--layers",
            "1",
            "--hidden",
            "8",
            "--out",
            s(&ckpt),
        ],
        root,
    );
    assert!(ckpt.exists());
    let losses = std::fs::read_to_string(run.join("model.losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 4);

    let first = entries[0]["edges"].as_str().unwrap();
    let edits = run.join("edits");
    ok(
        &[
            "edit",
            "--task",
            "expand",
            "--subgraph",
            s(&samples.join(first)),
            "--model",
            s(&ckpt),
            "--rounds",
            "3",
            "--out",
            s(&edits),
        ],
        root,
    );
    let sub = read_edge_list(samples.join(first)).unwrap();
    for r in 0..3 {
        let g = read_edge_list(edits.join(format!("sample_{r:02}.edges"))).unwrap();
        assert!(sub.edges().all(|e| g.has_edge(e.0, e.1)));
    }

    // whole-graph samples for eval: the observed graph itself, three times
    let whole = run.join("whole");
    std::fs::create_dir_all(&whole).unwrap();
    for r in 0..3 {
        std::fs::copy(run.join("observed.edges"), whole.join(format!("sample_{r:02}.edges"))).unwrap();
    }
    let report = run.join("eval.json");
    ok(
        &[
            "eval",
            "--samples",
            s(&whole),
            "--observed",
            s(&run.join("observed.edges")),
            "--target",
            s(&run.join("target.edges")),
            "--edit-set",
            s(&run.join("missing.edges")),
            "--out",
            s(&report),
        ],
        root,
    );
    let v = json(&report);
    assert_eq!(v["task"], "expand");
    assert_eq!(v["rounds"], 3);
    assert_eq!(v["consensus"], 0.0);
    assert_eq!(v["edge_overlap"], 1.0);
    assert_eq!(v["edit_set"], s(&run.join("missing.edges")));

    let gen = run.join("gen.edges");
    ok(&["stitch", "--model", s(&ckpt), "--out", s(&gen)], root);
    let g = read_edge_list(&gen).unwrap();
    assert_eq!(g.n(), 30);
    let stats = json(&run.join("gen.stats.json"));
    assert_eq!(stats["nodes"], 30);
}

#[test]
fn pipeline_and_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = root.join("toy.json");
    std::fs::write(
        &config,
        r#"{
  "dataset": {"barabasi_albert": {"n": 24, "m": 2, "seed": 3}},
  "corruption": {"mode": "add", "frac": 0.1, "seed": 1},
  "sampling": {"n_max": 10},
  "diffusion": {"steps": 2, "t_max": 5, "layers": 1, "hidden": 6, "n_max": 10},
  "edit": {"rounds": 2, "max_regions": 2}
}
"#,
    )
    .unwrap();
    let stdout = ok(&["pipeline", "--config", s(&config)], root);
    assert!(stdout.contains("report.json"));
    let run = root.join("toy");
    let report = json(&run.join("report.json"));
    assert_eq!(report["edit"]["task"], "denoise");

    let plots = root.join("plots");
    ok(&["plot-data", "--runs", s(root), "--out", s(&plots)], root);
    let csv = std::fs::read_to_string(plots.join("sparsity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run,value"));
    assert!(lines.next().unwrap().starts_with("toy,"));
}

#[test]
fn pipeline_rejects_unknown_config_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.json");
    std::fs::write(&config, r#"{"dataset": {"barabasi_albert": {"n": 10, "m": 2, "seed": 0}}, "epochs": 3}"#).unwrap();
    let out = subdiff(&["pipeline", "--config", s(&config)], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}
