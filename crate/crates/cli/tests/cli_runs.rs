//! End-to-end runs of the `hlsim` binary on a small synthetic scenario:
//! artifact inventories, schema-parseable outputs, byte-level reproducibility,
//! override precedence, and exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hl_core::sim::{CompareSummary, EpisodeLog, PolicyCheckpoint, TrainingCurve};

/// Scenario small enough for full command runs in test time.
const TINY: &str = r#"
nodes = 3
samples_per_node = 24
classes = 4
goal_acc = 0.95
max_steps = 4
episodes = 2
experiments = 2
seed = 5
dataset = "synthetic"
synthetic_per_class = 24
synthetic_val_per_class = 6

[agent]
replay_min_fill = 2
dqn_batch = 4

[standalone]
patience = 2
max_epochs = 6
"#;

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hlsim"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// All files under `dir`, keyed by path relative to it.
fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Manifest with the fields that legitimately vary between runs (wall-clock
/// timestamp, output location) removed.
fn comparable_manifest(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&read(&dir.join("manifest.json"))).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("timestamp").unwrap();
    obj.remove("out_dir").unwrap();
    v
}

#[test]
fn help_and_usage_errors_use_the_documented_exit_codes() {
    let help = run(&["--help"], &[]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("train"));
    assert!(stdout(&help).contains("compare"));

    assert_eq!(code(&run(&[], &[])), 1, "missing subcommand is a usage error");
    assert_eq!(code(&run(&["train", "--bogus-flag"], &[])), 1);
    assert_eq!(code(&run(&["frobnicate"], &[])), 1);
    let bad_enum = run(&["baseline", "--method", "nope"], &[]);
    assert_eq!(code(&bad_enum), 1);
}

#[test]
fn train_writes_the_full_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let out_dir = tmp.path().join("out");
    let out = run(
        &["train", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("wrote"));

    for name in ["manifest.json", "distance.csv", "episodes.json", "episodes.csv", "rounds.csv", "policy.json"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["nodes"], 3);
    assert_eq!(manifest["config"]["seed"], 5);

    let logs: Vec<EpisodeLog> =
        serde_json::from_str(&read(&out_dir.join("episodes.json"))).unwrap();
    assert_eq!(logs.len(), 2);
    assert_eq!(logs[0].epsilon, 1.0);

    let policy: PolicyCheckpoint =
        serde_json::from_str(&read(&out_dir.join("policy.json"))).unwrap();
    assert_eq!(policy.nodes, 3);

    let rounds = read(&out_dir.join("rounds.csv"));
    assert!(rounds.starts_with("episode,step,node,next_node,val_acc,reward,distance\n"));
    let episodes = read(&out_dir.join("episodes.csv"));
    assert_eq!(episodes.lines().count(), 1 + logs.len());
}

#[test]
fn reruns_are_byte_identical_except_the_manifest_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let out = run(
            &["train", "--config", config.to_str().unwrap(), "--out", d.to_str().unwrap()],
            &[],
        );
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let (a, b) = (dir_files(&dirs[0]), dir_files(&dirs[1]));
    let names: Vec<&String> = a.keys().collect();
    assert_eq!(names, b.keys().collect::<Vec<_>>(), "same artifact sets");
    for (name, bytes) in &a {
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(bytes, &b[name], "{name} must be reproducible");
    }
    assert_eq!(comparable_manifest(&dirs[0]), comparable_manifest(&dirs[1]));
}

#[test]
fn the_seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let base = tmp.path().join("base");
    let seeded = tmp.path().join("seeded");
    let out = run(
        &["train", "--config", config.to_str().unwrap(), "--out", base.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 0);
    let out = run(
        &[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            seeded.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&seeded.join("manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["seed"], 42);
    assert_ne!(
        read(&base.join("episodes.json")),
        read(&seeded.join("episodes.json")),
        "a different seed must change the run"
    );
}

#[test]
fn apply_replays_a_trained_policy_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let train_dir = tmp.path().join("train");
    let out = run(
        &["train", "--config", config.to_str().unwrap(), "--out", train_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let checkpoint = train_dir.join("policy.json");

    let dirs = [tmp.path().join("apply-a"), tmp.path().join("apply-b")];
    for d in &dirs {
        let out = run(
            &[
                "apply",
                "--config",
                config.to_str().unwrap(),
                "--checkpoint",
                checkpoint.to_str().unwrap(),
                "--out",
                d.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let log: EpisodeLog = serde_json::from_str(&read(&dirs[0].join("episode.json"))).unwrap();
    assert_eq!(log.epsilon, 0.0, "application is greedy");
    assert_eq!(
        read(&dirs[0].join("episode.json")),
        read(&dirs[1].join("episode.json"))
    );
    assert!(dirs[0].join("rounds.csv").exists());
}

#[test]
fn apply_rejects_unusable_checkpoints_as_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);

    // Unreadable checkpoint file.
    let garbled = tmp.path().join("garbled.json");
    std::fs::write(&garbled, "{not json").unwrap();
    let out = run(
        &[
            "apply",
            "--config",
            config.to_str().unwrap(),
            "--checkpoint",
            garbled.to_str().unwrap(),
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cannot load checkpoint"), "{}", stderr(&out));

    // Structurally valid checkpoint trained for a different node count.
    let train_dir = tmp.path().join("train");
    let out = run(
        &["train", "--config", config.to_str().unwrap(), "--out", train_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 0);
    let four_nodes = write_config(&tmp.path().join("."), &TINY.replace("nodes = 3", "nodes = 4").replace("samples_per_node = 24", "samples_per_node = 20"));
    let out = run(
        &[
            "apply",
            "--config",
            four_nodes.to_str().unwrap(),
            "--checkpoint",
            train_dir.join("policy.json").to_str().unwrap(),
            "--out",
            tmp.path().join("y").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nodes"), "{}", stderr(&out));
}

#[test]
fn baselines_write_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);

    let random_dir = tmp.path().join("random");
    let out = run(
        &[
            "baseline",
            "--method",
            "random",
            "--config",
            config.to_str().unwrap(),
            "--out",
            random_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let logs: Vec<EpisodeLog> =
        serde_json::from_str(&read(&random_dir.join("episodes.json"))).unwrap();
    assert_eq!(logs.len(), 2, "one per configured episode");
    assert!(logs.iter().all(|l| l.epsilon == 1.0));
    assert!(random_dir.join("rounds.csv").exists());
    assert!(random_dir.join("distance.csv").exists());

    for method in ["standalone", "centralized"] {
        let dir = tmp.path().join(method);
        let out = run(
            &[
                "baseline",
                "--method",
                method,
                "--config",
                config.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code(&out), 0, "{method} stderr: {}", stderr(&out));
        let curve: TrainingCurve = serde_json::from_str(&read(&dir.join("curve.json"))).unwrap();
        assert_eq!(curve.method, method);
        assert!(!curve.records.is_empty());
        let csv = read(&dir.join("curve.csv"));
        assert!(csv.starts_with("epoch,val_acc,val_loss\n"));
        assert_eq!(csv.lines().count(), 1 + curve.records.len());
        let manifest: serde_json::Value =
            serde_json::from_str(&read(&dir.join("manifest.json"))).unwrap();
        assert_eq!(manifest["command"], format!("baseline-{method}"));
    }
}

#[test]
fn compare_writes_the_summary_and_per_experiment_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let dir = tmp.path().join("cmp");
    let out = run(
        &["compare", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let summary: CompareSummary =
        serde_json::from_str(&read(&dir.join("summary.json"))).unwrap();
    assert_eq!(summary.hl.best_rounds.len(), 2, "one entry per experiment");
    assert_eq!(summary.random.best_rounds.len(), 2);

    let csv = read(&dir.join("summary.csv"));
    assert!(csv.starts_with("method,metric,p25,p50,p75\n"));
    assert_eq!(csv.lines().count(), 5);

    for name in ["hl_00.json", "hl_01.json", "random_00.json", "random_01.json"] {
        let logs: Vec<EpisodeLog> =
            serde_json::from_str(&read(&dir.join("runs").join(name))).unwrap();
        assert!(!logs.is_empty(), "{name}");
    }
}

#[test]
fn embed_writes_one_row_per_node() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let dir = tmp.path().join("emb");
    let out = run(
        &[
            "embed",
            "--config",
            config.to_str().unwrap(),
            "--nodes",
            "3",
            "--out",
            dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("embedded 3 nodes"));
    let csv = read(&dir.join("embedding.csv"));
    assert!(csv.starts_with("node_id,main_class,x,y\n"));
    assert_eq!(csv.lines().count(), 4);

    // Overrides are validated.
    let out = run(
        &[
            "embed",
            "--config",
            config.to_str().unwrap(),
            "--nodes",
            "0",
            "--out",
            dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("invalid config after overrides"), "{}", stderr(&out));
}

#[test]
fn config_problems_are_data_errors_naming_the_cause() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let mut case = |text: &str, needles: &[&str]| {
        let config = write_config(tmp.path(), text);
        let out = run(
            &["train", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
            &[],
        );
        assert_eq!(code(&out), 2, "config {text:?}");
        let err = stderr(&out);
        for needle in needles {
            assert!(err.contains(needle), "expected {needle:?} in {err:?}");
        }
    };
    // Unknown key, named with its location.
    case("nodse = 3\n", &["nodse", "line 1"]);
    // Type mismatch.
    case("nodes = \"three\"\n", &["line 1"]);
    // Range violation.
    case("alpha = 1.5\n", &["alpha"]);
    // Inconsistent pairing.
    case("dataset = \"mnist\"\nclasses = 8\n", &["mnist"]);

    // Missing config file.
    let out = run(
        &["train", "--config", "/no/such/config.toml", "--out", out_dir.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cannot read config"), "{}", stderr(&out));
}

#[test]
fn the_data_dir_env_var_takes_precedence_over_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "dataset = \"mnist\"\ndata_dir = \"/missing-from-config\"\n",
    );
    let out_dir = tmp.path().join("out");

    // Both paths are absent: the error must name the one from the
    // environment, proving it won.
    let out = run(
        &["train", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        &[("HL_DATA_DIR", "/missing-from-env")],
    );
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("missing-from-env"), "{err}");
    assert!(!err.contains("missing-from-config"), "{err}");

    // An empty value is ignored and the config path is used.
    let out = run(
        &["train", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        &[("HL_DATA_DIR", "")],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing-from-config"), "{}", stderr(&out));
}

#[test]
fn nested_output_directories_are_created() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), TINY);
    let deep = tmp.path().join("a").join("b").join("c");
    let out = run(
        &[
            "baseline",
            "--method",
            "standalone",
            "--config",
            config.to_str().unwrap(),
            "--out",
            deep.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(deep.join("curve.json").exists());
}
