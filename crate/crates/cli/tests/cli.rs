use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn gridswitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridswitch"))
        .args(args)
        .env("GRIDSWITCH_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn train(case: &str, out: &Path, extra: &[&str]) -> Output {
    let case = fixture(case);
    let mut args = vec![
        "train",
        "--case",
        case.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "ddsac.hidden=[16]",
        "--set",
        "ddsac.batch_size=4",
    ];
    args.extend_from_slice(extra);
    gridswitch(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn two_bus_training_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(
        "case2.m",
        dir.path(),
        &["--algo", "ddsac", "--episodes", "3", "--seeds", "1"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("ddsac_seed1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "episode,cumulative_reward,generator_cost,voltage_violation,power_loss,line_overload,open_lines,penalties"
    );
    assert_eq!(lines.len(), 4);
    assert!(dir.path().join("ddsac_seed1.ckpt").exists());
}

#[test]
fn repeated_training_is_byte_identical() {
    for algo in ["ddsac", "ddqn", "ppo"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let extra = [
            "--algo",
            algo,
            "--episodes",
            "6",
            "--seeds",
            "5",
            "--set",
            "env.load_noise=0.05",
            "--set",
            "ddqn.hidden=[16]",
            "--set",
            "ppo.hidden=[16]",
            "--set",
            "ppo.rollout_length=16",
        ];
        assert!(train("case14.m", a.path(), &extra).status.success());
        assert!(train("case14.m", b.path(), &extra).status.success());
        let name = format!("{algo}_seed5.csv");
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{algo}"
        );
    }
}

#[test]
fn multi_seed_run_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(
        "case2.m",
        dir.path(),
        &["--episodes", "4", "--seeds", "1,2,3"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let agg = dir.path().join("aggregate_ddsac_cumulative_reward.csv");
    let first = std::fs::read_to_string(&agg).unwrap();
    assert_eq!(first.lines().next().unwrap(), "episode,mean,stderr,n_seeds");
    assert_eq!(first.lines().count(), 5);
    std::fs::remove_file(&agg).unwrap();
    let out = gridswitch(&["aggregate", "--runs", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&agg).unwrap(), first);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"algo": "ddqn", "episodes": 2, "env.horizon": 3, "ddqn.hidden": [8]}"#,
    )
    .unwrap();
    let out = train(
        "case2.m",
        dir.path(),
        &[
            "--config",
            config.to_str().unwrap(),
            "--episodes",
            "3",
            "--seeds",
            "4",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("ddqn_seed4.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn evaluation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(
        train("case2.m", dir.path(), &["--episodes", "1", "--seeds", "1"])
            .status
            .success()
    );
    let ckpt = dir.path().join("ddsac_seed1.ckpt");
    let case = fixture("case2.m");
    let args = [
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--case",
        case.to_str().unwrap(),
        "--episodes",
        "4",
    ];
    let a = gridswitch(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(report["mean_reward"].is_number());
    assert_eq!(report["episodes"], 4);
    assert_eq!(a.stdout, gridswitch(&args).stdout);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let dup = train("case2.m", dir.path(), &["--seeds", "1,1"]);
    assert_eq!(dup.status.code(), Some(2), "{}", stderr(&dup));

    let bad_key = train("case2.m", dir.path(), &["--set", "env.nonsense=1"]);
    assert_eq!(bad_key.status.code(), Some(2));

    let missing = gridswitch(&["train", "--case", "/nonexistent/case.m", "--episodes", "1"]);
    assert_eq!(missing.status.code(), Some(3), "{}", stderr(&missing));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let io = train(
        "case2.m",
        &blocker.join("sub"),
        &["--episodes", "1", "--seeds", "1"],
    );
    assert_eq!(io.status.code(), Some(4), "{}", stderr(&io));

    let trained = train(
        "case118.m",
        dir.path(),
        &["--episodes", "1", "--seeds", "1"],
    );
    assert!(trained.status.success(), "{}", stderr(&trained));
    let ckpt = dir.path().join("ddsac_seed1.ckpt");
    let case14 = fixture("case14.m");
    let mismatch = gridswitch(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--case",
        case14.to_str().unwrap(),
    ]);
    assert_eq!(mismatch.status.code(), Some(5), "{}", stderr(&mismatch));

    let usage = gridswitch(&["train", "--algo", "a3c"]);
    assert_eq!(usage.status.code(), Some(2));
}
