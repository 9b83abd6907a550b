use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL_OCP: &str = r#"
[ocp]
horizon = "full"

[ocp.spec]
nodes_per_cycle = 10

[ocp.protocol]
k_cap = 1
"#;

fn run(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_fatigue-ocp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    out.status.code().expect("exit code")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .filter(|p| p.file_name().unwrap() != "timings.csv")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn assert_reproducible(command: &str, config: Option<&str>) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.toml");
    fs::write(&cfg_path, config.unwrap_or("")).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let code = run(&[
            command,
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{command}");
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb, "{command} output differs between runs");
}

#[test]
fn study_outputs_are_byte_identical_across_runs() {
    assert_reproducible("study1", None);
    assert_reproducible("study2", None);
}

#[test]
fn ocp_outputs_are_byte_identical_across_runs() {
    assert_reproducible("ocp", Some(SMALL_OCP));
}

#[test]
fn ocp_writes_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, SMALL_OCP).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(
        run(&[
            "ocp",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--plot"
        ]),
        0
    );
    for f in [
        "costs.csv",
        "torque_limits.csv",
        "joint_angles.csv",
        "controls.csv",
        "compartments.csv",
        "invariant.csv",
        "solves.csv",
        "timings.csv",
        "manifest.txt",
        "config.toml",
        "joint_angles.svg",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(out.join("joint_angles.csv")).unwrap();
    assert!(header.starts_with("node,t,cycle,q0,q1,qdot0,qdot1\n"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("repetitions"));
    assert!(manifest.contains("spec_hash"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    assert_eq!(run(&["study1", "--out", out]), 0);
    assert_eq!(run(&["study1", "--config", "/nonexistent/run.toml", "--out", out]), 3);
    assert_eq!(run(&["bogus", "--out", out]), 3);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[study1]\ntarget_load = \"high\"\n").unwrap();
    assert_eq!(run(&["study1", "--config", bad.to_str().unwrap(), "--out", out]), 3);

    let negative = tmp.path().join("negative.toml");
    fs::write(&negative, "[ocp.spec]\nnodes_per_cycle = 2\n").unwrap();
    assert_eq!(run(&["ocp", "--config", negative.to_str().unwrap(), "--out", out]), 3);

    // the arm cannot lift the dumbbell with 1 N·m actuators
    let weak = tmp.path().join("weak.toml");
    fs::write(
        &weak,
        format!("{SMALL_OCP}\n[ocp.spec.limits]\ntau_max = [1.0, 1.0]\ntau_min = [-1.0, -1.0]\n\n[ocp.protocol.solver]\nmax_iter = 40\n"),
    )
    .unwrap();
    assert_eq!(run(&["ocp", "--config", weak.to_str().unwrap(), "--out", out]), 2);
}
