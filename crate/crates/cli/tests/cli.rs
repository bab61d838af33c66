use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gerl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gerl")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_run_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    let out = gerl(&["gen", "--H", "2", "--seed", "4", "--out", path(&env)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(&env).unwrap();
    gerl(&["gen", "--H", "2", "--seed", "4", "--out", path(&env)]);
    assert_eq!(fs::read(&env).unwrap(), first);

    let runs = [dir.path().join("a"), dir.path().join("b")];
    for r in &runs {
        let out = gerl(&[
            "run", "--env", path(&env), "--variant", "mb", "--episodes", "12", "--eval-every", "4", "--seeds", "0..1",
            "--out", path(r),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("final exploitability"));
    }
    for name in ["seed_0.csv", "seed_1.csv", "summary.json"] {
        assert_eq!(fs::read(runs[0].join(name)).unwrap(), fs::read(runs[1].join(name)).unwrap(), "{name}");
    }

    let out = gerl(&["eval", "--env", path(&env), "--policy", path(&runs[0].join("policy_seed_0.json"))]);
    assert!(out.status.success());
    let x: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    let summary = fs::read_to_string(runs[0].join("summary.json")).unwrap();
    assert!(x >= 0.0 && summary.contains(&format!("{x:.6}")[..6]));
}

#[test]
fn manifest_keys_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.toml");
    let out_dir = dir.path().join("out");
    fs::write(&manifest, format!("variant = \"mf\"\nepisodes = 50\nhorizon = 2\nseeds = [3]\nout = {:?}\n", path(&out_dir)))
        .unwrap();
    let out = gerl(&["run", "--manifest", path(&manifest), "--episodes", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("seed_3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3 + 3);
}

#[test]
fn exit_codes() {
    assert_eq!(gerl(&["--help"]).status.code(), Some(0));
    assert_eq!(gerl(&["run", "--help"]).status.code(), Some(0));
    assert_eq!(gerl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gerl(&["run", "--episodes", "many"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = gerl(&["eval", "--env", path(&missing), "--policy", path(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = gerl(&["run", "--concept", "ne", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}
