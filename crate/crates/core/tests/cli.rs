use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn timolab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timolab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn timolab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_names_every_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = timolab(&["--list"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["conservative", "linear", "example1_p2", "example1_p3", "example2", "bump_omega", "equal_speeds_chi0"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from:\n{text}");
    }
}

#[test]
fn conservative_run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = timolab(&["--scenario", "conservative", "--T", "5", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let res = dir.path().join("res");
    let energy = fs::read_to_string(res.join("energy.csv")).unwrap();
    assert_eq!(energy.lines().next(), Some("t,E,Estar,Ecal,D,theta_mean"));
    // 5 / 5e-3 = 1000 steps sampled every 20, plus t = 0.
    assert_eq!(energy.lines().count(), 1 + 51);
    let env = fs::read_to_string(res.join("envelopes.csv")).unwrap();
    assert_eq!(env.lines().next(), Some("t,envelope_K,envelope_psi"));
    let report = fs::read_to_string(res.join("report.txt")).unwrap();
    assert!(report.contains("PASS  energy conserved"), "{report}");
    assert!(report.contains("overall: PASS"));
}

#[test]
fn example2_exits_with_verdict_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = timolab(&["--scenario", "example2", "--T", "5", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let report = fs::read_to_string(dir.path().join("res/report.txt")).unwrap();
    assert!(report.contains("FAIL  decay rate"), "{report}");
    assert!(report.contains("overall: FAIL"));
}

#[test]
fn errors_exit_one_and_still_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "scenario = conservative\ninit = file:absent.csv\n").unwrap();
    let o = timolab(&["--config", "run.cfg", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let report = fs::read_to_string(dir.path().join("res/report.txt")).unwrap();
    assert!(report.contains("error:") && report.contains("absent.csv"), "{report}");
}

#[test]
fn bad_config_is_rejected_with_the_key_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "rho1 = -1\n").unwrap();
    let o = timolab(&["--config", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho1"));
}

#[test]
fn overrides_are_applied_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = timolab(&["--scenario", "linear", "--N", "32", "--dt", "0.01", "--T", "1", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("res/report.txt")).unwrap();
    assert!(report.contains("N = 32, dt = 0.01, T = 1,"), "{report}");
    let o = timolab(&["--scenario", "linear", "--dt=-1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = timolab(&["--scenario", "example1_p3", "--N", "32", "--T", "3", "--out", out], dir.path());
        assert!(o.status.code().is_some_and(|c| c != 1));
    }
    for file in ["energy.csv", "envelopes.csv", "report.txt"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between identical runs");
    }
}

#[test]
fn snapshot_reloads_as_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("first.cfg"), "scenario = linear\nN = 32\ndt = 0.01\nT = 1\nsnapshots = 1\n").unwrap();
    let o = timolab(&["--config", "first.cfg", "--out", "one"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let snap = fs::read_dir(dir.path().join("one"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .find(|n| n.starts_with("snapshot_"))
        .expect("snapshot written");
    fs::write(
        dir.path().join("second.cfg"),
        format!("scenario = linear\nN = 32\ndt = 0.01\nT = 1\ninit = file:one/{snap}\n"),
    )
    .unwrap();
    let o = timolab(&["--config", "second.cfg", "--out", "two"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read_to_string(dir.path().join("one/energy.csv")).unwrap();
    let second = fs::read_to_string(dir.path().join("two/energy.csv")).unwrap();
    let e_end: f64 = first.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let e_start: f64 = second.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((e_end - e_start).abs() <= 1e-14 * e_end.max(1.0), "{e_end} vs {e_start}");
}

#[test]
fn sweep_runs_each_config_into_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfgs = dir.path().join("cfgs");
    fs::create_dir(&cfgs).unwrap();
    fs::write(cfgs.join("cons.cfg"), "scenario = conservative\nT = 1\n").unwrap();
    fs::write(cfgs.join("lin.cfg"), "scenario = linear\nN = 32\ndt = 0.01\nT = 1\n").unwrap();
    fs::write(cfgs.join("ex2.cfg"), "scenario = example2\nN = 32\nT = 1\n").unwrap();
    let o = timolab(&["--sweep", "cfgs", "--out", "swept"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    for stem in ["cons", "lin", "ex2"] {
        assert!(dir.path().join("swept").join(stem).join("report.txt").exists(), "{stem}");
    }
    let text = stdout(&o);
    assert!(text.contains("FAIL  cfgs/ex2.cfg"), "{text}");
    assert!(text.contains("PASS  cfgs/lin.cfg"), "{text}");
}
