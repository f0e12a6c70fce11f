use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alphafund"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn alphafund")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_prints_stamped_tables() {
    let path = scenario("hwm_narrative.txt");
    let o = run(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# engine alphafund-"));
    for t in ["[input]", "[system]", "[accept]", "[fee-scheme]", "Fees Plough Back"] {
        assert!(text.contains(t), "missing {t}");
    }
}

#[test]
fn diff_agrees_on_the_narrative() {
    let path = scenario("hwm_narrative.txt");
    let o = run(&["diff", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("max relative deviation 0 (agree)"));
}

#[test]
fn diff_flags_a_fall_rise_path() {
    let path = scenario("fall_rise.txt");
    let o = run(&["diff", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("fall-rise-plough-back"), "{}", stdout(&o));
}

#[test]
fn halt_snapshot_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("slippage_halt.txt");
    let snap = dir.path().join("halt.snap");
    let next = dir.path().join("done.snap");
    let o = run(&["run", path.to_str().unwrap(), "--snapshot", snap.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("halted at event 2"));

    let again = run(&["resume", snap.to_str().unwrap(), path.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(2));

    let o = run(&[
        "resume",
        snap.to_str().unwrap(),
        path.to_str().unwrap(),
        "--tolerance",
        "0.1",
        "--snapshot",
        next.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let done = std::fs::read_to_string(&next).unwrap();
    assert!(done.contains("\nconsumed 3\n"));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "scenario v1\nseed a 10\nevent 1 nav 1e3\n").unwrap();
    let o = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let path = scenario("slippage_halt.txt");
    let snap = dir.path().join("s.snap");
    run(&["run", path.to_str().unwrap(), "--snapshot", snap.to_str().unwrap()]);
    let text = std::fs::read_to_string(&snap).unwrap();
    std::fs::write(&snap, text.replacen("consumed 1", "consumed 0", 1)).unwrap();
    let o = run(&["resume", snap.to_str().unwrap(), path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    std::fs::write(&snap, text.replacen("fundsnap v1", "fundsnap v9", 1)).unwrap();
    let o = run(&["resume", snap.to_str().unwrap(), path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn csv_and_rounding_flag() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("slippage_halt.txt");
    let csv = dir.path().join("csv");
    let o = run(&["run", path.to_str().unwrap(), "--rounding", "up", "--csv-dir", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let system = std::fs::read_to_string(csv.join("system.csv")).unwrap();
    assert!(system.starts_with("# engine alphafund-"));
    assert!(system.contains("halted:slippage-tolerance"));
}

#[test]
fn generated_scenarios_validate() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.txt");
    let o = run(&["generate", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0));
    std::fs::write(&file, &o.stdout).unwrap();
    assert_eq!(run(&["validate", file.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(run(&["diff", file.to_str().unwrap()]).status.code(), Some(0));
}
