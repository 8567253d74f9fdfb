use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hutbeam"))
}

#[test]
fn run_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--frames", "3", "--seed", "4", "--solver", "zfbf", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("frame,G,Ptot,status,iters,sinr_1,u_1,q_1"));
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.conf");
    fs::write(&cfg, "# two links\nn_links = 2\nn_antennas = 2\nframes = 2\nsolver = zfbf\n").unwrap();
    let out = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 5 + 2 * 3);
}

#[test]
fn bad_config_exits_nonzero_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "v = 0.001\nframes = lots\n").unwrap();
    let out = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn validate_passes() {
    let out = bin().arg("validate").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

#[test]
fn converge_reports_each_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(&cfg, "instances = 3\n").unwrap();
    let out = bin().arg("converge").arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);
}
