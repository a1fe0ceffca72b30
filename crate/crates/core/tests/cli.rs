use std::fs;
use std::process::{Command, Output};

fn sngp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sngp")).args(args).env_remove("SNGP_TABLE_DIR").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn sweep_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = sngp(&[
            "sweep",
            "--dataset",
            "circulant:48:2",
            "--f-grid",
            "0.1,0.5",
            "--depth-grid",
            "1,3",
            "--p-train",
            "30",
            "--trials",
            "2",
            "--seed",
            "4",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("f,L,trial,accuracy,mse,ed\n"));
    assert_eq!(text.lines().count(), 1 + 8 + 8);
}

#[test]
fn theory_writes_grid_to_stdout() {
    let out = sngp(&["theory", "--dataset", "circulant:60", "--f-grid", "0.3", "--depth-grid", "2", "--p-train", "40"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("f,L,mse_experiment,e_g_theory"));
    let cells: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(&cells[..2], &[0.3, 2.0]);
    assert!(cells[2] >= 0.0 && cells[3] >= 0.0);
}

#[test]
fn verify_exit_codes() {
    let base = ["verify", "--f-grid", "0.5", "--theta-grid", "0.25", "--width", "20000", "--trials", "16"];
    let ok = sngp(&base);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let mut bad = base.to_vec();
    bad.extend(["--corrupt", "1.1"]);
    let out = sngp(&bad);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("false"));
}

#[test]
fn table_build_inspect_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.sngp");
    let p = path.to_str().unwrap();
    let out = sngp(&["table", "build", "--f", "0.1", "--path", p]);
    assert_eq!(code(&out), 0);
    let out = sngp(&["table", "inspect", "--path", p]);
    assert_eq!(code(&out), 0);
    let report = String::from_utf8(out.stdout).unwrap();
    let err: f64 = report.lines().find_map(|l| l.strip_prefix("max_error")).unwrap().trim().parse().unwrap();
    assert!(err <= 1e-6, "{report}");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..20]).unwrap();
    let out = sngp(&["table", "inspect", "--path", p]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
}

#[test]
fn table_dir_from_environment_is_populated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sngp"))
        .args(["sweep", "--dataset", "circulant:16", "--f-grid", "0.2", "--depth-grid", "1", "--p-train", "8"])
        .env("SNGP_TABLE_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let names: Vec<String> =
        fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names.len(), 1);
    assert!(names[0].ends_with(".sngp"));
}

#[test]
fn usage_and_io_errors() {
    assert_eq!(code(&sngp(&["frobnicate"])), 1);
    assert_eq!(code(&sngp(&["sweep", "--f-grid", "abc"])), 1);
    assert_eq!(code(&sngp(&["sweep", "--dataset", "circulant:16", "--f-grid", "0.9", "--p-train", "4"])), 1);
    assert_eq!(code(&sngp(&["--help"])), 0);
    let out = sngp(&["sweep", "--dataset", "idx:/definitely/missing:/x", "--p-train", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/missing"));
}
