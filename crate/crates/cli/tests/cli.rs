use std::path::Path;
use std::process::{Command, Output};

fn difnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_difnet"))
        .args(args)
        .current_dir(dir)
        .env("DIFNET_DATA_DIR", dir.join("no-data-here"))
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gradcheck_passes_and_reports_worst_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = difnet(dir.path(), &["gradcheck"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    let worst: f64 = last.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(worst < 1e-5, "{last}");
    assert!(text.contains("gdu_full") && text.contains("gcn_depth3"));
}

#[test]
fn zero_epochs_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = difnet(dir.path(), &["train", "--dataset", "toy", "--epochs", "0", "--out", "m.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv.trim_end(), "epoch,train_loss,train_acc,val_acc,test_acc");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["train", "--bogus"][..],
        &["train", "--dataset", "reddit"],
        &["train", "--dataset", "toy", "--dropout", "1.5"],
        &["train", "--dataset", "toy", "--model", "gcn", "--depth", "1"],
        &["sweep", "--dataset", "toy", "--depths", "2,x"],
        &["frobnicate"],
    ] {
        let out = difnet(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    assert_eq!(difnet(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = difnet(dir.path(), &["train", "--dataset", "cora", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-data-here"));
    std::fs::write(dir.path().join("junk.csv"), "a,b\n1,2\n").unwrap();
    let out = difnet(dir.path(), &["plot", "--input", "junk.csv", "--out", "x.svg"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn train_is_deterministic_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["train", "--dataset", "toy", "--epochs", "50", "--hidden", "8", "--seed", "5", "--out", out]
    };
    let mut first = args("a.csv");
    first.extend(["--checkpoint", "best.ckpt"]);
    assert_eq!(difnet(dir.path(), &first).status.code(), Some(0));
    assert_eq!(difnet(dir.path(), &args("b.csv")).status.code(), Some(0));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 51);
    assert!(dir.path().join("best.ckpt").metadata().unwrap().len() > 0);
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = difnet(
        dir.path(),
        &["sweep", "--dataset", "toy", "--depths", "2,3", "--epochs", "20", "--hidden", "4", "--jobs", "2"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().filter(|r| r.starts_with("gcn,")).count() == 2);

    let out = difnet(dir.path(), &["plot", "--input", "sweep.csv", "--out", "sweep.svg"]);
    assert_eq!(out.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("difnet") && svg.contains("gcn"));

    difnet(dir.path(), &["train", "--dataset", "toy", "--epochs", "5", "--out", "m.csv"]);
    let out = difnet(dir.path(), &["plot", "--input", "m.csv", "--out", "m.svg"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_to_string(dir.path().join("m.svg")).unwrap().contains("</svg>"));
}
