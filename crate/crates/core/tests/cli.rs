mod common;

use common::flowlab;

#[test]
fn seeded_pipelines_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    match common::cli_reproducible(dir.path()) {
        Ok(s) => println!("{s}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn unregularized_embedded_gaussian_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let gen = flowlab(
        dir.path(),
        &["generate", "--dataset", "gauss-embed", "--n", "10000", "--seed", "1", "--out", "g.csv"],
    );
    assert!(gen.status.success());
    let out = flowlab(
        dir.path(),
        &[
            "train",
            "--data",
            "g.csv",
            "--layers",
            "8",
            "--alpha",
            "0",
            "--lr",
            "1e-3",
            "--epochs",
            "300",
            "--seed",
            "1",
            "--divergence-bound",
            "1e4",
            "--monitor-samples",
            "16",
            "--out",
            "m.ckpt",
        ],
    );
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2), "{err}");
    assert!(err.contains("diverge"), "{err}");
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = flowlab(dir.path(), &["gradcheck", "--dim", "2", "--layers", "2", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let err: f64 =
        text.split_whitespace().filter_map(|w| w.parse().ok()).last().expect("numeric error in output");
    assert!(err < 1e-4, "{text}");
}

#[test]
fn eval_matches_library_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(flowlab(p, &["generate", "--dataset", "banana", "--n", "300", "--seed", "4", "--out", "b.csv"])
        .status
        .success());
    assert!(flowlab(
        p,
        &["train", "--data", "b.csv", "--layers", "2", "--alpha", "1e-3", "--epochs", "2", "--out", "m.ckpt"]
    )
    .status
    .success());
    let out = flowlab(p, &["eval", "--model", "m.ckpt", "--data", "b.csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let printed = text.lines().find(|l| l.starts_with("mean_log_likelihood")).unwrap();

    let model = flowlab::optimize::load_checkpoint(p.join("m.ckpt")).unwrap();
    let table = flowlab::datasets::csv_read_path(p.join("b.csv")).unwrap();
    let ds = flowlab::datasets::Dataset::new("b", table.data).center().unwrap();
    let flowlab::optimize::Model::Dense(net) = model else { panic!("dense expected") };
    let ev = flowlab::optimize::evaluate(&net, &ds.data).unwrap();
    let expect = format!("mean_log_likelihood {}", flowlab::cli::fmt_sig(ev.mean_log_likelihood, 12));
    assert_eq!(printed, expect);
}

#[test]
fn usage_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(flowlab(dir.path(), &["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        flowlab(dir.path(), &["eval", "--model", "missing.ckpt", "--data", "missing.csv"]).status.code(),
        Some(3)
    );
}
