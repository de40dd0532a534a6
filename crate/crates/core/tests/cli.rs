use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trajsynth::cli::load_report;

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajsynth"))
        .args(args)
        .env("TRAJSYNTH_OUTPUT_DIR", root)
        .output()
        .unwrap()
}

fn ok(root: &Path, args: &[&str]) -> Vec<PathBuf> {
    let out = run(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("wrote="))
        .map(PathBuf::from)
        .collect()
}

fn pick(files: &[PathBuf], name: &str) -> String {
    files.iter().find(|p| p.ends_with(name)).unwrap().display().to_string()
}

fn failure(root: &Path, args: &[&str]) -> (i32, String) {
    let out = run(root, args);
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn pipeline_emits_every_block() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let sim = ok(root, &["simulate", "--seed", "1", "--n-users", "50", "--n-nonmembers", "20", "--trace-len", "500"]);
    let corpus = pick(&sim, "corpus.csv");
    let fit = ok(root, &["fit", &corpus, "--seed", "2"]);
    let gen = ok(root, &["generate", "--model", &pick(&fit, "model.json"), "--seed", "3", "--n-traces", "50"]);
    let again = ok(root, &["generate", "--model", &pick(&fit, "model.json"), "--seed", "3", "--n-traces", "50"]);
    let syn = pick(&gen, "synthetic.csv");
    assert_eq!(std::fs::read(&syn).unwrap(), std::fs::read(pick(&again, "synthetic.csv")).unwrap());
    let ev = ok(
        root,
        &[
            "evaluate", &corpus, &syn, "--seed", "4", "--targets", &pick(&sim, "targets.csv"),
            "--timings", &pick(&fit, "timings.json"), "--timings", &pick(&gen, "timings.json"),
            "--n-permutations", "100", "--tau-max", "24",
        ],
    );
    let report = load_report(Path::new(&pick(&ev, "report.json"))).unwrap();
    assert!(report.topn.is_computed() && report.mmd.is_computed() && report.mi.is_computed());
    assert!(report.privacy.is_computed());
    let t = report.timings.value().unwrap();
    assert!(t.fit_seconds.unwrap() >= 0.0 && t.generation_seconds.unwrap() >= 0.0);
    for name in ["topn.csv", "mmd.csv", "mi.csv", "mi_fits.csv", "membership_scores.csv"] {
        assert!(ev.iter().any(|p| p.ends_with(name)), "{name} missing");
    }

    let ev = ok(root, &["evaluate", &corpus, &syn, "--seed", "4", "--n-permutations", "10"]);
    let report = load_report(Path::new(&pick(&ev, "report.json"))).unwrap();
    assert!(!report.privacy.is_computed() && !report.timings.is_computed());
}

#[test]
fn errors_are_one_line_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let sim = ok(root, &["simulate", "--seed", "1", "--n-users", "10", "--trace-len", "50"]);
    let corpus = pick(&sim, "corpus.csv");

    let (code, err) = failure(root, &["fit", &corpus, "--bogus"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error kind=usage msg="), "{err}");
    assert_eq!(err.lines().count(), 1);

    let (code, err) = failure(root, &["generate", "--model", "x.json"]);
    assert_eq!((code, err.trim()), (3, "error kind=config msg=invalid configuration: a seed is required (--seed or `seed` in the config file)"));

    let (code, _) = failure(root, &["fit", "missing.csv", "--seed", "1"]);
    assert_eq!(code, 4);

    let cfg = root.join("c.toml");
    std::fs::write(&cfg, "level = 5\nseed = 1\n").unwrap();
    let (code, err) = failure(root, &["fit", &corpus, "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 7, "{err}");
    assert!(err.starts_with("error kind=grid_mismatch"));

    let bad = root.join("bad.csv");
    std::fs::write(&bad, "user,time\n1,2\n").unwrap();
    let (code, err) = failure(root, &["ingest", bad.to_str().unwrap()]);
    assert_eq!(code, 6, "{err}");

    let (code, _) = failure(root, &["attack", &corpus, &corpus, "--seed", "1"]);
    assert_eq!(code, 6);

    let before = std::fs::read(&corpus).unwrap();
    ok(root, &["fit", &corpus, "--seed", "1", "--model-type", "markov"]);
    assert_eq!(std::fs::read(&corpus).unwrap(), before);
}
