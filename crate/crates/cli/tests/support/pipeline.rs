//! Shared by the end-to-end test and the acceptance harness.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const HASH_A: &str = "hash:seed=1,vocab=5000,max=512";
const HASH_B: &str = "hash:seed=2,vocab=5000,max=512";

pub fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn step(dir: &Path, jobs: &str, args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_lexkit"))
        .current_dir(dir)
        .env_remove("LEXKIT_SCORER_URL")
        .args(["--jobs", jobs])
        .args(args)
        .output()
        .unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

/// Runs the pipeline inside `dir` with relative paths only, so headers do
/// not depend on where the run happens.
pub fn pipeline(dir: &Path, jobs: &str) {
    let src = repo().join("fixtures/synthetic");
    for entry in fs::read_dir(&src).unwrap() {
        let path = entry.unwrap().path();
        if matches!(path.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")) {
            fs::copy(&path, dir.join(path.file_name().unwrap())).unwrap();
        }
    }
    fs::create_dir_all(dir.join("out")).unwrap();
    let corpus = ["--manifest", "manifest.json", "--test-fraction", "0.3", "--split-seed", "5"];
    let with = |extra: &[&str]| -> Vec<String> { corpus.iter().chain(extra).map(|s| s.to_string()).collect() };
    let call = |args: Vec<String>| step(dir, jobs, &args.iter().map(String::as_str).collect::<Vec<_>>());

    call([vec!["stats".into()], with(&["--alpha", "0.5", "--out", "out/stats.md"])].concat());
    for task in ["crimes", "contracts"] {
        let vocab = format!("{task}.vocab.json");
        let probes = format!("out/{task}.probes.jsonl");
        call([
            vec!["build-probes".into()],
            with(&["--vocab", &vocab, "--out", &probes, "--seed", "7", "--coverage", &format!("out/{task}.coverage.json")]),
        ]
        .concat());
        for (name, scorer) in [("a", HASH_A), ("b", HASH_B)] {
            step(
                dir,
                jobs,
                &[
                    "eval-probes", "--probes", &probes, "--vocab", &vocab, "--scorer", scorer, "--out",
                    &format!("out/{task}.{name}.results.jsonl"),
                ],
            );
        }
    }
    let results = [
        "out/crimes.a.results.jsonl",
        "out/crimes.b.results.jsonl",
        "out/contracts.a.results.jsonl",
        "out/contracts.b.results.jsonl",
    ];
    let mut report = vec!["report", "--results"];
    report.extend(results);
    report.extend(["--vocab", "crimes.vocab.json", "contracts.vocab.json", "--curve", "out/curve.csv"]);
    for (format, file) in [("markdown", "out/report.md"), ("json", "out/report.json"), ("csv", "out/report.csv")] {
        let mut args = report.clone();
        args.extend(["--format", format, "--out", file]);
        step(dir, jobs, &args);
    }
    for (name, scorer) in [("a", HASH_A), ("b", HASH_B)] {
        call([
            vec!["eval-mlm".into()],
            with(&["--scorer", scorer, "--seed", "3", "--max-chunks", "15", "--out", &format!("out/mlm.{name}.json")]),
        ]
        .concat());
    }
    step(dir, jobs, &["report", "--mlm", "out/mlm.a.json", "out/mlm.b.json", "--out", "out/mlm.md"]);
}

pub fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}
