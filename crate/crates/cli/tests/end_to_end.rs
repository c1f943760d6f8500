//! Full pipeline on the bundled synthetic corpus, compared byte for byte
//! against `fixtures/golden`. Set `LEXKIT_BLESS=1` to rewrite the goldens.

#[path = "support/pipeline.rs"]
mod pipeline;

use std::fs;

use pipeline::{outputs, pipeline, repo};

#[test]
fn pipeline_is_byte_stable_and_matches_golden() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    pipeline(first.path(), "1");
    pipeline(second.path(), "4");
    let a = outputs(first.path());
    let b = outputs(second.path());
    assert_eq!(a.len(), 16);
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        assert!(x == y, "{name} differs between runs");
    }

    let golden = repo().join("fixtures/golden");
    if std::env::var_os("LEXKIT_BLESS").is_some() {
        let _ = fs::remove_dir_all(&golden);
        fs::create_dir_all(&golden).unwrap();
        for (name, bytes) in &a {
            fs::write(golden.join(name), bytes).unwrap();
        }
        return;
    }
    let expected: Vec<_> = fs::read_dir(&golden)
        .expect("golden directory present (LEXKIT_BLESS=1 to create it)")
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(expected.len(), a.len());
    for (name, bytes) in &a {
        let want = fs::read(golden.join(name)).unwrap_or_else(|_| panic!("golden {name} missing"));
        assert!(want == *bytes, "{name} differs from golden");
    }
}
