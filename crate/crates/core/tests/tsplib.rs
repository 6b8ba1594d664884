use std::path::Path;

use heurgen::eval::{gls_tsp_solve, load_tsplib, InstanceSet};
use heurgen::task::TaskId;

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/berlin52.tsp")
}

#[test]
fn berlin52_format_fixture_loads() {
    let t = load_tsplib(&fixture()).unwrap();
    assert_eq!(t.n(), 52);
    assert!(t.is_symmetric(0.0));
    // EUC_2D rounds to the nearest integer: sqrt(540^2 + 390^2) = 666.108...
    assert_eq!(t.distance.get(0, 1), 666.0);
    assert!(t.distance.data.iter().all(|d| d.fract() == 0.0));
}

#[test]
fn berlin52_gls_reaches_known_optimum() {
    let t = load_tsplib(&fixture()).unwrap();
    let r = gls_tsp_solve(&t.distance, &t.distance, 1000, 0.1);
    eprintln!("berlin52 GLS length {}", r.length);
    assert!(r.length >= 7542.0);
    assert!(r.length <= 7542.0 * 1.02);
}

#[test]
fn tsp_files_load_into_instance_sets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture(), dir.path().join("berlin52.tsp")).unwrap();
    let set = InstanceSet::load(TaskId::GlsTsp, dir.path()).unwrap();
    assert_eq!(set.len(), 1);
    assert_eq!(set.entries[0].0, "berlin52");
}
