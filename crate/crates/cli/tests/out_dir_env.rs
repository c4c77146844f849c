// Kept in its own test binary: it mutates the process environment.

use onsager_cli::{run_from_args, OUT_DIR_ENV};

#[test]
fn environment_sets_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    std::env::set_var(OUT_DIR_ENV, &target);
    assert_eq!(run_from_args(["onsager", "bifurcations", "--modes", "2"]), 0);
    assert!(target.join("bifurcations.csv").exists());

    // An explicit flag still wins.
    let flag = dir.path().join("from-flag");
    let code = run_from_args(["onsager", "--out", flag.to_str().unwrap(), "bifurcations", "--modes", "2"]);
    assert_eq!(code, 0);
    assert!(flag.join("bifurcations.csv").exists());
    std::env::remove_var(OUT_DIR_ENV);
}
