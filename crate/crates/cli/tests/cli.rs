use std::path::{Path, PathBuf};

use onsager_cli::output::{read_branches, SolutionFile};
use onsager_cli::{run_from_args, RunConfig};

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut full = vec!["onsager", "--out", dir.to_str().unwrap()];
    full.extend_from_slice(args);
    run_from_args(full)
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn bifurcation_table_for_onsager() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["bifurcations", "--kernel", "onsager", "--modes", "5"]), 0);
    let text = std::fs::read_to_string(dir.path().join("bifurcations.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mode,lambda,gamma,criticality,mu_coefficient"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 5);
    for (i, r) in rows.iter().enumerate() {
        let m = (i + 1) as f64;
        let lambda: f64 = r[1].parse().unwrap();
        assert!((lambda - (4.0 * m * m - 1.0) * std::f64::consts::PI / 2.0).abs() < 1e-12);
        assert_eq!(r[3], "supercritical");
    }
}

#[test]
fn solve_below_threshold_reports_one_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--lambda", "1.0", "--starts", "50", "--seed", "7", "--modes", "16"];
    assert_eq!(run(dir.path(), &args), 0);
    let text = std::fs::read_to_string(dir.path().join("solutions.toml")).unwrap();
    let file: SolutionFile = toml::from_str(&text).unwrap();
    assert_eq!(file.clusters.len(), 1);
    assert_eq!(file.converged_starts, 50);
    assert!(file.clusters[0].coeffs.iter().all(|c| c.abs() < 1e-12));
    assert!(file.clusters[0].stable);
}

#[test]
fn diagram_pairs_are_mirror_images() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["diagram", "--lambda-max", "6", "--branches", "2", "--modes", "12"];
    assert_eq!(run(dir.path(), &args), 0);
    let file = std::fs::File::open(dir.path().join("branches.csv")).unwrap();
    let (modes, rows) = read_branches(file).unwrap();
    assert_eq!(modes, 12);
    let ids: std::collections::BTreeSet<usize> = rows.iter().map(|r| r.branch_id).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    for (a, b) in [(1, 2), (3, 4)] {
        let pa: Vec<_> = rows.iter().filter(|r| r.branch_id == a).collect();
        let pb: Vec<_> = rows.iter().filter(|r| r.branch_id == b).collect();
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x.t + y.t).abs() < 1e-8 * (1.0 + x.t.abs()));
            assert!((x.lambda - y.lambda).abs() < 1e-8);
            assert_eq!(x.stable, y.stable);
        }
    }
    assert!(rows.iter().filter(|r| r.mode == 1).all(|r| r.stable));
    assert!(rows.iter().filter(|r| r.mode == 2).take(3).all(|r| !r.stable));
    let svg = std::fs::read_to_string(dir.path().join("diagram.svg")).unwrap();
    assert!(svg.contains("<polyline") && svg.contains("stroke-dasharray"));
}

#[test]
fn energy_along_branch_file() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["diagram", "--lambda-max", "5.5", "--branches", "1", "--modes", "16"]), 0);
    let branch_file = dir.path().join("branches.csv");
    let code = run(
        dir.path(),
        &["energy", "--modes", "16", "--branch-file", branch_file.to_str().unwrap()],
    );
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut checked = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let lambda: f64 = rec[2].parse().unwrap();
        let e: f64 = rec[4].parse().unwrap();
        let e0: f64 = rec[5].parse().unwrap();
        let el: f64 = rec[6].parse().unwrap();
        assert!(el <= 1e-9);
        if &rec[1] == "1" && lambda > 5.0 {
            assert!(e < e0);
            checked += 1;
        }
    }
    assert!(checked > 0);
    // A branch file with a different width is a config mismatch.
    let code = run(
        dir.path(),
        &["energy", "--modes", "8", "--branch-file", branch_file.to_str().unwrap()],
    );
    assert_eq!(code, 2);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[solve]\nlambda = -1.0\n").unwrap();
    assert_eq!(run(dir.path(), &["--config", cfg.to_str().unwrap(), "solve"]), 2);
    std::fs::write(&cfg, "[solve]\nlamda = 1.0\n").unwrap();
    assert_eq!(run(dir.path(), &["--config", cfg.to_str().unwrap(), "solve"]), 2);
    assert_eq!(run(dir.path(), &["--config", "/nonexistent/cfg.toml", "solve"]), 2);
    assert_eq!(run(dir.path(), &["diagram", "--t0", "0.5"]), 2);
    assert_eq!(run(dir.path(), &["bifurcations", "--kernel", "file"]), 2);
    assert_eq!(run(dir.path(), &["energy"]), 2);
}

#[test]
fn unwritable_output_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    assert_eq!(run(&blocker.join("sub"), &["bifurcations", "--modes", "3"]), 1);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[discretization]\nmodes = 3\n").unwrap();
    let args = ["--config", cfg.to_str().unwrap(), "bifurcations", "--modes", "4"];
    assert_eq!(run(dir.path(), &args), 0);
    let text = std::fs::read_to_string(dir.path().join("bifurcations.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn committed_configs_are_valid() {
    let configs = workspace().join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name.ends_with("_kernel.toml") {
            continue;
        }
        let cfg = RunConfig::load(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{name}");
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn subcritical_kernel_file() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = workspace().join("configs/subcritical_kernel.toml");
    let args = ["bifurcations", "--kernel-file", kernel.to_str().unwrap(), "--modes", "4"];
    assert_eq!(run(dir.path(), &args), 0);
    let text = std::fs::read_to_string(dir.path().join("bifurcations.csv")).unwrap();
    let first = text.lines().nth(1).unwrap();
    assert!(first.starts_with("1,") && first.contains("subcritical"), "{first}");
}
