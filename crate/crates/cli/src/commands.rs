//! Subcommand bodies. Each `compute_*` function is pure so that the same
//! results can be produced without touching the file system.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use onsager_core::continuation::{trivial_branch, AsymptoticPrediction};
use onsager_core::{
    asymptotic_predictor, euler_lagrange_residual, free_energy, multistart, recover_density, spectrum, Branch,
    ContinuationSettings, KernelSpec, Model, OracleReport, SolveOptions, SpectralField,
};

use crate::config::RunConfig;
use crate::output::{self, BranchRow, EnergyRow, SolutionFile};
use crate::{CliError, Command};

pub const BIFURCATIONS_FILE: &str = "bifurcations.csv";
pub const SOLUTIONS_FILE: &str = "solutions.toml";
pub const BRANCHES_FILE: &str = "branches.csv";
pub const DIAGRAM_FILE: &str = "diagram.svg";
pub const VERIFY_FILE: &str = "verify.toml";
pub const ENERGY_FILE: &str = "energy.csv";

pub fn model_of(cfg: &RunConfig) -> Result<Model, CliError> {
    let kernel = cfg.build_kernel()?;
    Ok(Model::new(kernel, cfg.discretization.modes, cfg.grid())?)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn run(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Bifurcations(_) => bifurcations(cfg),
        Command::Solve(_) => solve(cfg),
        Command::Diagram(_) => diagram(cfg),
        Command::Verify(_) => verify(cfg),
        Command::Energy(_) => energy(cfg),
    }
}

/// Bifurcation points of the retained modes, ordered by `λ`.
pub fn compute_bifurcations(kernel: &KernelSpec, modes: usize) -> Result<Vec<AsymptoticPrediction>, CliError> {
    kernel
        .bifurcation_points()
        .into_iter()
        .filter(|p| p.mode <= modes)
        .map(|p| asymptotic_predictor(kernel, p.mode).map_err(CliError::from))
        .collect()
}

fn bifurcations(cfg: &RunConfig) -> Result<(), CliError> {
    let kernel = cfg.build_kernel()?;
    let rows = compute_bifurcations(&kernel, cfg.discretization.modes)?;
    println!("kernel: {}", kernel.label());
    match kernel.lambda_zero() {
        Ok(l0) => println!("lambda_0 = {l0:.12}"),
        Err(_) => println!("lambda_0 undefined (no negative coefficient)"),
    }
    println!("{:>5}  {:>20}  {:>10}  {:>14}  {:>14}", "mode", "lambda", "gamma", "criticality", "C_m");
    for p in &rows {
        let mu = p.mu_coefficient.map_or_else(|| "-".to_string(), |c| format!("{c:.6e}"));
        println!(
            "{:>5}  {:>20.12}  {:>10.6}  {:>14}  {:>14}",
            p.mode, p.lambda_m, p.gamma, p.criticality, mu
        );
    }
    let path = out_dir(cfg)?.join(BIFURCATIONS_FILE);
    output::write_bifurcations(create(&path)?, &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn compute_solutions(cfg: &RunConfig) -> Result<SolutionFile, CliError> {
    let model = model_of(cfg)?;
    let s = &cfg.solve;
    let opts = SolveOptions {
        tol: s.tol,
        cluster_radius: s.cluster_radius,
        ..SolveOptions::default()
    };
    let set = multistart(&model, s.lambda, s.starts, s.radius, s.seed, &opts)?;
    let stability = set
        .clusters
        .iter()
        .map(|c| spectrum(&model, &c.solution, s.lambda).map(|r| (r.min_eig, r.is_stable())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SolutionFile::new(&set, model.modes(), model.grid(), s.seed, &stability))
}

fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let file = compute_solutions(cfg)?;
    println!(
        "lambda = {}: {} cluster(s), {}/{} starts converged, max residual {:.3e}",
        file.lambda,
        file.clusters.len(),
        file.converged_starts,
        file.starts,
        file.max_residual
    );
    for (i, c) in file.clusters.iter().enumerate() {
        let norm = SpectralField::new(c.coeffs.clone())?.h1_norm();
        println!(
            "  cluster {i}: |V|_H1 = {norm:.6e}, hits = {}, min_eig = {:.6e}, {}",
            c.hits,
            c.min_eig,
            if c.stable { "stable" } else { "unstable" }
        );
    }
    let path = out_dir(cfg)?.join(SOLUTIONS_FILE);
    output::write_file(&path, file.to_toml().as_bytes())?;
    println!("wrote {}", path.display());
    if file.converged_starts < file.starts {
        eprintln!("warning: {} start(s) did not converge", file.starts - file.converged_starts);
    }
    Ok(())
}

/// Trivial branch (id 0) plus the `±` branches of the first bifurcation
/// points, ids assigned in order of increasing `λ_m`, `+` before `-`.
pub fn compute_diagram(cfg: &RunConfig) -> Result<Vec<Branch>, CliError> {
    let model = model_of(cfg)?;
    let d = &cfg.diagram;
    let points: Vec<_> = model
        .kernel()
        .bifurcation_points()
        .into_iter()
        .filter(|p| p.mode <= model.modes())
        .take(d.branches)
        .collect();
    let cap = |lambda_m: f64| d.lambda_max.max(lambda_m + d.onset_window);
    let hi = points.iter().map(|p| cap(p.lambda)).fold(d.lambda_max, f64::max);
    let mut branches = vec![trivial_branch(&model, 0.0, hi, d.trivial_samples)?];
    for p in &points {
        for sign in [1.0, -1.0] {
            let settings = ContinuationSettings {
                ds: d.ds,
                tol: d.tol,
                lambda_max: cap(p.lambda),
                max_steps: d.max_steps,
                ..ContinuationSettings::default()
            };
            let mut b = onsager_core::continuation::trace_branch(&model, p.mode, sign, d.t0, &settings)?;
            b.id = branches.len();
            branches.push(b);
        }
    }
    Ok(branches)
}

fn diagram(cfg: &RunConfig) -> Result<(), CliError> {
    let branches = compute_diagram(cfg)?;
    for b in &branches {
        let stable = b.points.iter().filter(|p| p.stable).count();
        let last = b.points.last().map_or(f64::NAN, |p| p.lambda);
        println!(
            "branch {}: mode {}, {} points ({} stable), lambda up to {:.6}, {:?}",
            b.id,
            b.mode.index(),
            b.points.len(),
            stable,
            last,
            b.termination
        );
    }
    let dir = out_dir(cfg)?;
    let rows: Vec<BranchRow> = branches.iter().flat_map(BranchRow::rows_of).collect();
    let path = dir.join(BRANCHES_FILE);
    output::write_branch_rows(create(&path)?, cfg.discretization.modes, &rows)?;
    println!("wrote {}", path.display());
    let path = dir.join(DIAGRAM_FILE);
    output::write_file(&path, output::diagram_svg(&rows).as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let reports: Vec<OracleReport> = onsager_core::verify::run_all(cfg.verify.seed)?;
    for r in &reports {
        println!(
            "{} {:<24} max error {:.3e} (bound {:.1e}, {} samples)",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.max_abs_error,
            r.bound,
            r.samples
        );
    }
    let path = out_dir(cfg)?.join(VERIFY_FILE);
    output::write_file(&path, output::verify_toml(cfg.verify.seed, &reports).as_bytes())?;
    println!("wrote {}", path.display());
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join(", ")))
    }
}

/// Free energy at every row of a branch file, next to the trivial state's.
pub fn compute_energy(kernel: &KernelSpec, grid: usize, rows: &[BranchRow]) -> Result<Vec<EnergyRow>, CliError> {
    rows.iter()
        .map(|r| {
            let v = SpectralField::new(r.coeffs.clone())?;
            let f = recover_density(&v, r.lambda, grid)?;
            let uniform = recover_density(&SpectralField::zeros(v.modes()), r.lambda, grid)?;
            Ok(EnergyRow {
                branch_id: r.branch_id,
                mode: r.mode,
                lambda: r.lambda,
                t: r.t,
                free_energy: free_energy(&f, r.lambda, kernel)?,
                trivial_free_energy: free_energy(&uniform, r.lambda, kernel)?,
                el_residual: euler_lagrange_residual(&f, r.lambda, kernel),
            })
        })
        .collect()
}

fn energy(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg
        .energy
        .branch_file
        .as_ref()
        .ok_or_else(|| CliError::Config("missing value for `energy.branch_file`".into()))?;
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let (modes, rows) = output::read_branches(file)?;
    if modes != cfg.discretization.modes {
        return Err(CliError::Config(format!(
            "invalid value for `discretization.modes`: branch file has {modes} modes, config has {}",
            cfg.discretization.modes
        )));
    }
    let kernel = cfg.build_kernel()?;
    let energies = compute_energy(&kernel, cfg.grid(), &rows)?;
    let below = energies
        .iter()
        .filter(|e| e.mode != 0 && e.free_energy < e.trivial_free_energy)
        .count();
    let nontrivial = energies.iter().filter(|e| e.mode != 0).count();
    println!(
        "{} points, {below}/{nontrivial} non-trivial points below the trivial energy",
        energies.len()
    );
    let out = out_dir(cfg)?.join(ENERGY_FILE);
    output::write_energy(create(&out)?, &energies)?;
    println!("wrote {}", out.display());
    Ok(())
}
