//! Fixed-point solvers for `V = λΓ(V)` at fixed `λ`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gamma_map::Model;
use crate::spectral::SpectralField;

/// Reciprocal condition number below which a Newton matrix counts as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Picard,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// The Newton matrix `I - λJ` was numerically singular.
    StepFailure { rcond: f64 },
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: SpectralField,
    pub converged: bool,
    pub iterations: usize,
    pub residual_h1: f64,
    pub method: SolveMethod,
    pub status: SolveStatus,
}

/// Picard iteration `V ← λΓ(V)`, stopping once `‖V - λΓ(V)‖_{H¹} <= tol`.
///
/// The step length of one Picard update equals the residual of the current
/// iterate, so the returned field is the last iterate whose residual passed.
pub fn picard(model: &Model, v0: &SpectralField, lambda: f64, tol: f64, max_iter: usize) -> Result<SolveReport> {
    let mut v = v0.clone();
    let mut iterations = 0;
    loop {
        let next = model.gamma(&v)?.scaled(lambda);
        let residual_h1 = v.sub(&next).h1_norm();
        if residual_h1 <= tol || iterations >= max_iter {
            let converged = residual_h1 <= tol;
            return Ok(SolveReport {
                solution: v,
                converged,
                iterations,
                residual_h1,
                method: SolveMethod::Picard,
                status: if converged {
                    SolveStatus::Converged
                } else {
                    SolveStatus::MaxIterations
                },
            });
        }
        v = next;
        iterations += 1;
    }
}

/// Newton's method on `F(V) = V - λΓ(V)` with matrix `I - λJ(V)`.
///
/// The matrix is factorized at every iterate, including one that already
/// meets `tol`, so a converged report certifies a regular solution.
pub fn newton(model: &Model, v0: &SpectralField, lambda: f64, tol: f64, max_iter: usize) -> Result<SolveReport> {
    let mut v = v0.clone();
    let mut iterations = 0;
    let n = model.modes();
    loop {
        let lin = model.linearize(&v, lambda)?;
        let residual_h1 = lin.residual.h1_norm();
        let op = DMatrix::identity(n, n) - lin.jacobian.matrix() * lambda;
        let rcond = reciprocal_condition(&op);
        let report = |solution, converged, status| SolveReport {
            solution,
            converged,
            iterations,
            residual_h1,
            method: SolveMethod::Newton,
            status,
        };
        if rcond < SINGULAR_RCOND {
            return Ok(report(v, false, SolveStatus::StepFailure { rcond }));
        }
        if residual_h1 <= tol {
            return Ok(report(v, true, SolveStatus::Converged));
        }
        if iterations >= max_iter {
            return Ok(report(v, false, SolveStatus::MaxIterations));
        }
        let rhs = -DVector::from_column_slice(lin.residual.coeffs());
        let Some(delta) = op.lu().solve(&rhs) else {
            return Ok(report(v, false, SolveStatus::StepFailure { rcond: 0.0 }));
        };
        let mut next = v.clone();
        for (c, d) in next.coeffs_mut().iter_mut().zip(delta.iter()) {
            *c += d;
        }
        if next.coeffs().iter().any(|c| !c.is_finite()) {
            return Ok(report(v, false, SolveStatus::StepFailure { rcond }));
        }
        v = next;
        iterations += 1;
    }
}

/// Ratio of smallest to largest singular value.
pub fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Final tolerance on `‖V - λΓ(V)‖_{H¹}`.
    pub tol: f64,
    /// Residual at which Picard hands over to Newton.
    pub handoff_tol: f64,
    pub max_picard: usize,
    pub max_newton: usize,
    /// Two converged solutions within this H¹ distance share a cluster.
    pub cluster_radius: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            handoff_tol: 1e-3,
            max_picard: 5000,
            max_newton: 50,
            cluster_radius: 1e-6,
        }
    }
}

/// Picard down to `handoff_tol`, then Newton to `tol`.
pub fn solve_hybrid(model: &Model, v0: &SpectralField, lambda: f64, opts: &SolveOptions) -> Result<SolveReport> {
    let coarse = picard(model, v0, lambda, opts.handoff_tol, opts.max_picard)?;
    let mut fine = newton(model, &coarse.solution, lambda, opts.tol, opts.max_newton)?;
    fine.iterations += coarse.iterations;
    Ok(fine)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cluster {
    pub solution: SpectralField,
    pub residual_h1: f64,
    pub hits: usize,
    /// Index of the start that first reached this solution.
    pub first_start: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartOutcome {
    pub converged: bool,
    pub residual_h1: f64,
    pub iterations: usize,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionSet {
    pub lambda: f64,
    pub cluster_radius: f64,
    pub clusters: Vec<Cluster>,
    pub starts: Vec<StartOutcome>,
}

impl SolutionSet {
    pub fn non_converged(&self) -> usize {
        self.starts.iter().filter(|s| !s.converged).count()
    }

    /// Largest residual among converged starts.
    pub fn max_residual(&self) -> f64 {
        self.starts
            .iter()
            .filter(|s| s.converged)
            .map(|s| s.residual_h1)
            .fold(0.0, f64::max)
    }
}

/// Initial guess for start `index`: start 0 is the trivial field, the rest
/// are smooth random fields drawn in the H¹ ball of `radius` from an
/// independent ChaCha stream per index.
pub fn start_field(modes: usize, radius: f64, seed: u64, index: usize) -> SpectralField {
    if index == 0 {
        return SpectralField::zeros(modes);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let r = radius * rng.gen::<f64>().powf(1.0 / modes as f64);
    SpectralField::random_smooth(&mut rng, modes, r)
}

/// Solves from `n_starts` deterministic initial guesses and groups converged
/// solutions by H¹ distance.
pub fn multistart(
    model: &Model,
    lambda: f64,
    n_starts: usize,
    radius: f64,
    seed: u64,
    opts: &SolveOptions,
) -> Result<SolutionSet> {
    let reports: Vec<SolveReport> = (0..n_starts)
        .into_par_iter()
        .map(|i| {
            let v0 = start_field(model.modes(), radius, seed, i);
            solve_hybrid(model, &v0, lambda, opts)
        })
        .collect::<Result<_>>()?;

    let mut clusters: Vec<Cluster> = Vec::new();
    let mut starts = Vec::with_capacity(n_starts);
    for (i, r) in reports.into_iter().enumerate() {
        let cluster = if r.converged {
            let found = clusters
                .iter()
                .position(|c| c.solution.sub(&r.solution).h1_norm() <= opts.cluster_radius);
            Some(match found {
                Some(idx) => {
                    clusters[idx].hits += 1;
                    idx
                }
                None => {
                    clusters.push(Cluster {
                        solution: r.solution.clone(),
                        residual_h1: r.residual_h1,
                        hits: 1,
                        first_start: i,
                    });
                    clusters.len() - 1
                }
            })
        } else {
            None
        };
        starts.push(StartOutcome {
            converged: r.converged,
            residual_h1: r.residual_h1,
            iterations: r.iterations,
            cluster,
        });
    }
    Ok(SolutionSet {
        lambda,
        cluster_radius: opts.cluster_radius,
        clusters,
        starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use std::f64::consts::PI;

    fn onsager(modes: usize) -> Model {
        Model::with_default_grid(KernelSpec::onsager(modes).unwrap(), modes).unwrap()
    }

    #[test]
    fn picard_contracts_to_zero_below_threshold() {
        let model = onsager(12);
        let v0 = start_field(12, 5.0, 3, 1);
        assert!(v0.h1_norm() <= 5.0);
        let r = picard(&model, &v0, 1.0, 1e-12, 1000).unwrap();
        assert!(r.converged);
        assert!(r.solution.h1_norm() < 1e-11);
    }

    #[test]
    fn picard_lambda_zero_one_step() {
        let model = onsager(6);
        let v0 = SpectralField::new(vec![1.0, -2.0, 0.5, 0.0, 0.1, 0.0]).unwrap();
        let r = picard(&model, &v0, 0.0, 1e-14, 10).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.solution, SpectralField::zeros(6));
    }

    #[test]
    fn picard_reports_non_convergence() {
        let model = onsager(6);
        let r = picard(&model, &SpectralField::mode(6, 1, 0.5), 5.0, 1e-14, 3).unwrap();
        assert!(!r.converged);
        assert_eq!(r.status, SolveStatus::MaxIterations);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn picard_finds_nematic_state_above_first_bifurcation() {
        let model = onsager(16);
        let r = picard(&model, &SpectralField::mode(16, 1, 0.5), 5.0, 1e-12, 5000).unwrap();
        assert!(r.converged);
        assert!(r.solution.coeff(1) > 0.1);
        let res = model.residual(&r.solution, 5.0).unwrap().h1_norm();
        assert!(res <= 1e-12);
    }

    #[test]
    fn newton_zero_start() {
        let model = onsager(8);
        let r = newton(&model, &SpectralField::zeros(8), 3.0, 1e-12, 10).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.solution, SpectralField::zeros(8));
    }

    #[test]
    fn newton_singular_at_bifurcation_point() {
        let model = onsager(8);
        let r = newton(&model, &SpectralField::zeros(8), 1.5 * PI, 1e-12, 10).unwrap();
        assert!(!r.converged);
        match r.status {
            SolveStatus::StepFailure { rcond } => assert!(rcond < SINGULAR_RCOND),
            other => panic!("expected step failure, got {other:?}"),
        }
    }

    #[test]
    fn newton_polishes_picard_output_quadratically() {
        let model = onsager(16);
        let coarse = picard(&model, &SpectralField::mode(16, 1, 0.5), 5.0, 1e-3, 5000).unwrap();
        let r = newton(&model, &coarse.solution, 5.0, 1e-12, 5).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.iterations <= 5);
        assert!(r.residual_h1 <= 1e-12);
    }

    #[test]
    fn reflected_solution_also_solves() {
        let model = onsager(16);
        let r = solve_hybrid(&model, &SpectralField::mode(16, 1, 0.5), 5.0, &SolveOptions::default()).unwrap();
        let refl = r.solution.quarter_rotated();
        assert!(model.residual(&refl, 5.0).unwrap().h1_norm() < 1e-11);
    }

    #[test]
    fn multistart_single_forced_trivial_start() {
        let model = onsager(8);
        let set = multistart(&model, 5.0, 1, 5.0, 42, &SolveOptions::default()).unwrap();
        assert_eq!(set.clusters.len(), 1);
        assert!(set.clusters[0].solution.h1_norm() < 1e-14);
    }

    #[test]
    fn multistart_is_deterministic() {
        let model = onsager(8);
        let a = multistart(&model, 5.0, 12, 5.0, 9, &SolveOptions::default()).unwrap();
        let b = multistart(&model, 5.0, 12, 5.0, 9, &SolveOptions::default()).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
