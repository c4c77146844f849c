//! Bifurcation detection on the trivial branch, branch switching and
//! pseudo-arclength continuation of the bifurcated branches.
//!
//! Amplitudes are measured in the H¹-orthonormal basis: on the branch born
//! at mode `m`, `t = ⟨V, φ_m⟩_{H¹} = v_m / c_m` with `c_m = 1/√((4m²+1)π)`.
//! Near onset the branch satisfies `λ - λ_m ≈ C_m t²` and
//! `v_{2m} ≈ t² z_{2m} c_{2m}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{spectrum, spectrum_of, STABILITY_TOL};
use crate::error::{Error, Result};
use crate::gamma_map::Model;
use crate::kernel::{criticality_from_ratio, Criticality, KernelSpec};
use crate::spectral::{h1_weight, orthonormal_scale, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchMode {
    Trivial,
    Mode(usize),
}

impl BranchMode {
    /// Column value used in branch files: 0 for the trivial branch.
    pub fn index(&self) -> usize {
        match self {
            BranchMode::Trivial => 0,
            BranchMode::Mode(m) => *m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub lambda: f64,
    pub field: SpectralField,
    pub t: f64,
    /// Smallest eigenvalue of `I - λJ(V)`.
    pub min_eig: f64,
    pub stable: bool,
    pub residual_h1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    LambdaMax,
    LambdaMin,
    MaxSteps,
    StepFailure,
    /// Trivial branches are sampled, not continued.
    Sampled,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub id: usize,
    pub mode: BranchMode,
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
    /// Number of rejected steps that triggered step halving.
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSettings {
    /// Nominal arclength step in the H¹-orthonormal metric.
    pub ds: f64,
    pub tol: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_steps: usize,
    pub max_corrector: usize,
    /// Steps are halved down to `ds / min_step_divisor` before giving up.
    pub min_step_divisor: f64,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            ds: 0.05,
            tol: 1e-10,
            lambda_min: 0.0,
            lambda_max: f64::INFINITY,
            max_steps: 2000,
            max_corrector: 25,
            min_step_divisor: 64.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticPrediction {
    pub mode: usize,
    pub lambda_m: f64,
    pub gamma: f64,
    /// `C_m` in `λ - λ_m ≈ C_m t²`; `None` when `γ_m = 1`.
    pub mu_coefficient: Option<f64>,
    /// Second-harmonic coefficient `z_{2m}` in the orthonormal basis.
    pub second_harmonic: Option<f64>,
    pub criticality: Criticality,
}

/// Local branch shape at `λ_m`:
/// `C_m = λ_m (c_m²/8)(2γ_m - 1)/(γ_m - 1)` and
/// `z_{2m} = γ_m/(γ_m - 1) · c_m²/(4 c_{2m})`.
pub fn asymptotic_predictor(kernel: &KernelSpec, m: usize) -> Result<AsymptoticPrediction> {
    let km = kernel.coeff(m);
    if m == 0 || km >= 0.0 {
        return Err(Error::UndefinedMode(m));
    }
    let gamma = kernel.harmonic_ratio(m)?;
    let lambda_m = -2.0 / km;
    let cm = orthonormal_scale(m);
    let c2m = orthonormal_scale(2 * m);
    let criticality = criticality_from_ratio(gamma);
    let resonant = (gamma - 1.0).abs() <= 1e-12;
    let (mu_coefficient, second_harmonic) = if resonant {
        (None, None)
    } else {
        (
            Some(lambda_m * cm * cm / 8.0 * (2.0 * gamma - 1.0) / (gamma - 1.0)),
            Some(gamma / (gamma - 1.0) * cm * cm / (4.0 * c2m)),
        )
    };
    Ok(AsymptoticPrediction {
        mode: m,
        lambda_m,
        gamma,
        mu_coefficient,
        second_harmonic,
        criticality,
    })
}

/// Zeros of the trivial-branch eigenvalues `1 + λk_m/2`, `m = 1..modes`,
/// inside `(lo, hi)`: sign changes on a uniform sample, refined by bisection.
pub fn trivial_spectrum_sweep(kernel: &KernelSpec, modes: usize, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    for m in 1..=modes {
        let k = kernel.coeff(m);
        let f = |lambda: f64| 1.0 + lambda * k / 2.0;
        roots.extend(sign_changes(f, lo, hi, samples));
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Crossings of the sorted eigenvalues of `I - λJ(0)` through zero, with
/// `J(0)` assembled numerically by the model. The full spectrum is sampled
/// once per grid point; each index that changes sign is then bisected.
pub fn trivial_crossings(model: &Model, lo: f64, hi: f64, samples: usize) -> Result<Vec<f64>> {
    let j = model.jacobian(&SpectralField::zeros(model.modes()))?;
    let samples = samples.max(2);
    let grid: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let spectra: Vec<Vec<f64>> = grid.iter().map(|l| spectrum_of(&j, *l).eigenvalues).collect();
    let mut roots = Vec::new();
    for (w, s) in grid.windows(2).zip(spectra.windows(2)) {
        for idx in 0..model.modes() {
            let (fa, fb) = (s[0][idx], s[1][idx]);
            if fa == 0.0 && w[0] > lo {
                roots.push(w[0]);
            } else if fa * fb < 0.0 {
                let f = |lambda: f64| spectrum_of(&j, lambda).eigenvalues[idx];
                roots.push(bisect(&f, w[0], w[1], fa));
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

fn sign_changes(f: impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let samples = samples.max(2);
    let grid: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (f(a), f(b));
        // Exclusive interval: roots on the left boundary are skipped.
        if fa == 0.0 && a > lo {
            roots.push(a);
        } else if fa * fb < 0.0 {
            roots.push(bisect(&f, a, b, fa));
        }
    }
    roots
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fa * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// A step is rejected when the corrector moves farther than this fraction
/// of the step from the predictor, or when the secant turns too sharply
/// away from the previous tangent.
const MAX_CORRECTION_RATIO: f64 = 0.1;
const MIN_STEP_COSINE: f64 = 0.8;

/// Linear constraint `⟨a, v⟩ + b·λ = c` closing the bordered system.
struct Constraint {
    a: Vec<f64>,
    b: f64,
    c: f64,
}

struct Corrected {
    field: SpectralField,
    lambda: f64,
    residual_h1: f64,
}

/// Newton on `[V - λΓ(V); constraint] = 0` in the unknowns `(V, λ)`.
fn bordered_newton(
    model: &Model,
    mut v: SpectralField,
    mut lambda: f64,
    constraint: &Constraint,
    tol: f64,
    max_iter: usize,
) -> Result<Corrected> {
    let n = model.modes();
    let mut residual_h1 = f64::INFINITY;
    for iter in 0..=max_iter {
        let lin = model.linearize(&v, lambda)?;
        residual_h1 = lin.residual.h1_norm();
        let g = constraint
            .a
            .iter()
            .zip(v.coeffs())
            .map(|(a, x)| a * x)
            .sum::<f64>()
            + constraint.b * lambda
            - constraint.c;
        if residual_h1 <= tol && g.abs() <= tol {
            return Ok(Corrected {
                field: v,
                lambda,
                residual_h1,
            });
        }
        if iter == max_iter || !residual_h1.is_finite() || residual_h1 > 1e8 {
            break;
        }
        let mut mat = DMatrix::zeros(n + 1, n + 1);
        mat.view_mut((0, 0), (n, n))
            .copy_from(&(DMatrix::identity(n, n) - lin.jacobian.matrix() * lambda));
        for i in 0..n {
            mat[(i, n)] = -lin.gamma.coeffs()[i];
            mat[(n, i)] = constraint.a[i];
        }
        mat[(n, n)] = constraint.b;
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -lin.residual.coeffs()[i];
        }
        rhs[n] = -g;
        let Some(delta) = mat.lu().solve(&rhs) else {
            break;
        };
        for (c, d) in v.coeffs_mut().iter_mut().zip(delta.iter()) {
            *c += d;
        }
        lambda += delta[n];
    }
    Err(Error::CorrectorFailed {
        iterations: max_iter,
        residual: residual_h1,
    })
}

fn make_point(model: &Model, mode: BranchMode, field: SpectralField, lambda: f64, residual_h1: f64) -> Result<BranchPoint> {
    let report = spectrum(model, &field, lambda)?;
    let t = match mode {
        BranchMode::Trivial => 0.0,
        BranchMode::Mode(m) => field.amplitude(m),
    };
    Ok(BranchPoint {
        lambda,
        t,
        min_eig: report.min_eig,
        stable: report.min_eig > STABILITY_TOL,
        residual_h1,
        field,
    })
}

/// Lands on the branch born at mode `m` with amplitude `sign·t0`, correcting
/// the asymptotic predictor with `t` pinned and `λ` free.
pub fn switch_branch(model: &Model, m: usize, t0: f64, sign: f64, tol: f64) -> Result<BranchPoint> {
    if !(t0 > 0.0 && t0 <= 0.1) {
        return Err(Error::InvalidArgument(format!("switching amplitude {t0} outside (0, 0.1]")));
    }
    if m == 0 || m > model.modes() {
        return Err(Error::UndefinedMode(m));
    }
    let s = if sign < 0.0 { -1.0 } else { 1.0 };
    let pred = asymptotic_predictor(model.kernel(), m)?;
    let lambda0 = pred.lambda_m + pred.mu_coefficient.unwrap_or(0.0) * t0 * t0;
    let mut v = SpectralField::mode(model.modes(), m, s * t0 * orthonormal_scale(m));
    if let Some(z) = pred.second_harmonic {
        if 2 * m <= model.modes() {
            v.coeffs_mut()[2 * m - 1] = t0 * t0 * z * orthonormal_scale(2 * m);
        }
    }
    let mut a = vec![0.0; model.modes()];
    a[m - 1] = 1.0 / orthonormal_scale(m);
    let pin = Constraint { a, b: 0.0, c: s * t0 };
    let c = bordered_newton(model, v, lambda0, &pin, tol, 50)?;
    make_point(model, BranchMode::Mode(m), c.field, c.lambda, c.residual_h1)
}

/// State vector `(v, λ)` with the H¹-orthonormal metric
/// `‖(dv, dλ)‖² = Σ (1+4m²)π dv_m² + dλ²`.
#[derive(Clone)]
struct State {
    v: Vec<f64>,
    lambda: f64,
}

impl State {
    fn of(p: &BranchPoint) -> Self {
        Self {
            v: p.field.coeffs().to_vec(),
            lambda: p.lambda,
        }
    }

    fn dot(&self, other: &State) -> f64 {
        self.v
            .iter()
            .zip(&other.v)
            .enumerate()
            .map(|(i, (a, b))| h1_weight(i + 1) * a * b)
            .sum::<f64>()
            + self.lambda * other.lambda
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&self, s: f64, d: &State) -> State {
        State {
            v: self.v.iter().zip(&d.v).map(|(a, b)| a + s * b).collect(),
            lambda: self.lambda + s * d.lambda,
        }
    }

    fn scaled(&self, s: f64) -> State {
        State {
            v: self.v.iter().map(|x| x * s).collect(),
            lambda: self.lambda * s,
        }
    }

    fn normalized(&self) -> State {
        self.scaled(1.0 / self.norm())
    }
}

/// Unit tangent at a branch point of mode `m`, oriented so `|t|` grows.
fn initial_tangent(model: &Model, point: &BranchPoint, m: usize) -> Result<State> {
    let n = model.modes();
    let lin = model.linearize(&point.field, point.lambda)?;
    let mut mat = DMatrix::zeros(n + 1, n + 1);
    mat.view_mut((0, 0), (n, n))
        .copy_from(&(DMatrix::identity(n, n) - lin.jacobian.matrix() * point.lambda));
    for i in 0..n {
        mat[(i, n)] = -lin.gamma.coeffs()[i];
    }
    mat[(n, m - 1)] = 1.0 / orthonormal_scale(m);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = mat.lu().solve(&rhs).ok_or(Error::CorrectorFailed {
        iterations: 0,
        residual: point.residual_h1,
    })?;
    let tangent = State {
        v: sol.as_slice()[..n].to_vec(),
        lambda: sol[n],
    }
    .normalized();
    Ok(if point.t < 0.0 { tangent.scaled(-1.0) } else { tangent })
}

/// Pseudo-arclength continuation of the branch born at mode `m`, starting
/// from a converged point (usually from [`switch_branch`]).
pub fn continue_branch(
    model: &Model,
    start: &BranchPoint,
    m: usize,
    settings: &ContinuationSettings,
) -> Result<Branch> {
    if !(settings.ds > 0.0) {
        return Err(Error::InvalidArgument("arclength step must be positive".into()));
    }
    if m == 0 || m > model.modes() {
        return Err(Error::UndefinedMode(m));
    }
    let start_res = model.residual(&start.field, start.lambda)?.h1_norm();
    if !(start_res <= settings.tol) {
        return Err(Error::CorrectorFailed {
            iterations: 0,
            residual: start_res,
        });
    }
    let mode = BranchMode::Mode(m);
    let mut points = vec![make_point(model, mode, start.field.clone(), start.lambda, start_res)?];
    let mut current = State::of(start);
    let mut tangent = initial_tangent(model, start, m)?;
    let min_ds = settings.ds / settings.min_step_divisor;
    let mut ds = settings.ds;
    let mut rejected = 0;
    let mut termination = Termination::MaxSteps;

    let mut steps = 0;
    while steps < settings.max_steps {
        let pred = current.axpy(ds, &tangent);
        let mut a: Vec<f64> = tangent
            .v
            .iter()
            .enumerate()
            .map(|(i, t)| h1_weight(i + 1) * t)
            .collect();
        let c = tangent.dot(&pred);
        let constraint = Constraint {
            a: std::mem::take(&mut a),
            b: tangent.lambda,
            c,
        };
        let field = SpectralField::new(pred.v.clone())?;
        let attempt = bordered_newton(model, field, pred.lambda, &constraint, settings.tol, settings.max_corrector);
        let accepted = attempt.ok().and_then(|c| {
            let next = State {
                v: c.field.coeffs().to_vec(),
                lambda: c.lambda,
            };
            let secant = next.axpy(-1.0, &current);
            let correction = next.axpy(-1.0, &pred).norm();
            let cosine = secant.dot(&tangent) / secant.norm();
            (correction <= MAX_CORRECTION_RATIO * ds && cosine >= MIN_STEP_COSINE).then_some((c, next, secant))
        });
        match accepted {
            Some((c, next, secant)) => {
                steps += 1;
                tangent = secant.normalized();
                current = next;
                let lambda = c.lambda;
                points.push(make_point(model, mode, c.field, lambda, c.residual_h1)?);
                ds = (2.0 * ds).min(settings.ds);
                if lambda >= settings.lambda_max {
                    termination = Termination::LambdaMax;
                    break;
                }
                if lambda <= settings.lambda_min {
                    termination = Termination::LambdaMin;
                    break;
                }
            }
            None => {
                rejected += 1;
                ds *= 0.5;
                if ds < min_ds {
                    if points.len() == 1 {
                        return Err(Error::CorrectorFailed {
                            iterations: settings.max_corrector,
                            residual: start_res,
                        });
                    }
                    termination = Termination::StepFailure;
                    break;
                }
            }
        }
    }
    Ok(Branch {
        id: 0,
        mode,
        points,
        termination,
        rejected_steps: rejected,
    })
}

/// Switches onto the branch of mode `m` with the given sign and continues it.
pub fn trace_branch(model: &Model, m: usize, sign: f64, t0: f64, settings: &ContinuationSettings) -> Result<Branch> {
    let start = switch_branch(model, m, t0, sign, settings.tol)?;
    continue_branch(model, &start, m, settings)
}

/// The trivial solution sampled over `[lo, hi]`, with its stability.
pub fn trivial_branch(model: &Model, lo: f64, hi: f64, samples: usize) -> Result<Branch> {
    let samples = samples.max(2);
    let zero = SpectralField::zeros(model.modes());
    let j = model.jacobian(&zero)?;
    let points = (0..samples)
        .map(|i| {
            let lambda = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            let r = spectrum_of(&j, lambda);
            BranchPoint {
                lambda,
                field: zero.clone(),
                t: 0.0,
                min_eig: r.min_eig,
                stable: r.min_eig > STABILITY_TOL,
                residual_h1: 0.0,
            }
        })
        .collect();
    Ok(Branch {
        id: 0,
        mode: BranchMode::Trivial,
        points,
        termination: Termination::Sampled,
        rejected_steps: 0,
    })
}

/// Least-squares fit of `λ - λ_m` against `t²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

pub fn fit_quadratic_law(points: &[(f64, f64)], lambda_m: f64) -> LocalLawFit {
    let xs: Vec<f64> = points.iter().map(|(t, _)| t * t).collect();
    let ys: Vec<f64> = points.iter().map(|(_, l)| l - lambda_m).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LocalLawFit {
        slope,
        intercept,
        r_squared,
        samples: xs.len(),
    }
}

/// Pinned branch points at each amplitude in `amplitudes` (both signs),
/// fitted to the quadratic law.
pub fn local_law(model: &Model, m: usize, amplitudes: &[f64], tol: f64) -> Result<(LocalLawFit, Vec<BranchPoint>)> {
    let lambda_m = -2.0 / model.kernel().coeff(m);
    let mut pts = Vec::new();
    for &t0 in amplitudes {
        for sign in [1.0, -1.0] {
            pts.push(switch_branch(model, m, t0, sign, tol)?);
        }
    }
    let pairs: Vec<(f64, f64)> = pts.iter().map(|p| (p.t, p.lambda)).collect();
    Ok((fit_quadratic_law(&pairs, lambda_m), pts))
}
