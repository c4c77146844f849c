//! Brute-force oracles for the analytic shortcuts.
//!
//! Every oracle here evaluates its quantity along an independent code path:
//! direct trigonometric sums and nested quadrature instead of cached moments,
//! finite differences instead of the assembled Jacobian.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma_map::Model;
use crate::kernel::KernelSpec;
use crate::spectral::{default_grid, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_error: f64,
    pub samples: usize,
    pub bound: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, max_abs_error: f64, samples: usize, bound: f64) -> Self {
        Self {
            name: name.into(),
            max_abs_error,
            samples,
            bound,
            pass: max_abs_error <= bound,
        }
    }

    /// Combines reports of the same oracle into one worst-case report.
    pub fn merge(name: impl Into<String>, reports: &[OracleReport], bound: f64) -> Self {
        let err = reports.iter().map(|r| r.max_abs_error).fold(0.0, f64::max);
        let samples = reports.iter().map(|r| r.samples).sum();
        Self::new(name, err, samples, bound)
    }
}

pub const GAMMA_ORACLE_BOUND: f64 = 1e-8;
pub const FD_JACOBIAN_BOUND: f64 = 1e-6;

/// Nested quadrature `Γ(V)(θ_i) = Σ_j K̃(θ_i - θ'_j) e^{-V(θ'_j)} / Σ_j e^{-V(θ'_j)}`
/// at `n_outer` angles, compared with the spectral `Γ` synthesized at the same
/// angles. The spectral side keeps `max(M, P)` modes on its default grid.
pub fn gamma_oracle(v: &SpectralField, kernel: &KernelSpec, n_outer: usize, n_inner: usize) -> Result<OracleReport> {
    if n_outer == 0 || n_inner == 0 {
        return Err(Error::InvalidArgument("oracle grids must be nonempty".into()));
    }
    let modes = v.modes().max(kernel.order());
    let model = Model::with_default_grid(kernel.clone(), modes)?;
    let spectral = model.gamma(&v.resized(modes))?;

    let inner: Vec<(f64, f64)> = (0..n_inner)
        .map(|j| {
            let th = 2.0 * PI * j as f64 / n_inner as f64;
            (th, (-v.eval(th)).exp())
        })
        .collect();
    let z: f64 = inner.iter().map(|(_, w)| w).sum();
    let mut max_err = 0.0f64;
    for i in 0..n_outer {
        let th = 2.0 * PI * i as f64 / n_outer as f64;
        let direct: f64 = inner
            .iter()
            .map(|(tp, w)| kernel.fluctuation(th - tp) * w)
            .sum::<f64>()
            / z;
        let fast: f64 = spectral
            .coeffs()
            .iter()
            .enumerate()
            .map(|(m, c)| c * (2.0 * (m + 1) as f64 * th).cos())
            .sum();
        max_err = max_err.max((direct - fast).abs());
    }
    Ok(OracleReport::new("gamma_oracle", max_err, n_outer, GAMMA_ORACLE_BOUND))
}

/// Central differences of `Γ` along each coordinate direction against the
/// columns of `J`. The error is the largest column-wise relative sup-norm
/// deviation.
pub fn fd_jacobian(v: &SpectralField, kernel: &KernelSpec, step: f64) -> Result<OracleReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let modes = v.modes();
    let model = Model::new(kernel.clone(), modes, default_grid(modes))?;
    let j = model.jacobian(v)?;
    let mut worst = 0.0f64;
    for n in 1..=modes {
        let dir = SpectralField::mode(modes, n, 1.0);
        let plus = model.gamma(&v.add_scaled(step, &dir))?;
        let minus = model.gamma(&v.add_scaled(-step, &dir))?;
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for m in 0..modes {
            let fd = (plus.coeffs()[m] - minus.coeffs()[m]) / (2.0 * step);
            let exact = j.matrix()[(m, n - 1)];
            diff = diff.max((fd - exact).abs());
            scale = scale.max(exact.abs());
        }
        worst = worst.max(diff / scale.max(f64::MIN_POSITIVE));
    }
    Ok(OracleReport::new("fd_jacobian", worst, modes, FD_JACOBIAN_BOUND))
}

/// Slack allowed for rounding when comparing against the covariance bound.
const GRUSS_SLACK: f64 = 1e-12;

/// Randomized check of `|∫fg dμ - ∫f dμ ∫g dμ| <= (A-a)(B-b)/4` and of the
/// corollary `<= ‖f‖∞‖g‖∞`, with `a <= f <= A`, `b <= g <= B`. Every tenth
/// trial uses `f, g = cos(2mθ), cos(2nθ)` under a random Gibbs-like weight,
/// where the bound reads `|A_mn| <= 1`. The reported error is the largest
/// excess over either bound.
pub fn gruss_property(trials: usize, seed: u64) -> OracleReport {
    let excess: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            gruss_trial(&mut rng, i % 10 == 9)
        })
        .collect();
    let worst = excess.into_iter().fold(0.0, f64::max);
    OracleReport::new("gruss_property", worst, trials, 0.0)
}

fn gruss_trial(rng: &mut ChaCha8Rng, cosines: bool) -> f64 {
    let n = 2 * rng.gen_range(2..64usize);
    let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..1.0f64).powi(3)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let (f, g, bounds) = if cosines {
        let m = rng.gen_range(1..8) as f64;
        let l = rng.gen_range(1..8) as f64;
        let f: Vec<f64> = (0..n).map(|j| (2.0 * m * 2.0 * PI * j as f64 / n as f64).cos()).collect();
        let g: Vec<f64> = (0..n).map(|j| (2.0 * l * 2.0 * PI * j as f64 / n as f64).cos()).collect();
        (f, g, (-1.0, 1.0, -1.0, 1.0))
    } else {
        let a = rng.gen_range(-5.0..5.0);
        let big_a = a + rng.gen_range(0.0..5.0);
        let b = rng.gen_range(-5.0..5.0);
        let big_b = b + rng.gen_range(0.0..5.0);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(a..=big_a)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(b..=big_b)).collect();
        (f, g, (a, big_a, b, big_b))
    };
    let ef: f64 = w.iter().zip(&f).map(|(w, f)| w * f).sum();
    let eg: f64 = w.iter().zip(&g).map(|(w, g)| w * g).sum();
    let efg: f64 = w.iter().zip(f.iter().zip(&g)).map(|(w, (f, g))| w * f * g).sum();
    let cov = (efg - ef * eg).abs();
    let (a, big_a, b, big_b) = bounds;
    let gruss = (big_a - a) * (big_b - b) / 4.0;
    let sup_f = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sup_g = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = 1.0 + efg.abs() + (ef * eg).abs();
    let slack = GRUSS_SLACK * scale;
    (cov - gruss - slack).max(cov - sup_f * sup_g - slack).max(0.0)
}

/// `max |A_mn|` over `fields` random smooth potentials of `modes`
/// coefficients, checked against `1 + 1e-12`.
pub fn moment_matrix_bound(fields: usize, modes: usize, seed: u64) -> Result<OracleReport> {
    let model = Model::with_default_grid(KernelSpec::onsager(modes)?, modes)?;
    let worst: Vec<f64> = (0..fields)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let radius = rng.gen_range(0.1..40.0);
            let v = SpectralField::random_smooth(&mut rng, modes, radius);
            model
                .jacobian(&v)
                .map(|j| j.moment_matrix().iter().fold(0.0f64, |m, a| m.max(a.abs())))
        })
        .collect::<Result<_>>()?;
    let max = worst.into_iter().fold(0.0, f64::max);
    Ok(OracleReport::new("moment_matrix_bound", max, fields, 1.0 + 1e-12))
}

/// Runs every oracle at desk scale with the given seed.
pub fn run_all(seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let onsager = KernelSpec::onsager(32)?;
    let mut gamma_reports = vec![gamma_oracle(&SpectralField::mode(8, 1, 1.0), &onsager, 64, 512)?];
    for _ in 0..10 {
        let r = rng.gen_range(0.5..6.0);
        let v = SpectralField::random_smooth(&mut rng, 8, r);
        gamma_reports.push(gamma_oracle(&v, &onsager, 64, 512)?);
    }
    let onsager12 = KernelSpec::onsager(12)?;
    let mut fd_reports = Vec::new();
    for _ in 0..20 {
        let r = rng.gen_range(0.5..6.0);
        let v = SpectralField::random_smooth(&mut rng, 12, r);
        fd_reports.push(fd_jacobian(&v, &onsager12, 1e-6)?);
    }
    Ok(vec![
        OracleReport::merge("gamma_oracle", &gamma_reports, GAMMA_ORACLE_BOUND),
        OracleReport::merge("fd_jacobian", &fd_reports, FD_JACOBIAN_BOUND),
        gruss_property(100_000, seed),
        moment_matrix_bound(1000, 8, seed)?,
    ])
}
