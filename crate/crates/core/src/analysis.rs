//! Linear stability of equilibria, density recovery and the free energy.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma_map::{JacobianMatrix, Model};
use crate::kernel::KernelSpec;
use crate::spectral::{grid_spacing, synthesize, SpectralField};

/// Eigenvalues within this distance of zero are reported as marginal.
pub const STABILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Marginal,
    Unstable,
}

impl Stability {
    pub fn from_min_eig(min_eig: f64) -> Self {
        if min_eig > STABILITY_TOL {
            Stability::Stable
        } else if min_eig < -STABILITY_TOL {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenBasis {
    Symmetrized,
    General,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Eigenvalues of `I - λJ(V)`, ascending (real parts for the general path).
    pub eigenvalues: Vec<f64>,
    pub min_eig: f64,
    pub stability: Stability,
    pub basis: EigenBasis,
    /// Largest imaginary part seen on the general path.
    pub max_imag: f64,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }
}

/// Spectrum of `I - λ DΓ(V)` within the potential space.
pub fn spectrum(model: &Model, v: &SpectralField, lambda: f64) -> Result<StabilityReport> {
    let j = model.jacobian(v)?;
    Ok(spectrum_of(&j, lambda))
}

pub fn spectrum_of(j: &JacobianMatrix, lambda: f64) -> StabilityReport {
    match j.symmetrized() {
        Some(s) => {
            let n = s.nrows();
            let op = DMatrix::identity(n, n) - s * lambda;
            let mut eigenvalues: Vec<f64> = op.symmetric_eigenvalues().iter().copied().collect();
            eigenvalues.sort_by(f64::total_cmp);
            finish(eigenvalues, EigenBasis::Symmetrized, 0.0)
        }
        None => general_spectrum_of(j, lambda),
    }
}

/// Spectrum through the dense nonsymmetric eigensolver, regardless of sign
/// structure.
pub fn general_spectrum_of(j: &JacobianMatrix, lambda: f64) -> StabilityReport {
    let n = j.modes();
    let op = DMatrix::identity(n, n) - j.matrix() * lambda;
    let eig = op.complex_eigenvalues();
    let max_imag = eig.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    let mut eigenvalues: Vec<f64> = eig.iter().map(|z| z.re).collect();
    eigenvalues.sort_by(f64::total_cmp);
    finish(eigenvalues, EigenBasis::General, max_imag)
}

fn finish(eigenvalues: Vec<f64>, basis: EigenBasis, max_imag: f64) -> StabilityReport {
    let min_eig = eigenvalues.first().copied().unwrap_or(f64::INFINITY);
    StabilityReport {
        stability: Stability::from_min_eig(min_eig),
        eigenvalues,
        min_eig,
        basis,
        max_imag,
    }
}

/// Orientation density on the uniform grid.
#[derive(Debug, Clone)]
pub struct DensityField {
    values: Vec<f64>,
    lambda: f64,
    potential: SpectralField,
}

impl DensityField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn potential(&self) -> &SpectralField {
        &self.potential
    }

    pub fn grid(&self) -> usize {
        self.values.len()
    }

    /// Builds a density from raw grid values, normalizing to unit mass.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid {
                n,
                reason: "density grid must be even and at least 4",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density values"));
        }
        if values.iter().any(|v| *v <= 0.0) {
            return Err(Error::NonPositiveDensity);
        }
        let mass = values.iter().sum::<f64>() * grid_spacing(n);
        Ok(Self {
            values: values.iter().map(|v| v / mass).collect(),
            lambda: f64::NAN,
            potential: SpectralField::zeros(0),
        })
    }

    /// Deviations from the admissible set: `(min value, |mass - 1|,
    /// max |f(θ) - f(θ+π)|, max |f(θ) - f(-θ)|)`.
    pub fn constraint_errors(&self) -> (f64, f64, f64, f64) {
        let n = self.grid();
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let mass = self.values.iter().sum::<f64>() * grid_spacing(n);
        let period = (0..n)
            .map(|j| (self.values[j] - self.values[(j + n / 2) % n]).abs())
            .fold(0.0, f64::max);
        let even = (0..n)
            .map(|j| (self.values[j] - self.values[(n - j) % n]).abs())
            .fold(0.0, f64::max);
        (min, (mass - 1.0).abs(), period, even)
    }
}

/// `f = e^{-V} / ∫e^{-V}` on the grid. The constant `λK̄` that separates `V`
/// from the full mean-field potential cancels in the quotient.
pub fn recover_density(v: &SpectralField, lambda: f64, n: usize) -> Result<DensityField> {
    let grid = synthesize(v, n)?;
    let base = grid.values().iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = grid.values().iter().map(|x| (-(x - base)).exp()).collect();
    let z = raw.iter().sum::<f64>() * grid_spacing(n);
    Ok(DensityField {
        values: raw.iter().map(|r| r / z).collect(),
        lambda,
        potential: v.clone(),
    })
}

/// Mean-field potential `U(f)(θ_j) = λ Σ_l K(θ_j - θ_l) f_l Δθ` using the full
/// kernel, mean included.
pub fn mean_field_potential(f: &DensityField, lambda: f64, kernel: &KernelSpec) -> Vec<f64> {
    let n = f.grid();
    let h = grid_spacing(n);
    let table: Vec<f64> = (0..n)
        .map(|i| kernel.eval(2.0 * std::f64::consts::PI * i as f64 / n as f64))
        .collect();
    (0..n)
        .map(|j| {
            lambda
                * h
                * f.values
                    .iter()
                    .enumerate()
                    .map(|(l, fl)| table[(j + n - l) % n] * fl)
                    .sum::<f64>()
        })
        .collect()
}

/// Sup-norm distance between `f` and `e^{-U(f)}/∫e^{-U(f)}`.
pub fn euler_lagrange_residual(f: &DensityField, lambda: f64, kernel: &KernelSpec) -> f64 {
    let n = f.grid();
    let u = mean_field_potential(f, lambda, kernel);
    let base = u.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = u.iter().map(|x| (-(x - base)).exp()).collect();
    let z = raw.iter().sum::<f64>() * grid_spacing(n);
    raw.iter()
        .zip(&f.values)
        .map(|(r, fv)| (r / z - fv).abs())
        .fold(0.0, f64::max)
}

/// `E(f) = ∫ f log f + ½ ∫ U(f) f` by trapezoidal quadrature.
pub fn free_energy(f: &DensityField, lambda: f64, kernel: &KernelSpec) -> Result<f64> {
    if f.values.iter().any(|v| *v <= 0.0) {
        return Err(Error::NonPositiveDensity);
    }
    let h = grid_spacing(f.grid());
    let u = mean_field_potential(f, lambda, kernel);
    let entropy: f64 = f.values.iter().map(|v| v * v.ln()).sum::<f64>() * h;
    let interaction: f64 = 0.5 * u.iter().zip(&f.values).map(|(a, b)| a * b).sum::<f64>() * h;
    Ok(entropy + interaction)
}
