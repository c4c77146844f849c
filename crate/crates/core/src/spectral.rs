//! Cosine-series representation of the potential space and the Gibbs measures
//! built from it.
//!
//! Fields are stored as plain coefficients of `cos(2mθ)`, `m = 1..M`. The
//! H¹-orthonormal basis `φ_m = cos(2mθ)/√((4m²+1)π)` only appears where
//! amplitudes or spectra are reported; see [`orthonormal_scale`].

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::cos_table;

/// An element of the potential space: `V(θ) = Σ v_m cos(2mθ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("field coefficients"));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(modes: usize) -> Self {
        Self {
            coeffs: vec![0.0; modes],
        }
    }

    /// `amplitude · cos(2mθ)` embedded in `modes` coefficients.
    pub fn mode(modes: usize, m: usize, amplitude: f64) -> Self {
        assert!(m >= 1 && m <= modes, "mode {m} outside 1..={modes}");
        let mut f = Self::zeros(modes);
        f.coeffs[m - 1] = amplitude;
        f
    }

    /// A random field with a smooth spectral envelope: coefficients
    /// proportional to `r_m / m²` with `r_m` uniform in `[-1, 1]`, rescaled to
    /// H¹ norm `radius`.
    pub fn random_smooth<R: Rng + ?Sized>(rng: &mut R, modes: usize, radius: f64) -> Self {
        let raw: Vec<f64> = (1..=modes)
            .map(|m| rng.gen_range(-1.0..=1.0) / (m * m) as f64)
            .collect();
        let field = Self { coeffs: raw };
        let norm = field.h1_norm();
        if norm == 0.0 {
            return field;
        }
        field.scaled(radius / norm)
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `v_m` for `m >= 1`; zero outside the stored range.
    pub fn coeff(&self, m: usize) -> f64 {
        if m == 0 {
            return 0.0;
        }
        self.coeffs.get(m - 1).copied().unwrap_or(0.0)
    }

    /// Zero-padded or truncated copy with `modes` coefficients.
    pub fn resized(&self, modes: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(modes, 0.0);
        Self { coeffs }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self + s·other`, zero-padding the shorter operand.
    pub fn add_scaled(&self, s: f64, other: &SpectralField) -> Self {
        let n = self.modes().max(other.modes());
        Self {
            coeffs: (1..=n).map(|m| self.coeff(m) + s * other.coeff(m)).collect(),
        }
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn h1_norm(&self) -> f64 {
        h1_inner(self, self).sqrt()
    }

    /// Quarter rotation `θ ↦ θ + π/2`, which maps `v_m ↦ (-1)^m v_m`.
    pub fn quarter_rotated(&self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| if (i + 1) % 2 == 1 { -c } else { *c })
                .collect(),
        }
    }

    /// H¹ projection onto the orthonormal basis element `φ_m`.
    pub fn amplitude(&self, m: usize) -> f64 {
        self.coeff(m) / orthonormal_scale(m)
    }

    /// Pointwise evaluation by direct summation.
    pub fn eval(&self, theta: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * (2.0 * (i + 1) as f64 * theta).cos())
            .sum()
    }
}

/// Squared H¹([0, 2π]) norm of `cos(2mθ)`: `(1 + 4m²)π`.
pub fn h1_weight(m: usize) -> f64 {
    (1.0 + 4.0 * (m * m) as f64) * PI
}

/// `c_m = 1/√((4m²+1)π)`, so that `φ_m = c_m cos(2mθ)` has unit H¹ norm.
pub fn orthonormal_scale(m: usize) -> f64 {
    1.0 / h1_weight(m).sqrt()
}

/// H¹ inner product of two cosine series, zero-padding the shorter one.
pub fn h1_inner(u: &SpectralField, v: &SpectralField) -> f64 {
    u.coeffs
        .iter()
        .zip(&v.coeffs)
        .enumerate()
        .map(|(i, (a, b))| h1_weight(i + 1) * a * b)
        .sum()
}

/// Default quadrature size for `modes` coefficients.
pub fn default_grid(modes: usize) -> usize {
    256.max(8 * modes)
}

/// Smallest grid resolving fields of `modes` coefficients (frequency `2M`
/// at or below Nyquist).
pub fn field_grid_floor(modes: usize) -> usize {
    (4 * modes).max(4)
}

/// Smallest grid resolving moments up to index `2M` (frequency `4M` at or
/// below Nyquist), as required by the Jacobian.
pub fn moment_grid_floor(modes: usize) -> usize {
    (8 * modes).max(4)
}

pub(crate) fn check_grid(n: usize, min: usize, modes: usize) -> Result<()> {
    if n % 2 != 0 {
        return Err(Error::InvalidGrid {
            n,
            reason: "grid size must be even",
        });
    }
    if n < min {
        return Err(Error::GridTooSmall { n, min, modes });
    }
    Ok(())
}

/// Values on the uniform grid `θ_j = 2πj/N`, `j = 0..N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values.len() % 2 != 0 {
            return Err(Error::InvalidGrid {
                n: values.len(),
                reason: "grid size must be even and positive",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        Ok(Self { values })
    }

    /// Samples `f` on the uniform grid of size `n`.
    pub fn sample(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|j| f(grid_angle(j, n))).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trapezoidal approximation of `∫₀^{2π} g dθ`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * grid_spacing(self.len())
    }
}

pub fn grid_angle(j: usize, n: usize) -> f64 {
    2.0 * PI * j as f64 / n as f64
}

pub fn grid_spacing(n: usize) -> f64 {
    2.0 * PI / n as f64
}

/// Evaluates a field on the uniform grid of size `n`.
pub fn synthesize(field: &SpectralField, n: usize) -> Result<GridFunction> {
    check_grid(n, field_grid_floor(field.modes()), field.modes())?;
    let table = cos_table(n);
    Ok(GridFunction {
        values: synthesize_with(field, &table),
    })
}

fn synthesize_with(field: &SpectralField, table: &[f64]) -> Vec<f64> {
    let n = table.len();
    (0..n)
        .map(|j| {
            field
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * table[(2 * (i + 1) * j) % n])
                .sum()
        })
        .collect()
}

/// Coefficients recovered from grid samples, with the sup-norm of the
/// content that does not belong to the potential space or lies above the
/// retained frequency band.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub field: SpectralField,
    pub residual: f64,
}

/// Discrete cosine projection `v_m = (2/N) Σ_j g_j cos(2mθ_j)`.
pub fn analyze(g: &GridFunction, modes: usize, tol: f64) -> Result<Analysis> {
    let n = g.len();
    check_grid(n, field_grid_floor(modes), modes)?;
    let table = cos_table(n);
    let coeffs: Vec<f64> = (1..=modes)
        .map(|m| {
            let dot: f64 = g
                .values
                .iter()
                .enumerate()
                .map(|(j, x)| x * table[(2 * m * j) % n])
                .sum();
            let norm = if 2 * m == n / 2 { n as f64 } else { n as f64 / 2.0 };
            dot / norm
        })
        .collect();
    let field = SpectralField { coeffs };
    let recon = synthesize_with(&field, &table);
    let residual = g
        .values
        .iter()
        .zip(&recon)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > tol {
        return Err(Error::SymmetryViolation { residual, tol });
    }
    Ok(Analysis { field, residual })
}

/// The probability measure `dμ_V ∝ e^{-V} dθ` on the uniform grid, with its
/// cosine moments `M_k = ∫cos(2kθ) dμ_V`.
#[derive(Debug, Clone)]
pub struct GibbsMeasure {
    weights: Vec<f64>,
    moments: Vec<f64>,
    sin_residual: f64,
}

impl GibbsMeasure {
    /// Builds the measure from potential values on a grid, computing moments
    /// `M_0..=M_{max_moment}`. The potential is shifted by its maximum before
    /// exponentiation; the shift cancels in the normalization.
    pub fn from_potential(potential: &[f64], max_moment: usize) -> Result<Self> {
        let n = potential.len();
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidGrid {
                n,
                reason: "grid size must be even and positive",
            });
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential values"));
        }
        let table = cos_table(n);
        Ok(Self::build(potential, max_moment, &table))
    }

    fn build(potential: &[f64], max_moment: usize, table: &[f64]) -> Self {
        let n = potential.len();
        // Shifting by the minimum keeps every exponent non-positive.
        let base = potential.iter().copied().fold(f64::INFINITY, f64::min);
        let mut weights: Vec<f64> = potential.iter().map(|v| (-(v - base)).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let moments = (0..=max_moment)
            .map(|k| {
                if k == 0 {
                    return 1.0;
                }
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * table[(2 * k * j) % n])
                    .sum()
            })
            .collect();
        // Sine moments vanish for even potentials; record the largest.
        let quarter = n / 4;
        let sin_residual = (1..=max_moment.min(n / 2))
            .map(|k| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| {
                        // sin(x) = cos(x - π/2); the shift is exact on grids divisible by 4.
                        if n % 4 == 0 {
                            w * table[(2 * k * j + 3 * quarter) % n]
                        } else {
                            w * (2.0 * k as f64 * grid_angle(j, n)).sin()
                        }
                    })
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max);
        Self {
            weights,
            moments,
            sin_residual,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `M_0..=M_kmax`.
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// `M_k`; panics beyond the cached range.
    pub fn moment(&self, k: usize) -> f64 {
        self.moments[k]
    }

    pub fn max_moment(&self) -> usize {
        self.moments.len() - 1
    }

    /// Largest `|∫ sin(2kθ) dμ_V|` over the cached range.
    pub fn sin_residual(&self) -> f64 {
        self.sin_residual
    }

    pub fn grid_size(&self) -> usize {
        self.weights.len()
    }
}

/// Gibbs measure of `V` with moments cached up to index `2M`.
pub fn gibbs_measure(v: &SpectralField, n: usize) -> Result<GibbsMeasure> {
    check_grid(n, moment_grid_floor(v.modes()), v.modes())?;
    Ok(gibbs_with_moments(v, n, 2 * v.modes()))
}

/// Grid-check-free variant used internally once the grid is validated.
pub(crate) fn gibbs_with_moments(v: &SpectralField, n: usize, max_moment: usize) -> GibbsMeasure {
    let table = cos_table(n);
    let potential = synthesize_with(v, &table);
    GibbsMeasure::build(&potential, max_moment, &table)
}
