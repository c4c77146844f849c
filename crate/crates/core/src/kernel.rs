//! Interaction kernels in Fourier form.
//!
//! A kernel is stored as its mean `K̄` and the cosine coefficients of its
//! fluctuating part, `K(θ) = K̄ + Σ_m k_m cos(2mθ)`. Evenness and
//! π-periodicity hold by construction of the basis.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    mean: f64,
    coeffs: Vec<f64>,
    label: String,
}

/// A pitchfork point on the trivial branch: `λ_m = -2 / k_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationPoint {
    pub mode: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Supercritical,
    Subcritical,
    Degenerate,
}

impl std::fmt::Display for Criticality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criticality::Supercritical => "supercritical",
            Criticality::Subcritical => "subcritical",
            Criticality::Degenerate => "degenerate",
        })
    }
}

/// Result of projecting a sampled kernel onto the cosine basis.
#[derive(Debug, Clone)]
pub struct SampleProjection {
    pub kernel: KernelSpec,
    /// Sup-norm of the sample content the projection discards.
    pub residual: f64,
}

/// Relative width of the band around the criticality boundaries that is
/// reported as degenerate.
const DEGENERACY_EPS: f64 = 1e-12;

impl KernelSpec {
    /// Onsager's excluded-volume kernel `|sin θ|`, truncated at `p` modes.
    pub fn onsager(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::EmptyKernel);
        }
        let coeffs = (1..=p).map(onsager_coefficient).collect();
        Ok(Self {
            mean: 2.0 / PI,
            coeffs,
            label: format!("onsager(P={p})"),
        })
    }

    /// The 2D analogue of the Maier-Saupe kernel, `cos²θ - 1/3`.
    pub fn maier_saupe() -> Self {
        Self {
            mean: 1.0 / 6.0,
            coeffs: vec![0.5],
            label: "maier-saupe".to_string(),
        }
    }

    pub fn from_coefficients(mean: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::EmptyKernel);
        }
        if !mean.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("kernel coefficients"));
        }
        Ok(Self {
            mean,
            coeffs,
            label: "custom".to_string(),
        })
    }

    /// Projects samples `K(2πj/N)` onto the cosine basis `cos(2mθ)`,
    /// `m = 1..N/4`. Samples that are not even and π-periodic leave a
    /// residual; the projection is rejected when it exceeds `tol`.
    pub fn from_samples(values: &[f64], tol: f64) -> Result<SampleProjection> {
        let n = values.len();
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid {
                n,
                reason: "kernel samples need an even count of at least 4",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel samples"));
        }
        let cos_table = cos_table(n);
        let mean = values.iter().sum::<f64>() / n as f64;
        let p = n / 4;
        let coeffs: Vec<f64> = (1..=p)
            .map(|m| {
                let dot: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(j, g)| g * cos_table[(2 * m * j) % n])
                    .sum();
                // The Nyquist mode has squared norm N instead of N/2.
                let norm = if 2 * m == n / 2 { n as f64 } else { n as f64 / 2.0 };
                dot / norm
            })
            .collect();
        let residual = values
            .iter()
            .enumerate()
            .map(|(j, g)| {
                let recon: f64 = mean
                    + coeffs
                        .iter()
                        .enumerate()
                        .map(|(i, c)| c * cos_table[(2 * (i + 1) * j) % n])
                        .sum::<f64>();
                (g - recon).abs()
            })
            .fold(0.0, f64::max);
        if residual > tol {
            return Err(Error::SymmetryViolation { residual, tol });
        }
        Ok(SampleProjection {
            kernel: Self {
                mean,
                coeffs,
                label: format!("sampled(N={n})"),
            },
            residual,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Truncation order `P`.
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `k_m` for `m >= 1`; zero beyond the stored range.
    pub fn coeff(&self, m: usize) -> f64 {
        if m == 0 {
            return 0.0;
        }
        self.coeffs.get(m - 1).copied().unwrap_or(0.0)
    }

    /// The fluctuating part `K̃(θ) = Σ k_m cos(2mθ)`.
    pub fn fluctuation(&self, theta: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, k)| k * (2.0 * (i + 1) as f64 * theta).cos())
            .sum()
    }

    /// The full kernel `K(θ) = K̄ + K̃(θ)`.
    pub fn eval(&self, theta: f64) -> f64 {
        self.mean + self.fluctuation(theta)
    }

    /// Uniqueness threshold `λ₀ = 1 / Σ|k_m|` of the truncated kernel.
    ///
    /// For a kernel truncated from an infinite series the true threshold is
    /// smaller; the gap is controlled by the neglected tail `Σ_{m>P} |k_m|`
    /// (see [`onsager_tail`] for the closed form in the Onsager case).
    pub fn lambda_zero(&self) -> Result<f64> {
        let total: f64 = self.coeffs.iter().map(|k| k.abs()).sum();
        if total == 0.0 {
            return Err(Error::UndefinedThreshold);
        }
        Ok(1.0 / total)
    }

    /// Bifurcation values `λ_m = -2/k_m` for every attractive mode, ascending.
    pub fn bifurcation_points(&self) -> Vec<BifurcationPoint> {
        let mut points: Vec<BifurcationPoint> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, k)| **k < 0.0)
            .map(|(i, k)| BifurcationPoint {
                mode: i + 1,
                lambda: -2.0 / k,
            })
            .collect();
        points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.mode.cmp(&b.mode)));
        points
    }

    /// Ratio `γ_m = k_{2m} / k_m`.
    pub fn harmonic_ratio(&self, m: usize) -> Result<f64> {
        let km = self.coeff(m);
        if m == 0 || km == 0.0 {
            return Err(Error::UndefinedMode(m));
        }
        Ok(self.coeff(2 * m) / km)
    }

    /// Direction of the pitchfork born at mode `m`, from the sign of
    /// `(2γ_m - 1)/(γ_m - 1)`.
    pub fn classify_criticality(&self, m: usize) -> Result<Criticality> {
        let gamma = self.harmonic_ratio(m)?;
        Ok(criticality_from_ratio(gamma))
    }
}

pub(crate) fn criticality_from_ratio(gamma: f64) -> Criticality {
    let num = 2.0 * gamma - 1.0;
    let den = gamma - 1.0;
    if num.abs() <= DEGENERACY_EPS || den.abs() <= DEGENERACY_EPS {
        Criticality::Degenerate
    } else if num / den > 0.0 {
        Criticality::Supercritical
    } else {
        Criticality::Subcritical
    }
}

/// `k_m = -4 / (π (4m² - 1))`, the cosine coefficients of `|sin θ|`.
pub fn onsager_coefficient(m: usize) -> f64 {
    let m = m as f64;
    -4.0 / (PI * (4.0 * m * m - 1.0))
}

/// `Σ_{m>P} |k_m|` for the Onsager kernel, which telescopes to `2/(π(2P+1))`.
pub fn onsager_tail(p: usize) -> f64 {
    2.0 / (PI * (2 * p + 1) as f64)
}

pub(crate) fn cos_table(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}
