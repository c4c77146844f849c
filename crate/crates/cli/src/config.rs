//! Run configuration: a TOML file with one section per concern, overridable
//! from the command line.

use std::path::{Path, PathBuf};

use onsager_core::{spectral::default_grid, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum KernelKind {
    Onsager,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    #[serde(rename = "type")]
    pub kind: KernelKind,
    /// Truncation order for the Onsager kernel; defaults to twice the mode count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: KernelKind::Onsager,
            order: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    pub modes: usize,
    /// Quadrature size; defaults to `max(256, 8 * modes)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self { modes: 32, grid: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub lambda: f64,
    pub starts: usize,
    pub radius: f64,
    pub seed: u64,
    pub tol: f64,
    pub cluster_radius: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            starts: 50,
            radius: 5.0,
            seed: 0,
            tol: 1e-12,
            cluster_radius: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagramConfig {
    pub lambda_max: f64,
    pub branches: usize,
    pub ds: f64,
    pub t0: f64,
    pub tol: f64,
    pub max_steps: usize,
    pub trivial_samples: usize,
    /// Branches born beyond `lambda_max` are still traced this far past onset.
    pub onset_window: f64,
}

impl Default for DiagramConfig {
    fn default() -> Self {
        Self {
            lambda_max: 9.0,
            branches: 2,
            ds: 0.05,
            t0: 0.02,
            tol: 1e-10,
            max_steps: 2000,
            trivial_samples: 200,
            onset_window: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 2024 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Falls back to `ONSAGER_OUT_DIR`, then `out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub kernel: KernelConfig,
    pub discretization: DiscretizationConfig,
    pub solve: SolveConfig,
    pub diagram: DiagramConfig,
    pub verify: VerifyConfig,
    pub energy: EnergyConfig,
}

fn invalid(key: &str, why: &str) -> CliError {
    CliError::Config(format!("invalid value for `{key}`: {why}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> usize {
        self.discretization
            .grid
            .unwrap_or_else(|| default_grid(self.discretization.modes))
    }

    /// Checks every numeric field and reports the first offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.discretization;
        if d.modes == 0 {
            return Err(invalid("discretization.modes", "must be positive"));
        }
        if let Some(n) = d.grid {
            if n % 2 != 0 || n < 8 * d.modes {
                return Err(invalid("discretization.grid", "must be even and at least 8 * modes"));
            }
        }
        match self.kernel.kind {
            KernelKind::Onsager => {
                if self.kernel.order == Some(0) {
                    return Err(invalid("kernel.order", "must be positive"));
                }
            }
            KernelKind::File => {
                if self.kernel.file.is_none() {
                    return Err(invalid("kernel.file", "required when kernel.type = \"file\""));
                }
            }
        }
        let s = &self.solve;
        if !s.lambda.is_finite() || s.lambda < 0.0 {
            return Err(invalid("solve.lambda", "must be finite and non-negative"));
        }
        if s.starts == 0 {
            return Err(invalid("solve.starts", "must be at least 1"));
        }
        if !(s.radius > 0.0 && s.radius.is_finite()) {
            return Err(invalid("solve.radius", "must be positive"));
        }
        if !(s.tol > 0.0) {
            return Err(invalid("solve.tol", "must be positive"));
        }
        if !(s.cluster_radius > 0.0) {
            return Err(invalid("solve.cluster_radius", "must be positive"));
        }
        let g = &self.diagram;
        if !(g.lambda_max > 0.0 && g.lambda_max.is_finite()) {
            return Err(invalid("diagram.lambda_max", "must be positive"));
        }
        if !(g.ds > 0.0) {
            return Err(invalid("diagram.ds", "must be positive"));
        }
        if !(g.t0 > 0.0 && g.t0 <= 0.1) {
            return Err(invalid("diagram.t0", "must lie in (0, 0.1]"));
        }
        if !(g.tol > 0.0) {
            return Err(invalid("diagram.tol", "must be positive"));
        }
        if g.max_steps == 0 {
            return Err(invalid("diagram.max_steps", "must be positive"));
        }
        if g.trivial_samples < 2 {
            return Err(invalid("diagram.trivial_samples", "must be at least 2"));
        }
        if !(g.onset_window >= 0.0) {
            return Err(invalid("diagram.onset_window", "must be non-negative"));
        }
        Ok(())
    }

    pub fn build_kernel(&self) -> Result<KernelSpec, CliError> {
        match self.kernel.kind {
            KernelKind::Onsager => {
                let p = self.kernel.order.unwrap_or(2 * self.discretization.modes);
                KernelSpec::onsager(p).map_err(|e| invalid("kernel.order", &e.to_string()))
            }
            KernelKind::File => {
                let path = self
                    .kernel
                    .file
                    .as_ref()
                    .ok_or_else(|| invalid("kernel.file", "missing"))?;
                KernelFile::load(path)?.into_kernel()
            }
        }
    }
}

/// Kernel description on disk: either `mean` + `coeffs`, or `samples` on a
/// uniform θ-grid over `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
    /// Symmetry tolerance for sampled kernels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl KernelFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read kernel file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("kernel file: {}", e.message())))
    }

    pub fn into_kernel(self) -> Result<KernelSpec, CliError> {
        let kernel = match (self.coeffs, self.samples) {
            (Some(coeffs), None) => {
                let mean = self.mean.unwrap_or(0.0);
                KernelSpec::from_coefficients(mean, coeffs)
                    .map_err(|e| invalid("kernel.coeffs", &e.to_string()))?
            }
            (None, Some(samples)) => {
                if self.mean.is_some() {
                    return Err(invalid("kernel.mean", "not allowed together with `samples`"));
                }
                let tol = self.tol.unwrap_or(1e-10);
                KernelSpec::from_samples(&samples, tol)
                    .map_err(|e| invalid("kernel.samples", &e.to_string()))?
                    .kernel
            }
            (Some(_), Some(_)) => {
                return Err(invalid("kernel.samples", "give either `coeffs` or `samples`, not both"))
            }
            (None, None) => return Err(invalid("kernel.coeffs", "one of `coeffs` or `samples` is required")),
        };
        Ok(match self.label {
            Some(l) => kernel.with_label(l),
            None => kernel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let text = r#"
output_dir = "results"

[kernel]
type = "onsager"
order = 40

[discretization]
modes = 20
grid = 320

[solve]
lambda = 5.0
starts = 12
seed = 7
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.discretization.modes, 20);
        assert_eq!(cfg.solve.radius, 5.0);
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("[solve]\nlamda = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
        assert!(RunConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn validation_names_the_key() {
        let mut cfg = RunConfig::default();
        cfg.discretization.grid = Some(30);
        assert!(cfg.validate().unwrap_err().to_string().contains("discretization.grid"));
        let mut cfg = RunConfig::default();
        cfg.diagram.t0 = 0.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("diagram.t0"));
        let mut cfg = RunConfig::default();
        cfg.kernel.kind = KernelKind::File;
        assert!(cfg.validate().unwrap_err().to_string().contains("kernel.file"));
    }

    #[test]
    fn kernel_file_variants() {
        let k: KernelFile = toml::from_str("mean = 0.1666\ncoeffs = [0.5]\n").unwrap();
        assert_eq!(k.into_kernel().unwrap().coeffs(), &[0.5]);
        let samples: Vec<f64> = (0..16).map(|_| 1.0).collect();
        let k = KernelFile {
            label: None,
            mean: None,
            coeffs: None,
            samples: Some(samples),
            tol: None,
        };
        assert_eq!(k.into_kernel().unwrap().mean(), 1.0);
        let both: KernelFile = toml::from_str("coeffs = [1.0]\nsamples = [1.0, 1.0, 1.0, 1.0]\n").unwrap();
        assert!(both.into_kernel().is_err());
        assert!(toml::from_str::<KernelFile>("coefs = [1.0]\n").is_err());
    }
}
