//! Spectral solver and bifurcation analysis for the stationary two-dimensional
//! Doi-Onsager model.
//!
//! Orientation potentials live in the space of even, pi-periodic, zero-mean
//! functions on the circle and are stored as cosine coefficients
//! `V(theta) = sum_m v_m cos(2 m theta)`. Equilibria solve `V = lambda * Gamma(V)`
//! where `Gamma` convolves the fluctuating part of the interaction kernel
//! against the Gibbs measure `exp(-V)`.

pub mod analysis;
pub mod continuation;
pub mod error;
pub mod gamma_map;
pub mod kernel;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use analysis::{
    euler_lagrange_residual, free_energy, recover_density, spectrum, DensityField, Stability,
    StabilityReport,
};
pub use continuation::{
    asymptotic_predictor, continue_branch, switch_branch, trivial_spectrum_sweep,
    AsymptoticPrediction, Branch, BranchMode, BranchPoint, ContinuationSettings, Termination,
};
pub use error::{Error, Result};
pub use gamma_map::{gamma, jacobian, residual, JacobianMatrix, Model};
pub use kernel::{BifurcationPoint, Criticality, KernelSpec};
pub use solver::{
    multistart, newton, picard, SolutionSet, SolveMethod, SolveOptions, SolveReport, SolveStatus,
};
pub use spectral::{analyze, gibbs_measure, h1_inner, synthesize, GibbsMeasure, GridFunction, SpectralField};
pub use verify::OracleReport;
