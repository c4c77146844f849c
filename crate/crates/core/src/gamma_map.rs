//! The self-consistency map `Γ` and its derivative in coefficient space.
//!
//! Expanding the convolution of `K̃` against the normalized Gibbs measure and
//! using evenness of `μ_V` gives the coefficient identity
//! `[Γ(V)]_m = k_m M_m(V)`. Differentiating the moments,
//! `∂M_m/∂v_n = M_m M_n - ½(M_{m+n} + M_{|m-n|})`, so that
//! `DΓ(V)_{mn} = k_m A_mn` with `A` symmetric.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::spectral::{
    check_grid, default_grid, gibbs_with_moments, moment_grid_floor, orthonormal_scale,
    GibbsMeasure, SpectralField,
};

/// A kernel together with a Galerkin truncation: `modes` cosine coefficients
/// evaluated on a uniform grid of `grid` points.
#[derive(Debug, Clone)]
pub struct Model {
    kernel: KernelSpec,
    modes: usize,
    grid: usize,
}

impl Model {
    pub fn new(kernel: KernelSpec, modes: usize, grid: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidArgument("mode count must be positive".into()));
        }
        check_grid(grid, moment_grid_floor(modes), modes)?;
        Ok(Self { kernel, modes, grid })
    }

    /// Uses the default grid for `modes`.
    pub fn with_default_grid(kernel: KernelSpec, modes: usize) -> Result<Self> {
        Self::new(kernel, modes, default_grid(modes))
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Same kernel and modes on a different grid.
    pub fn regridded(&self, grid: usize) -> Result<Self> {
        Self::new(self.kernel.clone(), self.modes, grid)
    }

    fn check_field(&self, v: &SpectralField) -> Result<()> {
        if v.modes() != self.modes {
            return Err(Error::ModeMismatch {
                expected: self.modes,
                got: v.modes(),
            });
        }
        Ok(())
    }

    pub fn gibbs(&self, v: &SpectralField) -> Result<GibbsMeasure> {
        self.check_field(v)?;
        Ok(gibbs_with_moments(v, self.grid, 2 * self.modes))
    }

    /// `Γ(V)` truncated to the model's modes.
    pub fn gamma(&self, v: &SpectralField) -> Result<SpectralField> {
        self.check_field(v)?;
        let g = gibbs_with_moments(v, self.grid, self.modes);
        Ok(self.gamma_from(&g))
    }

    fn gamma_from(&self, g: &GibbsMeasure) -> SpectralField {
        let coeffs = (1..=self.modes)
            .map(|m| self.kernel.coeff(m) * g.moment(m))
            .collect();
        SpectralField::new(coeffs).expect("moments are finite")
    }

    /// `V - λΓ(V)`.
    pub fn residual(&self, v: &SpectralField, lambda: f64) -> Result<SpectralField> {
        Ok(v.add_scaled(-lambda, &self.gamma(v)?))
    }

    pub fn jacobian(&self, v: &SpectralField) -> Result<JacobianMatrix> {
        let g = self.gibbs(v)?;
        Ok(self.jacobian_from(&g))
    }

    /// Residual, `Γ(V)` and Jacobian from a single moment evaluation.
    pub fn linearize(&self, v: &SpectralField, lambda: f64) -> Result<Linearization> {
        let g = self.gibbs(v)?;
        let gamma = self.gamma_from(&g);
        let residual = v.add_scaled(-lambda, &gamma);
        let jacobian = self.jacobian_from(&g);
        Ok(Linearization {
            residual,
            gamma,
            jacobian,
        })
    }

    fn jacobian_from(&self, g: &GibbsMeasure) -> JacobianMatrix {
        JacobianMatrix::from_moments(&self.kernel, self.modes, g.moments())
    }
}

#[derive(Debug, Clone)]
pub struct Linearization {
    pub residual: SpectralField,
    pub gamma: SpectralField,
    pub jacobian: JacobianMatrix,
}

/// `DΓ(V)` in the raw cosine basis, `J_mn = k_m A_mn`.
#[derive(Debug, Clone)]
pub struct JacobianMatrix {
    j: DMatrix<f64>,
    a: DMatrix<f64>,
    k: Vec<f64>,
}

impl JacobianMatrix {
    /// Assembles `A_mn = M_m M_n - ½(M_{m+n} + M_{|m-n|})` from moments
    /// `M_0..=M_{2M}` (`M_0 = 1`).
    pub fn from_moments(kernel: &KernelSpec, modes: usize, moments: &[f64]) -> Self {
        assert!(moments.len() > 2 * modes, "need moments up to 2M");
        let a = DMatrix::from_fn(modes, modes, |i, l| {
            let (m, n) = (i + 1, l + 1);
            moments[m] * moments[n] - 0.5 * (moments[m + n] + moments[m.abs_diff(n)])
        });
        let k: Vec<f64> = (1..=modes).map(|m| kernel.coeff(m)).collect();
        let j = DMatrix::from_fn(modes, modes, |i, l| k[i] * a[(i, l)]);
        Self { j, a, k }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.j
    }

    /// The symmetric moment matrix `A`.
    pub fn moment_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn modes(&self) -> usize {
        self.k.len()
    }

    /// Sign `s` such that `s·k_m >= 0` for all `m`, if one exists.
    pub fn uniform_sign(&self) -> Option<f64> {
        if self.k.iter().all(|k| *k <= 0.0) {
            Some(-1.0)
        } else if self.k.iter().all(|k| *k >= 0.0) {
            Some(1.0)
        } else {
            None
        }
    }

    /// `S = s·D A D` with `D = diag(√|k_m|)`, which shares the spectrum of
    /// `J = diag(k) A` when the coefficients have a single sign `s`.
    pub fn symmetrized(&self) -> Option<DMatrix<f64>> {
        let s = self.uniform_sign()?;
        let d: Vec<f64> = self.k.iter().map(|k| k.abs().sqrt()).collect();
        let n = self.modes();
        Some(DMatrix::from_fn(n, n, |i, l| s * d[i] * d[l] * self.a[(i, l)]))
    }

    /// `J` expressed in the H¹-orthonormal basis `φ_n`:
    /// entries `k_m A_mn √(4m²+1)/√(4n²+1)`.
    pub fn orthonormal(&self) -> DMatrix<f64> {
        let n = self.modes();
        DMatrix::from_fn(n, n, |i, l| {
            self.j[(i, l)] * orthonormal_scale(l + 1) / orthonormal_scale(i + 1)
        })
    }

    /// `J·u`.
    pub fn apply(&self, u: &SpectralField) -> SpectralField {
        let x = nalgebra::DVector::from_column_slice(&u.resized(self.modes()).into_coeffs());
        SpectralField::new((&self.j * x).as_slice().to_vec()).expect("finite product")
    }
}

/// `Γ(V)` for a field of any size, on grid `n`. Output has `V`'s mode count.
pub fn gamma(v: &SpectralField, kernel: &KernelSpec, n: usize) -> Result<SpectralField> {
    Model::new(kernel.clone(), v.modes().max(1), n)?.gamma(&v.resized(v.modes().max(1)))
        .map(|g| g.resized(v.modes()))
}

/// `V - λΓ(V)` on the default grid.
pub fn residual(v: &SpectralField, lambda: f64, kernel: &KernelSpec) -> Result<SpectralField> {
    let modes = v.modes().max(1);
    let r = Model::with_default_grid(kernel.clone(), modes)?.residual(&v.resized(modes), lambda)?;
    Ok(r.resized(v.modes()))
}

/// `DΓ(V)` truncated to `modes` on grid `n`.
pub fn jacobian(v: &SpectralField, kernel: &KernelSpec, modes: usize, n: usize) -> Result<JacobianMatrix> {
    Model::new(kernel.clone(), modes, n)?.jacobian(&v.resized(modes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{grid_angle, h1_inner};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn onsager_model(modes: usize) -> Model {
        Model::with_default_grid(KernelSpec::onsager(modes).unwrap(), modes).unwrap()
    }

    #[test]
    fn gamma_of_zero_is_zero() {
        for kernel in [
            KernelSpec::onsager(8).unwrap(),
            KernelSpec::maier_saupe(),
            KernelSpec::from_coefficients(0.2, vec![0.3, -0.7, 0.1]).unwrap(),
        ] {
            let g = gamma(&SpectralField::zeros(8), &kernel, 256).unwrap();
            assert!(g.coeffs().iter().all(|c| c.abs() < 1e-16));
        }
    }

    #[test]
    fn gamma_linear_response() {
        let t = 1e-6;
        let k = KernelSpec::onsager(8).unwrap();
        let g = gamma(&SpectralField::mode(8, 1, t), &k, 256).unwrap();
        assert_relative_eq!(g.coeff(1), 2.0 / (3.0 * PI) * t, max_relative = 1e-10);
        assert_relative_eq!(g.coeff(1), -k.coeff(1) * t / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn residual_trivial_cases() {
        let k = KernelSpec::onsager(6).unwrap();
        let r = residual(&SpectralField::zeros(6), 3.3, &k).unwrap();
        assert!(r.coeffs().iter().all(|c| c.abs() < 1e-15));
        let v = SpectralField::new(vec![0.4, -0.1, 0.0, 0.2, 0.0, 0.01]).unwrap();
        assert_eq!(residual(&v, 0.0, &k).unwrap(), v);
    }

    #[test]
    fn jacobian_at_zero_is_diagonal() {
        let k = KernelSpec::onsager(10).unwrap();
        let j = jacobian(&SpectralField::zeros(10), &k, 10, 256).unwrap();
        for m in 0..10 {
            for n in 0..10 {
                let expect = if m == n { -k.coeff(m + 1) / 2.0 } else { 0.0 };
                assert!((j.matrix()[(m, n)] - expect).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn jacobian_entries_bounded_by_kernel() {
        let model = onsager_model(12);
        let kmax = model.kernel().coeffs().iter().fold(0.0f64, |a, k| a.max(k.abs()));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let r = rng.gen_range(0.5..30.0);
            let v = SpectralField::random_smooth(&mut rng, 12, r);
            let j = model.jacobian(&v).unwrap();
            for i in 0..12 {
                for l in 0..12 {
                    let a = j.moment_matrix()[(i, l)];
                    assert!(a.abs() <= 1.0 + 1e-12);
                    assert_eq!(a, j.moment_matrix()[(l, i)]);
                    assert!(j.matrix()[(i, l)].abs() <= model.kernel().coeff(i + 1).abs() * (1.0 + 1e-12));
                    assert!(j.matrix()[(i, l)].abs() <= kmax * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn moment_formula_matches_direct_quadrature() {
        // A_mn = ∫cos(2mθ)dμ ∫cos(2nθ)dμ - ∫cos(2mθ)cos(2nθ)dμ, directly.
        let model = onsager_model(6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let v = SpectralField::random_smooth(&mut rng, 6, 4.0);
            let g = model.gibbs(&v).unwrap();
            let j = model.jacobian(&v).unwrap();
            let n = model.grid();
            let c = |m: usize, jj: usize| (2.0 * m as f64 * grid_angle(jj, n)).cos();
            for m in 1..=6 {
                for l in 1..=6 {
                    let mut em = 0.0;
                    let mut el = 0.0;
                    let mut eml = 0.0;
                    for (jj, w) in g.weights().iter().enumerate() {
                        em += w * c(m, jj);
                        el += w * c(l, jj);
                        eml += w * c(m, jj) * c(l, jj);
                    }
                    let direct = em * el - eml;
                    assert!((direct - j.moment_matrix()[(m - 1, l - 1)]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn jacobian_directional_derivative() {
        let model = onsager_model(8);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = SpectralField::random_smooth(&mut rng, 8, 3.0);
        let u = SpectralField::random_smooth(&mut rng, 8, 1.0);
        let eps = 1e-6;
        let plus = model.gamma(&v.add_scaled(eps, &u)).unwrap();
        let minus = model.gamma(&v.add_scaled(-eps, &u)).unwrap();
        let fd = plus.sub(&minus).scaled(0.5 / eps);
        let ju = model.jacobian(&v).unwrap().apply(&u);
        let err = fd.sub(&ju).h1_norm() / ju.h1_norm();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn spectra_agree_across_bases() {
        let model = onsager_model(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = SpectralField::random_smooth(&mut rng, 8, 6.0);
        let j = model.jacobian(&v).unwrap();
        let sym = j.symmetrized().unwrap();
        let mut s: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        let mut raw: Vec<f64> = j.matrix().complex_eigenvalues().iter().map(|z| {
            assert!(z.im.abs() < 1e-10);
            z.re
        }).collect();
        let mut orth: Vec<f64> = j.orthonormal().complex_eigenvalues().iter().map(|z| z.re).collect();
        s.sort_by(f64::total_cmp);
        raw.sort_by(f64::total_cmp);
        orth.sort_by(f64::total_cmp);
        for i in 0..8 {
            assert!((s[i] - raw[i]).abs() < 1e-10);
            assert!((orth[i] - raw[i]).abs() < 1e-10);
        }
        // Diagonal of the orthonormal form agrees with J's diagonal.
        for i in 0..8 {
            assert_relative_eq!(j.orthonormal()[(i, i)], j.matrix()[(i, i)]);
        }
    }

    #[test]
    fn orthonormal_form_is_similarity() {
        // ⟨φ_m, DΓ φ_n⟩ computed from the raw matrix by change of basis.
        let model = onsager_model(5);
        let v = SpectralField::new(vec![0.7, -0.3, 0.2, 0.05, -0.01]).unwrap();
        let j = model.jacobian(&v).unwrap();
        for n in 1..=5 {
            let phi_n = SpectralField::mode(5, n, orthonormal_scale(n));
            let image = j.apply(&phi_n);
            for m in 1..=5 {
                let phi_m = SpectralField::mode(5, m, orthonormal_scale(m));
                let proj = h1_inner(&image, &phi_m);
                assert!((proj - j.orthonormal()[(m - 1, n - 1)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mixed_sign_kernel_has_no_symmetrization() {
        let k = KernelSpec::from_coefficients(0.0, vec![-0.5, 0.3]).unwrap();
        let j = jacobian(&SpectralField::zeros(2), &k, 2, 64).unwrap();
        assert!(j.symmetrized().is_none());
    }

    #[test]
    fn gamma_output_stays_in_space() {
        let model = onsager_model(6);
        let v = SpectralField::new(vec![1.0, 0.5, -0.3, 0.1, 0.0, 0.02]).unwrap();
        let g = model.gibbs(&v).unwrap();
        assert!(g.sin_residual() < 1e-12);
        let out = model.gamma(&v).unwrap();
        assert_eq!(out.modes(), 6);
    }

    #[test]
    fn model_rejects_mismatched_field() {
        let model = onsager_model(4);
        assert!(matches!(
            model.gamma(&SpectralField::zeros(3)),
            Err(Error::ModeMismatch { expected: 4, got: 3 })
        ));
        assert!(Model::new(KernelSpec::onsager(4).unwrap(), 4, 16).is_err());
    }
}
