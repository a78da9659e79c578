//! Gaussian states as (mean, covariance) pairs and the symplectic maps that act on them.
//!
//! Conventions: ħ = 1, `[q, p] = i`, vacuum covariance `I/2`, phase-space
//! ordering `(q1, p1, ..., qm, pm)`. A unitary `U` acts on moments through the
//! Heisenberg map `U† x U = S x + d`, so `mean -> S mean + d` and
//! `cov -> S cov Sᵀ`.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance on covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Lowest admissible eigenvalue of `cov + iΩ/2`.
pub const PHYSICALITY_TOL: f64 = 1e-10;
/// Tolerance on `S Ω Sᵀ = Ω`.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

/// Quadrature selected by a homodyne detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Q,
    P,
}

/// Standard symplectic form, block-diagonal `[[0, 1], [-1, 0]]` per mode.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic eigenvalues of a positive definite `2m×2m` matrix, ascending.
pub fn symplectic_spectrum(cov: &DMatrix<f64>) -> Vec<f64> {
    // eigenvalues of -(√σ Ω √σ)² are ν_k², each appearing twice
    let eig = cov.clone().symmetric_eigen();
    let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.max(0.0).sqrt()));
    let sqrt_cov = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    let a = &sqrt_cov * symplectic_form(cov.nrows() / 2) * &sqrt_cov;
    let sq = -(&a * &a);
    let sq = (&sq + sq.transpose()) * 0.5;
    let mut vals: Vec<f64> = sq.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals.into_iter().step_by(2).collect()
}

/// Smallest eigenvalue of the Hermitian matrix `cov + (i/2) Ω`.
pub fn uncertainty_min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    let modes = cov.nrows() / 2;
    let omega = symplectic_form(modes);
    let m = DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        Complex64::new(cov[(i, j)], 0.5 * omega[(i, j)])
    });
    m.symmetric_eigenvalues().min()
}

fn check_mode(mode: usize, modes: usize) -> Result<()> {
    if mode >= modes {
        return Err(Error::ModeOutOfRange { index: mode, modes });
    }
    Ok(())
}

fn check_pair(i: usize, j: usize, modes: usize) -> Result<()> {
    check_mode(i, modes)?;
    check_mode(j, modes)?;
    if i == j {
        return Err(Error::SameMode(i));
    }
    Ok(())
}

/// Affine symplectic map `x -> S x + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticTransform {
    s: DMatrix<f64>,
    d: DVector<f64>,
}

impl SymplecticTransform {
    pub fn new(s: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        if !s.is_square() || !s.nrows().is_multiple_of(2) || d.len() != s.nrows() {
            return Err(Error::Domain(format!(
                "symplectic matrix must be 2m x 2m with a matching displacement (got {}x{}, d of {})",
                s.nrows(),
                s.ncols(),
                d.len()
            )));
        }
        let t = Self { s, d };
        let deviation = t.symplectic_deviation();
        if deviation > SYMPLECTIC_TOL {
            return Err(Error::NotSymplectic { deviation });
        }
        Ok(t)
    }

    pub fn identity(modes: usize) -> Self {
        Self {
            s: DMatrix::identity(2 * modes, 2 * modes),
            d: DVector::zeros(2 * modes),
        }
    }

    pub fn modes(&self) -> usize {
        self.s.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn displacement(&self) -> &DVector<f64> {
        &self.d
    }

    /// Largest entry of `|S Ω Sᵀ - Ω|`.
    pub fn symplectic_deviation(&self) -> f64 {
        let omega = symplectic_form(self.modes());
        (&self.s * &omega * self.s.transpose() - omega).amax()
    }

    /// Single-mode squeezer: `diag(e^r, e^-r)` on `(q, p)` of `mode`, so `r > 0` squeezes `p`.
    pub fn single_squeeze(modes: usize, mode: usize, r: f64) -> Result<Self> {
        check_mode(mode, modes)?;
        let mut t = Self::identity(modes);
        t.s[(2 * mode, 2 * mode)] = r.exp();
        t.s[(2 * mode + 1, 2 * mode + 1)] = (-r).exp();
        Ok(t)
    }

    /// Two-mode squeezer: `cosh r · I` diagonal blocks, `sinh r · Z` off-diagonal blocks.
    pub fn two_mode_squeeze(modes: usize, i: usize, j: usize, r: f64) -> Result<Self> {
        check_pair(i, j, modes)?;
        let (c, s) = (r.cosh(), r.sinh());
        let mut t = Self::identity(modes);
        for (a, b) in [(i, j), (j, i)] {
            t.s[(2 * a, 2 * a)] = c;
            t.s[(2 * a + 1, 2 * a + 1)] = c;
            t.s[(2 * a, 2 * b)] = s;
            t.s[(2 * a + 1, 2 * b + 1)] = -s;
        }
        Ok(t)
    }

    /// Balanced beam splitter: `x_i' = (x_i + x_j)/√2`, `x_j' = (x_j - x_i)/√2` for `x ∈ {q, p}`.
    pub fn balanced_beam_splitter(modes: usize, i: usize, j: usize) -> Result<Self> {
        check_pair(i, j, modes)?;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut t = Self::identity(modes);
        for k in 0..2 {
            let (ri, rj) = (2 * i + k, 2 * j + k);
            t.s[(ri, ri)] = h;
            t.s[(ri, rj)] = h;
            t.s[(rj, ri)] = -h;
            t.s[(rj, rj)] = h;
        }
        Ok(t)
    }

    /// Phase rotation `q -> q cos θ + p sin θ`, `p -> -q sin θ + p cos θ`.
    pub fn phase_rotation(modes: usize, mode: usize, theta: f64) -> Result<Self> {
        check_mode(mode, modes)?;
        let (c, s) = (theta.cos(), theta.sin());
        let mut t = Self::identity(modes);
        let k = 2 * mode;
        t.s[(k, k)] = c;
        t.s[(k, k + 1)] = s;
        t.s[(k + 1, k)] = -s;
        t.s[(k + 1, k + 1)] = c;
        Ok(t)
    }

    /// Weyl displacement of `mode` by `(q0, p0)`.
    pub fn displacement_op(modes: usize, mode: usize, q0: f64, p0: f64) -> Result<Self> {
        check_mode(mode, modes)?;
        let mut t = Self::identity(modes);
        t.d[2 * mode] = q0;
        t.d[2 * mode + 1] = p0;
        Ok(t)
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &SymplecticTransform) -> Result<Self> {
        if self.modes() != next.modes() {
            return Err(Error::Domain("mode count mismatch in composition".into()));
        }
        Ok(Self {
            s: &next.s * &self.s,
            d: &next.s * &self.d + &next.d,
        })
    }
}

/// An m-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Builds a state after checking symmetry and the uncertainty principle.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() == 0 || !cov.nrows().is_multiple_of(2) || mean.len() != cov.nrows() {
            return Err(Error::Domain(format!(
                "covariance must be 2m x 2m with a matching mean (got {}x{}, mean of {})",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::Domain(format!("covariance not symmetric (deviation {asym:e})")));
        }
        let state = Self { mean, cov };
        state.check_physical()?;
        Ok(state)
    }

    pub fn vacuum(modes: usize) -> Self {
        Self {
            mean: DVector::zeros(2 * modes),
            cov: DMatrix::identity(2 * modes, 2 * modes) * 0.5,
        }
    }

    /// Thermal state `ν_N^{⊗m}`: zero mean, covariance `(2N+1)/2 · I`.
    pub fn thermal(n: f64, modes: usize) -> Result<Self> {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(Error::Domain(format!("mean photon number must be >= 0, got {n}")));
        }
        if modes == 0 {
            return Err(Error::Domain("need at least one mode".into()));
        }
        Ok(Self {
            mean: DVector::zeros(2 * modes),
            cov: DMatrix::identity(2 * modes, 2 * modes) * ((2.0 * n + 1.0) / 2.0),
        })
    }

    /// Product state with independent thermal occupations per mode.
    pub fn thermal_product(ns: &[f64]) -> Result<Self> {
        if ns.is_empty() {
            return Err(Error::Domain("need at least one mode".into()));
        }
        let mut cov = DMatrix::zeros(2 * ns.len(), 2 * ns.len());
        for (k, &n) in ns.iter().enumerate() {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::Domain(format!("mean photon number must be >= 0, got {n}")));
            }
            cov[(2 * k, 2 * k)] = (2.0 * n + 1.0) / 2.0;
            cov[(2 * k + 1, 2 * k + 1)] = (2.0 * n + 1.0) / 2.0;
        }
        Ok(Self { mean: DVector::zeros(2 * ns.len()), cov })
    }

    pub fn modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn check_physical(&self) -> Result<()> {
        let min_eigenvalue = uncertainty_min_eigenvalue(&self.cov);
        if min_eigenvalue < -PHYSICALITY_TOL {
            return Err(Error::Unphysical { min_eigenvalue });
        }
        Ok(())
    }

    pub fn apply(&self, t: &SymplecticTransform) -> Result<Self> {
        if t.modes() != self.modes() {
            return Err(Error::Domain(format!(
                "transform acts on {} modes, state has {}",
                t.modes(),
                self.modes()
            )));
        }
        let cov = &t.s * &self.cov * t.s.transpose();
        // re-symmetrise away rounding so repeated congruences keep the symmetry invariant
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self {
            mean: &t.s * &self.mean + &t.d,
            cov,
        })
    }

    pub fn squeeze_single(&self, mode: usize, r: f64) -> Result<Self> {
        self.apply(&SymplecticTransform::single_squeeze(self.modes(), mode, r)?)
    }

    pub fn squeeze_two(&self, i: usize, j: usize, r: f64) -> Result<Self> {
        self.apply(&SymplecticTransform::two_mode_squeeze(self.modes(), i, j, r)?)
    }

    pub fn displace(&self, mode: usize, q0: f64, p0: f64) -> Result<Self> {
        self.apply(&SymplecticTransform::displacement_op(self.modes(), mode, q0, p0)?)
    }

    pub fn beamsplit_balanced(&self, i: usize, j: usize) -> Result<Self> {
        self.apply(&SymplecticTransform::balanced_beam_splitter(self.modes(), i, j)?)
    }

    pub fn rotate(&self, mode: usize, theta: f64) -> Result<Self> {
        self.apply(&SymplecticTransform::phase_rotation(self.modes(), mode, theta)?)
    }

    /// Mean and variance of the homodyne outcome for one quadrature.
    pub fn homodyne_marginal(&self, mode: usize, quadrature: Quadrature) -> Result<(f64, f64)> {
        check_mode(mode, self.modes())?;
        let k = match quadrature {
            Quadrature::Q => 2 * mode,
            Quadrature::P => 2 * mode + 1,
        };
        Ok((self.mean[k], self.cov[(k, k)]))
    }

    /// Covariance of the heterodyne outcome: the mode block plus one vacuum unit `I/2`.
    pub fn heterodyne_outcome_cov(&self, mode: usize) -> Result<Matrix2<f64>> {
        let block = self.mode_block(mode)?;
        Ok(block + Matrix2::identity() * 0.5)
    }

    /// The 2x2 covariance block of a single mode.
    pub fn mode_block(&self, mode: usize) -> Result<Matrix2<f64>> {
        check_mode(mode, self.modes())?;
        let k = 2 * mode;
        Ok(Matrix2::new(
            self.cov[(k, k)],
            self.cov[(k, k + 1)],
            self.cov[(k + 1, k)],
            self.cov[(k + 1, k + 1)],
        ))
    }

    /// Symplectic eigenvalues in ascending order (`1/2` for every mode of a pure state).
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_spectrum(&self.cov)
    }

    /// Purity `tr ρ² = 1 / (2^m √det cov)`.
    pub fn purity(&self) -> f64 {
        let m = self.modes() as i32;
        1.0 / (2f64.powi(m) * self.cov.determinant().sqrt())
    }

    /// Reduced state of the listed modes.
    pub fn reduced(&self, modes: &[usize]) -> Result<Self> {
        for &m in modes {
            check_mode(m, self.modes())?;
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let mean = DVector::from_fn(idx.len(), |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])]);
        Ok(Self { mean, cov })
    }
}
