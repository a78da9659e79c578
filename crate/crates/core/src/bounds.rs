//! Closed Gaussian evaluation of the SLD/RLD Fisher matrices and of every
//! Cramér-Rao bound built from them.
//!
//! For a Gaussian probe displaced on one mode the SLD matrix is the mode block
//! of `cov⁻¹`, and the inverse RLD matrix is the Schur complement of
//! `cov + iΩ/2` onto that mode. The inverse is stored because it stays finite
//! for pure probes while `J` itself diverges.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{symplectic_form, GaussianState};
use crate::probe::Probe;

/// Eigenvalues below this are treated as zero in matrix absolute values.
const ABS_CLIP: f64 = 1e-14;
/// Relative eigenvalue floor for the pseudo-inverse in the Schur complement.
const PINV_FLOOR: f64 = 1e-12;

type CMatrix2 = Matrix2<Complex64>;

/// SLD matrix `H` and inverse RLD matrix `J⁻¹`, both indexed by `(q₀, p₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrices {
    pub h: Matrix2<f64>,
    pub jinv: CMatrix2,
    /// Set when `cov + iΩ/2` is singular, i.e. `J` itself does not exist.
    pub pure: bool,
}

/// A-priori knowledge about `(q₀, p₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Flat,
    /// Independent zero-mean Gaussians of variance `delta²` on each parameter.
    Gaussian { delta: f64 },
}

impl Prior {
    pub fn gaussian(delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Domain(format!("prior width must be > 0, got {delta}")));
        }
        if delta.is_infinite() {
            return Ok(Prior::Flat);
        }
        Ok(Prior::Gaussian { delta })
    }

    /// Fisher matrix `A` of the prior distribution (zero for a flat prior).
    pub fn fisher(&self) -> Matrix2<f64> {
        match *self {
            Prior::Flat => Matrix2::zeros(),
            Prior::Gaussian { delta } => prior_fisher_gaussian(delta),
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match *self {
            Prior::Flat => None,
            Prior::Gaussian { delta } => Some(delta),
        }
    }
}

/// `A = I/Δ²`, the Fisher matrix of the product Gaussian prior.
pub fn prior_fisher_gaussian(delta: f64) -> Matrix2<f64> {
    Matrix2::identity() / (delta * delta)
}

/// Positive-definite weight matrix `G` for `tr[G V]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight(Matrix2<f64>);

impl Weight {
    pub fn new(g: Matrix2<f64>) -> Result<Self> {
        if (g - g.transpose()).amax() > 1e-12 {
            return Err(Error::Domain("weight matrix must be symmetric".into()));
        }
        let min = g.symmetric_eigenvalues().min();
        if !(min > 0.0) {
            return Err(Error::Domain(format!(
                "weight matrix must be positive definite (min eigenvalue {min})"
            )));
        }
        Ok(Self(g))
    }

    pub fn from_entries(g11: f64, g12: f64, g22: f64) -> Result<Self> {
        Self::new(Matrix2::new(g11, g12, g12, g22))
    }

    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0 == Matrix2::identity()
    }

    fn sqrt(&self) -> Matrix2<f64> {
        let eig = self.0.symmetric_eigen();
        let d = Matrix2::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        eig.eigenvectors * d * eig.eigenvectors.transpose()
    }
}

impl Default for Weight {
    fn default() -> Self {
        Self::identity()
    }
}

fn block2<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, k: usize) -> Matrix2<T> {
    Matrix2::new(m[(k, k)], m[(k, k + 1)], m[(k + 1, k)], m[(k + 1, k + 1)])
}

/// Moore-Penrose inverse of a Hermitian matrix; also reports whether any
/// eigenvalue fell under the floor.
fn hermitian_pinv(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, bool) {
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut singular = false;
    let inv_diag = eig.eigenvalues.map(|l| {
        if l.abs() <= PINV_FLOOR * scale {
            singular = true;
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0 / l, 0.0)
        }
    });
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&inv_diag) * v.adjoint(), singular)
}

/// Fisher matrices of a Gaussian probe displaced on `mode`.
pub fn gaussian_fisher(state: &GaussianState, mode: usize) -> Result<FisherMatrices> {
    let m = state.modes();
    if mode >= m {
        return Err(Error::ModeOutOfRange { index: mode, modes: m });
    }
    let cov = state.cov();
    let cov_inv = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?
        .inverse();
    let h = block2(&cov_inv, 2 * mode);

    let omega = symplectic_form(m);
    let sigma = DMatrix::from_fn(2 * m, 2 * m, |i, j| Complex64::new(cov[(i, j)], 0.5 * omega[(i, j)]));
    let pure = sigma.clone().symmetric_eigenvalues().min() <= PINV_FLOOR;

    let keep = [2 * mode, 2 * mode + 1];
    let rest: Vec<usize> = (0..2 * m).filter(|i| !keep.contains(i)).collect();
    let m11 = block2(&sigma, 2 * mode);
    let jinv = if rest.is_empty() {
        m11
    } else {
        let m12 = DMatrix::from_fn(2, rest.len(), |i, j| sigma[(keep[i], rest[j])]);
        let m22 = DMatrix::from_fn(rest.len(), rest.len(), |i, j| sigma[(rest[i], rest[j])]);
        let (m22_pinv, _) = hermitian_pinv(&m22);
        let corr = &m12 * m22_pinv * m12.adjoint();
        let schur = m11 - Matrix2::new(corr[(0, 0)], corr[(0, 1)], corr[(1, 0)], corr[(1, 1)]);
        // enforce exact Hermiticity
        (schur + schur.adjoint()) * Complex64::new(0.5, 0.0)
    };
    Ok(FisherMatrices { h, jinv, pure })
}

/// Fisher matrices for a probe family, with the pure two-mode convention:
/// when both thermal inputs are empty `J⁻¹` is the `N → 0⁺` limit, which is
/// the zero matrix for every squeezing (so `B_R = 0` and `B_MI = B_S`).
pub fn probe_fisher(probe: &Probe) -> Result<FisherMatrices> {
    let state = probe.state()?;
    let mut fm = gaussian_fisher(&state, 0)?;
    if probe.modes() == 2 && probe.is_pure() {
        fm.jinv = CMatrix2::zeros();
        fm.pure = true;
    }
    Ok(fm)
}

/// SLD bound `tr[G (H + A)⁻¹] / M`; `+∞` when `H + A` is singular.
pub fn bound_sld(fm: &FisherMatrices, weight: &Weight, prior: &Prior, shots: u64) -> f64 {
    let total = fm.h + prior.fisher();
    match total.try_inverse() {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => {
            (weight.matrix() * inv).trace() / shots.max(1) as f64
        }
        _ => f64::INFINITY,
    }
}

/// `(J + A)⁻¹` computed from `J⁻¹` as `J⁻¹ (I + A J⁻¹)⁻¹`, which stays valid
/// when `J⁻¹` is rank deficient.
pub fn rld_inverse_with_prior(jinv: &CMatrix2, prior: &Prior) -> Result<CMatrix2> {
    let a = prior.fisher().map(|x| Complex64::new(x, 0.0));
    let m = CMatrix2::identity() + a * jinv;
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::RldUnavailable("I + A J⁻¹ is singular".into()))?;
    let x = jinv * inv;
    let x = (x + x.adjoint()) * Complex64::new(0.5, 0.0);
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::RldUnavailable("non-finite inverse RLD matrix".into()));
    }
    Ok(x)
}

/// Trace norm of a Hermitian 2x2 matrix via its eigenvalues.
fn hermitian_abs_trace(m: &CMatrix2) -> f64 {
    m.symmetric_eigenvalues()
        .iter()
        .map(|l| if l.abs() < ABS_CLIP { 0.0 } else { l.abs() })
        .sum()
}

/// RLD bound `(tr[G Re X] + tr|G Im X|) / M` with `X = (J + A)⁻¹`.
pub fn bound_rld(fm: &FisherMatrices, weight: &Weight, prior: &Prior, shots: u64) -> Result<f64> {
    let x = rld_inverse_with_prior(&fm.jinv, prior)?;
    let re = x.map(|z| z.re);
    let im = x.map(|z| z.im);
    let g = weight.matrix();
    let re_part = (g * re).trace();
    let im_part = if weight.is_identity() {
        hermitian_abs_trace(&im.map(|v| Complex64::new(0.0, v)))
    } else {
        let s = weight.sqrt();
        let sym = s * im * s;
        hermitian_abs_trace(&sym.map(|v| Complex64::new(0.0, v)))
    };
    Ok((re_part + im_part) / shots.max(1) as f64)
}

/// Which of the two bounds is the most informative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "S")]
    Sld,
    #[serde(rename = "R")]
    Rld,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Sld => "S",
            Branch::Rld => "R",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub probe: Probe,
    pub weight: Weight,
    pub prior: Prior,
    pub shots: u64,
}

impl BoundQuery {
    pub fn new(probe: Probe) -> Self {
        Self {
            probe,
            weight: Weight::identity(),
            prior: Prior::Flat,
            shots: 1,
        }
    }

    pub fn with_prior(mut self, prior: Prior) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_weight(mut self, weight: Weight) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_shots(mut self, shots: u64) -> Self {
        self.shots = shots;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.probe.validate()?;
        if self.shots == 0 {
            return Err(Error::Domain("number of measurements must be >= 1".into()));
        }
        if let Prior::Gaussian { delta } = self.prior {
            if !(delta > 0.0) {
                return Err(Error::Domain(format!("prior width must be > 0, got {delta}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub b_s: f64,
    pub b_r: f64,
    pub b_mi: f64,
    pub branch: Branch,
    /// Squeezing at which the symmetric two-mode bound switches branch.
    pub r_ths: Option<f64>,
    /// Squeezing above which the double-homodyne scheme beats the SQL.
    pub r_sql: Option<f64>,
    /// Renormalised gap `D(r, N)` of the double-homodyne scheme (symmetric two-mode probe, flat prior, `G = I`).
    pub gap: Option<f64>,
}

pub fn bound_most_informative(query: &BoundQuery) -> Result<BoundReport> {
    query.validate()?;
    let fm = probe_fisher(&query.probe)?;
    let b_s = bound_sld(&fm, &query.weight, &query.prior, query.shots);
    let b_r = bound_rld(&fm, &query.weight, &query.prior, query.shots)?;
    let (b_mi, branch) = if b_s >= b_r { (b_s, Branch::Sld) } else { (b_r, Branch::Rld) };

    let (r_ths, r_sql, gap) = match query.probe {
        Probe::Coherent => {
            let (a, b) = thresholds(0.0);
            (Some(a), Some(b), None)
        }
        Probe::Single { n, .. } => {
            let (a, b) = thresholds(n);
            (Some(a), Some(b), None)
        }
        Probe::Tmst { r, n } => {
            let (a, b) = thresholds(n);
            let gap = (query.prior == Prior::Flat && query.weight.is_identity())
                .then(|| {
                    let per_shot = b_mi * query.shots as f64;
                    (scheme_variance_sum(r, n, None) - per_shot) / per_shot
                });
            (Some(a), Some(b), gap)
        }
        Probe::TmstAsym { .. } => (None, None, None),
    };
    Ok(BoundReport { b_s, b_r, b_mi, branch, r_ths, r_sql, gap })
}

/// Independent Gaussian jitter added to the applied displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Variance of the `q₀` error.
    pub dq2: f64,
    /// Variance of the `p₀` error.
    pub dp2: f64,
}

impl Jitter {
    pub fn new(dq2: f64, dp2: f64) -> Result<Self> {
        if !(dq2 >= 0.0) || !(dp2 >= 0.0) || !dq2.is_finite() || !dp2.is_finite() {
            return Err(Error::Domain(format!("jitter variances must be >= 0, got ({dq2}, {dp2})")));
        }
        Ok(Self { dq2, dp2 })
    }
}

/// Variance sum `E(r, N) = 2(2N+1)e^{-2r} + Δq² + Δp²` of the double-homodyne scheme.
pub fn scheme_variance_sum(r: f64, n: f64, jitter: Option<Jitter>) -> f64 {
    let extra = jitter.map_or(0.0, |j| j.dq2 + j.dp2);
    2.0 * (2.0 * n + 1.0) * (-2.0 * r).exp() + extra
}

/// `D(r, N) = (E − B_MI) / B_MI` for the symmetric two-mode probe.
pub fn gap_d(r: f64, n: f64) -> Result<f64> {
    if !(r >= 0.0) || !(n >= 0.0) {
        return Err(Error::Domain(format!("gap needs r >= 0 and N >= 0, got ({r}, {n})")));
    }
    let report = bound_most_informative(&BoundQuery::new(Probe::Tmst { r, n }))?;
    let e = scheme_variance_sum(r, n, None);
    Ok((e - report.b_mi) / report.b_mi)
}

/// `(r_ths, r_sql) = (½ arccosh(2N+1), ¼ ln(1 + 4N + 4N²))`.
pub fn thresholds(n: f64) -> (f64, f64) {
    let r_ths = 0.5 * (2.0 * n + 1.0).acosh();
    let r_sql = 0.25 * (1.0 + 4.0 * n + 4.0 * n * n).ln();
    (r_ths, r_sql)
}

/// Estimator rescaling for a Gaussian prior of width `Δ` and per-parameter
/// measurement variance `Var₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    /// Coherent-state factor `Δ²/(1+Δ²)`.
    pub k_c: f64,
    /// Optimal factor `Δ²/(Var₀+Δ²)`.
    pub k_min: f64,
    /// Prior-averaged variance sum with `k_min`.
    pub mse_min: f64,
    /// Prior-averaged variance sum with `k_c`.
    pub mse_kc: f64,
}

pub fn scaling_factors(var0: f64, delta: f64) -> Result<ScalingFactors> {
    if !(var0 > 0.0) || !(delta > 0.0) {
        return Err(Error::Domain(format!("need Var0 > 0 and Δ > 0, got ({var0}, {delta})")));
    }
    let d2 = delta * delta;
    Ok(ScalingFactors {
        k_c: d2 / (1.0 + d2),
        k_min: d2 / (var0 + d2),
        mse_min: 2.0 * var0 * d2 / (var0 + d2),
        mse_kc: 2.0 * d2 * (1.0 + d2 * var0) / ((1.0 + d2) * (1.0 + d2)),
    })
}

/// Prior-averaged variance sum for an arbitrary rescaling `K`:
/// `2[(1−K)²Δ² + K² Var₀]`.
pub fn bayes_mse(var0: f64, delta: f64, k: f64) -> f64 {
    2.0 * ((1.0 - k).powi(2) * delta * delta + k * k * var0)
}

/// Standard quantum limit with a Gaussian prior, `2Δ²/(1+Δ²)`.
pub fn sql_with_prior(delta: f64) -> f64 {
    2.0 * delta * delta / (1.0 + delta * delta)
}

/// Per-parameter variance of the double-homodyne scheme, `(2N+1)e^{-2r}`.
pub fn scheme_var0(r: f64, n: f64) -> f64 {
    (2.0 * n + 1.0) * (-2.0 * r).exp()
}
