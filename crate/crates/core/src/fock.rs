//! Truncated Fock-space oracle for the SLD and RLD Fisher matrices.
//!
//! Everything here is evaluated from the operator definitions: the spectral
//! sum for the SLD matrix and the trace formula
//! `J_{μν} = tr[G_ν ρ₀² G_μ ρ₀⁻¹] + tr[ρ₀ G_ν G_μ] − 2 tr[ρ₀ G_μ G_ν]`
//! for the RLD matrix, with generators `G_{q₀} = p̂` and `G_{p₀} = −q̂`.
//! No Gaussian covariance formula is used, so the results serve as an
//! independent check on [`crate::bounds`].
//!
//! Two routes build the probe:
//!
//! * [`Frame::Eigen`] works in the eigenbasis `U|n, m⟩` of `ρ₀ = U ν U†`.
//!   The spectrum is the (truncated, renormalised) thermal distribution and
//!   the operators are `U† x U`, where the Heisenberg action of the squeezer
//!   comes from exponentiating its adjoint action on the ladder operators.
//!   Truncation only has to cover the thermal tail, which keeps `dim` small
//!   even for strong squeezing.
//! * [`Frame::Lab`] builds dense ladder matrices, exponentiates the squeezing
//!   generator as a matrix, forms `ρ₀` and diagonalises it numerically. It is
//!   slow and needs large `dim` when the squeezing is strong; use it for
//!   small parameters.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Quadrature;
use crate::probe::Probe;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Numerical knobs of the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Upper bound on the weight of `ρ₀` in the top 10% of levels.
    pub tail_tol: f64,
    pub min_dim: usize,
    pub max_dim: usize,
    /// Relative agreement required between `dim` and `dim + 5`.
    pub conv_tol: f64,
    /// Eigenvalues of `ρ₀` below this are outside the support used for `ρ₀⁻¹`.
    pub eps_inv: f64,
    /// SLD pairs with `p_s + p_t` below this are skipped.
    pub sld_eps: f64,
    /// Relative generator weight leaving the support that marks a pure probe.
    pub leak_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tail_tol: 1e-10,
            min_dim: 20,
            max_dim: 80,
            conv_tol: 1e-8,
            eps_inv: 1e-10,
            sld_eps: 1e-12,
            leak_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Eigen,
    Lab,
}

/// Row-compressed complex operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseOp {
    fn zeros(dim: usize) -> Self {
        Self { rows: vec![Vec::new(); dim] }
    }

    fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut op = Self::zeros(dim);
        for (i, j, v) in entries {
            if v == ZERO {
                continue;
            }
            match op.rows[i].last_mut() {
                Some((col, acc)) if *col == j => *acc += v,
                _ => op.rows[i].push((j, v)),
            }
        }
        op
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != ZERO)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(col, _)| col) {
            Ok(k) => row[k].1,
            Err(_) => ZERO,
        }
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    fn linear_combination(terms: &[(Complex64, &SparseOp)]) -> Self {
        let dim = terms[0].1.dim();
        let entries = terms
            .iter()
            .flat_map(|&(w, op)| {
                op.rows
                    .iter()
                    .enumerate()
                    .flat_map(move |(i, row)| row.iter().map(move |&(j, v)| (i, j, w * v)))
            })
            .collect();
        Self::from_triplets(dim, entries)
    }

    fn plus_identity(&self, shift: f64) -> Self {
        let mut entries: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
            .collect();
        entries.extend((0..self.dim()).map(|i| (i, i, c(shift))));
        Self::from_triplets(self.dim(), entries)
    }

    fn apply_sparse(&self, v: &BTreeMap<usize, Complex64>) -> BTreeMap<usize, Complex64> {
        // (A v)_i = Σ_j A_ij v_j; walk columns through a transposed view
        let mut out = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = ZERO;
            for &(j, a) in row {
                if let Some(x) = v.get(&j) {
                    acc += a * x;
                }
            }
            if acc != ZERO {
                out.insert(i, acc);
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Truncated thermal distribution `N^n/(N+1)^{n+1}`, renormalised to unit
/// sum, together with the weight that truncation removed.
fn thermal_distribution(n: f64, dim: usize) -> (Vec<f64>, f64) {
    if n == 0.0 {
        let mut p = vec![0.0; dim];
        p[0] = 1.0;
        return (p, 0.0);
    }
    let ratio = n / (n + 1.0);
    let mut p: Vec<f64> = (0..dim).map(|k| ratio.powi(k as i32) / (n + 1.0)).collect();
    let kept: f64 = p.iter().sum();
    for x in &mut p {
        *x /= kept;
    }
    (p, 1.0 - kept)
}

/// First level counted as part of the top 10%.
fn tail_cut(dim: usize) -> usize {
    ((0.9 * dim as f64).floor() as usize).min(dim - 1)
}

/// Single-mode ladder operators on `dim` levels.
fn ladder(dim: usize) -> (SparseOp, SparseOp) {
    let a = SparseOp::from_triplets(dim, (1..dim).map(|k| (k - 1, k, c((k as f64).sqrt()))).collect());
    let ad = SparseOp::from_triplets(dim, (1..dim).map(|k| (k, k - 1, c((k as f64).sqrt()))).collect());
    (a, ad)
}

/// Embeds a single-mode operator into mode `mode` of a `modes`-mode space (`dim` levels each).
fn embed(op: &SparseOp, mode: usize, modes: usize, dim: usize) -> SparseOp {
    match modes {
        1 => op.clone(),
        2 => {
            let mut entries = Vec::new();
            for (i, row) in op.rows.iter().enumerate() {
                for &(j, v) in row {
                    for other in 0..dim {
                        let (r, cidx) = if mode == 0 {
                            (i * dim + other, j * dim + other)
                        } else {
                            (other * dim + i, other * dim + j)
                        };
                        entries.push((r, cidx, v));
                    }
                }
            }
            SparseOp::from_triplets(dim * dim, entries)
        }
        _ => unreachable!("oracle supports one or two modes"),
    }
}

/// Ladder basis `ξ = (a₁, a₁†, a₂, a₂†, ...)`: commutator matrix `ω_ij = [ξ_i, ξ_j]`.
fn ladder_commutators(modes: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

/// Quadratic form `κ` of the squeezing generator `K = ½ Σ κ_ij ξ_i ξ_j`,
/// with the probe unitary `U = e^K`.
fn squeezer_form(probe: &Probe) -> DMatrix<f64> {
    match *probe {
        Probe::Coherent => DMatrix::zeros(2, 2),
        // K = (r/2)(a†² − a²)
        Probe::Single { r, .. } => DMatrix::from_row_slice(2, 2, &[-r, 0.0, 0.0, r]),
        // K = r(a†b† − ab)
        Probe::Tmst { r, .. } | Probe::TmstAsym { r, .. } => {
            let mut k = DMatrix::zeros(4, 4);
            k[(0, 2)] = -r;
            k[(2, 0)] = -r;
            k[(1, 3)] = r;
            k[(3, 1)] = r;
            k
        }
    }
}

/// Columns give `U† ξ_k U = Σ_j B_jk ξ_j`. From `[K, ξ_k] = Σ_j (κω)_jk ξ_j`,
/// the adjoint action is the matrix `κω`, and `e^{-K} ξ e^{K} = e^{-ad_K} ξ`.
fn heisenberg_ladder_map(probe: &Probe) -> DMatrix<f64> {
    let kappa = squeezer_form(probe);
    let omega = ladder_commutators(probe.modes());
    (-(kappa * omega)).exp()
}

fn quadratures(a: &SparseOp, ad: &SparseOp) -> (SparseOp, SparseOp) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let q = SparseOp::linear_combination(&[(c(h), a), (c(h), ad)]);
    // p = (a − a†)/(i√2)
    let p = SparseOp::linear_combination(&[(-I * h, a), (I * h, ad)]);
    (q, p)
}

/// Operators of a truncated probe, expressed in the eigenbasis of `ρ₀`.
#[derive(Debug, Clone)]
pub struct FockOperatorSet {
    probe: Probe,
    frame: Frame,
    dim: usize,
    config: OracleConfig,
    eigenvalues: Vec<f64>,
    a: Vec<SparseOp>,
    adag: Vec<SparseOp>,
    q: Vec<SparseOp>,
    p: Vec<SparseOp>,
    tail_mass: f64,
    truncated_weight: f64,
}

impl FockOperatorSet {
    pub fn probe(&self) -> &Probe {
        &self.probe
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Levels per mode.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> usize {
        self.probe.modes()
    }

    /// Spectrum of `ρ₀`, aligned with the basis of the stored operators.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn a(&self, mode: usize) -> &SparseOp {
        &self.a[mode]
    }

    pub fn adag(&self, mode: usize) -> &SparseOp {
        &self.adag[mode]
    }

    pub fn q(&self, mode: usize) -> &SparseOp {
        &self.q[mode]
    }

    pub fn p(&self, mode: usize) -> &SparseOp {
        &self.p[mode]
    }

    /// `ρ₀` in its eigenbasis.
    pub fn rho0(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&x| c(x)),
        ))
    }

    /// Weight of `ρ₀` on levels in the top 10% of the truncation.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Thermal weight dropped before renormalisation.
    pub fn truncated_weight(&self) -> f64 {
        self.truncated_weight
    }

    /// Copy of the set for `D(q₀, p₀) ρ₀ D†`. In the displaced eigenbasis
    /// `D|φ⟩` the quadratures pick up the constant shifts `q + q₀`, `p + p₀`.
    pub fn displaced(&self, mode: usize, q0: f64, p0: f64) -> Result<Self> {
        if mode >= self.modes() {
            return Err(Error::ModeOutOfRange { index: mode, modes: self.modes() });
        }
        let mut out = self.clone();
        out.q[mode] = self.q[mode].plus_identity(q0);
        out.p[mode] = self.p[mode].plus_identity(p0);
        let alpha = (q0 + I * p0) * std::f64::consts::FRAC_1_SQRT_2;
        out.a[mode] = SparseOp::linear_combination(&[(c(1.0), &self.a[mode])]).plus_identity_complex(alpha);
        out.adag[mode] = SparseOp::linear_combination(&[(c(1.0), &self.adag[mode])])
            .plus_identity_complex(alpha.conj());
        Ok(out)
    }

    /// Generators `(G_{q₀}, G_{p₀}) = (p̂, −q̂)` of the displacement on `mode`.
    fn generators(&self, mode: usize) -> Result<[SparseOp; 2]> {
        if mode >= self.modes() {
            return Err(Error::ModeOutOfRange { index: mode, modes: self.modes() });
        }
        let minus_q = SparseOp::linear_combination(&[(c(-1.0), &self.q[mode])]);
        Ok([self.p[mode].clone(), minus_q])
    }
}

impl SparseOp {
    fn plus_identity_complex(&self, shift: Complex64) -> Self {
        let mut entries: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
            .collect();
        entries.extend((0..self.dim()).map(|i| (i, i, shift)));
        Self::from_triplets(self.dim(), entries)
    }
}

/// Truncation that keeps the thermal tail in the top 10% of levels under `tail_tol`.
fn eigen_frame_dim(probe: &Probe, config: &OracleConfig) -> Result<usize> {
    let ns = probe.thermal_numbers();
    let mut dim = config.min_dim.max(2);
    loop {
        let tail = eigen_tail(&ns, dim);
        if tail < config.tail_tol {
            return Ok(dim);
        }
        if dim >= config.max_dim {
            return Err(Error::Truncation {
                dim,
                reason: format!("tail mass {tail:e} exceeds {:e} at the largest allowed dimension", config.tail_tol),
            });
        }
        dim += 1;
    }
}

fn eigen_tail(ns: &[f64], dim: usize) -> f64 {
    let cut = tail_cut(dim);
    let inside: f64 = ns
        .iter()
        .map(|&n| {
            let (p, _) = thermal_distribution(n, dim);
            p[..cut].iter().sum::<f64>()
        })
        .product();
    (1.0 - inside).max(0.0)
}

/// Default lab-frame truncation `max(20, ⌈(N+1) cosh 2r · 8⌉)`.
pub fn lab_frame_default_dim(probe: &Probe) -> usize {
    let n = probe.thermal_numbers().into_iter().fold(0.0, f64::max);
    let r = probe.squeezing();
    20usize.max(((n + 1.0) * (2.0 * r).cosh() * 8.0).ceil() as usize)
}

/// Builds the operator set of a probe. `dim` is the number of levels per
/// mode; `None` picks the default for the frame.
pub fn build_probe_fock(
    probe: &Probe,
    dim: Option<usize>,
    frame: Frame,
    config: &OracleConfig,
) -> Result<FockOperatorSet> {
    probe.validate()?;
    match frame {
        Frame::Eigen => {
            let dim = match dim {
                Some(d) => d,
                None => eigen_frame_dim(probe, config)?,
            };
            build_eigen(probe, dim, config)
        }
        Frame::Lab => {
            let dim = dim.unwrap_or_else(|| lab_frame_default_dim(probe));
            if dim > config.max_dim && probe.modes() == 2 {
                return Err(Error::Truncation {
                    dim,
                    reason: format!("two-mode lab frame limited to {} levels per mode", config.max_dim),
                });
            }
            build_lab(probe, dim, config)
        }
    }
}

fn build_eigen(probe: &Probe, dim: usize, config: &OracleConfig) -> Result<FockOperatorSet> {
    if dim < 2 {
        return Err(Error::Truncation { dim, reason: "need at least two levels".into() });
    }
    let modes = probe.modes();
    let ns = probe.thermal_numbers();
    let dists: Vec<(Vec<f64>, f64)> = ns.iter().map(|&n| thermal_distribution(n, dim)).collect();
    let eigenvalues: Vec<f64> = if modes == 1 {
        dists[0].0.clone()
    } else {
        let (p1, p2) = (&dists[0].0, &dists[1].0);
        (0..dim * dim).map(|k| p1[k / dim] * p2[k % dim]).collect()
    };
    let truncated_weight = 1.0 - dists.iter().map(|(_, t)| 1.0 - t).product::<f64>();
    let tail_mass = eigen_tail(&ns, dim);
    if tail_mass >= config.tail_tol {
        return Err(Error::Truncation {
            dim,
            reason: format!("tail mass {tail_mass:e} exceeds {:e}", config.tail_tol),
        });
    }

    let (a1, ad1) = ladder(dim);
    let xi: Vec<SparseOp> = (0..modes)
        .flat_map(|m| [embed(&a1, m, modes, dim), embed(&ad1, m, modes, dim)])
        .collect();
    let map = heisenberg_ladder_map(probe);
    let transform = |k: usize| {
        let terms: Vec<(Complex64, &SparseOp)> = (0..2 * modes)
            .filter(|&j| map[(j, k)] != 0.0)
            .map(|j| (c(map[(j, k)]), &xi[j]))
            .collect();
        SparseOp::linear_combination(&terms)
    };
    let mut a = Vec::new();
    let mut adag = Vec::new();
    let mut q = Vec::new();
    let mut p = Vec::new();
    for m in 0..modes {
        let am = transform(2 * m);
        let adm = transform(2 * m + 1);
        let (qm, pm) = quadratures(&am, &adm);
        a.push(am);
        adag.push(adm);
        q.push(qm);
        p.push(pm);
    }
    Ok(FockOperatorSet {
        probe: *probe,
        frame: Frame::Eigen,
        dim,
        config: *config,
        eigenvalues,
        a,
        adag,
        q,
        p,
        tail_mass,
        truncated_weight,
    })
}

fn dense_ladder(dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { ZERO })
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

fn build_lab(probe: &Probe, dim: usize, config: &OracleConfig) -> Result<FockOperatorSet> {
    if dim < 2 {
        return Err(Error::Truncation { dim, reason: "need at least two levels".into() });
    }
    let modes = probe.modes();
    let a1 = dense_ladder(dim);
    let id = DMatrix::<Complex64>::identity(dim, dim);
    let lad: Vec<DMatrix<Complex64>> = match modes {
        1 => vec![a1.clone()],
        _ => vec![kron(&a1, &id), kron(&id, &a1)],
    };
    let total = lad[0].nrows();
    let r = probe.squeezing();
    let generator = match modes {
        1 => {
            let ad = lad[0].adjoint();
            (&ad * &ad - &lad[0] * &lad[0]) * c(r / 2.0)
        }
        _ => {
            let (a, b) = (&lad[0], &lad[1]);
            (a.adjoint() * b.adjoint() - a * b) * c(r)
        }
    };
    let u = generator.exp();

    let ns = probe.thermal_numbers();
    let dists: Vec<(Vec<f64>, f64)> = ns.iter().map(|&n| thermal_distribution(n, dim)).collect();
    let nu_diag: Vec<f64> = match modes {
        1 => dists[0].0.clone(),
        _ => (0..total).map(|k| dists[0].0[k / dim] * dists[1].0[k % dim]).collect(),
    };
    let truncated_weight = 1.0 - dists.iter().map(|(_, t)| 1.0 - t).product::<f64>();
    let nu = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(total, nu_diag.iter().map(|&x| c(x))));
    let rho = &u * nu * u.adjoint();
    let rho = (&rho + rho.adjoint()) * c(0.5);

    let trace: f64 = (0..total).map(|k| rho[(k, k)].re).sum();
    if (trace - 1.0).abs() > 1e-10 {
        return Err(Error::Truncation { dim, reason: format!("trace of ρ₀ is {trace}") });
    }
    let cut = tail_cut(dim);
    let tail_mass: f64 = (0..total)
        .filter(|&k| match modes {
            1 => k >= cut,
            _ => k / dim >= cut || k % dim >= cut,
        })
        .map(|k| rho[(k, k)].re)
        .sum();
    if tail_mass >= config.tail_tol {
        return Err(Error::Truncation {
            dim,
            reason: format!("tail mass {tail_mass:e} exceeds {:e}", config.tail_tol),
        });
    }

    let eig = rho.symmetric_eigen();
    if eig.eigenvalues.min() < -1e-10 {
        return Err(Error::Truncation {
            dim,
            reason: format!("ρ₀ has eigenvalue {}", eig.eigenvalues.min()),
        });
    }
    let v = eig.eigenvectors;
    let vd = v.adjoint();
    let to_eig = |x: &DMatrix<Complex64>| SparseOp::from_dense(&(&vd * x * &v));
    let mut a = Vec::new();
    let mut adag = Vec::new();
    let mut q = Vec::new();
    let mut p = Vec::new();
    for l in &lad {
        let am = to_eig(l);
        let adm = to_eig(&l.adjoint());
        let (qm, pm) = quadratures(&am, &adm);
        a.push(am);
        adag.push(adm);
        q.push(qm);
        p.push(pm);
    }
    Ok(FockOperatorSet {
        probe: *probe,
        frame: Frame::Lab,
        dim,
        config: *config,
        eigenvalues: eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect(),
        a,
        adag,
        q,
        p,
        tail_mass,
        truncated_weight,
    })
}

/// Nonzero pattern shared by both generators, row by row, with values `(G_q, G_p)`.
fn merged_rows(g: &[SparseOp; 2]) -> Vec<Vec<(usize, Complex64, Complex64)>> {
    (0..g[0].dim())
        .map(|s| {
            let mut row: BTreeMap<usize, (Complex64, Complex64)> = BTreeMap::new();
            for &(t, v) in g[0].row(s) {
                row.entry(t).or_insert((ZERO, ZERO)).0 = v;
            }
            for &(t, v) in g[1].row(s) {
                row.entry(t).or_insert((ZERO, ZERO)).1 = v;
            }
            row.into_iter().map(|(t, (a, b))| (t, a, b)).collect()
        })
        .collect()
}

/// SLD Fisher matrix `H` indexed by `(q₀, p₀)` from the spectral sum
/// `H_{μν} = 2 Σ_{s≠t} p_s ((p_s−p_t)/(p_s+p_t))² (⟨G_μ⟩_st ⟨G_ν⟩_ts + ⟨G_ν⟩_st ⟨G_μ⟩_ts)`.
pub fn sld_fisher_fock(set: &FockOperatorSet, displaced_mode: usize) -> Result<Matrix2<f64>> {
    let g = set.generators(displaced_mode)?;
    let p = &set.eigenvalues;
    let rows = merged_rows(&g);
    let mut h = Matrix2::<Complex64>::zeros();
    for (s, row) in rows.iter().enumerate() {
        for &(t, gq_st, gp_st) in row {
            if s == t {
                continue;
            }
            let sum = p[s] + p[t];
            if sum < set.config.sld_eps {
                continue;
            }
            let w = (p[s] - p[t]) / sum;
            let weight = 2.0 * p[s] * w * w;
            if weight == 0.0 {
                continue;
            }
            let st = [gq_st, gp_st];
            let ts = [g[0].get(t, s), g[1].get(t, s)];
            for mu in 0..2 {
                for nu in 0..2 {
                    h[(mu, nu)] += (st[mu] * ts[nu] + st[nu] * ts[mu]) * weight;
                }
            }
        }
    }
    Ok(h.map(|z| z.re))
}

/// RLD Fisher matrix `J` indexed by `(q₀, p₀)`.
///
/// `ρ₀⁻¹` acts on the eigenspace above `eps_inv`. If the generators move more
/// than `leak_tol` of their weight out of that eigenspace the probe is
/// treated as rank deficient and [`Error::PureState`] is returned.
pub fn rld_fisher_fock(set: &FockOperatorSet, displaced_mode: usize) -> Result<Matrix2<Complex64>> {
    let g = set.generators(displaced_mode)?;
    let p = &set.eigenvalues;
    let eps = set.config.eps_inv;
    let rows = merged_rows(&g);

    let mut leaked = 0.0;
    let mut total = 0.0;
    for (s, row) in rows.iter().enumerate() {
        if p[s] <= eps {
            continue;
        }
        for &(t, gq, gp) in row {
            let w = p[s] * (gq.norm_sqr() + gp.norm_sqr());
            total += w;
            if p[t] <= eps {
                leaked += w;
            }
        }
    }
    let leakage = if total > 0.0 { leaked / total } else { 1.0 };
    if leakage > set.config.leak_tol {
        return Err(Error::PureState { leakage });
    }

    // tr[G_ν ρ² G_μ ρ⁻¹] = Σ_{s,t} (G_ν)_st p_t² (G_μ)_ts / p_s
    // tr[ρ G_ν G_μ]      = Σ_{s,t} p_s (G_ν)_st (G_μ)_ts
    // with s restricted to the support throughout, so a constant shift of the
    // generators cancels exactly.
    let mut j = Matrix2::<Complex64>::zeros();
    for (s, row) in rows.iter().enumerate() {
        if p[s] <= eps {
            continue;
        }
        for &(t, gq_st, gp_st) in row {
            let st = [gq_st, gp_st];
            let ts = [g[0].get(t, s), g[1].get(t, s)];
            let inverse_term = p[t] > eps;
            for mu in 0..2 {
                for nu in 0..2 {
                    let mut v = (st[nu] * ts[mu] - st[mu] * ts[nu] * 2.0) * p[s];
                    if inverse_term {
                        v += st[nu] * ts[mu] * (p[t] * p[t] / p[s]);
                    }
                    j[(mu, nu)] += v;
                }
            }
        }
    }
    Ok(j)
}

/// Expectation values `tr[ρ₀ X₁ X₂ ⋯ X_k]` of quadrature monomials.
pub fn moments_fock(set: &FockOperatorSet, monomials: &[Vec<(usize, Quadrature)>]) -> Result<Vec<Complex64>> {
    for mono in monomials {
        for &(mode, _) in mono {
            if mode >= set.modes() {
                return Err(Error::ModeOutOfRange { index: mode, modes: set.modes() });
            }
        }
    }
    let p = &set.eigenvalues;
    Ok(monomials
        .iter()
        .map(|mono| {
            let mut acc = ZERO;
            for (s, &ps) in p.iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                let mut v = BTreeMap::new();
                v.insert(s, c(1.0));
                for &(mode, quad) in mono.iter().rev() {
                    let op = match quad {
                        Quadrature::Q => &set.q[mode],
                        Quadrature::P => &set.p[mode],
                    };
                    v = op.apply_sparse(&v);
                }
                acc += v.get(&s).copied().unwrap_or(ZERO) * ps;
            }
            acc
        })
        .collect())
}

/// Fisher matrices accepted after the truncation convergence check.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFisher {
    pub h: Matrix2<f64>,
    /// `None` for rank-deficient probes.
    /// The trace formula gives the complex conjugate of the matrix built
    /// from `cov + iΩ/2`; real parts and bounds agree.
    pub j: Option<Matrix2<Complex64>>,
    pub jinv: Option<Matrix2<Complex64>>,
    /// Levels per mode of the accepted truncation.
    pub dim: usize,
    /// Largest relative change seen between `dim` and `dim + 5`.
    pub convergence: f64,
}

fn rel_change<T>(a: &Matrix2<T>, b: &Matrix2<T>) -> f64
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    let scale = a.iter().chain(b.iter()).map(|x| x.modulus()).fold(0.0, f64::max);
    let diff = (a - b).iter().map(|x| x.modulus()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn raw_fisher(set: &FockOperatorSet, mode: usize) -> Result<(Matrix2<f64>, Option<Matrix2<Complex64>>)> {
    let h = sld_fisher_fock(set, mode)?;
    let j = match rld_fisher_fock(set, mode) {
        Ok(j) => Some(j),
        Err(Error::PureState { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok((h, j))
}

/// Evaluates `H` and `J` in the eigenbasis frame, growing the truncation in
/// steps of 5 until the results at `dim` and `dim + 5` agree to `conv_tol`.
pub fn converged_fisher(probe: &Probe, displaced_mode: usize, config: &OracleConfig) -> Result<OracleFisher> {
    let mut dim = eigen_frame_dim(probe, config)?;
    let mut current = raw_fisher(&build_probe_fock(probe, Some(dim), Frame::Eigen, config)?, displaced_mode)?;
    loop {
        let next_set = build_probe_fock(probe, Some(dim + 5), Frame::Eigen, config)?;
        let next = raw_fisher(&next_set, displaced_mode)?;
        let mut change = rel_change(&current.0, &next.0);
        if let (Some(a), Some(b)) = (&current.1, &next.1) {
            change = change.max(rel_change(a, b));
        }
        if current.1.is_some() != next.1.is_some() {
            change = f64::INFINITY;
        }
        if change < config.conv_tol {
            let (h, j) = current;
            let jinv = match j {
                Some(j) => Some(j.try_inverse().ok_or_else(|| {
                    Error::RldUnavailable("oracle RLD matrix is singular".into())
                })?),
                None => None,
            };
            return Ok(OracleFisher { h, j, jinv, dim, convergence: change });
        }
        if dim + 5 > config.max_dim {
            return Err(Error::Truncation {
                dim,
                reason: format!("Fisher matrices changed by {change:e} between dim and dim+5"),
            });
        }
        dim += 5;
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn cfg() -> OracleConfig {
        OracleConfig::default()
    }

    #[test]
    fn ladder_map_matches_bogoliubov() {
        let r = 0.37;
        let b = heisenberg_ladder_map(&Probe::Single { r, n: 0.0 });
        // a -> a cosh r + a† sinh r
        assert_abs_diff_eq!(b[(0, 0)], r.cosh(), epsilon = 1e-14);
        assert_abs_diff_eq!(b[(1, 0)], r.sinh(), epsilon = 1e-14);
        let b2 = heisenberg_ladder_map(&Probe::Tmst { r, n: 0.0 });
        // a -> a cosh r + b† sinh r
        assert_abs_diff_eq!(b2[(0, 0)], r.cosh(), epsilon = 1e-14);
        assert_abs_diff_eq!(b2[(3, 0)], r.sinh(), epsilon = 1e-14);
        assert_abs_diff_eq!(b2[(1, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn vacuum_probe_is_ground_state() {
        for frame in [Frame::Eigen, Frame::Lab] {
            let set = build_probe_fock(&Probe::Single { r: 0.0, n: 0.0 }, Some(10), frame, &cfg()).unwrap();
            let rho = set.rho0();
            assert_abs_diff_eq!(rho[(0, 0)].re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
            let m = moments_fock(&set, &[vec![(0, Quadrature::Q), (0, Quadrature::Q)]]).unwrap();
            assert_abs_diff_eq!(m[0].re, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn commutator_on_bulk() {
        let set = build_probe_fock(&Probe::Single { r: 0.5, n: 0.4 }, Some(30), Frame::Eigen, &cfg()).unwrap();
        let q = set.q(0).to_dense();
        let p = set.p(0).to_dense();
        let comm = &q * &p - &p * &q;
        for k in 0..20 {
            assert_abs_diff_eq!(comm[(k, k)].im, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(comm[(k, k)].re, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn thermal_second_moments() {
        let set = build_probe_fock(&Probe::Single { r: 0.0, n: 2.0 }, None, Frame::Eigen, &cfg()).unwrap();
        let m = moments_fock(&set, &[vec![(0, Quadrature::P), (0, Quadrature::P)]]).unwrap();
        assert_abs_diff_eq!(m[0].re, 2.5, epsilon = 1e-8);
    }

    #[test]
    fn tmst_cross_moment() {
        let (r, n) = (0.5, 0.2);
        let set = build_probe_fock(&Probe::Tmst { r, n }, Some(25), Frame::Eigen, &cfg()).unwrap();
        let m = moments_fock(&set, &[vec![(0, Quadrature::Q), (1, Quadrature::Q)]]).unwrap();
        let expected = (2.0 * n + 1.0) * (2.0 * r).sinh() / 2.0;
        assert_abs_diff_eq!(m[0].re, expected, epsilon = 1e-8);
        assert_abs_diff_eq!(m[0].re, 0.8226, epsilon = 1e-4);
        let vac = build_probe_fock(&Probe::Tmst { r: 0.5, n: 0.0 }, Some(25), Frame::Eigen, &cfg()).unwrap();
        let m = moments_fock(&vac, &[vec![(0, Quadrature::Q), (0, Quadrature::Q)]]).unwrap();
        assert_abs_diff_eq!(m[0].re, 1f64.cosh() / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn truncation_errors_are_explicit() {
        let tight = OracleConfig { max_dim: 10, ..cfg() };
        let err = build_probe_fock(&Probe::Single { r: 0.0, n: 3.0 }, None, Frame::Eigen, &tight).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
        let err = build_probe_fock(&Probe::Single { r: 1.0, n: 1.0 }, Some(12), Frame::Lab, &cfg()).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }), "{err}");
    }

    #[test]
    fn vacuum_sld_and_pure_rld() {
        let set = build_probe_fock(&Probe::Coherent, Some(10), Frame::Eigen, &cfg()).unwrap();
        let h = sld_fisher_fock(&set, 0).unwrap();
        assert_abs_diff_eq!(h, Matrix2::identity() * 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!((h.try_inverse().unwrap()).trace(), 1.0, epsilon = 1e-12);
        assert!(matches!(rld_fisher_fock(&set, 0), Err(Error::PureState { .. })));
    }

    #[test]
    fn thermal_rld_bound_is_four() {
        let set = build_probe_fock(&Probe::Single { r: 0.0, n: 1.0 }, None, Frame::Eigen, &cfg()).unwrap();
        let jinv = rld_fisher_fock(&set, 0).unwrap().try_inverse().unwrap();
        let re: f64 = jinv.map(|z| z.re).trace();
        let im = jinv.map(|z| z.im);
        let abs_im = 2.0 * im[(0, 1)].abs();
        assert_abs_diff_eq!(re, 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(re + abs_im, 4.0, epsilon = 1e-7);
    }

    #[test]
    fn displaced_copy_has_same_fisher() {
        let set = build_probe_fock(&Probe::Tmst { r: 0.4, n: 0.5 }, Some(30), Frame::Eigen, &cfg()).unwrap();
        let moved = set.displaced(0, 0.8, -1.3).unwrap();
        let (h0, h1) = (sld_fisher_fock(&set, 0).unwrap(), sld_fisher_fock(&moved, 0).unwrap());
        assert_abs_diff_eq!(h0, h1, epsilon = 1e-10);
        let (j0, j1) = (rld_fisher_fock(&set, 0).unwrap(), rld_fisher_fock(&moved, 0).unwrap());
        assert!((j0 - j1).iter().all(|z| z.norm() < 1e-10));
        let m = moments_fock(&moved, &[vec![(0, Quadrature::Q)], vec![(0, Quadrature::P)]]).unwrap();
        assert_abs_diff_eq!(m[0].re, 0.8, epsilon = 1e-10);
        assert_abs_diff_eq!(m[1].re, -1.3, epsilon = 1e-10);
    }

    #[test]
    fn lab_frame_agrees_with_eigen_frame() {
        let probe = Probe::Single { r: 0.4, n: 0.3 };
        let lab = build_probe_fock(&probe, Some(60), Frame::Lab, &cfg()).unwrap();
        let eig = build_probe_fock(&probe, None, Frame::Eigen, &cfg()).unwrap();
        let hl = sld_fisher_fock(&lab, 0).unwrap();
        let he = sld_fisher_fock(&eig, 0).unwrap();
        assert_relative_eq!(hl, he, max_relative = 1e-8);
        let jl = rld_fisher_fock(&lab, 0).unwrap();
        let je = rld_fisher_fock(&eig, 0).unwrap();
        assert!((jl - je).iter().all(|z| z.norm() < 1e-7 * je.camax()), "{jl} vs {je}");
    }

    #[test]
    fn convergence_reports_dimension() {
        let of = converged_fisher(&Probe::Tmst { r: 0.3, n: 1.0 }, 0, &cfg()).unwrap();
        assert!(of.dim >= 20 && of.dim <= cfg().max_dim);
        assert!(of.convergence < 1e-8);
        assert!(of.jinv.is_some());
        let pure = converged_fisher(&Probe::Tmst { r: 0.3, n: 0.0 }, 0, &cfg()).unwrap();
        assert!(pure.j.is_none());
    }
}
