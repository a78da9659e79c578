//! Duan inseparability test and its relation to beating the standard
//! quantum limit with the double-homodyne scheme.
//!
//! The EPR-type operators are taken in the frame where the second mode is
//! rotated by π, `u = |a| q₁ − q₂/a` and `v = |a| p₁ + p₂/a`, so that for the
//! two-mode squeezed probe `⟨Δu²⟩ + ⟨Δv²⟩` at `a = 1` is exactly the scheme
//! variance sum.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{symplectic_spectrum, GaussianState};
use crate::probe::Probe;
use crate::sim::double_homodyne;
use crate::SQL;

const FLAG_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuanResult {
    pub a: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub entangled_sufficient: bool,
    /// Both reduced states have the same covariance.
    pub symmetric: bool,
}

fn quadratic_form(cov: &DMatrix<f64>, c: &[f64; 4]) -> f64 {
    (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| c[i] * cov[(i, j)] * c[j]).sum()
}

fn two_mode(state: &GaussianState) -> Result<()> {
    if state.modes() != 2 {
        return Err(Error::Domain(format!("Duan test needs two modes, got {}", state.modes())));
    }
    Ok(())
}

fn is_symmetric(cov: &DMatrix<f64>) -> bool {
    (0..2).all(|i| (0..2).all(|j| (cov[(i, j)] - cov[(i + 2, j + 2)]).abs() <= SYMMETRY_TOL))
}

pub fn duan_check(state: &GaussianState, a: f64) -> Result<DuanResult> {
    two_mode(state)?;
    if a == 0.0 || !a.is_finite() {
        return Err(Error::Domain(format!("Duan parameter must be finite and nonzero, got {a}")));
    }
    let cov = state.cov();
    let lhs = quadratic_form(cov, &[a.abs(), 0.0, -1.0 / a, 0.0]) + quadratic_form(cov, &[0.0, a.abs(), 0.0, 1.0 / a]);
    let rhs = a * a + 1.0 / (a * a);
    Ok(DuanResult { a, lhs, rhs, entangled_sufficient: lhs < rhs - FLAG_TOL, symmetric: is_symmetric(cov) })
}

/// Duan test at the `a` minimising `lhs − rhs`.
///
/// With `S_k = Var(q_k) + Var(p_k)` and `c = Cov(q₁,q₂) − Cov(p₁,p₂)`,
/// `lhs − rhs = a²(S₁−1) + (S₂−1)/a² − 2 sgn(a) c`, whose minimum is
/// `2√((S₁−1)(S₂−1)) − 2|c|`.
pub fn duan_optimal(state: &GaussianState) -> Result<DuanResult> {
    two_mode(state)?;
    let cov = state.cov();
    let s1 = cov[(0, 0)] + cov[(1, 1)] - 1.0;
    let s2 = cov[(2, 2)] + cov[(3, 3)] - 1.0;
    let c = cov[(0, 2)] - cov[(1, 3)];
    let sign = if c < 0.0 { -1.0 } else { 1.0 };
    let a = if s1 > 0.0 && s2 > 0.0 { sign * (s2 / s1).powf(0.25) } else { sign };
    duan_check(state, a)
}

/// Smallest symplectic eigenvalue of the partially transposed covariance
/// (`p₂ → −p₂`); below ½ exactly when the state is entangled.
pub fn ppt_min_symplectic(state: &GaussianState) -> Result<f64> {
    two_mode(state)?;
    let mut cov = state.cov().clone();
    for k in 0..4 {
        if k != 3 {
            cov[(3, k)] = -cov[(3, k)];
            cov[(k, 3)] = -cov[(k, 3)];
        }
    }
    Ok(symplectic_spectrum(&cov).into_iter().fold(f64::INFINITY, f64::min))
}

pub fn ppt_entangled(state: &GaussianState) -> Result<bool> {
    Ok(ppt_min_symplectic(state)? < 0.5 - 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlEntanglementReport {
    pub probe: Probe,
    /// Variance sum of the double-homodyne scheme.
    pub scheme_variance: f64,
    pub beats_sql: bool,
    pub duan_a1: DuanResult,
    pub duan_optimal: DuanResult,
    pub entangled: bool,
    /// Inseparability from the partial-transpose test.
    pub ppt_entangled: bool,
    pub entangled_without_beating_sql: bool,
    /// For the asymmetric probe: the `N₂` at which the scheme variance
    /// reaches the SQL, for the given `r` and `N₁`.
    pub boundary_n2: Option<f64>,
}

/// Scheme variance sum for any two-mode probe, from the propagated response.
pub fn scheme_variance_for(probe: &Probe) -> Result<f64> {
    let v = double_homodyne(probe)?.var0()?;
    Ok(v[0] + v[1])
}

pub const BISECTION_TOL: f64 = 1e-8;

/// Smallest `N₂ ≥ 0` where the asymmetric scheme variance reaches 2.
pub fn boundary_n2(r: f64, n1: f64) -> Result<Option<f64>> {
    let e = |n2: f64| scheme_variance_for(&Probe::TmstAsym { r, n1, n2 });
    if e(0.0)? >= SQL {
        return Ok(Some(0.0));
    }
    let mut hi = 1.0;
    while e(hi)? < SQL {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(None);
        }
    }
    let mut lo = 0.0;
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if e(mid)? < SQL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

pub fn sql_beating_vs_entanglement(probe: &Probe) -> Result<SqlEntanglementReport> {
    probe.validate()?;
    let (r, n1) = match *probe {
        Probe::Tmst { r, n } => (r, n),
        Probe::TmstAsym { r, n1, .. } => (r, n1),
        _ => return Err(Error::Domain("entanglement report needs a two-mode probe".into())),
    };
    let state = probe.state()?;
    let scheme_variance = scheme_variance_for(probe)?;
    let beats_sql = scheme_variance < SQL - FLAG_TOL;
    let duan_a1 = duan_check(&state, 1.0)?;
    let duan_opt = duan_optimal(&state)?;
    let entangled = duan_opt.entangled_sufficient;
    let boundary = match probe {
        Probe::TmstAsym { .. } => boundary_n2(r, n1)?,
        _ => None,
    };
    Ok(SqlEntanglementReport {
        probe: *probe,
        scheme_variance,
        beats_sql,
        duan_a1,
        duan_optimal: duan_opt,
        entangled,
        ppt_entangled: ppt_entangled(&state)?,
        entangled_without_beating_sql: entangled && !beats_sql,
        boundary_n2: boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::scheme_variance_sum;
    use approx::assert_abs_diff_eq;

    fn tmst(r: f64, n: f64) -> GaussianState {
        Probe::Tmst { r, n }.state().unwrap()
    }

    #[test]
    fn duan_examples() {
        let d = duan_check(&tmst(0.5, 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(d.lhs, 2.0 * (-1f64).exp(), epsilon = 1e-12);
        assert!(d.entangled_sufficient && d.symmetric);
        let vac = duan_check(&GaussianState::vacuum(2), 1.0).unwrap();
        assert_abs_diff_eq!(vac.lhs, 2.0, epsilon = 1e-15);
        assert!(!vac.entangled_sufficient);
        assert!(duan_check(&tmst(0.5, 0.0), 0.0).is_err());
        assert!(duan_check(&GaussianState::vacuum(1), 1.0).is_err());
    }

    #[test]
    fn duan_equals_scheme_variance() {
        for r in [0.0, 0.3, 0.6, 1.0] {
            for n in [0.2, 0.5, 1.0, 2.0] {
                let d = duan_check(&tmst(r, n), 1.0).unwrap();
                assert!((d.lhs - scheme_variance_sum(r, n, None)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_report_links_sql_and_entanglement() {
        let rep = sql_beating_vs_entanglement(&Probe::Tmst { r: 0.3, n: 0.0 }).unwrap();
        assert!(rep.beats_sql && rep.entangled && rep.ppt_entangled);
        assert_abs_diff_eq!(rep.scheme_variance, 2.0 * (-0.6f64).exp(), epsilon = 1e-12);
        let rep = sql_beating_vs_entanglement(&Probe::Tmst { r: 0.4, n: 1.0 }).unwrap();
        assert!(!rep.beats_sql && !rep.entangled && !rep.ppt_entangled);
        assert_abs_diff_eq!(rep.duan_a1.lhs, 6.0 * (-0.8f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_boundary() {
        let n2 = boundary_n2(0.5, 0.0).unwrap().unwrap();
        assert!((n2 - (1f64.exp() - 1.0)).abs() < 1e-7, "{n2}");
        let rep = sql_beating_vs_entanglement(&Probe::TmstAsym { r: 0.5, n1: 0.0, n2: 2.2 }).unwrap();
        assert!(!rep.beats_sql);
        assert!(rep.entangled && rep.ppt_entangled);
        assert!(rep.entangled_without_beating_sql);
        assert!(!rep.duan_a1.symmetric);
    }

    #[test]
    fn ppt_on_products() {
        assert!(!ppt_entangled(&GaussianState::thermal(0.3, 2).unwrap()).unwrap());
        assert_abs_diff_eq!(ppt_min_symplectic(&tmst(0.5, 0.0)).unwrap(), (-1f64).exp() / 2.0, epsilon = 1e-10);
    }
}
