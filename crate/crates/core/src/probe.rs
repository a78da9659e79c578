use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;

/// Probe families. The unknown displacement always acts on mode 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Probe {
    /// Vacuum (equivalently any coherent state).
    Coherent,
    /// Squeezed thermal state `S(r) ν_N S(r)†`.
    Single { r: f64, n: f64 },
    /// Two-mode squeezed thermal state `S₂(r) (ν_N ⊗ ν_N) S₂(r)†`.
    Tmst { r: f64, n: f64 },
    /// Asymmetric variant `S₂(r) (ν_N1 ⊗ ν_N2) S₂(r)†`.
    TmstAsym { r: f64, n1: f64, n2: f64 },
}

impl Probe {
    pub fn modes(&self) -> usize {
        match self {
            Probe::Coherent | Probe::Single { .. } => 1,
            Probe::Tmst { .. } | Probe::TmstAsym { .. } => 2,
        }
    }

    /// Thermal occupations of the input modes.
    pub fn thermal_numbers(&self) -> Vec<f64> {
        match *self {
            Probe::Coherent => vec![0.0],
            Probe::Single { n, .. } => vec![n],
            Probe::Tmst { n, .. } => vec![n, n],
            Probe::TmstAsym { n1, n2, .. } => vec![n1, n2],
        }
    }

    pub fn squeezing(&self) -> f64 {
        match *self {
            Probe::Coherent => 0.0,
            Probe::Single { r, .. } | Probe::Tmst { r, .. } | Probe::TmstAsym { r, .. } => r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.squeezing();
        if !r.is_finite() {
            return Err(Error::Domain(format!("squeezing must be finite, got {r}")));
        }
        for n in self.thermal_numbers() {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::Domain(format!("thermal photon number must be >= 0, got {n}")));
            }
        }
        Ok(())
    }

    /// True when every input mode is in its vacuum, i.e. the probe is pure.
    pub fn is_pure(&self) -> bool {
        self.thermal_numbers().iter().all(|&n| n == 0.0)
    }

    /// Covariance representation of the undisplaced probe.
    pub fn state(&self) -> Result<GaussianState> {
        self.validate()?;
        match *self {
            Probe::Coherent => Ok(GaussianState::vacuum(1)),
            Probe::Single { r, n } => GaussianState::thermal(n, 1)?.squeeze_single(0, r),
            Probe::Tmst { r, n } => GaussianState::thermal(n, 2)?.squeeze_two(0, 1, r),
            Probe::TmstAsym { r, n1, n2 } => {
                GaussianState::thermal_product(&[n1, n2])?.squeeze_two(0, 1, r)
            }
        }
    }
}
