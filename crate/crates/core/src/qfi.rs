//! Quantum Fisher information and the resulting precision bounds.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{expectation, variance, DiagonalObservable, HermitianMatrix, TwoModeState};
use crate::protocol::{generator_observable, phase_derivatives, GyroParams};
use crate::states::{calibrate, Family};

/// Relative eigenvalue floor for the mixed-state formula.
pub const EIGEN_CUTOFF: f64 = 1e-12;
/// Eigenvalues below this are treated as a broken density matrix.
pub const NEGATIVE_EIGEN_TOL: f64 = -1e-8;
/// Planck constant in J s.
pub const PLANCK: f64 = 6.626_070_15e-34;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Which phase the probe is used to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhaseChoice {
    Phi1,
    Phi2,
    PhiPlus,
    PhiMinus,
    /// θ itself, through the full rotation generator at the given working point.
    ThetaDirect { theta: f64, jt: f64 },
}

impl PhaseChoice {
    pub fn name(&self) -> &'static str {
        match self {
            PhaseChoice::Phi1 => "phi1",
            PhaseChoice::Phi2 => "phi2",
            PhaseChoice::PhiPlus => "plus",
            PhaseChoice::PhiMinus => "minus",
            PhaseChoice::ThetaDirect { .. } => "theta",
        }
    }

    /// Same choice, with a θ working point taken from `params`.
    pub fn at(self, params: &GyroParams) -> Self {
        match self {
            PhaseChoice::ThetaDirect { .. } => PhaseChoice::ThetaDirect {
                theta: params.theta,
                jt: params.jt(),
            },
            other => other,
        }
    }

    /// Generator whose variance gives the QFI: `n1`, `n2`, `(n1 ± n2)/2`, or the rotation generator.
    pub fn generator(&self) -> DiagonalObservable {
        match *self {
            PhaseChoice::Phi1 => DiagonalObservable::number(1),
            PhaseChoice::Phi2 => DiagonalObservable::number(2),
            PhaseChoice::PhiPlus => DiagonalObservable::linear(0.5, 0.5),
            PhaseChoice::PhiMinus => DiagonalObservable::linear(0.5, -0.5),
            PhaseChoice::ThetaDirect { theta, jt } => {
                generator_observable(&GyroParams::with_jt(theta, jt))
            }
        }
    }

    /// `dφ/dθ` at the working point of `params`.
    pub fn derivative(&self, params: &GyroParams) -> f64 {
        let d = phase_derivatives(params);
        match self {
            PhaseChoice::Phi1 => d.phi1,
            PhaseChoice::Phi2 => d.phi2,
            PhaseChoice::PhiPlus => d.phi_plus,
            PhaseChoice::PhiMinus => d.phi_minus,
            PhaseChoice::ThetaDirect { .. } => 1.0,
        }
    }

    /// Largest `|dφ/dθ|` over θ.
    pub fn max_derivative(&self, params: &GyroParams) -> f64 {
        let jt = params.jt().abs();
        match self {
            PhaseChoice::Phi1 | PhaseChoice::Phi2 | PhaseChoice::PhiMinus => 2.0 / SQRT_3 * jt,
            PhaseChoice::PhiPlus => 2.0 * jt,
            PhaseChoice::ThetaDirect { .. } => 1.0,
        }
    }
}

impl fmt::Display for PhaseChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhaseChoice {
    type Err = Error;

    /// Parses `phi1`, `phi2`, `plus`, `minus` or `theta`; `theta` starts at θ = 0, `J t_ω = 1`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phi1" => Ok(PhaseChoice::Phi1),
            "phi2" => Ok(PhaseChoice::Phi2),
            "plus" | "phi_plus" | "phi+" => Ok(PhaseChoice::PhiPlus),
            "minus" | "phi_minus" | "phi-" => Ok(PhaseChoice::PhiMinus),
            "theta" | "theta_direct" => Ok(PhaseChoice::ThetaDirect { theta: 0.0, jt: 1.0 }),
            other => Err(Error::Domain(format!("unknown phase choice '{other}'"))),
        }
    }
}

/// `4 Var(G)` for the generator of `choice`.
pub fn qfi_pure(state: &TwoModeState, choice: &PhaseChoice) -> Result<f64> {
    Ok(4.0 * variance(state, &choice.generator())?)
}

/// Mixed-state QFI from the spectral decomposition of `rho`.
///
/// Eigenvalues below `cutoff · λ_max` are dropped from the double sum.
pub fn qfi_mixed(rho: &HermitianMatrix, obs: &DiagonalObservable, cutoff: f64) -> Result<f64> {
    let weights = obs.weights_on(rho.basis())?;
    let eig = rho.eig()?;
    let lambda = &eig.eigenvalues;
    let min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < NEGATIVE_EIGEN_TOL {
        return Err(Error::InvalidDensity {
            min_eigenvalue: min,
        });
    }
    let lmax = lambda.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(Error::InvalidDensity {
            min_eigenvalue: lmax,
        });
    }
    let kept: Vec<usize> = (0..lambda.len())
        .filter(|&m| lambda[m] > cutoff * lmax)
        .collect();
    let vectors: Vec<Vec<num_complex::Complex64>> = kept.iter().map(|&m| eig.vector(m)).collect();
    // G|v_m> for every retained eigenvector
    let applied: Vec<Vec<num_complex::Complex64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&weights).map(|(c, w)| c * *w).collect())
        .collect();

    let first: f64 = kept
        .iter()
        .zip(&vectors)
        .map(|(&m, v)| {
            let g2: f64 = v
                .iter()
                .zip(&weights)
                .map(|(c, w)| w * w * c.norm_sqr())
                .sum();
            4.0 * lambda[m] * g2
        })
        .sum();
    let second: f64 = (0..kept.len())
        .into_par_iter()
        .map(|a| {
            let la = lambda[kept[a]];
            let mut acc = 0.0;
            for b in 0..kept.len() {
                let lb = lambda[kept[b]];
                let elem: num_complex::Complex64 = vectors[a]
                    .iter()
                    .zip(&applied[b])
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                acc += 8.0 * la * lb / (la + lb) * elem.norm_sqr();
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok((first - second).max(0.0))
}

/// `Δ²n / <n> - 1` for mode 1 or 2.
pub fn mandel_q(state: &TwoModeState, mode: usize) -> Result<f64> {
    if mode != 1 && mode != 2 {
        return Err(Error::Domain(format!("mode must be 1 or 2, got {mode}")));
    }
    let obs = DiagonalObservable::number(mode);
    let mean = expectation(state, &obs)?;
    if !(mean > 0.0) {
        return Err(Error::UndefinedMandelQ { mode });
    }
    Ok(variance(state, &obs)? / mean - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticQfi {
    pub value: f64,
    /// `false` when the formula only holds for large `N`.
    pub exact: bool,
}

/// Closed-form QFI where one is known.
pub fn qfi_analytic(family: Family, n: f64, choice: &PhaseChoice) -> Result<AnalyticQfi> {
    let exact = |value| Ok(AnalyticQfi { value, exact: true });
    let asymptote = |value| Ok(AnalyticQfi { value, exact: false });
    use PhaseChoice::*;
    match (family, choice) {
        (Family::Uncorrelated, PhiMinus) => exact(n),
        (Family::Bat, PhiMinus) => exact(n * (n / 2.0 + 1.0)),
        (Family::Noon, PhiMinus | Phi1 | Phi2) => exact(n * n),
        (Family::MaxEntangledM, PhiPlus) => exact(n * n),
        (Family::Ecs, Phi1 | Phi2) => asymptote(n * (n + 2.0)),
        (Family::Ses, Phi1 | Phi2) => asymptote(5.0 * n * n + 4.0 * n),
        (Family::Ses, PhiMinus) => asymptote(3.0 * n * n + 2.0 * n),
        (Family::Eess, Phi1 | Phi2) => {
            let r = calibrate(family, n)?.expect("squeezed family has a parameter");
            exact(eess_qfi_closed_form(r))
        }
        _ => Err(Error::NoFormula {
            family: family.name().into(),
            choice: choice.name().into(),
        }),
    }
}

/// EESS `F(φ1)` at squeezing `r`, with `N` the mean particle number at that `r`.
pub fn eess_qfi_closed_form(r: f64) -> f64 {
    let n = crate::states::eess_mean(r);
    let c2 = (2.0 * r).cosh();
    let num = 2.0 * r.cosh().powi(2) + r.sinh().powi(2) - (3.0 + c2) / (2.0 * c2.powf(2.5));
    2.0 * n * num / (1.0 - c2.powf(-1.5)) - n * n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub qfi: f64,
    pub mu: u32,
    /// `1/sqrt(μ F)`.
    pub delta_phase: f64,
    /// Δθ at the working point θ; infinite where `dφ/dθ` vanishes.
    pub delta_theta: f64,
    /// Δθ at the θ maximizing `|dφ/dθ|`.
    pub delta_theta_min: f64,
    /// Δω in rad/s, when a geometry is supplied.
    pub delta_omega: Option<f64>,
}

impl PrecisionReport {
    /// Adds `Δω` for ring length `length` (m) and particle mass `mass` (kg).
    pub fn with_rotation_rate(mut self, length: f64, mass: f64) -> Result<Self> {
        self.delta_omega = Some(rotation_rate(self.delta_theta, length, mass)?);
        Ok(self)
    }
}

pub fn phase_uncertainty(
    qfi: f64,
    params: &GyroParams,
    choice: &PhaseChoice,
) -> Result<PrecisionReport> {
    params.validate()?;
    if !(qfi > 0.0 && qfi.is_finite()) {
        return Err(Error::NoInformation { qfi });
    }
    let delta_phase = 1.0 / (params.mu as f64 * qfi).sqrt();
    Ok(PrecisionReport {
        qfi,
        mu: params.mu,
        delta_phase,
        delta_theta: delta_phase / choice.derivative(params).abs(),
        delta_theta_min: delta_phase / choice.max_derivative(params),
        delta_omega: None,
    })
}

/// `Δω = Δθ h / (L² m)`.
pub fn rotation_rate(delta_theta: f64, length: f64, mass: f64) -> Result<f64> {
    if !(length > 0.0 && mass > 0.0) {
        return Err(Error::Domain(format!(
            "ring length {length} and mass {mass} must be positive"
        )));
    }
    Ok(delta_theta * PLANCK / (length * length * mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{mix, Basis};
    use crate::states::StateSpec;
    use num_complex::Complex64;

    fn build(f: Family, n: f64) -> TwoModeState {
        StateSpec::new(f, n).unwrap().build().unwrap()
    }

    #[test]
    fn number_state_values() {
        let q = |f, n, c| qfi_pure(&build(f, n), &c).unwrap();
        assert!((q(Family::Noon, 2.0, PhaseChoice::PhiMinus) - 4.0).abs() < 1e-12);
        assert!((q(Family::Bat, 4.0, PhaseChoice::PhiMinus) - 12.0).abs() < 1e-12);
        assert!((q(Family::MaxEntangledM, 2.0, PhaseChoice::PhiPlus) - 4.0).abs() < 1e-12);
        let vac = TwoModeState::vacuum(Basis::Paired { n_max: 3 }).unwrap();
        assert_eq!(qfi_pure(&vac, &PhaseChoice::Phi1).unwrap(), 0.0);
    }

    #[test]
    fn mixed_reduces_to_pure() {
        let s = build(Family::Ses, 2.0);
        let pure = qfi_pure(&s, &PhaseChoice::Phi1).unwrap();
        let mixed = qfi_mixed(&s.projector(), &DiagonalObservable::number(1), EIGEN_CUTOFF).unwrap();
        assert!((pure - mixed).abs() < 1e-9 * pure);
    }

    #[test]
    fn commuting_mixture_has_no_information() {
        let b = Basis::Paired { n_max: 2 };
        let one = Complex64::new(1.0, 0.0);
        let s0 = TwoModeState::from_terms(b, &[((0, 0), one)]).unwrap();
        let s2 = TwoModeState::from_terms(b, &[((2, 0), one)]).unwrap();
        let rho = mix([(0.5, &s0), (0.5, &s2)]).unwrap();
        let f = qfi_mixed(&rho, &DiagonalObservable::number(1), EIGEN_CUTOFF).unwrap();
        assert!(f.abs() < 1e-12);
    }

    #[test]
    fn mandel_q_values() {
        assert!((mandel_q(&build(Family::Ses, 2.0), 1).unwrap() - 9.0).abs() < 0.5);
        assert!((mandel_q(&build(Family::Eess, 2.0), 1).unwrap() - 14.0).abs() < 0.5);
        let vac = TwoModeState::vacuum(Basis::Paired { n_max: 1 }).unwrap();
        assert!(matches!(mandel_q(&vac, 2), Err(Error::UndefinedMandelQ { mode: 2 })));
    }

    #[test]
    fn analytic_table() {
        let v = qfi_analytic(Family::Noon, 6.0, &PhaseChoice::PhiMinus).unwrap();
        assert_eq!(v, AnalyticQfi { value: 36.0, exact: true });
        assert!(!qfi_analytic(Family::Ses, 50.0, &PhaseChoice::Phi1).unwrap().exact);
        assert!(qfi_analytic(Family::Ecs, 2.0, &PhaseChoice::PhiPlus).is_err());
        let e = qfi_analytic(Family::Eess, 2.0, &PhaseChoice::Phi1).unwrap().value;
        let n = qfi_pure(&build(Family::Eess, 2.0), &PhaseChoice::Phi1).unwrap();
        assert!((e - n).abs() < 1e-8 * n);
    }

    #[test]
    fn precision_conversions() {
        let p1 = GyroParams::default();
        let p4 = GyroParams { mu: 4, ..p1 };
        let a = phase_uncertainty(16.0, &p1, &PhaseChoice::PhiPlus).unwrap();
        let b = phase_uncertainty(16.0, &p4, &PhaseChoice::PhiPlus).unwrap();
        assert!((a.delta_phase - 2.0 * b.delta_phase).abs() < 1e-15);
        // M-state with N = 4: Δθ_min = 1 / (2 N J t)
        assert!((a.delta_theta_min - 1.0 / 8.0).abs() < 1e-15);
        assert!(phase_uncertainty(0.0, &p1, &PhaseChoice::Phi1).is_err());
    }

    #[test]
    fn rotation_rate_scaling() {
        let w = rotation_rate(1e-3, 1e-4, 1.44e-25).unwrap();
        assert!((w - 4.6e-4).abs() < 0.01e-4);
        assert!((rotation_rate(2e-3, 1e-4, 1.44e-25).unwrap() - 2.0 * w).abs() < 1e-18);
        assert!((rotation_rate(1e-3, 2e-4, 1.44e-25).unwrap() - w / 4.0).abs() < 1e-18);
        assert!(rotation_rate(1e-3, 0.0, 1.0).is_err());
    }
}
