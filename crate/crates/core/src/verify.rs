//! Self-check suite: every identity and oracle comparison the library relies on.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::fock::{covariance, mean_particle_number, DiagonalObservable, TwoModeState};
use crate::loss::{
    analytic_branch_probabilities, branch_decompose, eess_identity_residual, kraus_apply,
    tilde_r, LossChannel, MIXED_DIM_CAP,
};
use crate::protocol::{
    generator_observable, phase_derivatives, simulate_protocol, verify_mode_algebra, GyroParams,
    ModeMatrix3, ThreeModeState,
};
use crate::qfi::{eess_qfi_closed_form, mandel_q, qfi_mixed, qfi_pure, PhaseChoice, EIGEN_CUTOFF};
use crate::states::{Family, StateSpec, Truncation};
use crate::sweep::{lossy_qfi, LOSSY_N_MAX};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn new(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            name,
            measured,
            tolerance,
            passed: measured <= tolerance,
            detail: None,
        }
    }

    fn from_result(name: &'static str, tolerance: f64, r: Result<f64>) -> Self {
        match r {
            Ok(m) => Self::new(name, m, tolerance),
            Err(e) => Self {
                name,
                measured: f64::NAN,
                tolerance,
                passed: false,
                detail: Some(e.to_string()),
            },
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<34} measured {:.3e}  tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )?;
        if let Some(d) = &self.detail {
            write!(f, "  ({d})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        writeln!(
            f,
            "{} of {} checks passed",
            self.checks.len() - failed,
            self.checks.len()
        )
    }
}

type CheckFn = fn() -> Check;

const CHECKS: &[CheckFn] = &[
    check_mode_algebra,
    check_tritter_unitary,
    check_many_body,
    check_number_states,
    check_eess_closed_form,
    check_mandel_identity,
    check_chain_rule,
    check_branch_closures,
    check_eess_identity,
    check_no_loss_branch,
    check_oracle_equivalence,
    check_trace_preservation,
    check_mean_damping,
    check_mixed_reduces_to_pure,
    check_monotone_in_eta,
    check_truncation_doubling,
];

/// Runs every check; the order of the report is fixed.
pub fn cmd_verify() -> VerifyReport {
    VerifyReport {
        checks: CHECKS.par_iter().map(|f| f()).collect(),
    }
}

/// θ grid used by the protocol checks.
pub const THETA_GRID: [f64; 8] = [0.0, 0.1, 0.7, 1.5, 2.5, 3.8, 5.0, 5.9];

fn build(family: Family, n: f64) -> Result<TwoModeState> {
    StateSpec::new(family, n)?.build()
}

fn max_of(values: impl IntoIterator<Item = Result<f64>>) -> Result<f64> {
    values
        .into_iter()
        .try_fold(0.0_f64, |acc, v| v.map(|v| acc.max(v)))
}

fn check_mode_algebra() -> Check {
    let m = THETA_GRID
        .iter()
        .map(|&t| verify_mode_algebra(&GyroParams::with_jt(t, 1.0)))
        .fold(0.0, f64::max);
    Check::new("three-mode algebra", m, 1e-12)
}

fn check_tritter_unitary() -> Check {
    Check::new(
        "tritter unitarity",
        ModeMatrix3::tritter(2.0 * PI / 9.0).unitarity_deviation(),
        1e-14,
    )
}

/// Inputs of at most four particles, all placed on the probe sites or the reference.
pub fn many_body_inputs() -> Result<Vec<ThreeModeState>> {
    let one = num_complex::Complex64::new(1.0, 0.0);
    let mut out = vec![
        ThreeModeState::from_terms(&[((0, 1, 0), one)])?,
        ThreeModeState::from_terms(&[((1, 1, 2), one)])?,
    ];
    for (f, n) in [
        (Family::Noon, 1.0),
        (Family::Noon, 2.0),
        (Family::Noon, 4.0),
        (Family::Uncorrelated, 3.0),
        (Family::Bat, 4.0),
        (Family::MaxEntangledM, 2.0),
    ] {
        out.push(ThreeModeState::from_probe(&build(f, n)?)?);
    }
    Ok(out)
}

fn check_many_body() -> Check {
    let run = || -> Result<f64> {
        let inputs = many_body_inputs()?;
        let mut worst: f64 = 0.0;
        for input in &inputs {
            for theta in [0.3, 2.0, 4.4] {
                let p = GyroParams::with_jt(theta, 1.0);
                let q = simulate_protocol(input, &p)?;
                let expected = input.generator_qfi(&p);
                worst = worst
                    .max((q.after_rotation - expected).abs())
                    .max((q.after_inverse - expected).abs());
            }
        }
        Ok(worst)
    };
    Check::from_result("many-body protocol vs generator", 1e-6, run())
}

fn check_number_states() -> Check {
    let run = || -> Result<f64> {
        let mut cases = Vec::new();
        for n in [2.0, 4.0, 8.0] {
            cases.push((Family::Uncorrelated, n, PhaseChoice::PhiMinus, n));
            cases.push((Family::Bat, n, PhaseChoice::PhiMinus, n * (n / 2.0 + 1.0)));
            cases.push((Family::Noon, n, PhaseChoice::PhiMinus, n * n));
            cases.push((Family::MaxEntangledM, n, PhaseChoice::PhiPlus, n * n));
        }
        max_of(cases.into_iter().map(|(f, n, c, expected)| {
            Ok((qfi_pure(&build(f, n)?, &c)? - expected).abs() / expected)
        }))
    };
    Check::from_result("number-state qfi", 1e-12, run())
}

fn check_eess_closed_form() -> Check {
    let run = || {
        max_of([0.3, 0.8, 1.3, 2.0].into_iter().map(|r| {
            let s = StateSpec::with_raw_param(Family::Eess, r)?.build()?;
            let numeric = qfi_pure(&s, &PhaseChoice::Phi1)?;
            Ok((numeric - eess_qfi_closed_form(r)).abs() / numeric)
        }))
    };
    Check::from_result("eess closed-form qfi", 1e-8, run())
}

/// `|F(φ1) - 2N(Q+1)| / F(φ1)` with `N` the state's mean particle number.
pub fn mandel_identity_deviation(state: &TwoModeState) -> Result<f64> {
    let f = qfi_pure(state, &PhaseChoice::Phi1)?;
    let n = mean_particle_number(state);
    let q = mandel_q(state, 1)?;
    Ok((f - 2.0 * n * (q + 1.0)).abs() / f)
}

fn check_mandel_identity() -> Check {
    let run = || {
        let mut cases = Vec::new();
        for f in [Family::Noon, Family::Ecs, Family::Ses, Family::Eess] {
            for n in [1.0, 2.0, 4.0] {
                cases.push((f, n));
            }
        }
        max_of(cases.into_iter().map(|(f, n)| mandel_identity_deviation(&build(f, n)?)))
    };
    Check::from_result("mandel-q identity", 1e-9, run())
}

/// Deviation of `4 Var(G_θ)` from the chain rule through `φ0, φ1, φ2`.
///
/// With `fixed_total` the `φ0` term is dropped, which is valid only when the
/// total particle number does not fluctuate.
pub fn chain_rule_deviation(state: &TwoModeState, theta: f64, fixed_total: bool) -> Result<f64> {
    let p = GyroParams::with_jt(theta, 1.0);
    let direct = 4.0 * crate::fock::variance(state, &generator_observable(&p))?;
    let d = phase_derivatives(&p);
    let (c1, c2) = if fixed_total {
        (d.phi1, d.phi2)
    } else {
        (d.phi0 + d.phi1, d.phi0 + d.phi2)
    };
    let var1 = crate::fock::variance(state, &DiagonalObservable::number(1))?;
    let var2 = crate::fock::variance(state, &DiagonalObservable::number(2))?;
    let cov = covariance(state, &DiagonalObservable::number(1), &DiagonalObservable::number(2))?;
    let chain = c1 * c1 * 4.0 * var1 + c2 * c2 * 4.0 * var2 + 2.0 * c1 * c2 * 4.0 * cov;
    Ok((direct - chain).abs() / direct.abs().max(1.0))
}

fn check_chain_rule() -> Check {
    let run = || -> Result<f64> {
        let fixed = [(Family::Noon, 2.0), (Family::Bat, 4.0), (Family::Uncorrelated, 3.0)];
        let any = [(Family::Ses, 2.0), (Family::Ecs, 2.0), (Family::Eess, 2.0), (Family::SesM, 1.0)];
        let mut worst: f64 = 0.0;
        for theta in [0.0, 0.9, 2.2, 4.0, 6.1] {
            for (f, n) in fixed {
                let s = build(f, n)?;
                worst = worst
                    .max(chain_rule_deviation(&s, theta, true)?)
                    .max(chain_rule_deviation(&s, theta, false)?);
            }
            for (f, n) in any {
                worst = worst.max(chain_rule_deviation(&build(f, n)?, theta, false)?);
            }
        }
        Ok(worst)
    };
    Check::from_result("chain rule through phases", 1e-9, run())
}

fn check_branch_closures() -> Check {
    let run = || -> Result<f64> {
        let mut worst: f64 = 0.0;
        for family in [Family::Ses, Family::Eess] {
            for r in [0.5, 1.0, 1.5] {
                let s = StateSpec::with_raw_param(family, r)?.build()?;
                for eta in [0.2, 0.5, 0.8] {
                    let ens = branch_decompose(&s, &LossChannel::new(eta)?)?;
                    let analytic = analytic_branch_probabilities(family, r, eta)?;
                    let p00 = ens.no_loss().map_or(0.0, |b| b.probability);
                    let (pa, pb) = ens.side_sums();
                    worst = worst
                        .max((p00 - analytic.p00).abs())
                        .max((pa - analytic.sum_pa).abs())
                        .max((pb - analytic.sum_pb).abs())
                        .max((ens.total_probability() - 1.0).abs())
                        .max((analytic.total() - 1.0).abs());
                }
            }
        }
        Ok(worst)
    };
    Check::from_result("loss probability closures", 1e-10, run())
}

fn check_eess_identity() -> Check {
    let mut worst: f64 = 0.0;
    for r in [0.2, 0.5, 1.0, 1.5, 2.5] {
        for eta in [0.1, 0.5, 0.9] {
            worst = worst.max(eess_identity_residual(r, eta).abs());
        }
    }
    Check::new("eess normalization identity", worst, 1e-12)
}

fn check_no_loss_branch() -> Check {
    let run = || -> Result<f64> {
        let mut worst: f64 = 0.0;
        for family in [Family::Ses, Family::Eess] {
            let spec = StateSpec::new(family, 2.0)?;
            let s = spec.build()?;
            let n_max = s.basis().n_max().unwrap_or(0);
            let r = spec.param.unwrap_or(0.0);
            for eta in [0.3, 0.7] {
                let ens = branch_decompose(&s, &LossChannel::new(eta)?)?;
                let branch = &ens.no_loss().expect("no-loss branch").state;
                let expected = StateSpec::with_raw_param(family, tilde_r(r, eta))?
                    .with_truncation(Truncation::Fixed(n_max))
                    .build()?;
                let d = branch
                    .amplitudes()
                    .iter()
                    .zip(expected.amplitudes())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                worst = worst.max(d);
            }
        }
        Ok(worst)
    };
    Check::from_result("no-loss branch is reduced squeezing", 1e-12, run())
}

fn check_oracle_equivalence() -> Check {
    let run = || -> Result<f64> {
        let mut worst: f64 = 0.0;
        for family in [Family::Ses, Family::Eess, Family::Ecs, Family::Noon] {
            let s = build(family, 2.0)?;
            for eta in [0.3, 0.6, 0.9] {
                let ch = LossChannel::new(eta)?;
                let a = branch_decompose(&s, &ch)?.mix()?;
                let b = kraus_apply(&s, &ch)?;
                worst = worst.max(a.max_abs_diff(&b)?);
            }
        }
        Ok(worst)
    };
    Check::from_result("branches vs kraus oracle", 1e-12, run())
}

fn lossy_families() -> [(Family, f64); 6] {
    [
        (Family::Ses, 2.0),
        (Family::Eess, 2.0),
        (Family::Ecs, 2.0),
        (Family::Noon, 2.0),
        (Family::Bat, 2.0),
        (Family::Uncorrelated, 2.0),
    ]
}

fn check_trace_preservation() -> Check {
    let run = || {
        let mut cases = Vec::new();
        for (f, n) in lossy_families() {
            for eta in [0.2, 0.5, 0.8] {
                cases.push((f, n, eta));
            }
        }
        max_of(cases.into_iter().map(|(f, n, eta)| {
            let rho = kraus_apply(&build(f, n)?, &LossChannel::new(eta)?)?;
            Ok((rho.trace() - 1.0).abs())
        }))
    };
    Check::from_result("loss channel trace", 1e-12, run())
}

fn check_mean_damping() -> Check {
    let run = || {
        let mut cases = Vec::new();
        for (f, n) in lossy_families() {
            for eta in [0.2, 0.5, 0.8] {
                cases.push((f, n, eta));
            }
        }
        max_of(cases.into_iter().map(|(f, n, eta)| {
            let s = build(f, n)?;
            let rho = kraus_apply(&s, &LossChannel::new(eta)?)?;
            let mean = rho.expectation(&DiagonalObservable::total_number())?;
            Ok((mean - eta * mean_particle_number(&s)).abs())
        }))
    };
    Check::from_result("mean number damping", 1e-10, run())
}

fn check_mixed_reduces_to_pure() -> Check {
    let run = || {
        max_of(lossy_families().into_iter().map(|(f, n)| {
            let s = build(f, n)?;
            let rho = kraus_apply(&s, &LossChannel::new(1.0)?)?;
            let mixed = qfi_mixed(&rho, &DiagonalObservable::number(1), EIGEN_CUTOFF)?;
            let pure = qfi_pure(&s, &PhaseChoice::Phi1)?;
            Ok((mixed - pure).abs() / pure)
        }))
    };
    Check::from_result("mixed qfi at eta=1 equals pure", 1e-9, run())
}

/// Truncation used for the monotonicity scan: the reproduction cut for paired
/// layouts, adaptive for the dense ones.
fn scan_truncation(family: Family) -> Truncation {
    if family.is_path_symmetric() && !family.is_number_state() {
        Truncation::Clipped(LOSSY_N_MAX)
    } else {
        Truncation::Adaptive
    }
}

/// Largest drop of the lossy QFI between neighbouring grid transmissions, per family.
/// Families whose lossy state exceeds the mixed-state size limit are listed separately.
pub fn monotonicity_scan(n: f64, grid: &[f64]) -> Result<(f64, Vec<Family>)> {
    let mut skipped = Vec::new();
    let mut worst: f64 = 0.0;
    for family in Family::ALL {
        let s = StateSpec::new(family, n)?
            .with_truncation(scan_truncation(family))
            .build()?;
        if s.basis().dim() > MIXED_DIM_CAP {
            skipped.push(family);
            continue;
        }
        let values: Vec<f64> = grid
            .par_iter()
            .map(|&eta| lossy_qfi(&s, eta, &PhaseChoice::Phi1))
            .collect::<Result<_>>()?;
        for w in values.windows(2) {
            worst = worst.max(w[0] - w[1]);
        }
    }
    Ok((worst, skipped))
}

fn check_monotone_in_eta() -> Check {
    let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
    match monotonicity_scan(2.0, &grid) {
        Ok((worst, skipped)) => {
            let c = Check::new("qfi non-decreasing in eta", worst.max(0.0), 1e-9);
            if skipped.is_empty() {
                c
            } else {
                let names: Vec<_> = skipped.iter().map(|f| f.name()).collect();
                c.with_detail(format!("too large for a dense density matrix: {}", names.join(", ")))
            }
        }
        Err(e) => Check::from_result("qfi non-decreasing in eta", 1e-9, Err(e)),
    }
}

fn check_truncation_doubling() -> Check {
    let run = || -> Result<f64> {
        let mut worst: f64 = 0.0;
        for family in [Family::Ses, Family::Eess, Family::Ecs] {
            let spec = StateSpec::new(family, 2.0)?;
            let base = spec.build()?;
            let n_max = base.basis().n_max().unwrap_or(0);
            let doubled = spec.with_truncation(Truncation::Fixed(2 * n_max)).build()?;
            let a = qfi_pure(&base, &PhaseChoice::Phi1)?;
            let b = qfi_pure(&doubled, &PhaseChoice::Phi1)?;
            worst = worst.max((a - b).abs() / b);
        }
        let spec = StateSpec::new(Family::Ses, 2.0)?;
        let base = spec.build()?;
        let n_max = base.basis().n_max().unwrap_or(0);
        let doubled = spec.with_truncation(Truncation::Fixed(2 * n_max)).build()?;
        let a = lossy_qfi(&base, 0.8, &PhaseChoice::Phi1)?;
        let b = lossy_qfi(&doubled, 0.8, &PhaseChoice::Phi1)?;
        Ok(worst.max((a - b).abs() / b))
    };
    Check::from_result("truncation doubling", 1e-8, run())
}
