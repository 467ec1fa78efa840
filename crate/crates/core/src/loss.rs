//! Particle loss on both probe modes.
//!
//! Each mode passes a fictitious beam splitter with transmission `η`; losing
//! `l` of `n` particles has weight `B^n_l = C(n,l) η^(n-l) (1-η)^l`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{mix, Basis, HermitianMatrix, TwoModeState};
use crate::states::{eess_norm, even_norm, Family};

/// Branches below this probability are dropped.
pub const PRUNE_PROBABILITY: f64 = 1e-15;
/// Branch enumeration stops once the unassigned probability falls below this.
pub const CLOSURE_TOL: f64 = 1e-13;
/// Largest density-matrix dimension built by the loss channel.
pub const MIXED_DIM_CAP: usize = 1601;
/// Tolerance on amplitude mismatch between `(k,0)` and `(0,k)`.
pub const PATH_SYMMETRY_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChannel {
    eta: f64,
}

impl LossChannel {
    pub fn new(eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Loss rate `1 - η`.
    pub fn loss_rate(&self) -> f64 {
        1.0 - self.eta
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::Domain(format!("transmission {eta} outside [0, 1]")))
    }
}

/// Table `w[n][l] = B^n_l(η)` for `n <= n_max`, built by the Pascal-type recurrence.
pub fn binomial_weights(eta: f64, n_max: usize) -> Vec<Vec<f64>> {
    let mut table = Vec::with_capacity(n_max + 1);
    table.push(vec![1.0]);
    for n in 1..=n_max {
        let prev: &Vec<f64> = &table[n - 1];
        let mut row = vec![0.0; n + 1];
        for l in 0..=n {
            let keep = if l < n { eta * prev[l] } else { 0.0 };
            let lose = if l > 0 { (1.0 - eta) * prev[l - 1] } else { 0.0 };
            row[l] = keep + lose;
        }
        table.push(row);
    }
    table
}

fn check_mixed_dim(basis: Basis) -> Result<()> {
    if basis.dim() > MIXED_DIM_CAP {
        return Err(Error::Size {
            what: "density matrix dimension",
            size: basis.dim(),
            limit: MIXED_DIM_CAP,
        });
    }
    Ok(())
}

/// Generic Kraus map with equal transmission on both modes.
pub fn kraus_apply(state: &TwoModeState, channel: &LossChannel) -> Result<HermitianMatrix> {
    kraus_apply_unequal(state, channel.eta, channel.eta)
}

/// Generic Kraus map with transmissions `eta_a` and `eta_b` on modes 1 and 2.
pub fn kraus_apply_unequal(
    state: &TwoModeState,
    eta_a: f64,
    eta_b: f64,
) -> Result<HermitianMatrix> {
    check_eta(eta_a)?;
    check_eta(eta_b)?;
    let basis = state.basis();
    check_mixed_dim(basis)?;
    let n_max = basis
        .n_max()
        .ok_or_else(|| Error::Domain("loss needs an occupation-labeled basis".into()))?;
    let occupations = basis.occupations()?;
    let wa = binomial_weights(eta_a, n_max);
    let wb = binomial_weights(eta_b, n_max);

    let mut rho = HermitianMatrix::zeros(basis);
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; basis.dim()];
    for la in 0..=n_max {
        for lb in 0..=n_max {
            out.iter_mut().for_each(|c| *c = zero);
            let mut any = false;
            for (&(n1, n2), &amp) in occupations.iter().zip(state.amplitudes()) {
                if n1 < la || n2 < lb || amp == zero {
                    continue;
                }
                let w = wa[n1][la] * wb[n2][lb];
                if w == 0.0 {
                    continue;
                }
                let target = basis
                    .index_of((n1 - la, n2 - lb))
                    .expect("damping stays inside the basis");
                out[target] += amp * w.sqrt();
                any = true;
            }
            if any {
                rho.add_outer(1.0, &out);
            }
        }
    }
    Ok(rho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureBranch {
    pub probability: f64,
    /// Particles lost from modes 1 and 2.
    pub loss_record: (usize, usize),
    pub state: TwoModeState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchEnsemble {
    pub branches: Vec<PureBranch>,
    pub eta: f64,
}

impl BranchEnsemble {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    /// Probability of losing nothing, together with the surviving state.
    pub fn no_loss(&self) -> Option<&PureBranch> {
        self.branches.iter().find(|b| b.loss_record == (0, 0))
    }

    /// Summed probability of all branches with losses on mode 1 (`a`) and mode 2 (`b`).
    pub fn side_sums(&self) -> (f64, f64) {
        self.branches.iter().fold((0.0, 0.0), |(a, b), br| match br.loss_record {
            (l, 0) if l > 0 => (a + br.probability, b),
            (0, l) if l > 0 => (a, b + br.probability),
            _ => (a, b),
        })
    }

    pub fn mix(&self) -> Result<HermitianMatrix> {
        if let Some(first) = self.branches.first() {
            check_mixed_dim(first.state.basis())?;
        }
        mix(self.branches.iter().map(|b| (b.probability, &b.state)))
    }
}

/// Splits the lossy output of a path-symmetric state into pure branches.
///
/// Order: no loss, then increasing `l` with the mode-1 branch before the mode-2 branch.
pub fn branch_decompose(state: &TwoModeState, channel: &LossChannel) -> Result<BranchEnsemble> {
    let n_max = match state.basis() {
        Basis::Paired { n_max } => n_max,
        other => {
            return Err(Error::UnsupportedStructure(format!(
                "branch decomposition needs the paired layout, got {other:?}; use kraus_apply"
            )))
        }
    };
    if !state.is_path_symmetric(PATH_SYMMETRY_TOL) {
        return Err(Error::UnsupportedStructure(
            "state is not path-symmetric; use kraus_apply".into(),
        ));
    }
    let eta = channel.eta;
    let basis = state.basis();
    let w = binomial_weights(eta, n_max);
    let amps = state.amplitudes();
    let a0 = amps[0];
    let a = |k: usize| amps[k];
    let zero = Complex64::new(0.0, 0.0);

    let mut branches = Vec::new();
    let mut assigned = 0.0;
    let mut push = |record: (usize, usize), v: Vec<Complex64>, assigned: &mut f64| -> Result<()> {
        let p: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        *assigned += p;
        if p >= PRUNE_PROBABILITY {
            branches.push(PureBranch {
                probability: p,
                loss_record: record,
                state: TwoModeState::normalized(basis, v)?,
            });
        }
        Ok(())
    };

    let mut v = vec![zero; basis.dim()];
    v[0] = a0;
    for k in 1..=n_max {
        let s = w[k][0].sqrt();
        v[k] = a(k) * s;
        v[n_max + k] = a(k) * s;
    }
    push((0, 0), v, &mut assigned)?;

    for l in 1..=n_max {
        if 1.0 - assigned < CLOSURE_TOL {
            break;
        }
        // |k,0> -> |k-l,0> on mode 1; the mirror image on mode 2
        let mut side_a = vec![zero; basis.dim()];
        let mut side_b = vec![zero; basis.dim()];
        for k in l..=n_max {
            let c = a(k) * w[k][l].sqrt();
            let m = k - l;
            if m == 0 {
                side_a[0] += c;
                side_b[0] += c;
            } else {
                side_a[m] += c;
                side_b[n_max + m] += c;
            }
        }
        push((l, 0), side_a, &mut assigned)?;
        push((0, l), side_b, &mut assigned)?;
    }

    let total: f64 = branches.iter().map(|b| b.probability).sum();
    if !((total - 1.0).abs() <= 1e-6) {
        return Err(Error::Inconsistent { sum: total });
    }
    Ok(BranchEnsemble { branches, eta })
}

/// `arctanh(η tanh r)`, the squeezing of the no-loss branch.
pub fn tilde_r(r: f64, eta: f64) -> f64 {
    (eta * r.tanh()).atanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchProbabilities {
    pub p00: f64,
    pub sum_pa: f64,
    pub sum_pb: f64,
}

impl BranchProbabilities {
    pub fn total(&self) -> f64 {
        self.p00 + self.sum_pa + self.sum_pb
    }
}

/// Closed-form no-loss probability and per-mode loss sums for SES and EESS.
pub fn analytic_branch_probabilities(
    family: Family,
    r: f64,
    eta: f64,
) -> Result<BranchProbabilities> {
    check_eta(eta)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("squeezing {r} must be positive")));
    }
    let rt = tilde_r(r, eta);
    match family {
        Family::Ses => {
            let (c, ct) = (r.cosh(), rt.cosh());
            let side = (c - ct) / (2.0 * (1.0 + c));
            Ok(BranchProbabilities {
                p00: (1.0 + ct) / (1.0 + c),
                sum_pa: side,
                sum_pb: side,
            })
        }
        Family::Eess => {
            let x = eess_survival(r, rt);
            let (np, npt) = (eess_norm(r).powi(2), eess_norm(rt).powi(2));
            let side = np * (1.0 - x);
            Ok(BranchProbabilities {
                p00: x * np / npt,
                sum_pa: side,
                sum_pb: side,
            })
        }
        other => Err(Error::NoFormula {
            family: other.name().into(),
            choice: "branch probabilities".into(),
        }),
    }
}

/// Norm squared of `η^(n/2)` applied to the even squeezed superposition.
fn eess_survival(r: f64, rt: f64) -> f64 {
    (rt.cosh() / r.cosh()) * (even_norm(r) / even_norm(rt)).powi(2)
}

/// Difference between the two sides of the EESS normalization identity at `(r, η)`.
pub fn eess_identity_residual(r: f64, eta: f64) -> f64 {
    let rt = tilde_r(r, eta);
    let x = eess_survival(r, rt);
    let (np, npt) = (eess_norm(r).powi(2), eess_norm(rt).powi(2));
    x * (1.0 - 2.0 * npt) / npt - (1.0 - 2.0 * np) / np
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::DiagonalObservable;
    use crate::states::{StateSpec, Truncation};

    fn ses() -> TwoModeState {
        StateSpec::new(Family::Ses, 2.0)
            .unwrap()
            .with_truncation(Truncation::Clipped(40))
            .build()
            .unwrap()
    }

    #[test]
    fn weights_are_binomial() {
        let w = binomial_weights(0.3, 6);
        assert!((w[6][2] - 15.0 * 0.3f64.powi(4) * 0.49).abs() < 1e-15);
        for row in &w {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eta_bounds() {
        assert!(LossChannel::new(1.2).is_err());
        assert!(LossChannel::new(-0.1).is_err());
        assert!(kraus_apply_unequal(&ses(), 0.5, 1.5).is_err());
    }

    #[test]
    fn eta_extremes() {
        let s = ses();
        let rho = kraus_apply(&s, &LossChannel::new(1.0).unwrap()).unwrap();
        assert!(rho.max_abs_diff(&s.projector()).unwrap() < 1e-15);
        let rho = kraus_apply(&s, &LossChannel::new(0.0).unwrap()).unwrap();
        assert!((rho.entry(0, 0).re - 1.0).abs() < 1e-14);
        assert!((rho.purity() - 1.0).abs() < 1e-13);
        let ens = branch_decompose(&s, &LossChannel::new(1.0).unwrap()).unwrap();
        assert_eq!(ens.branches.len(), 1);
        assert_eq!(ens.branches[0].loss_record, (0, 0));
        assert!((ens.branches[0].probability - 1.0).abs() < 1e-14);
    }

    #[test]
    fn damping_scales_mean() {
        let s = ses();
        let rho = kraus_apply(&s, &LossChannel::new(0.7).unwrap()).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        let n = rho.expectation(&DiagonalObservable::total_number()).unwrap();
        let n0 = crate::fock::mean_particle_number(&s);
        assert!((n - 0.7 * n0).abs() < 1e-10);
    }

    #[test]
    fn decomposition_matches_kraus() {
        let s = ses();
        for eta in [0.3, 0.9] {
            let ch = LossChannel::new(eta).unwrap();
            let a = branch_decompose(&s, &ch).unwrap().mix().unwrap();
            let b = kraus_apply(&s, &ch).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let t = TwoModeState::from_terms(
            Basis::Paired { n_max: 2 },
            &[((2, 0), Complex64::new(0.6, 0.0)), ((0, 2), Complex64::new(0.8, 0.0))],
        )
        .unwrap();
        assert!(matches!(
            branch_decompose(&t, &LossChannel::new(0.5).unwrap()),
            Err(Error::UnsupportedStructure(_))
        ));
    }

    #[test]
    fn analytic_sums_close() {
        for r in [0.4, 1.317, 2.2] {
            for eta in [0.0, 0.5, 0.8, 1.0] {
                for f in [Family::Ses, Family::Eess] {
                    let p = analytic_branch_probabilities(f, r, eta).unwrap();
                    assert!((p.total() - 1.0).abs() < 1e-12, "{f} {r} {eta}");
                }
            }
            assert!(eess_identity_residual(r, 0.6).abs() < 1e-12);
        }
        let p = analytic_branch_probabilities(Family::Ses, 1.0, 1.0).unwrap();
        assert_eq!((p.p00, p.sum_pa), (1.0, 0.0));
        assert!(analytic_branch_probabilities(Family::Noon, 1.0, 0.5).is_err());
    }
}
