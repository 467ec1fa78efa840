//! Gyroscope parametrization on the three-site ring.
//!
//! Site 0 is the phase reference; the probe occupies sites 1 and 2. Mode
//! matrices `h` stand for the quadratic operator `sum_ij h[i][j] a_i† a_j`, and a
//! mode unitary `W = exp(i g)` stands for the many-body `exp(i sum g_ij a_i† a_j)`.

use std::f64::consts::{FRAC_PI_3, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DiagonalObservable, TwoModeState};
use crate::linalg::{exp_i_hermitian, ComplexMatrix};

/// Total particle number accepted by [`simulate_protocol`].
pub const MANY_BODY_N_CAP: usize = 4;
/// Central-difference step for the numerical θ-derivative.
pub const FD_STEP: f64 = 1e-5;
/// Disagreement between step sizes that triggers Richardson extrapolation.
pub const FD_AGREEMENT: f64 = 1e-7;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroParams {
    /// Rotation-induced phase θ in radians.
    pub theta: f64,
    /// Tunnelling coupling J in rad/s.
    pub coupling: f64,
    /// Rotation duration t_ω in seconds.
    pub t_omega: f64,
    /// Independent repeats μ.
    pub mu: u32,
}

impl Default for GyroParams {
    fn default() -> Self {
        Self {
            theta: 0.0,
            coupling: 1.0,
            t_omega: 1.0,
            mu: 1,
        }
    }
}

impl GyroParams {
    /// Parameters with `J t_ω = jt` and `μ = 1`.
    pub fn with_jt(theta: f64, jt: f64) -> Self {
        Self {
            theta,
            coupling: jt,
            t_omega: 1.0,
            mu: 1,
        }
    }

    pub fn jt(&self) -> f64 {
        self.coupling * self.t_omega
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || !self.jt().is_finite() {
            return Err(Error::Domain("theta and J t_omega must be finite".into()));
        }
        if self.mu < 1 {
            return Err(Error::Domain("mu must be at least 1".into()));
        }
        Ok(())
    }
}

/// Phases of the equivalent parametrization `exp(-i (φ0 n + φ1 n1 + φ2 n2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSet {
    pub phi0: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub phi_plus: f64,
    pub phi_minus: f64,
}

impl PhaseSet {
    fn from_parts(phi0: f64, phi1: f64, phi2: f64) -> Self {
        Self {
            phi0,
            phi1,
            phi2,
            phi_plus: phi1 + phi2,
            phi_minus: phi1 - phi2,
        }
    }
}

pub fn phase_set(params: &GyroParams) -> PhaseSet {
    let (jt, x) = (params.jt(), params.theta / 3.0);
    PhaseSet::from_parts(
        2.0 * jt * (x + 2.0 * PI / 3.0).cos(),
        2.0 * SQRT_3 * jt * x.sin(),
        2.0 * SQRT_3 * jt * (x + FRAC_PI_3).sin(),
    )
}

/// θ-derivatives of every phase in [`phase_set`].
pub fn phase_derivatives(params: &GyroParams) -> PhaseSet {
    let (jt, x) = (params.jt(), params.theta / 3.0);
    PhaseSet::from_parts(
        -2.0 / 3.0 * jt * (x + 2.0 * PI / 3.0).sin(),
        2.0 / SQRT_3 * jt * x.cos(),
        2.0 / SQRT_3 * jt * (x + FRAC_PI_3).cos(),
    )
}

/// Weights of `n0, n1, n2` in the rotation generator.
pub fn generator_weights(params: &GyroParams) -> [f64; 3] {
    let (k, t) = (-2.0 * params.jt() / 3.0, params.theta);
    [
        k * ((t + 2.0 * PI) / 3.0).sin(),
        k * ((t - 2.0 * PI) / 3.0).sin(),
        k * (t / 3.0).sin(),
    ]
}

/// Rotation generator restricted to an empty reference site.
pub fn generator_observable(params: &GyroParams) -> DiagonalObservable {
    let [_, a1, a2] = generator_weights(params);
    DiagonalObservable::linear(a1, a2)
}

/// 3×3 complex matrix on the site modes `(a0, a1, a2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMatrix3(pub [[Complex64; 3]; 3]);

impl ModeMatrix3 {
    pub fn identity() -> Self {
        Self::diagonal([Complex64::new(1.0, 0.0); 3])
    }

    pub fn diagonal(d: [Complex64; 3]) -> Self {
        let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
        for i in 0..3 {
            m[i][i] = d[i];
        }
        Self(m)
    }

    pub fn real_diagonal(d: [f64; 3]) -> Self {
        Self::diagonal(d.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn adjoint(&self) -> Self {
        let mut m = self.0;
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.0[j][i].conj();
            }
        }
        Self(m)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        Self(m)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        d
    }

    pub fn unitarity_deviation(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity())
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// Flow-mode transform: row `j = -1, 0, 1` gives `α_j = sum_k e^{i 2π jk/3} a_k / sqrt(3)`.
    pub fn flow_transform() -> Self {
        let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
        for (row, j) in [-1i32, 0, 1].into_iter().enumerate() {
            for k in 0..3 {
                m[row][k] = Complex64::from_polar(1.0 / SQRT_3, 2.0 * PI * (j * k as i32) as f64 / 3.0);
            }
        }
        Self(m)
    }

    /// Tritter `exp(i κ sum_{i≠j} a_i† a_j)` in closed form.
    pub fn tritter(kappa: f64) -> Self {
        // exp(iκ(J - I)) = e^{-iκ} (I + (e^{3iκ} - 1)/3 J) with J the all-ones matrix
        let pre = Complex64::from_polar(1.0, -kappa);
        let off = pre * (Complex64::from_polar(1.0, 3.0 * kappa) - 1.0) / 3.0;
        let mut m = [[off; 3]; 3];
        for i in 0..3 {
            m[i][i] = pre + off;
        }
        Self(m)
    }

    /// Phase `exp(i φ n2)` on site two.
    pub fn site_two_phase(phi: f64) -> Self {
        Self::diagonal([
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, phi),
        ])
    }

    /// Single-particle rotation Hamiltonian `-2J sum_j cos(θ/3 - 2πj/3) α_j† α_j`.
    pub fn rotation_hamiltonian(params: &GyroParams) -> Self {
        let d = [-1.0, 0.0, 1.0].map(|j: f64| {
            -2.0 * params.coupling * (params.theta / 3.0 - 2.0 * PI * j / 3.0).cos()
        });
        Self::in_flow_basis(d)
    }

    /// Generator of the rotation step, `-t_ω ∂H/∂θ`, on the site modes.
    pub fn rotation_generator(params: &GyroParams) -> Self {
        let k = -2.0 * params.jt() / 3.0;
        let d = [-1.0, 0.0, 1.0].map(|j: f64| k * ((params.theta - 2.0 * PI * j) / 3.0).sin());
        Self::in_flow_basis(d)
    }

    fn in_flow_basis(d: [f64; 3]) -> Self {
        let f = Self::flow_transform();
        f.adjoint().matmul(&Self::real_diagonal(d)).matmul(&f)
    }
}

/// Largest deviation between the rotation generator pulled back through the
/// tritter and site-two phase, and the diagonal rotation generator.
pub fn verify_mode_algebra(params: &GyroParams) -> f64 {
    let w = ModeMatrix3::site_two_phase(2.0 * PI / 3.0)
        .matmul(&ModeMatrix3::tritter(2.0 * PI / 9.0));
    let h4 = ModeMatrix3::rotation_generator(params);
    let pulled = w.adjoint().matmul(&h4).matmul(&w);
    pulled.max_abs_diff(&ModeMatrix3::real_diagonal(generator_weights(params)))
}

pub type Occupation3 = (usize, usize, usize);

/// Three-site Fock state with at most [`MANY_BODY_N_CAP`] particles.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeModeState {
    amplitudes: Vec<Complex64>,
}

fn many_body_basis() -> Vec<Occupation3> {
    let mut out = Vec::new();
    for total in 0..=MANY_BODY_N_CAP {
        for n0 in (0..=total).rev() {
            for n1 in (0..=total - n0).rev() {
                out.push((n0, n1, total - n0 - n1));
            }
        }
    }
    out
}

fn basis_index(basis: &[Occupation3], occ: Occupation3) -> Option<usize> {
    basis.iter().position(|&o| o == occ)
}

impl ThreeModeState {
    pub fn from_terms(terms: &[(Occupation3, Complex64)]) -> Result<Self> {
        let basis = many_body_basis();
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
        for &(occ, a) in terms {
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            let total = occ.0 + occ.1 + occ.2;
            let idx = basis_index(&basis, occ).ok_or(Error::Size {
                what: "many-body particle number",
                size: total,
                limit: MANY_BODY_N_CAP,
            })?;
            amplitudes[idx] += a;
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > crate::fock::NORM_TOL {
            return Err(Error::Domain(format!("three-mode state has norm {norm}")));
        }
        Ok(Self { amplitudes })
    }

    /// Places a two-mode probe on sites 1 and 2 with the reference site empty.
    pub fn from_probe(state: &TwoModeState) -> Result<Self> {
        let terms: Vec<_> = state
            .terms()
            .map(|((n1, n2), a)| ((0, n1, n2), a))
            .collect();
        Self::from_terms(&terms)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `4 Var` of the full three-site rotation generator.
    pub fn generator_qfi(&self, params: &GyroParams) -> f64 {
        let w = generator_weights(params);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (occ, a) in many_body_basis().into_iter().zip(&self.amplitudes) {
            let g = w[0] * occ.0 as f64 + w[1] * occ.1 as f64 + w[2] * occ.2 as f64;
            m1 += g * a.norm_sqr();
            m2 += g * g * a.norm_sqr();
        }
        4.0 * (m2 - m1 * m1).max(0.0)
    }
}

/// Many-body matrix of `sum_ij h[i][j] a_i† a_j` on the capped basis.
fn second_quantize(h: &ModeMatrix3) -> ComplexMatrix {
    let basis = many_body_basis();
    let mut m = ComplexMatrix::zeros(basis.len());
    for (col, &occ) in basis.iter().enumerate() {
        let n = [occ.0, occ.1, occ.2];
        for j in 0..3 {
            if n[j] == 0 {
                continue;
            }
            for i in 0..3 {
                let coeff = h.0[i][j];
                if coeff == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut out = n;
                out[j] -= 1;
                let mut amp = (n[j] as f64).sqrt();
                out[i] += 1;
                amp *= (out[i] as f64).sqrt();
                let row = basis_index(&basis, (out[0], out[1], out[2]))
                    .expect("number-conserving operator stays in the basis");
                m[(row, col)] += coeff * amp;
            }
        }
    }
    m
}

fn many_body_unitary(g: &ModeMatrix3, scale: f64) -> Result<ComplexMatrix> {
    exp_i_hermitian(&second_quantize(g), scale)
}

fn all_pairs(kappa: f64) -> ModeMatrix3 {
    let mut m = [[Complex64::new(kappa, 0.0); 3]; 3];
    for i in 0..3 {
        m[i][i] = Complex64::new(0.0, 0.0);
    }
    ModeMatrix3(m)
}

/// QFI of the simulated seven-step protocol, from a numerical θ-derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolQfi {
    /// After the rotation step (iv).
    pub after_rotation: f64,
    /// After the inverse phase and inverse tritter, steps (v)–(vi).
    pub after_inverse: f64,
    /// Whether Richardson extrapolation was needed.
    pub richardson: bool,
}

/// Simulates steps (ii)–(vi) in the many-body space and differentiates the output state.
pub fn simulate_protocol(input: &ThreeModeState, params: &GyroParams) -> Result<ProtocolQfi> {
    params.validate()?;
    let u2 = many_body_unitary(&all_pairs(2.0 * PI / 9.0), 1.0)?;
    let n2 = ModeMatrix3::real_diagonal([0.0, 0.0, 1.0]);
    let u3 = many_body_unitary(&n2, 2.0 * PI / 3.0)?;
    let u5 = u3.adjoint();
    let u6 = many_body_unitary(&all_pairs(4.0 * PI / 9.0), 1.0)?;
    let prepared = u3.apply(&u2.apply(input.amplitudes()));

    let rotated = |theta: f64| -> Result<Vec<Complex64>> {
        let p = GyroParams { theta, ..*params };
        let h = ModeMatrix3::rotation_hamiltonian(&p);
        Ok(many_body_unitary(&h, -params.t_omega)?.apply(&prepared))
    };
    let finish = |v: &[Complex64]| u6.apply(&u5.apply(v));

    let h = FD_STEP;
    let t = params.theta;
    let samples = [
        rotated(t - h)?,
        rotated(t - h / 2.0)?,
        rotated(t)?,
        rotated(t + h / 2.0)?,
        rotated(t + h)?,
    ];
    let estimate = |post: &dyn Fn(&[Complex64]) -> Vec<Complex64>| {
        let s: Vec<Vec<Complex64>> = samples.iter().map(|v| post(v)).collect();
        let wide = central(&s[0], &s[4], h);
        let narrow = central(&s[1], &s[3], h / 2.0);
        let (q_wide, q_narrow) = (pure_qfi(&s[2], &wide), pure_qfi(&s[2], &narrow));
        if (q_wide - q_narrow).abs() > FD_AGREEMENT {
            let extrap: Vec<Complex64> = narrow
                .iter()
                .zip(&wide)
                .map(|(n, w)| (4.0 * n - w) / 3.0)
                .collect();
            (pure_qfi(&s[2], &extrap), true)
        } else {
            (q_wide, false)
        }
    };
    let (after_rotation, r1) = estimate(&|v| v.to_vec());
    let (after_inverse, r2) = estimate(&|v| finish(v));
    Ok(ProtocolQfi {
        after_rotation,
        after_inverse,
        richardson: r1 || r2,
    })
}

fn central(minus: &[Complex64], plus: &[Complex64], h: f64) -> Vec<Complex64> {
    minus
        .iter()
        .zip(plus)
        .map(|(m, p)| (p - m) / (2.0 * h))
        .collect()
}

/// `4 (<dψ|dψ> - |<ψ|dψ>|^2)`.
fn pure_qfi(psi: &[Complex64], dpsi: &[Complex64]) -> f64 {
    let dd: f64 = dpsi.iter().map(|d| d.norm_sqr()).sum();
    let overlap: Complex64 = psi.iter().zip(dpsi).map(|(p, d)| p.conj() * d).sum();
    4.0 * (dd - overlap.norm_sqr()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{variance, Basis};

    fn one(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn phase_set_values() {
        let p = phase_set(&GyroParams::with_jt(0.0, 1.0));
        assert_eq!(p.phi1, 0.0);
        let p = phase_set(&GyroParams::with_jt(PI, 1.0));
        assert!((p.phi1 - 3.0).abs() < 1e-14);
        for theta in [0.1, 1.0, 4.0] {
            let p = phase_set(&GyroParams::with_jt(theta, 1.3));
            assert!((p.phi_plus + p.phi_minus - 2.0 * p.phi1).abs() <= 4.0 * f64::EPSILON * p.phi1.abs());
            assert!((p.phi_plus - p.phi_minus - 2.0 * p.phi2).abs() <= 4.0 * f64::EPSILON * p.phi2.abs());
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        let base = GyroParams::with_jt(0.3, 1.0);
        let lo = phase_set(&GyroParams { theta: 0.3 - h, ..base });
        let hi = phase_set(&GyroParams { theta: 0.3 + h, ..base });
        let d = phase_derivatives(&base);
        assert!(((hi.phi0 - lo.phi0) / (2.0 * h) - d.phi0).abs() < 1e-8);
        assert!(((hi.phi1 - lo.phi1) / (2.0 * h) - d.phi1).abs() < 1e-8);
        assert!(((hi.phi2 - lo.phi2) / (2.0 * h) - d.phi2).abs() < 1e-8);
    }

    #[test]
    fn generator_weights_at_zero() {
        let w = generator_weights(&GyroParams::with_jt(0.0, 1.0));
        assert!((w[1] - 1.0 / SQRT_3).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn generator_equals_phase_derivatives() {
        for theta in [0.0, 0.4, 2.0, 5.5] {
            let p = GyroParams::with_jt(theta, 0.7);
            let d = phase_derivatives(&p);
            let w = generator_weights(&p);
            assert!((w[0] - d.phi0).abs() < 1e-14);
            assert!((w[1] - d.phi0 - d.phi1).abs() < 1e-14);
            assert!((w[2] - d.phi0 - d.phi2).abs() < 1e-14);
        }
    }

    #[test]
    fn tritter_is_unitary_and_matches_exponential() {
        let w = ModeMatrix3::tritter(2.0 * PI / 9.0);
        assert!(w.unitarity_deviation() < 1e-14);
        let g = second_quantize(&all_pairs(2.0 * PI / 9.0));
        let u = exp_i_hermitian(&g, 1.0).unwrap();
        // single-particle block: |1,0,0>, |0,1,0>, |0,0,1> sit at indices 1..4
        let basis = many_body_basis();
        for i in 0..3 {
            for j in 0..3 {
                let mut oi = [0; 3];
                oi[i] = 1;
                let mut oj = [0; 3];
                oj[j] = 1;
                let r = basis_index(&basis, (oi[0], oi[1], oi[2])).unwrap();
                let c = basis_index(&basis, (oj[0], oj[1], oj[2])).unwrap();
                // <a_i† vac| U |a_j† vac> = W_ij
                assert!((u[(r, c)] - w.0[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mode_algebra_holds() {
        for theta in [0.0, 0.1, 0.7, 2.5, 5.9] {
            assert!(verify_mode_algebra(&GyroParams::with_jt(theta, 1.0)) < 1e-12);
        }
    }

    #[test]
    fn rotation_generator_is_hermitian() {
        let h = ModeMatrix3::rotation_generator(&GyroParams::with_jt(1.1, 1.0));
        assert!(h.hermiticity_deviation() < 1e-15);
    }

    #[test]
    fn simulation_matches_generator() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let noon =
            TwoModeState::from_terms(Basis::Paired { n_max: 2 }, &[((2, 0), one(s)), ((0, 2), one(s))])
                .unwrap();
        for theta in [0.3, 2.0] {
            let p = GyroParams::with_jt(theta, 1.0);
            let input = ThreeModeState::from_probe(&noon).unwrap();
            let q = simulate_protocol(&input, &p).unwrap();
            let expected = 4.0 * variance(&noon, &generator_observable(&p)).unwrap();
            assert!((q.after_rotation - expected).abs() < 1e-6, "{q:?} vs {expected}");
            assert!((q.after_inverse - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_coupling_gives_zero_qfi() {
        let input = ThreeModeState::from_terms(&[((0, 1, 1), one(1.0))]).unwrap();
        let q = simulate_protocol(&input, &GyroParams::with_jt(0.5, 0.0)).unwrap();
        assert!(q.after_inverse.abs() < 1e-12);
    }

    #[test]
    fn many_body_cap() {
        assert!(matches!(
            ThreeModeState::from_terms(&[((0, 5, 0), one(1.0))]),
            Err(Error::Size { .. })
        ));
    }
}
