use gyroqfi::fock::{
    covariance, expectation, mean_particle_number, variance, Basis, DiagonalObservable,
    TwoModeState,
};
use gyroqfi::linalg::{eig_hermitian, ComplexMatrix};
use gyroqfi::loss::{branch_decompose, kraus_apply, LossChannel};
use gyroqfi::protocol::{phase_set, verify_mode_algebra, GyroParams};
use gyroqfi::qfi::{qfi_pure, PhaseChoice};
use gyroqfi::states::{calibrate, Family, StateSpec, Truncation};
use gyroqfi::sweep::{cmd_sweep_n, Grid, SweepConfig};
use gyroqfi::verify::{chain_rule_deviation, mandel_identity_deviation};
use num_complex::Complex64;
use proptest::prelude::*;

fn family_strategy() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

fn valid_n(family: Family, n: f64) -> bool {
    family != Family::Bat || n != 1.0
}

#[test]
fn calibration_hits_target_for_every_family() {
    for family in Family::ALL {
        for n in [1.0, 2.0, 4.0, 8.0] {
            if !valid_n(family, n) {
                continue;
            }
            let s = StateSpec::new(family, n).unwrap().build().unwrap();
            let mean = mean_particle_number(&s);
            assert!((mean - n).abs() < 1e-9, "{family} N={n}: mean {mean}");
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12, "{family} N={n}");
        }
    }
}

#[test]
fn eess_mean_at_unit_squeezing() {
    let s = StateSpec::with_raw_param(Family::Eess, 1.0).unwrap().build().unwrap();
    let r: f64 = 1.0;
    let c2 = (2.0 * r).cosh();
    let nn2 = 0.25 / (1.0 + c2.powf(-0.5) + 2.0 / r.cosh());
    let n1 = 2.0 * nn2 * r.sinh().powi(2) * (1.0 - c2.powf(-1.5));
    assert!((mean_particle_number(&s) - 2.0 * n1).abs() < 1e-11);
    let direct = expectation(&s, &DiagonalObservable::number(1)).unwrap();
    assert!((direct - n1).abs() < 1e-11);
}

#[test]
fn squeezed_vacuum_moments_from_fock_sum() {
    let r: f64 = 1.0;
    let spec = StateSpec::with_raw_param(Family::Ses, r).unwrap();
    let s = spec.build().unwrap();
    // single-mode squeezed vacuum |xi,0> in the paired layout
    let n_max = s.basis().n_max().unwrap();
    let nxi = (2.0 / r.cosh() + 2.0).powf(-0.5);
    let mut amps = vec![Complex64::new(0.0, 0.0); 2 * n_max + 1];
    amps[0] = s.amplitudes()[0] / (2.0 * nxi);
    for k in 1..=n_max {
        amps[k] = s.amplitudes()[k] / nxi;
    }
    let single = TwoModeState::normalized(Basis::Paired { n_max }, amps).unwrap();
    let n1 = DiagonalObservable::number(1);
    let sh2 = r.sinh().powi(2);
    assert!((expectation(&single, &n1).unwrap() - sh2).abs() < 1e-11);
    let second = 3.0 * sh2 * sh2 + 2.0 * sh2;
    assert!((variance(&single, &n1).unwrap() + sh2 * sh2 - second).abs() < 1e-10);
}

#[test]
fn ses_variance_at_two() {
    // SES: <n1^2> = N_xi^2 (3 sinh^4 r + 2 sinh^2 r), <n1> = N/2
    let spec = StateSpec::new(Family::Ses, 2.0).unwrap();
    let r = spec.param.unwrap();
    let s = spec.build().unwrap();
    let nxi2 = 1.0 / (2.0 / r.cosh() + 2.0);
    let sh2 = r.sinh().powi(2);
    let expected = nxi2 * (3.0 * sh2 * sh2 + 2.0 * sh2) - 1.0;
    let v = variance(&s, &DiagonalObservable::number(1)).unwrap();
    assert!((v - expected).abs() < 1e-10);
    assert!((v - 10.0).abs() < 1e-9);
}

#[test]
fn supports() {
    let on_support = |f: Family, pred: &dyn Fn(usize, usize) -> bool| {
        let s = StateSpec::new(f, 2.0).unwrap().build().unwrap();
        for ((n1, n2), a) in s.terms() {
            if a.norm() > 0.0 {
                assert!(pred(n1, n2), "{f} has weight on ({n1},{n2})");
            }
        }
    };
    on_support(Family::Ses, &|a, b| a % 2 == 0 && b % 2 == 0 && a * b == 0);
    on_support(Family::Eess, &|a, b| a % 4 == 0 && b % 4 == 0 && a * b == 0);
    on_support(Family::Bat, &|a, b| (a as i64 - b as i64) % 2 == 0);
    on_support(Family::MaxEntangledM, &|a, b| (a, b) == (2, 2) || (a, b) == (0, 0));
    on_support(Family::Ecs, &|a, b| a * b == 0);
}

#[test]
fn path_symmetry_is_exact() {
    for family in [Family::Noon, Family::Ecs, Family::Ses, Family::Eess] {
        let s = StateSpec::new(family, 3.0).unwrap().build().unwrap();
        let n_max = s.basis().n_max().unwrap();
        for k in 1..=n_max {
            assert_eq!(s.amplitude((k, 0)), s.amplitude((0, k)));
        }
    }
}

#[test]
fn calibration_errors() {
    assert!(calibrate(Family::Eess, 1e30).is_err());
    assert!(StateSpec::new(Family::Uncorrelated, 0.0).is_err());
}

#[test]
fn mutation_breaks_mandel_identity() {
    let s = StateSpec::new(Family::Ses, 2.0).unwrap().build().unwrap();
    assert!(mandel_identity_deviation(&s).unwrap() < 1e-9);
    let basis = s.basis();
    let mut amps = s.amplitudes().to_vec();
    let idx = basis.index_of((2, 0)).unwrap();
    amps[idx] *= 1.05;
    let mutated = TwoModeState::normalized(basis, amps).unwrap();
    assert!(mandel_identity_deviation(&mutated).unwrap() > 1e-6);
    assert!(branch_decompose(&mutated, &LossChannel::new(0.5).unwrap()).is_err());
}

#[test]
fn noon_never_beats_ecs() {
    let cfg = SweepConfig::new(vec![Family::Noon, Family::Ecs], Grid::default_n());
    let rows = cmd_sweep_n(&cfg).unwrap();
    let (noon, ecs) = rows.split_at(10);
    for (a, b) in noon.iter().zip(ecs) {
        assert!(a.delta_phi1.unwrap() >= b.delta_phi1.unwrap(), "N = {}", a.n);
    }
}

#[test]
fn oracle_equivalence_full_grid() {
    for family in [Family::Noon, Family::Ecs, Family::Ses, Family::Eess] {
        for n in [1.0, 2.0, 4.0] {
            let s = StateSpec::new(family, n).unwrap().build().unwrap();
            for i in 1..=9 {
                let ch = LossChannel::new(i as f64 / 10.0).unwrap();
                let ens = branch_decompose(&s, &ch).unwrap();
                assert!((ens.total_probability() - 1.0).abs() < 1e-10);
                assert!(ens.branches.iter().all(|b| (0.0..=1.0).contains(&b.probability)));
                let a = ens.mix().unwrap();
                let b = kraus_apply(&s, &ch).unwrap();
                let d = a.max_abs_diff(&b).unwrap();
                assert!(d < 1e-12, "{family} N={n} eta={}: {d:e}", ch.eta());
                let ev = a.eig().unwrap().eigenvalues;
                assert!(ev.iter().all(|&l| l >= -1e-12));
                assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn branch_order_is_deterministic() {
    let s = StateSpec::new(Family::Ses, 2.0)
        .unwrap()
        .with_truncation(Truncation::Clipped(12))
        .build()
        .unwrap();
    let ens = branch_decompose(&s, &LossChannel::new(0.5).unwrap()).unwrap();
    let records: Vec<_> = ens.branches.iter().take(5).map(|b| b.loss_record).collect();
    assert_eq!(records, vec![(0, 0), (1, 0), (0, 1), (2, 0), (0, 2)]);
}

fn random_state(seed: &[f64], n_max: usize) -> TwoModeState {
    let basis = Basis::Dense { n_max };
    let amps: Vec<Complex64> = (0..basis.dim())
        .map(|i| Complex64::new(seed[i % seed.len()] + 0.01 * i as f64, seed[(i * 7 + 3) % seed.len()]))
        .collect();
    TwoModeState::normalized(basis, amps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prefix_stable(family in family_strategy(), extra in 1usize..40) {
        let spec = StateSpec::new(family, 2.0).unwrap();
        let base = spec.build().unwrap();
        let n_max = base.basis().n_max().unwrap();
        let larger = spec.with_truncation(Truncation::Fixed(n_max + extra)).build();
        if let Ok(larger) = larger {
            for (occ, a) in base.terms() {
                prop_assert_eq!(larger.amplitude(occ), a);
            }
        }
    }

    #[test]
    fn variance_matches_independent_moments(
        seed in prop::collection::vec(-1.0f64..1.0, 5..12),
        c1 in -3.0f64..3.0,
        c2 in -3.0f64..3.0,
    ) {
        let s = random_state(&seed, 3);
        let obs = DiagonalObservable::linear(c1, c2);
        let square = DiagonalObservable::from_fn(s.basis(), |(a, b)| {
            let g = c1 * a as f64 + c2 * b as f64;
            g * g
        }).unwrap();
        let m = expectation(&s, &obs).unwrap();
        let v = variance(&s, &obs).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!((v - (expectation(&s, &square).unwrap() - m * m)).abs() < 1e-10);
        let cov = covariance(&s, &obs, &obs).unwrap();
        prop_assert!((cov - v).abs() < 1e-10);
    }

    #[test]
    fn eig_reconstructs(seed in prop::collection::vec(-1.0f64..1.0, 20..80), dim in 1usize..24) {
        let m = ComplexMatrix::from_fn(dim, |i, j| {
            let a = seed[(i * 31 + j * 17) % seed.len()];
            let b = seed[(j * 31 + i * 17) % seed.len()];
            let re = a + b;
            let im = a - b;
            Complex64::new(re, im)
        });
        let e = eig_hermitian(&m).unwrap();
        prop_assert!(e.reconstruct().max_abs_diff(&m) < 1e-10);
        prop_assert!(e.orthonormality_deviation() < 1e-10);
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn phase_identities(theta in 0.0f64..std::f64::consts::TAU, jt in 0.1f64..3.0) {
        let p = phase_set(&GyroParams::with_jt(theta, jt));
        let scale = 8.0 * f64::EPSILON * (p.phi1.abs() + p.phi2.abs());
        prop_assert!((p.phi_plus + p.phi_minus - 2.0 * p.phi1).abs() <= scale);
        prop_assert!((p.phi_plus - p.phi_minus - 2.0 * p.phi2).abs() <= scale);
        prop_assert!(verify_mode_algebra(&GyroParams::with_jt(theta, jt)) < 1e-12);
    }

    #[test]
    fn chain_rule_holds(
        theta in 0.0f64..std::f64::consts::TAU,
        family in prop::sample::select(vec![Family::Noon, Family::Bat, Family::Uncorrelated, Family::MaxEntangledM]),
        half in 1usize..4,
    ) {
        let n = (2 * half) as f64;
        let s = StateSpec::new(family, n).unwrap().build().unwrap();
        prop_assert!(chain_rule_deviation(&s, theta, false).unwrap() < 1e-9);
        if family != Family::MaxEntangledM {
            prop_assert!(chain_rule_deviation(&s, theta, true).unwrap() < 1e-9);
        }
    }

    #[test]
    fn chain_rule_with_reference_phase(theta in 0.0f64..std::f64::consts::TAU, n in 0.5f64..6.0) {
        for family in [Family::Ses, Family::Ecs, Family::Eess] {
            let s = StateSpec::new(family, n).unwrap().build().unwrap();
            prop_assert!(chain_rule_deviation(&s, theta, false).unwrap() < 1e-9);
        }
    }

    #[test]
    fn kraus_preserves_trace_and_damps(eta in 0.0f64..=1.0, family in prop::sample::select(vec![Family::Bat, Family::Uncorrelated, Family::MaxEntangledM, Family::Ecs])) {
        let s = StateSpec::new(family, 2.0).unwrap().build().unwrap();
        let rho = kraus_apply(&s, &LossChannel::new(eta).unwrap()).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        prop_assert!(rho.hermiticity_deviation() < 1e-12);
        let mean = rho.expectation(&DiagonalObservable::total_number()).unwrap();
        prop_assert!((mean - eta * mean_particle_number(&s)).abs() < 1e-10);
    }

    #[test]
    fn mandel_identity_path_symmetric(n in 0.3f64..6.0) {
        for family in [Family::Ecs, Family::Ses, Family::Eess] {
            let s = StateSpec::new(family, n).unwrap().build().unwrap();
            prop_assert!(mandel_identity_deviation(&s).unwrap() < 1e-9);
            let f = qfi_pure(&s, &PhaseChoice::Phi1).unwrap();
            let fm = qfi_pure(&s, &PhaseChoice::PhiMinus).unwrap();
            prop_assert!(fm > 0.0 && f > 0.0);
        }
    }
}
