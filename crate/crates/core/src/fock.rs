//! Truncated two-mode Fock space: basis layouts, probe states, diagonal
//! observables and density matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, ComplexMatrix, EigenDecomposition};

/// Normalization tolerance enforced by [`TwoModeState::new`].
pub const NORM_TOL: f64 = 1e-10;

/// Occupation numbers `(n1, n2)` of the two probe modes.
pub type Occupation = (usize, usize);

/// Ordering of basis vectors inside state vectors and density matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// `|0,0>`, then `|k,0>` for `k = 1..=n_max`, then `|0,k>` for `k = 1..=n_max`.
    Paired { n_max: usize },
    /// Full `(n_max + 1)^2` grid, index `n1 * (n_max + 1) + n2`.
    Dense { n_max: usize },
    /// Plain index space with no occupation labels.
    Unlabeled { dim: usize },
}

impl Basis {
    pub fn dim(&self) -> usize {
        match *self {
            Basis::Paired { n_max } => 2 * n_max + 1,
            Basis::Dense { n_max } => (n_max + 1) * (n_max + 1),
            Basis::Unlabeled { dim } => dim,
        }
    }

    pub fn n_max(&self) -> Option<usize> {
        match *self {
            Basis::Paired { n_max } | Basis::Dense { n_max } => Some(n_max),
            Basis::Unlabeled { .. } => None,
        }
    }

    pub fn occupation(&self, index: usize) -> Option<Occupation> {
        match *self {
            Basis::Paired { n_max } => match index {
                0 => Some((0, 0)),
                i if i <= n_max => Some((i, 0)),
                i if i <= 2 * n_max => Some((0, i - n_max)),
                _ => None,
            },
            Basis::Dense { n_max } => {
                let side = n_max + 1;
                (index < side * side).then(|| (index / side, index % side))
            }
            Basis::Unlabeled { .. } => None,
        }
    }

    pub fn index_of(&self, (n1, n2): Occupation) -> Option<usize> {
        match *self {
            Basis::Paired { n_max } => match (n1, n2) {
                (0, 0) => Some(0),
                (k, 0) if k <= n_max => Some(k),
                (0, k) if k <= n_max => Some(n_max + k),
                _ => None,
            },
            Basis::Dense { n_max } => {
                (n1 <= n_max && n2 <= n_max).then(|| n1 * (n_max + 1) + n2)
            }
            Basis::Unlabeled { .. } => None,
        }
    }

    /// Occupation labels for every index, or a domain error for unlabeled bases.
    pub fn occupations(&self) -> Result<Vec<Occupation>> {
        (0..self.dim())
            .map(|i| {
                self.occupation(i).ok_or_else(|| {
                    Error::Domain(format!("basis {self:?} has no occupation labels"))
                })
            })
            .collect()
    }
}

/// Normalized pure state over a truncated two-mode Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    basis: Basis,
    amplitudes: Vec<Complex64>,
}

impl TwoModeState {
    /// Wraps amplitudes that are already normalized within [`NORM_TOL`].
    pub fn new(basis: Basis, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::Domain(format!(
                "{} amplitudes for basis of dimension {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !((norm - 1.0).abs() <= NORM_TOL) {
            return Err(Error::Domain(format!("state norm {norm} is not 1")));
        }
        Ok(Self { basis, amplitudes })
    }

    /// Rescales arbitrary amplitudes to unit norm.
    pub fn normalized(basis: Basis, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self::new(basis, amplitudes)
    }

    /// Superposition of labeled Fock terms, rescaled to unit norm.
    pub fn from_terms(basis: Basis, terms: &[(Occupation, Complex64)]) -> Result<Self> {
        let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
        for &(occ, amp) in terms {
            let idx = basis.index_of(occ).ok_or_else(|| {
                Error::Domain(format!("occupation {occ:?} outside basis {basis:?}"))
            })?;
            amps[idx] += amp;
        }
        Self::normalized(basis, amps)
    }

    pub fn vacuum(basis: Basis) -> Result<Self> {
        Self::from_terms(basis, &[((0, 0), Complex64::new(1.0, 0.0))])
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Amplitude of `|n1,n2>`; zero outside the basis.
    pub fn amplitude(&self, occ: Occupation) -> Complex64 {
        self.basis
            .index_of(occ)
            .map_or(Complex64::new(0.0, 0.0), |i| self.amplitudes[i])
    }

    /// `(occupation, amplitude)` pairs; empty for unlabeled bases.
    pub fn terms(&self) -> impl Iterator<Item = (Occupation, Complex64)> + '_ {
        self.amplitudes
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| self.basis.occupation(i).map(|o| (o, a)))
    }

    /// Re-expresses the state in `target`, failing if any nonzero amplitude does not fit.
    pub fn embed(&self, target: Basis) -> Result<Self> {
        let mut amps = vec![Complex64::new(0.0, 0.0); target.dim()];
        for (occ, a) in self.terms() {
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            let idx = target.index_of(occ).ok_or_else(|| {
                Error::Domain(format!("occupation {occ:?} does not fit in {target:?}"))
            })?;
            amps[idx] = a;
        }
        Ok(Self {
            basis: target,
            amplitudes: amps,
        })
    }

    /// Mode-swap symmetry: `amp(n1,n2) = amp(n2,n1)` within `tol`.
    pub fn is_path_symmetric(&self, tol: f64) -> bool {
        self.terms()
            .all(|((n1, n2), a)| (a - self.amplitude((n2, n1))).norm() <= tol)
    }

    pub fn projector(&self) -> HermitianMatrix {
        let a = &self.amplitudes;
        HermitianMatrix {
            basis: self.basis,
            matrix: ComplexMatrix::from_fn(a.len(), |i, j| a[i] * a[j].conj()),
        }
    }
}

/// Observable diagonal in the occupation basis.
#[derive(Debug, Clone, PartialEq)]
pub enum DiagonalObservable {
    /// `constant + c1 n1 + c2 n2`, defined on every labeled basis.
    Linear { constant: f64, c1: f64, c2: f64 },
    /// Explicit weights tied to one basis.
    Table { basis: Basis, weights: Vec<f64> },
}

impl DiagonalObservable {
    pub fn linear(c1: f64, c2: f64) -> Self {
        Self::Linear {
            constant: 0.0,
            c1,
            c2,
        }
    }

    /// `n_mode` for mode 1 or 2.
    pub fn number(mode: usize) -> Self {
        match mode {
            1 => Self::linear(1.0, 0.0),
            2 => Self::linear(0.0, 1.0),
            _ => panic!("probe modes are numbered 1 and 2, got {mode}"),
        }
    }

    pub fn total_number() -> Self {
        Self::linear(1.0, 1.0)
    }

    pub fn from_fn(basis: Basis, f: impl Fn(Occupation) -> f64) -> Result<Self> {
        let weights = basis.occupations()?.into_iter().map(f).collect();
        Ok(Self::Table { basis, weights })
    }

    /// Weight for every index of `basis`.
    pub fn weights_on(&self, basis: Basis) -> Result<Vec<f64>> {
        match self {
            Self::Linear { constant, c1, c2 } => Ok(basis
                .occupations()?
                .into_iter()
                .map(|(n1, n2)| constant + c1 * n1 as f64 + c2 * n2 as f64)
                .collect()),
            Self::Table { basis: own, weights } => {
                if *own == basis {
                    Ok(weights.clone())
                } else {
                    Err(Error::Domain(format!(
                        "observable defined on {own:?}, state lives on {basis:?}"
                    )))
                }
            }
        }
    }
}

/// `sum_i w_i |c_i|^2`.
pub fn expectation(state: &TwoModeState, obs: &DiagonalObservable) -> Result<f64> {
    let w = obs.weights_on(state.basis())?;
    Ok(w.iter()
        .zip(state.amplitudes())
        .map(|(w, a)| w * a.norm_sqr())
        .sum())
}

/// `<O^2> - <O>^2`, clamped at zero against round-off.
pub fn variance(state: &TwoModeState, obs: &DiagonalObservable) -> Result<f64> {
    let w = obs.weights_on(state.basis())?;
    let (m1, m2) = w
        .iter()
        .zip(state.amplitudes())
        .fold((0.0, 0.0), |(m1, m2), (w, a)| {
            let p = a.norm_sqr();
            (m1 + w * p, m2 + w * w * p)
        });
    Ok((m2 - m1 * m1).max(0.0))
}

/// `<AB> - <A><B>` for two diagonal observables.
pub fn covariance(
    state: &TwoModeState,
    a: &DiagonalObservable,
    b: &DiagonalObservable,
) -> Result<f64> {
    let wa = a.weights_on(state.basis())?;
    let wb = b.weights_on(state.basis())?;
    let (mut ma, mut mb, mut mab) = (0.0, 0.0, 0.0);
    for ((x, y), amp) in wa.iter().zip(&wb).zip(state.amplitudes()) {
        let p = amp.norm_sqr();
        ma += x * p;
        mb += y * p;
        mab += x * y * p;
    }
    Ok(mab - ma * mb)
}

/// `<n1> + <n2>`.
pub fn mean_particle_number(state: &TwoModeState) -> f64 {
    expectation(state, &DiagonalObservable::total_number())
        .expect("labeled bases support the number operator")
}

/// Hermitian operator on a two-mode basis, typically a density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    basis: Basis,
    matrix: ComplexMatrix,
}

impl HermitianMatrix {
    pub fn zeros(basis: Basis) -> Self {
        Self {
            basis,
            matrix: ComplexMatrix::zeros(basis.dim()),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            basis: Basis::Unlabeled { dim },
            matrix: ComplexMatrix::identity(dim),
        }
    }

    pub fn from_matrix(basis: Basis, matrix: ComplexMatrix) -> Result<Self> {
        if matrix.dim() != basis.dim() {
            return Err(Error::Domain(format!(
                "matrix of dimension {} for basis of dimension {}",
                matrix.dim(),
                basis.dim()
            )));
        }
        Ok(Self { basis, matrix })
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        self.matrix.as_slice().iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.matrix.hermiticity_deviation()
    }

    /// Largest entrywise difference; bases must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.basis != other.basis {
            return Err(Error::Domain(format!(
                "comparing matrices on {:?} and {:?}",
                self.basis, other.basis
            )));
        }
        Ok(self.matrix.max_abs_diff(&other.matrix))
    }

    /// `tr(rho O)` for a diagonal observable.
    pub fn expectation(&self, obs: &DiagonalObservable) -> Result<f64> {
        let w = obs.weights_on(self.basis)?;
        Ok(w.iter()
            .enumerate()
            .map(|(i, w)| w * self.matrix[(i, i)].re)
            .sum())
    }

    pub fn eig(&self) -> Result<EigenDecomposition> {
        eig_hermitian(&self.matrix)
    }

    /// `rho += weight |psi><psi|`.
    pub(crate) fn add_outer(&mut self, weight: f64, psi: &[Complex64]) {
        let n = self.dim();
        for i in 0..n {
            let a = psi[i];
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            let wa = weight * a;
            for j in 0..n {
                self.matrix[(i, j)] += wa * psi[j].conj();
            }
        }
    }
}

/// `sum_k p_k |psi_k><psi_k|` over a shared basis.
///
/// Fails when probabilities are negative or sum away from one by more than 1e-6.
pub fn mix<'a, I>(components: I) -> Result<HermitianMatrix>
where
    I: IntoIterator<Item = (f64, &'a TwoModeState)>,
{
    let mut rho: Option<HermitianMatrix> = None;
    let mut total = 0.0;
    for (p, state) in components {
        if !(p >= 0.0) {
            return Err(Error::Domain(format!("negative branch probability {p}")));
        }
        let acc = rho.get_or_insert_with(|| HermitianMatrix::zeros(state.basis()));
        if acc.basis != state.basis() {
            return Err(Error::Domain("branches do not share one basis".into()));
        }
        acc.add_outer(p, state.amplitudes());
        total += p;
    }
    if !((total - 1.0).abs() <= 1e-6) {
        return Err(Error::Inconsistent { sum: total });
    }
    rho.ok_or(Error::Inconsistent { sum: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn noon(n: usize) -> TwoModeState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        TwoModeState::from_terms(Basis::Paired { n_max: n }, &[((n, 0), r(s)), ((0, n), r(s))])
            .unwrap()
    }

    #[test]
    fn paired_layout_round_trips() {
        let b = Basis::Paired { n_max: 4 };
        assert_eq!(b.dim(), 9);
        for i in 0..b.dim() {
            assert_eq!(b.index_of(b.occupation(i).unwrap()), Some(i));
        }
        assert_eq!(b.index_of((1, 1)), None);
        assert_eq!(b.index_of((5, 0)), None);
    }

    #[test]
    fn dense_layout_round_trips() {
        let b = Basis::Dense { n_max: 3 };
        assert_eq!(b.dim(), 16);
        for i in 0..b.dim() {
            assert_eq!(b.index_of(b.occupation(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn noon_moments() {
        let s = noon(2);
        assert!((expectation(&s, &DiagonalObservable::number(1)).unwrap() - 1.0).abs() < 1e-15);
        let diff = DiagonalObservable::linear(1.0, -1.0);
        assert!((variance(&s, &diff).unwrap() - 4.0).abs() < 1e-14);
        assert!((mean_particle_number(&s) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn vacuum_has_no_fluctuations() {
        let v = TwoModeState::vacuum(Basis::Dense { n_max: 3 }).unwrap();
        assert_eq!(expectation(&v, &DiagonalObservable::number(1)).unwrap(), 0.0);
        assert_eq!(variance(&v, &DiagonalObservable::linear(0.3, -2.0)).unwrap(), 0.0);
    }

    #[test]
    fn table_observable_rejects_other_basis() {
        let obs = DiagonalObservable::from_fn(Basis::Paired { n_max: 3 }, |(a, _)| a as f64)
            .unwrap();
        let s = noon(2);
        assert!(matches!(expectation(&s, &obs), Err(Error::Domain(_))));
        let unlabeled = Basis::Unlabeled { dim: 3 };
        assert!(DiagonalObservable::number(1).weights_on(unlabeled).is_err());
    }

    #[test]
    fn single_branch_mix_is_pure() {
        let s = noon(3);
        let rho = mix([(1.0, &s)]).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-14);
        assert!((rho.purity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_branches_mix_to_half_half() {
        let b = Basis::Paired { n_max: 2 };
        let a = TwoModeState::from_terms(b, &[((1, 0), r(1.0))]).unwrap();
        let c = TwoModeState::from_terms(b, &[((0, 2), r(1.0))]).unwrap();
        let rho = mix([(0.5, &a), (0.5, &c)]).unwrap();
        let eig = rho.eig().unwrap();
        assert!((eig.eigenvalues[0] - 0.5).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 0.5).abs() < 1e-14);
        assert!(eig.eigenvalues[2..].iter().all(|l| l.abs() < 1e-14));
    }

    #[test]
    fn mix_rejects_bad_probabilities() {
        let s = noon(2);
        assert!(matches!(mix([(0.7, &s)]), Err(Error::Inconsistent { .. })));
        assert!(mix([(-0.1, &s), (1.1, &s)]).is_err());
    }

    #[test]
    fn embed_keeps_amplitudes() {
        let s = noon(2);
        let big = s.embed(Basis::Paired { n_max: 10 }).unwrap();
        assert_eq!(big.amplitude((2, 0)), s.amplitude((2, 0)));
        assert!(s.embed(Basis::Paired { n_max: 1 }).is_err());
        let dense = s.embed(Basis::Dense { n_max: 2 }).unwrap();
        assert_eq!(dense.amplitude((0, 2)), s.amplitude((0, 2)));
    }

    #[test]
    fn new_rejects_unnormalized() {
        let b = Basis::Paired { n_max: 1 };
        assert!(TwoModeState::new(b, vec![r(1.0), r(1.0), r(0.0)]).is_err());
        assert!(TwoModeState::new(b, vec![r(1.0)]).is_err());
    }
}
