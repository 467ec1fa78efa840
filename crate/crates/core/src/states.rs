//! Probe-state families at fixed mean particle number.
//!
//! Continuous-variable families are built from a single-mode component `|f>`
//! (coherent, squeezed vacuum, or even squeezed superposition) either as the
//! path-symmetric superposition `N(|f,0> + |0,f>)` or as the "M" variant
//! `N(|f,f> + |0,0>)`. Amplitudes come from closed-form recurrences with
//! analytic normalization, so raising `n_max` never changes retained entries.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Basis, TwoModeState};

/// Tail mass targeted by adaptive truncation; second moments weight the tail by `n^2`.
pub const ADAPTIVE_TAIL: f64 = 1e-15;
/// Largest tail mass accepted for an explicit, non-renormalized `n_max`.
pub const MAX_TAIL: f64 = 1e-12;
/// Hard cap on `n_max` for paired (path-symmetric) layouts.
pub const PAIRED_N_MAX_CAP: usize = 8192;
/// Hard cap on `n_max` for dense layouts (`(n_max + 1)^2` amplitudes).
pub const DENSE_N_MAX_CAP: usize = 1024;
/// Number-state families built from beam-split Fock states are limited to this many particles.
pub const BEAM_SPLIT_N_CAP: usize = 40;
/// Upper end of the calibration bracket for `alpha` and `r`.
pub const CALIBRATION_BRACKET: f64 = 20.0;

const SERIES_LIMIT: usize = 400_000;
const SERIES_FLOOR: f64 = 1e-40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `|N,0>` sent through a 50:50 beam splitter.
    Uncorrelated,
    /// Twin-Fock `|N/2,N/2>` sent through a 50:50 beam splitter.
    Bat,
    Noon,
    /// `(|N,N> + |0,0>)/sqrt(2)`.
    MaxEntangledM,
    Ecs,
    EcsM,
    Ses,
    SesM,
    Eess,
    EessM,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::Uncorrelated,
        Family::Bat,
        Family::Noon,
        Family::MaxEntangledM,
        Family::Ecs,
        Family::EcsM,
        Family::Ses,
        Family::SesM,
        Family::Eess,
        Family::EessM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Uncorrelated => "uncorrelated",
            Family::Bat => "bat",
            Family::Noon => "noon",
            Family::MaxEntangledM => "m-state",
            Family::Ecs => "ecs",
            Family::EcsM => "ecs-m",
            Family::Ses => "ses",
            Family::SesM => "ses-m",
            Family::Eess => "eess",
            Family::EessM => "eess-m",
        }
    }

    pub fn is_number_state(self) -> bool {
        matches!(
            self,
            Family::Uncorrelated | Family::Bat | Family::Noon | Family::MaxEntangledM
        )
    }

    /// Families of the form `N(|f,0> + |0,f>)`, supported on `{(k,0), (0,k)}`.
    pub fn is_path_symmetric(self) -> bool {
        matches!(self, Family::Noon | Family::Ecs | Family::Ses | Family::Eess)
    }

    pub fn is_m_type(self) -> bool {
        matches!(
            self,
            Family::MaxEntangledM | Family::EcsM | Family::SesM | Family::EessM
        )
    }

    /// Name of the calibrated parameter, if any.
    pub fn param_name(self) -> Option<&'static str> {
        match self {
            Family::Ecs | Family::EcsM => Some("alpha"),
            Family::Ses | Family::SesM | Family::Eess | Family::EessM => Some("r"),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match key.as_str() {
            "maxentangledm" | "max-entangled-m" | "m" | "noon-m" => "m-state",
            other => other,
        };
        Family::ALL
            .into_iter()
            .find(|f| f.name() == alias)
            .ok_or_else(|| Error::Domain(format!("unknown family '{s}'")))
    }
}

/// How the Fock expansion is cut off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Truncation {
    /// Smallest `n_max` whose tail mass is below [`ADAPTIVE_TAIL`].
    #[default]
    Adaptive,
    /// Exactly this `n_max`; fails if the tail mass reaches [`MAX_TAIL`].
    Fixed(usize),
    /// Exactly this `n_max`, discarding the tail and renormalizing.
    Clipped(usize),
}

/// Analytic normalization constants of the continuous-variable families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationSet {
    /// ECS: `(2 + 2 exp(-|alpha|^2))^(-1/2)`.
    pub n_alpha: f64,
    /// SES: `(2/cosh r + 2)^(-1/2)`.
    pub n_xi: f64,
    /// Even squeezed superposition `N(|xi> + |-xi>)`: `(2 + 2 (cosh 2r)^(-1/2))^(-1/2)`.
    pub n_even: f64,
    /// EESS path superposition factor.
    pub n_phi: f64,
    /// `n_phi * n_even`.
    pub n_xi_minus_xi: f64,
}

impl NormalizationSet {
    pub fn new(alpha: f64, r: f64) -> Self {
        let n_even = even_norm(r);
        let n_phi = eess_norm(r);
        Self {
            n_alpha: (2.0 + 2.0 * (-alpha * alpha).exp()).powf(-0.5),
            n_xi: (2.0 / r.cosh() + 2.0).powf(-0.5),
            n_even,
            n_phi,
            n_xi_minus_xi: n_phi * n_even,
        }
    }
}

pub(crate) fn even_norm(r: f64) -> f64 {
    (2.0 + 2.0 / (2.0 * r).cosh().sqrt()).powf(-0.5)
}

pub(crate) fn eess_norm(r: f64) -> f64 {
    let s = 1.0 / (2.0 * r).cosh().sqrt();
    ((1.0 + s) / (2.0 + 2.0 * s + 4.0 / r.cosh())).sqrt()
}

/// Mean total particle number of the ECS (and ECS-M) at real amplitude `alpha`.
pub fn ecs_mean(alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    a2 / (1.0 + (-a2).exp())
}

/// Mean total particle number of the SES (and SES-M) at squeezing `r`.
pub fn ses_mean(r: f64) -> f64 {
    let c = r.cosh();
    c * r.sinh().powi(2) / (1.0 + c)
}

/// Mean total particle number of the EESS (and EESS-M) at squeezing `r`.
pub fn eess_mean(r: f64) -> f64 {
    let nn = eess_norm(r) * even_norm(r);
    4.0 * nn * nn * r.sinh().powi(2) * (1.0 - (2.0 * r).cosh().powf(-1.5))
}

/// Parameter giving mean particle number `target_n`; `None` for number-state families.
pub fn calibrate(family: Family, target_n: f64) -> Result<Option<f64>> {
    let fail = |reason: &str| Error::Calibration {
        family: family.name().to_string(),
        target: target_n,
        reason: reason.to_string(),
    };
    if !(target_n > 0.0 && target_n.is_finite()) {
        return Err(fail("target must be positive and finite"));
    }
    match family {
        f if f.is_number_state() => {
            number_state_count(f, target_n)?;
            Ok(None)
        }
        Family::Ses | Family::SesM => {
            // cosh r (cosh r - 1) = N
            let c = 0.5 * (1.0 + (1.0 + 4.0 * target_n).sqrt());
            let r = c.acosh();
            if r > CALIBRATION_BRACKET {
                return Err(fail("outside the calibration bracket"));
            }
            Ok(Some(r))
        }
        Family::Ecs | Family::EcsM => bisect(ecs_mean, target_n).map(Some).ok_or_else(|| {
            fail("outside the calibration bracket")
        }),
        Family::Eess | Family::EessM => bisect(eess_mean, target_n)
            .map(Some)
            .ok_or_else(|| fail("outside the calibration bracket")),
        _ => unreachable!(),
    }
}

fn bisect(mean: fn(f64) -> f64, target: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0_f64, CALIBRATION_BRACKET);
    if !(mean(hi) >= target) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn number_state_count(family: Family, target_n: f64) -> Result<usize> {
    let n = target_n.round();
    let err = |reason: &str| Error::Calibration {
        family: family.name().to_string(),
        target: target_n,
        reason: reason.to_string(),
    };
    if (target_n - n).abs() > 1e-9 || n < 1.0 {
        return Err(err("number-state families need a positive integer particle count"));
    }
    let n = n as usize;
    if family == Family::Bat && n % 2 != 0 {
        return Err(err("the BAT state needs an even particle count"));
    }
    Ok(n)
}

/// Complete description of a probe state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub family: Family,
    /// Mean total particle number.
    pub target_n: f64,
    /// `alpha` for coherent families, `r` for squeezed families.
    pub param: Option<f64>,
    /// Phase of `alpha` or `xi` in radians.
    pub arg_param: f64,
    pub truncation: Truncation,
}

impl StateSpec {
    /// Calibrated spec with adaptive truncation and zero phase.
    pub fn new(family: Family, target_n: f64) -> Result<Self> {
        Ok(Self {
            family,
            target_n,
            param: calibrate(family, target_n)?,
            arg_param: 0.0,
            truncation: Truncation::Adaptive,
        })
    }

    /// Spec at an explicit `alpha` or `r`, with `target_n` set to the resulting mean.
    pub fn with_raw_param(family: Family, param: f64) -> Result<Self> {
        let target_n = match family {
            Family::Ecs | Family::EcsM => ecs_mean(param),
            Family::Ses | Family::SesM => ses_mean(param),
            Family::Eess | Family::EessM => eess_mean(param),
            _ => {
                return Err(Error::Domain(format!(
                    "{family} has no continuous parameter"
                )))
            }
        };
        Ok(Self {
            family,
            target_n,
            param: Some(param),
            arg_param: 0.0,
            truncation: Truncation::Adaptive,
        })
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_arg(mut self, arg_param: f64) -> Self {
        self.arg_param = arg_param;
        self
    }

    pub fn build(&self) -> Result<TwoModeState> {
        build_state(self)
    }
}

/// Single-mode component `|f>` of the continuous-variable families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingleMode {
    Coherent { alpha: Complex64 },
    /// Squeezed vacuum with `xi = r exp(i theta)`.
    Squeezed { r: f64, theta: f64 },
    /// `N(|xi> + |-xi>)`, supported on multiples of four.
    EvenSqueezed { r: f64, theta: f64 },
}

impl SingleMode {
    /// `<0|f>` in closed form.
    pub fn vacuum_overlap(&self) -> Complex64 {
        match *self {
            SingleMode::Coherent { alpha } => Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0),
            SingleMode::Squeezed { r, .. } => Complex64::new(1.0 / r.cosh().sqrt(), 0.0),
            SingleMode::EvenSqueezed { r, .. } => {
                Complex64::new(2.0 * even_norm(r) / r.cosh().sqrt(), 0.0)
            }
        }
    }

    /// Fock amplitudes `f_0, f_1, ...`, extended until past the peak and below 1e-40.
    pub fn series(&self) -> Result<Vec<Complex64>> {
        let mut out = Vec::new();
        let zero = Complex64::new(0.0, 0.0);
        let peak = match *self {
            SingleMode::Coherent { alpha } => alpha.norm_sqr().ceil() as usize,
            _ => 0,
        };
        match *self {
            SingleMode::Coherent { alpha } => {
                let mut c = self.vacuum_overlap();
                for k in 0..SERIES_LIMIT {
                    out.push(c);
                    if k > peak && c.norm_sqr() < SERIES_FLOOR {
                        return Ok(out);
                    }
                    c = c * alpha / ((k + 1) as f64).sqrt();
                }
            }
            SingleMode::Squeezed { r, theta } => {
                // C_{2n+2} = C_{2n} (-e^{i theta} tanh r / 2) sqrt((2n+1)(2n+2)) / (n+1)
                let ratio = -Complex64::from_polar(0.5 * r.tanh(), theta);
                let mut c = self.vacuum_overlap();
                for n in 0..SERIES_LIMIT / 2 {
                    out.push(c);
                    out.push(zero);
                    if c.norm_sqr() < SERIES_FLOOR {
                        out.pop();
                        return Ok(out);
                    }
                    let k = 2 * n;
                    c = c * ratio * (((k + 1) * (k + 2)) as f64).sqrt() / (n + 1) as f64;
                }
            }
            SingleMode::EvenSqueezed { r, theta } => {
                // D_{4m+4} = D_{4m} (e^{i theta} tanh r / 2)^2 sqrt((4m+1)...(4m+4)) / ((2m+1)(2m+2))
                let half = Complex64::from_polar(0.5 * r.tanh(), theta);
                let ratio = half * half;
                let mut c = self.vacuum_overlap();
                for m in 0..SERIES_LIMIT / 4 {
                    out.push(c);
                    if c.norm_sqr() < SERIES_FLOOR {
                        return Ok(out);
                    }
                    out.extend([zero; 3]);
                    let k = (4 * m) as f64;
                    let num = ((k + 1.0) * (k + 2.0) * (k + 3.0) * (k + 4.0)).sqrt();
                    let den = ((2 * m + 1) * (2 * m + 2)) as f64;
                    c = c * ratio * num / den;
                }
            }
        }
        Err(Error::Truncation {
            n_max: SERIES_LIMIT,
            tail: out.last().map_or(1.0, |c| c.norm_sqr()),
        })
    }
}

/// Builds the probe state described by `spec`.
pub fn build_state(spec: &StateSpec) -> Result<TwoModeState> {
    if spec.family.is_number_state() {
        return build_number_state(spec);
    }
    let param = match spec.param {
        Some(p) if p >= 0.0 && p.is_finite() => p,
        Some(p) => return Err(Error::Domain(format!("parameter {p} must be >= 0"))),
        None => calibrate(spec.family, spec.target_n)?.expect("continuous family"),
    };
    let theta = spec.arg_param;
    let mode = match spec.family {
        Family::Ecs | Family::EcsM => SingleMode::Coherent {
            alpha: Complex64::from_polar(param, theta),
        },
        Family::Ses | Family::SesM => SingleMode::Squeezed { r: param, theta },
        Family::Eess | Family::EessM => SingleMode::EvenSqueezed { r: param, theta },
        _ => unreachable!(),
    };
    let series = mode.series()?;
    let f0 = mode.vacuum_overlap();

    // suffix[k] = sum_{j >= k} |f_j|^2
    let mut suffix = vec![0.0; series.len() + 1];
    for k in (0..series.len()).rev() {
        suffix[k] = suffix[k + 1] + series[k].norm_sqr();
    }
    let tail_f = |n_max: usize| suffix.get(n_max + 1).copied().unwrap_or(0.0);

    let m_type = spec.family.is_m_type();
    let pair_norm = if m_type {
        (2.0 + 2.0 * (f0 * f0).re).powf(-0.5)
    } else {
        (2.0 + 2.0 * f0.norm_sqr()).powf(-0.5)
    };
    let two_mode_tail = |n_max: usize| {
        let t = tail_f(n_max);
        if m_type {
            pair_norm * pair_norm * (2.0 * t - t * t)
        } else {
            2.0 * pair_norm * pair_norm * t
        }
    };
    let cap = if m_type { DENSE_N_MAX_CAP } else { PAIRED_N_MAX_CAP };

    let (n_max, renormalize) = match spec.truncation {
        Truncation::Adaptive => {
            let n = (0..series.len())
                .find(|&n| two_mode_tail(n) < ADAPTIVE_TAIL)
                .unwrap_or(series.len());
            if n > cap {
                return Err(Error::Truncation {
                    n_max: cap,
                    tail: two_mode_tail(cap),
                });
            }
            (n, false)
        }
        Truncation::Fixed(n) => {
            let tail = two_mode_tail(n);
            if !(tail < MAX_TAIL) {
                return Err(Error::Truncation { n_max: n, tail });
            }
            (n, false)
        }
        Truncation::Clipped(n) => (n, true),
    };
    if n_max > cap {
        return Err(Error::Size {
            what: "n_max",
            size: n_max,
            limit: cap,
        });
    }

    let f = |k: usize| series.get(k).copied().unwrap_or_default();
    let (basis, amps) = if m_type {
        let basis = Basis::Dense { n_max };
        let side = n_max + 1;
        let mut amps = vec![Complex64::new(0.0, 0.0); side * side];
        for j in 0..side {
            let fj = f(j);
            for k in 0..side {
                amps[j * side + k] = pair_norm * fj * f(k);
            }
        }
        amps[0] += pair_norm;
        (basis, amps)
    } else {
        let basis = Basis::Paired { n_max };
        let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amps[0] = 2.0 * pair_norm * f(0);
        for k in 1..=n_max {
            amps[k] = pair_norm * f(k);
            amps[n_max + k] = pair_norm * f(k);
        }
        (basis, amps)
    };
    if renormalize {
        TwoModeState::normalized(basis, amps)
    } else {
        TwoModeState::new(basis, amps)
    }
}

fn build_number_state(spec: &StateSpec) -> Result<TwoModeState> {
    let n = number_state_count(spec.family, spec.target_n)?;
    let support = match spec.family {
        Family::MaxEntangledM => n,
        _ => n,
    };
    let n_max = match spec.truncation {
        Truncation::Adaptive => support,
        Truncation::Fixed(m) | Truncation::Clipped(m) => {
            if m < support {
                return Err(Error::Truncation { n_max: m, tail: 1.0 });
            }
            m
        }
    };
    let one = |x: f64| Complex64::new(x, 0.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match spec.family {
        Family::Noon => {
            if n_max > PAIRED_N_MAX_CAP {
                return Err(Error::Size {
                    what: "n_max",
                    size: n_max,
                    limit: PAIRED_N_MAX_CAP,
                });
            }
            TwoModeState::from_terms(Basis::Paired { n_max }, &[((n, 0), one(s)), ((0, n), one(s))])
        }
        Family::MaxEntangledM => {
            check_dense_cap(n_max)?;
            TwoModeState::from_terms(Basis::Dense { n_max }, &[((n, n), one(s)), ((0, 0), one(s))])
        }
        Family::Uncorrelated | Family::Bat => {
            check_dense_cap(n_max)?;
            if n > BEAM_SPLIT_N_CAP {
                return Err(Error::Size {
                    what: "beam-split particle number",
                    size: n,
                    limit: BEAM_SPLIT_N_CAP,
                });
            }
            let (m1, m2) = if spec.family == Family::Bat {
                (n / 2, n / 2)
            } else {
                (n, 0)
            };
            let terms: Vec<_> = beam_split_fock(m1, m2)
                .into_iter()
                .enumerate()
                .filter(|(_, a)| *a != 0.0)
                .map(|(k, a)| ((k, n - k), one(a)))
                .collect();
            TwoModeState::from_terms(Basis::Dense { n_max }, &terms)
        }
        _ => unreachable!(),
    }
}

fn check_dense_cap(n_max: usize) -> Result<()> {
    if n_max > DENSE_N_MAX_CAP {
        return Err(Error::Size {
            what: "n_max",
            size: n_max,
            limit: DENSE_N_MAX_CAP,
        });
    }
    Ok(())
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Amplitudes on `|k, m1 + m2 - k>` of `|m1, m2>` after the 50:50 beam splitter
/// `a† -> (a† + b†)/sqrt(2)`, `b† -> (a† - b†)/sqrt(2)`.
fn beam_split_fock(m1: usize, m2: usize) -> Vec<f64> {
    let n = m1 + m2;
    let ln_in = ln_factorial(m1) + ln_factorial(m2);
    (0..=n)
        .map(|k| {
            let mut coeff = 0.0;
            for j in 0..=m1.min(k) {
                let from_b = k - j;
                if from_b > m2 {
                    continue;
                }
                let sign = if (m2 - from_b) % 2 == 0 { 1.0 } else { -1.0 };
                coeff += sign * binomial(m1, j) * binomial(m2, from_b);
            }
            let scale = (0.5 * (ln_factorial(k) + ln_factorial(n - k) - ln_in)
                - 0.5 * n as f64 * std::f64::consts::LN_2)
                .exp();
            coeff * scale
        })
        .collect()
}
