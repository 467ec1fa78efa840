//! Parameter sweeps and state inspection, with CSV and JSON output.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{mean_particle_number, Basis, TwoModeState};
use crate::loss::{branch_decompose, kraus_apply, LossChannel, PATH_SYMMETRY_TOL};
use crate::protocol::GyroParams;
use crate::qfi::{mandel_q, phase_uncertainty, qfi_mixed, qfi_pure, PhaseChoice, EIGEN_CUTOFF};
use crate::states::{Family, StateSpec, Truncation};

/// Truncation used for η sweeps at `N = 2` unless overridden.
pub const LOSSY_N_MAX: usize = 56;

/// Strictly increasing list of grid values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid(Vec<f64>);

impl Grid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("grid values must be finite".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("grid must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    /// `start..=stop` in steps of `step`, snapped to 1e-10.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(stop >= start) {
            return Err(Error::Domain(format!(
                "bad range {start}:{stop}:{step}; need step > 0 and stop >= start"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        let values = (0..=count)
            .map(|i| ((start + step * i as f64) * 1e10).round() / 1e10)
            .collect();
        Self::new(values)
    }

    /// Parses `start:stop:step` or a comma-separated list.
    pub fn parse(text: &str) -> Result<Self> {
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("'{s}' is not a number")))
        };
        let parts: Vec<&str> = text.split(':').collect();
        match parts.len() {
            3 => Self::range(num(parts[0])?, num(parts[1])?, num(parts[2])?),
            1 => Self::new(text.split(',').map(num).collect::<Result<_>>()?),
            _ => Err(Error::Domain(format!(
                "grid '{text}' must be start:stop:step or a comma list"
            ))),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn check_transmissions(&self) -> Result<()> {
        match self.0.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            Some(e) => Err(Error::Domain(format!("transmission {e} outside [0, 1]"))),
            None => Ok(()),
        }
    }

    /// 0.05 to 1.00 in steps of 0.01.
    pub fn default_eta() -> Self {
        Self::range(0.05, 1.0, 0.01).expect("static grid")
    }

    /// 1 to 10 in unit steps.
    pub fn default_n() -> Self {
        Self::range(1.0, 10.0, 1.0).expect("static grid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub families: Vec<Family>,
    pub grid: Grid,
    /// Mean particle number held fixed in η sweeps.
    pub fixed_n: f64,
    pub phase: PhaseChoice,
    /// Explicit truncation; states are cut at this occupation and renormalized.
    pub n_max: Option<usize>,
    pub params: GyroParams,
}

impl SweepConfig {
    pub fn new(families: Vec<Family>, grid: Grid) -> Self {
        Self {
            families,
            grid,
            fixed_n: 2.0,
            phase: PhaseChoice::Phi1,
            n_max: None,
            params: GyroParams::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::Domain("no families selected".into()));
        }
        self.params.validate()
    }

    fn truncation_for_n(&self) -> Truncation {
        self.n_max.map_or(Truncation::Adaptive, Truncation::Clipped)
    }

    fn truncation_for_eta(&self) -> Truncation {
        match self.n_max {
            Some(n) => Truncation::Clipped(n),
            None if self.fixed_n == 2.0 => Truncation::Clipped(LOSSY_N_MAX),
            None => Truncation::Adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NRow {
    pub family: Family,
    #[serde(rename = "N")]
    pub n: f64,
    pub param: Option<f64>,
    pub qfi: Option<f64>,
    pub delta_phi1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaRow {
    pub family: Family,
    pub eta: f64,
    pub qfi: Option<f64>,
    pub delta_phi1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Rows of a sweep; rows that could not be computed carry an error message.
pub trait SweepRow: Serialize {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
    fn error(&self) -> Option<&str>;
}

impl SweepRow for NRow {
    const HEADER: &'static [&'static str] = &["family", "N", "param", "qfi", "delta_phi1"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.family.name().into(),
            fmt_num(self.n),
            fmt_opt(self.param),
            fmt_opt(self.qfi),
            fmt_opt(self.delta_phi1),
        ]
    }

    fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }
}

impl SweepRow for EtaRow {
    const HEADER: &'static [&'static str] = &["family", "eta", "qfi", "delta_phi1"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.family.name().into(),
            fmt_num(self.eta),
            fmt_opt(self.qfi),
            fmt_opt(self.delta_phi1),
        ]
    }

    fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }
}

/// Lossless QFI for every `(family, N)`, families in configured order, then ascending `N`.
pub fn cmd_sweep_n(config: &SweepConfig) -> Result<Vec<NRow>> {
    config.validate()?;
    let truncation = config.truncation_for_n();
    let jobs = grid_jobs(&config.families, config.grid.values());
    Ok(jobs
        .into_par_iter()
        .map(|(family, n)| {
            let run = || -> Result<(Option<f64>, f64, f64)> {
                let spec = StateSpec::new(family, n)?.with_truncation(truncation);
                let state = spec.build()?;
                let qfi = qfi_pure(&state, &config.phase)?;
                let report = phase_uncertainty(qfi, &config.params, &config.phase)?;
                Ok((spec.param, qfi, report.delta_phase))
            };
            match run() {
                Ok((param, qfi, dp)) => NRow {
                    family,
                    n,
                    param,
                    qfi: Some(qfi),
                    delta_phi1: Some(dp),
                    error: None,
                },
                Err(e) => NRow {
                    family,
                    n,
                    param: None,
                    qfi: None,
                    delta_phi1: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Lossy QFI for every `(family, η)` at the configured mean particle number.
pub fn cmd_sweep_eta(config: &SweepConfig) -> Result<Vec<EtaRow>> {
    config.validate()?;
    config.grid.check_transmissions()?;
    let truncation = config.truncation_for_eta();
    let states: Vec<Result<TwoModeState>> = config
        .families
        .par_iter()
        .map(|&f| StateSpec::new(f, config.fixed_n)?.with_truncation(truncation).build())
        .collect();
    let jobs: Vec<(usize, f64)> = (0..config.families.len())
        .flat_map(|i| config.grid.values().iter().map(move |&eta| (i, eta)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(i, eta)| {
            let family = config.families[i];
            let run = || -> Result<(f64, f64)> {
                let state = states[i].as_ref().map_err(Clone::clone)?;
                let qfi = lossy_qfi(state, eta, &config.phase)?;
                let report = phase_uncertainty(qfi, &config.params, &config.phase)?;
                Ok((qfi, report.delta_phase))
            };
            match run() {
                Ok((qfi, dp)) => EtaRow {
                    family,
                    eta,
                    qfi: Some(qfi),
                    delta_phi1: Some(dp),
                    error: None,
                },
                Err(e) => EtaRow {
                    family,
                    eta,
                    qfi: None,
                    delta_phi1: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

fn grid_jobs(families: &[Family], grid: &[f64]) -> Vec<(Family, f64)> {
    families
        .iter()
        .flat_map(|&f| grid.iter().map(move |&x| (f, x)))
        .collect()
}

/// QFI after equal loss on both modes, via branches for path-symmetric states
/// and the generic Kraus map otherwise.
pub fn lossy_qfi(state: &TwoModeState, eta: f64, choice: &PhaseChoice) -> Result<f64> {
    let channel = LossChannel::new(eta)?;
    let symmetric =
        matches!(state.basis(), Basis::Paired { .. }) && state.is_path_symmetric(PATH_SYMMETRY_TOL);
    let rho = if symmetric {
        branch_decompose(state, &channel)?.mix()?
    } else {
        kraus_apply(state, &channel)?
    };
    qfi_mixed(&rho, &choice.generator(), EIGEN_CUTOFF)
}

/// Formats with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("round trip");
    if rounded != 0.0 && !(1e-5..1e16).contains(&rounded.abs()) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().expect("round trip")
    } else {
        x
    }
}

/// Writes rows as CSV with a header and `\n` line endings.
pub fn write_csv<R: SweepRow, W: Write>(rows: &[R], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::Domain(format!("writing CSV: {e}"));
    w.write_record(R::HEADER).map_err(io)?;
    for row in rows {
        w.write_record(row.fields()).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Domain(format!("writing CSV: {e}")))?;
    Ok(())
}

/// Rows with numbers rounded to 12 significant digits, ready for JSON encoding.
pub fn rounded_n_rows(rows: &[NRow]) -> Vec<NRow> {
    rows.iter()
        .map(|r| NRow {
            param: r.param.map(round_sig),
            qfi: r.qfi.map(round_sig),
            delta_phi1: r.delta_phi1.map(round_sig),
            ..r.clone()
        })
        .collect()
}

pub fn rounded_eta_rows(rows: &[EtaRow]) -> Vec<EtaRow> {
    rows.iter()
        .map(|r| EtaRow {
            qfi: r.qfi.map(round_sig),
            delta_phi1: r.delta_phi1.map(round_sig),
            ..r.clone()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeEntry {
    pub n1: usize,
    pub n2: usize,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QfiEntry {
    pub phase: String,
    pub qfi: f64,
    pub delta_phase: Option<f64>,
    pub delta_theta_min: Option<f64>,
}

/// Summary of one probe state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateReport {
    pub family: Family,
    pub target_n: f64,
    pub param_name: Option<&'static str>,
    pub param: Option<f64>,
    pub n_max: Option<usize>,
    pub mean_particle_number: f64,
    pub leading_amplitudes: Vec<AmplitudeEntry>,
    pub mandel_q: Option<f64>,
    pub qfi: Vec<QfiEntry>,
}

/// Amplitudes shown by [`cmd_state`].
pub const LEADING_AMPLITUDES: usize = 10;

pub fn cmd_state(
    family: Family,
    target_n: f64,
    n_max: Option<usize>,
    params: &GyroParams,
) -> Result<StateReport> {
    params.validate()?;
    let spec = StateSpec::new(family, target_n)?
        .with_truncation(n_max.map_or(Truncation::Adaptive, Truncation::Clipped));
    let state = spec.build()?;
    let leading_amplitudes = state
        .terms()
        .filter(|(_, a)| a.norm() > 1e-12)
        .take(LEADING_AMPLITUDES)
        .map(|((n1, n2), a)| AmplitudeEntry {
            n1,
            n2,
            re: a.re,
            im: a.im,
        })
        .collect();
    let choices = [
        PhaseChoice::Phi1,
        PhaseChoice::Phi2,
        PhaseChoice::PhiPlus,
        PhaseChoice::PhiMinus,
        PhaseChoice::ThetaDirect { theta: 0.0, jt: 1.0 }.at(params),
    ];
    let qfi = choices
        .iter()
        .map(|c| -> Result<QfiEntry> {
            let q = qfi_pure(&state, c)?;
            let report = phase_uncertainty(q, params, c).ok();
            Ok(QfiEntry {
                phase: c.name().into(),
                qfi: q,
                delta_phase: report.map(|r| r.delta_phase),
                delta_theta_min: report.map(|r| r.delta_theta_min),
            })
        })
        .collect::<Result<_>>()?;
    Ok(StateReport {
        family,
        target_n,
        param_name: family.param_name(),
        param: spec.param,
        n_max: state.basis().n_max(),
        mean_particle_number: mean_particle_number(&state),
        leading_amplitudes,
        mandel_q: mandel_q(&state, 1).ok(),
        qfi,
    })
}

impl std::fmt::Display for StateReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "family: {}", self.family)?;
        writeln!(f, "target N: {}", fmt_num(self.target_n))?;
        if let (Some(name), Some(p)) = (self.param_name, self.param) {
            writeln!(f, "{name}: {}", fmt_num(p))?;
        }
        if let Some(n) = self.n_max {
            writeln!(f, "n_max: {n}")?;
        }
        writeln!(f, "mean particle number: {}", fmt_num(self.mean_particle_number))?;
        match self.mandel_q {
            Some(q) => writeln!(f, "Mandel Q (mode 1): {}", fmt_num(q))?,
            None => writeln!(f, "Mandel Q (mode 1): undefined")?,
        }
        writeln!(f, "leading amplitudes:")?;
        for a in &self.leading_amplitudes {
            if a.im == 0.0 {
                writeln!(f, "  |{},{}>  {}", a.n1, a.n2, fmt_num(a.re))?;
            } else {
                writeln!(f, "  |{},{}>  {} {:+}i", a.n1, a.n2, fmt_num(a.re), fmt_num(a.im))?;
            }
        }
        writeln!(f, "lossless QFI:")?;
        for q in &self.qfi {
            write!(f, "  {:<6} {}", q.phase, fmt_num(q.qfi))?;
            if let Some(d) = q.delta_phase {
                write!(f, "  delta_phase {}", fmt_num(d))?;
            }
            if let Some(d) = q.delta_theta_min {
                write!(f, "  delta_theta_min {}", fmt_num(d))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(Grid::parse("1:3:1").unwrap().values(), &[1.0, 2.0, 3.0]);
        assert_eq!(Grid::parse("0.1,0.5").unwrap().values(), &[0.1, 0.5]);
        assert!(Grid::parse("0.5,0.1").is_err());
        assert!(Grid::parse("1:0:1").is_err());
        assert!(Grid::parse("a").is_err());
        let eta = Grid::default_eta();
        assert_eq!(eta.values().len(), 96);
        assert_eq!(eta.values()[95], 1.0);
        assert_eq!(eta.values()[37], 0.42);
        assert!(Grid::new(vec![0.5, 1.2]).unwrap().check_transmissions().is_err());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(std::f64::consts::FRAC_1_SQRT_2), "0.707106781187");
        assert_eq!(fmt_num(4.0), "4");
        assert_eq!(fmt_num(1.0 / 3.0 * 1e-4), "0.0000333333333333");
        assert_eq!(fmt_num(1.0 / 3.0 * 1e-7), "3.33333333333e-8");
    }

    #[test]
    fn sweep_rows_in_order() {
        let cfg = SweepConfig::new(vec![Family::Noon, Family::Ses], Grid::parse("1,2").unwrap());
        let rows = cmd_sweep_n(&cfg).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.family, r.n)).collect();
        assert_eq!(
            keys,
            vec![(Family::Noon, 1.0), (Family::Noon, 2.0), (Family::Ses, 1.0), (Family::Ses, 2.0)]
        );
        assert!((rows[1].qfi.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bad_rows_are_reported() {
        let cfg = SweepConfig::new(vec![Family::Bat], Grid::parse("2,3").unwrap());
        let rows = cmd_sweep_n(&cfg).unwrap();
        assert!(rows[0].error.is_none());
        assert!(rows[1].error.is_some());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("family,N,param,qfi,delta_phi1\n"));
        assert!(text.ends_with("bat,3,,,\n"));
    }

    #[test]
    fn state_report_noon() {
        let r = cmd_state(Family::Noon, 2.0, None, &GyroParams::default()).unwrap();
        assert_eq!(r.leading_amplitudes.len(), 2);
        assert!(r.to_string().contains("0.707106781187"));
    }
}
