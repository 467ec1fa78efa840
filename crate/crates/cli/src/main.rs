use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gyroqfi::protocol::GyroParams;
use gyroqfi::qfi::PhaseChoice;
use gyroqfi::states::Family;
use gyroqfi::sweep::{
    cmd_state, cmd_sweep_eta, cmd_sweep_n, rounded_eta_rows, rounded_n_rows, write_csv, Grid,
    SweepConfig, SweepRow,
};
use gyroqfi::verify::cmd_verify;
use serde::Serialize;

const THREADS_VAR: &str = "QFI_GYRO_THREADS";
const DEFAULT_FAMILIES: &str = "noon,ecs,ses,eess";

/// Quantum Fisher information of probe states for a three-site ring gyroscope.
#[derive(Parser, Debug)]
#[command(name = "gyroqfi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lossless QFI and phase uncertainty against mean particle number.
    SweepN(SweepArgs),
    /// Lossy QFI and phase uncertainty against transmission at fixed N.
    SweepEta(SweepArgs),
    /// Run the invariant suite; exit 1 if any check fails.
    Verify {
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect one calibrated probe state.
    State(StateArgs),
}

#[derive(Args, Debug, Default)]
struct Shared {
    /// Phase to estimate: phi1, phi2, plus, minus or theta.
    #[arg(long)]
    phase: Option<String>,
    /// Truncate every state at this occupation and renormalize.
    #[arg(long)]
    nmax: Option<usize>,
    /// Independent repeats.
    #[arg(long)]
    mu: Option<u32>,
    /// Rotation phase working point, radians.
    #[arg(long)]
    theta: Option<f64>,
    /// Product J t_omega.
    #[arg(long)]
    jt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Flat key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated families.
    #[arg(long)]
    family: Option<String>,
    /// N grid for sweep-n, as start:stop:step or a comma list.
    #[arg(long)]
    n_grid: Option<String>,
    /// Transmission grid for sweep-eta.
    #[arg(long)]
    eta_grid: Option<String>,
    /// Mean particle number held fixed in sweep-eta.
    #[arg(long)]
    n: Option<f64>,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args, Debug)]
struct StateArgs {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<f64>,
    #[command(flatten)]
    shared: Shared,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn compute(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Compute(e.into())
}

/// Values read from a `key=value` config file.
struct FileConfig {
    path: Option<PathBuf>,
    values: BTreeMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self {
                path: None,
                values: BTreeMap::new(),
            });
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(usage)?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                usage(anyhow!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            let key = key.trim().replace('_', "-");
            if !allowed.contains(&key.as_str()) {
                return Err(usage(anyhow!(
                    "{}:{}: unknown key '{key}'",
                    path.display(),
                    i + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            values,
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| {
                let path = self.path.as_deref().unwrap_or(Path::new("config"));
                usage(anyhow!("{}: bad value for {key}: {e}", path.display()))
            }),
        }
    }
}

fn pick<T: std::str::FromStr>(
    flag: Option<T>,
    file: &FileConfig,
    key: &str,
) -> Result<Option<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    Format::from_str(s, true)
}

struct Resolved {
    params: GyroParams,
    phase: PhaseChoice,
    nmax: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

fn resolve_shared(shared: &Shared, file: &FileConfig) -> Result<Resolved, Failure> {
    let mut params = GyroParams::default();
    if let Some(jt) = pick(shared.jt, file, "jt")? {
        params.coupling = jt;
        params.t_omega = 1.0;
    }
    params.theta = pick(shared.theta, file, "theta")?.unwrap_or(params.theta);
    params.mu = pick(shared.mu, file, "mu")?.unwrap_or(params.mu);
    params.validate().map_err(usage)?;

    let phase: PhaseChoice = match pick(shared.phase.clone(), file, "phase")? {
        Some(s) => s.parse().map_err(usage)?,
        None => PhaseChoice::Phi1,
    };
    let format = match shared.format {
        Some(f) => Some(f),
        None => match file.values.get("format") {
            Some(s) => Some(parse_format(s).map_err(|e| usage(anyhow!(e)))?),
            None => None,
        },
    };
    Ok(Resolved {
        phase: phase.at(&params),
        params,
        nmax: pick(shared.nmax, file, "nmax")?,
        out: pick(shared.out.clone(), file, "out")?,
        format,
    })
}

fn parse_families(text: &str) -> Result<Vec<Family>, Failure> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Family>().map_err(usage))
        .collect()
}

const SWEEP_KEYS: &[&str] = &[
    "family", "n-grid", "eta-grid", "n", "phase", "nmax", "mu", "theta", "jt", "out", "format",
];
const STATE_KEYS: &[&str] = &[
    "family", "n", "phase", "nmax", "mu", "theta", "jt", "out", "format",
];

fn sweep_config(args: &SweepArgs, eta: bool) -> Result<(SweepConfig, Resolved), Failure> {
    let file = FileConfig::load(args.shared.config.as_deref(), SWEEP_KEYS)?;
    let shared = resolve_shared(&args.shared, &file)?;
    let families = parse_families(
        &pick(args.family.clone(), &file, "family")?.unwrap_or_else(|| DEFAULT_FAMILIES.into()),
    )?;
    let grid = if eta {
        match pick(args.eta_grid.clone(), &file, "eta-grid")? {
            Some(g) => Grid::parse(&g).map_err(usage)?,
            None => Grid::default_eta(),
        }
    } else {
        match pick(args.n_grid.clone(), &file, "n-grid")? {
            Some(g) => Grid::parse(&g).map_err(usage)?,
            None => Grid::default_n(),
        }
    };
    if eta {
        grid.check_transmissions().map_err(usage)?;
    }
    let mut config = SweepConfig::new(families, grid);
    if let Some(n) = pick(args.n, &file, "n")? {
        if !(n > 0.0 && n.is_finite()) {
            return Err(usage(anyhow!("--n must be positive, got {n}")));
        }
        config.fixed_n = n;
    }
    config.phase = shared.phase;
    config.n_max = shared.nmax;
    config.params = shared.params;
    Ok((config, shared))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(p) => {
            let f = fs::File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .map_err(compute)?;
            Ok(Box::new(io::BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(compute)?;
    writeln!(w).map_err(compute)?;
    w.flush().map_err(compute)
}

fn emit_rows<R: SweepRow>(
    rows: &[R],
    rounded: Vec<R>,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    match format {
        Format::Csv => {
            let mut w = sink(out)?;
            write_csv(rows, &mut w).map_err(compute)?;
            w.flush().map_err(compute)?;
        }
        Format::Json => write_json(&rounded, out)?,
        Format::Text => return Err(usage(anyhow!("sweeps write csv or json"))),
    }
    let failed: Vec<&str> = rows.iter().filter_map(|r| r.error()).collect();
    if failed.is_empty() {
        return Ok(());
    }
    for e in &failed {
        eprintln!("row error: {e}");
    }
    Err(compute(anyhow!(
        "{} of {} rows failed",
        failed.len(),
        rows.len()
    )))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SweepN(args) => {
            let (config, shared) = sweep_config(&args, false)?;
            let rows = cmd_sweep_n(&config).map_err(usage)?;
            let fmt = shared.format.unwrap_or(Format::Csv);
            emit_rows(&rows, rounded_n_rows(&rows), fmt, shared.out.as_deref())
        }
        Command::SweepEta(args) => {
            let (config, shared) = sweep_config(&args, true)?;
            let rows = cmd_sweep_eta(&config).map_err(usage)?;
            let fmt = shared.format.unwrap_or(Format::Csv);
            emit_rows(&rows, rounded_eta_rows(&rows), fmt, shared.out.as_deref())
        }
        Command::Verify { format, out } => {
            let report = cmd_verify();
            match format.unwrap_or(Format::Text) {
                Format::Json => write_json(&report, out.as_deref())?,
                Format::Text => {
                    let mut w = sink(out.as_deref())?;
                    write!(w, "{report}").map_err(compute)?;
                    w.flush().map_err(compute)?;
                }
                Format::Csv => return Err(usage(anyhow!("verify writes text or json"))),
            }
            if report.all_passed() {
                Ok(())
            } else {
                Err(compute(anyhow!("verification failed")))
            }
        }
        Command::State(args) => {
            let file = FileConfig::load(args.shared.config.as_deref(), STATE_KEYS)?;
            let shared = resolve_shared(&args.shared, &file)?;
            let family: Family = pick(args.family.clone(), &file, "family")?
                .ok_or_else(|| usage(anyhow!("--family is required")))?
                .parse()
                .map_err(usage)?;
            let n = pick(args.n, &file, "n")?.unwrap_or(2.0);
            let report = cmd_state(family, n, shared.nmax, &shared.params).map_err(compute)?;
            match shared.format.unwrap_or(Format::Text) {
                Format::Json => write_json(&report, shared.out.as_deref()),
                Format::Text => {
                    let mut w = sink(shared.out.as_deref())?;
                    write!(w, "{report}").map_err(compute)?;
                    w.flush().map_err(compute)
                }
                Format::Csv => Err(usage(anyhow!("state writes text or json"))),
            }
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        usage(anyhow!(
            "{THREADS_VAR} must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(compute)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Compute(e)) = &f;
            let closed = e
                .downcast_ref::<io::Error>()
                .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe);
            if closed {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
