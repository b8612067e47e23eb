//! Command-line experiments.
//!
//! Four subcommands:
//!
//! - `kernel`: the kernel row at one angle;
//! - `evolve`: exact or particle evolution with binned histograms and
//!   distances to the sine law at checkpoints;
//! - `oracle`: ray-traced validation of the branch probabilities plus the
//!   Liouville push-forward check;
//! - `skew`: a cylinder fiber, its product-formula measure and a
//!   Monte Carlo check of the skew representation.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage error, 3 resource cap.
//! CSV floats are written with 17 significant digits in `{:e}` notation.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::ensemble::ParticleEnsemble;
use crate::error::Error;
use crate::map::{Angle, MapParams};
use crate::measure::{
    atomize_density, distance_to_mu, AtomicMeasure, Distances, Evolver, Histogram, Interval,
    PiecewiseConstant, SineLaw, Uniform, DEFAULT_ATOM_CAP,
};
use crate::oracle::{
    default_grid, liouville_pushforward_check, validate_kernel_table, CellGeometry,
    ValidationReport,
};
use crate::skew::{
    cylinder_fiber, fiber_measure, skew_monte_carlo_check, CylinderWord, FiberInterval,
    MonteCarloRecord,
};
use crate::stats::ProductHistogramCheck;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAP: i32 = 3;

/// Steps up to this count are all checkpointed.
const DENSE_CHECKPOINT_LIMIT: usize = 50;
const SPARSE_CHECKPOINTS: usize = 20;

/// `x` with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Parser)]
#[command(
    name = "knudsen",
    version,
    about = "Random billiard in a serrated triangular wall"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the transition kernel row at one angle
    Kernel(KernelArgs),
    /// Evolve an initial distribution and report distances to the sine law
    Evolve(EvolveArgs),
    /// Validate the branch probabilities against the ray tracer
    Oracle(OracleArgs),
    /// Cylinder fiber, product formula and skew Monte Carlo at one point
    Skew(SkewArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Where the initial distribution comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Uniform,
    Sine,
    TwoBump,
    Atom(f64),
    File(PathBuf),
}

impl FromStr for Initial {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Initial::Uniform),
            "sine" => Ok(Initial::Sine),
            "two-bump" => Ok(Initial::TwoBump),
            _ => {
                if let Some(t) = s.strip_prefix("atom:") {
                    t.parse::<f64>()
                        .map(Initial::Atom)
                        .map_err(|e| format!("bad atom angle {t:?}: {e}"))
                } else if let Some(p) = s.strip_prefix("file:") {
                    Ok(Initial::File(PathBuf::from(p)))
                } else {
                    Err(format!(
                        "unknown initial distribution {s:?}; expected uniform, sine, two-bump, atom:<theta> or file:<path>"
                    ))
                }
            }
        }
    }
}

impl fmt::Display for Initial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Initial::Uniform => f.write_str("uniform"),
            Initial::Sine => f.write_str("sine"),
            Initial::TwoBump => f.write_str("two-bump"),
            Initial::Atom(t) => write!(f, "atom:{t}"),
            Initial::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 30_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 45)]
    pub bins: usize,
    #[arg(long, env = "KNUDSEN_SEED", default_value_t = 0)]
    pub seed: u64,
    /// uniform | sine | two-bump | atom:<theta> | file:<path>
    #[arg(long, default_value = "uniform")]
    pub initial: Initial,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Histogram output; standard output when omitted
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Distances output (CSV only). Defaults to `<output>.distances.csv`, or
    /// standard error when the histogram goes to standard output
    #[arg(long)]
    pub distances: Option<PathBuf>,
    /// Refuse exact evolution once a step would create more atoms than this
    #[arg(long, default_value_t = DEFAULT_ATOM_CAP)]
    pub atom_cap: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, env = "KNUDSEN_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Number of grid angles
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Traced entries per grid angle
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    /// Entries for the Liouville push-forward check
    #[arg(long, default_value_t = 1_000_000)]
    pub liouville_samples: u64,
}

#[derive(Debug, Args)]
pub struct SkewArgs {
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, env = "KNUDSEN_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Branch word i_1,...,i_n (i_n is applied first), e.g. `1,3,2` or `132`
    #[arg(long)]
    pub word: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x: f64,
    /// Monte Carlo samples for the skew check
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    /// Test interval for the skew check, lower end
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lo: f64,
    /// Test interval for the skew check, upper end
    #[arg(long, default_value_t = FRAC_PI_2, allow_hyphen_values = true)]
    pub hi: f64,
}

/// Validated evolution settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub steps: usize,
    pub particles: usize,
    pub bins: usize,
    pub seed: u64,
    #[serde(serialize_with = "serialize_display")]
    pub initial: Initial,
    pub mode: Mode,
}

fn serialize_display<T: fmt::Display, S: serde::Serializer>(
    v: &T,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl RunConfig {
    pub fn validate(&self) -> crate::Result<MapParams> {
        if self.particles == 0 {
            return Err(Error::InvalidArgument(
                "particles must be at least 1".into(),
            ));
        }
        if self.bins == 0 {
            return Err(Error::InvalidArgument("bins must be at least 1".into()));
        }
        MapParams::new(self.alpha)
    }

    /// The initial measure, discretised on `bins` bins where it has a density.
    pub fn initial_measure(&self) -> Result<AtomicMeasure, CliError> {
        let nu = match &self.initial {
            Initial::Uniform => atomize_density(&Uniform, 1, self.bins)?,
            Initial::Sine => atomize_density(&SineLaw, 1, self.bins)?,
            Initial::TwoBump => atomize_density(&PiecewiseConstant::two_bump(), 1, self.bins)?,
            Initial::Atom(t) => AtomicMeasure::dirac(Angle::new(*t)?),
            Initial::File(p) => match read_initial_file(p)? {
                InitialFile::Atoms(nu) => nu,
                InitialFile::Density(d) => atomize_density(&d, 1, self.bins)?,
            },
        };
        Ok(nu)
    }
}

/// Contents of an initial-distribution CSV file.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialFile {
    /// Header `theta,weight`; weights are normalised.
    Atoms(AtomicMeasure),
    /// Header `bin_lo,bin_hi,density`.
    Density(PiecewiseConstant),
}

pub fn read_initial_file(path: &Path) -> Result<InitialFile, CliError> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_initial_csv(file)
}

pub fn parse_initial_csv<R: io::Read>(reader: R) -> Result<InitialFile, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Usage(format!("initial file: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = rdr
        .records()
        .map(|r| {
            let r = r.map_err(|e| CliError::Usage(format!("initial file: {e}")))?;
            r.iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        CliError::Usage(format!("initial file: bad number {f:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<f64>, CliError>>()
        })
        .collect::<Result<Vec<Vec<f64>>, CliError>>()?;
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    match header.as_slice() {
        ["theta", "weight"] => Ok(InitialFile::Atoms(AtomicMeasure::from_weights(
            rows.iter().map(|r| (r[0], r[1])),
        )?)),
        ["bin_lo", "bin_hi", "density"] => Ok(InitialFile::Density(PiecewiseConstant::new(
            rows.iter().map(|r| (r[0], r[1], r[2])).collect(),
        )?)),
        _ => Err(CliError::Usage(format!(
            "initial file header {header:?} is neither theta,weight nor bin_lo,bin_hi,density"
        ))),
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Cap(String),
    Io(io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::AtomCapExceeded { .. } => CliError::Cap(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Cap(_) => EXIT_CAP,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Cap(m) => f.write_str(m),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Kernel(a) => cmd_kernel(&a, out),
        Command::Evolve(a) => cmd_evolve(&a, out, err),
        Command::Oracle(a) => cmd_oracle(&a, out),
        Command::Skew(a) => cmd_skew(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_kernel(a: &KernelArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = MapParams::new(a.alpha)?;
    let theta = Angle::new(a.theta)?;
    let row = params.kernel_row(theta);
    let region = params.region(theta);
    match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["branch", "probability", "image", "region"])?;
            for e in &row.entries {
                w.write_record([
                    e.branch.to_string(),
                    fmt17(e.weight),
                    fmt17(e.image.get()),
                    region.label().to_string(),
                ])?;
            }
            w.flush()?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct KernelOut<'a> {
                alpha: f64,
                theta: f64,
                region: &'a str,
                entries: &'a [crate::map::KernelEntry],
            }
            serde_json::to_writer_pretty(
                &mut *out,
                &KernelOut {
                    alpha: a.alpha,
                    theta: a.theta,
                    region: region.label(),
                    entries: &row.entries,
                },
            )?;
            writeln!(out)?;
        }
    }
    Ok(EXIT_OK)
}

/// Steps at which `evolve` reports: all of them up to 50 steps, otherwise
/// 20 evenly spaced ones starting at 0, plus the final step.
pub fn checkpoints(steps: usize) -> Vec<usize> {
    if steps <= DENSE_CHECKPOINT_LIMIT {
        return (0..=steps).collect();
    }
    let mut v: Vec<usize> = (0..SPARSE_CHECKPOINTS)
        .map(|i| i * steps / SPARSE_CHECKPOINTS)
        .collect();
    v.push(steps);
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub step: usize,
    pub tv: f64,
    pub ks: f64,
    pub masses: Vec<f64>,
}

/// Runs the configured evolution and returns the histograms at the
/// checkpoints.
pub fn run_evolution(cfg: &RunConfig, atom_cap: usize) -> Result<Vec<Checkpoint>, CliError> {
    let params = cfg.validate()?;
    let nu = cfg.initial_measure()?;
    let marks = checkpoints(cfg.steps);
    let mut out = Vec::with_capacity(marks.len());
    let mut record = |step: usize, h: Histogram| {
        let Distances { tv, ks } = distance_to_mu(&h);
        out.push(Checkpoint {
            step,
            tv,
            ks,
            masses: h.masses().to_vec(),
        });
    };
    let mut next_mark = marks.iter().peekable();
    match cfg.mode {
        Mode::Exact => {
            let mut ev = Evolver::new(nu, params).with_cap(atom_cap);
            for step in 0..=cfg.steps {
                if step > 0 {
                    ev.advance()?;
                }
                if next_mark.next_if_eq(&&step).is_some() {
                    record(step, Histogram::of_measure(ev.current(), cfg.bins));
                }
            }
        }
        Mode::Ensemble => {
            let mut ens = ParticleEnsemble::from_measure(&nu, cfg.particles, cfg.seed)?;
            for step in 0..=cfg.steps {
                if step > 0 {
                    ens.step_in_place(&params);
                }
                if next_mark.next_if_eq(&&step).is_some() {
                    record(step, ens.histogram(cfg.bins));
                }
            }
        }
    }
    Ok(out)
}

fn open_output(path: &Option<PathBuf>) -> Result<Option<BufWriter<File>>, CliError> {
    path.as_ref()
        .map(|p| {
            File::create(p)
                .map(BufWriter::new)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        })
        .transpose()
}

pub fn write_histogram_csv(cps: &[Checkpoint], w: &mut dyn Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["step", "bin_index", "bin_lo", "bin_hi", "mass"])?;
    for cp in cps {
        let h = Histogram::from_masses(cp.masses.clone())?;
        for (j, &m) in cp.masses.iter().enumerate() {
            let (lo, hi) = h.bin_bounds(j);
            w.write_record([
                cp.step.to_string(),
                j.to_string(),
                fmt17(lo),
                fmt17(hi),
                fmt17(m),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_distances_csv(cps: &[Checkpoint], w: &mut dyn Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["step", "tv", "ks"])?;
    for cp in cps {
        w.write_record([cp.step.to_string(), fmt17(cp.tv), fmt17(cp.ks)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_evolve(
    a: &EvolveArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let cfg = RunConfig {
        alpha: a.alpha,
        steps: a.steps,
        particles: a.particles,
        bins: a.bins,
        seed: a.seed,
        initial: a.initial.clone(),
        mode: a.mode,
    };
    let cps = run_evolution(&cfg, a.atom_cap)?;
    let mut file = open_output(&a.output)?;
    let main: &mut dyn Write = match file.as_mut() {
        Some(f) => f,
        None => out,
    };
    match a.format {
        Format::Json => {
            #[derive(Serialize)]
            struct EvolveOut<'a> {
                config: &'a RunConfig,
                checkpoints: &'a [Checkpoint],
            }
            serde_json::to_writer_pretty(
                &mut *main,
                &EvolveOut {
                    config: &cfg,
                    checkpoints: &cps,
                },
            )?;
            writeln!(main)?;
        }
        Format::Csv => {
            write_histogram_csv(&cps, main)?;
            let dist_path = a
                .distances
                .clone()
                .or_else(|| a.output.as_ref().map(|p| p.with_extension("distances.csv")));
            match open_output(&dist_path)? {
                Some(mut f) => {
                    write_distances_csv(&cps, &mut f)?;
                    f.flush()?;
                }
                None => write_distances_csv(&cps, err)?,
            }
        }
    }
    main.flush()?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub validation: ValidationReport,
    pub liouville: ProductHistogramCheck,
    pub passed: bool,
}

pub fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let geom = CellGeometry::new(a.alpha)?;
    if a.grid == 0 {
        return Err(CliError::Usage("grid must have at least one point".into()));
    }
    let grid = default_grid(a.grid, geom.params());
    let validation = validate_kernel_table(&grid, a.samples, a.seed, &geom)?;
    let liouville = liouville_pushforward_check(a.liouville_samples, a.seed, &geom)?;
    let passed = validation.passed && liouville.passed;
    let report = OracleReport {
        validation,
        liouville,
        passed,
    };
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out)?;
    Ok(if passed { EXIT_OK } else { EXIT_VALIDATION })
}

#[derive(Debug, Serialize)]
pub struct SkewReport {
    pub alpha: f64,
    pub word: CylinderWord,
    pub x: f64,
    pub fiber: FiberInterval,
    pub fiber_empty: bool,
    pub fiber_length: f64,
    pub measure: f64,
    pub diff: f64,
    pub monte_carlo: MonteCarloOut,
}

#[derive(Debug, Serialize)]
pub struct MonteCarloOut {
    /// The starting measure, a point mass at `x`.
    pub initial: String,
    pub interval: Interval,
    pub steps: usize,
    pub samples: u64,
    #[serde(flatten)]
    pub record: MonteCarloRecord,
    pub agrees: bool,
}

pub fn skew_report(a: &SkewArgs) -> Result<SkewReport, CliError> {
    let params = MapParams::new(a.alpha)?;
    let word: CylinderWord = a.word.parse()?;
    let x = Angle::new(a.x)?;
    let fiber = cylinder_fiber(x, &word, &params);
    let measure = fiber_measure(x, &word, &params);
    let interval = Interval::new(a.lo.clamp(0.0, PI), a.hi.clamp(0.0, PI));
    let record = skew_monte_carlo_check(
        &AtomicMeasure::dirac(x),
        interval,
        word.len(),
        a.samples,
        a.seed,
        &params,
    )?;
    Ok(SkewReport {
        alpha: a.alpha,
        x: a.x,
        fiber_empty: fiber.is_empty(),
        fiber_length: fiber.length(),
        diff: (fiber.length() - measure).abs(),
        fiber,
        measure,
        monte_carlo: MonteCarloOut {
            initial: format!("atom:{}", a.x),
            interval,
            steps: word.len(),
            samples: a.samples,
            agrees: record.agrees(),
            record,
        },
        word,
    })
}

pub fn cmd_skew(a: &SkewArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let report = skew_report(a)?;
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out)?;
    Ok(EXIT_OK)
}
