//! Command-line driver: single solves, convergence sweeps, CSV output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::geometry::build_case_mesh;
use crate::postproc::{convergence_sweep, ErrorReport, SweepResult};
use crate::problems::{make_case, CaseParams, CASE_DESCRIPTIONS};
use crate::solver::SolverConfig;

pub const CSV_HEADER: &str = "case,W,param,E_u_H1,E_p_L2,E_c_L2,iters,converged,seconds";

#[derive(Debug, Parser)]
#[command(name = "lssem", version, about = "Least-squares spectral element solver for 2D generalized Stokes problems")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Solve one case at one polynomial order
    Solve(SolveArgs),
    /// Solve one case over a range of orders and fit the error decay
    Sweep(SolveArgs),
    /// Describe the built-in cases
    ListCases,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Case number, 1 to 6
    #[arg(long = "case")]
    case_id: usize,
    /// Polynomial order W, or an inclusive range A:B
    #[arg(long = "w", default_value = "4")]
    w: String,
    /// Reynolds number (case 2 only)
    #[arg(long)]
    re: Option<f64>,
    /// Viscosity (all cases except 2)
    #[arg(long)]
    nu: Option<f64>,
    /// Relative preconditioned residual tolerance
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 20000)]
    max_iter: usize,
    /// Extra Gauss points per direction for the volume residuals (W + QUAD in total)
    #[arg(long, default_value_t = 3)]
    quad: usize,
    /// CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave the seconds column empty so repeated runs give identical files
    #[arg(long = "no-timing")]
    no_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Sweep,
    ListCases,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub case_id: usize,
    pub degrees: Vec<usize>,
    pub params: CaseParams,
    pub solver: SolverConfig,
    pub out: Option<PathBuf>,
    pub timing: bool,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn parse_degrees(s: &str) -> Result<Vec<usize>> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| usage(format!("invalid order '{t}'")));
    let degrees: Vec<usize> = match s.split_once(':') {
        Some((a, b)) => (num(a)?..=num(b)?).collect(),
        None => vec![num(s)?],
    };
    if degrees.is_empty() {
        return Err(usage(format!("empty order range '{s}'")));
    }
    if degrees[0] < 2 {
        return Err(usage(format!("orders must be at least 2, got '{s}'")));
    }
    Ok(degrees)
}

impl RunConfig {
    fn from_cli(cli: Cli) -> Result<Self> {
        let args = match cli.command {
            CliCommand::ListCases => {
                return Ok(Self {
                    command: Command::ListCases,
                    case_id: 0,
                    degrees: Vec::new(),
                    params: CaseParams::default(),
                    solver: SolverConfig::default(),
                    out: None,
                    timing: true,
                })
            }
            CliCommand::Solve(ref a) | CliCommand::Sweep(ref a) => a,
        };
        let command = if matches!(cli.command, CliCommand::Solve(_)) { Command::Solve } else { Command::Sweep };
        if !(1..=6).contains(&args.case_id) {
            return Err(usage(format!("unknown case {} (expected 1 to 6)", args.case_id)));
        }
        let degrees = parse_degrees(&args.w)?;
        if command == Command::Solve && degrees.len() != 1 {
            return Err(usage("solve takes a single order; use sweep for a range"));
        }
        if !(args.tol > 0.0 && args.tol.is_finite()) {
            return Err(usage(format!("tolerance must be positive, got {}", args.tol)));
        }
        if args.max_iter == 0 {
            return Err(usage("max-iter must be at least 1"));
        }
        if args.quad == 0 {
            return Err(usage("quad must be at least 1"));
        }
        let params = CaseParams { reynolds: args.re, nu: args.nu };
        make_case(args.case_id, params).map_err(|e| usage(e.to_string()))?;
        Ok(Self {
            command,
            case_id: args.case_id,
            degrees,
            params,
            solver: SolverConfig { tol: args.tol, max_iter: args.max_iter, quad_extra: args.quad, preconditioned: true },
            out: args.out.clone(),
            timing: !args.no_timing,
        })
    }
}

/// Parses and validates a full argument vector (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| usage(e.to_string()))?;
    RunConfig::from_cli(cli)
}

/// Like [`parse_args`] but lets clap print help, version, and parse errors
/// and exit the process.
pub fn parse_env_args() -> Result<RunConfig> {
    RunConfig::from_cli(Cli::parse())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text for `reports`; the seconds column is empty unless `timing`.
pub fn reports_to_csv(reports: &[ErrorReport], timing: bool) -> String {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}").unwrap();
    for r in reports {
        let seconds = if timing { fmt_f64(r.seconds) } else { String::new() };
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.case_id,
            r.degree,
            fmt_f64(r.param),
            fmt_f64(r.e_u),
            fmt_f64(r.e_p),
            fmt_f64(r.e_c),
            r.iterations,
            r.converged,
            seconds
        )
        .unwrap();
    }
    s
}

/// Parses text written by [`reports_to_csv`]. An empty seconds field reads as 0.
pub fn reports_from_csv(text: &str) -> Result<Vec<ErrorReport>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Contract("missing or wrong CSV header".into()));
    }
    let bad = |line: &str| Error::Contract(format!("malformed CSV row '{line}'"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad(line));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad(line));
            Ok(ErrorReport {
                case_id: int(f[0])?,
                degree: int(f[1])?,
                param: float(f[2])?,
                e_u: float(f[3])?,
                e_p: float(f[4])?,
                e_c: float(f[5])?,
                iterations: int(f[6])?,
                converged: f[7].parse().map_err(|_| bad(line))?,
                seconds: if f[8].is_empty() { 0.0 } else { float(f[8])? },
            })
        })
        .collect()
}

/// Human-readable aligned table of `reports`.
pub fn reports_table(reports: &[ErrorReport], timing: bool) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>4} {:>3} {:>10} {:>12} {:>12} {:>12} {:>7} {:>9} {:>9}",
        "case", "W", "param", "E_u_H1", "E_p_L2", "E_c_L2", "iters", "converged", "seconds"
    )
    .unwrap();
    for r in reports {
        let seconds = if timing { format!("{:.3}", r.seconds) } else { "-".into() };
        writeln!(
            s,
            "{:>4} {:>3} {:>10.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>7} {:>9} {:>9}",
            r.case_id, r.degree, r.param, r.e_u, r.e_p, r.e_c, r.iterations, r.converged, seconds
        )
        .unwrap();
    }
    s
}

/// Outcome of [`run`]; the process exit status is [`RunOutcome::exit_code`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub sweep: Option<SweepResult>,
    pub all_converged: bool,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.all_converged {
            0
        } else {
            1
        }
    }
}

/// Executes `config`, printing to `stdout` and writing the CSV if requested.
pub fn run(config: &RunConfig, stdout: &mut dyn Write) -> Result<RunOutcome> {
    if config.command == Command::ListCases {
        for (k, d) in CASE_DESCRIPTIONS.iter().enumerate() {
            writeln!(stdout, "{}  {d}", k + 1)?;
        }
        return Ok(RunOutcome { sweep: None, all_converged: true });
    }
    let mesh = build_case_mesh(config.case_id)?;
    let case = make_case(config.case_id, config.params)?;
    let sweep = convergence_sweep(&mesh, &case, &config.degrees, &config.solver)?;
    write!(stdout, "{}", reports_table(&sweep.reports, config.timing))?;
    if config.command == Command::Sweep {
        let show = |s: Option<f64>| s.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(
            stdout,
            "fitted ln(error) slope per unit W: E_u {}, E_p {}, E_c {}",
            show(sweep.slope_u),
            show(sweep.slope_p),
            show(sweep.slope_c)
        )?;
    }
    if let Some(path) = &config.out {
        std::fs::write(path, reports_to_csv(&sweep.reports, config.timing))?;
    }
    let all_converged = sweep.all_converged;
    if !all_converged {
        writeln!(stdout, "warning: at least one solve did not reach the tolerance")?;
    }
    Ok(RunOutcome { sweep: Some(sweep), all_converged })
}
