//! The `eis` command line.
//!
//! Exit codes: 0 on success, 1 when an operation fails, 2 on usage errors.
//! A scheme that fails a condition is a finding, not an error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::StabilityError;
use crate::analysis::{
    stability_scan, truncation_order, verify_conditions, write_stability_csv, ResidualTable,
    DEFAULT_P_MAX,
};
use crate::derive::{self, default_abscissae, shift_by_one, DeriveError, LineRoot};
use crate::exact::ExactError;
use crate::harness::{self, HarnessError};
use crate::integrate::{integrate, FloatScheme, IntegrateError, Problem, BUILTIN_PROBLEMS};
use crate::scheme::{SchemeError, BUILTIN_NAMES};
use crate::{ExactVector, Rational, Scheme};

#[derive(Debug, Parser)]
#[command(
    name = "eis",
    version,
    about = "Analyse, derive and test error-inhibiting block one-step schemes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List built-in schemes and test problems.
    List,
    /// Check conditions C1-C4 exactly.
    Verify {
        /// Built-in name or path to a scheme file.
        scheme: String,
        /// Also write the report as JSON.
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Print the residual vectors d_p and the truncation order.
    Truncation {
        /// Built-in name or path to a scheme file.
        scheme: String,
        #[arg(long, default_value_t = DEFAULT_P_MAX)]
        p_max: u32,
    },
    /// Solve the order conditions for B given the row a.
    Derive(DeriveArgs),
    /// Search the row a for roots of the EIS constraint.
    Search(SearchArgs),
    /// Integrate a test problem and write the trajectory.
    Integrate {
        #[arg(long)]
        scheme: String,
        #[command(flatten)]
        problem: ProblemArgs,
        /// Block step, "p/q" or decimal.
        #[arg(long)]
        dt: Rational,
        /// Final time.
        #[arg(long = "T", value_name = "T")]
        t_end: Rational,
        /// CSV of the abscissa-0 row of every block.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Convergence study over a list of block steps.
    Converge {
        #[arg(long)]
        scheme: String,
        #[command(flatten)]
        problem: ProblemArgs,
        /// Strictly decreasing step list, e.g. 1/8,1/16,1/32.
        #[arg(long, value_delimiter = ',', required = true)]
        dts: Vec<Rational>,
        #[arg(long = "T", value_name = "T")]
        t_end: Rational,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        /// gnuplot script with the data inlined.
        #[arg(long, value_name = "PATH")]
        plot: Option<PathBuf>,
    },
    /// Spectral radius of A + zB over a rectangle of the complex plane.
    Stability {
        #[arg(long)]
        scheme: String,
        #[arg(
            long,
            default_value = "-4:1",
            allow_hyphen_values = true,
            value_name = "LO:HI"
        )]
        re: Range,
        #[arg(
            long,
            default_value = "-3:3",
            allow_hyphen_values = true,
            value_name = "LO:HI"
        )]
        im: Range,
        /// Grid points per axis.
        #[arg(long, default_value_t = 101)]
        n: usize,
        /// CSV with columns re,im,rho.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// P1 (Riccati), P2 (van der Pol), P3 (u' = lambda u), P4 (u' = cos(t) u).
    #[arg(long)]
    problem: String,
    /// lambda for P3.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
struct AbscissaeArgs {
    /// Block size; defaults to the length of the given vectors, or 2.
    #[arg(long)]
    s: Option<usize>,
    /// Input abscissae, descending, ending in 0. Default ((s-1)/s, ..., 0).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    c_in: Option<Vec<Rational>>,
    /// Output abscissae. Default c_in + 1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    c_out: Option<Vec<Rational>>,
}

#[derive(Debug, Args)]
struct SearchOptions {
    /// Search interval of the free parameter.
    #[arg(
        long,
        default_value = "-2:2",
        allow_hyphen_values = true,
        value_name = "LO:HI"
    )]
    range: Range,
    /// Grid points for bracketing sign changes.
    #[arg(long, default_value_t = 401)]
    samples: usize,
    /// For s = 3: fix one entry of a, e.g. 0=467/768.
    #[arg(long, allow_hyphen_values = true, value_name = "I=V")]
    fix: Option<Fix>,
    /// Directory for candidate scheme files.
    #[arg(long, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DeriveArgs {
    #[command(flatten)]
    abscissae: AbscissaeArgs,
    /// The row a of A = 1·aᵀ, comma-separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required_unless_present = "search",
        conflicts_with = "search"
    )]
    a: Option<Vec<Rational>>,
    /// Name of the derived scheme.
    #[arg(long, default_value = "derived")]
    name: String,
    /// Write the derived scheme file.
    #[arg(long, value_name = "PATH", conflicts_with = "search")]
    out: Option<PathBuf>,
    /// Search for EIS rows instead of deriving one.
    #[arg(long)]
    search: bool,
    #[command(flatten)]
    options: SearchOptions,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    abscissae: AbscissaeArgs,
    #[command(flatten)]
    options: SearchOptions,
}

#[derive(Clone, Debug)]
struct Range(Rational, Rational);

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
        let lo: Rational = lo.trim().parse().map_err(|e: ExactError| e.to_string())?;
        let hi: Rational = hi.trim().parse().map_err(|e: ExactError| e.to_string())?;
        Ok(Range(lo, hi))
    }
}

#[derive(Clone, Debug)]
struct Fix(usize, Rational);

impl FromStr for Fix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (i, v) = s
            .split_once('=')
            .ok_or_else(|| format!("expected INDEX=VALUE, got '{s}'"))?;
        let i = i
            .trim()
            .parse()
            .map_err(|_| format!("invalid index '{i}'"))?;
        let v = v.trim().parse().map_err(|e: ExactError| e.to_string())?;
        Ok(Fix(i, v))
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses `argv` (program name first) and runs the command, writing to the
/// process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut io::stdout().lock(), &mut io::stderr().lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                2
            } else {
                let _ = write!(out, "{}", e.render());
                0
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// A built-in name, or else a path to a scheme file.
fn resolve_scheme(arg: &str) -> Result<Scheme, CliError> {
    if BUILTIN_NAMES.iter().any(|n| n.eq_ignore_ascii_case(arg)) {
        return Ok(Scheme::builtin(arg)?);
    }
    if Path::new(arg).exists() {
        return Ok(Scheme::load(arg)?);
    }
    Err(CliError::Usage(format!(
        "'{arg}' is neither a built-in scheme ({}) nor an existing file",
        BUILTIN_NAMES.join(", ")
    )))
}

fn resolve_problem(args: &ProblemArgs) -> Result<Problem, CliError> {
    let problem = Problem::builtin(&args.problem).map_err(|_| {
        CliError::Usage(format!(
            "unknown problem '{}' (expected one of {})",
            args.problem,
            BUILTIN_PROBLEMS.join(", ")
        ))
    })?;
    match args.lambda {
        Some(lambda) if problem.name() == "P3" => Ok(Problem::dahlquist(lambda)),
        Some(_) => Err(CliError::Usage("--lambda only applies to P3".into())),
        None => Ok(problem),
    }
}

fn resolve_abscissae(
    args: &AbscissaeArgs,
    a_len: Option<usize>,
) -> Result<(ExactVector, ExactVector), CliError> {
    let s = args
        .s
        .or(a_len)
        .or(args.c_in.as_ref().map(Vec::len))
        .or(args.c_out.as_ref().map(Vec::len))
        .unwrap_or(2);
    if s == 0 {
        return Err(CliError::Usage("--s must be positive".into()));
    }
    let (default_in, _) = default_abscissae(s);
    let c_in = match &args.c_in {
        Some(v) => ExactVector::new(v.clone())?,
        None => default_in,
    };
    let c_out = match &args.c_out {
        Some(v) => ExactVector::new(v.clone())?,
        None => shift_by_one(&c_in),
    };
    if c_in.len() != s || c_out.len() != s {
        return Err(CliError::Usage(format!(
            "s = {s} but c_in has {} and c_out has {} entries",
            c_in.len(),
            c_out.len()
        )));
    }
    Ok((c_in, c_out))
}

fn to_f64_positive(q: &Rational, flag: &str) -> Result<f64, CliError> {
    let x = q.to_f64();
    if x <= 0.0 || !x.is_finite() {
        return Err(CliError::Usage(format!("{flag} must be positive, got {q}")));
    }
    Ok(x)
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let stdout_err = |source| CliError::Io {
        path: "<stdout>".into(),
        source,
    };
    match command {
        Command::List => list(out).map_err(stdout_err),
        Command::Verify { scheme, json } => {
            let scheme = resolve_scheme(&scheme)?;
            let report = verify_conditions(&scheme);
            writeln!(out, "scheme {}", scheme.name()).map_err(stdout_err)?;
            writeln!(out, "{report}").map_err(stdout_err)?;
            if let Some(path) = json {
                fs::write(&path, report.to_json() + "\n").map_err(io_err(&path))?;
            }
            Ok(())
        }
        Command::Truncation { scheme, p_max } => {
            let scheme = resolve_scheme(&scheme)?;
            truncation(&scheme, p_max, out).map_err(stdout_err)
        }
        Command::Derive(args) => {
            if args.search {
                return search(&args.abscissae, &args.options, out);
            }
            let a = ExactVector::new(args.a.expect("required unless --search"))?;
            let (c_in, c_out) = resolve_abscissae(&args.abscissae, Some(a.len()))?;
            derive_row(&args.name, &a, &c_in, &c_out, args.out.as_deref(), out)
        }
        Command::Search(args) => search(&args.abscissae, &args.options, out),
        Command::Integrate {
            scheme,
            problem,
            dt,
            t_end,
            out: csv,
        } => {
            let scheme = resolve_scheme(&scheme)?;
            let problem = resolve_problem(&problem)?;
            let dt = to_f64_positive(&dt, "--dt")?;
            run_integrate(&scheme, &problem, dt, t_end.to_f64(), csv.as_deref(), out)
        }
        Command::Converge {
            scheme,
            problem,
            dts,
            t_end,
            csv,
            plot,
        } => {
            let scheme = resolve_scheme(&scheme)?;
            let problem = resolve_problem(&problem)?;
            let dts = dts
                .iter()
                .map(|q| to_f64_positive(q, "--dts"))
                .collect::<Result<Vec<_>, _>>()?;
            let report = harness::converge(&scheme, &problem, &dts, t_end.to_f64())?;
            writeln!(out, "{report}").map_err(stdout_err)?;
            if let Some(path) = csv {
                harness::emit_csv(&report, &path)?;
            }
            if let Some(path) = plot {
                harness::emit_plot_script(&report, &path)?;
            }
            Ok(())
        }
        Command::Stability {
            scheme,
            re,
            im,
            n,
            out: csv,
        } => {
            let scheme = resolve_scheme(&scheme)?;
            let re = (re.0.to_f64(), re.1.to_f64());
            let im = (im.0.to_f64(), im.1.to_f64());
            let points = stability_scan(&scheme, re, im, n)?;
            let stable = points.iter().filter(|p| p.rho <= 1.0).count();
            let max = points.iter().map(|p| p.rho).fold(0.0, f64::max);
            writeln!(
                out,
                "{}: {n}x{n} grid, re in [{}, {}], im in [{}, {}]: rho <= 1 at {stable}/{} points, max rho {max:.6e}",
                scheme.name(),
                re.0,
                re.1,
                im.0,
                im.1,
                points.len()
            )
            .map_err(stdout_err)?;
            if let Some(path) = csv {
                write_stability_csv(&points, &path)?;
            }
            Ok(())
        }
    }
}

fn list(out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "schemes:")?;
    for scheme in Scheme::builtins() {
        let order = truncation_order(&scheme, DEFAULT_P_MAX);
        writeln!(
            out,
            "  {:<9} s = {}  truncation order {}  c_in = {}",
            scheme.name(),
            scheme.size(),
            order.order,
            scheme.c_in()
        )?;
    }
    writeln!(out, "problems:")?;
    writeln!(out, "  P1        u' = -u^2, u(0) = 1, exact 1/(1+t)")?;
    writeln!(
        out,
        "  P2        van der Pol, damping 0.1, u(0) = (2, 0), RK4 reference"
    )?;
    writeln!(
        out,
        "  P3        u' = lambda u, u(0) = 1, lambda = -1 unless --lambda"
    )?;
    writeln!(out, "  P4        u' = cos(t) u, u(0) = 1, exact exp(sin t)")
}

fn truncation(scheme: &Scheme, p_max: u32, out: &mut dyn Write) -> io::Result<()> {
    let order = truncation_order(scheme, p_max);
    writeln!(out, "scheme {}", scheme.name())?;
    for (p, d) in ResidualTable::compute(scheme, p_max + 1).iter() {
        writeln!(out, "d_{p} = {d}")?;
    }
    writeln!(
        out,
        "truncation order {}{}",
        order.order,
        if order.saturated { "+" } else { "" }
    )
}

fn derive_row(
    name: &str,
    a: &ExactVector,
    c_in: &ExactVector,
    c_out: &ExactVector,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let result = derive::derive(a, c_in, c_out)?;
    let stdout_err = |source| CliError::Io {
        path: "<stdout>".into(),
        source,
    };
    let mut text = format!("a = {}\nc_in = {c_in}\nc_out = {c_out}\nB =\n", result.a);
    for i in 0..result.b.rows() {
        let row = result
            .b
            .row_slice(i)
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        text.push_str(&format!("  [{row}]\n"));
    }
    text.push_str(&format!(
        "achieved order {}\neis_residual = {}",
        result.achieved_order, result.eis_residual
    ));
    writeln!(out, "{text}").map_err(stdout_err)?;
    if let Some(path) = path {
        derive::assemble(name, a, c_in, c_out)?.save(path)?;
    }
    Ok(())
}

fn search(
    abscissae: &AbscissaeArgs,
    options: &SearchOptions,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (c_in, c_out) = resolve_abscissae(abscissae, None)?;
    let range = (&options.range.0, &options.range.1);
    let roots: Vec<LineRoot> = match (c_in.len(), &options.fix) {
        (2, None) => derive::search_s2(&c_in, &c_out, range, options.samples)?,
        (2, Some(_)) => return Err(CliError::Usage("--fix only applies to s = 3".into())),
        (3, Some(Fix(i, v))) => {
            derive::search_s3_slice(&c_in, &c_out, *i, v, range, options.samples)?
        }
        (3, None) => {
            return Err(CliError::Usage(
                "s = 3 search needs --fix INDEX=VALUE".into(),
            ))
        }
        (s, _) => {
            return Err(CliError::Usage(format!(
                "search supports s = 2 or s = 3, got s = {s}"
            )))
        }
    };
    let stdout_err = |source| CliError::Io {
        path: "<stdout>".into(),
        source,
    };
    writeln!(
        out,
        "{} root(s) in [{}, {}]",
        roots.len(),
        options.range.0,
        options.range.1
    )
    .map_err(stdout_err)?;
    if roots.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(&options.out_dir).map_err(io_err(&options.out_dir))?;
    for (k, root) in roots.iter().enumerate() {
        let name = format!("EIS{}-{}", c_in.len(), k + 1);
        let scheme = derive::assemble(&name, &root.a, &c_in, &c_out)?;
        let report = verify_conditions(&scheme);
        let path = options
            .out_dir
            .join(format!("candidate_s{}_{}.json", c_in.len(), k + 1));
        scheme.save(&path)?;
        let residual = report
            .eis_residual
            .as_ref()
            .map_or_else(|| "n/a".to_string(), ToString::to_string);
        writeln!(
            out,
            "root {} a = {}  eis_residual = {residual}  -> {}",
            root.parameter,
            root.a,
            path.display()
        )
        .map_err(stdout_err)?;
    }
    Ok(())
}

fn run_integrate(
    scheme: &Scheme,
    problem: &Problem,
    dt: f64,
    t_end: f64,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let fs_scheme = FloatScheme::from(scheme);
    let traj = integrate(&fs_scheme, problem, dt, t_end, csv.is_some())?;
    let last = traj.last();
    let stdout_err = |source| CliError::Io {
        path: "<stdout>".into(),
        source,
    };
    let u = last
        .current()
        .iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(", ");
    writeln!(
        out,
        "{} on {}: {} block steps of dt = {dt}, u({}) = ({u})",
        scheme.name(),
        problem.name(),
        last.n,
        last.base_time
    )
    .map_err(stdout_err)?;
    if let Some(exact) = problem.exact(last.base_time) {
        let err = exact
            .iter()
            .zip(last.current())
            .map(|(e, v)| (e - v).abs())
            .fold(0.0, f64::max);
        writeln!(out, "max error vs exact solution: {err:.6e}").map_err(stdout_err)?;
    }
    if let Some(path) = csv {
        let mut text = String::from("t");
        for i in 0..problem.dim() {
            text.push_str(&format!(",component_{i}"));
        }
        text.push('\n');
        for state in &traj.states {
            text.push_str(&format!("{:.16e}", state.base_time));
            for x in state.current() {
                text.push_str(&format!(",{x:.16e}"));
            }
            text.push('\n');
        }
        fs::write(path, text).map_err(io_err(path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(
            std::iter::once("eis").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn range_and_fix_parsing() {
        let r: Range = "-2:1/2".parse().unwrap();
        assert_eq!((r.0, r.1), (Rational::integer(-2), Rational::ratio(1, 2)));
        assert!("1,2".parse::<Range>().is_err());
        let f: Fix = "0=467/768".parse().unwrap();
        assert_eq!((f.0, f.1), (0, Rational::ratio(467, 768)));
        assert!("x=1".parse::<Fix>().is_err());
    }

    #[test]
    fn verify_prints_condition_lines() {
        let (code, out, _) = run_capture(&["verify", "butcher2"]);
        assert_eq!(code, 0);
        assert!(out.contains("C1 PASS rank=1"));
        assert!(out.contains("C4 FAIL eis_residual=19/24"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_capture(&["verify"]).0, 2);
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["verify", "S2", "--bogus"]).0, 2);
        assert_eq!(run_capture(&["verify", "NOPE"]).0, 2);
        assert_eq!(
            run_capture(&[
                "integrate",
                "--scheme",
                "S2",
                "--problem",
                "P1",
                "--dt",
                "x",
                "--T",
                "1"
            ])
            .0,
            2
        );
        assert_eq!(run_capture(&["search", "--s", "3"]).0, 2);
    }

    #[test]
    fn help_and_version_exit_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        for sub in [
            "list",
            "verify",
            "truncation",
            "derive",
            "search",
            "integrate",
            "converge",
            "stability",
        ] {
            assert!(out.contains(sub), "{sub} missing from help");
        }
        assert_eq!(run_capture(&["--version"]).0, 0);
    }

    #[test]
    fn domain_errors_exit_one() {
        let (code, _, err) = run_capture(&[
            "integrate",
            "--scheme",
            "S2",
            "--problem",
            "P1",
            "--dt",
            "0.3",
            "--T",
            "1",
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("not reachable"));
        let (code, _, err) = run_capture(&["derive", "--a", "1/2,1/4"]);
        assert_eq!(code, 1);
        assert!(err.contains("row sum violation"));
    }
}
