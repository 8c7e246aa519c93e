//! Command-line interface.
//!
//! Exit codes: 0 success, 1 failed self-test, 2 data error, 3 configuration
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::aggregate::StatisticId;
use crate::calibrate::{run_test_using, Method, TestResult};
use crate::constants::{Check, Constants};
use crate::error::{Error, Result};
use crate::kernels::KernelId;
use crate::pairwise::{u_stat, u_stat_naive, w_stat, w_stat_naive};
use crate::ranks::{compute_ranks, DataMatrix, TiePolicy};
use crate::rng::{random_permutation, substream, Domain};
use crate::simgen::{run_experiment, write_experiment_csv, Family, Marginal, ScatterShape, SimScenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Sample size below which the report suggests Monte Carlo calibration.
pub const SMALL_N: usize = 32;

#[derive(Parser, Debug)]
#[command(name = "rankdep", version, about = "Rank-based tests of mutual independence for many variables")]
struct Cli {
    /// Worker threads for pairwise and Monte Carlo work (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test mutual independence of the columns of a CSV file
    Test(TestArgs),
    /// Estimate rejection rates on simulated data
    Simulate(SimulateArgs),
    /// Check fast paths against enumeration and verify the constants file
    Selftest(SelftestArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Asymptotic,
    Montecarlo,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TiesArg {
    Reject,
    Jitter,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    IidNull,
    Mvn,
    Mvt,
    Contaminated,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScatterArg {
    Identity,
    Equi,
    Penta,
}

#[derive(clap::Args, Debug)]
struct CalibrationArgs {
    /// Comma-separated statistics, e.g. s_tau,t_rho_hat,s_max_tau
    #[arg(long = "stat", value_delimiter = ',', required = true)]
    stats: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Asymptotic)]
    method: MethodArg,
    /// Monte Carlo replicates for the permutation null
    #[arg(long, default_value_t = 999)]
    mc_reps: usize,
    #[arg(long, env = "RANKDEP_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args, Debug)]
struct TestArgs {
    /// CSV file, rows are samples and columns are variables
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    cal: CalibrationArgs,
    #[arg(long, value_enum, default_value_t = TiesArg::Reject)]
    ties: TiesArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Rescaling constants file (default: constants built into the binary)
    #[arg(long)]
    constants: Option<PathBuf>,
    /// Write the report here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, value_enum, default_value_t = ScatterArg::Identity)]
    scatter: ScatterArg,
    /// Target squared Frobenius norm of the Kendall tau matrix
    #[arg(long)]
    signal: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    reps: usize,
    /// Degrees of freedom of the multivariate or i.i.d. t family
    #[arg(long, default_value_t = 3.0)]
    df: f64,
    /// Location shift of the i.i.d. t family
    #[arg(long, default_value_t = 2.0)]
    shift: f64,
    /// Fraction of contaminated entries
    #[arg(long, default_value_t = 0.05)]
    fraction: f64,
    #[command(flatten)]
    cal: CalibrationArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SelftestArgs {
    /// Constants file to verify; generated when missing
    #[arg(long, env = "RANKDEP_CONSTANTS", default_value = "rankdep-constants.json")]
    constants: PathBuf,
}

#[derive(Serialize)]
struct ReportEntry {
    statistic: StatisticId,
    raw: f64,
    rescaled: f64,
    p_value: f64,
    reject: bool,
    n: usize,
    m: usize,
    alpha: f64,
    method: &'static str,
    mc_reps: Option<usize>,
    seed: Option<u64>,
}

impl From<&TestResult> for ReportEntry {
    fn from(r: &TestResult) -> Self {
        let (mc_reps, seed) = match r.method {
            Method::Asymptotic => (None, None),
            Method::MonteCarlo { reps, seed } => (Some(reps), Some(seed)),
        };
        Self {
            statistic: r.statistic,
            raw: r.raw,
            rescaled: r.rescaled,
            p_value: r.p_value,
            reject: r.reject,
            n: r.n,
            m: r.m,
            alpha: r.alpha,
            method: r.method.name(),
            mc_reps,
            seed,
        }
    }
}

#[derive(Serialize)]
struct Report {
    schema: u32,
    input: String,
    columns: Vec<String>,
    results: Vec<ReportEntry>,
    notes: Vec<String>,
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::Domain(_)
            | Error::InfeasibleSignal { .. }
            | Error::NotPositiveDefinite
            | Error::UnknownConstant(_) => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

/// Runs the command line `args` (including the program name).
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start worker pool: {e}");
            return EXIT_CONFIG;
        }
    };
    if cli.threads == Some(0) {
        let _ = writeln!(stderr, "error: --threads must be at least 1");
        return EXIT_CONFIG;
    }
    let mut out = Vec::new();
    let outcome = pool.install(|| match &cli.command {
        Command::Test(a) => cmd_test(a, &mut out),
        Command::Simulate(a) => cmd_simulate(a, &mut out),
        Command::Selftest(a) => cmd_selftest(a, &mut out),
    });
    let _ = stdout.write_all(&out);
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn parse_stats(names: &[String]) -> std::result::Result<Vec<StatisticId>, Failure> {
    names.iter().map(|s| s.trim().parse::<StatisticId>().map_err(Failure::from)).collect()
}

fn method_of(cal: &CalibrationArgs) -> std::result::Result<Method, Failure> {
    if !(cal.alpha > 0.0 && cal.alpha < 1.0) {
        return Err(Failure::config(format!("--alpha must lie in (0, 1), got {}", cal.alpha)));
    }
    match cal.method {
        MethodArg::Asymptotic => Ok(Method::Asymptotic),
        MethodArg::Montecarlo if cal.mc_reps < 100 => {
            Err(Failure::config(format!("--mc-reps must be at least 100, got {}", cal.mc_reps)))
        }
        MethodArg::Montecarlo => Ok(Method::MonteCarlo { reps: cal.mc_reps, seed: cal.seed }),
    }
}

fn parse_number(field: &str, line: usize, col: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        row: line,
        col,
        msg: format!("'{}' is not a number", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse { row: line, col, msg: format!("'{}' is not finite", field.trim()) });
    }
    Ok(v)
}

/// Reads a numeric CSV file. The first row is treated as a header when any of
/// its fields is not a number. Row and column numbers in errors are 1-based
/// file positions.
pub fn read_csv(path: &Path) -> Result<(DataMatrix, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rd = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut names: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, rec) in rd.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row: line, col: 0, msg: e.to_string() })?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if i == 0 && rec.iter().any(|f| f.trim().parse::<f64>().is_err()) {
            names = Some(rec.iter().map(|f| f.trim().to_string()).collect());
            width = Some(rec.len());
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::RaggedRow { row: line, expected, got: rec.len() });
        }
        rows.push(rec.iter().enumerate().map(|(c, f)| parse_number(f, line, c + 1)).collect::<Result<_>>()?);
    }
    let m = width.unwrap_or(0);
    if rows.len() < 2 || m < 2 {
        return Err(Error::Shape { rows: rows.len(), cols: m, min_rows: 2 });
    }
    let data = DataMatrix::from_rows(&rows)?;
    let names = names.unwrap_or_else(|| (1..=m).map(|c| format!("V{c}")).collect());
    Ok((data, names))
}

fn cmd_test(a: &TestArgs, stdout: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let stats = parse_stats(&a.cal.stats)?;
    let method = method_of(&a.cal)?;
    let constants = match &a.constants {
        Some(p) => Constants::load(p)?,
        None => Constants::embedded().clone(),
    };
    let (data, names) = read_csv(&a.input)?;
    let policy = match a.ties {
        TiesArg::Reject => TiePolicy::Reject,
        TiesArg::Jitter => TiePolicy::JitterWithSeed(a.cal.seed),
    };
    let ranks = compute_ranks(&data, policy).map_err(|e| match e {
        Error::TiesPresent { col, value } => Failure {
            code: EXIT_DATA,
            message: format!(
                "ties present in column {} ('{}'), value {value}; rerun with --ties jitter to break them at random",
                col + 1,
                names[col]
            ),
        },
        other => other.into(),
    })?;
    let results = stats
        .iter()
        .map(|&s| run_test_using(&ranks, s, a.cal.alpha, method, &constants))
        .collect::<Result<Vec<_>>>()?;
    let mut notes = Vec::new();
    if ranks.n() < SMALL_N && method == Method::Asymptotic {
        notes.push(format!(
            "n = {} is below {SMALL_N}; asymptotic sizes can drift at small n, consider --method montecarlo",
            ranks.n()
        ));
    }
    let body = match a.format {
        FormatArg::Json => {
            let report = Report {
                schema: 1,
                input: a.input.display().to_string(),
                columns: names,
                results: results.iter().map(ReportEntry::from).collect(),
                notes,
            };
            serde_json::to_string_pretty(&report).map_err(|e| Failure::config(e.to_string()))? + "\n"
        }
        FormatArg::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &results {
                w.serialize(ReportEntry::from(r)).map_err(|e| Failure::config(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Failure::config(e.to_string()))?)
                .expect("csv output is utf-8")
        }
    };
    emit(&a.output, body.as_bytes(), stdout)?;
    Ok(EXIT_OK)
}

fn emit(path: &Option<PathBuf>, bytes: &[u8], stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Failure::from(Error::from(e))),
        None => stdout.write_all(bytes).map_err(|e| Failure::from(Error::from(e))),
    }
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let stats = parse_stats(&a.cal.stats)?;
    let method = method_of(&a.cal)?;
    if a.reps == 0 {
        return Err(Failure::config("--reps must be at least 1"));
    }
    let family = match a.family {
        FamilyArg::IidNull => Family::IidNull(Marginal::ShiftedT { df: a.df, shift: a.shift }),
        FamilyArg::Mvn => Family::Mvn,
        FamilyArg::Mvt => Family::Mvt { df: a.df },
        FamilyArg::Contaminated => match Family::default_contamination() {
            Family::ContaminatedMvn { loc, sd, .. } => Family::ContaminatedMvn { fraction: a.fraction, loc, sd },
            other => other,
        },
    };
    let shape = match a.scatter {
        ScatterArg::Identity => ScatterShape::Identity,
        ScatterArg::Equi => ScatterShape::Equicorrelation,
        ScatterArg::Penta => ScatterShape::Pentadiagonal,
    };
    let scenario = SimScenario::new(family, shape, a.n, a.m, a.signal, a.reps, a.cal.seed).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    })?;
    let rows = run_experiment(&scenario, &stats, a.cal.alpha, method)?;
    let mut buf = Vec::new();
    write_experiment_csv(&rows, &mut buf)?;
    emit(&a.output, &buf, stdout)?;
    Ok(EXIT_OK)
}

/// Oracle checks run by `selftest`: fast paths against enumeration on random
/// rank pairs, and the extremal values of each kernel.
pub fn oracle_checks() -> Vec<Check> {
    let mut checks = Vec::new();
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-10 * b.abs().max(1e-12) || a == b;
    for id in KernelId::ALL {
        let mut worst = String::new();
        let mut ok = true;
        for n in id.degree()..=10 {
            for key in 0..4u64 {
                let mut rng = substream(key, Domain::Oracle, &[n as u64, id.degree() as u64]);
                let (x, y) = (random_permutation(&mut rng, n), random_permutation(&mut rng, n));
                let (f, g) = (u_stat(id, &x, &y).unwrap(), u_stat_naive(id, &x, &y).unwrap());
                if !rel(f, g) {
                    ok = false;
                    worst = format!("n = {n}: fast {f} vs enumeration {g}");
                }
            }
        }
        checks.push(Check::new(format!("oracle_u_{id}"), ok, worst));
    }
    for id in [KernelId::Tau, KernelId::RhoHat] {
        let mut worst = String::new();
        let mut ok = true;
        for n in 2 * id.degree()..=9 {
            for key in 0..3u64 {
                let mut rng = substream(key, Domain::Oracle, &[n as u64, 100]);
                let (x, y) = (random_permutation(&mut rng, n), random_permutation(&mut rng, n));
                let (f, g) = (w_stat(id, &x, &y).unwrap(), w_stat_naive(id, &x, &y).unwrap());
                if !rel(f, g) {
                    ok = false;
                    worst = format!("n = {n}: fast {f} vs enumeration {g}");
                }
            }
        }
        checks.push(Check::new(format!("oracle_w_{id}"), ok, worst));
    }
    let up = |n: u32| (1..=n).collect::<Vec<u32>>();
    let extremal = [
        (KernelId::Tau, 2, 1.0),
        (KernelId::RhoHat, 3, 1.0),
        (KernelId::TStar, 4, 2.0 / 3.0),
        (KernelId::HoeffD, 5, 1.0 / 30.0),
    ]
    .iter()
    .all(|&(id, n, v)| u_stat(id, &up(n), &up(n)).unwrap() == v && u_stat_naive(id, &up(n), &up(n)).unwrap() == v);
    checks.push(Check::new("extremal_values".into(), extremal, String::new()));
    checks
}

fn cmd_selftest(a: &SelftestArgs, stdout: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let mut checks = oracle_checks();
    let fresh = Constants::resolve()?;
    checks.push(Check::new(
        "embedded_constants".into(),
        Constants::embedded() == &fresh,
        "built-in stamp equals a fresh resolution".into(),
    ));
    let file = if a.constants.exists() {
        Constants::load(&a.constants)
    } else {
        fresh.save(&a.constants)?;
        let _ = writeln!(stdout, "generated {}", a.constants.display());
        Ok(fresh.clone())
    };
    match file {
        Ok(c) => checks.extend(c.verify(&fresh)),
        Err(e) => checks.push(Check::fail("constants_file".into(), e.to_string())),
    }
    let mut failed = Vec::new();
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let _ = if c.detail.is_empty() {
            writeln!(stdout, "{tag} {}", c.name)
        } else {
            writeln!(stdout, "{tag} {}: {}", c.name, c.detail)
        };
        if !c.passed {
            failed.push(c.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(Failure { code: EXIT_SELFTEST, message: format!("failed checks: {}", failed.join(", ")) })
    }
}
