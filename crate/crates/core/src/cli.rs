//! Command-line front end: sweeps, fixed-t iteration, oracle verification and
//! the single-photon-entanglement and two-stage experiment simulations.
//!
//! Exit codes: 0 success, 2 configuration error, 3 verification failure,
//! 4 numeric or degenerate input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytic::{self, Flavor};
use crate::circuit::{self, GridPoint};
use crate::error::NlaError;
use crate::spdc::{self, Fig8Config};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Absolute tolerance of the per-row self-check.
pub const SELF_CHECK_TOLERANCE: f64 = 1e-10;

pub const CSV_HEADER: &str = "eta0,t,n,eta_n,gain_total,p_cumulative";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Verification(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Verification(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<NlaError> for CliError {
    fn from(e: NlaError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FlavorArg {
    Sps,
    Spe,
}

impl From<FlavorArg> for Flavor {
    fn from(f: FlavorArg) -> Self {
        match f {
            FlavorArg::Sps => Flavor::Sps,
            FlavorArg::Spe => Flavor::Spe,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "nla-cascade", version, about = "Cascaded noiseless linear amplification of single photons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Final fidelity, gain and success probability over an (eta0, t, N) grid.
    Sweep(SweepArgs),
    /// Stage-by-stage values for a fixed transmittance.
    Iterate(IterateArgs),
    /// Compare the circuit simulation with the closed form on a grid.
    Verify(VerifyArgs),
    /// Simulate a two-party cascade on the entangled mixture.
    Spe(SpeArgs),
    /// Simulate the two-stage experiment fed by a pair source.
    Fig8(Fig8Args),
}

#[derive(Args, Debug, Default)]
struct GridArgs {
    /// Initial single-photon weights (comma separated or repeated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    eta: Vec<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Number of evenly spaced transmittances, endpoints included.
    #[arg(long)]
    t_steps: Option<usize>,
    /// Cascade lengths (comma separated or repeated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n: Vec<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum)]
    flavor: Option<FlavorArg>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one file per initial weight into this directory.
    #[arg(long, conflicts_with = "out")]
    out_dir: Option<PathBuf>,
    /// JSON sweep configuration; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IterateArgs {
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    t: f64,
    /// Number of stages.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "sps")]
    flavor: FlavorArg,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Check only this flavor; both by default.
    #[arg(long, value_enum)]
    flavor: Option<FlavorArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpeArgs {
    #[arg(long)]
    eta: f64,
    /// Stage transmittances. A single value is repeated `--n` times.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    t: Vec<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Fig8Args {
    /// Loss splitter setting for the prepared input.
    #[arg(long)]
    t1: f64,
    /// First amplifier stage, below 1/2.
    #[arg(long)]
    t2: f64,
    /// Second amplifier stage, below 1/2.
    #[arg(long)]
    t3: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TGrid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl TGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        // Weighted form hits symmetric midpoints such as 0.5 exactly.
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| match i {
                0 => self.min,
                i if i + 1 == self.steps => self.max,
                i => {
                    let i = i as f64;
                    ((last - i) * self.min + i * self.max) / last
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub etas: Vec<f64>,
    pub t_grid: TGrid,
    pub n_values: Vec<usize>,
    pub flavor: Flavor,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            etas: vec![0.2, 0.6, 0.9],
            t_grid: TGrid { min: 0.01, max: 0.99, steps: 99 },
            n_values: vec![1, 2, 3, 4, 5],
            flavor: Flavor::Sps,
            output_format: OutputFormat::Csv,
            output_path: None,
            output_dir: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.etas.is_empty() || self.n_values.is_empty() || self.t_grid.steps == 0 {
            return Err(CliError::Config("eta, t and n grids must be nonempty".into()));
        }
        if let Some(e) = self.etas.iter().find(|e| !(e.is_finite() && (0.0..=1.0).contains(*e))) {
            return Err(CliError::Config(format!("eta = {e} is outside [0, 1]")));
        }
        if self.n_values.contains(&0) {
            return Err(CliError::Config("cascade length n must be at least 1".into()));
        }
        let g = self.t_grid;
        let open = |t: f64| t.is_finite() && t > 0.0 && t < 1.0;
        if !open(g.min) || !open(g.max) {
            return Err(CliError::Config(format!(
                "transmittance grid [{}, {}] must lie inside (0, 1)",
                g.min, g.max
            )));
        }
        if g.min > g.max {
            return Err(CliError::Config(format!("t-min {} exceeds t-max {}", g.min, g.max)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta0: f64,
    pub t: f64,
    pub n: usize,
    pub eta_n: f64,
    pub gain_total: f64,
    pub p_cumulative: f64,
}

/// Rows of an `(eta0, t)` cascade for every requested length, read off one
/// trace of the longest length.
fn rows_for(flavor: Flavor, eta0: f64, t: f64, ns: &[usize]) -> CliResult<Vec<SweepRow>> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let trace = analytic::cascade(flavor, eta0, &vec![t; n_max])?;
    ns.iter()
        .map(|&n| {
            let stages = &trace.stages[..n];
            let row = SweepRow {
                eta0,
                t,
                n,
                eta_n: stages[n - 1].eta,
                gain_total: stages.iter().map(|s| s.gain).product(),
                p_cumulative: stages[n - 1].cumulative_probability,
            };
            self_check(flavor, &row)?;
            Ok(row)
        })
        .collect()
}

/// Closed form of an `n`-stage constant-`t` cascade in odds form, independent
/// of the stage recurrence.
pub fn closed_form(flavor: Flavor, eta0: f64, t: f64, n: usize) -> (f64, f64, f64) {
    let n = n as i32;
    let keep = eta0 * (1.0 - t).powi(n);
    let vac = (1.0 - eta0) * t.powi(n);
    let eta_n = keep / (keep + vac);
    let gain = if eta0 > 0.0 { eta_n / eta0 } else { ((1.0 - t) / t).powi(n) };
    let p = match flavor {
        Flavor::Sps => keep + vac,
        Flavor::Spe => eta0 * (t * (1.0 - t)).powi(n) + (1.0 - eta0) * t.powi(2 * n),
    };
    (eta_n, gain, p)
}

fn self_check(flavor: Flavor, row: &SweepRow) -> CliResult<()> {
    let (eta, gain, p) = closed_form(flavor, row.eta0, row.t, row.n);
    let gain_tol = SELF_CHECK_TOLERANCE * gain.abs().max(1.0);
    if (row.eta_n - eta).abs() > SELF_CHECK_TOLERANCE
        || (row.p_cumulative - p).abs() > SELF_CHECK_TOLERANCE
        || (row.gain_total - gain).abs() > gain_tol
    {
        return Err(CliError::Verification(format!(
            "self-check failed at eta0 = {}, t = {}, n = {}: got ({}, {}, {}), closed form ({eta}, {gain}, {p})",
            row.eta0, row.t, row.n, row.eta_n, row.gain_total, row.p_cumulative
        )));
    }
    Ok(())
}

/// All rows, ordered by eta0, then t, then n as listed in the config.
pub fn cmd_sweep(config: &SweepConfig) -> CliResult<Vec<SweepRow>> {
    config.validate()?;
    let ts = config.t_grid.values();
    let pairs: Vec<(f64, f64)> = config
        .etas
        .iter()
        .flat_map(|&e| ts.iter().map(move |&t| (e, t)))
        .collect();
    let chunks = pairs
        .par_iter()
        .map(|&(e, t)| rows_for(config.flavor, e, t, &config.n_values))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn cmd_iterate(flavor: Flavor, eta0: f64, t: f64, n_max: usize) -> CliResult<Vec<SweepRow>> {
    if n_max == 0 {
        return Err(CliError::Config("cascade length n must be at least 1".into()));
    }
    if !(t.is_finite() && t > 0.0 && t < 1.0) {
        return Err(CliError::Config(format!("t = {t} is outside (0, 1)")));
    }
    let ns: Vec<usize> = (1..=n_max).collect();
    rows_for(flavor, eta0, t, &ns)
}

/// Formats with 12 significant digits in plain decimal notation, trailing
/// zeros removed.
pub fn format_number(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            format_number(r.eta0),
            format_number(r.t),
            r.n,
            format_number(r.eta_n),
            format_number(r.gain_total),
            format_number(r.p_cumulative)
        );
    }
    s
}

pub fn rows_to_json(rows: &[SweepRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
    s.push('\n');
    s
}

fn render(rows: &[SweepRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => rows_to_csv(rows),
        OutputFormat::Json => rows_to_json(rows),
    }
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    fs::write(path, body).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn emit(body: &str, path: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, body),
        None => stdout
            .write_all(body.as_bytes())
            .map_err(|e| CliError::Config(format!("cannot write output: {e}"))),
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn load_sweep_config(args: &SweepArgs) -> CliResult<SweepConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?
        }
        None => SweepConfig::default(),
    };
    let g = &args.grid;
    if !g.eta.is_empty() {
        cfg.etas = g.eta.clone();
    }
    if !g.n.is_empty() {
        cfg.n_values = g.n.clone();
    }
    if let Some(v) = g.t_min {
        cfg.t_grid.min = v;
    }
    if let Some(v) = g.t_max {
        cfg.t_grid.max = v;
    }
    if let Some(v) = g.t_steps {
        cfg.t_grid.steps = v;
    }
    if let Some(f) = args.flavor {
        cfg.flavor = f.into();
    }
    if let Some(f) = args.format {
        cfg.output_format = f;
    }
    if args.out.is_some() {
        cfg.output_path = args.out.clone();
        cfg.output_dir = None;
    }
    if args.out_dir.is_some() {
        cfg.output_dir = args.out_dir.clone();
        cfg.output_path = None;
    }
    Ok(cfg)
}

fn run_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = load_sweep_config(args)?;
    let rows = cmd_sweep(&cfg)?;
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        let ext = match cfg.output_format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        };
        let mut seen = Vec::new();
        for &eta in &cfg.etas {
            if seen.contains(&eta.to_bits()) {
                continue;
            }
            seen.push(eta.to_bits());
            let subset: Vec<SweepRow> = rows.iter().filter(|r| r.eta0 == eta).copied().collect();
            let name = format!("sweep_{}_eta{}.{ext}", cfg.flavor, format_number(eta));
            write_file(&dir.join(name), &render(&subset, cfg.output_format))?;
        }
        return Ok(());
    }
    emit(&render(&rows, cfg.output_format), cfg.output_path.as_deref(), stdout)
}

fn verification_grid(g: &GridArgs) -> CliResult<Vec<GridPoint>> {
    let default_given = g.eta.is_empty() && g.n.is_empty() && g.t_min.is_none() && g.t_max.is_none() && g.t_steps.is_none();
    if default_given {
        return Ok(circuit::default_verification_grid());
    }
    let base = SweepConfig::default();
    let cfg = SweepConfig {
        etas: if g.eta.is_empty() { (1..=19).map(|k| k as f64 / 20.0).collect() } else { g.eta.clone() },
        t_grid: TGrid {
            min: g.t_min.unwrap_or(0.1),
            max: g.t_max.unwrap_or(0.45),
            steps: g.t_steps.unwrap_or(8),
        },
        n_values: if g.n.is_empty() { base.n_values } else { g.n.clone() },
        ..base
    };
    cfg.validate()?;
    Ok(circuit::grid(&cfg.etas, &cfg.t_grid.values(), &cfg.n_values))
}

fn run_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let points = verification_grid(&args.grid)?;
    let flavors: Vec<Flavor> = match args.flavor {
        Some(f) => vec![f.into()],
        None => vec![Flavor::Sps, Flavor::Spe],
    };
    let reports = flavors
        .iter()
        .map(|&f| circuit::compare_oracle_vs_analytic(&points, f))
        .collect::<Result<Vec<_>, _>>()?;
    let passed = reports.iter().all(|r| r.passed);
    emit(&pretty(&json!({ "passed": passed, "reports": reports })), args.out.as_deref(), stdout)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification("circuit simulation deviates from the closed form".into()))
    }
}

fn run_spe(args: &SpeArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let ts = match (args.t.len(), args.n) {
        (1, Some(n)) => vec![args.t[0]; n],
        (len, Some(n)) if len != n => {
            return Err(CliError::Config(format!("{len} transmittances given for n = {n} stages")));
        }
        _ => args.t.clone(),
    };
    if ts.is_empty() {
        return Err(CliError::Config("at least one stage is required".into()));
    }
    let run = circuit::run_spe_cascade_circuit(args.eta, &ts)?;
    let trace = analytic::cascade_spe(args.eta, &ts)?;
    let body = json!({
        "eta0": args.eta,
        "transmittances": ts,
        "circuit": {
            "entangled_fidelity": run.entangled_fidelity,
            "success_probability": run.result.success_probability,
            "stage_probabilities": run.result.per_stage_probs,
            "stage_fidelities": run.stage_fidelities,
            "stage_coherence": run.stage_coherence,
        },
        "analytic": {
            "eta_n": trace.final_eta(),
            "p_cumulative": trace.cumulative_probability(),
            "etas": trace.etas(),
        },
        "fidelity_deviation": (run.entangled_fidelity - trace.final_eta()).abs(),
        "probability_deviation": (run.result.success_probability - trace.cumulative_probability()).abs(),
    });
    emit(&pretty(&body), args.out.as_deref(), stdout)
}

fn run_fig8(args: &Fig8Args, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = Fig8Config::new(args.t1, args.t2, args.t3)?;
    let sim = spdc::simulate_fig8(&cfg)?;
    let (eta, p) = spdc::fig8_analytic(&cfg)?;
    let body = json!({
        "config": cfg,
        "circuit": sim,
        "analytic": { "final_eta": eta, "success_prob": p },
        "eta_deviation": (sim.final_eta - eta).abs(),
        "probability_deviation": (sim.success_prob - p).abs(),
    });
    emit(&pretty(&body), args.out.as_deref(), stdout)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Sweep(a) => run_sweep(a, stdout),
        Command::Iterate(a) => {
            let rows = cmd_iterate(a.flavor.into(), a.eta, a.t, a.n)?;
            emit(&render(&rows, a.format), a.out.as_deref(), stdout)
        }
        Command::Verify(a) => run_verify(a, stdout),
        Command::Spe(a) => run_spe(a, stdout),
        Command::Fig8(a) => run_fig8(a, stdout),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<'a, I, T>(args: I, stdout: &'a mut dyn Write, stderr: &'a mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let sink = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}
