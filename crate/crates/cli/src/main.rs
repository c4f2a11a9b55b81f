//! `acuc`: solve, evaluate, generate and report.

use acuc_core::case_io::{generate_case, read_case, read_solution, write_case, write_solution, GeneratorSpec, LoadShape, Preset};
use acuc_core::error::Error as CoreError;
use acuc_core::evaluator::{evaluate, EvaluationReport};
use acuc_core::orchestrator::{run, RunOptions, RunStats};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

#[derive(Parser)]
#[command(name = "acuc", version, about = "AC unit commitment by temporal decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one of the four pipelines on a case.
    Solve(SolveArgs),
    /// Score a solution against its case.
    Eval(EvalArgs),
    /// Write a synthetic case.
    Gen(GenArgs),
    /// Tabulate stage times from stats files.
    Report(ReportArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    algorithm: u8,
    /// Fraction of reserve providers to fix, e.g. 0.05.
    #[arg(long, conflicts_with = "gamma_percent")]
    gamma: Option<f64>,
    /// Same as --gamma, in percent (5 means 0.05).
    #[arg(long)]
    gamma_percent: Option<f64>,
    #[arg(long, env = "ACUC_THREADS", default_value_t = 1)]
    threads: usize,
    /// Wall-clock limit for the unit commitment search, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Branch-and-bound node limit for the unit commitment.
    #[arg(long)]
    node_limit: Option<usize>,
    /// Tighten every provider, skipping the local balance check.
    #[arg(long)]
    no_guard: bool,
    /// Enforce line ratings softly inside the OPF.
    #[arg(long)]
    thermal_limits: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    /// Reference objective for the gap column.
    #[arg(long)]
    best_known: Option<f64>,
    /// JSON report; a `.csv` extension writes CSV instead.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Goc73,
    Goc617,
    Goc2000,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Flat,
    Diurnal,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, conflicts_with_all = ["buses", "devices"])]
    preset: Option<PresetArg>,
    #[arg(long, requires = "devices")]
    buses: Option<usize>,
    #[arg(long, requires = "buses")]
    devices: Option<usize>,
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long)]
    lines: Option<usize>,
    #[arg(long)]
    active_zones: Option<usize>,
    #[arg(long)]
    reactive_zones: Option<usize>,
    #[arg(long)]
    shape: Option<ShapeArg>,
    #[arg(long)]
    capacity_margin: Option<f64>,
    #[arg(long)]
    ramp_tightness: Option<f64>,
    #[arg(long)]
    reserve_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, num_args = 1..)]
    stats: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes, mapped to exit codes in `main`.
enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Internal(_) | CoreError::NoSchedule(_) => Failure::Internal(e.into()),
            _ => Failure::Input(e.into()),
        }
    }
}

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display())).map_err(input)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Internal)
}

fn load_case(path: &Path) -> Result<acuc_core::model::Case, Failure> {
    let bytes = read(path)?;
    read_case(&bytes).map_err(|e| input(anyhow::Error::from(e).context(format!("in {}", path.display()))))
}

fn cmd_solve(a: SolveArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let gamma = match (a.gamma, a.gamma_percent) {
        (Some(g), _) => g,
        (None, Some(p)) => p / 100.0,
        (None, None) => 0.05,
    };
    if !(0.0..=1.0).contains(&gamma) {
        return Err(input(anyhow!("gamma must lie in [0, 1], got {gamma}")));
    }
    if a.threads == 0 {
        return Err(input(anyhow!("--threads must be at least 1")));
    }
    let case = load_case(&a.case)?;
    let mut opts = RunOptions::algorithm(a.algorithm);
    opts.gamma = gamma;
    opts.threads = a.threads;
    opts.seed = a.seed;
    opts.guard = !a.no_guard;
    opts.thermal_limits = a.thermal_limits;
    if let Some(s) = a.time_limit {
        if !(s > 0.0) {
            return Err(input(anyhow!("--time-limit must be positive")));
        }
        opts.uc_time_limit = Some(Duration::from_secs_f64(s));
    }
    if a.node_limit.is_some() {
        opts.uc_node_limit = a.node_limit;
    }
    let io_in = start.elapsed().as_secs_f64();
    let mut out = run(&case, &opts)?;
    let t = Instant::now();
    write(&a.out, &write_solution(&out.solution))?;
    out.stats.io_seconds = io_in + t.elapsed().as_secs_f64();
    out.stats.total_seconds += out.stats.io_seconds;
    if let Some(p) = &a.stats {
        let mut bytes = serde_json::to_vec_pretty(&out.stats).map_err(|e| Failure::Internal(e.into()))?;
        bytes.push(b'\n');
        write(p, &bytes)?;
    }
    eprintln!(
        "algorithm {}: objective {:.6}, {} unconverged OPF periods, {:.2}s",
        a.algorithm, out.stats.objective, out.stats.opf_unconverged, out.stats.total_seconds
    );
    Ok(())
}

fn print_report(r: &EvaluationReport) {
    let c = &r.components;
    println!("objective            {:.6}", r.objective);
    match r.gap_percent {
        Some(g) => println!("gap                  {g:.2}%"),
        None => println!("gap                  -"),
    }
    println!("energy value         {:.6}", c.energy_value);
    println!("energy cost          {:.6}", c.energy_cost);
    println!("commitment cost      {:.6}", c.commitment_cost);
    println!("reserve cost         {:.6}", c.reserve_cost);
    println!("reserve penalty      {:.6}", c.reserve_penalty);
    println!("p-penalty            {:.6}", c.p_penalty);
    println!("q-penalty            {:.6}", c.q_penalty);
    println!("line overload        {:.6}", c.line_overload_penalty);
    println!("hard violations      {}", r.violations.len());
    for v in r.violations.iter().take(20) {
        println!("  {v}");
    }
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let case = load_case(&a.case)?;
    let bytes = read(&a.solution)?;
    let sol = read_solution(&bytes, &case)
        .map_err(|e| input(anyhow::Error::from(e).context(format!("in {}", a.solution.display()))))?;
    let report = evaluate(&case, &sol, a.best_known)?;
    print_report(&report);
    if let Some(p) = &a.out {
        let bytes = if p.extension().is_some_and(|e| e == "csv") {
            report.to_csv().into_bytes()
        } else {
            let mut b = serde_json::to_vec_pretty(&report).map_err(|e| Failure::Internal(e.into()))?;
            b.push(b'\n');
            b
        };
        write(p, &bytes)?;
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let mut spec = match (a.preset, a.buses, a.devices) {
        (Some(p), _, _) => {
            let p = match p {
                PresetArg::Goc73 => Preset::Goc73,
                PresetArg::Goc617 => Preset::Goc617,
                PresetArg::Goc2000 => Preset::Goc2000,
            };
            p.spec(a.seed)
        }
        (None, Some(b), Some(d)) => GeneratorSpec::new(b, d, 48).with_seed(a.seed),
        _ => return Err(input(anyhow!("give either --preset or both --buses and --devices"))),
    };
    if let Some(v) = a.periods {
        spec.n_periods = v;
    }
    if a.lines.is_some() {
        spec.n_lines = a.lines;
    }
    if let Some(v) = a.active_zones {
        spec.n_active_zones = v;
    }
    if let Some(v) = a.reactive_zones {
        spec.n_reactive_zones = v;
    }
    if let Some(s) = a.shape {
        spec.load_profile_shape = match s {
            ShapeArg::Flat => LoadShape::Flat,
            ShapeArg::Diurnal => LoadShape::Diurnal,
        };
    }
    if let Some(v) = a.capacity_margin {
        spec.capacity_margin = v;
    }
    if let Some(v) = a.ramp_tightness {
        spec.ramp_tightness = v;
    }
    if let Some(v) = a.reserve_fraction {
        spec.reserve_fraction = v;
    }
    let case = generate_case(&spec)?;
    write(&a.out, &write_case(&case))?;
    eprintln!(
        "{} buses, {} lines, {} devices, {} periods",
        case.buses.len(),
        case.lines.len(),
        case.devices.len(),
        case.periods()
    );
    Ok(())
}

const REPORT_COLUMNS: [&str; 14] = [
    "file",
    "algorithm",
    "threads",
    "gamma",
    "uc_seconds",
    "tighten_seconds",
    "opf_seconds",
    "reserve_seconds",
    "projection_seconds",
    "io_seconds",
    "total_seconds",
    "opf_share",
    "speedup",
    "objective",
];

/// One row per run. Speedup is relative to the single-thread run of the
/// same algorithm, when one is among the inputs.
fn report_rows(runs: &[(String, RunStats)]) -> Vec<Vec<String>> {
    runs.iter()
        .map(|(name, s)| {
            let base = runs
                .iter()
                .find(|(_, b)| b.threads == 1 && b.algorithm == s.algorithm)
                .map(|(_, b)| b.total_seconds);
            let share = if s.total_seconds > 0.0 { s.opf_seconds / s.total_seconds } else { 0.0 };
            let speedup = match base {
                Some(b) if s.total_seconds > 0.0 => format!("{:.3}", b / s.total_seconds),
                _ => String::new(),
            };
            vec![
                name.clone(),
                s.algorithm.to_string(),
                s.threads.to_string(),
                s.gamma.to_string(),
                format!("{:.6}", s.uc_seconds),
                format!("{:.6}", s.tighten_seconds),
                format!("{:.6}", s.opf_seconds),
                format!("{:.6}", s.reserve_seconds),
                format!("{:.6}", s.projection_seconds),
                format!("{:.6}", s.io_seconds),
                format!("{:.6}", s.total_seconds),
                format!("{share:.4}"),
                speedup,
                s.objective.to_string(),
            ]
        })
        .collect()
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    if a.stats.is_empty() {
        return Err(input(anyhow!("report needs at least one --stats file")));
    }
    let mut runs = Vec::new();
    for p in &a.stats {
        let bytes = read(p)?;
        let s: RunStats = serde_json::from_slice(&bytes)
            .with_context(|| format!("{} is not a stats file", p.display()))
            .map_err(input)?;
        runs.push((p.display().to_string(), s));
    }
    let rows = report_rows(&runs);
    let text = match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let fail = |e: csv::Error| Failure::Internal(e.into());
            w.write_record(REPORT_COLUMNS).map_err(fail)?;
            for r in &rows {
                w.write_record(r).map_err(fail)?;
            }
            w.into_inner().map_err(|e| Failure::Internal(anyhow!("{e}")))?
        }
        Format::Md => {
            let mut s = format!("| {} |\n|{}\n", REPORT_COLUMNS.join(" | "), "---|".repeat(REPORT_COLUMNS.len()));
            for r in &rows {
                s += &format!("| {} |\n", r.join(" | "));
            }
            s.into_bytes()
        }
    };
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{}", String::from_utf8_lossy(&text)),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Report(a) => cmd_report(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}
