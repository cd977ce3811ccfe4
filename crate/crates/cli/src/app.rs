//! The `sdqos` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use sdqos_core::engine::run_unbalanced_example;
use sdqos_core::{run_simulation, run_sweep, Scenario, SimConfig, SimReport};

use crate::config::{load_config, parse_scenario};
use crate::manifest::RunManifest;
use crate::report::{render_csv, render_json, render_traces_json, OutputFormat, ReportEntry};
use crate::CliError;

#[derive(Parser)]
#[command(
    name = "sdqos",
    version,
    about = "Deterministic simulator of software-defined QoS provisioning for shared storage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and report per-application bandwidth.
    Run(RunArgs),
    /// Run all three scenarios on one seed and summarize allocated-BW%.
    Compare(CommonArgs),
    /// Sweep fixed I/O sizes, emitting a throughput-vs-size series.
    Sweep(SweepArgs),
    /// Run the built-in unbalanced-demand micro-scenario (3 servers,
    /// demand [150,100,50] MB against 100 tokens each) with and without
    /// borrowing.
    #[command(name = "paper-example")]
    PaperExample,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured number of measured slots.
    #[arg(long)]
    slots: Option<u64>,
    /// Directory for emitted artifacts (files are written atomically).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Artifact format.
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Record and emit full per-slot traces (JSON).
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the configured scenario.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Restrict the sweep to one scenario (default: all three).
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated I/O sizes in KB.
    #[arg(long, default_value = "4,8,64", value_delimiter = ',')]
    sizes_kb: Vec<f64>,
}

/// Runs the CLI against `args`, writing human output to `out`. Returns the
/// process exit code: 0 success, 1 usage error, 2 configuration error,
/// 3 runtime invariant violation.
pub fn run_cli<I>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = OsString>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let _ = write!(out, "{e}");
            return 1;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run_command(args, out),
        Command::Compare(args) => compare_command(args, out),
        Command::Sweep(args) => sweep_command(args, out),
        Command::PaperExample => paper_example_command(out),
    }
}

fn emit_line(out: &mut dyn Write, line: String) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::Config(format!("cannot write output: {e}")))
}

fn prepare(common: &CommonArgs) -> Result<SimConfig, CliError> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(slots) = common.slots {
        if slots == 0 {
            return Err(CliError::Usage("--slots must be positive".into()));
        }
        cfg.num_slots = slots;
    }
    cfg.record_traces = common.trace;
    Ok(cfg)
}

/// Runs one simulation per scenario on worker threads (each worker owns its
/// simulator instance; results come back in input order).
fn run_scenarios(base: &SimConfig, scenarios: &[Scenario]) -> Result<Vec<SimReport>, CliError> {
    let mut results: Vec<Option<Result<SimReport, CliError>>> = Vec::new();
    results.resize_with(scenarios.len(), || None);
    let chunk = scenarios
        .len()
        .div_ceil(std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    std::thread::scope(|scope| {
        for (scenario_chunk, out_chunk) in scenarios.chunks(chunk).zip(results.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (scenario, slot) in scenario_chunk.iter().zip(out_chunk.iter_mut()) {
                    *slot = Some(
                        run_simulation(base.with_scenario(*scenario)).map_err(CliError::from),
                    );
                }
            });
        }
    });
    results.into_iter().map(|r| r.unwrap()).collect()
}

fn write_artifacts(
    command: &str,
    common: &CommonArgs,
    entries: &[ReportEntry<'_>],
    scenarios: &[Scenario],
    seeds: &[u64],
) -> Result<Option<PathBuf>, CliError> {
    let Some(out_dir) = &common.out else {
        return Ok(None);
    };
    let mut manifest = RunManifest::new(command, Some(&common.config));
    manifest.scenarios = scenarios.iter().map(|s| s.label().to_string()).collect();
    manifest.seeds = seeds.to_vec();

    let body = match common.format {
        OutputFormat::Csv => render_csv(entries),
        OutputFormat::Json => render_json(entries),
    };
    let name = format!("{command}.{}", common.format.extension());
    manifest.emit(out_dir, &name, body.as_bytes())?;
    if common.trace {
        let traces = render_traces_json(entries);
        manifest.emit(out_dir, &format!("{command}_traces.json"), traces.as_bytes())?;
    }
    let path = manifest.write(out_dir)?;
    Ok(Some(path))
}

fn run_command(args: RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = prepare(&args.common)?;
    if let Some(name) = &args.scenario {
        cfg.scenario = parse_scenario(name)?;
    }
    let report = run_simulation(cfg.clone())?;

    emit_line(
        out,
        format!(
            "scenario {}  seed {}  slots {} (+{} warmup)",
            report.scenario, report.seed, report.num_slots, report.warmup_slots
        ),
    )?;
    emit_line(out, "app_id  desired_mbps  allocated_mbps".into())?;
    for (i, (d, a)) in report
        .per_app_desired_bw
        .iter()
        .zip(&report.per_app_allocated_bw)
        .enumerate()
    {
        emit_line(out, format!("{i:>6}  {d:>12.6}  {a:>14.6}"))?;
    }
    emit_line(out, format!("allocated_bw_pct {:.6}", report.allocated_pct))?;

    let entries = [ReportEntry {
        io_size_kb: None,
        report: &report,
    }];
    if let Some(path) = write_artifacts(
        "run",
        &args.common,
        &entries,
        &[report.scenario],
        &[report.seed],
    )? {
        emit_line(out, format!("manifest written to {}", path.display()))?;
    }
    Ok(())
}

fn compare_command(args: CommonArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = prepare(&args)?;
    let reports = run_scenarios(&cfg, &Scenario::ALL)?;

    emit_line(out, format!("seed {}  slots {}", cfg.seed, cfg.num_slots))?;
    emit_line(out, "scenario       allocated_bw_pct".into())?;
    for report in &reports {
        emit_line(
            out,
            format!("{:<14} {:.6}", report.scenario.label(), report.allocated_pct),
        )?;
    }

    let entries: Vec<ReportEntry<'_>> = reports
        .iter()
        .map(|report| ReportEntry {
            io_size_kb: None,
            report,
        })
        .collect();
    if let Some(path) = write_artifacts("compare", &args, &entries, &Scenario::ALL, &[cfg.seed])? {
        emit_line(out, format!("manifest written to {}", path.display()))?;
    }
    Ok(())
}

fn sweep_command(args: SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.sizes_kb.is_empty() {
        return Err(CliError::Usage("--sizes-kb must not be empty".into()));
    }
    for kb in &args.sizes_kb {
        if kb.is_nan() || *kb <= 0.0 {
            return Err(CliError::Usage(format!("invalid I/O size {kb} KB")));
        }
    }
    let cfg = prepare(&args.common)?;
    let scenarios: Vec<Scenario> = match &args.scenario {
        Some(name) => vec![parse_scenario(name)?],
        None => Scenario::ALL.to_vec(),
    };
    let sizes_mb: Vec<f64> = args.sizes_kb.iter().map(|kb| kb / 1024.0).collect();

    // One worker per scenario; each sweeps every size with identical seeds.
    let mut per_scenario: Vec<Option<Result<Vec<SimReport>, CliError>>> = Vec::new();
    per_scenario.resize_with(scenarios.len(), || None);
    std::thread::scope(|scope| {
        for (scenario, slot) in scenarios.iter().zip(per_scenario.iter_mut()) {
            let cfg = &cfg;
            let sizes_mb = &sizes_mb;
            scope.spawn(move || {
                *slot = Some(
                    run_sweep(&cfg.with_scenario(*scenario), sizes_mb).map_err(CliError::from),
                );
            });
        }
    });

    let mut entries_owned: Vec<(f64, SimReport)> = Vec::new();
    for result in per_scenario.into_iter() {
        let reports = result.unwrap()?;
        for (kb, report) in args.sizes_kb.iter().zip(reports) {
            entries_owned.push((*kb, report));
        }
    }

    emit_line(out, format!("seed {}  slots {}", cfg.seed, cfg.num_slots))?;
    emit_line(out, "scenario       io_size_kb  allocated_bw_pct".into())?;
    for (kb, report) in &entries_owned {
        emit_line(
            out,
            format!(
                "{:<14} {kb:>10.3}  {:.6}",
                report.scenario.label(),
                report.allocated_pct
            ),
        )?;
    }

    let entries: Vec<ReportEntry<'_>> = entries_owned
        .iter()
        .map(|(kb, report)| ReportEntry {
            io_size_kb: Some(*kb),
            report,
        })
        .collect();
    if let Some(path) =
        write_artifacts("sweep", &args.common, &entries, &scenarios, &[cfg.seed])?
    {
        emit_line(out, format!("manifest written to {}", path.display()))?;
    }
    Ok(())
}

fn paper_example_command(out: &mut dyn Write) -> Result<(), CliError> {
    let outcome = run_unbalanced_example()?;
    emit_line(
        out,
        "one application demanding [150, 100, 50] MB across 3 servers (500 MB/s each), \
         100 tokens per server"
            .into(),
    )?;
    emit_line(
        out,
        format!("without borrowing: {} MB served", outcome.without_borrowing_mb),
    )?;
    emit_line(
        out,
        format!("with borrowing:    {} MB served", outcome.with_borrowing_mb),
    )?;
    Ok(())
}

/// Convenience for tests: run with string arguments, capturing output.
pub fn run_cli_captured(args: &[&str]) -> (i32, String) {
    let mut buffer = Vec::new();
    let code = run_cli(args.iter().map(OsString::from), &mut buffer);
    (code, String::from_utf8_lossy(&buffer).into_owned())
}

/// Entry point used by `main`.
pub fn main_entry() -> i32 {
    let mut stdout = std::io::stdout();
    run_cli(std::env::args_os(), &mut stdout)
}
