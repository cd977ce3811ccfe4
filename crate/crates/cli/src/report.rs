//! CSV and JSON result emission.
//!
//! CSV schema: `scenario,app_id,desired_bw_mbps,allocated_bw_mbps,
//! allocated_pct`, one row per application sorted by id, plus one summary
//! row (`app_id = summary`) per scenario. Sweep output inserts an
//! `io_size_kb` column after `scenario`. Floats are rendered with six
//! decimal places; the JSON mirror carries the same values rounded
//! identically, so both emissions of one report agree bit-for-bit.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use sdqos_core::SimReport;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format \"{other}\" (expected csv or json)")),
        }
    }
}

/// One report to emit, optionally tagged with the sweep's I/O size.
#[derive(Debug)]
pub struct ReportEntry<'a> {
    pub io_size_kb: Option<f64>,
    pub report: &'a SimReport,
}

/// Rounds to the emitted precision: six decimal places.
fn to_micro(x: f64) -> i64 {
    (x * 1e6).round() as i64
}

/// Fixed six-decimal rendering built from the same integer the JSON value
/// uses, so the two emissions cannot disagree.
fn fmt6(x: f64) -> String {
    let micro = to_micro(x);
    let (sign, magnitude) = if micro < 0 { ("-", -micro) } else { ("", micro) };
    format!("{sign}{}.{:06}", magnitude / 1_000_000, magnitude % 1_000_000)
}

fn json6(x: f64) -> f64 {
    to_micro(x) as f64 / 1e6
}

fn per_app_pct(desired: f64, allocated: f64) -> f64 {
    if desired <= 0.0 {
        100.0
    } else {
        100.0 * allocated.min(desired) / desired
    }
}

/// Renders the CSV document. The `io_size_kb` column appears whenever any
/// entry carries a size tag.
pub fn render_csv(entries: &[ReportEntry<'_>]) -> String {
    let sweep = entries.iter().any(|e| e.io_size_kb.is_some());
    let mut out = String::new();
    out.push_str(if sweep {
        "scenario,io_size_kb,app_id,desired_bw_mbps,allocated_bw_mbps,allocated_pct\n"
    } else {
        "scenario,app_id,desired_bw_mbps,allocated_bw_mbps,allocated_pct\n"
    });
    for entry in entries {
        let report = entry.report;
        let size_col = entry
            .io_size_kb
            .map(|kb| format!("{},", fmt6(kb)))
            .unwrap_or_else(|| if sweep { ",".into() } else { String::new() });
        for (app_id, (d, a)) in report
            .per_app_desired_bw
            .iter()
            .zip(&report.per_app_allocated_bw)
            .enumerate()
        {
            out.push_str(&format!(
                "{},{}{},{},{},{}\n",
                report.scenario,
                size_col,
                app_id,
                fmt6(*d),
                fmt6(*a),
                fmt6(per_app_pct(*d, *a))
            ));
        }
        let total_desired: f64 = report.per_app_desired_bw.iter().sum();
        let total_allocated: f64 = report.per_app_allocated_bw.iter().sum();
        out.push_str(&format!(
            "{},{}summary,{},{},{}\n",
            report.scenario,
            size_col,
            fmt6(total_desired),
            fmt6(total_allocated),
            fmt6(report.allocated_pct)
        ));
    }
    out
}

#[derive(Serialize)]
struct JsonApp {
    app_id: usize,
    desired_bw_mbps: f64,
    allocated_bw_mbps: f64,
    allocated_pct: f64,
}

#[derive(Serialize)]
struct JsonSummary {
    desired_bw_mbps: f64,
    allocated_bw_mbps: f64,
    allocated_pct: f64,
}

#[derive(Serialize)]
struct JsonReport {
    scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    io_size_kb: Option<f64>,
    seed: u64,
    num_slots: u64,
    warmup_slots: u64,
    apps: Vec<JsonApp>,
    summary: JsonSummary,
}

#[derive(Serialize)]
struct JsonDocument {
    reports: Vec<JsonReport>,
}

/// Renders the JSON mirror of [`render_csv`].
pub fn render_json(entries: &[ReportEntry<'_>]) -> String {
    let reports = entries
        .iter()
        .map(|entry| {
            let report = entry.report;
            let apps = report
                .per_app_desired_bw
                .iter()
                .zip(&report.per_app_allocated_bw)
                .enumerate()
                .map(|(app_id, (d, a))| JsonApp {
                    app_id,
                    desired_bw_mbps: json6(*d),
                    allocated_bw_mbps: json6(*a),
                    allocated_pct: json6(per_app_pct(*d, *a)),
                })
                .collect();
            JsonReport {
                scenario: report.scenario.label().into(),
                io_size_kb: entry.io_size_kb.map(json6),
                seed: report.seed,
                num_slots: report.num_slots,
                warmup_slots: report.warmup_slots,
                apps,
                summary: JsonSummary {
                    desired_bw_mbps: json6(report.per_app_desired_bw.iter().sum()),
                    allocated_bw_mbps: json6(report.per_app_allocated_bw.iter().sum()),
                    allocated_pct: json6(report.allocated_pct),
                },
            }
        })
        .collect();
    let mut text =
        serde_json::to_string_pretty(&JsonDocument { reports }).expect("report serializes");
    text.push('\n');
    text
}

/// Renders per-slot traces as JSON (only meaningful when the run recorded
/// them).
pub fn render_traces_json(entries: &[ReportEntry<'_>]) -> String {
    #[derive(Serialize)]
    struct JsonBorrow {
        app_id: usize,
        from_server: usize,
        to_server: usize,
        amount_mb: f64,
    }
    #[derive(Serialize)]
    struct JsonSlot {
        slot: u64,
        per_app_served_mb: Vec<f64>,
        per_server_served_mb: Vec<f64>,
        per_app_backlog_mb: Vec<f64>,
        denied_borrows: u64,
        borrows: Vec<JsonBorrow>,
    }
    #[derive(Serialize)]
    struct JsonTraceReport {
        scenario: String,
        seed: u64,
        slots: Vec<JsonSlot>,
        per_server_utilization: Vec<Vec<f64>>,
    }
    #[derive(Serialize)]
    struct JsonTraceDocument {
        traces: Vec<JsonTraceReport>,
    }

    let traces = entries
        .iter()
        .map(|entry| {
            let report = entry.report;
            let slots = report
                .slot_traces
                .as_deref()
                .unwrap_or(&[])
                .iter()
                .map(|t| JsonSlot {
                    slot: t.slot,
                    per_app_served_mb: t.per_app_served.iter().map(|&v| json6(v)).collect(),
                    per_server_served_mb: t.per_server_served.iter().map(|&v| json6(v)).collect(),
                    per_app_backlog_mb: t
                        .per_app_queue_backlog
                        .iter()
                        .map(|&v| json6(v))
                        .collect(),
                    denied_borrows: t.denied_borrows,
                    borrows: t
                        .borrows
                        .iter()
                        .map(|b| JsonBorrow {
                            app_id: b.app_id,
                            from_server: b.from_server,
                            to_server: b.to_server,
                            amount_mb: json6(b.amount),
                        })
                        .collect(),
                })
                .collect();
            JsonTraceReport {
                scenario: report.scenario.label().into(),
                seed: report.seed,
                slots,
                per_server_utilization: report
                    .per_server_utilization
                    .iter()
                    .map(|row| row.iter().map(|&v| json6(v)).collect())
                    .collect(),
            }
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&JsonTraceDocument { traces })
        .expect("traces serialize");
    text.push('\n');
    text
}

/// Writes a file atomically: the content lands under a temporary name and
/// is renamed into place, so a failed run never leaves a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let context = |e: std::io::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(context)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp).map_err(context)?;
        file.write_all(bytes).map_err(context)?;
        file.sync_all().map_err(context)?;
    }
    std::fs::rename(&tmp, path).map_err(context)?;
    Ok(())
}
