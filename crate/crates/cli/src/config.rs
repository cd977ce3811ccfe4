//! TOML configuration files.
//!
//! ```toml
//! [simulation]
//! scenario = "borrowing"        # borrowing | no_borrowing | traditional
//! seed = 42
//! num_slots = 1000
//!
//! [workload]
//! mode = "random_normal"        # or "fixed_size"
//! mean_size_mb = 0.064
//! stddev_size_mb = 0.032
//! offered_load_factor = 1.0
//! imbalance = 0.4
//!
//! servers = [50.0, 50.0]        # physical MB/s per storage server
//!
//! [[applications]]
//! desired_bw = 100.0            # MB/s; delta/target_delay take defaults
//!
//! policies = ["<app-0, rate=100 MB/s>", "<app-0, borrow=TRUE, thres=0.8>"]
//! ```
//!
//! Application ids are dense and assigned by order of appearance; `app-N` in
//! a policy string refers to the N-th `[[applications]]` entry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sdqos_core::control_plane::{apply_policy_directives, parse_policy};
use sdqos_core::domain::{
    ApplicationSpec, Policy, DEFAULT_DISPATCH_QUANTUM_MB, DEFAULT_REQUEST_OVERHEAD_MB,
    DEFAULT_SWITCH_OVERHEAD_MB,
};
use sdqos_core::{
    validate_config, Scenario, SimConfig, SizeModel, ThresholdMode, WorkloadSpec,
};

use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    /// Physical MB/s per storage server. Top-level, so it must appear
    /// before the first `[section]` in the file.
    servers: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    policies: Vec<String>,
    simulation: SimulationSection,
    workload: WorkloadSection,
    applications: Vec<AppSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    scenario: String,
    #[serde(default)]
    seed: u64,
    num_slots: u64,
    #[serde(default = "default_warmup")]
    warmup_slots: u64,
    #[serde(default = "one")]
    slot_duration: f64,
    /// 0 defaults to two nodes per application.
    #[serde(default)]
    num_nodes: usize,
    #[serde(default = "one")]
    bucket_depth_slots: f64,
    #[serde(default = "default_alpha")]
    ewma_alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    request_overhead_mb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    switch_overhead_mb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dispatch_quantum_mb: Option<f64>,
    #[serde(default)]
    normalize_borrow_bonus: bool,
    #[serde(default = "default_threshold_mode")]
    threshold_mode: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadSection {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_size_mb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stddev_size_mb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_size_mb: Option<f64>,
    #[serde(default = "one")]
    offered_load_factor: f64,
    #[serde(default)]
    imbalance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AppSection {
    desired_bw: f64,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "one")]
    target_delay: f64,
}

fn one() -> f64 {
    1.0
}
fn default_warmup() -> u64 {
    10
}
fn default_alpha() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.05
}
fn default_threshold_mode() -> String {
    "cumulative".into()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    match text.to_ascii_lowercase().replace('-', "_").as_str() {
        "borrowing" => Ok(Scenario::Borrowing),
        "no_borrowing" => Ok(Scenario::NoBorrowing),
        "traditional" => Ok(Scenario::Traditional),
        other => Err(CliError::Config(format!(
            "unknown scenario \"{other}\" (expected borrowing, no_borrowing, or traditional)"
        ))),
    }
}

fn build_sim_config(file: ConfigFile) -> Result<SimConfig, CliError> {
    let sim = &file.simulation;
    let scenario = parse_scenario(&sim.scenario)?;
    let threshold_mode = match sim.threshold_mode.to_ascii_lowercase().as_str() {
        "cumulative" => ThresholdMode::Cumulative,
        "instantaneous" => ThresholdMode::Instantaneous,
        other => {
            return Err(CliError::Config(format!(
                "unknown threshold_mode \"{other}\" (expected cumulative or instantaneous)"
            )))
        }
    };

    let model = match file.workload.mode.to_ascii_lowercase().as_str() {
        "random_normal" => SizeModel::RandomNormal {
            mean_mb: file.workload.mean_size_mb.unwrap_or(0.064),
            stddev_mb: file.workload.stddev_size_mb.unwrap_or(0.032),
        },
        "fixed_size" => SizeModel::FixedSize {
            size_mb: file.workload.fixed_size_mb.ok_or_else(|| {
                CliError::Config("workload.fixed_size_mb is required in fixed_size mode".into())
            })?,
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown workload.mode \"{other}\" (expected random_normal or fixed_size)"
            )))
        }
    };

    let mut applications: Vec<ApplicationSpec> = file
        .applications
        .iter()
        .enumerate()
        .map(|(i, a)| ApplicationSpec {
            app_id: i,
            desired_bw: a.desired_bw,
            delta: a.delta,
            target_delay: a.target_delay,
            policy: Policy::default(),
        })
        .collect();

    let directives = file
        .policies
        .iter()
        .map(|text| parse_policy(text))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(e.0))?;
    apply_policy_directives(&mut applications, &directives).map_err(|e| CliError::Config(e.0))?;

    let mut cfg = SimConfig::new(scenario, sim.seed);
    cfg.num_apps = applications.len();
    cfg.num_servers = file.servers.len();
    cfg.num_nodes = if sim.num_nodes == 0 {
        (2 * applications.len()).max(1)
    } else {
        sim.num_nodes
    };
    cfg.slot_duration = sim.slot_duration;
    cfg.num_slots = sim.num_slots;
    cfg.warmup_slots = sim.warmup_slots;
    cfg.bucket_depth_slots = sim.bucket_depth_slots;
    cfg.ewma_alpha = sim.ewma_alpha;
    cfg.request_overhead_mb = sim.request_overhead_mb.unwrap_or(DEFAULT_REQUEST_OVERHEAD_MB);
    cfg.switch_overhead_mb = sim.switch_overhead_mb.unwrap_or(DEFAULT_SWITCH_OVERHEAD_MB);
    cfg.dispatch_quantum_mb = sim
        .dispatch_quantum_mb
        .unwrap_or(DEFAULT_DISPATCH_QUANTUM_MB);
    cfg.normalize_borrow_bonus = sim.normalize_borrow_bonus;
    cfg.threshold_mode = threshold_mode;
    cfg.applications = applications;
    cfg.servers = file.servers;
    cfg.workload = WorkloadSpec {
        model,
        offered_load_factor: file.workload.offered_load_factor,
        imbalance: file.workload.imbalance,
    };

    validate_config(cfg).map_err(CliError::from)
}

/// Loads, parses, and validates a configuration file.
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: ConfigFile = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    build_sim_config(file)
}

/// Parses a configuration from a TOML string (used by tests and round-trip
/// checks).
pub fn parse_config(text: &str) -> Result<SimConfig, CliError> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    build_sim_config(file)
}

/// Renders a validated configuration back to TOML. `load` of the result
/// reproduces the same `SimConfig` (policies are re-encoded as the literal
/// angle-bracket strings).
pub fn save_config(cfg: &SimConfig) -> String {
    let mut policies = Vec::new();
    for app in &cfg.applications {
        let p = &app.policy;
        if let Some(rate) = p.rate_cap {
            policies.push(format!("<app-{}, rate={} MB/s>", app.app_id, rate));
        }
        match (p.borrow_allowed, p.borrow_threshold) {
            (false, _) => policies.push(format!("<app-{}, borrow=FALSE>", app.app_id)),
            (true, Some(t)) => {
                policies.push(format!("<app-{}, borrow=TRUE, thres={t}>", app.app_id))
            }
            (true, None) => {}
        }
    }
    let (mode, mean, stddev, fixed) = match cfg.workload.model {
        SizeModel::RandomNormal { mean_mb, stddev_mb } => {
            ("random_normal", Some(mean_mb), Some(stddev_mb), None)
        }
        SizeModel::FixedSize { size_mb } => ("fixed_size", None, None, Some(size_mb)),
    };
    let file = ConfigFile {
        servers: cfg.servers.clone(),
        policies,
        simulation: SimulationSection {
            scenario: cfg.scenario.label().into(),
            seed: cfg.seed,
            num_slots: cfg.num_slots,
            warmup_slots: cfg.warmup_slots,
            slot_duration: cfg.slot_duration,
            num_nodes: cfg.num_nodes,
            bucket_depth_slots: cfg.bucket_depth_slots,
            ewma_alpha: cfg.ewma_alpha,
            request_overhead_mb: Some(cfg.request_overhead_mb),
            switch_overhead_mb: Some(cfg.switch_overhead_mb),
            dispatch_quantum_mb: Some(cfg.dispatch_quantum_mb),
            normalize_borrow_bonus: cfg.normalize_borrow_bonus,
            threshold_mode: match cfg.threshold_mode {
                ThresholdMode::Cumulative => "cumulative".into(),
                ThresholdMode::Instantaneous => "instantaneous".into(),
            },
        },
        workload: WorkloadSection {
            mode: mode.into(),
            mean_size_mb: mean,
            stddev_size_mb: stddev,
            fixed_size_mb: fixed,
            offered_load_factor: cfg.workload.offered_load_factor,
            imbalance: cfg.workload.imbalance,
        },
        applications: cfg
            .applications
            .iter()
            .map(|a| AppSection {
                desired_bw: a.desired_bw,
                delta: a.delta,
                target_delay: a.target_delay,
            })
            .collect(),
    };
    toml::to_string_pretty(&file).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        servers = [10.0, 10.0]

        [simulation]
        scenario = "no_borrowing"
        num_slots = 5

        [workload]
        mode = "fixed_size"
        fixed_size_mb = 1.0

        [[applications]]
        desired_bw = 4.0
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.num_apps, 1);
        assert_eq!(cfg.num_servers, 2);
        assert_eq!(cfg.slot_duration, 1.0);
        assert_eq!(cfg.warmup_slots, 10);
        assert_eq!(cfg.ewma_alpha, 0.1);
        assert_eq!(cfg.applications[0].delta, 0.05);
        assert_eq!(cfg.request_overhead_mb, DEFAULT_REQUEST_OVERHEAD_MB);
    }

    fn with_policies(policies: &str) -> String {
        format!("policies = {policies}\n{MINIMAL}")
    }

    #[test]
    fn policy_strings_apply() {
        let cfg = parse_config(&with_policies("[\"<app-0, rate=100 MB/s>\"]")).unwrap();
        assert_eq!(cfg.applications[0].policy.rate_cap, Some(100.0));
    }

    #[test]
    fn bad_threshold_is_rejected_with_range_message() {
        let err =
            parse_config(&with_policies("[\"<app-0, borrow=TRUE, thres=1.5>\"]")).unwrap_err();
        assert!(err.to_string().contains("borrow_threshold out of [0,1]"), "{err}");
    }

    #[test]
    fn round_trip_is_identity() {
        let text =
            with_policies("[\"<app-0, rate=7.5 MB/s>\", \"<app-0, borrow=TRUE, thres=0.8>\"]");
        let cfg = parse_config(&text).unwrap();
        let rendered = save_config(&cfg);
        let reloaded = parse_config(&rendered).unwrap();
        assert_eq!(cfg, reloaded);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("{MINIMAL}\n[simulation.extra]\nx = 1");
        assert!(parse_config(&text).is_err());
    }
}
