//! Core data types shared by every subsystem, plus configuration validation.
//!
//! Identifiers are dense nonnegative integers assigned by configuration
//! order; one token is the permission to move one megabyte of data, so with
//! the default 1 s slot a desired bandwidth of `D` MB/s refills `D` tokens
//! per slot.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::workload::WorkloadSpec;

pub type AppId = usize;
pub type ServerId = usize;
pub type NodeId = usize;

/// Smallest request size the workload generator will emit, in megabytes.
pub const MIN_REQUEST_MB: f64 = 0.001;

/// Floor for the served-rate EWMA, keeping `gamma = a / r` finite.
pub const MIN_SERVED_RATE: f64 = 0.001;

/// Read or write. Both cost the same amount of bandwidth; the kind is
/// carried for attribution only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IoKind {
    Read,
    Write,
}

/// Operator policy attached to one application.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// Hard rate override in MB/s; when present it replaces `desired_bw`
    /// for token generation, no matter how much bandwidth was requested.
    pub rate_cap: Option<f64>,
    /// Whether the application may borrow unused tokens from other servers.
    pub borrow_allowed: bool,
    /// Optional gate: borrowing proceeds only while the application's
    /// satisfied-bandwidth fraction is below this value.
    pub borrow_threshold: Option<f64>,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            rate_cap: None,
            borrow_allowed: true,
            borrow_threshold: None,
        }
    }
}

/// An application's QoS contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationSpec {
    pub app_id: AppId,
    /// Requested bandwidth in MB/s.
    pub desired_bw: f64,
    /// Desired maximum violation probability, in (0, 1].
    pub delta: f64,
    /// Delay threshold in seconds, > 0.
    pub target_delay: f64,
    pub policy: Policy,
}

/// One I/O request.
#[derive(Debug, Clone, PartialEq)]
pub struct IoRequest {
    pub app_id: AppId,
    pub node_id: NodeId,
    pub server_id: ServerId,
    /// Payload size in megabytes, > 0. Partially served requests keep their
    /// residue here while they sit at the head of a queue.
    pub size: f64,
    pub kind: IoKind,
    pub arrival_slot: u64,
}

/// Which scheduling regime a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Borrowing,
    NoBorrowing,
    Traditional,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::Borrowing,
        Scenario::NoBorrowing,
        Scenario::Traditional,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Borrowing => "borrowing",
            Scenario::NoBorrowing => "no_borrowing",
            Scenario::Traditional => "traditional",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How the `thres` policy gate interprets "satisfied fraction".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Fraction of desired bandwidth served cumulatively over the run so far.
    Cumulative,
    /// Fraction of this slot's demand already covered by assigned tokens on
    /// the deficit server.
    Instantaneous,
}

/// Per-(application, server) token balances plus borrow accounting.
///
/// Balances are laid out row-per-server so the per-server serve phase can be
/// sharded without locking.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLedger {
    num_apps: usize,
    num_servers: usize,
    /// `balances[server][app]`, in tokens (= megabytes of permission).
    pub balances: Vec<Vec<f64>>,
    /// Tokens borrowed into `[server][app]` since the last refill; this is
    /// the `T` bonus of the extended priority.
    pub borrowed_this_window: Vec<Vec<f64>>,
    /// Maximum carryover, in slots' worth of refill share.
    pub bucket_depth_slots: f64,
}

impl TokenLedger {
    pub fn new(num_apps: usize, num_servers: usize, bucket_depth_slots: f64) -> Self {
        Self {
            num_apps,
            num_servers,
            balances: vec![vec![0.0; num_apps]; num_servers],
            borrowed_this_window: vec![vec![0.0; num_apps]; num_servers],
            bucket_depth_slots,
        }
    }

    pub fn num_apps(&self) -> usize {
        self.num_apps
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    pub fn balance(&self, app: AppId, server: ServerId) -> f64 {
        self.balances[server][app]
    }

    /// Sum of one application's balances across all servers. Borrowing moves
    /// tokens between servers and must leave this invariant.
    pub fn total_for_app(&self, app: AppId) -> f64 {
        self.balances.iter().map(|row| row[app]).sum()
    }
}

/// Full simulation configuration. Immutable after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub num_apps: usize,
    pub num_servers: usize,
    pub num_nodes: usize,
    /// Slot length in seconds; 0 means "use the default" (1 s).
    pub slot_duration: f64,
    /// Measured slots; `warmup_slots` extra slots run first and are excluded
    /// from report averages.
    pub num_slots: u64,
    pub warmup_slots: u64,
    pub scenario: Scenario,
    pub seed: u64,
    /// Bucket depth in slots' worth of refill; 0 means default (1.0).
    pub bucket_depth_slots: f64,
    /// EWMA weight for the served-rate estimate r_i; 0 means default (0.1).
    pub ewma_alpha: f64,
    /// Fixed service cost per request, in MB-equivalents charged against
    /// server capacity (never against tokens).
    pub request_overhead_mb: f64,
    /// Extra service cost whenever a server's consecutive service switches
    /// applications, in MB-equivalents charged against capacity.
    pub switch_overhead_mb: f64,
    /// Most contiguous same-application data one scheduler dispatch moves,
    /// in MB; also the fairness granule between competing applications.
    pub dispatch_quantum_mb: f64,
    /// Divide the borrowed-token priority bonus by the bucket depth instead
    /// of adding the raw count. Off by default.
    pub normalize_borrow_bonus: bool,
    pub threshold_mode: ThresholdMode,
    /// Keep every slot's trace in the report (memory-heavy on long runs).
    pub record_traces: bool,
    pub applications: Vec<ApplicationSpec>,
    /// Physical bandwidth limit per server, MB/s.
    pub servers: Vec<f64>,
    pub workload: WorkloadSpec,
}

impl SimConfig {
    /// A configuration shell with every global knob at its default; callers
    /// fill in applications, servers, and workload.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            num_apps: 0,
            num_servers: 0,
            num_nodes: 1,
            slot_duration: 1.0,
            num_slots: 1,
            warmup_slots: 0,
            scenario,
            seed,
            bucket_depth_slots: 1.0,
            ewma_alpha: 0.1,
            request_overhead_mb: DEFAULT_REQUEST_OVERHEAD_MB,
            switch_overhead_mb: DEFAULT_SWITCH_OVERHEAD_MB,
            dispatch_quantum_mb: DEFAULT_DISPATCH_QUANTUM_MB,
            normalize_borrow_bonus: false,
            threshold_mode: ThresholdMode::Cumulative,
            record_traces: false,
            applications: Vec::new(),
            servers: Vec::new(),
            workload: WorkloadSpec::default(),
        }
    }

    pub fn with_scenario(&self, scenario: Scenario) -> Self {
        let mut c = self.clone();
        c.scenario = scenario;
        c
    }
}

/// Default per-request service cost (MB-equivalent against capacity).
pub const DEFAULT_REQUEST_OVERHEAD_MB: f64 = 0.0005;

/// Default per-application-switch service cost (MB-equivalent against
/// capacity). Per-application classification lets the scheduler dispatch
/// quantum-sized same-application runs that amortize this cost; the
/// unclassified FIFO baseline pays it on nearly every request.
pub const DEFAULT_SWITCH_OVERHEAD_MB: f64 = 0.02;

/// Default scheduler dispatch quantum, in MB.
pub const DEFAULT_DISPATCH_QUANTUM_MB: f64 = 1.0;

/// A configuration rejection, carrying the offending field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ConfigError {}

fn fail(msg: String) -> Result<(), ConfigError> {
    Err(ConfigError(msg))
}

fn check_positive(value: f64, path: &str) -> Result<(), ConfigError> {
    if !value.is_finite() || value <= 0.0 {
        return fail(format!("{path} must be positive, got {value}"));
    }
    Ok(())
}

fn check_nonnegative(value: f64, path: &str) -> Result<(), ConfigError> {
    if !value.is_finite() || value < 0.0 {
        return fail(format!("{path} must be nonnegative, got {value}"));
    }
    Ok(())
}

/// Validates every invariant of the configuration and normalizes the
/// defaultable knobs (`slot_duration`, `bucket_depth_slots`, `ewma_alpha`)
/// when they are left at 0. Returns the config otherwise unchanged, so
/// validation is idempotent.
pub fn validate_config(mut config: SimConfig) -> Result<SimConfig, ConfigError> {
    if config.slot_duration == 0.0 {
        config.slot_duration = 1.0;
    }
    if config.bucket_depth_slots == 0.0 {
        config.bucket_depth_slots = 1.0;
    }
    if config.ewma_alpha == 0.0 {
        config.ewma_alpha = 0.1;
    }

    check_positive(config.slot_duration, "slot_duration")?;
    check_positive(config.bucket_depth_slots, "bucket_depth_slots")?;
    if !(config.ewma_alpha > 0.0 && config.ewma_alpha <= 1.0) {
        return Err(ConfigError(format!(
            "ewma_alpha out of (0,1], got {}",
            config.ewma_alpha
        )));
    }
    check_nonnegative(config.request_overhead_mb, "request_overhead_mb")?;
    check_nonnegative(config.switch_overhead_mb, "switch_overhead_mb")?;
    if config.dispatch_quantum_mb == 0.0 {
        config.dispatch_quantum_mb = DEFAULT_DISPATCH_QUANTUM_MB;
    }
    if config.dispatch_quantum_mb.is_nan() || config.dispatch_quantum_mb <= 0.0 {
        return Err(ConfigError(format!(
            "dispatch_quantum_mb must be positive, got {}",
            config.dispatch_quantum_mb
        )));
    }
    if config.num_slots == 0 {
        return Err(ConfigError("num_slots must be positive".into()));
    }
    if config.num_nodes == 0 {
        return Err(ConfigError("num_nodes must be positive".into()));
    }

    if config.num_apps != config.applications.len() {
        return Err(ConfigError(format!(
            "num_apps ({}) does not match applications length ({})",
            config.num_apps,
            config.applications.len()
        )));
    }
    if config.num_servers != config.servers.len() {
        return Err(ConfigError(format!(
            "num_servers ({}) does not match servers length ({})",
            config.num_servers,
            config.servers.len()
        )));
    }
    if config.applications.is_empty() {
        return Err(ConfigError("applications must not be empty".into()));
    }
    if config.servers.is_empty() {
        return Err(ConfigError("servers must not be empty".into()));
    }
    if config.scenario == Scenario::Borrowing && config.num_servers < 2 {
        return Err(ConfigError(
            "scenario: Borrowing requires ≥ 2 servers".into(),
        ));
    }

    for (i, app) in config.applications.iter().enumerate() {
        if app.app_id != i {
            return Err(ConfigError(format!(
                "applications[{i}].app_id must equal its index (ids are dense, by config order)"
            )));
        }
        if !(app.delta > 0.0 && app.delta <= 1.0) {
            return Err(ConfigError(format!(
                "applications[{i}].delta out of (0,1]"
            )));
        }
        check_positive(app.target_delay, &format!("applications[{i}].target_delay"))?;
        check_nonnegative(app.desired_bw, &format!("applications[{i}].desired_bw"))?;
        if let Some(cap) = app.policy.rate_cap {
            check_nonnegative(cap, &format!("applications[{i}].policy.rate_cap"))?;
        }
        if let Some(t) = app.policy.borrow_threshold {
            if !app.policy.borrow_allowed {
                return Err(ConfigError(format!(
                    "applications[{i}].policy: borrow_threshold present but borrow_allowed is false"
                )));
            }
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError(format!(
                    "applications[{i}].policy: borrow_threshold out of [0,1]"
                )));
            }
        }
    }

    for (s, limit) in config.servers.iter().enumerate() {
        check_positive(*limit, &format!("servers[{s}]"))?;
    }

    config.workload.validate()?;

    Ok(config)
}
