//! Time-slotted orchestration across scenarios, with metrics capture.
//!
//! Each slot executes, in order: workload delegation to the global data
//! plane, global classification and distribution to the target servers'
//! local planes, token refill from the (static) shaped grant plan, demand
//! update from local queue lengths, the borrowing pass (borrowing scenario
//! only), and the per-server serve loops. The traditional scenario bypasses
//! the software-defined machinery entirely: arrivals go straight into a
//! per-server FIFO served up to the physical limit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::control_plane::{
    borrowing_round, enforce_policies, generate_token_rates, refill_buckets, shape_traffic,
    BorrowRecord, EffectivePolicy, TokenGrantPlan,
};
use crate::data_plane::{
    serve_slot_fifo, serve_slot_mlwdf, DataPlaneError, GlobalPlane, ServerState, ServiceModel,
};
use crate::domain::{
    validate_config, AppId, ConfigError, IoRequest, Scenario, ServerId, SimConfig, TokenLedger,
    MIN_SERVED_RATE,
};
use crate::rng::{derive_rng, STREAM_BORROW};
use crate::workload::{generate_slot_workload, make_unbalanced_example};

/// Fatal simulation failure. Invariant violations indicate bugs, not inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Config(ConfigError),
    UnknownApp { app_id: AppId, num_apps: usize },
    UnknownServer { server_id: ServerId, num_servers: usize },
    Invariant(String),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Config(e) => write!(f, "invalid configuration: {e}"),
            SimError::UnknownApp { app_id, num_apps } => write!(
                f,
                "request names app {app_id}, but only {num_apps} applications are configured"
            ),
            SimError::UnknownServer {
                server_id,
                num_servers,
            } => write!(
                f,
                "request targets server {server_id}, but only {num_servers} servers are configured"
            ),
            SimError::Invariant(msg) => write!(f, "simulation invariant violated: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SimError {}

impl From<ConfigError> for SimError {
    fn from(e: ConfigError) -> Self {
        SimError::Config(e)
    }
}

impl From<DataPlaneError> for SimError {
    fn from(e: DataPlaneError) -> Self {
        match e {
            DataPlaneError::UnknownApp { app_id, num_apps } => {
                SimError::UnknownApp { app_id, num_apps }
            }
            DataPlaneError::NonpositiveRate { rate } => {
                SimError::Invariant(format!("nonpositive served-rate estimate {rate}"))
            }
        }
    }
}

/// Everything observable about one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub slot: u64,
    pub per_app_served: Vec<f64>,
    pub per_server_served: Vec<f64>,
    pub borrows: Vec<BorrowRecord>,
    /// Megabytes still enqueued per application at slot end, across servers.
    pub per_app_queue_backlog: Vec<f64>,
    /// Deficit pairs whose borrow attempt was skipped by policy.
    pub denied_borrows: u64,
}

impl SlotTrace {
    pub fn total_served_mb(&self) -> f64 {
        self.per_server_served.iter().sum()
    }
}

/// Aggregated result of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub num_slots: u64,
    pub warmup_slots: u64,
    pub per_app_desired_bw: Vec<f64>,
    /// Served MB/s per application, averaged over the measured (post-warmup)
    /// slots.
    pub per_app_allocated_bw: Vec<f64>,
    /// `100 * sum(min(allocated, desired)) / sum(desired)`.
    pub allocated_pct: f64,
    /// Capacity-used fraction per server per slot (warmup included).
    pub per_server_utilization: Vec<Vec<f64>>,
    /// Megabytes served in measured slots, all applications.
    pub total_served_mb: f64,
    pub slot_traces: Option<Vec<SlotTrace>>,
}

impl SimReport {
    /// The headline metric for an arbitrary allocation vector.
    pub fn allocated_pct_of(desired: &[f64], allocated: &[f64]) -> f64 {
        let total_desired: f64 = desired.iter().sum();
        if total_desired <= 0.0 {
            return 100.0;
        }
        let satisfied: f64 = desired
            .iter()
            .zip(allocated)
            .map(|(&d, &a)| a.min(d))
            .sum();
        100.0 * satisfied / total_desired
    }
}

pub(crate) struct ServeShard<'a> {
    pub server: &'a mut ServerState,
    pub tokens: &'a mut Vec<f64>,
    pub borrowed: &'a Vec<f64>,
}

#[derive(Clone, Copy)]
pub(crate) struct ServeParams<'a> {
    scenario: Scenario,
    slot_duration: f64,
    service: ServiceModel,
    normalize_borrow_bonus: bool,
    bucket_depth_slots: f64,
    plan: &'a TokenGrantPlan,
}

/// Serves one server for the current slot. Safe to run concurrently for
/// distinct servers: shards share no mutable state.
pub(crate) fn serve_shard(shard: &mut ServeShard<'_>, params: &ServeParams<'_>) {
    match params.scenario {
        Scenario::Traditional => serve_slot_fifo(shard.server, &params.service),
        Scenario::NoBorrowing | Scenario::Borrowing => {
            if params.normalize_borrow_bonus {
                let bonus: Vec<f64> = shard
                    .borrowed
                    .iter()
                    .enumerate()
                    .map(|(app, b)| {
                        let depth = params.plan.per_app_server_share[app][shard.server.server_id]
                            * params.bucket_depth_slots;
                        if depth > 0.0 {
                            b / depth
                        } else {
                            *b
                        }
                    })
                    .collect();
                serve_slot_mlwdf(
                    shard.server,
                    shard.tokens,
                    &bonus,
                    params.slot_duration,
                    &params.service,
                );
            } else {
                serve_slot_mlwdf(
                    shard.server,
                    shard.tokens,
                    shard.borrowed,
                    params.slot_duration,
                    &params.service,
                );
            }
        }
    }
}

/// The simulator: owns all state for one run of one scenario.
pub struct Engine {
    cfg: SimConfig,
    policies: Vec<EffectivePolicy>,
    plan: TokenGrantPlan,
    /// Per-application QoS weight a_i = -ln(delta_i) / T_i; gamma = a_i / r.
    qos_weight: Vec<f64>,
    global: GlobalPlane,
    servers: Vec<ServerState>,
    ledger: TokenLedger,
    service: ServiceModel,
    slot: u64,
    slot_borrows: Vec<BorrowRecord>,
    slot_denied: u64,
    /// Served MB per application over the whole run (the thres gate input).
    cum_served_per_app: Vec<f64>,
    /// Served MB per application over measured slots only.
    measured_served_per_app: Vec<f64>,
    per_server_utilization: Vec<Vec<f64>>,
    /// Aggregate served-rate EWMA per application, for the global plane's
    /// diagnostic priorities.
    global_rate_ewma: Vec<f64>,
    last_global_priorities: Vec<f64>,
    traces: Option<Vec<SlotTrace>>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("scenario", &self.cfg.scenario)
            .field("slot", &self.slot)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(config: SimConfig) -> Result<Self, ConfigError> {
        let cfg = validate_config(config)?;
        let policies = enforce_policies(&cfg.applications);
        let mut plan = generate_token_rates(&cfg.applications, cfg.slot_duration);
        shape_traffic(&mut plan, cfg.num_servers).map_err(|e| ConfigError(e.0))?;
        let qos_weight = cfg
            .applications
            .iter()
            .map(|a| {
                if a.delta == 1.0 {
                    0.0
                } else {
                    -libm::log(a.delta) / a.target_delay
                }
            })
            .collect();
        let servers = cfg
            .servers
            .iter()
            .enumerate()
            .map(|(id, &limit)| ServerState::new(id, limit, &cfg.applications))
            .collect();
        let ledger = TokenLedger::new(cfg.num_apps, cfg.num_servers, cfg.bucket_depth_slots);
        let service = ServiceModel {
            per_request_mb: cfg.request_overhead_mb,
            per_switch_mb: cfg.switch_overhead_mb,
            dispatch_quantum_mb: cfg.dispatch_quantum_mb,
        };
        let global_rate_ewma = cfg
            .applications
            .iter()
            .map(|a| a.desired_bw.max(MIN_SERVED_RATE))
            .collect();
        Ok(Self {
            global: GlobalPlane::new(cfg.num_apps),
            servers,
            ledger,
            service,
            policies,
            plan,
            qos_weight,
            slot: 0,
            slot_borrows: Vec::new(),
            slot_denied: 0,
            cum_served_per_app: vec![0.0; cfg.num_apps],
            measured_served_per_app: vec![0.0; cfg.num_apps],
            per_server_utilization: vec![Vec::new(); cfg.num_servers],
            global_rate_ewma,
            last_global_priorities: vec![0.0; cfg.num_apps],
            traces: if cfg.record_traces { Some(Vec::new()) } else { None },
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn current_slot(&self) -> u64 {
        self.slot
    }

    pub fn token_ledger(&self) -> &TokenLedger {
        &self.ledger
    }

    pub fn server(&self, id: ServerId) -> &ServerState {
        &self.servers[id]
    }

    /// The global data plane's diagnostic per-application priorities from the
    /// last slot. Requests route to their target server regardless.
    pub fn global_priorities(&self) -> &[f64] {
        &self.last_global_priorities
    }

    /// Generates this slot's workload from the configured spec.
    pub fn generate_requests(&self) -> Vec<IoRequest> {
        generate_slot_workload(
            &self.cfg.workload,
            &self.cfg.applications,
            self.cfg.num_servers,
            self.cfg.num_nodes,
            self.cfg.slot_duration,
            self.cfg.seed,
            self.slot,
        )
    }

    /// Runs one slot on the configured workload.
    pub fn run_slot(&mut self) -> Result<SlotTrace, SimError> {
        let requests = self.generate_requests();
        self.run_slot_with_requests(requests)
    }

    /// Runs one slot on an explicit request batch (arrival order = input
    /// order).
    pub fn run_slot_with_requests(&mut self, requests: Vec<IoRequest>) -> Result<SlotTrace, SimError> {
        self.pre_serve(requests)?;
        self.serve_phase_serial();
        self.finish_slot()
    }

    /// Steps 1–7 plus the borrowing pass: everything before per-server
    /// service.
    pub(crate) fn pre_serve(&mut self, requests: Vec<IoRequest>) -> Result<(), SimError> {
        let slot_duration = self.cfg.slot_duration;
        for server in &mut self.servers {
            server.begin_slot(slot_duration);
        }
        self.slot_borrows = Vec::new();
        self.slot_denied = 0;

        for request in &requests {
            if request.app_id >= self.cfg.num_apps {
                return Err(SimError::UnknownApp {
                    app_id: request.app_id,
                    num_apps: self.cfg.num_apps,
                });
            }
            if request.server_id >= self.cfg.num_servers {
                return Err(SimError::UnknownServer {
                    server_id: request.server_id,
                    num_servers: self.cfg.num_servers,
                });
            }
        }

        if self.cfg.scenario == Scenario::Traditional {
            // No software-defined layers: requests land on the target
            // server's FIFO in arrival order.
            for request in requests {
                self.servers[request.server_id].enqueue_fifo([request]);
            }
            return Ok(());
        }

        // Global classification, diagnostic priorities, then distribution to
        // the local planes (per-application order is preserved).
        self.global.classify(requests)?;
        self.compute_global_priorities();
        for app in 0..self.cfg.num_apps {
            while let Some(request) = self.global.queues[app].pop_front() {
                self.global.queue_len_mb[app] -= request.size;
                let server = &mut self.servers[request.server_id];
                server.stats[app].queue_len_mb += request.size;
                server.queues[app].push_back(request);
            }
            self.global.queue_len_mb[app] = 0.0;
        }

        refill_buckets(&mut self.ledger, &self.plan);

        // gamma_i for this slot, from the slot-start served-rate estimates.
        for server in &mut self.servers {
            for app in 0..self.cfg.num_apps {
                server.gamma[app] = self.qos_weight[app] / server.stats[app].avg_served_rate;
            }
        }

        if self.cfg.scenario == Scenario::Borrowing {
            let demands: Vec<Vec<f64>> = self
                .servers
                .iter()
                .map(|s| s.stats.iter().map(|st| st.queue_len_mb).collect())
                .collect();
            let satisfaction = self.cumulative_satisfaction();
            let mut rng = derive_rng(self.cfg.seed, STREAM_BORROW, self.slot);
            let outcome = borrowing_round(
                &mut self.ledger,
                &demands,
                &self.policies,
                &satisfaction,
                self.cfg.threshold_mode,
                self.slot,
                &mut rng,
            );
            self.slot_borrows = outcome.records;
            self.slot_denied = outcome.denied;
        }
        Ok(())
    }

    fn compute_global_priorities(&mut self) {
        // C for the framework-wide view is the aggregate deliverable rate.
        let aggregate_rate: f64 = self.cfg.servers.iter().sum();
        for app in 0..self.cfg.num_apps {
            let gamma = self.qos_weight[app] / self.global_rate_ewma[app];
            self.last_global_priorities[app] = crate::data_plane::priority(
                gamma,
                self.global.queue_len_mb[app],
                aggregate_rate,
                0.0,
            );
        }
    }

    /// Satisfied fraction of desired bandwidth so far, per application.
    /// Before any slot has completed, everything counts as unsatisfied.
    fn cumulative_satisfaction(&self) -> Vec<f64> {
        let elapsed = self.slot as f64 * self.cfg.slot_duration;
        self.cfg
            .applications
            .iter()
            .map(|app| {
                let desired = app.desired_bw * elapsed;
                if desired <= 0.0 {
                    if app.desired_bw <= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.cum_served_per_app[app.app_id] / desired
                }
            })
            .collect()
    }

    pub(crate) fn serve_split(&mut self) -> (Vec<ServeShard<'_>>, ServeParams<'_>) {
        let params = ServeParams {
            scenario: self.cfg.scenario,
            slot_duration: self.cfg.slot_duration,
            service: self.service,
            normalize_borrow_bonus: self.cfg.normalize_borrow_bonus,
            bucket_depth_slots: self.cfg.bucket_depth_slots,
            plan: &self.plan,
        };
        let shards = self
            .servers
            .iter_mut()
            .zip(self.ledger.balances.iter_mut())
            .zip(self.ledger.borrowed_this_window.iter())
            .map(|((server, tokens), borrowed)| ServeShard {
                server,
                tokens,
                borrowed,
            })
            .collect();
        (shards, params)
    }

    fn serve_phase_serial(&mut self) {
        let (mut shards, params) = self.serve_split();
        for shard in &mut shards {
            serve_shard(shard, &params);
        }
    }

    /// Slot-end bookkeeping: EWMA updates, invariant checks, trace assembly.
    pub(crate) fn finish_slot(&mut self) -> Result<SlotTrace, SimError> {
        let cfg = &self.cfg;
        let slot_duration = cfg.slot_duration;
        let alpha = cfg.ewma_alpha;
        let mut per_app_served = vec![0.0; cfg.num_apps];
        let mut per_server_served = vec![0.0; cfg.num_servers];

        for server in &mut self.servers {
            let mut total = 0.0;
            for ((&served, stat), acc) in server
                .served_this_slot
                .iter()
                .zip(server.stats.iter_mut())
                .zip(per_app_served.iter_mut())
            {
                *acc += served;
                total += served;
                let rate = served / slot_duration;
                stat.avg_served_rate =
                    ((1.0 - alpha) * stat.avg_served_rate + alpha * rate).max(MIN_SERVED_RATE);
            }
            per_server_served[server.server_id] = total;

            let budget = server.phys_limit * slot_duration;
            if total > budget * (1.0 + 1e-9) + 1e-9 {
                return Err(SimError::Invariant(format!(
                    "server {} served {total} MB, above its physical budget {budget} MB",
                    server.server_id
                )));
            }
            self.per_server_utilization[server.server_id]
                .push(server.capacity_used(slot_duration) / budget);
        }

        for row in &self.ledger.balances {
            for (app, &balance) in row.iter().enumerate() {
                if balance < -1e-9 {
                    return Err(SimError::Invariant(format!(
                        "negative token balance {balance} for app {app}"
                    )));
                }
            }
        }

        let measured = self.slot >= cfg.warmup_slots;
        for (((&served, cum), acc), ewma) in per_app_served
            .iter()
            .zip(&mut self.cum_served_per_app)
            .zip(&mut self.measured_served_per_app)
            .zip(&mut self.global_rate_ewma)
        {
            *cum += served;
            if measured {
                *acc += served;
            }
            let rate = served / slot_duration;
            *ewma = ((1.0 - alpha) * *ewma + alpha * rate).max(MIN_SERVED_RATE);
        }

        let per_app_queue_backlog = (0..cfg.num_apps)
            .map(|app| {
                self.servers
                    .iter()
                    .map(|s| s.stats[app].queue_len_mb)
                    .sum()
            })
            .collect();

        let trace = SlotTrace {
            slot: self.slot,
            per_app_served,
            per_server_served,
            borrows: core::mem::take(&mut self.slot_borrows),
            per_app_queue_backlog,
            denied_borrows: self.slot_denied,
        };
        if let Some(traces) = &mut self.traces {
            traces.push(trace.clone());
        }
        self.slot += 1;
        Ok(trace)
    }

    /// Builds the report from everything run so far.
    pub fn report(&self) -> SimReport {
        let cfg = &self.cfg;
        let measured_slots = self.slot.saturating_sub(cfg.warmup_slots).max(1);
        let denom = measured_slots as f64 * cfg.slot_duration;
        let per_app_desired_bw: Vec<f64> =
            cfg.applications.iter().map(|a| a.desired_bw).collect();
        let per_app_allocated_bw: Vec<f64> = self
            .measured_served_per_app
            .iter()
            .map(|&mb| mb / denom)
            .collect();
        let allocated_pct = SimReport::allocated_pct_of(&per_app_desired_bw, &per_app_allocated_bw);
        SimReport {
            scenario: cfg.scenario,
            seed: cfg.seed,
            num_slots: cfg.num_slots,
            warmup_slots: cfg.warmup_slots,
            per_app_desired_bw,
            per_app_allocated_bw,
            allocated_pct,
            per_server_utilization: self.per_server_utilization.clone(),
            total_served_mb: self.measured_served_per_app.iter().sum(),
            slot_traces: self.traces.clone(),
        }
    }
}

/// Runs `warmup_slots + num_slots` slots and aggregates the report;
/// deterministic for a fixed config.
pub fn run_simulation(config: SimConfig) -> Result<SimReport, SimError> {
    let mut engine = Engine::new(config)?;
    let total = engine.cfg.warmup_slots + engine.cfg.num_slots;
    for _ in 0..total {
        engine.run_slot()?;
    }
    Ok(engine.report())
}

/// Runs one fixed-size report per I/O size, identical seeds, all else equal.
pub fn run_sweep(base_config: &SimConfig, io_sizes_mb: &[f64]) -> Result<Vec<SimReport>, SimError> {
    io_sizes_mb
        .iter()
        .map(|&size_mb| {
            let mut cfg = base_config.clone();
            cfg.workload.model = crate::workload::SizeModel::FixedSize { size_mb };
            run_simulation(cfg)
        })
        .collect()
}

/// Outcome of the canonical unbalanced-demand micro-scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbalancedExampleOutcome {
    pub without_borrowing_mb: f64,
    pub with_borrowing_mb: f64,
}

/// Builds the canonical single-application scenario (three 500 MB/s servers,
/// demand [150, 100, 50] MB against 100 tokens per server) and runs one slot
/// with and without borrowing. Overheads are zero so the totals are exact:
/// 250 MB without borrowing, 300 MB with it.
pub fn run_unbalanced_example() -> Result<UnbalancedExampleOutcome, SimError> {
    let run = |scenario: Scenario| -> Result<f64, SimError> {
        let mut cfg = SimConfig::new(scenario, 0);
        cfg.applications = vec![crate::domain::ApplicationSpec {
            app_id: 0,
            desired_bw: 300.0,
            delta: 0.05,
            target_delay: 1.0,
            policy: crate::domain::Policy::default(),
        }];
        cfg.servers = vec![500.0; 3];
        cfg.num_apps = 1;
        cfg.num_servers = 3;
        cfg.num_nodes = 3;
        cfg.num_slots = 1;
        cfg.warmup_slots = 0;
        cfg.request_overhead_mb = 0.0;
        cfg.switch_overhead_mb = 0.0;
        cfg.workload = crate::workload::WorkloadSpec {
            model: crate::workload::SizeModel::FixedSize { size_mb: 50.0 },
            offered_load_factor: 0.0,
            imbalance: 0.0,
        };
        let mut engine = Engine::new(cfg)?;
        let trace = engine.run_slot_with_requests(make_unbalanced_example())?;
        Ok(trace.total_served_mb())
    };
    Ok(UnbalancedExampleOutcome {
        without_borrowing_mb: run(Scenario::NoBorrowing)?,
        with_borrowing_mb: run(Scenario::Borrowing)?,
    })
}
