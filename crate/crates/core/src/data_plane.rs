//! Data-plane logic shared by the global plane and every storage server:
//! I/O classification into per-application queues, per-application QoS
//! bookkeeping, and the (extended) M-LWDF scheduling decision.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::domain::{AppId, ApplicationSpec, IoRequest, ServerId, MIN_SERVED_RATE};

/// Residue below this is treated as a completed request (floating-point
/// dust from partial service).
const SIZE_EPS: f64 = 1e-12;

/// Queue lengths, token balances, and capacities below this are dust left
/// by float subtraction, not serviceable work.
const DUST: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum DataPlaneError {
    /// A request referenced an application that is not configured.
    UnknownApp { app_id: AppId, num_apps: usize },
    /// `gamma` is undefined for a nonpositive served-rate estimate.
    NonpositiveRate { rate: f64 },
}

impl fmt::Display for DataPlaneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataPlaneError::UnknownApp { app_id, num_apps } => write!(
                f,
                "cannot classify request: app_id {app_id} is not configured ({num_apps} applications)"
            ),
            DataPlaneError::NonpositiveRate { rate } => {
                write!(f, "gamma undefined for nonpositive served rate {rate}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DataPlaneError {}

/// Per-application bookkeeping on one server.
#[derive(Debug, Clone, PartialEq)]
pub struct AppQueueStats {
    /// Megabytes currently enqueued for this application here: L_i(t).
    pub queue_len_mb: f64,
    /// EWMA of the historically served rate in MB/s: r_i. Initialized to the
    /// application's desired bandwidth (floored) and floored after updates.
    pub avg_served_rate: f64,
}

/// The framework-wide classification stage: one queue per application,
/// collecting every request before distribution to target servers.
#[derive(Debug, Clone)]
pub struct GlobalPlane {
    pub queues: Vec<VecDeque<IoRequest>>,
    pub queue_len_mb: Vec<f64>,
}

impl GlobalPlane {
    pub fn new(num_apps: usize) -> Self {
        Self {
            queues: (0..num_apps).map(|_| VecDeque::new()).collect(),
            queue_len_mb: vec![0.0; num_apps],
        }
    }

    /// Appends each request to its application's queue, preserving input
    /// order. Rejects requests naming an unconfigured application.
    pub fn classify(&mut self, requests: Vec<IoRequest>) -> Result<(), DataPlaneError> {
        let num_apps = self.queues.len();
        for request in requests {
            let app = request.app_id;
            if app >= num_apps {
                return Err(DataPlaneError::UnknownApp { app_id: app, num_apps });
            }
            self.queue_len_mb[app] += request.size;
            self.queues[app].push_back(request);
        }
        Ok(())
    }
}

/// One storage server: physical limit, per-application queues (token-bucket
/// scenarios), a unified arrival-order queue (traditional scenario), and the
/// slot-scoped service accounting.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub server_id: ServerId,
    /// Physical bandwidth limit in MB/s.
    pub phys_limit: f64,
    /// Per-application FIFO queues; order equals arrival order.
    pub queues: Vec<VecDeque<IoRequest>>,
    /// Single FIFO across applications, used by the traditional scenario.
    pub fifo: VecDeque<IoRequest>,
    pub stats: Vec<AppQueueStats>,
    /// Megabytes of capacity still available in the current slot.
    pub remaining_capacity: f64,
    /// gamma_i for this slot, recomputed from `stats` at slot start.
    pub(crate) gamma: Vec<f64>,
    pub(crate) served_this_slot: Vec<f64>,
    /// Which application the previous service chunk belonged to; switching
    /// applications costs `per_switch_mb` of capacity.
    pub(crate) last_served_app: Option<AppId>,
}

impl ServerState {
    pub fn new(server_id: ServerId, phys_limit: f64, specs: &[ApplicationSpec]) -> Self {
        Self {
            server_id,
            phys_limit,
            queues: (0..specs.len()).map(|_| VecDeque::new()).collect(),
            fifo: VecDeque::new(),
            stats: specs
                .iter()
                .map(|spec| AppQueueStats {
                    queue_len_mb: 0.0,
                    avg_served_rate: spec.desired_bw.max(MIN_SERVED_RATE),
                })
                .collect(),
            remaining_capacity: 0.0,
            gamma: vec![0.0; specs.len()],
            served_this_slot: vec![0.0; specs.len()],
            last_served_app: None,
        }
    }

    /// Appends requests already routed to this server into per-application
    /// queues (order-preserving within each application).
    pub fn classify(&mut self, requests: impl IntoIterator<Item = IoRequest>) -> Result<(), DataPlaneError> {
        let num_apps = self.queues.len();
        for request in requests {
            let app = request.app_id;
            if app >= num_apps {
                return Err(DataPlaneError::UnknownApp { app_id: app, num_apps });
            }
            debug_assert_eq!(request.server_id, self.server_id);
            self.stats[app].queue_len_mb += request.size;
            self.queues[app].push_back(request);
        }
        Ok(())
    }

    /// Enqueues requests in arrival order for the traditional FIFO path,
    /// still tracking per-application backlog for metrics.
    pub fn enqueue_fifo(&mut self, requests: impl IntoIterator<Item = IoRequest>) {
        for request in requests {
            self.stats[request.app_id].queue_len_mb += request.size;
            self.fifo.push_back(request);
        }
    }

    /// Slots the head request of `app` has waited, for diagnostics.
    pub fn hol_wait_slots(&self, app: AppId, current_slot: u64) -> Option<u64> {
        self.queues[app]
            .front()
            .map(|r| current_slot.saturating_sub(r.arrival_slot))
    }

    /// Opens a new slot: restores capacity to `phys_limit * slot_duration`
    /// and clears the slot's service accounting.
    pub fn begin_slot(&mut self, slot_duration: f64) {
        self.remaining_capacity = self.phys_limit * slot_duration;
        self.served_this_slot.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Sets this slot's priority weight for one application (the engine
    /// recomputes these from the served-rate estimates each slot).
    pub fn set_gamma(&mut self, app: AppId, gamma: f64) {
        self.gamma[app] = gamma;
    }

    /// Megabytes of this slot's capacity already consumed (payload plus
    /// service overhead).
    pub(crate) fn capacity_used(&self, slot_duration: f64) -> f64 {
        self.phys_limit * slot_duration - self.remaining_capacity
    }
}

/// Service-cost model. Overheads are charged against server capacity (never
/// tokens): every serviced request costs `per_request_mb`, and whenever the
/// service stream switches applications the server additionally pays
/// `per_switch_mb`. A dispatch covers consecutive same-application requests
/// up to `dispatch_quantum_mb`, so queues that have been classified per
/// application amortize the switch cost over the quantum, while an
/// interleaved arrival-order FIFO pays it almost every request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceModel {
    /// Fixed cost per serviced request, MB-equivalent.
    pub per_request_mb: f64,
    /// Extra cost when service switches applications, MB-equivalent.
    pub per_switch_mb: f64,
    /// Most contiguous data one dispatch may move, in MB. Also the fairness
    /// granule between equally backlogged applications.
    pub dispatch_quantum_mb: f64,
}

impl ServiceModel {
    /// Cost-free service with an unbounded quantum.
    pub const IDEAL: ServiceModel = ServiceModel {
        per_request_mb: 0.0,
        per_switch_mb: 0.0,
        dispatch_quantum_mb: f64::INFINITY,
    };

    #[inline]
    fn switch_cost(&self, last: Option<AppId>, app: AppId) -> f64 {
        if last == Some(app) {
            0.0
        } else {
            self.per_switch_mb
        }
    }
}

/// gamma_i = a_i / r_i with a_i = -ln(delta_i) / T_i.
///
/// Natural log: the choice of base rescales every a_i by the same constant,
/// which cannot change an argmax at T = 0.
pub fn compute_gamma(spec: &ApplicationSpec, avg_served_rate: f64) -> Result<f64, DataPlaneError> {
    if avg_served_rate.is_nan() || avg_served_rate <= 0.0 {
        return Err(DataPlaneError::NonpositiveRate {
            rate: avg_served_rate,
        });
    }
    if spec.delta == 1.0 {
        return Ok(0.0);
    }
    Ok(-libm::log(spec.delta) / spec.target_delay / avg_served_rate)
}

/// C_i(t): the bandwidth actually obtainable this slot, in MB/s — the lesser
/// of token permission and remaining physical capacity.
#[inline]
pub fn capacity_share(tokens_available: f64, remaining_capacity: f64, slot_duration: f64) -> f64 {
    tokens_available.min(remaining_capacity) / slot_duration
}

/// Extended M-LWDF priority: `gamma * L * C + T`, where `T` is the borrowed
/// token count (zero outside the borrowing scenario).
#[inline]
pub fn priority(gamma: f64, queue_len_mb: f64, capacity_share: f64, borrowed_tokens: f64) -> f64 {
    gamma * queue_len_mb * capacity_share + borrowed_tokens
}

#[inline]
fn eligible(server: &ServerState, tokens: &[f64], app: AppId) -> bool {
    server.stats[app].queue_len_mb > DUST
        && tokens[app] > DUST
        && server.remaining_capacity > DUST
}

/// Picks the application with maximal extended priority among those with a
/// nonempty queue, tokens, and remaining capacity; ties break toward the
/// lowest app id. Returns `None` when no application is eligible.
pub fn mlwdf_select(
    server: &ServerState,
    tokens: &[f64],
    borrow_bonus: &[f64],
    slot_duration: f64,
) -> Option<AppId> {
    let mut best: Option<(AppId, f64)> = None;
    for app in 0..server.stats.len() {
        if !eligible(server, tokens, app) {
            continue;
        }
        let c = capacity_share(tokens[app], server.remaining_capacity, slot_duration);
        let p = priority(server.gamma[app], server.stats[app].queue_len_mb, c, borrow_bonus[app]);
        match best {
            Some((_, bp)) if bp >= p => {}
            _ => best = Some((app, p)),
        }
    }
    best.map(|(app, _)| app)
}

/// Outcome of one service dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct ServeOutcome {
    /// Megabytes moved (0 when nothing could be served).
    pub served_mb: f64,
    /// Requests completed by this dispatch, in completion order.
    pub completed: Vec<IoRequest>,
}

/// Serves one dispatch from the head of `app`'s queue: a contiguous run of
/// queued data limited by `min(tokens, capacity after overheads, dispatch
/// quantum)`. Whole head requests are drained in FIFO order and a partially
/// served request keeps its residue at the queue head. Tokens decrease by
/// exactly the megabytes served; capacity additionally pays the per-request
/// and switch overheads.
pub fn serve_one(
    server: &mut ServerState,
    tokens: &mut f64,
    app: AppId,
    model: &ServiceModel,
) -> ServeOutcome {
    let mut outcome = ServeOutcome {
        served_mb: 0.0,
        completed: Vec::new(),
    };
    if server.queues[app].is_empty() {
        // Stats can carry subtraction dust after the queue drains; resync.
        server.stats[app].queue_len_mb = 0.0;
        return outcome;
    }

    let switch = model.switch_cost(server.last_served_app, app);
    if server.remaining_capacity - switch - model.per_request_mb <= 0.0 {
        return outcome;
    }
    let mut capacity = server.remaining_capacity - switch;
    let mut quantum_left = model.dispatch_quantum_mb;

    while let Some(head) = server.queues[app].front_mut() {
        let after_request = capacity - model.per_request_mb;
        let budget = after_request.min(*tokens).min(quantum_left);
        let served = head.size.min(budget);
        if served <= 0.0 {
            break;
        }
        head.size -= served;
        *tokens -= served;
        quantum_left -= served;
        // Subtract in this order so capacity lands on exactly 0 at the bind.
        capacity = (after_request - served).max(0.0);
        outcome.served_mb += served;
        if head.size <= SIZE_EPS {
            let finished = server.queues[app].pop_front().expect("head exists");
            outcome.completed.push(finished);
        } else {
            break;
        }
    }

    if outcome.served_mb <= 0.0 {
        return outcome;
    }
    server.remaining_capacity = capacity;
    server.stats[app].queue_len_mb = if server.queues[app].is_empty() {
        0.0
    } else {
        (server.stats[app].queue_len_mb - outcome.served_mb).max(0.0)
    };
    server.served_this_slot[app] += outcome.served_mb;
    server.last_served_app = Some(app);
    outcome
}

/// Runs the M-LWDF serve loop for one slot on one server, recomputing the
/// argmax between dispatches.
///
/// Priorities are re-evaluated after every [`serve_one`] call. As capacity
/// shrinks, every *other* application's priority can only fall, so the
/// previous argmax remains valid while its own refreshed priority strictly
/// exceeds the runner-up's stale value. That fast path yields the exact
/// same service sequence as a full rescan per dispatch (verified by test).
pub fn serve_slot_mlwdf(
    server: &mut ServerState,
    tokens: &mut [f64],
    borrow_bonus: &[f64],
    slot_duration: f64,
    model: &ServiceModel,
) {
    'rescan: loop {
        // Full scan: current argmax plus the runner-up's priority.
        let mut best: Option<(AppId, f64)> = None;
        let mut runner_up = f64::NEG_INFINITY;
        for app in 0..server.stats.len() {
            if !eligible(server, tokens, app) {
                continue;
            }
            let c = capacity_share(tokens[app], server.remaining_capacity, slot_duration);
            let p = priority(server.gamma[app], server.stats[app].queue_len_mb, c, borrow_bonus[app]);
            match best {
                Some((_, bp)) if bp >= p => {
                    if p > runner_up {
                        runner_up = p;
                    }
                }
                Some((_, bp)) => {
                    runner_up = bp;
                    best = Some((app, p));
                }
                None => best = Some((app, p)),
            }
        }
        let Some((app, _)) = best else {
            return;
        };

        loop {
            let outcome = serve_one(server, &mut tokens[app], app, model);
            if outcome.served_mb <= 0.0 {
                if server.queues[app].is_empty() {
                    // Stale queue stats; serve_one resynced them. Reselect.
                    continue 'rescan;
                }
                // Remaining capacity cannot cover another dispatch.
                return;
            }
            if !eligible(server, tokens, app) {
                continue 'rescan;
            }
            let c = capacity_share(tokens[app], server.remaining_capacity, slot_duration);
            let p = priority(server.gamma[app], server.stats[app].queue_len_mb, c, borrow_bonus[app]);
            if p <= runner_up || p.is_nan() {
                continue 'rescan;
            }
        }
    }
}

/// Naive reference loop: full argmax rescan before every chunk. Used by
/// tests to pin the fast path to the exact M-LWDF service sequence.
pub fn serve_slot_mlwdf_reference(
    server: &mut ServerState,
    tokens: &mut [f64],
    borrow_bonus: &[f64],
    slot_duration: f64,
    model: &ServiceModel,
) {
    while let Some(app) = mlwdf_select(server, tokens, borrow_bonus, slot_duration) {
        if serve_one(server, &mut tokens[app], app, model).served_mb <= 0.0 {
            if server.queues[app].is_empty() {
                continue;
            }
            return;
        }
    }
}

/// Traditional baseline: serve the unified FIFO in arrival order up to the
/// physical limit, ignoring tokens entirely. The cost rule is the same as
/// in the scheduled path — `per_request_mb` per request, `per_switch_mb`
/// whenever the served application changes — but arrival order interleaves
/// applications, so there is nothing to amortize the switches over.
pub fn serve_slot_fifo(server: &mut ServerState, model: &ServiceModel) {
    loop {
        let Some(head) = server.fifo.front_mut() else {
            return;
        };
        let app = head.app_id;
        let after_overhead = server.remaining_capacity
            - model.switch_cost(server.last_served_app, app)
            - model.per_request_mb;
        let served = head.size.min(after_overhead);
        if served <= 0.0 {
            return;
        }
        head.size -= served;
        if head.size <= SIZE_EPS {
            server.fifo.pop_front();
        }
        server.remaining_capacity = (after_overhead - served).max(0.0);
        server.stats[app].queue_len_mb = (server.stats[app].queue_len_mb - served).max(0.0);
        if server.fifo.is_empty() {
            server.stats.iter_mut().for_each(|s| s.queue_len_mb = 0.0);
        }
        server.served_this_slot[app] += served;
        server.last_served_app = Some(app);
    }
}
