//! The logically centralized controller: token rate generation, even traffic
//! shaping across servers, virtual token bucket refills, policy enforcement,
//! and the token borrowing algorithm.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{AppId, ApplicationSpec, Policy, ServerId, ThresholdMode, TokenLedger};

/// Token amounts below this are noise, not transfers.
const TOKEN_EPS: f64 = 1e-9;

/// Shaping granularity: shares are split in units of 0.001 token.
const MILLI: f64 = 1000.0;

/// The controller's per-slot token plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrantPlan {
    /// Tokens granted per application per slot.
    pub per_app_rate: Vec<f64>,
    /// `per_app_server_share[app][server]`; for each application the shares
    /// sum exactly (in 0.001-token units) to `per_app_rate[app]`.
    pub per_app_server_share: Vec<Vec<f64>>,
}

/// One token transfer performed by the borrowing algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct BorrowRecord {
    pub app_id: AppId,
    pub from_server: ServerId,
    pub to_server: ServerId,
    pub amount: f64,
    pub slot: u64,
}

/// Result of one borrowing pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BorrowOutcome {
    pub records: Vec<BorrowRecord>,
    /// Deficit (application, server) pairs skipped because policy forbade
    /// borrowing or the threshold gate was closed.
    pub denied: u64,
}

/// The parameters the rest of the pipeline actually uses for one
/// application, after applying its policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePolicy {
    /// Token generation rate in MB/s (rate cap override applied).
    pub rate: f64,
    pub borrow_allowed: bool,
    pub borrow_threshold: Option<f64>,
}

/// Resolves each application's effective rate, borrow permission, and
/// threshold. Pure function of the specs.
pub fn enforce_policies(specs: &[ApplicationSpec]) -> Vec<EffectivePolicy> {
    specs
        .iter()
        .map(|spec| EffectivePolicy {
            rate: spec.policy.rate_cap.unwrap_or(spec.desired_bw),
            borrow_allowed: spec.policy.borrow_allowed,
            borrow_threshold: spec.policy.borrow_threshold,
        })
        .collect()
}

/// Generates the per-application token rate: `(rate_cap | desired_bw) *
/// slot_duration` tokens per slot. Server shares are left empty until
/// [`shape_traffic`] runs.
pub fn generate_token_rates(specs: &[ApplicationSpec], slot_duration: f64) -> TokenGrantPlan {
    let per_app_rate = enforce_policies(specs)
        .iter()
        .map(|p| p.rate * slot_duration)
        .collect();
    TokenGrantPlan {
        per_app_rate,
        per_app_server_share: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeError(pub String);

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ShapeError {}

/// Evenly distributes each application's token rate across servers. The
/// split happens in integer 0.001-token units with any remainder going to
/// the lowest server ids, so the shares sum back to the rate exactly.
pub fn shape_traffic(plan: &mut TokenGrantPlan, num_servers: usize) -> Result<(), ShapeError> {
    if num_servers == 0 {
        return Err(ShapeError("cannot shape traffic across 0 servers".into()));
    }
    plan.per_app_server_share = plan
        .per_app_rate
        .iter()
        .map(|&rate| {
            let millis = libm::round(rate * MILLI) as i64;
            let base = millis / num_servers as i64;
            let remainder = millis % num_servers as i64;
            (0..num_servers as i64)
                .map(|s| (base + i64::from(s < remainder)) as f64 / MILLI)
                .collect()
        })
        .collect();
    Ok(())
}

/// Refills every bucket by its share, clamped at the bucket depth
/// (`bucket_depth_slots` slots' worth of share), and resets the
/// borrowed-token window.
pub fn refill_buckets(ledger: &mut TokenLedger, plan: &TokenGrantPlan) {
    let depth_slots = ledger.bucket_depth_slots;
    for (server, row) in ledger.balances.iter_mut().enumerate() {
        for (app, balance) in row.iter_mut().enumerate() {
            let share = plan.per_app_server_share[app][server];
            *balance = (*balance + share).min(share * depth_slots);
        }
    }
    for row in &mut ledger.borrowed_this_window {
        row.iter_mut().for_each(|b| *b = 0.0);
    }
}

/// Is this application currently allowed to borrow?
fn gate_open(
    policy: &EffectivePolicy,
    mode: ThresholdMode,
    cumulative_satisfaction: f64,
    assigned: f64,
    demand: f64,
) -> bool {
    if !policy.borrow_allowed {
        return false;
    }
    match policy.borrow_threshold {
        None => true,
        Some(thres) => match mode {
            ThresholdMode::Cumulative => cumulative_satisfaction < thres,
            ThresholdMode::Instantaneous => demand <= 0.0 || assigned / demand < thres,
        },
    }
}

/// Runs the borrowing algorithm over every (application, server) deficit.
///
/// For each application on each server, the deficit is `p = a - d` where `a`
/// is the assigned token balance and `d` the required tokens (the megabytes
/// currently enqueued). While `p < 0` the controller looks at the *other*
/// servers holding unused tokens for the same application (`u = a' - d' >
/// 0`), samples two of them uniformly (the single candidate is used
/// directly when only one remains), takes the one with the greater unused
/// count, and transfers `min(|p|, u)` — so a lender never drops below its
/// own demand and tokens are moved, never created. Sweeps repeat until a
/// full sweep moves nothing, bounded by `num_servers` sweeps.
///
/// `cumulative_satisfaction[app]` is the satisfied-bandwidth fraction of the
/// run so far, consulted by the `thres` policy gate in
/// [`ThresholdMode::Cumulative`].
pub fn borrowing_round(
    ledger: &mut TokenLedger,
    demands: &[Vec<f64>],
    policies: &[EffectivePolicy],
    cumulative_satisfaction: &[f64],
    mode: ThresholdMode,
    slot: u64,
    rng: &mut ChaCha8Rng,
) -> BorrowOutcome {
    let num_servers = ledger.num_servers();
    let num_apps = ledger.num_apps();
    let mut outcome = BorrowOutcome::default();
    let mut lenders: Vec<ServerId> = Vec::with_capacity(num_servers);

    for sweep in 0..num_servers {
        let mut moved = false;
        for app in 0..num_apps {
            for server in 0..num_servers {
                let demand = demands[server][app];
                let assigned = ledger.balances[server][app];
                let mut deficit = demand - assigned;
                if deficit <= TOKEN_EPS {
                    continue;
                }
                if !gate_open(
                    &policies[app],
                    mode,
                    cumulative_satisfaction[app],
                    assigned,
                    demand,
                ) {
                    if sweep == 0 {
                        outcome.denied += 1;
                    }
                    continue;
                }

                while deficit > TOKEN_EPS {
                    lenders.clear();
                    lenders.extend((0..num_servers).filter(|&other| {
                        other != server
                            && ledger.balances[other][app] - demands[other][app] > TOKEN_EPS
                    }));
                    if lenders.is_empty() {
                        break;
                    }
                    let pick = if lenders.len() == 1 {
                        lenders[0]
                    } else {
                        let i = rng.random_range(0..lenders.len());
                        let mut j = rng.random_range(0..lenders.len() - 1);
                        if j >= i {
                            j += 1;
                        }
                        let (a, b) = (lenders[i], lenders[j]);
                        let unused_a = ledger.balances[a][app] - demands[a][app];
                        let unused_b = ledger.balances[b][app] - demands[b][app];
                        // Greater unused count wins; ties toward the lower id.
                        if unused_b > unused_a || (unused_b == unused_a && b < a) {
                            b
                        } else {
                            a
                        }
                    };
                    let unused = ledger.balances[pick][app] - demands[pick][app];
                    let amount = deficit.min(unused);
                    ledger.balances[pick][app] -= amount;
                    ledger.balances[server][app] += amount;
                    ledger.borrowed_this_window[server][app] += amount;
                    deficit -= amount;
                    moved = true;
                    outcome.records.push(BorrowRecord {
                        app_id: app,
                        from_server: pick,
                        to_server: server,
                        amount,
                        slot,
                    });
                }
            }
        }
        if !moved {
            break;
        }
    }
    outcome
}

// ── Policy text syntax ──────────────────────────────────────────────────────
//
// Accepted in configuration files, case-insensitively and whitespace-
// tolerantly:
//
//   <app-1, rate=100 MB/s>
//   <app-2, borrow=FALSE>
//   <app-3, borrow=TRUE, thres=0.8>

/// A parsed policy line, to be merged onto the named application's policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDirective {
    pub app_id: AppId,
    pub rate_cap: Option<f64>,
    pub borrow: Option<bool>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyParseError(pub String);

impl fmt::Display for PolicyParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PolicyParseError {}

fn parse_error(text: &str, reason: &str) -> PolicyParseError {
    PolicyParseError(format!("policy \"{text}\": {reason}"))
}

/// Parses one angle-bracket policy string.
pub fn parse_policy(text: &str) -> Result<PolicyDirective, PolicyParseError> {
    let inner = text
        .trim()
        .strip_prefix('<')
        .and_then(|s| s.strip_suffix('>'))
        .ok_or_else(|| parse_error(text, "expected <...> form"))?;

    let mut parts = inner.split(',').map(str::trim);
    let head = parts
        .next()
        .ok_or_else(|| parse_error(text, "empty policy"))?;
    let head_lower = head.to_ascii_lowercase();
    let id_str = head_lower
        .strip_prefix("app-")
        .or_else(|| head_lower.strip_prefix("app "))
        .ok_or_else(|| parse_error(text, "expected app-<id> first"))?;
    let app_id: AppId = id_str
        .trim()
        .parse()
        .map_err(|_| parse_error(text, "invalid application id"))?;

    let mut directive = PolicyDirective {
        app_id,
        rate_cap: None,
        borrow: None,
        threshold: None,
    };

    for part in parts {
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| parse_error(text, "expected key=value"))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        match key.as_str() {
            "rate" => {
                let number = value
                    .to_ascii_lowercase()
                    .trim_end_matches("mb/s")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse_error(text, "invalid rate value"))?;
                if !number.is_finite() || number < 0.0 {
                    return Err(parse_error(text, "rate must be nonnegative"));
                }
                directive.rate_cap = Some(number);
            }
            "borrow" => {
                directive.borrow = Some(match value.to_ascii_lowercase().as_str() {
                    "true" => true,
                    "false" => false,
                    _ => return Err(parse_error(text, "borrow must be TRUE or FALSE")),
                });
            }
            "thres" => {
                let number = value
                    .parse::<f64>()
                    .map_err(|_| parse_error(text, "invalid thres value"))?;
                if !(0.0..=1.0).contains(&number) {
                    return Err(parse_error(text, "borrow_threshold out of [0,1]"));
                }
                directive.threshold = Some(number);
            }
            other => {
                return Err(parse_error(text, &format!("unknown key \"{other}\"")));
            }
        }
    }
    Ok(directive)
}

/// Merges parsed directives onto the application list.
pub fn apply_policy_directives(
    specs: &mut [ApplicationSpec],
    directives: &[PolicyDirective],
) -> Result<(), PolicyParseError> {
    for d in directives {
        let Some(spec) = specs.get_mut(d.app_id) else {
            return Err(PolicyParseError(format!(
                "policy names app-{} but only {} applications are configured",
                d.app_id,
                specs.len()
            )));
        };
        let policy: &mut Policy = &mut spec.policy;
        if let Some(rate) = d.rate_cap {
            policy.rate_cap = Some(rate);
        }
        if let Some(borrow) = d.borrow {
            policy.borrow_allowed = borrow;
            if !borrow {
                policy.borrow_threshold = None;
            }
        }
        if let Some(thres) = d.threshold {
            policy.borrow_threshold = Some(thres);
        }
    }
    Ok(())
}
