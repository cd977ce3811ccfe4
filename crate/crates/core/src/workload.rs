//! Synthetic I/O stream generation: normally distributed request sizes or
//! fixed-size microbenchmarks, with per-application skewed server targeting.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{
    ApplicationSpec, ConfigError, IoKind, IoRequest, MIN_REQUEST_MB,
};
use crate::rng::{derive_rng, STREAM_WORKLOAD};

/// How request sizes are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeModel {
    /// Sizes drawn from a normal distribution, truncated below at
    /// [`MIN_REQUEST_MB`].
    RandomNormal { mean_mb: f64, stddev_mb: f64 },
    /// Every request has the same size (e.g. 4 KB = 0.00390625 MB).
    FixedSize { size_mb: f64 },
}

/// Workload description for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub model: SizeModel,
    /// Ratio of each application's offered bandwidth to its desired
    /// bandwidth. 1.0 offers exactly the desired volume per slot.
    pub offered_load_factor: f64,
    /// Zipf-like skew (>= 0) controlling how unevenly an application's
    /// requests target servers. 0 targets servers in a strict round-robin
    /// (perfectly uniform); positive values draw from a power-law
    /// categorical, rotated per application so different applications
    /// stress different servers.
    pub imbalance: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        // The evaluation defaults: 64 KiB mean, half that as spread.
        Self {
            model: SizeModel::RandomNormal {
                mean_mb: 0.064,
                stddev_mb: 0.032,
            },
            offered_load_factor: 1.0,
            imbalance: 0.0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.model {
            SizeModel::RandomNormal { mean_mb, stddev_mb } => {
                if !mean_mb.is_finite() || mean_mb <= 0.0 {
                    return Err(ConfigError(format!(
                        "workload.mean_size must be positive, got {mean_mb}"
                    )));
                }
                if !stddev_mb.is_finite() || stddev_mb < 0.0 {
                    return Err(ConfigError(format!(
                        "workload.stddev_size must be nonnegative, got {stddev_mb}"
                    )));
                }
            }
            SizeModel::FixedSize { size_mb } => {
                if !size_mb.is_finite() || size_mb <= 0.0 {
                    return Err(ConfigError(format!(
                        "workload.fixed_size must be positive, got {size_mb}"
                    )));
                }
            }
        }
        if !self.offered_load_factor.is_finite() || self.offered_load_factor < 0.0 {
            return Err(ConfigError(
                "workload.offered_load_factor must be nonnegative".into(),
            ));
        }
        if !self.imbalance.is_finite() || self.imbalance < 0.0 {
            return Err(ConfigError(
                "workload.imbalance must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-server targeting weights for one application: server `s` gets weight
/// `(1 + rank)^-imbalance` with `rank = (s + app) % m`, so each application
/// favors a different server and the aggregate load stays roughly balanced.
pub fn server_weights(imbalance: f64, num_servers: usize, app: usize) -> Vec<f64> {
    (0..num_servers)
        .map(|s| {
            let rank = (s + app) % num_servers;
            libm::pow(1.0 + rank as f64, -imbalance)
        })
        .collect()
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    let total = acc;
    for v in &mut cdf {
        *v /= total;
    }
    cdf
}

fn pick_server<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u <= c).unwrap_or(cdf.len() - 1)
}

/// Generates one slot's worth of requests for every application.
///
/// Each application offers `desired_bw * offered_load_factor *
/// slot_duration` megabytes, exact up to one request granule (the final
/// request is trimmed to land on the target; a leftover smaller than
/// [`MIN_REQUEST_MB`] is dropped). Requests of different applications are
/// interleaved round-robin, modeling concurrent issue from many nodes, and
/// node ids are assigned round-robin within each application.
///
/// The stream is a pure function of `(spec, apps, seed, slot)`: identical
/// inputs produce the identical request list.
pub fn generate_slot_workload(
    spec: &WorkloadSpec,
    apps: &[ApplicationSpec],
    num_servers: usize,
    num_nodes: usize,
    slot_duration: f64,
    seed: u64,
    slot: u64,
) -> Vec<IoRequest> {
    let mut rng = derive_rng(seed, STREAM_WORKLOAD, slot);
    let round_robin = spec.imbalance == 0.0;
    let mut per_app: Vec<Vec<IoRequest>> = Vec::with_capacity(apps.len());

    for app in apps {
        let target = app.desired_bw * spec.offered_load_factor * slot_duration;
        let mut requests = Vec::new();
        let mut emit = |size: f64, k: usize, rng: &mut rand_chacha::ChaCha8Rng, cdf: &[f64]| {
            let server_id = if round_robin {
                (app.app_id + slot as usize + k) % num_servers
            } else {
                pick_server(cdf, rng)
            };
            requests.push(IoRequest {
                app_id: app.app_id,
                node_id: (app.app_id + k) % num_nodes,
                server_id,
                size,
                kind: if k.is_multiple_of(2) { IoKind::Read } else { IoKind::Write },
                arrival_slot: slot,
            });
        };
        let cdf = cumulative(&server_weights(spec.imbalance, num_servers, app.app_id));

        match spec.model {
            SizeModel::FixedSize { size_mb } => {
                let count = ((target / size_mb) + 1e-9) as u64;
                for k in 0..count {
                    emit(size_mb, k as usize, &mut rng, &cdf);
                }
            }
            SizeModel::RandomNormal { mean_mb, stddev_mb } => {
                let normal = if stddev_mb > 0.0 {
                    Some(Normal::new(mean_mb, stddev_mb).expect("validated parameters"))
                } else {
                    None
                };
                let mut remaining = target;
                let mut k = 0usize;
                while remaining >= MIN_REQUEST_MB {
                    let raw = match &normal {
                        Some(n) => n.sample(&mut rng).max(MIN_REQUEST_MB),
                        None => mean_mb,
                    };
                    let size = if raw < remaining { raw } else { remaining };
                    emit(size, k, &mut rng, &cdf);
                    remaining -= size;
                    k += 1;
                }
            }
        }
        per_app.push(requests);
    }

    interleave(per_app)
}

/// Round-robin merge preserving each application's internal order.
fn interleave(per_app: Vec<Vec<IoRequest>>) -> Vec<IoRequest> {
    let total: usize = per_app.iter().map(Vec::len).sum();
    let mut iters: Vec<_> = per_app.into_iter().map(Vec::into_iter).collect();
    let mut merged = Vec::with_capacity(total);
    loop {
        let mut any = false;
        for it in &mut iters {
            if let Some(r) = it.next() {
                merged.push(r);
                any = true;
            }
        }
        if !any {
            break;
        }
    }
    merged
}

/// The canonical unbalanced single-application micro-scenario: three
/// servers, one application demanding [150, 100, 50] MB (300 MB total) as
/// fixed 50 MB requests in one slot.
pub fn make_unbalanced_example() -> Vec<IoRequest> {
    let demands_mb = [150.0, 100.0, 50.0];
    const CHUNK: f64 = 50.0;
    let mut requests = Vec::new();
    let mut remaining: Vec<f64> = demands_mb.to_vec();
    let mut k = 0usize;
    loop {
        let mut emitted = false;
        for (server, rem) in remaining.iter_mut().enumerate() {
            if *rem > 0.0 {
                requests.push(IoRequest {
                    app_id: 0,
                    node_id: k % 3,
                    server_id: server,
                    size: CHUNK,
                    kind: IoKind::Read,
                    arrival_slot: 0,
                });
                *rem -= CHUNK;
                k += 1;
                emitted = true;
            }
        }
        if !emitted {
            break;
        }
    }
    requests
}
