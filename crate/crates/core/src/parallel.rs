//! Multi-threaded slot execution.
//!
//! The slot pipeline is sequential at control-plane barriers; only the
//! per-server serve loops run concurrently, and servers share no mutable
//! state once borrowing completes. Every per-server computation is the same
//! instruction sequence as in the serial engine, so a parallel run produces
//! a bit-identical report — verified by the test suite.

use crate::engine::{serve_shard, Engine, SimError, SimReport};
use crate::SimConfig;

/// Runs a full simulation with the per-server serve phase spread over
/// `num_threads` worker threads. `num_threads = 1` degenerates to the serial
/// path.
pub fn run_simulation_parallel(
    config: SimConfig,
    num_threads: usize,
) -> Result<SimReport, SimError> {
    let threads = num_threads.max(1);
    let mut engine = Engine::new(config)?;
    let total = engine.config().warmup_slots + engine.config().num_slots;
    for _ in 0..total {
        let requests = engine.generate_requests();
        engine.pre_serve(requests)?;
        {
            let (mut shards, params) = engine.serve_split();
            let chunk = shards.len().div_ceil(threads);
            std::thread::scope(|scope| {
                for piece in shards.chunks_mut(chunk) {
                    let params = &params;
                    scope.spawn(move || {
                        for shard in piece {
                            serve_shard(shard, params);
                        }
                    });
                }
            });
        }
        engine.finish_slot()?;
    }
    Ok(engine.report())
}
