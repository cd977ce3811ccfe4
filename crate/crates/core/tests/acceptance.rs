//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values. Run with `cargo test --test acceptance -- --nocapture`
//! to see them.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};

use sdqos_core::control_plane::{borrowing_round, enforce_policies};
use sdqos_core::data_plane::{
    compute_gamma, mlwdf_select, serve_one, ServerState, ServiceModel,
};
use sdqos_core::domain::{ApplicationSpec, Policy};
use sdqos_core::engine::run_unbalanced_example;
use sdqos_core::parallel::run_simulation_parallel;
use sdqos_core::{
    run_simulation, run_sweep, IoKind, IoRequest, Scenario, SimConfig, SimReport, ThresholdMode,
    TokenLedger, SizeModel, WorkloadSpec,
};

fn app(i: usize, bw: f64, delta: f64) -> ApplicationSpec {
    ApplicationSpec {
        app_id: i,
        desired_bw: bw,
        delta,
        target_delay: 1.0,
        policy: Policy::default(),
    }
}

// ── Shared fixtures ─────────────────────────────────────────────────────────

/// The evaluation-scale fixture: 20 applications on 10 shared servers, a
/// skewed normal-distribution workload at offered load factor 1.0, and the
/// default service-cost model.
fn eval_config(scenario: Scenario, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::new(scenario, seed);
    cfg.applications = (0..20)
        .map(|i| app(i, 5.0 + i as f64 * 0.25, 0.01 + 0.01 * (i % 5) as f64))
        .collect();
    cfg.servers = vec![16.2; 10];
    cfg.num_apps = 20;
    cfg.num_servers = 10;
    cfg.num_nodes = 40;
    cfg.num_slots = 1000;
    cfg.warmup_slots = 10;
    cfg.workload = WorkloadSpec {
        model: SizeModel::RandomNormal {
            mean_mb: 0.064,
            stddev_mb: 0.032,
        },
        offered_load_factor: 1.0,
        imbalance: 0.4,
    };
    cfg
}

/// Fixed-size sweep fixture: same shape, scaled so the 4 KB runs stay fast,
/// demand at ~97% of aggregate capacity.
fn sweep_config(scenario: Scenario) -> SimConfig {
    let mut cfg = SimConfig::new(scenario, 1);
    cfg.applications = (0..20)
        .map(|i| app(i, 2.42, 0.01 + 0.01 * (i % 5) as f64))
        .collect();
    cfg.servers = vec![5.0; 10];
    cfg.num_apps = 20;
    cfg.num_servers = 10;
    cfg.num_nodes = 40;
    cfg.num_slots = 200;
    cfg.warmup_slots = 10;
    cfg.workload = WorkloadSpec {
        model: SizeModel::FixedSize { size_mb: 0.00390625 },
        offered_load_factor: 1.0,
        imbalance: 0.4,
    };
    cfg
}

const SWEEP_SIZES_MB: [f64; 3] = [0.00390625, 0.0078125, 0.0625];

struct EvalBatch {
    /// `reports[seed]` holds (Borrowing, NoBorrowing, Traditional).
    reports: Vec<[SimReport; 3]>,
    elapsed: Duration,
}

fn run_jobs<T: Send, J: Sync, F: Fn(&J) -> T + Sync>(jobs: &[J], worker: F) -> Vec<T> {
    let mut results: Vec<Option<T>> = Vec::new();
    results.resize_with(jobs.len(), || None);
    let chunk = jobs.len().div_ceil(2);
    std::thread::scope(|scope| {
        for (job_chunk, out_chunk) in jobs.chunks(chunk).zip(results.chunks_mut(chunk)) {
            scope.spawn(|| {
                for (job, out) in job_chunk.iter().zip(out_chunk.iter_mut()) {
                    *out = Some(worker(job));
                }
            });
        }
    });
    results.into_iter().map(|r| r.unwrap()).collect()
}

fn eval_batch() -> &'static EvalBatch {
    static BATCH: OnceLock<EvalBatch> = OnceLock::new();
    BATCH.get_or_init(|| {
        let start = Instant::now();
        let seeds: Vec<u64> = (0..20).collect();
        let reports = run_jobs(&seeds, |&seed| {
            [
                run_simulation(eval_config(Scenario::Borrowing, seed)).unwrap(),
                run_simulation(eval_config(Scenario::NoBorrowing, seed)).unwrap(),
                run_simulation(eval_config(Scenario::Traditional, seed)).unwrap(),
            ]
        });
        EvalBatch {
            reports,
            elapsed: start.elapsed(),
        }
    })
}

struct SweepBatch {
    /// `reports[scenario_index][size_index]`, scenarios in `Scenario::ALL`
    /// order, sizes in `SWEEP_SIZES_MB` order.
    reports: Vec<Vec<SimReport>>,
    elapsed: Duration,
}

fn sweep_batch() -> &'static SweepBatch {
    static BATCH: OnceLock<SweepBatch> = OnceLock::new();
    BATCH.get_or_init(|| {
        let start = Instant::now();
        let reports = run_jobs(&Scenario::ALL, |&scenario| {
            run_sweep(&sweep_config(scenario), &SWEEP_SIZES_MB).unwrap()
        });
        SweepBatch {
            reports,
            elapsed: start.elapsed(),
        }
    })
}

// ── Criterion 1: canonical micro-example, exact ─────────────────────────────

#[test]
fn c1_canonical_micro_example_exact() {
    let start = Instant::now();
    let outcome = run_unbalanced_example().unwrap();
    let elapsed = start.elapsed();
    assert_eq!(outcome.without_borrowing_mb, 250.0);
    assert_eq!(outcome.with_borrowing_mb, 300.0);
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    println!(
        "criterion 1: PASS — unbalanced demand [150,100,50] MB on 3x500 MB/s servers served \
         {} MB without borrowing, {} MB with borrowing (exact), in {elapsed:?}",
        outcome.without_borrowing_mb, outcome.with_borrowing_mb
    );
}

// ── Criterion 2: scenario ordering over a 20-seed batch ─────────────────────

#[test]
fn c2_scenario_ordering_over_seed_batch() {
    let batch = eval_batch();
    let mut gap_sum = 0.0;
    for (seed, [b, nb, t]) in batch.reports.iter().enumerate() {
        assert!(
            b.allocated_pct >= nb.allocated_pct,
            "seed {seed}: borrowing {} < no_borrowing {}",
            b.allocated_pct,
            nb.allocated_pct
        );
        assert!(
            nb.allocated_pct >= t.allocated_pct,
            "seed {seed}: no_borrowing {} < traditional {}",
            nb.allocated_pct,
            t.allocated_pct
        );
        gap_sum += b.allocated_pct - t.allocated_pct;
    }
    let mean_gap = gap_sum / batch.reports.len() as f64;
    assert!(mean_gap >= 5.0, "mean borrowing-traditional gap {mean_gap}");
    assert!(
        batch.elapsed < Duration::from_secs(30),
        "batch took {:?}",
        batch.elapsed
    );
    let mean = |k: usize| {
        batch.reports.iter().map(|r| r[k].allocated_pct).sum::<f64>() / batch.reports.len() as f64
    };
    println!(
        "criterion 2: PASS — 20 seeds ordered borrowing ≥ no_borrowing ≥ traditional \
         (means {:.2}% / {:.2}% / {:.2}%), mean borrowing-traditional gap {:.2} pts ≥ 5, \
         batch in {:?} < 30 s",
        mean(0),
        mean(1),
        mean(2),
        mean_gap,
        batch.elapsed
    );
}

// ── Criterion 3: I/O-size monotonicity ──────────────────────────────────────

#[test]
fn c3_io_size_monotonicity() {
    let batch = sweep_batch();
    let borrowing: Vec<f64> = batch.reports[0].iter().map(|r| r.allocated_pct).collect();
    assert!(
        borrowing[0] < borrowing[1] && borrowing[1] < borrowing[2],
        "borrowing not strictly increasing: {borrowing:?}"
    );
    let traditional_4k = batch.reports[2][0].allocated_pct;
    let gap = borrowing[0] - traditional_4k;
    assert!(gap >= 20.0, "4 KB borrowing-traditional gap {gap}");
    assert!(
        batch.elapsed < Duration::from_secs(60),
        "sweep took {:?}",
        batch.elapsed
    );
    println!(
        "criterion 3: PASS — borrowing allocated_pct strictly increasing over 4/8/64 KB \
         ({:.2}% < {:.2}% < {:.2}%), 4 KB borrowing beats traditional by {:.2} pts ≥ 20, \
         sweep in {:?} < 60 s",
        borrowing[0], borrowing[1], borrowing[2], gap, batch.elapsed
    );
}

// ── Criterion 4: token scenarios never exceed the desired bandwidth ─────────

#[test]
fn c4_never_exceed_desired() {
    let mut checked = 0usize;
    let mut verify = |report: &SimReport| {
        for (a, d) in report
            .per_app_allocated_bw
            .iter()
            .zip(&report.per_app_desired_bw)
        {
            assert!(
                a <= d,
                "{}: allocated {a} exceeds desired {d}",
                report.scenario
            );
            checked += 1;
        }
    };
    for reports in &eval_batch().reports {
        verify(&reports[0]);
        verify(&reports[1]);
    }
    for report in batch_token_scenarios(sweep_batch()) {
        verify(report);
    }
    println!(
        "criterion 4: PASS — allocated ≤ desired for every app in every borrowing/no-borrowing \
         run of criteria 2-3 ({checked} app-run pairs, zero tolerance)"
    );
}

fn batch_token_scenarios(batch: &SweepBatch) -> impl Iterator<Item = &SimReport> {
    batch.reports[0].iter().chain(batch.reports[1].iter())
}

// ── Criterion 5: borrowing vs. exhaustive oracle on small instances ─────────

/// Maximum of `sum(min(assignment_s, demand_s))` over every integer
/// assignment of `total` tokens to servers — pure enumeration, independent
/// of the borrowing implementation.
fn oracle_best(total: i64, demands: &[i64]) -> i64 {
    fn rec(rem: i64, idx: usize, demands: &[i64], acc: i64, best: &mut i64) {
        if idx + 1 == demands.len() {
            let v = acc + rem.min(demands[idx]);
            if v > *best {
                *best = v;
            }
            return;
        }
        for b in 0..=rem {
            rec(rem - b, idx + 1, demands, acc + b.min(demands[idx]), best);
        }
    }
    let mut best = 0;
    rec(total, 0, demands, 0, &mut best);
    best
}

/// Runs the borrowing pass on a single-application ledger and reports how
/// many megabytes the final token placement can serve.
fn borrowing_servable(tokens: &[i64], demands: &[i64], case: u64) -> f64 {
    let num_servers = tokens.len();
    let mut ledger = TokenLedger::new(1, num_servers, 1.0);
    for (s, &t) in tokens.iter().enumerate() {
        ledger.balances[s][0] = t as f64;
    }
    let demand_matrix: Vec<Vec<f64>> = demands.iter().map(|&d| vec![d as f64]).collect();
    let policies = enforce_policies(&[app(0, 1.0, 0.05)]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5EED ^ case);
    borrowing_round(
        &mut ledger,
        &demand_matrix,
        &policies,
        &[0.0],
        ThresholdMode::Cumulative,
        0,
        &mut rng,
    );
    (0..num_servers)
        .map(|s| ledger.balances[s][0].min(demands[s] as f64))
        .sum()
}

struct OracleStats {
    cases: u64,
    exact: u64,
    single_deficit: u64,
    worst_ratio: f64,
}

fn check_instance(tokens: &[i64], demands: &[i64], stats: &mut OracleStats) {
    let total: i64 = tokens.iter().sum();
    let best = oracle_best(total, demands);
    let got = borrowing_servable(tokens, demands, stats.cases);
    stats.cases += 1;

    let deficits = tokens
        .iter()
        .zip(demands)
        .filter(|(a, d)| *a < *d)
        .count();
    if best == 0 {
        assert_eq!(got, 0.0);
        stats.exact += 1;
        return;
    }
    let ratio = got / best as f64;
    stats.worst_ratio = stats.worst_ratio.min(ratio);
    assert!(
        ratio >= 0.95,
        "tokens {tokens:?} demands {demands:?}: got {got}, optimum {best}"
    );
    if (got - best as f64).abs() < 1e-9 {
        stats.exact += 1;
    }
    if deficits == 1 {
        stats.single_deficit += 1;
        assert_eq!(
            got, best as f64,
            "single-deficit instance must reach the optimum: tokens {tokens:?} demands {demands:?}"
        );
    }
}

#[test]
fn c5_oracle_equivalence_on_small_instances() {
    let start = Instant::now();
    let mut stats = OracleStats {
        cases: 0,
        exact: 0,
        single_deficit: 0,
        worst_ratio: 1.0,
    };

    // Two servers: the full grid of tokens/demands in 0..=10.
    for a0 in 0..=10i64 {
        for a1 in 0..=10i64 {
            for d0 in 0..=10i64 {
                for d1 in 0..=10i64 {
                    check_instance(&[a0, a1], &[d0, d1], &mut stats);
                }
            }
        }
    }

    // Three servers: the full grid of tokens/demands in 0..=10.
    for a0 in 0..=10i64 {
        for a1 in 0..=10i64 {
            for a2 in 0..=10i64 {
                for d0 in 0..=10i64 {
                    for d1 in 0..=10i64 {
                        for d2 in 0..=10i64 {
                            check_instance(&[a0, a1, a2], &[d0, d1, d2], &mut stats);
                        }
                    }
                }
            }
        }
    }

    // Four servers: coarse grid plus a seeded sample of the full 0..=10 grid.
    const V4: [i64; 4] = [0, 2, 5, 10];
    for &a0 in &V4 {
        for &a1 in &V4 {
            for &a2 in &V4 {
                for &a3 in &V4 {
                    for &d0 in &V4 {
                        for &d1 in &V4 {
                            for &d2 in &V4 {
                                for &d3 in &V4 {
                                    check_instance(&[a0, a1, a2, a3], &[d0, d1, d2, d3], &mut stats);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
    for _ in 0..4000 {
        let tokens: Vec<i64> = (0..4).map(|_| rng.random_range(0..=10)).collect();
        let demands: Vec<i64> = (0..4).map(|_| rng.random_range(0..=10)).collect();
        check_instance(&tokens, &demands, &mut stats);
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "criterion 5: PASS — {} instances enumerated, worst served/optimum ratio {:.4} ≥ 0.95, \
         optimum reached on {} ({} single-deficit instances all exact), in {elapsed:?} < 60 s",
        stats.cases, stats.worst_ratio, stats.exact, stats.single_deficit
    );
}

// ── Criterion 6: invariant suite as property tests ──────────────────────────

fn tiny_config(scenario: Scenario, seed: u64, apps: usize, servers: usize) -> SimConfig {
    let mut cfg = SimConfig::new(scenario, seed);
    cfg.applications = (0..apps)
        .map(|i| app(i, 3.0 + i as f64, 0.02 + 0.01 * i as f64))
        .collect();
    cfg.servers = vec![6.0; servers];
    cfg.num_apps = apps;
    cfg.num_servers = servers;
    cfg.num_nodes = 2 * apps;
    cfg.num_slots = 25;
    cfg.warmup_slots = 3;
    cfg.workload = WorkloadSpec {
        model: SizeModel::RandomNormal {
            mean_mb: 0.3,
            stddev_mb: 0.2,
        },
        offered_load_factor: 1.2,
        imbalance: 0.7,
    };
    cfg
}

fn prop_runner(cases: u32) -> TestRunner {
    TestRunner::new(PropConfig {
        cases,
        failure_persistence: None,
        ..PropConfig::default()
    })
}

/// Token conservation, lender floors, and transfer-count bounds for the
/// borrowing pass over randomized ledgers, demands, and policies.
fn prop_token_conservation(cases: u32) {
    let strategy = (
        2..5usize,                                     // servers
        1..4usize,                                     // apps
        proptest::collection::vec(0.0f64..20.0, 4 * 5), // balances
        proptest::collection::vec(0.0f64..20.0, 4 * 5), // demands
        proptest::collection::vec(proptest::bool::ANY, 4), // borrow_allowed
        proptest::collection::vec(0.0f64..1.2, 4),     // satisfaction
        proptest::bool::ANY,                           // threshold mode
        proptest::num::u64::ANY,                       // rng seed
    );
    prop_runner(cases)
        .run(
            &strategy,
            |(servers, apps, balances, demands, allowed, satisfaction, instantaneous, seed)| {
                let mut ledger = TokenLedger::new(apps, servers, 1.0);
                let mut demand_matrix = vec![vec![0.0; apps]; servers];
                for s in 0..servers {
                    for a in 0..apps {
                        ledger.balances[s][a] = balances[s * apps + a];
                        demand_matrix[s][a] = demands[s * apps + a];
                    }
                }
                let specs: Vec<ApplicationSpec> = (0..apps)
                    .map(|i| {
                        let mut sp = app(i, 5.0, 0.05);
                        sp.policy.borrow_allowed = allowed[i];
                        if allowed[i] && i % 2 == 0 {
                            sp.policy.borrow_threshold = Some(0.8);
                        }
                        sp
                    })
                    .collect();
                let policies = enforce_policies(&specs);
                let before: Vec<f64> = (0..apps).map(|a| ledger.total_for_app(a)).collect();
                let snapshot = ledger.balances.clone();
                let mode = if instantaneous {
                    ThresholdMode::Instantaneous
                } else {
                    ThresholdMode::Cumulative
                };
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let outcome = borrowing_round(
                    &mut ledger,
                    &demand_matrix,
                    &policies,
                    &satisfaction[..apps],
                    mode,
                    0,
                    &mut rng,
                );

                for (a, &total_before) in before.iter().enumerate() {
                    let after = ledger.total_for_app(a);
                    prop_assert!(
                        (after - total_before).abs() <= 1e-9 * (1.0 + total_before),
                        "app {a}: total {total_before} -> {after}"
                    );
                }
                for s in 0..servers {
                    for a in 0..apps {
                        let b_before = snapshot[s][a];
                        let b_after = ledger.balances[s][a];
                        prop_assert!(b_after >= -1e-12);
                        let demand = demand_matrix[s][a];
                        if b_before > demand {
                            // Lenders keep at least their own demand.
                            prop_assert!(b_after >= demand - 1e-9);
                        } else {
                            // Non-lenders only ever receive.
                            prop_assert!(b_after >= b_before - 1e-9);
                        }
                    }
                }
                prop_assert!(outcome.records.len() <= apps * servers * servers);
                for record in &outcome.records {
                    prop_assert!(record.amount > 0.0);
                    prop_assert!(record.from_server != record.to_server);
                }
                Ok(())
            },
        )
        .unwrap();
}

/// Per-server capacity caps and zero-overhead work conservation over
/// randomized engine runs in all three scenarios.
fn prop_capacity_caps(cases: u32) {
    let strategy = (
        proptest::num::u64::ANY,
        2..4usize,
        2..4usize,
        0..3usize,
        proptest::bool::ANY, // zero overheads?
    );
    prop_runner(cases)
        .run(&strategy, |(seed, apps, servers, scenario_idx, ideal)| {
            let scenario = Scenario::ALL[scenario_idx];
            let mut cfg = tiny_config(scenario, seed, apps, servers);
            cfg.record_traces = true;
            if ideal {
                cfg.request_overhead_mb = 0.0;
                cfg.switch_overhead_mb = 0.0;
            }
            let mut engine = sdqos_core::Engine::new(cfg.clone()).unwrap();
            let mut traces = Vec::new();
            for _ in 0..cfg.warmup_slots + cfg.num_slots {
                traces.push(engine.run_slot().unwrap());

                // Work conservation, exact at zero overhead in the token
                // scenarios: a server stops only out of capacity, or with
                // every application out of queue or out of tokens.
                if ideal && scenario != Scenario::Traditional {
                    for s in 0..cfg.num_servers {
                        let server = engine.server(s);
                        if server.remaining_capacity > 1e-9 {
                            for a in 0..cfg.num_apps {
                                let starved = server.stats[a].queue_len_mb <= 1e-9
                                    || engine.token_ledger().balance(a, s) <= 1e-9;
                                prop_assert!(
                                    starved,
                                    "server {s} idle with app {a} backlogged and funded"
                                );
                            }
                        }
                    }
                }
            }
            for trace in &traces {
                for (s, served) in trace.per_server_served.iter().enumerate() {
                    prop_assert!(
                        *served <= cfg.servers[s] * cfg.slot_duration + 1e-9,
                        "slot {} server {s} served {served}",
                        trace.slot
                    );
                }
                let app_sum: f64 = trace.per_app_served.iter().sum();
                let server_sum: f64 = trace.per_server_served.iter().sum();
                prop_assert!((app_sum - server_sum).abs() <= 1e-6 * (1.0 + app_sum));
            }
            Ok(())
        })
        .unwrap();
}

/// FIFO within an application: requests of one app on one server complete in
/// arrival order (node_id doubles as a per-app sequence tag here).
fn prop_fifo_within_app(cases: u32) {
    let strategy = (
        proptest::num::u64::ANY,
        1..4usize,
        proptest::collection::vec(0.05f64..2.0, 1..40),
    );
    prop_runner(cases)
        .run(&strategy, |(seed, apps, sizes)| {
            let specs: Vec<ApplicationSpec> =
                (0..apps).map(|i| app(i, 5.0, 0.05)).collect();
            let mut server = ServerState::new(0, 4.0, &specs);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut seq = vec![0usize; apps];
            let mut requests = Vec::new();
            for size in &sizes {
                let a = rng.random_range(0..apps);
                requests.push(IoRequest {
                    app_id: a,
                    node_id: seq[a],
                    server_id: 0,
                    size: *size,
                    kind: IoKind::Write,
                    arrival_slot: 0,
                });
                seq[a] += 1;
            }
            server.classify(requests).unwrap();
            for (a, spec) in specs.iter().enumerate() {
                server.set_gamma(a, compute_gamma(spec, 5.0).unwrap());
            }

            let model = ServiceModel {
                per_request_mb: 0.0005,
                per_switch_mb: 0.02,
                dispatch_quantum_mb: 1.0,
            };
            let bonus = vec![0.0; apps];
            let mut completions: Vec<Vec<usize>> = vec![Vec::new(); apps];
            // Several slots of random token grants until everything drains.
            for _ in 0..64 {
                server.begin_slot(1.0);
                let mut tokens: Vec<f64> =
                    (0..apps).map(|_| rng.random_range(0.0..3.0)).collect();
                while let Some(a) = mlwdf_select(&server, &tokens, &bonus, 1.0) {
                    let out = serve_one(&mut server, &mut tokens[a], a, &model);
                    for done in &out.completed {
                        completions[done.app_id].push(done.node_id);
                    }
                    if out.served_mb <= 0.0 {
                        if server.queues[a].is_empty() {
                            continue;
                        }
                        break;
                    }
                }
            }
            for (a, order) in completions.iter().enumerate() {
                prop_assert!(
                    order.windows(2).all(|w| w[0] < w[1]),
                    "app {a} completions out of order: {order:?}"
                );
            }
            Ok(())
        })
        .unwrap();
}

/// Scaling every application's gamma by the same positive constant never
/// changes the M-LWDF selection when no tokens were borrowed.
fn prop_argmax_scale_invariance(cases: u32) {
    let strategy = (
        proptest::num::u64::ANY,
        1..6usize,
        1e-3f64..1e3,
    );
    prop_runner(cases)
        .run(&strategy, |(seed, apps, scale)| {
            let specs: Vec<ApplicationSpec> = (0..apps).map(|i| app(i, 5.0, 0.05)).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut server = ServerState::new(0, 50.0, &specs);
            server.begin_slot(1.0);
            let mut requests = Vec::new();
            for a in 0..apps {
                for _ in 0..rng.random_range(0..4) {
                    requests.push(IoRequest {
                        app_id: a,
                        node_id: 0,
                        server_id: 0,
                        size: rng.random_range(0.1..5.0),
                        kind: IoKind::Read,
                        arrival_slot: 0,
                    });
                }
            }
            server.classify(requests).unwrap();
            let tokens: Vec<f64> = (0..apps).map(|_| rng.random_range(0.0..8.0)).collect();
            let bonus = vec![0.0; apps];
            let gammas: Vec<f64> = (0..apps).map(|_| rng.random_range(0.01..5.0)).collect();
            for (a, &gamma) in gammas.iter().enumerate() {
                server.set_gamma(a, gamma);
            }
            let baseline = mlwdf_select(&server, &tokens, &bonus, 1.0);
            for (a, &gamma) in gammas.iter().enumerate() {
                server.set_gamma(a, gamma * scale);
            }
            let scaled = mlwdf_select(&server, &tokens, &bonus, 1.0);
            prop_assert_eq!(baseline, scaled);
            Ok(())
        })
        .unwrap();
}

/// Bit-identical reports across repeated runs and across serial/parallel
/// execution.
fn determinism_checks() -> usize {
    let mut cases = 0;
    for seed in 0..6u64 {
        for scenario in Scenario::ALL {
            let cfg = tiny_config(scenario, seed, 3, 3);
            let first = run_simulation(cfg.clone()).unwrap();
            let second = run_simulation(cfg.clone()).unwrap();
            assert_eq!(first, second, "repeat run diverged ({scenario}, {seed})");
            for threads in [2, 3] {
                let parallel = run_simulation_parallel(cfg.clone(), threads).unwrap();
                assert_eq!(
                    first, parallel,
                    "parallel({threads}) diverged ({scenario}, {seed})"
                );
            }
            cases += 1;
        }
    }
    // A larger skewed instance through the evaluation fixture.
    let mut cfg = eval_config(Scenario::Borrowing, 3);
    cfg.num_slots = 60;
    let serial = run_simulation(cfg.clone()).unwrap();
    let parallel = run_simulation_parallel(cfg, 2).unwrap();
    assert_eq!(serial, parallel);
    cases + 1
}

/// Borrowing never serves less than no-borrowing on single-application
/// unbalanced instances (the canonical class), per seed.
fn prop_borrowing_monotone(cases: u32) {
    let strategy = (
        proptest::num::u64::ANY,
        2..5usize,
        proptest::collection::vec(0.0f64..30.0, 4),
    );
    prop_runner(cases)
        .run(&strategy, |(seed, servers, demands)| {
            let total_demand: f64 = demands[..servers].iter().sum();
            let run = |scenario: Scenario| {
                let mut cfg = SimConfig::new(scenario, seed);
                cfg.applications = vec![app(0, total_demand.max(0.001), 0.05)];
                cfg.servers = vec![100.0; servers];
                cfg.num_apps = 1;
                cfg.num_servers = servers;
                cfg.num_nodes = servers;
                cfg.num_slots = 1;
                cfg.warmup_slots = 0;
                cfg.request_overhead_mb = 0.0;
                cfg.switch_overhead_mb = 0.0;
                cfg.workload.offered_load_factor = 0.0;
                let mut engine = sdqos_core::Engine::new(cfg).unwrap();
                let requests: Vec<IoRequest> = demands[..servers]
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| **d > 0.0)
                    .map(|(s, d)| IoRequest {
                        app_id: 0,
                        node_id: s,
                        server_id: s,
                        size: *d,
                        kind: IoKind::Write,
                        arrival_slot: 0,
                    })
                    .collect();
                engine.run_slot_with_requests(requests).unwrap().total_served_mb()
            };
            let with = run(Scenario::Borrowing);
            let without = run(Scenario::NoBorrowing);
            prop_assert!(
                with >= without - 1e-9,
                "borrowing {with} < no-borrowing {without}"
            );
            Ok(())
        })
        .unwrap();
}

#[test]
fn c6_invariant_suite() {
    let start = Instant::now();
    prop_token_conservation(120);
    prop_capacity_caps(80);
    prop_fifo_within_app(80);
    prop_argmax_scale_invariance(120);
    prop_borrowing_monotone(100);
    let determinism_cases = determinism_checks();
    let total = 120 + 80 + 80 + 120 + 100 + determinism_cases;
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "criterion 6: PASS — {total} randomized cases: token conservation (120), capacity caps \
         (80), FIFO-within-app (80), argmax scale invariance (120), borrowing monotonicity \
         (100), determinism incl. serial/parallel ({determinism_cases}), in {elapsed:?} < 120 s"
    );
}

// ── Criterion 7: fair degradation on a saturated server ─────────────────────

#[test]
fn c7_fair_degradation() {
    // One server at 100 MB/s; two applications, each with 100 tokens and
    // 100 MB of demand. Service alternates quantum-sized dispatches, so the
    // served amounts differ by at most one service granule.
    let mut cfg = SimConfig::new(Scenario::NoBorrowing, 0);
    cfg.applications = vec![app(0, 100.0, 0.05), app(1, 100.0, 0.05)];
    cfg.servers = vec![100.0];
    cfg.num_apps = 2;
    cfg.num_servers = 1;
    cfg.num_nodes = 2;
    cfg.num_slots = 1;
    cfg.warmup_slots = 0;
    cfg.request_overhead_mb = 0.0;
    cfg.switch_overhead_mb = 0.0;
    cfg.workload = WorkloadSpec {
        model: SizeModel::FixedSize { size_mb: 1.0 },
        offered_load_factor: 1.0,
        imbalance: 0.0,
    };
    let granule = cfg.dispatch_quantum_mb;

    let mut engine = sdqos_core::Engine::new(cfg).unwrap();
    let trace = engine.run_slot().unwrap();
    let served = &trace.per_app_served;
    assert_eq!(trace.total_served_mb(), 100.0);
    assert!(
        (served[0] - served[1]).abs() <= granule,
        "served {served:?} differ by more than one granule"
    );
    println!(
        "criterion 7: PASS — saturated 100 MB/s server split {:.1}/{:.1} MB between two \
         100 MB/s-demand apps (difference ≤ {granule} MB granule, exact)",
        served[0], served[1]
    );
}
