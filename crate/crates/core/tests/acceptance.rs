//! One line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use learned_gc::harness::{
    compare_variants, median, simulate, verify_trace, write_epoch_csv, ComparisonTable,
    ExperimentConfig, MatrixSpec, RunResult, Threshold, UniformRandom, Variant,
};
use learned_gc::mdp::action_set;
use learned_gc::policy::{
    opt_action, q_update, select_action, LearnerConfig, QTable, SaturationInit,
};
use learned_gc::{run, GcAction, GcState, Heap, HeapConfig, SiteId, WorkloadKind, WorkloadSpec};
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const LEARNED: [Variant; 4] = [Variant::Q, Variant::Qp, Variant::Qps, Variant::Qpsi];
const MIB16: u64 = 16 * 1024 * 1024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn matrix(kind: WorkloadKind) -> ComparisonTable {
    let spec = MatrixSpec {
        workloads: vec![kind],
        variants: LEARNED.to_vec(),
        seeds: SEEDS.to_vec(),
    };
    let configs = spec.expand(&ExperimentConfig::default()).unwrap();
    compare_variants(&configs).unwrap()
}

fn cell(t: &ComparisonTable, kind: WorkloadKind, v: Variant) -> f64 {
    t.cell(kind, v).unwrap().median_improvement
}

fn criterion1() -> Outcome {
    let (mismatch, took) = timed(|| {
        let mut checked = 0;
        for seed in 0..100 {
            let heap = common::random_heap(1000 + seed, 1000);
            for g in 1..=3 {
                let mut h = heap.clone();
                let expected = common::oracle_garbage(&h, g);
                if common::collect_and_diff(&mut h, g) != expected {
                    return Err(format!("heap {seed} generation {g}"));
                }
                checked += 1;
            }
        }
        Ok(checked)
    });
    match mismatch {
        Ok(n) => outcome(
            took < Duration::from_secs(10),
            format!("{n} collections match the oracle in {took:.2?}"),
        ),
        Err(e) => outcome(false, format!("mismatch on {e}")),
    }
}

fn criterion2() -> Outcome {
    let (res, took) = timed(|| {
        let mut heap = Heap::new(HeapConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100_000 {
            // keep the heap bounded so the run stays fast
            if heap.len() > 1500 {
                common::drop_random_root(&mut heap, &mut rng);
            } else {
                common::random_mutation(&mut heap, &mut rng, 0.02);
            }
        }
        heap.check_consistency().map(|_| heap.len())
    });
    match res {
        Ok(n) => outcome(
            took < Duration::from_secs(5),
            format!("1e5 mutations, {n} live objects consistent, {took:.2?}"),
        ),
        Err(e) => outcome(false, e),
    }
}

fn criterion3() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 10_000,
        ..PropConfig::default()
    });
    let strategy = (
        -100.0f64..100.0,
        -1.0f64..1.0,
        -100.0f64..100.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
    );
    let general = runner.run(&strategy, |(q, r, next, alpha, gamma)| {
        let got = q_update(q, r, next, alpha, gamma);
        let want = q + alpha * (r + gamma * next - q);
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        let overwrite = q_update(q, r, 0.0, 1.0, gamma);
        assert!((overwrite - r).abs() <= 1e-12);
        let defaults = q_update(q, r, next, 0.1, 0.9999);
        assert!((defaults - (0.9 * q + 0.1 * (r + 0.9999 * next))).abs() <= 1e-12);
        Ok(())
    });
    outcome(
        general.is_ok(),
        format!("10000 cases within 1e-12: {general:?}"),
    )
}

fn collect_rate(prior: bool) -> f64 {
    let cfg = LearnerConfig {
        enable_prior: prior,
        ..LearnerConfig::default()
    };
    let mut table = QTable::new(3);
    let mut rng = ChaCha8Rng::seed_from_u64(if prior { 41 } else { 40 });
    let actions = action_set(3);
    let s = GcState {
        site: SiteId(1),
        mem_bin: 0,
    };
    let n = 1_000_000;
    let hits = (0..n)
        .filter(|_| select_action(&mut table, &s, &cfg, 1.0, &actions, None, &mut rng).is_collect())
        .count();
    hits as f64 / n as f64
}

fn criterion4() -> Outcome {
    let n = 1e6;
    let (rates, took) = timed(|| (collect_rate(false), collect_rate(true)));
    let check = |p: f64, got: f64| (got - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt();
    let pc = 1.0 / 700.0;
    outcome(
        check(0.75, rates.0) && check(pc, rates.1) && took < Duration::from_secs(10),
        format!(
            "no prior {:.5} (want 0.75), prior {:.6} (want {pc:.6}), {took:.2?}",
            rates.0, rates.1
        ),
    )
}

fn criterion5() -> Outcome {
    let init = SaturationInit {
        saturation_bin: 64,
        full_generation: 3,
        value: LearnerConfig::default().penalty_init,
    };
    let mut table = QTable::new(3);
    let actions = action_set(3);
    for site in 0..100 {
        let s = GcState {
            site: SiteId(site),
            mem_bin: 64,
        };
        let (a, _) = opt_action(&mut table, &s, &actions, Some(&init));
        let row = table.row(&s).unwrap();
        if a != GcAction::Collect(3) || row[..3] != [-100.0; 3] || row[3] != 0.0 {
            return outcome(false, format!("site {site}: {a} {row:?}"));
        }
    }
    outcome(
        true,
        "100 saturation states read -100 on nothing/cg1/cg2, choose cg3",
    )
}

fn criterion6(thresholds: &[(WorkloadKind, u64, u64)]) -> Outcome {
    let mut jobs = Vec::new();
    for &(kind, seed, m) in thresholds {
        for variant in Variant::ALL {
            jobs.push((kind, seed, m, variant));
        }
    }
    let failures: Vec<String> = jobs
        .par_iter()
        .filter_map(|&(kind, seed, m, variant)| {
            let cfg = ExperimentConfig {
                variant,
                seed,
                record_trace: true,
                workload: WorkloadSpec::of(kind),
                memory: learned_gc::harness::MemorySettings {
                    threshold_m: Threshold::Bytes(m),
                    ..Default::default()
                },
                ..Default::default()
            };
            let r = run(&cfg).unwrap();
            let trace = r.trace.as_ref().unwrap();
            let bound = m + r.max_event_bytes;
            if r.peak_live_bytes > bound {
                return Some(format!(
                    "{kind} {variant} {seed}: peak {} > {bound}",
                    r.peak_live_bytes
                ));
            }
            verify_trace(trace, 3)
                .err()
                .map(|e| format!("{kind} {variant} {seed}: {e}"))
        })
        .collect();
    outcome(
        failures.is_empty(),
        format!(
            "{} runs traced; {}",
            jobs.len(),
            failures.first().map_or("all within M + max event", |s| s)
        ),
    )
}

fn criterion7(t: &ComparisonTable, took: Duration) -> Outcome {
    let k = WorkloadKind::Lru;
    let v: Vec<f64> = LEARNED.iter().map(|&x| cell(t, k, x)).collect();
    let ordered = v.windows(2).all(|w| w[1] - w[0] >= -2.0);
    let pass = v[0] <= -50.0 && ordered && v[3] > 0.0 && took < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "q {:.2}%, qp {:.2}%, qps {:.2}%, qpsi {:.2}% in {took:.1?}",
            v[0], v[1], v[2], v[3]
        ),
    )
}

fn criterion8(t: &ComparisonTable, took: Duration) -> Outcome {
    let k = WorkloadKind::Webserver;
    let improvement = cell(t, k, Variant::Qpsi);
    let (mut learned_in, mut learned_all, mut uniform_in, mut uniform_all) = (0, 0, 0, 0);
    for seed in SEEDS {
        let r = t.run(k, Variant::Qpsi, seed).unwrap();
        learned_in += r.overlap.window_voluntary_collections;
        learned_all += r.overlap.voluntary_collections;
        let p = r.overlap.voluntary_collections as f64 / r.overlap.decision_points.max(1) as f64;
        let mut uniform = UniformRandom::new(p, GcAction::Collect(1), 1000 + seed);
        let u = simulate(
            &r.config,
            r.threshold_bytes,
            r.config.workload.build(seed),
            &mut uniform,
        )
        .unwrap();
        uniform_in += u.overlap.window_voluntary_collections;
        uniform_all += u.overlap.voluntary_collections;
    }
    let share = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (ls, us) = (
        share(learned_in, learned_all),
        share(uniform_in, uniform_all),
    );
    let pass = improvement > 0.0 && ls >= 2.0 * us && us > 0.0 && took < Duration::from_secs(180);
    outcome(
        pass,
        format!(
            "qpsi {improvement:.2}%; window share learned {ls:.3} ({learned_in}/{learned_all}) vs uniform {us:.3} ({uniform_in}/{uniform_all}) in {took:.1?}"
        ),
    )
}

fn criterion9(t: &ComparisonTable) -> Outcome {
    let k = WorkloadKind::Tx;
    let (q, qpsi) = (cell(t, k, Variant::Q), cell(t, k, Variant::Qpsi));
    outcome(
        qpsi >= -10.0 && qpsi > q,
        format!("qpsi {qpsi:.2}%, q {q:.2}%"),
    )
}

/// First epoch whose trailing 10-epoch median is within 10% of the median of
/// the last 20% of epochs.
fn convergence_epoch(r: &RunResult) -> (usize, usize) {
    let raw: Vec<f64> = r.epochs.iter().map(|e| e.raw_reward).collect();
    let n = raw.len();
    let target = median(&raw[n - n / 5..]);
    let hit = (10..=n)
        .find(|&end| (median(&raw[end - 10..end]) - target).abs() <= 0.1 * target)
        .map_or(n, |end| end - 1);
    (hit, n)
}

fn criterion10(t: &ComparisonTable) -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let (hit, n) = convergence_epoch(t.run(WorkloadKind::Lru, Variant::Qpsi, seed).unwrap());
        let frac = hit as f64 / n as f64;
        worst = worst.max(frac);
        parts.push(format!("{hit}/{n}"));
    }
    outcome(
        worst <= 0.4,
        format!("converged at epochs {} (limit 40%)", parts.join(", ")),
    )
}

fn criterion11(tables: &[&ComparisonTable]) -> Outcome {
    let largest = tables
        .iter()
        .flat_map(|t| t.runs.iter())
        .filter_map(|r| r.epochs.last().map(|e| e.table_bytes))
        .max()
        .unwrap_or(0);
    outcome(
        largest < MIB16,
        format!("largest final table {largest} bytes"),
    )
}

fn csv_bytes(r: &RunResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_epoch_csv(r, &mut buf).unwrap();
    buf
}

fn criterion12(tables: &[&ComparisonTable]) -> Outcome {
    let mut checked = 0;
    for t in tables {
        for variant in [Variant::Baseline, Variant::Q, Variant::Qpsi] {
            let first = t.run(t.workloads[0], variant, 3).unwrap();
            let again = run(&first.config).unwrap();
            let third = run(&first.config).unwrap();
            if csv_bytes(first) != csv_bytes(&again) || csv_bytes(&again) != csv_bytes(&third) {
                return outcome(
                    false,
                    format!("{} {variant} differs between reruns", t.workloads[0]),
                );
            }
            checked += 1;
        }
    }
    outcome(
        true,
        format!("{checked} configs rerun twice, CSVs byte-identical"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "mark-sweep oracle", criterion1()),
        (2, "refcount soundness", criterion2()),
        (3, "q-update identities", criterion3()),
        (4, "exploration distributions", criterion4()),
        (5, "saturation init", criterion5()),
    ];

    let (lru, lru_took) = timed(|| matrix(WorkloadKind::Lru));
    let (web, web_took) = timed(|| matrix(WorkloadKind::Webserver));
    let (tx, _) = timed(|| matrix(WorkloadKind::Tx));
    let thresholds: Vec<(WorkloadKind, u64, u64)> = [&lru, &web, &tx]
        .iter()
        .flat_map(|t| {
            SEEDS.iter().map(move |&s| {
                let r = t.run(t.workloads[0], Variant::Baseline, s).unwrap();
                (t.workloads[0], s, r.threshold_bytes)
            })
        })
        .collect();

    results.push((6, "threshold safety", criterion6(&thresholds)));
    results.push((7, "lru variant ordering", criterion7(&lru, lru_took)));
    results.push((8, "webserver overlap", criterion8(&web, web_took)));
    results.push((9, "tx difficulty", criterion9(&tx)));
    results.push((10, "lru convergence", criterion10(&lru)));
    results.push((11, "table footprint", criterion11(&[&lru, &web, &tx])));
    results.push((12, "determinism", criterion12(&[&lru, &web, &tx])));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
