use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ExperimentConfig, Threshold, Variant};
use crate::error::{ConfigError, SimError};
use crate::heap::{Heap, HeapError, ObjectId, SiteId, Ticks};
use crate::mdp::{encode_state, threshold_breached, GcAction, GcState, MemoryConfig};
use crate::policy::{baseline_decide, BaselineCounters, Learner, PolicyError, QTable};
use crate::workloads::{finish_epoch, EpochAccumulator, Mutator, Workload};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<HeapError> for RunError {
    fn from(e: HeapError) -> Self {
        RunError::Sim(e.into())
    }
}

impl From<PolicyError> for RunError {
    fn from(e: PolicyError) -> Self {
        RunError::Sim(e.into())
    }
}

/// What a policy sees at an allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionContext {
    pub state: GcState,
    pub live_bytes: u64,
    pub in_overlap_window: bool,
}

/// Decides, at each allocation, whether to collect first.
pub trait CollectionPolicy {
    fn decide(&mut self, ctx: &DecisionContext) -> GcAction;

    /// Called once the allocation (and any forced collection) is done.
    fn after_allocation(
        &mut self,
        _state: GcState,
        _action: GcAction,
        _cost: Ticks,
        _forced_full: bool,
    ) {
    }

    /// Objects freed by reference counting since the previous decision.
    fn on_deallocations(&mut self, _count: u64) {}

    fn on_forced_full(&mut self) {}

    /// Reward for the epoch that just ended, already normalized to [0, 1].
    fn end_epoch(&mut self, _reward: f64, _epoch_ticks: Ticks) -> Result<(), PolicyError> {
        Ok(())
    }

    fn table_bytes(&self) -> u64 {
        0
    }

    fn epsilon(&self) -> f64 {
        0.0
    }

    fn table(&self) -> Option<&QTable> {
        None
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NeverCollect;

impl CollectionPolicy for NeverCollect {
    fn decide(&mut self, _ctx: &DecisionContext) -> GcAction {
        GcAction::Nothing
    }
}

impl CollectionPolicy for BaselineCounters {
    fn decide(&mut self, _ctx: &DecisionContext) -> GcAction {
        self.note_allocation();
        baseline_decide(self)
    }

    fn on_deallocations(&mut self, count: u64) {
        self.note_deallocations(count);
    }

    fn on_forced_full(&mut self) {
        self.note_full_collection();
    }
}

impl CollectionPolicy for Learner {
    fn decide(&mut self, ctx: &DecisionContext) -> GcAction {
        Learner::decide(self, &ctx.state)
    }

    fn after_allocation(
        &mut self,
        state: GcState,
        action: GcAction,
        cost: Ticks,
        forced_full: bool,
    ) {
        self.record(state, action, cost, forced_full);
    }

    fn end_epoch(&mut self, reward: f64, epoch_ticks: Ticks) -> Result<(), PolicyError> {
        self.apply_reward(reward, epoch_ticks).map(|_| ())
    }

    fn table_bytes(&self) -> u64 {
        self.table().table_bytes()
    }

    fn epsilon(&self) -> f64 {
        Learner::epsilon(self)
    }

    fn table(&self) -> Option<&QTable> {
        Some(Learner::table(self))
    }
}

/// Collects with a fixed probability at every allocation.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    pub probability: f64,
    pub action: GcAction,
    rng: ChaCha8Rng,
}

impl UniformRandom {
    pub fn new(probability: f64, action: GcAction, seed: u64) -> Self {
        Self {
            probability,
            action,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl CollectionPolicy for UniformRandom {
    fn decide(&mut self, _ctx: &DecisionContext) -> GcAction {
        if self.rng.gen::<f64>() < self.probability {
            self.action
        } else {
            GcAction::Nothing
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Decision {
        clock: Ticks,
        epoch: u64,
        site: SiteId,
        mem_bin: u16,
        action: GcAction,
    },
    Collection {
        clock: Ticks,
        epoch: u64,
        generation: u8,
        forced: bool,
        scanned: u64,
        bytes_freed: u64,
    },
    Breach {
        clock: Ticks,
        epoch: u64,
        live_bytes: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch_index: u64,
    pub raw_reward: f64,
    pub normalized_reward: f64,
    pub live_bytes_end: u64,
    pub table_bytes: u64,
    /// Policy-chosen collections per generation (index 0 = generation 1).
    pub collections_by_gen: Vec<u64>,
    pub forced_full_collections: u64,
    /// Exploration rate in effect during the epoch.
    pub epsilon: f64,
}

/// Where collections happened relative to the workload's I/O windows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub decision_points: u64,
    pub window_decision_points: u64,
    pub voluntary_collections: u64,
    pub window_voluntary_collections: u64,
    pub forced_collections: u64,
    pub window_forced_collections: u64,
}

impl OverlapStats {
    /// Share of policy-chosen collections that ran inside an I/O window.
    pub fn window_collection_share(&self) -> f64 {
        if self.voluntary_collections == 0 {
            0.0
        } else {
            self.window_voluntary_collections as f64 / self.voluntary_collections as f64
        }
    }

    /// Share of allocation points inside an I/O window; what a schedule
    /// that ignores the window would hit on average.
    pub fn window_decision_share(&self) -> f64 {
        if self.decision_points == 0 {
            0.0
        } else {
            self.window_decision_points as f64 / self.decision_points as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// The configuration that ran, with the threshold resolved to bytes.
    pub config: ExperimentConfig,
    pub threshold_bytes: u64,
    pub epochs: Vec<EpochRecord>,
    pub median_reward: f64,
    pub peak_live_bytes: u64,
    pub total_collections: u64,
    pub forced_full_collections: u64,
    /// Most bytes allocated by a single workload step.
    pub max_event_bytes: u64,
    pub overlap: OverlapStats,
    pub table_entries: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
    #[serde(skip)]
    pub table: Option<QTable>,
}

/// Median of a sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Integer median; even sizes round the middle mean down.
pub fn median_u64(values: &[u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        ((u128::from(v[n / 2 - 1]) + u128::from(v[n / 2])) / 2) as u64
    }
}

struct Driver<'a> {
    heap: Heap,
    mem: MemoryConfig,
    policy: &'a mut dyn CollectionPolicy,
    epoch_ticks: Ticks,
    n_epochs: usize,
    next_boundary: Ticks,
    acc: EpochAccumulator,
    running_max: f64,
    epochs: Vec<EpochRecord>,
    epoch_collections: Vec<u64>,
    epoch_forced: u64,
    total_collections: u64,
    forced_total: u64,
    peak_live: u64,
    overlap_open: bool,
    overlap: OverlapStats,
    seen_refcount_frees: u64,
    trace: Option<Vec<TraceEvent>>,
}

impl Driver<'_> {
    fn done(&self) -> bool {
        self.epochs.len() >= self.n_epochs
    }

    fn roll_epochs(&mut self) -> Result<(), SimError> {
        while !self.done() && self.heap.clock() >= self.next_boundary {
            let window = finish_epoch(&mut self.acc, self.epoch_ticks);
            let raw = window.raw_rate;
            self.running_max = self.running_max.max(raw);
            let normalized = if self.running_max > 0.0 {
                raw / self.running_max
            } else {
                0.0
            };
            let epsilon = self.policy.epsilon();
            self.policy.end_epoch(normalized, self.epoch_ticks)?;
            self.epochs.push(EpochRecord {
                epoch_index: window.epoch_index,
                raw_reward: raw,
                normalized_reward: normalized,
                live_bytes_end: self.heap.live_bytes(),
                table_bytes: self.policy.table_bytes(),
                collections_by_gen: std::mem::replace(
                    &mut self.epoch_collections,
                    vec![0; self.mem.full_generation as usize],
                ),
                forced_full_collections: std::mem::take(&mut self.epoch_forced),
                epsilon,
            });
            self.next_boundary += self.epoch_ticks;
        }
        Ok(())
    }

    fn collect(&mut self, generation: u8, forced: bool) -> Result<Ticks, SimError> {
        let stats = self.heap.collect(generation)?;
        self.total_collections += 1;
        if forced {
            self.forced_total += 1;
            self.epoch_forced += 1;
            self.overlap.forced_collections += 1;
            self.overlap.window_forced_collections += u64::from(self.overlap_open);
        } else {
            self.epoch_collections[generation as usize - 1] += 1;
            self.overlap.voluntary_collections += 1;
            self.overlap.window_voluntary_collections += u64::from(self.overlap_open);
        }
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEvent::Collection {
                clock: self.heap.clock(),
                epoch: self.epochs.len() as u64,
                generation,
                forced,
                scanned: stats.objects_scanned,
                bytes_freed: stats.bytes_freed,
            });
        }
        Ok(stats.cost_ticks)
    }
}

impl Mutator for Driver<'_> {
    fn alloc(&mut self, site: SiteId, size: u64, refs: &[ObjectId]) -> Result<ObjectId, SimError> {
        self.roll_epochs()?;
        let frees = self.heap.counters().refcount_frees;
        if frees > self.seen_refcount_frees {
            self.policy
                .on_deallocations(frees - self.seen_refcount_frees);
        }

        // the state reflects usage as it will be once this object is placed
        let state = encode_state(site, self.heap.live_bytes().saturating_add(size), &self.mem);
        let ctx = DecisionContext {
            state,
            live_bytes: self.heap.live_bytes(),
            in_overlap_window: self.overlap_open,
        };
        let action = self.policy.decide(&ctx);
        self.overlap.decision_points += 1;
        self.overlap.window_decision_points += u64::from(self.overlap_open);
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEvent::Decision {
                clock: self.heap.clock(),
                epoch: self.epochs.len() as u64,
                site,
                mem_bin: state.mem_bin,
                action,
            });
        }
        let cost = match action {
            GcAction::Collect(g) => self.collect(g, false)?,
            GcAction::Nothing => 0,
        };

        let id = self.heap.allocate(site, size, refs)?;
        self.heap.add_root(id)?;
        self.peak_live = self.peak_live.max(self.heap.live_bytes());

        let forced = threshold_breached(self.heap.live_bytes(), &self.mem);
        if forced {
            if let Some(trace) = &mut self.trace {
                trace.push(TraceEvent::Breach {
                    clock: self.heap.clock(),
                    epoch: self.epochs.len() as u64,
                    live_bytes: self.heap.live_bytes(),
                });
            }
            self.collect(self.mem.full_generation, true)?;
            self.policy.on_forced_full();
        }
        self.policy.after_allocation(state, action, cost, forced);
        self.seen_refcount_frees = self.heap.counters().refcount_frees;
        Ok(id)
    }

    fn heap(&self) -> &Heap {
        &self.heap
    }

    fn heap_mut(&mut self) -> &mut Heap {
        &mut self.heap
    }

    fn work(&mut self, ticks: Ticks) -> Result<(), SimError> {
        self.heap.advance_clock(ticks);
        Ok(())
    }

    fn complete(&mut self, units: u64) -> Result<(), SimError> {
        self.roll_epochs()?;
        if !self.done() {
            self.acc.add(units);
        }
        Ok(())
    }

    fn set_overlap_window(&mut self, open: bool) {
        self.overlap_open = open;
    }
}

/// Builds the policy a variant calls for.
pub fn policy_for(config: &ExperimentConfig, mem: &MemoryConfig) -> Box<dyn CollectionPolicy> {
    match config.variant {
        Variant::Baseline => Box::new(BaselineCounters::new(&config.baseline)),
        Variant::NeverCollect => Box::new(NeverCollect),
        _ => Box::new(Learner::new(
            config.learner_for_variant(),
            mem,
            policy_seed(config.seed),
        )),
    }
}

fn policy_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Runs `config`, calibrating the threshold first when it is `"auto"`.
pub fn run(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let threshold = resolve_threshold(config)?;
    let mem = config.memory_config(threshold);
    let mut policy = policy_for(config, &mem);
    let workload = config.workload.build(config.seed);
    simulate(config, threshold, workload, policy.as_mut())
}

pub fn resolve_threshold(config: &ExperimentConfig) -> Result<u64, RunError> {
    match config.memory.threshold_m {
        Threshold::Bytes(b) => Ok(b),
        Threshold::Auto => calibrate_threshold(config),
    }
}

/// Median per-epoch memory of the baseline policy with no threshold.
pub fn calibrate_threshold(config: &ExperimentConfig) -> Result<u64, RunError> {
    config.validate()?;
    calibrate_threshold_with(config, config.workload.build(config.seed))
}

/// [`calibrate_threshold`] with a caller-supplied workload.
pub fn calibrate_threshold_with(
    config: &ExperimentConfig,
    workload: Box<dyn Workload>,
) -> Result<u64, RunError> {
    let cfg = ExperimentConfig {
        variant: Variant::Baseline,
        record_trace: false,
        ..config.clone()
    };
    let mut policy = BaselineCounters::new(&cfg.baseline);
    let result = simulate(&cfg, u64::MAX, workload, &mut policy)?;
    let usage: Vec<u64> = result.epochs.iter().map(|e| e.live_bytes_end).collect();
    Ok(median_u64(&usage).max(1))
}

/// Runs the main loop with an explicit threshold, workload and policy.
pub fn simulate(
    config: &ExperimentConfig,
    threshold: u64,
    mut workload: Box<dyn Workload>,
    policy: &mut dyn CollectionPolicy,
) -> Result<RunResult, RunError> {
    config.validate()?;
    let mem = config.memory_config(threshold);
    mem.validate()
        .map_err(|reason| ConfigError::new("memory.threshold_m", reason))?;
    let gens = config.heap.num_generations as usize;
    let mut driver = Driver {
        heap: Heap::new(config.heap)?,
        mem,
        policy,
        epoch_ticks: config.epoch_ticks,
        n_epochs: config.epochs(),
        next_boundary: config.epoch_ticks,
        acc: EpochAccumulator::default(),
        running_max: 0.0,
        epochs: Vec::with_capacity(config.epochs()),
        epoch_collections: vec![0; gens],
        epoch_forced: 0,
        total_collections: 0,
        forced_total: 0,
        peak_live: 0,
        overlap_open: false,
        overlap: OverlapStats::default(),
        seen_refcount_frees: 0,
        trace: config.record_trace.then(Vec::new),
    };
    let mut max_event_bytes = 0;
    while !driver.done() {
        let before = driver.heap.clock();
        let event = workload.step(&mut driver)?;
        max_event_bytes = max_event_bytes.max(event.allocated_bytes);
        driver.roll_epochs()?;
        if driver.heap.clock() == before {
            // a workload that stops consuming time would spin forever
            driver.heap.advance_clock(1);
        }
    }

    let raw: Vec<f64> = driver.epochs.iter().map(|e| e.raw_reward).collect();
    let table = driver.policy.table().cloned();
    Ok(RunResult {
        config: ExperimentConfig {
            memory: super::config::MemorySettings {
                threshold_m: Threshold::Bytes(threshold),
                ..config.memory.clone()
            },
            ..config.clone()
        },
        threshold_bytes: threshold,
        median_reward: median(&raw),
        peak_live_bytes: driver.peak_live,
        total_collections: driver.total_collections,
        forced_full_collections: driver.forced_total,
        max_event_bytes,
        overlap: driver.overlap,
        table_entries: table.as_ref().map_or(0, |t| t.entries() as u64),
        trace: driver.trace,
        table,
        epochs: driver.epochs,
    })
}

/// Checks that every collect decision is immediately followed by exactly one
/// matching collection in the same epoch, every breach by a forced full
/// collection, and that no collection appears without one of those causes.
pub fn verify_trace(trace: &[TraceEvent], full_generation: u8) -> Result<(), String> {
    let mut i = 0;
    while i < trace.len() {
        match trace[i] {
            TraceEvent::Decision {
                action: GcAction::Collect(g),
                epoch,
                clock,
                ..
            } => match trace.get(i + 1) {
                Some(TraceEvent::Collection {
                    generation,
                    forced: false,
                    epoch: e,
                    ..
                }) if *generation == g && *e == epoch => i += 2,
                other => {
                    return Err(format!("decision cg{g} at {clock} followed by {other:?}"));
                }
            },
            TraceEvent::Decision { .. } => i += 1,
            TraceEvent::Breach { clock, .. } => match trace.get(i + 1) {
                Some(TraceEvent::Collection {
                    generation,
                    forced: true,
                    ..
                }) if *generation == full_generation => i += 2,
                other => return Err(format!("breach at {clock} followed by {other:?}")),
            },
            TraceEvent::Collection { clock, .. } => {
                return Err(format!(
                    "collection at {clock} without a decision or breach"
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median_u64(&[10, 20, 30]), 20);
        assert_eq!(median_u64(&[30, 10, 20, 40]), 25);
        assert_eq!(median_u64(&[]), 0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
    }

    #[test]
    fn trace_checker_catches_orphans() {
        let d = |action| TraceEvent::Decision {
            clock: 0,
            epoch: 0,
            site: SiteId(1),
            mem_bin: 0,
            action,
        };
        let c = |generation, forced| TraceEvent::Collection {
            clock: 0,
            epoch: 0,
            generation,
            forced,
            scanned: 0,
            bytes_freed: 0,
        };
        let breach = TraceEvent::Breach {
            clock: 0,
            epoch: 0,
            live_bytes: 0,
        };
        assert!(verify_trace(
            &[d(GcAction::Collect(2)), c(2, false), breach, c(3, true)],
            3
        )
        .is_ok());
        assert!(verify_trace(&[d(GcAction::Collect(2)), c(1, false)], 3).is_err());
        assert!(verify_trace(&[breach, d(GcAction::Nothing)], 3).is_err());
        assert!(verify_trace(&[c(1, false)], 3).is_err());
    }
}
