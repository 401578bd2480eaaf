use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::table::{opt_action, QTable, SaturationInit};
use crate::error::ConfigError;
use crate::heap::Ticks;
use crate::mdp::{action_set, GcAction, GcState, MemoryConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
}

/// Hyperparameters of the learned policy.
///
/// The three optimization switches are not part of the serialized form;
/// the experiment variant decides them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Multiplicative decay applied once per reward epoch.
    pub epsilon_decay: f64,
    /// Probability that an exploratory draw is some collection (prior on).
    pub prior_collect_prob: f64,
    pub shaping_kappa: f64,
    pub penalty_init: f64,
    /// Subtracted from the reward of a transition that forced a full collection.
    pub threshold_penalty: f64,
    #[serde(skip)]
    pub enable_prior: bool,
    #[serde(skip)]
    pub enable_shaping: bool,
    #[serde(skip)]
    pub enable_init: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.9999,
            epsilon_start: 0.2,
            epsilon_min: 0.01,
            epsilon_decay: 0.98,
            prior_collect_prob: 1.0 / 700.0,
            shaping_kappa: 0.1,
            penalty_init: -100.0,
            threshold_penalty: 1.0,
            enable_prior: false,
            enable_shaping: false,
            enable_init: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |field: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(ConfigError::new(
                    format!("learner.{field}"),
                    format!("{v} not in (0, 1]"),
                ))
            }
        };
        unit("alpha", self.alpha)?;
        unit("gamma", self.gamma)?;
        unit("epsilon_decay", self.epsilon_decay)?;
        for (field, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_min", self.epsilon_min),
            ("prior_collect_prob", self.prior_collect_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::new(
                    format!("learner.{field}"),
                    format!("{v} not in [0, 1]"),
                ));
            }
        }
        if self.epsilon_min > self.epsilon_start {
            return Err(ConfigError::new(
                "learner.epsilon_min",
                "must not exceed epsilon_start",
            ));
        }
        if self.shaping_kappa.is_nan() || self.shaping_kappa < 0.0 {
            return Err(ConfigError::new("learner.shaping_kappa", "must be >= 0"));
        }
        if self.threshold_penalty.is_nan() || self.threshold_penalty < 0.0 {
            return Err(ConfigError::new(
                "learner.threshold_penalty",
                "must be >= 0",
            ));
        }
        if !self.penalty_init.is_finite() {
            return Err(ConfigError::new("learner.penalty_init", "must be finite"));
        }
        Ok(())
    }
}

/// Epsilon-greedy choice. Exploration is uniform over all actions, or with
/// the prior enabled, `Nothing` with probability `1 - prior_collect_prob`
/// and otherwise a uniformly chosen collection.
pub fn select_action<R: Rng + ?Sized>(
    table: &mut QTable,
    state: &GcState,
    cfg: &LearnerConfig,
    epsilon: f64,
    actions: &[GcAction],
    init: Option<&SaturationInit>,
    rng: &mut R,
) -> GcAction {
    if rng.gen::<f64>() < epsilon {
        explore(cfg, actions, rng)
    } else {
        opt_action(table, state, actions, init).0
    }
}

fn explore<R: Rng + ?Sized>(cfg: &LearnerConfig, actions: &[GcAction], rng: &mut R) -> GcAction {
    if cfg.enable_prior {
        let collects = &actions[1..];
        if collects.is_empty() || rng.gen::<f64>() >= cfg.prior_collect_prob {
            GcAction::Nothing
        } else {
            collects[rng.gen_range(0..collects.len())]
        }
    } else {
        actions[rng.gen_range(0..actions.len())]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub state: GcState,
    pub action: GcAction,
    /// Filled in at the next decision point.
    pub next_state: Option<GcState>,
    pub collection_cost_ticks: Ticks,
    /// The allocation after this decision breached the threshold.
    pub forced_full: bool,
}

/// Actions taken since the last reward, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionBuffer {
    records: Vec<TransitionRecord>,
}

impl TransitionBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn completed(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.next_state.is_some())
            .count()
    }

    /// Chains `state` onto the previous record, then appends a pending one.
    pub fn record_transition(
        &mut self,
        state: GcState,
        action: GcAction,
        collection_cost_ticks: Ticks,
        forced_full: bool,
    ) {
        if let Some(last) = self.records.last_mut() {
            last.next_state = Some(state);
        }
        self.records.push(TransitionRecord {
            state,
            action,
            next_state: None,
            collection_cost_ticks,
            forced_full,
        });
    }
}

/// Reward credited to one transition: the epoch reward, minus the shaping
/// term for collections, minus the threshold penalty (floored at -1) when
/// the transition forced a full collection.
pub fn shaped_reward(
    cfg: &LearnerConfig,
    r_raw: f64,
    rec: &TransitionRecord,
    epoch_ticks: Ticks,
) -> f64 {
    let mut r = r_raw;
    if cfg.enable_shaping && rec.action.is_collect() {
        r -= cfg.shaping_kappa * rec.collection_cost_ticks as f64 / epoch_ticks as f64;
    }
    if rec.forced_full {
        r = (r - cfg.threshold_penalty).max(-1.0);
    }
    r
}

/// `Q(s,a) + alpha * (r + gamma * max_next - Q(s,a))`
pub fn q_update(current: f64, reward: f64, max_next: f64, alpha: f64, gamma: f64) -> f64 {
    current + alpha * (reward + gamma * max_next - current)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateSummary {
    pub records_applied: usize,
    pub epsilon_used: f64,
    pub epsilon_next: f64,
}

/// Credits `r_raw` to every completed transition in order, keeps the
/// trailing pending record, and decays epsilon.
pub fn apply_reward(
    table: &mut QTable,
    buffer: &mut TransitionBuffer,
    cfg: &LearnerConfig,
    init: Option<&SaturationInit>,
    r_raw: f64,
    epoch_ticks: Ticks,
    epsilon: &mut f64,
) -> Result<UpdateSummary, PolicyError> {
    if !(0.0..=1.0).contains(&r_raw) {
        return Err(PolicyError::RewardOutOfRange(r_raw));
    }
    let completed = buffer.completed();
    for rec in buffer.records.drain(..completed) {
        let next = rec.next_state.expect("only completed records are drained");
        if let Some(init) = init {
            table.lazy_init(&rec.state, init);
            table.lazy_init(&next, init);
        }
        let r = shaped_reward(cfg, r_raw, &rec, epoch_ticks);
        let updated = q_update(
            table.get(&rec.state, rec.action),
            r,
            table.max_value(&next),
            cfg.alpha,
            cfg.gamma,
        );
        table.set(rec.state, rec.action, updated);
    }
    let used = *epsilon;
    *epsilon = (used * cfg.epsilon_decay).max(cfg.epsilon_min);
    Ok(UpdateSummary {
        records_applied: completed,
        epsilon_used: used,
        epsilon_next: *epsilon,
    })
}

/// Q table, transition buffer and exploration state for one run.
#[derive(Debug, Clone)]
pub struct Learner {
    cfg: LearnerConfig,
    table: QTable,
    buffer: TransitionBuffer,
    actions: Vec<GcAction>,
    init: Option<SaturationInit>,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(cfg: LearnerConfig, memory: &MemoryConfig, seed: u64) -> Self {
        let init = cfg.enable_init.then_some(SaturationInit {
            saturation_bin: memory.saturation_bin(),
            full_generation: memory.full_generation,
            value: cfg.penalty_init,
        });
        Self {
            epsilon: cfg.epsilon_start,
            table: QTable::new(memory.full_generation),
            buffer: TransitionBuffer::new(),
            actions: action_set(memory.full_generation),
            init,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn buffer(&self) -> &TransitionBuffer {
        &self.buffer
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn decide(&mut self, state: &GcState) -> GcAction {
        select_action(
            &mut self.table,
            state,
            &self.cfg,
            self.epsilon,
            &self.actions,
            self.init.as_ref(),
            &mut self.rng,
        )
    }

    pub fn record(&mut self, state: GcState, action: GcAction, cost: Ticks, forced_full: bool) {
        self.buffer
            .record_transition(state, action, cost, forced_full);
    }

    pub fn apply_reward(
        &mut self,
        r_raw: f64,
        epoch_ticks: Ticks,
    ) -> Result<UpdateSummary, PolicyError> {
        apply_reward(
            &mut self.table,
            &mut self.buffer,
            &self.cfg,
            self.init.as_ref(),
            r_raw,
            epoch_ticks,
            &mut self.epsilon,
        )
    }
}
