use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::{positive, probability, Mutator, WorkEvent, Workload, WorkloadKind};
use crate::error::{ConfigError, SimError};
use crate::heap::{ObjectId, SiteId, Ticks};

pub const NODE_SITE: SiteId = SiteId(30);
pub const INPUTS_SITE: SiteId = SiteId(31);
pub const SCRATCH_SITE: SiteId = SiteId(32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TxParams {
    /// Compute ticks spent searching per transaction.
    pub search_ticks: Ticks,
    pub node_bytes: u64,
    pub inputs_bytes: u64,
    pub scratch_bytes: u64,
    /// Existing transactions each new one spends from.
    pub inputs_per_tx: usize,
    /// Chance that a spent transaction links back to its spender.
    pub back_edge_prob: f64,
    /// Mean lifetime in units of `lifetime_unit_ticks` (geometric).
    pub mean_lifetime_units: f64,
    pub lifetime_unit_ticks: Ticks,
}

impl Default for TxParams {
    fn default() -> Self {
        Self {
            search_ticks: 30,
            node_bytes: 192,
            inputs_bytes: 64,
            scratch_bytes: 64,
            inputs_per_tx: 2,
            back_edge_prob: 0.5,
            mean_lifetime_units: 20.0,
            lifetime_unit_ticks: 10_000,
        }
    }
}

impl TxParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("workload.tx.node_bytes", self.node_bytes)?;
        positive("workload.tx.inputs_bytes", self.inputs_bytes)?;
        positive("workload.tx.scratch_bytes", self.scratch_bytes)?;
        positive("workload.tx.lifetime_unit_ticks", self.lifetime_unit_ticks)?;
        probability("workload.tx.back_edge_prob", self.back_edge_prob)?;
        if self.mean_lifetime_units.is_nan() || self.mean_lifetime_units < 1.0 {
            return Err(ConfigError::new(
                "workload.tx.mean_lifetime_units",
                "must be >= 1",
            ));
        }
        Ok(())
    }
}

/// A transaction graph. Every transaction is a node/inputs pair that
/// references each other, stays rooted for a geometric number of lifetime
/// units, and links to the earlier transactions it spends, often in both
/// directions. Retired transactions are cycles that only mark-and-sweep
/// reclaims; the live population makes every full collection expensive.
#[derive(Debug)]
pub struct TxGraph {
    params: TxParams,
    rng: ChaCha8Rng,
    live: Vec<ObjectId>,
    slot: FxHashMap<ObjectId, usize>,
    /// Each live transaction's inputs object and the transactions it spent.
    spends: FxHashMap<ObjectId, (ObjectId, Vec<ObjectId>)>,
    retire_at: BinaryHeap<Reverse<(Ticks, ObjectId)>>,
}

impl TxGraph {
    pub fn new(params: TxParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            live: Vec::new(),
            slot: FxHashMap::default(),
            spends: FxHashMap::default(),
            retire_at: BinaryHeap::new(),
        }
    }

    /// Transactions currently rooted.
    pub fn live_transactions(&self) -> usize {
        self.live.len()
    }

    fn lifetime(&mut self) -> Ticks {
        let p = 1.0 / self.params.mean_lifetime_units;
        let u: f64 = 1.0 - self.rng.gen::<f64>();
        let units = if p >= 1.0 {
            1.0
        } else {
            (u.ln() / (1.0 - p).ln()).ceil().max(1.0)
        };
        (units * self.params.lifetime_unit_ticks as f64) as Ticks
    }

    fn retire_due(&mut self, m: &mut dyn Mutator) -> Result<(), SimError> {
        let now = m.now();
        while let Some(&Reverse((t, id))) = self.retire_at.peek() {
            if t > now {
                break;
            }
            self.retire_at.pop();
            let idx = self.slot.remove(&id).expect("retiring a live transaction");
            self.live.swap_remove(idx);
            if let Some(&moved) = self.live.get(idx) {
                self.slot.insert(moved, idx);
            }
            // a retired transaction forgets what it spent, which bounds how
            // much history live transactions keep reachable
            let (inputs, spent) = self.spends.remove(&id).expect("tracked with its node");
            for prev in spent {
                m.heap_mut().remove_ref(inputs, prev)?;
            }
            m.heap_mut().remove_root(id)?;
        }
        Ok(())
    }
}

impl Workload for TxGraph {
    fn kind(&self) -> WorkloadKind {
        WorkloadKind::Tx
    }

    fn step(&mut self, m: &mut dyn Mutator) -> Result<WorkEvent, SimError> {
        let start = m.now();
        self.retire_due(m)?;
        let p = self.params.clone();

        let picks = p.inputs_per_tx.min(self.live.len());
        let spent: Vec<ObjectId> = (0..picks)
            .map(|_| self.live[self.rng.gen_range(0..self.live.len())])
            .collect();
        let inputs = m.alloc(INPUTS_SITE, p.inputs_bytes, &spent)?;
        let node = m.alloc(NODE_SITE, p.node_bytes, &[inputs])?;
        m.heap_mut().add_ref(inputs, node)?;
        m.heap_mut().remove_root(inputs)?;
        for &prev in &spent {
            if self.rng.gen_bool(p.back_edge_prob) {
                m.heap_mut().add_ref(prev, node)?;
            }
        }
        self.spends.insert(node, (inputs, spent));
        self.slot.insert(node, self.live.len());
        self.live.push(node);
        let until = m.now() + self.lifetime();
        self.retire_at.push(Reverse((until, node)));

        let scratch = m.alloc(SCRATCH_SITE, p.scratch_bytes, &[node])?;
        m.work(p.search_ticks)?;
        m.heap_mut().remove_root(scratch)?;

        let latency = m.now() - start;
        m.complete(1)?;
        Ok(WorkEvent {
            work_units: 1,
            ticks: m.now() - start,
            latency_ticks: latency,
            allocated_bytes: p.inputs_bytes + p.node_bytes + p.scratch_bytes,
        })
    }
}
