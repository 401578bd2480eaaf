use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{positive, probability, Mutator, WorkEvent, Workload, WorkloadKind};
use crate::error::{ConfigError, SimError};
use crate::heap::{ObjectId, SiteId, Ticks};

pub const ENTRY_SITE: SiteId = SiteId(1);
pub const NODE_SITE: SiteId = SiteId(2);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LruParams {
    /// Clusters held before the oldest is evicted.
    pub capacity: usize,
    /// Objects per cluster; they form a single reference ring.
    pub cluster_objects: usize,
    pub object_bytes: u64,
    /// Probability that a query inserts a fresh entry rather than looking
    /// one up.
    pub insert_prob: f64,
    pub query_ticks: Ticks,
}

impl Default for LruParams {
    fn default() -> Self {
        Self {
            capacity: 256,
            cluster_objects: 8,
            object_bytes: 256,
            insert_prob: 0.5,
            query_ticks: 20,
        }
    }
}

impl LruParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("workload.lru.capacity", self.capacity as u64)?;
        positive("workload.lru.cluster_objects", self.cluster_objects as u64)?;
        positive("workload.lru.object_bytes", self.object_bytes)?;
        probability("workload.lru.insert_prob", self.insert_prob)
    }
}

/// LRU cache of large cyclic values. Evicted clusters are unreachable but
/// keep each other's reference counts up, so only a collection of their
/// generation reclaims them.
#[derive(Debug)]
pub struct LruCache {
    params: LruParams,
    rng: ChaCha8Rng,
    /// Front is least recently used.
    entries: VecDeque<ObjectId>,
}

impl LruCache {
    pub fn new(params: LruParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            entries: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry objects, least recently used first.
    pub fn entries(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.entries.iter().copied()
    }

    pub fn insert(&mut self, m: &mut dyn Mutator) -> Result<u64, SimError> {
        let p = &self.params;
        let head = m.alloc(ENTRY_SITE, p.object_bytes, &[])?;
        let mut prev = head;
        for _ in 1..p.cluster_objects {
            let node = m.alloc(NODE_SITE, p.object_bytes, &[prev])?;
            if prev != head {
                m.heap_mut().remove_root(prev)?;
            }
            prev = node;
        }
        // close the ring: head -> last -> ... -> head
        m.heap_mut().add_ref(head, prev)?;
        if prev != head {
            m.heap_mut().remove_root(prev)?;
        }
        self.entries.push_back(head);
        if self.entries.len() > p.capacity {
            let evicted = self.entries.pop_front().expect("over capacity");
            m.heap_mut().remove_root(evicted)?;
        }
        Ok(p.object_bytes * p.cluster_objects as u64)
    }

    pub fn lookup(&mut self) {
        let idx = self.rng.gen_range(0..self.entries.len());
        let hit = self.entries.remove(idx).expect("index in range");
        self.entries.push_back(hit);
    }
}

impl Workload for LruCache {
    fn kind(&self) -> WorkloadKind {
        WorkloadKind::Lru
    }

    fn step(&mut self, m: &mut dyn Mutator) -> Result<WorkEvent, SimError> {
        let start = m.now();
        let insert = self.entries.is_empty() || self.rng.gen_bool(self.params.insert_prob);
        let allocated_bytes = if insert {
            self.insert(m)?
        } else {
            self.lookup();
            0
        };
        m.work(self.params.query_ticks)?;
        let latency = m.now() - start;
        m.complete(1)?;
        Ok(WorkEvent {
            work_units: 1,
            ticks: m.now() - start,
            latency_ticks: latency,
            allocated_bytes,
        })
    }
}
