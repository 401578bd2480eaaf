//! Synthetic programs that drive a heap through a [`Mutator`] and report
//! completed work units.
//!
//! Every workload is a pure function of its parameters and seed: the same
//! spec produces the same sequence of allocations, edge updates and root
//! changes, each tagged with a fixed [`SiteId`].

mod lru;
mod reward;
mod tx;
mod webserver;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::heap::{Heap, ObjectId, SiteId, Ticks};

pub use lru::{LruCache, LruParams};
pub use reward::{finish_epoch, EpochAccumulator, RewardWindow};
pub use tx::{TxGraph, TxParams};
pub use webserver::{Webserver, WebserverParams};

/// What the simulated program sees of the runtime.
pub trait Mutator {
    /// Allocates an object held by one fresh root entry (the caller's local
    /// reference). Drop it with `heap_mut().remove_root(id)`.
    fn alloc(&mut self, site: SiteId, size: u64, refs: &[ObjectId]) -> Result<ObjectId, SimError>;
    fn heap(&self) -> &Heap;
    fn heap_mut(&mut self) -> &mut Heap;
    /// Charges mutator computation to the clock.
    fn work(&mut self, ticks: Ticks) -> Result<(), SimError>;
    /// Reports finished work units at the current clock.
    fn complete(&mut self, units: u64) -> Result<(), SimError>;
    /// Marks whether the program is currently waiting on I/O, i.e. whether
    /// collection work would overlap idle time.
    fn set_overlap_window(&mut self, _open: bool) {}

    fn now(&self) -> Ticks {
        self.heap().clock()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkEvent {
    pub work_units: u64,
    /// Clock advance across the whole step.
    pub ticks: Ticks,
    /// Ticks from the start of the step until its work was reported.
    pub latency_ticks: Ticks,
    pub allocated_bytes: u64,
}

pub trait Workload: Send {
    fn kind(&self) -> WorkloadKind;
    fn step(&mut self, m: &mut dyn Mutator) -> Result<WorkEvent, SimError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    Lru,
    Webserver,
    Tx,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 3] =
        [WorkloadKind::Lru, WorkloadKind::Webserver, WorkloadKind::Tx];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Lru => "lru",
            WorkloadKind::Webserver => "webserver",
            WorkloadKind::Tx => "tx",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::new("workload.kind", format!("unknown workload {s:?}")))
    }
}

/// Which program to run plus the parameters of every kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub lru: LruParams,
    pub webserver: WebserverParams,
    pub tx: TxParams,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self::of(WorkloadKind::Lru)
    }
}

impl WorkloadSpec {
    pub fn of(kind: WorkloadKind) -> Self {
        Self {
            kind,
            lru: LruParams::default(),
            webserver: WebserverParams::default(),
            tx: TxParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind {
            WorkloadKind::Lru => self.lru.validate(),
            WorkloadKind::Webserver => self.webserver.validate(),
            WorkloadKind::Tx => self.tx.validate(),
        }
    }

    pub fn build(&self, seed: u64) -> Box<dyn Workload> {
        match self.kind {
            WorkloadKind::Lru => Box::new(LruCache::new(self.lru.clone(), seed)),
            WorkloadKind::Webserver => Box::new(Webserver::new(self.webserver.clone(), seed)),
            WorkloadKind::Tx => Box::new(TxGraph::new(self.tx.clone(), seed)),
        }
    }
}

/// Mutator with no collection policy: allocations never trigger a
/// collection. Useful for driving workloads directly.
#[derive(Debug)]
pub struct PlainMutator {
    pub heap: Heap,
    pub work_units: u64,
    pub overlap_open: bool,
}

impl PlainMutator {
    pub fn new(heap: Heap) -> Self {
        Self {
            heap,
            work_units: 0,
            overlap_open: false,
        }
    }
}

impl Mutator for PlainMutator {
    fn alloc(&mut self, site: SiteId, size: u64, refs: &[ObjectId]) -> Result<ObjectId, SimError> {
        let id = self.heap.allocate(site, size, refs)?;
        self.heap.add_root(id)?;
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
        self.work_units += units;
        Ok(())
    }

    fn set_overlap_window(&mut self, open: bool) {
        self.overlap_open = open;
    }
}

pub(crate) fn positive(field: &str, v: u64) -> Result<(), ConfigError> {
    if v == 0 {
        Err(ConfigError::new(field, "must be positive"))
    } else {
        Ok(())
    }
}

pub(crate) fn probability(field: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("{v} not in [0, 1]")))
    }
}
