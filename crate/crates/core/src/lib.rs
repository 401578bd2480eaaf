//! A deterministic generational garbage collector simulator whose
//! collection schedule can be learned with tabular Q-learning.
//!
//! Workloads allocate through a [`workloads::Mutator`]; at every allocation a
//! policy picks between doing nothing and collecting generations `1..=g`.
//! The [`harness`] runs workloads against policies and compares the learned
//! variants with a CPython-style threshold collector.

pub mod error;
pub mod harness;
pub mod heap;
pub mod mdp;
pub mod policy;
pub mod workloads;

pub use error::{ConfigError, SimError};
pub use harness::{
    compare_variants, run, ComparisonTable, ExperimentConfig, MatrixSpec, RunError, RunResult,
    Threshold, Variant,
};
pub use heap::{CollectionStats, Heap, HeapConfig, HeapError, ObjectId, SiteId, Ticks};
pub use mdp::{encode_state, GcAction, GcState, MemoryConfig};
pub use policy::{Learner, LearnerConfig, QTable};
pub use workloads::{WorkloadKind, WorkloadSpec};
