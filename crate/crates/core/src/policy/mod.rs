//! Collection policies: the learned Q-table policy and the CPython-style
//! threshold baseline.

mod baseline;
mod learner;
pub mod snapshot;
mod table;

pub use baseline::{baseline_decide, BaselineConfig, BaselineCounters};
pub use learner::{
    apply_reward, q_update, select_action, shaped_reward, Learner, LearnerConfig, PolicyError,
    TransitionBuffer, TransitionRecord, UpdateSummary,
};
pub use table::{
    opt_action, table_bytes, QTable, SaturationInit, ENTRY_BYTES, TABLE_OVERHEAD_BYTES,
};
