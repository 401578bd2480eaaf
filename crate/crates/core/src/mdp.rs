//! State encoding, action set and the memory-threshold rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::heap::SiteId;

/// Discretized memory usage. `num_bins` is the saturation bin (usage >= M).
pub type BinIndex = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GcState {
    pub site: SiteId,
    pub mem_bin: BinIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GcAction {
    Nothing,
    /// Collect generations `1..=g`.
    Collect(u8),
}

impl GcAction {
    /// Position in [`action_set`] order.
    pub fn index(self) -> usize {
        match self {
            GcAction::Nothing => 0,
            GcAction::Collect(g) => g as usize,
        }
    }

    pub fn from_index(index: usize) -> Self {
        if index == 0 {
            GcAction::Nothing
        } else {
            GcAction::Collect(index as u8)
        }
    }

    pub fn is_collect(self) -> bool {
        matches!(self, GcAction::Collect(_))
    }
}

impl fmt::Display for GcAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GcAction::Nothing => f.write_str("nothing"),
            GcAction::Collect(g) => write!(f, "cg{g}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognized action {0:?}")]
pub struct ParseActionError(String);

impl FromStr for GcAction {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "nothing" {
            return Ok(GcAction::Nothing);
        }
        s.strip_prefix("cg")
            .and_then(|g| g.parse::<u8>().ok())
            .filter(|&g| g > 0)
            .map(GcAction::Collect)
            .ok_or_else(|| ParseActionError(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryConfig {
    /// The threshold M in bytes.
    pub threshold: u64,
    pub num_bins: u16,
    pub full_generation: u8,
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.threshold == 0 {
            return Err("threshold_m must be positive");
        }
        if self.num_bins < 2 {
            return Err("num_bins must be at least 2");
        }
        if self.full_generation == 0 {
            return Err("need at least one generation");
        }
        Ok(())
    }

    pub fn saturation_bin(&self) -> BinIndex {
        self.num_bins
    }
}

/// `mem_bin = min(B, floor(live_bytes * B / M))`.
pub fn encode_state(site: SiteId, live_bytes: u64, cfg: &MemoryConfig) -> GcState {
    let bin = u128::from(live_bytes) * u128::from(cfg.num_bins) / u128::from(cfg.threshold);
    GcState {
        site,
        mem_bin: bin.min(u128::from(cfg.num_bins)) as BinIndex,
    }
}

/// `[Nothing, CG_1, ..., CG_|G|]`.
pub fn action_set(num_generations: u8) -> Vec<GcAction> {
    std::iter::once(GcAction::Nothing)
        .chain((1..=num_generations).map(GcAction::Collect))
        .collect()
}

/// True iff usage strictly exceeds M.
pub fn threshold_breached(live_bytes: u64, cfg: &MemoryConfig) -> bool {
    live_bytes > cfg.threshold
}
