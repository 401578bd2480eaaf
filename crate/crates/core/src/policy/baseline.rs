use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::mdp::GcAction;

/// CPython-style collection thresholds. `[t0, t1, t2, ...]`: collect
/// generation 1 once net allocations reach `t0`; every `t1`-th such trigger
/// escalates to generation 2; every `t2`-th generation-2 trigger escalates
/// to generation 3, and so on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub thresholds: Vec<u64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![700, 10, 10],
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self, num_generations: u8) -> Result<(), ConfigError> {
        if self.thresholds.len() != num_generations as usize {
            return Err(ConfigError::new(
                "baseline.thresholds",
                format!("need one threshold per generation ({num_generations})"),
            ));
        }
        if self.thresholds.contains(&0) {
            return Err(ConfigError::new(
                "baseline.thresholds",
                "thresholds must be positive",
            ));
        }
        Ok(())
    }
}

/// Counters for the threshold policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineCounters {
    thresholds: Vec<u64>,
    /// Allocations minus deallocations since the last generation-1 trigger.
    pub net_allocations: u64,
    /// `triggers[i]`: collections of generation `i + 1` since the last
    /// collection of generation `i + 2`.
    pub triggers: Vec<u64>,
}

impl BaselineCounters {
    pub fn new(cfg: &BaselineConfig) -> Self {
        Self {
            triggers: vec![0; cfg.thresholds.len().saturating_sub(1)],
            thresholds: cfg.thresholds.clone(),
            net_allocations: 0,
        }
    }

    pub fn note_allocation(&mut self) {
        self.net_allocations += 1;
    }

    pub fn note_deallocations(&mut self, n: u64) {
        self.net_allocations = self.net_allocations.saturating_sub(n);
    }

    /// A full collection happened outside the policy's control.
    pub fn note_full_collection(&mut self) {
        self.net_allocations = 0;
        self.triggers.iter_mut().for_each(|t| *t = 0);
    }
}

pub fn baseline_decide(counters: &mut BaselineCounters) -> GcAction {
    if counters.net_allocations < counters.thresholds[0] {
        return GcAction::Nothing;
    }
    counters.net_allocations = 0;
    let mut generation = 1;
    while generation < counters.thresholds.len() {
        let slot = &mut counters.triggers[generation - 1];
        *slot += 1;
        if *slot < counters.thresholds[generation] {
            break;
        }
        *slot = 0;
        generation += 1;
    }
    GcAction::Collect(generation as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trigger(c: &mut BaselineCounters) -> GcAction {
        let mut last = GcAction::Nothing;
        for _ in 0..700 {
            c.note_allocation();
            last = baseline_decide(c);
        }
        last
    }

    #[test]
    fn fires_on_the_700th_allocation() {
        let mut c = BaselineCounters::new(&BaselineConfig::default());
        for _ in 0..699 {
            c.note_allocation();
            assert_eq!(baseline_decide(&mut c), GcAction::Nothing);
        }
        c.note_allocation();
        assert_eq!(baseline_decide(&mut c), GcAction::Collect(1));
        assert_eq!(c.net_allocations, 0);
    }

    #[test]
    fn deallocations_delay_trigger() {
        let mut c = BaselineCounters::new(&BaselineConfig::default());
        for _ in 0..700 {
            c.note_allocation();
        }
        c.note_deallocations(1);
        assert_eq!(baseline_decide(&mut c), GcAction::Nothing);
        c.note_deallocations(10_000);
        assert_eq!(c.net_allocations, 0);
    }

    #[test]
    fn escalation_schedule() {
        let mut c = BaselineCounters::new(&BaselineConfig::default());
        let seq: Vec<GcAction> = (0..100).map(|_| trigger(&mut c)).collect();
        for (i, a) in seq.iter().enumerate() {
            let n = i + 1;
            let expected = if n % 100 == 0 {
                GcAction::Collect(3)
            } else if n % 10 == 0 {
                GcAction::Collect(2)
            } else {
                GcAction::Collect(1)
            };
            assert_eq!(*a, expected, "trigger {n}");
        }
        assert_eq!(c.triggers, vec![0, 0]);
    }

    #[test]
    fn full_collection_resets() {
        let mut c = BaselineCounters::new(&BaselineConfig::default());
        for _ in 0..9 {
            trigger(&mut c);
        }
        c.note_full_collection();
        assert_eq!(trigger(&mut c), GcAction::Collect(1));
    }

    #[test]
    fn threshold_count_must_match_generations() {
        assert!(BaselineConfig::default().validate(3).is_ok());
        assert!(BaselineConfig::default().validate(2).is_err());
        let single = BaselineConfig {
            thresholds: vec![5],
        };
        let mut c = BaselineCounters::new(&single);
        for _ in 0..5 {
            c.note_allocation();
        }
        assert_eq!(baseline_decide(&mut c), GcAction::Collect(1));
    }
}
