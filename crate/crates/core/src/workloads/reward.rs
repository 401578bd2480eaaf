use serde::{Deserialize, Serialize};

use crate::heap::Ticks;

/// Work completed during one reward epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWindow {
    pub epoch_index: u64,
    pub work_units: u64,
    pub window_ticks: Ticks,
    /// Work units per tick.
    pub raw_rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpochAccumulator {
    pub epoch_index: u64,
    pub work_units: u64,
}

impl EpochAccumulator {
    pub fn add(&mut self, units: u64) {
        self.work_units += units;
    }
}

/// Emits the rate for the window and starts the next one.
pub fn finish_epoch(acc: &mut EpochAccumulator, window_ticks: Ticks) -> RewardWindow {
    let window = RewardWindow {
        epoch_index: acc.epoch_index,
        work_units: acc.work_units,
        window_ticks,
        raw_rate: acc.work_units as f64 / window_ticks as f64,
    };
    acc.epoch_index += 1;
    acc.work_units = 0;
    window
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_and_reset() {
        let mut acc = EpochAccumulator::default();
        assert_eq!(finish_epoch(&mut acc, 1000).raw_rate, 0.0);
        acc.add(100);
        let w = finish_epoch(&mut acc, 1000);
        assert_eq!(w.raw_rate, 0.1);
        assert_eq!(w.epoch_index, 1);
        acc.add(3);
        let w = finish_epoch(&mut acc, 1000);
        assert_eq!(w.work_units, 3);
        assert_eq!(acc.work_units, 0);
    }
}
