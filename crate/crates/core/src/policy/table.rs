use rustc_hash::FxHashMap;

use crate::mdp::{BinIndex, GcAction, GcState};

/// Estimated bytes per (state, action) cell: the f64 value plus its share
/// of the row key and hash-slot bookkeeping.
pub const ENTRY_BYTES: u64 = 24;
/// Fixed cost of an empty table.
pub const TABLE_OVERHEAD_BYTES: u64 = 64;

/// Lazy initialization of saturation-bin states: every action except a
/// full collection starts at `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationInit {
    pub saturation_bin: BinIndex,
    pub full_generation: u8,
    pub value: f64,
}

/// Sparse Q table. States are materialized a row at a time; a missing row
/// reads as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_generations: u8,
    rows: FxHashMap<GcState, Box<[f64]>>,
}

impl QTable {
    pub fn new(num_generations: u8) -> Self {
        Self {
            num_generations,
            rows: FxHashMap::default(),
        }
    }

    pub fn num_generations(&self) -> u8 {
        self.num_generations
    }

    pub fn num_actions(&self) -> usize {
        self.num_generations as usize + 1
    }

    pub fn get(&self, state: &GcState, action: GcAction) -> f64 {
        self.rows.get(state).map_or(0.0, |row| row[action.index()])
    }

    pub fn set(&mut self, state: GcState, action: GcAction, value: f64) {
        self.row_mut(state)[action.index()] = value;
    }

    pub fn row(&self, state: &GcState) -> Option<&[f64]> {
        self.rows.get(state).map(|r| &r[..])
    }

    fn row_mut(&mut self, state: GcState) -> &mut [f64] {
        let n = self.num_actions();
        self.rows
            .entry(state)
            .or_insert_with(|| vec![0.0; n].into_boxed_slice())
    }

    /// Largest value over all actions of `state` (0 when the row is absent).
    pub fn max_value(&self, state: &GcState) -> f64 {
        self.rows.get(state).map_or(0.0, |row| {
            row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
    }

    /// Number of materialized states.
    pub fn states(&self) -> usize {
        self.rows.len()
    }

    /// Number of stored (state, action) cells.
    pub fn entries(&self) -> usize {
        self.rows.len() * self.num_actions()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Seeds an untouched saturation-bin state. Returns whether it did
    /// anything; repeated calls are no-ops.
    pub fn lazy_init(&mut self, state: &GcState, init: &SaturationInit) -> bool {
        if state.mem_bin != init.saturation_bin || self.rows.contains_key(state) {
            return false;
        }
        let full = GcAction::Collect(init.full_generation).index();
        let row = self.row_mut(*state);
        for (i, v) in row.iter_mut().enumerate() {
            if i != full {
                *v = init.value;
            }
        }
        true
    }

    /// All cells in (site, bin, action) order.
    pub fn sorted_entries(&self) -> Vec<(GcState, GcAction, f64)> {
        let mut states: Vec<&GcState> = self.rows.keys().collect();
        states.sort();
        states
            .into_iter()
            .flat_map(|s| {
                self.rows[s]
                    .iter()
                    .enumerate()
                    .map(move |(i, v)| (*s, GcAction::from_index(i), *v))
            })
            .collect()
    }

    pub fn table_bytes(&self) -> u64 {
        table_bytes(self)
    }
}

/// Deterministic footprint estimate: overhead plus `ENTRY_BYTES` per cell.
pub fn table_bytes(table: &QTable) -> u64 {
    TABLE_OVERHEAD_BYTES + table.entries() as u64 * ENTRY_BYTES
}

/// `argmax_a Q(state, a)` over `actions`, ties going to the earliest action.
pub fn opt_action(
    table: &mut QTable,
    state: &GcState,
    actions: &[GcAction],
    init: Option<&SaturationInit>,
) -> (GcAction, f64) {
    if let Some(init) = init {
        table.lazy_init(state, init);
    }
    let mut best = (actions[0], table.get(state, actions[0]));
    for &a in &actions[1..] {
        let v = table.get(state, a);
        if v > best.1 {
            best = (a, v);
        }
    }
    best
}
