use learned_gc::mdp::action_set;
use learned_gc::policy::snapshot::{read_snapshot, write_snapshot};
use learned_gc::policy::{
    apply_reward, opt_action, q_update, select_action, LearnerConfig, QTable, SaturationInit,
    TransitionBuffer,
};
use learned_gc::{GcAction, GcState, SiteId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn st(site: u32, bin: u16) -> GcState {
    GcState {
        site: SiteId(site),
        mem_bin: bin,
    }
}

const INIT: SaturationInit = SaturationInit {
    saturation_bin: 64,
    full_generation: 3,
    value: -100.0,
};

proptest! {
    #[test]
    fn update_is_a_convex_step(q in -1e3f64..1e3, r in -1.0f64..1.0, next in -1e3f64..1e3,
                               alpha in 0.001f64..=1.0, gamma in 0.0f64..=1.0) {
        let target = r + gamma * next;
        let got = q_update(q, r, next, alpha, gamma);
        prop_assert!((got - ((1.0 - alpha) * q + alpha * target)).abs() < 1e-9);
        // alpha = 1 overwrites with the target
        prop_assert!((q_update(q, r, next, 1.0, gamma) - target).abs() < 1e-12);
    }

    #[test]
    fn greedy_choice_is_the_first_argmax(values in prop::collection::vec(-5i32..5, 4)) {
        let mut table = QTable::new(3);
        let s = st(1, 3);
        for (i, v) in values.iter().enumerate() {
            table.set(s, GcAction::from_index(i), f64::from(*v));
        }
        let (a, v) = opt_action(&mut table, &s, &action_set(3), None);
        let best = *values.iter().max().unwrap();
        prop_assert_eq!(v, f64::from(best));
        prop_assert_eq!(a.index(), values.iter().position(|x| *x == best).unwrap());
    }

    #[test]
    fn snapshot_round_trips(cells in prop::collection::vec((0u32..50, 0u16..65, 0usize..4, -1e6f64..1e6), 0..40)) {
        let mut table = QTable::new(3);
        for (site, bin, a, v) in &cells {
            table.set(st(*site, *bin), GcAction::from_index(*a), *v);
        }
        let mut buf = Vec::new();
        write_snapshot(&table, &mut buf).unwrap();
        let back = read_snapshot(&buf[..], 3).unwrap();
        prop_assert_eq!(back, table);
    }

    #[test]
    fn greedy_selection_never_explores(seed in any::<u64>(), bin in 0u16..64) {
        let mut table = QTable::new(3);
        let s = st(2, bin);
        table.set(s, GcAction::Collect(2), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LearnerConfig::default();
        for _ in 0..50 {
            prop_assert_eq!(select_action(&mut table, &s, &cfg, 0.0, &action_set(3), None, &mut rng), GcAction::Collect(2));
        }
    }
}

#[test]
fn default_parameters_update() {
    // alpha = 0.1, gamma = 0.9999
    let got = q_update(2.0, 0.5, 3.0, 0.1, 0.9999);
    let want = 2.0 + 0.1 * (0.5 + 0.9999 * 3.0 - 2.0);
    assert!((got - want).abs() < 1e-12);
    assert_eq!(q_update(7.0, 0.25, 0.0, 1.0, 0.9999), 0.25);
}

#[test]
fn saturation_rows_start_penalized() {
    let mut table = QTable::new(3);
    let sat = st(9, 64);
    let (a, v) = opt_action(&mut table, &sat, &action_set(3), Some(&INIT));
    assert_eq!(a, GcAction::Collect(3));
    assert_eq!(v, 0.0);
    for i in 0..3 {
        assert_eq!(table.get(&sat, GcAction::from_index(i)), -100.0);
    }
    // one bin below is untouched
    let below = st(9, 63);
    assert_eq!(
        opt_action(&mut table, &below, &action_set(3), Some(&INIT)).0,
        GcAction::Nothing
    );
    assert!(table.row(&below).is_none());
}

#[test]
fn reward_credits_completed_records_in_order() {
    let cfg = LearnerConfig::default();
    let mut table = QTable::new(3);
    let mut buffer = TransitionBuffer::new();
    buffer.record_transition(st(1, 0), GcAction::Nothing, 0, false);
    buffer.record_transition(st(1, 0), GcAction::Nothing, 0, false);
    buffer.record_transition(st(2, 0), GcAction::Collect(1), 10, false);
    let mut eps = 0.2;
    let s = apply_reward(&mut table, &mut buffer, &cfg, None, 1.0, 10_000, &mut eps).unwrap();
    assert_eq!(s.records_applied, 2);
    assert_eq!(buffer.len(), 1);
    // both records update the same cell, in order
    let first = q_update(0.0, 1.0, 0.0, 0.1, 0.9999);
    let second = q_update(first, 1.0, 0.0, 0.1, 0.9999);
    assert!((table.get(&st(1, 0), GcAction::Nothing) - second).abs() < 1e-12);
    assert!((eps - 0.2 * 0.98).abs() < 1e-15);
    assert!(apply_reward(&mut table, &mut buffer, &cfg, None, 1.5, 10_000, &mut eps).is_err());
}
