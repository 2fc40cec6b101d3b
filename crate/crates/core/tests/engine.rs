use std::collections::BTreeSet;

use cn2f_core::sim::{EventId, RngStream, SimTime, Simulator};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Schedule(SimTime),
    Cancel(usize),
    Run(SimTime),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0u64..500).prop_map(Op::Schedule),
        1 => any::<usize>().prop_map(Op::Cancel),
        1 => (0u64..200).prop_map(Op::Run),
    ]
}

/// Fired `(at, id)` pairs; each handled event may schedule a follow-up.
fn replay(ops: &[Op]) -> (Vec<(SimTime, u64)>, BTreeSet<u64>) {
    let mut sim: Simulator<u32> = Simulator::new();
    let mut ids: Vec<EventId> = Vec::new();
    let mut cancelled = BTreeSet::new();
    let mut fired = Vec::new();
    for op in ops {
        match *op {
            Op::Schedule(delay) => ids.push(sim.schedule_in(delay, 0)),
            Op::Cancel(i) if !ids.is_empty() => {
                let id = ids[i % ids.len()];
                if sim.cancel(id) {
                    cancelled.insert(id.0);
                }
            }
            Op::Cancel(_) => {}
            Op::Run(span) => {
                let end = sim.now() + span;
                sim.run_until(end, |s, ev| {
                    fired.push((ev.at, ev.id.0));
                    if ev.kind < 2 {
                        s.schedule_in(ev.at % 7, ev.kind + 1);
                    }
                })
                .unwrap();
                assert_eq!(sim.now(), end);
            }
        }
    }
    (fired, cancelled)
}

proptest! {
    #[test]
    fn firing_order_and_cancellation(ops in prop::collection::vec(op(), 0..200)) {
        let (fired, cancelled) = replay(&ops);
        for w in fired.windows(2) {
            prop_assert!(w[0] < w[1], "{:?} fired before {:?}", w[0], w[1]);
        }
        for (_, id) in &fired {
            prop_assert!(!cancelled.contains(id));
        }
    }

    #[test]
    fn replay_is_deterministic(ops in prop::collection::vec(op(), 0..200)) {
        prop_assert_eq!(replay(&ops), replay(&ops));
    }

    #[test]
    fn seeded_streams_repeat(seed in any::<u64>(), n in 0usize..100) {
        let mut a = RngStream::new(seed);
        let mut b = RngStream::new(seed);
        for _ in 0..n {
            prop_assert_eq!(a.next_u64(), b.next_u64());
            prop_assert_eq!(a.below(3, 17), b.below(3, 17));
        }
        prop_assert_eq!(a.counter(), 2 * n as u64);
    }
}

#[test]
fn thousand_random_events_replay_identically() {
    let run = |seed| {
        let mut rng = RngStream::new(seed);
        let mut sim: Simulator<u64> = Simulator::new();
        for i in 0..1000 {
            sim.schedule(rng.below(0, 10_000), i).unwrap();
        }
        let mut order = Vec::new();
        sim.run_until(10_000, |_, ev| order.push((ev.at, ev.kind)))
            .unwrap();
        order
    };
    let a = run(42);
    assert_eq!(a.len(), 1000);
    assert_eq!(a, run(42));
    assert_ne!(a, run(43));
}

#[test]
fn simulators_move_between_threads() {
    let mut sim: Simulator<&'static str> = Simulator::new();
    sim.schedule(5, "x").unwrap();
    let fired = std::thread::spawn(move || sim.run_until(10, |_, _| {}).unwrap())
        .join()
        .unwrap();
    assert_eq!(fired, 1);
}
