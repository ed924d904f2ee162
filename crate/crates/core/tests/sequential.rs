//! Single-threaded runs of every implementation against the reference model.

use bulksteal::baseline::{ChaseLevQueue, LfQueue, LockedQueue, QueueAdapter};
use bulksteal::verify::{run_script, sequential_oracle_apply, OpCall, OpResult, Payload, SeqState};
use bulksteal::Proportion;
use proptest::prelude::*;

fn calls() -> impl Strategy<Value = Vec<OpCall>> {
    let op = prop_oneof![
        3 => (1usize..20).prop_map(|n| OpCall::Push { batch: vec![0; n] }),
        2 => Just(OpCall::Pop),
        1 => (1u32..=50).prop_map(|pct| OpCall::Steal { p: Proportion::percent(pct).unwrap() }),
        1 => (1u32..=50).prop_map(|pct| OpCall::StealOpt { p: Proportion::percent(pct).unwrap() }),
    ];
    prop::collection::vec(op, 0..60).prop_map(|mut v| {
        let mut next: Payload = 1;
        for call in &mut v {
            if let OpCall::Push { batch } = call {
                for x in batch.iter_mut() {
                    *x = next;
                    next += 1;
                }
            }
        }
        v
    })
}

fn oracle(calls: &[OpCall]) -> Vec<OpResult> {
    let mut state = SeqState::new();
    calls
        .iter()
        .map(|c| {
            let (next, r) = sequential_oracle_apply(&state, c);
            state = next;
            r
        })
        .collect()
}

fn check<A: QueueAdapter<Payload>>(calls: &[OpCall]) -> Result<(), TestCaseError> {
    prop_assert_eq!(run_script::<A>(calls), oracle(calls));
    Ok(())
}

proptest! {
    #[test]
    fn lock_free_queue_matches_model(calls in calls()) {
        check::<LfQueue>(&calls)?;
    }

    #[test]
    fn locked_queue_matches_model(calls in calls()) {
        check::<LockedQueue>(&calls)?;
    }

    #[test]
    fn chase_lev_matches_model(calls in calls()) {
        check::<ChaseLevQueue>(&calls)?;
    }
}

#[test]
fn pops_return_most_recent_push_first_and_steals_take_the_oldest() {
    let p = Proportion::HALF;
    let calls = vec![
        OpCall::Push { batch: vec![1, 2, 3] },
        OpCall::Push { batch: vec![4, 5, 6] },
        OpCall::Pop,
        OpCall::Steal { p },
        OpCall::StealOpt { p },
        OpCall::Pop,
        OpCall::Pop,
        OpCall::Steal { p },
    ];
    let expected = vec![
        OpResult::Pushed,
        OpResult::Pushed,
        OpResult::Popped(Some(4)),
        OpResult::Stolen(vec![2, 3]),
        OpResult::Stolen(vec![1]),
        OpResult::Popped(Some(5)),
        OpResult::Popped(Some(6)),
        OpResult::Empty,
    ];
    assert_eq!(oracle(&calls), expected);
    assert_eq!(run_script::<LfQueue>(&calls), expected);
}
