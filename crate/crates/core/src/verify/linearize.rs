//! Exhaustive witness search for small histories.

use std::collections::HashSet;

use serde::Serialize;

use super::history::{well_formed, OpEvent};
use super::oracle::{admits, SeqState};

/// Histories longer than this are refused by [`check_linearizable`].
pub const DEFAULT_BOUND: usize = 8;

/// Largest bound [`check_linearizable_bounded`] accepts.
pub const MAX_BOUND: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Linearizability {
    /// `witness[i]` is the index into the history of the i-th operation in a
    /// legal sequential order.
    Linearizable { witness: Vec<usize> },
    NotLinearizable,
    BoundExceeded { ops: usize, bound: usize },
    Malformed(String),
}

impl Linearizability {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Linearizability::Linearizable { .. })
    }
}

pub fn check_linearizable(history: &[OpEvent]) -> Linearizability {
    check_linearizable_bounded(history, DEFAULT_BOUND)
}

/// Searches for a total order of `history` that respects real time and
/// replays on the sequential model from an empty queue.
pub fn check_linearizable_bounded(history: &[OpEvent], bound: usize) -> Linearizability {
    let bound = bound.min(MAX_BOUND);
    if history.len() > bound {
        return Linearizability::BoundExceeded {
            ops: history.len(),
            bound,
        };
    }
    if let Err(e) = well_formed(history) {
        return Linearizability::Malformed(e);
    }
    // before[i]: operations that must be linearized ahead of i.
    let before: Vec<u64> = history
        .iter()
        .map(|e| {
            history
                .iter()
                .enumerate()
                .filter(|(_, f)| f.precedes(e))
                .fold(0u64, |m, (j, _)| m | 1 << j)
        })
        .collect();
    let mut search = Search {
        history,
        before: &before,
        dead: HashSet::new(),
        order: Vec::with_capacity(history.len()),
    };
    if search.run(0, SeqState::new()) {
        Linearizability::Linearizable {
            witness: search.order,
        }
    } else {
        Linearizability::NotLinearizable
    }
}

struct Search<'h> {
    history: &'h [OpEvent],
    before: &'h [u64],
    /// (placed set, state) pairs already known to lead nowhere.
    dead: HashSet<(u64, SeqState)>,
    order: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, placed: u64, state: SeqState) -> bool {
        if placed.count_ones() as usize == self.history.len() {
            return true;
        }
        if self.dead.contains(&(placed, state.clone())) {
            return false;
        }
        for i in 0..self.history.len() {
            let bit = 1u64 << i;
            if placed & bit != 0 || self.before[i] & !placed != 0 {
                continue;
            }
            let e = &self.history[i];
            if let Some(next) = admits(&state, &e.call, &e.result) {
                self.order.push(i);
                if self.run(placed | bit, next) {
                    return true;
                }
                self.order.pop();
            }
        }
        self.dead.insert((placed, state));
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::history::{OpCall, OpResult, OWNER, STEALER};
    use crate::Proportion;

    fn ev(thread: usize, call: OpCall, result: OpResult, invoke: u64, response: u64) -> OpEvent {
        OpEvent {
            thread,
            call,
            result,
            invoke,
            response,
        }
    }

    fn push(b: &[u64], i: u64, r: u64) -> OpEvent {
        ev(OWNER, OpCall::Push { batch: b.to_vec() }, OpResult::Pushed, i, r)
    }

    fn pop(x: Option<u64>, i: u64, r: u64) -> OpEvent {
        ev(OWNER, OpCall::Pop, OpResult::Popped(x), i, r)
    }

    fn steal(res: OpResult, i: u64, r: u64) -> OpEvent {
        ev(STEALER, OpCall::Steal { p: Proportion::HALF }, res, i, r)
    }

    #[test]
    fn empty_history() {
        assert_eq!(check_linearizable(&[]), Linearizability::Linearizable { witness: vec![] });
    }

    #[test]
    fn sequential_history_is_its_own_witness() {
        let h = [push(&[1, 2, 3, 4], 0, 1), steal(OpResult::Stolen(vec![3, 4]), 2, 3), pop(Some(1), 4, 5)];
        assert_eq!(check_linearizable(&h), Linearizability::Linearizable { witness: vec![0, 1, 2] });
    }

    #[test]
    fn pop_of_unpushed_payload_is_rejected() {
        let h = [push(&[1], 0, 1), pop(Some(7), 2, 3)];
        assert_eq!(check_linearizable(&h), Linearizability::NotLinearizable);
    }

    #[test]
    fn overlap_allows_reordering() {
        // The steal starts before the push but sees its cells.
        let h = [steal(OpResult::Stolen(vec![2]), 0, 5), push(&[1, 2], 1, 2)];
        assert_eq!(check_linearizable(&h), Linearizability::Linearizable { witness: vec![1, 0] });
    }

    #[test]
    fn real_time_order_is_enforced() {
        // Same results, but the steal finished before the push began.
        let h = [steal(OpResult::Stolen(vec![2]), 0, 1), push(&[1, 2], 2, 3)];
        assert_eq!(check_linearizable(&h), Linearizability::NotLinearizable);
    }

    #[test]
    fn duplicated_payload_is_rejected() {
        let h = [
            push(&[1, 2, 3, 4], 0, 1),
            steal(OpResult::Stolen(vec![3, 4]), 2, 9),
            pop(Some(1), 3, 4),
            pop(Some(2), 5, 6),
            pop(Some(3), 7, 8),
        ];
        assert_eq!(check_linearizable(&h), Linearizability::NotLinearizable);
    }

    #[test]
    fn contention_fits_anywhere() {
        let h = [push(&[1, 2], 0, 3), steal(OpResult::Contention, 1, 2), pop(Some(1), 4, 5)];
        assert!(check_linearizable(&h).is_linearizable());
    }

    #[test]
    fn wrong_empty_is_rejected() {
        let h = [push(&[1, 2, 3, 4], 0, 1), steal(OpResult::Empty, 2, 3)];
        assert_eq!(check_linearizable(&h), Linearizability::NotLinearizable);
    }

    #[test]
    fn bound_is_explicit() {
        let h: Vec<OpEvent> = (0..9).map(|i| pop(None, 2 * i, 2 * i + 1)).collect();
        assert_eq!(check_linearizable(&h), Linearizability::BoundExceeded { ops: 9, bound: 8 });
        assert!(check_linearizable_bounded(&h, 9).is_linearizable());
    }

    #[test]
    fn malformed_history_is_reported() {
        let h = [pop(None, 0, 3), pop(None, 1, 2)];
        assert!(matches!(check_linearizable(&h), Linearizability::Malformed(_)));
    }

    /// Brute force over all permutations, for cross-checking the search.
    fn brute_force(h: &[OpEvent]) -> bool {
        fn go(h: &[OpEvent], used: &mut Vec<bool>, state: SeqState) -> bool {
            if used.iter().all(|&u| u) {
                return true;
            }
            for i in 0..h.len() {
                if used[i] || (0..h.len()).any(|j| !used[j] && j != i && h[j].precedes(&h[i])) {
                    continue;
                }
                if let Some(next) = admits(&state, &h[i].call, &h[i].result) {
                    used[i] = true;
                    if go(h, used, next) {
                        return true;
                    }
                    used[i] = false;
                }
            }
            false
        }
        go(h, &mut vec![false; h.len()], SeqState::new())
    }

    proptest::proptest! {
        #[test]
        fn agrees_with_brute_force(
            owner in proptest::collection::vec((0u8..3, 1u64..4), 0..4),
            stealer in proptest::collection::vec((0u8..4, 0u64..3), 0..3),
            stamps in proptest::collection::vec(0u64..20, 14),
        ) {
            // Random calls, random plausible results, random overlapping stamps.
            let mut h = Vec::new();
            let mut t = 0;
            for (k, (op, x)) in owner.iter().enumerate() {
                let (call, res) = match op {
                    0 => (OpCall::Push { batch: (10 * k as u64..10 * k as u64 + x).collect() }, OpResult::Pushed),
                    1 => (OpCall::Pop, OpResult::Popped(Some(10 * (*x % 3)))),
                    _ => (OpCall::Pop, OpResult::Popped(None)),
                };
                h.push(ev(OWNER, call, res, t, t + 1 + stamps[k] % 3));
                t += 2 + stamps[k] % 3;
            }
            let mut t = stamps[13] % 4;
            for (k, (op, x)) in stealer.iter().enumerate() {
                let res = match op {
                    0 => OpResult::Empty,
                    1 => OpResult::Contention,
                    _ => OpResult::Stolen(vec![*x * 10, *x * 10 + 1]),
                };
                h.push(ev(STEALER, OpCall::Steal { p: Proportion::HALF }, res, 2 * t + 1, 2 * t + 2 + stamps[4 + k] % 5 * 2));
                t += 2 + stamps[4 + k] % 5;
            }
            // Keep stamps distinct across threads: owner even, stealer odd.
            for e in h.iter_mut().filter(|e| e.thread == OWNER) {
                e.invoke *= 2;
                e.response *= 2;
            }
            let expected = brute_force(&h);
            proptest::prop_assert_eq!(check_linearizable(&h).is_linearizable(), expected);
        }
    }
}
