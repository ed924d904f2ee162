//! Sequential reference model of the queue.

use std::collections::VecDeque;

use super::history::{OpCall, OpResult, Payload};
use crate::{Proportion, MIN_STEAL_SIZE};

/// Queue contents, head first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SeqState {
    items: VecDeque<Payload>,
}

impl SeqState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items(items: impl IntoIterator<Item = Payload>) -> Self {
        SeqState {
            items: items.into_iter().collect(),
        }
    }

    pub fn items(&self) -> Vec<Payload> {
        self.items.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn steal(&mut self, p: Proportion) -> OpResult {
        let n = self.items.len();
        let k = p.steal_count(n);
        if n < MIN_STEAL_SIZE || k == 0 {
            return OpResult::Empty;
        }
        OpResult::Stolen(self.items.split_off(n - k).into())
    }
}

/// Applies `call` to a copy of `state`. The model never aborts: a steal
/// either takes `floor(len * p)` cells from the tail or reports `Empty`.
pub fn sequential_oracle_apply(state: &SeqState, call: &OpCall) -> (SeqState, OpResult) {
    let mut next = state.clone();
    let result = match call {
        OpCall::Push { batch } => {
            for &x in batch.iter().rev() {
                next.items.push_front(x);
            }
            OpResult::Pushed
        }
        OpCall::Pop => OpResult::Popped(next.items.pop_front()),
        OpCall::Steal { p } | OpCall::StealOpt { p } => next.steal(*p),
    };
    (next, result)
}

/// The state after `call` if `observed` is a legal result for it in `state`.
/// A steal that reports contention changes nothing and is legal anywhere.
pub fn admits(state: &SeqState, call: &OpCall, observed: &OpResult) -> Option<SeqState> {
    if call.is_steal() && *observed == OpResult::Contention {
        return Some(state.clone());
    }
    let (next, expected) = sequential_oracle_apply(state, call);
    (expected == *observed).then_some(next)
}
