//! Recorded operation histories.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::Proportion;

/// Task payload used throughout the harness.
pub type Payload = u64;

/// Owner thread id in recorded histories.
pub const OWNER: usize = 0;
/// Stealer thread id in recorded histories.
pub const STEALER: usize = 1;

/// An invoked operation and its argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpCall {
    Push { batch: Vec<Payload> },
    Pop,
    Steal { p: Proportion },
    StealOpt { p: Proportion },
}

impl OpCall {
    pub fn is_steal(&self) -> bool {
        matches!(self, OpCall::Steal { .. } | OpCall::StealOpt { .. })
    }
}

/// What an operation returned.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "payloads", rename_all = "snake_case")]
pub enum OpResult {
    Pushed,
    Popped(Option<Payload>),
    Stolen(Vec<Payload>),
    Empty,
    Contention,
}

/// One completed operation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpEvent {
    pub thread: usize,
    pub call: OpCall,
    pub result: OpResult,
    pub invoke: u64,
    pub response: u64,
}

impl OpEvent {
    /// Whether `self` responded before `other` was invoked.
    pub fn precedes(&self, other: &OpEvent) -> bool {
        self.response < other.invoke
    }
}

/// Shared source of strictly increasing stamps.
#[derive(Debug, Default)]
pub struct Clock(AtomicU64);

impl Clock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }
}

/// Per-thread event buffer.
#[derive(Debug)]
pub struct Recorder<'c> {
    clock: &'c Clock,
    thread: usize,
    events: Vec<OpEvent>,
}

impl<'c> Recorder<'c> {
    pub fn new(clock: &'c Clock, thread: usize) -> Self {
        Recorder {
            clock,
            thread,
            events: Vec::new(),
        }
    }

    /// Stamps `run` on both sides and keeps the event.
    pub fn record(&mut self, call: OpCall, run: impl FnOnce(&OpCall) -> OpResult) -> &OpResult {
        let invoke = self.clock.tick();
        let result = run(&call);
        let response = self.clock.tick();
        self.events.push(OpEvent {
            thread: self.thread,
            call,
            result,
            invoke,
            response,
        });
        &self.events.last().expect("just pushed").result
    }

    pub fn into_events(self) -> Vec<OpEvent> {
        self.events
    }
}

/// Merges per-thread buffers into one history ordered by invocation.
pub fn merge_histories(parts: impl IntoIterator<Item = Vec<OpEvent>>) -> Vec<OpEvent> {
    let mut all: Vec<OpEvent> = parts.into_iter().flatten().collect();
    all.sort_by_key(|e| e.invoke);
    all
}

/// Checks stamp order and per-thread sequentiality.
pub fn well_formed(history: &[OpEvent]) -> Result<(), String> {
    for (i, e) in history.iter().enumerate() {
        if e.invoke >= e.response {
            return Err(format!("event {i} responds at {} before invoking at {}", e.response, e.invoke));
        }
        for (j, f) in history.iter().enumerate().skip(i + 1) {
            if e.thread == f.thread && !e.precedes(f) && !f.precedes(e) {
                return Err(format!("events {i} and {j} overlap on thread {}", e.thread));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recorder_stamps_are_ordered() {
        let clock = Clock::new();
        let mut a = Recorder::new(&clock, OWNER);
        let mut b = Recorder::new(&clock, STEALER);
        a.record(OpCall::Pop, |_| OpResult::Popped(None));
        b.record(OpCall::Steal { p: Proportion::HALF }, |_| OpResult::Empty);
        a.record(OpCall::Push { batch: vec![1] }, |_| OpResult::Pushed);
        let h = merge_histories([a.into_events(), b.into_events()]);
        assert_eq!(h.iter().map(|e| e.invoke).collect::<Vec<_>>(), vec![0, 2, 4]);
        assert!(h[0].precedes(&h[1]));
        well_formed(&h).unwrap();
    }

    #[test]
    fn overlapping_same_thread_is_malformed() {
        let e = |invoke, response| OpEvent {
            thread: OWNER,
            call: OpCall::Pop,
            result: OpResult::Popped(None),
            invoke,
            response,
        };
        assert!(well_formed(&[e(0, 3), e(1, 2)]).is_err());
        assert!(well_formed(&[e(2, 2)]).is_err());
    }

    #[test]
    fn events_serialize() {
        let e = OpEvent {
            thread: STEALER,
            call: OpCall::StealOpt { p: Proportion::new(0.25).unwrap() },
            result: OpResult::Stolen(vec![3, 4]),
            invoke: 1,
            response: 5,
        };
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"kind\":\"steal_opt\""), "{json}");
        let back: OpEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}
