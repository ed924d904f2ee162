//! Owner bursts aimed at the window between a steal's consistency check and
//! its sever.
//!
//! The stealer thread runs with a hook that either parks it at a chosen
//! [`StealPhase`] until the owner has finished a burst of pops and pushes, or
//! yields at both phases while the owner yields between its operations. Each
//! iteration is a fresh queue; afterwards the owner drains it and the
//! iteration is accepted only if the steal can be placed somewhere in the
//! owner's sequence such that every result and the final contents agree with
//! the sequential model. For an aborted steal this means the owner saw exactly
//! what it would have seen with no steal at all.

use std::cell::Cell;
use std::rc::Rc;
use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::history::{Clock, OpCall, OpEvent, OpResult, Payload, Recorder, OWNER, STEALER};
use super::oracle::{admits, sequential_oracle_apply, SeqState};
use crate::sync::{hook, Point, StealPhase};
use crate::{new_queue, Batch, Owner, Proportion, StealOutcome, Stealer};

#[derive(Clone, Debug, Serialize)]
pub struct RaceConfig {
    pub iterations: u64,
    pub seed: u64,
    /// Longest initial queue.
    pub max_len: usize,
    /// Run no owner operations during steals.
    pub owner_idle: bool,
}

impl Default for RaceConfig {
    fn default() -> Self {
        RaceConfig {
            iterations: 100_000,
            seed: 0,
            max_len: 48,
            owner_idle: false,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RaceReport {
    pub iterations: u64,
    /// Iterations in which the stealer reached its pause point.
    pub windows_hit: u64,
    pub stolen: u64,
    pub empty: u64,
    pub contention: u64,
    /// Owner operations executed while the stealer was parked.
    pub ops_in_window: u64,
    pub violations: Vec<String>,
}

impl RaceReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
enum Mode {
    Pause(StealPhase),
    Yield,
}

struct Job {
    stealer: Stealer<Payload>,
    call: OpCall,
    mode: Mode,
}

enum Msg {
    Window,
    Done(OpEvent),
}

fn steal_thread(jobs: mpsc::Receiver<Job>, out: mpsc::Sender<Msg>, resume: mpsc::Receiver<()>, clock: &Clock) {
    let mode: Rc<Cell<Option<Mode>>> = Rc::new(Cell::new(None));
    let hook_mode = Rc::clone(&mode);
    let hook_out = out.clone();
    let _guard = hook::install(move |point| {
        let Point::Phase(phase) = point else { return };
        match hook_mode.get() {
            Some(Mode::Pause(at)) if at == phase => {
                hook_mode.set(None);
                hook_out.send(Msg::Window).expect("owner gone");
                resume.recv().expect("owner gone");
            }
            Some(Mode::Yield) => {
                for _ in 0..3 {
                    std::thread::yield_now();
                }
            }
            _ => {}
        }
    });
    for mut job in jobs {
        mode.set(Some(job.mode));
        let mut rec = Recorder::new(clock, STEALER);
        rec.record(job.call, |call| {
            let outcome = match call {
                OpCall::StealOpt { p } => job.stealer.steal_optimized(*p),
                OpCall::Steal { p } => job.stealer.steal(*p),
                _ => unreachable!("stealer only steals"),
            };
            match outcome {
                StealOutcome::Stolen(b) => OpResult::Stolen(b.into_iter().collect()),
                StealOutcome::Empty => OpResult::Empty,
                StealOutcome::Contention => OpResult::Contention,
            }
        });
        mode.set(None);
        let event = rec.into_events().pop().expect("one event");
        if out.send(Msg::Done(event)).is_err() {
            return;
        }
    }
}

/// Owner operations of one iteration, prepared before the steal starts.
fn plan_burst(rng: &mut ChaCha8Rng, len: usize, next_id: &mut Payload) -> Vec<OpCall> {
    let pops = match rng.gen_range(0..6) {
        0 => 1,
        1 => len / 2,
        2 => len / 2 + 1,
        3 => len,
        4 => len + 2,
        _ => rng.gen_range(0..=len),
    };
    let mut ops = vec![OpCall::Pop; pops];
    if rng.gen_bool(0.25) {
        let k = rng.gen_range(1..=4);
        let batch = (*next_id..*next_id + k).collect();
        *next_id += k;
        let at = rng.gen_range(0..=ops.len());
        ops.insert(at, OpCall::Push { batch });
    }
    ops
}

fn run_owner_op(owner: &mut Owner<Payload>, call: &OpCall) -> OpResult {
    match call {
        OpCall::Push { batch } => {
            owner.push_batch(Batch::make(batch.iter().copied()));
            OpResult::Pushed
        }
        OpCall::Pop => OpResult::Popped(owner.pop()),
        _ => unreachable!("owner never steals"),
    }
}

/// Whether the steal fits somewhere in the owner's sequence, given the
/// starting contents and the contents left at the end.
fn explainable(initial: &SeqState, owner_ops: &[OpEvent], steal: &OpEvent, residual: &[Payload]) -> bool {
    'slot: for slot in 0..=owner_ops.len() {
        // Real time: ops finished before the steal began go first, ops begun
        // after it finished go after.
        if owner_ops[..slot].iter().any(|e| steal.precedes(e)) || owner_ops[slot..].iter().any(|e| e.precedes(steal)) {
            continue;
        }
        let mut state = initial.clone();
        for (i, e) in owner_ops.iter().enumerate() {
            if i == slot {
                match admits(&state, &steal.call, &steal.result) {
                    Some(next) => state = next,
                    None => continue 'slot,
                }
            }
            let (next, expected) = sequential_oracle_apply(&state, &e.call);
            if expected != e.result {
                continue 'slot;
            }
            state = next;
        }
        if slot == owner_ops.len() {
            match admits(&state, &steal.call, &steal.result) {
                Some(next) => state = next,
                None => continue,
            }
        }
        if state.items() == residual {
            return true;
        }
    }
    false
}

pub fn run_steal_window_race(cfg: &RaceConfig) -> RaceReport {
    let mut report = RaceReport::default();
    let clock = Clock::new();
    let (job_tx, job_rx) = mpsc::channel::<Job>();
    let (msg_tx, msg_rx) = mpsc::channel::<Msg>();
    let (resume_tx, resume_rx) = mpsc::channel::<()>();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut next_id: Payload = 0;
    let max_len = cfg.max_len.max(2);

    std::thread::scope(|s| {
        let clock = &clock;
        s.spawn(move || steal_thread(job_rx, msg_tx, resume_rx, clock));

        for iteration in 0..cfg.iterations {
            let len = rng.gen_range(2..=max_len);
            let initial: Vec<Payload> = (next_id..next_id + len as u64).collect();
            next_id += len as u64;
            let (mut owner, stealer) = new_queue();
            owner.push_batch(Batch::make(initial.iter().copied()));

            let p = if rng.gen_bool(0.5) {
                Proportion::HALF
            } else {
                Proportion::new(0.25).expect("in range")
            };
            let call = if rng.gen_bool(0.5) {
                OpCall::StealOpt { p }
            } else {
                OpCall::Steal { p }
            };
            let mode = match rng.gen_range(0..4) {
                0 | 1 => Mode::Pause(StealPhase::BeforeSever),
                2 => Mode::Pause(StealPhase::Traversed),
                _ => Mode::Yield,
            };
            let burst = if cfg.owner_idle {
                Vec::new()
            } else {
                plan_burst(&mut rng, len, &mut next_id)
            };

            let mut rec = Recorder::new(clock, OWNER);
            job_tx.send(Job { stealer, call, mode }).expect("stealer thread gone");
            let steal_event = match mode {
                Mode::Pause(_) => {
                    let first = msg_rx.recv().expect("stealer thread gone");
                    if let Msg::Window = first {
                        report.windows_hit += 1;
                        report.ops_in_window += burst.len() as u64;
                    }
                    for call in &burst {
                        rec.record(call.clone(), |c| run_owner_op(&mut owner, c));
                    }
                    match first {
                        Msg::Window => {
                            resume_tx.send(()).expect("stealer thread gone");
                            match msg_rx.recv().expect("stealer thread gone") {
                                Msg::Done(e) => e,
                                Msg::Window => unreachable!("one pause per steal"),
                            }
                        }
                        Msg::Done(e) => e,
                    }
                }
                Mode::Yield => {
                    for call in &burst {
                        rec.record(call.clone(), |c| run_owner_op(&mut owner, c));
                        std::thread::yield_now();
                    }
                    match msg_rx.recv().expect("stealer thread gone") {
                        Msg::Done(e) => e,
                        Msg::Window => unreachable!("no pause in yield mode"),
                    }
                }
            };

            match steal_event.result {
                OpResult::Stolen(_) => report.stolen += 1,
                OpResult::Empty => report.empty += 1,
                _ => report.contention += 1,
            }

            let size = owner.size();
            let mut residual = Vec::new();
            while let Some(x) = owner.pop() {
                residual.push(x);
            }
            if size != residual.len() {
                report.violations.push(format!(
                    "iteration {iteration}: size {size} but {} cells remain",
                    residual.len()
                ));
            }
            let owner_events = rec.into_events();
            if !explainable(&SeqState::from_items(initial), &owner_events, &steal_event, &residual) {
                report.violations.push(format!(
                    "iteration {iteration} ({mode:?}): steal {:?} -> {:?} with owner {:?}, residual {:?}",
                    steal_event.call,
                    steal_event.result,
                    owner_events.iter().map(|e| (&e.call, &e.result)).collect::<Vec<_>>(),
                    residual
                ));
            }
            report.iterations += 1;
        }
        drop(job_tx);
    });
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(call: OpCall, result: OpResult, invoke: u64, response: u64) -> OpEvent {
        OpEvent {
            thread: OWNER,
            call,
            result,
            invoke,
            response,
        }
    }

    #[test]
    fn explains_steal_inside_pop_burst() {
        let initial = SeqState::from_items([1, 2, 3, 4]);
        let steal = OpEvent {
            thread: STEALER,
            call: OpCall::Steal { p: Proportion::HALF },
            result: OpResult::Stolen(vec![3, 4]),
            invoke: 0,
            response: 10,
        };
        let owner = [
            ev(OpCall::Pop, OpResult::Popped(Some(1)), 1, 2),
            ev(OpCall::Pop, OpResult::Popped(Some(2)), 3, 4),
            ev(OpCall::Pop, OpResult::Popped(None), 5, 6),
        ];
        assert!(explainable(&initial, &owner, &steal, &[]));
        // A duplicate: the owner also got 3.
        let owner_dup = [
            ev(OpCall::Pop, OpResult::Popped(Some(1)), 1, 2),
            ev(OpCall::Pop, OpResult::Popped(Some(2)), 3, 4),
            ev(OpCall::Pop, OpResult::Popped(Some(3)), 5, 6),
        ];
        assert!(!explainable(&initial, &owner_dup, &steal, &[]));
    }

    #[test]
    fn aborted_steal_must_leave_contents_alone() {
        let initial = SeqState::from_items([1, 2, 3, 4]);
        let steal = OpEvent {
            thread: STEALER,
            call: OpCall::Steal { p: Proportion::HALF },
            result: OpResult::Contention,
            invoke: 0,
            response: 10,
        };
        let owner = [ev(OpCall::Pop, OpResult::Popped(Some(1)), 1, 2)];
        assert!(explainable(&initial, &owner, &steal, &[2, 3, 4]));
        assert!(!explainable(&initial, &owner, &steal, &[2, 3]));
    }

    #[test]
    fn idle_owner_never_sees_contention() {
        let r = run_steal_window_race(&RaceConfig {
            iterations: 500,
            seed: 3,
            owner_idle: true,
            ..RaceConfig::default()
        });
        assert!(r.is_clean(), "{:?}", r.violations);
        assert_eq!(r.contention, 0);
        assert_eq!(r.iterations, 500);
    }

    #[test]
    fn short_adversarial_run_is_clean() {
        let r = run_steal_window_race(&RaceConfig {
            iterations: 2_000,
            seed: 11,
            ..RaceConfig::default()
        });
        assert!(r.is_clean(), "{:?}", &r.violations[..r.violations.len().min(3)]);
        assert!(r.contention > 0 && r.stolen > 0);
        assert!(r.windows_hit > 0);
    }
}
