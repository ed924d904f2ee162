//! Randomized one-owner/one-stealer runs checked for conservation.

use std::panic;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::history::{merge_histories, Clock, OpCall, OpEvent, OpResult, Payload, Recorder, OWNER, STEALER};
use crate::baseline::{ImplKind, OwnerHandle, QueueAdapter, StealerHandle, TaskBatch};
use crate::{Proportion, StealOutcome};

#[derive(Clone, Debug, Serialize)]
pub struct StressConfig {
    /// Owner operations (pushes plus pops).
    pub ops: u64,
    /// Probability that an owner operation is a push rather than a pop.
    pub push_prob: f64,
    /// Push batches have a uniform length in `1..=batch_max`.
    pub batch_max: usize,
    pub steal_prop: Proportion,
    /// Probability that a steal uses the optimized variant.
    pub optimized_share: f64,
    /// Busy-wait iterations between two steals.
    pub stealer_pause: u32,
    /// Keep the full operation history in the report.
    pub record_history: bool,
    pub seed: u64,
}

impl Default for StressConfig {
    fn default() -> Self {
        StressConfig {
            ops: 100_000,
            push_prob: 0.5,
            batch_max: 8,
            steal_prop: Proportion::HALF,
            optimized_share: 0.5,
            stealer_pause: 0,
            record_history: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{name} must be within [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("batch_max must be at least 1")]
    BatchMax,
}

impl StressConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [("push_prob", self.push_prob), ("optimized_share", self.optimized_share)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Probability { name, value });
            }
        }
        if self.batch_max == 0 {
            return Err(ConfigError::BatchMax);
        }
        Ok(())
    }
}

/// Failure of the harness itself, as opposed to a property violation.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{role} thread panicked: {message}")]
    Panicked { role: &'static str, message: String },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConservationReport {
    pub implementation: String,
    pub seed: u64,
    pub owner_ops: u64,
    pub pushed: u64,
    pub popped: u64,
    pub stolen: u64,
    pub residual: u64,
    pub steal_attempts: u64,
    pub steals_succeeded: u64,
    pub contention: u64,
    pub empty: u64,
    pub missing: Vec<Payload>,
    pub duplicated: Vec<Payload>,
    pub unknown: Vec<Payload>,
    /// Size counter once both threads have stopped.
    pub size_at_quiescence: usize,
    /// Cells drained from the queue at the end.
    pub chain_length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<OpEvent>>,
}

impl ConservationReport {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let list = |xs: &[Payload]| {
            let shown: Vec<String> = xs.iter().take(10).map(|x| x.to_string()).collect();
            let more = if xs.len() > 10 { ", ..." } else { "" };
            format!("{}{more}", shown.join(", "))
        };
        if !self.missing.is_empty() {
            v.push(format!("{} missing payloads: {}", self.missing.len(), list(&self.missing)));
        }
        if !self.duplicated.is_empty() {
            v.push(format!("{} duplicated payloads: {}", self.duplicated.len(), list(&self.duplicated)));
        }
        if !self.unknown.is_empty() {
            v.push(format!("{} payloads never pushed: {}", self.unknown.len(), list(&self.unknown)));
        }
        if self.size_at_quiescence != self.chain_length {
            v.push(format!(
                "size {} at quiescence but {} cells in the chain",
                self.size_at_quiescence, self.chain_length
            ));
        }
        v
    }

    pub fn is_clean(&self) -> bool {
        self.violations().is_empty()
    }
}

struct OwnerLog {
    popped: Vec<Payload>,
    pushed: u64,
    events: Vec<OpEvent>,
}

struct StealerLog {
    stolen: Vec<Payload>,
    attempts: u64,
    succeeded: u64,
    contention: u64,
    empty: u64,
    events: Vec<OpEvent>,
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| e.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".to_string())
}

/// Runs one owner and one stealer thread on a fresh queue of type `A`, then
/// drains it and checks that every pushed payload came out exactly once.
pub fn run_conservation<A: QueueAdapter<Payload>>(cfg: &StressConfig) -> Result<ConservationReport, HarnessError> {
    cfg.validate()?;
    let (mut owner, mut stealer) = A::create();
    let stop = AtomicBool::new(false);
    let clock = Clock::new();

    let (owner_log, stealer_log) = std::thread::scope(|s| {
        let stealer_thread = s.spawn(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x05ee_d0f5_7ea1);
            let mut rec = Recorder::new(&clock, STEALER);
            let mut log = StealerLog {
                stolen: Vec::new(),
                attempts: 0,
                succeeded: 0,
                contention: 0,
                empty: 0,
                events: Vec::new(),
            };
            while !stop.load(Ordering::Acquire) {
                let p = cfg.steal_prop;
                let call = if rng.gen_bool(cfg.optimized_share) {
                    OpCall::StealOpt { p }
                } else {
                    OpCall::Steal { p }
                };
                let mut run = |call: &OpCall| {
                    let outcome = match call {
                        OpCall::StealOpt { p } => stealer.steal_optimized(*p),
                        OpCall::Steal { p } => stealer.steal(*p),
                        _ => unreachable!("the stealer only steals"),
                    };
                    match outcome {
                        StealOutcome::Stolen(b) => OpResult::Stolen(b.into_iter().collect()),
                        StealOutcome::Empty => OpResult::Empty,
                        StealOutcome::Contention => OpResult::Contention,
                    }
                };
                let result = if cfg.record_history {
                    rec.record(call, run).clone()
                } else {
                    run(&call)
                };
                log.attempts += 1;
                match result {
                    OpResult::Stolen(items) => {
                        log.succeeded += 1;
                        log.stolen.extend(items);
                    }
                    OpResult::Empty => log.empty += 1,
                    _ => log.contention += 1,
                }
                for _ in 0..cfg.stealer_pause {
                    std::hint::spin_loop();
                }
            }
            log.events = rec.into_events();
            log
        });

        let owner_result = panic::catch_unwind(panic::AssertUnwindSafe(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut rec = Recorder::new(&clock, OWNER);
            let mut log = OwnerLog {
                popped: Vec::new(),
                pushed: 0,
                events: Vec::new(),
            };
            for _ in 0..cfg.ops {
                let call = if rng.gen_bool(cfg.push_prob) {
                    let len = rng.gen_range(1..=cfg.batch_max) as u64;
                    let batch = (log.pushed..log.pushed + len).collect();
                    log.pushed += len;
                    OpCall::Push { batch }
                } else {
                    OpCall::Pop
                };
                let mut run = |call: &OpCall| match call {
                    OpCall::Push { batch } => {
                        owner.push_batch(A::Batch::from_vec(batch.clone()));
                        OpResult::Pushed
                    }
                    _ => OpResult::Popped(owner.pop()),
                };
                let result = if cfg.record_history {
                    rec.record(call, run).clone()
                } else {
                    run(&call)
                };
                if let OpResult::Popped(Some(x)) = result {
                    log.popped.push(x);
                }
            }
            log.events = rec.into_events();
            log
        }));
        stop.store(true, Ordering::Release);
        let stealer_result = stealer_thread.join();
        (owner_result, stealer_result)
    });

    let owner_log = owner_log.map_err(|e| HarnessError::Panicked {
        role: "owner",
        message: panic_message(e),
    })?;
    let stealer_log = stealer_log.map_err(|e| HarnessError::Panicked {
        role: "stealer",
        message: panic_message(e),
    })?;

    let size_at_quiescence = owner.size();
    let mut residual = Vec::new();
    while let Some(x) = owner.pop() {
        residual.push(x);
    }

    let mut seen = vec![0u32; owner_log.pushed as usize];
    let mut unknown = Vec::new();
    for &x in owner_log.popped.iter().chain(&stealer_log.stolen).chain(&residual) {
        match seen.get_mut(x as usize) {
            Some(c) => *c += 1,
            None => unknown.push(x),
        }
    }
    let missing = (0..owner_log.pushed).filter(|&x| seen[x as usize] == 0).collect();
    let duplicated = (0..owner_log.pushed).filter(|&x| seen[x as usize] > 1).collect();

    Ok(ConservationReport {
        implementation: A::KIND.to_string(),
        seed: cfg.seed,
        owner_ops: cfg.ops,
        pushed: owner_log.pushed,
        popped: owner_log.popped.len() as u64,
        stolen: stealer_log.stolen.len() as u64,
        residual: residual.len() as u64,
        steal_attempts: stealer_log.attempts,
        steals_succeeded: stealer_log.succeeded,
        contention: stealer_log.contention,
        empty: stealer_log.empty,
        missing,
        duplicated,
        unknown,
        size_at_quiescence,
        chain_length: residual.len(),
        history: cfg
            .record_history
            .then(|| merge_histories([owner_log.events, stealer_log.events])),
    })
}

/// [`run_conservation`] for an implementation chosen at run time.
pub fn run_conservation_dyn(kind: ImplKind, cfg: &StressConfig) -> Result<ConservationReport, HarnessError> {
    crate::with_adapter!(kind, A => run_conservation::<A>(cfg))
}

/// Executes `calls` in order on one thread and returns what each produced.
pub fn run_script<A: QueueAdapter<Payload>>(calls: &[OpCall]) -> Vec<OpResult> {
    let (mut owner, mut stealer) = A::create();
    calls
        .iter()
        .map(|call| match call {
            OpCall::Push { batch } => {
                owner.push_batch(A::Batch::from_vec(batch.clone()));
                OpResult::Pushed
            }
            OpCall::Pop => OpResult::Popped(owner.pop()),
            OpCall::Steal { p } | OpCall::StealOpt { p } => {
                let outcome = if matches!(call, OpCall::StealOpt { .. }) {
                    stealer.steal_optimized(*p)
                } else {
                    stealer.steal(*p)
                };
                match outcome {
                    StealOutcome::Stolen(b) => OpResult::Stolen(b.into_iter().collect()),
                    StealOutcome::Empty => OpResult::Empty,
                    StealOutcome::Contention => OpResult::Contention,
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{ChaseLevQueue, LfQueue, LockedQueue};
    use crate::verify::oracle::{sequential_oracle_apply, SeqState};

    #[test]
    fn zero_ops_is_trivially_conserved() {
        let cfg = StressConfig {
            ops: 0,
            ..StressConfig::default()
        };
        let r = run_conservation::<LfQueue>(&cfg).unwrap();
        assert!(r.is_clean());
        assert_eq!((r.pushed, r.popped, r.stolen, r.residual), (0, 0, 0, 0));
    }

    #[test]
    fn script_matches_oracle_replay() {
        let mut calls = vec![
            OpCall::Push { batch: (1..=10).collect() },
            OpCall::Steal { p: Proportion::HALF },
        ];
        calls.extend(std::iter::repeat_n(OpCall::Pop, 5));
        let mut state = SeqState::new();
        let expected: Vec<OpResult> = calls
            .iter()
            .map(|c| {
                let (next, r) = sequential_oracle_apply(&state, c);
                state = next;
                r
            })
            .collect();
        assert_eq!(expected[1], OpResult::Stolen(vec![6, 7, 8, 9, 10]));
        assert_eq!(expected[2..], (1..=5).map(|x| OpResult::Popped(Some(x))).collect::<Vec<_>>()[..]);
        assert_eq!(run_script::<LfQueue>(&calls), expected);
        assert_eq!(run_script::<LockedQueue>(&calls), expected);
        assert_eq!(run_script::<ChaseLevQueue>(&calls), expected);
    }

    #[test]
    fn short_runs_are_clean_for_every_adapter() {
        for kind in ImplKind::ALL {
            let cfg = StressConfig {
                ops: 20_000,
                seed: 9,
                ..StressConfig::default()
            };
            let r = run_conservation_dyn(kind, &cfg).unwrap();
            assert!(r.is_clean(), "{kind}: {:?}", r.violations());
            assert_eq!(r.popped + r.stolen + r.residual, r.pushed);
        }
    }

    #[test]
    fn invalid_probability_is_a_config_error() {
        let cfg = StressConfig {
            push_prob: 1.5,
            ..StressConfig::default()
        };
        assert!(matches!(
            run_conservation::<LfQueue>(&cfg),
            Err(HarnessError::Config(ConfigError::Probability { name: "push_prob", .. }))
        ));
    }

    #[test]
    fn violations_are_listed() {
        let r = ConservationReport {
            missing: vec![3],
            duplicated: vec![4, 5],
            size_at_quiescence: 2,
            chain_length: 1,
            ..ConservationReport::default()
        };
        assert_eq!(r.violations().len(), 3);
        assert!(!r.is_clean());
    }
}
