//! Systematic exploration of owner/stealer interleavings.
//!
//! The owner and stealer sides of a [`Script`] run as two coroutines on one
//! thread against a fresh queue. Every traced atomic access, and the
//! invocation and response of every operation, suspends the running side and
//! lets the explorer pick which side performs its next event, so each
//! execution is one sequentially consistent interleaving. Executions are enumerated by dynamic partial-order
//! reduction: after each run, every access is paired with the latest
//! conflicting step of the other thread, and the alternative order is
//! scheduled unless already covered. Two accesses conflict when they touch the
//! same location and at least one writes. An invocation conflicts with a
//! response of the other thread, which makes every distinct real-time order
//! of the operations a distinct trace.
//!
//! Each execution yields a history. Histories with results and real-time
//! order not seen before for the script go to the linearizability checker.

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::time::Instant;

use corosensei::stack::DefaultStack;
use corosensei::{Coroutine, CoroutineResult, Yielder};

use serde::Serialize;

use super::history::{OpCall, OpEvent, OpResult, Payload, OWNER, STEALER};
use super::linearize::{check_linearizable_bounded, Linearizability};
use crate::sync::{hook, AccessKind, Point};
use crate::{new_queue, Batch, Owner, Proportion, StealOutcome, Stealer};

/// One owner operation; pushes carry fresh payloads.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum OwnerStep {
    Push(usize),
    Pop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StealStep {
    pub p: Proportion,
    pub optimized: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Script {
    pub owner: Vec<OwnerStep>,
    pub stealer: Vec<StealStep>,
}

impl Script {
    pub fn len(&self) -> usize {
        self.owner.len() + self.stealer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The family of scripts to explore.
#[derive(Clone, Debug, Serialize)]
pub struct ScriptFamily {
    /// Total operations over both threads.
    pub max_ops: usize,
    pub max_stealer_ops: usize,
    /// Payloads pushed over the whole script.
    pub max_payloads: usize,
    pub proportions: Vec<Proportion>,
}

impl Default for ScriptFamily {
    fn default() -> Self {
        ScriptFamily {
            max_ops: 8,
            max_stealer_ops: 2,
            max_payloads: 4,
            proportions: vec![Proportion::new(0.25).expect("in range"), Proportion::HALF],
        }
    }
}

impl ScriptFamily {
    /// Scripts that cannot be extended within the family. Every other member
    /// is a per-thread prefix of one of these, and an interleaving of a prefix
    /// reappears in the longer script with the extra operations run last, so
    /// checking the maximal scripts covers the whole family.
    pub fn maximal_scripts(&self) -> Vec<Script> {
        let mut owner_seqs = Vec::new();
        let mut steal_variants = Vec::new();
        for &p in &self.proportions {
            for optimized in [false, true] {
                steal_variants.push(StealStep { p, optimized });
            }
        }
        let mut out = Vec::new();
        for s in 1..=self.max_stealer_ops.min(self.max_ops) {
            let o = self.max_ops - s;
            owner_seqs.clear();
            owner_sequences(o, self.max_payloads, &mut Vec::new(), &mut owner_seqs);
            let mut stealer_seqs = vec![Vec::new()];
            for _ in 0..s {
                stealer_seqs = stealer_seqs
                    .into_iter()
                    .flat_map(|seq: Vec<StealStep>| {
                        steal_variants.iter().map(move |&v| {
                            let mut next = seq.clone();
                            next.push(v);
                            next
                        })
                    })
                    .collect();
            }
            for owner in &owner_seqs {
                for stealer in &stealer_seqs {
                    out.push(Script {
                        owner: owner.clone(),
                        stealer: stealer.clone(),
                    });
                }
            }
        }
        out
    }
}

fn owner_sequences(len: usize, budget: usize, prefix: &mut Vec<OwnerStep>, out: &mut Vec<Vec<OwnerStep>>) {
    if prefix.len() == len {
        out.push(prefix.clone());
        return;
    }
    prefix.push(OwnerStep::Pop);
    owner_sequences(len, budget, prefix, out);
    prefix.pop();
    for k in 1..=budget {
        prefix.push(OwnerStep::Push(k));
        owner_sequences(len, budget - k, prefix, out);
        prefix.pop();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ev {
    Access { addr: usize, kind: AccessKind },
    Invoke,
    Response,
}

impl Ev {
    /// Invocations and responses touch nothing, so they conflict with no
    /// event.
    fn conflicts_with(self, other: Ev) -> bool {
        match (self, other) {
            (Ev::Access { addr: a, kind: k }, Ev::Access { addr: b, kind: l }) => a == b && k.conflicts_with(l),
            _ => false,
        }
    }

    fn is_marker(self) -> bool {
        matches!(self, Ev::Invoke | Ev::Response)
    }
}

#[derive(Clone, Copy, Debug)]
struct Step {
    thread: usize,
    ev: Ev,
    /// Sleeping threads when this step was chosen.
    sleep: u8,
    /// Next event of each thread when this step was chosen.
    pending: [Option<Ev>; 2],
}

/// A forced choice: run `thread` with `sleep` asleep.
#[derive(Clone, Copy, Debug)]
struct Planned {
    thread: usize,
    sleep: u8,
}

thread_local! {
    static YIELDER: Cell<*const Yielder<u64, Ev>> = const { Cell::new(std::ptr::null()) };
    static MUTED: Cell<bool> = const { Cell::new(false) };
}

/// Hands `ev` to the scheduler and returns the index of the step that runs
/// it. Outside a script body, or while muted, returns at once.
fn yield_point(ev: Ev) -> u64 {
    let y = YIELDER.with(Cell::get);
    if y.is_null() || MUTED.with(Cell::get) {
        return 0;
    }
    // SAFETY: the pointer is set by the coroutine that is running now, from
    // the yielder it received, and is cleared before that coroutine returns.
    let step = unsafe { &*y }.suspend(ev);
    // The other side set its own yielder while this one was suspended.
    YIELDER.with(|c| c.set(y));
    step
}

fn muted<R>(f: impl FnOnce() -> R) -> R {
    MUTED.with(|m| m.set(true));
    let r = f();
    MUTED.with(|m| m.set(false));
    r
}

fn enter(y: &Yielder<u64, Ev>) {
    YIELDER.with(|c| c.set(y));
}

fn leave() {
    YIELDER.with(|c| c.set(std::ptr::null()));
}

fn owner_body(y: &Yielder<u64, Ev>, mut owner: Owner<Payload>, steps: &[OwnerStep]) -> Vec<OpEvent> {
    enter(y);
    let mut events = Vec::with_capacity(steps.len());
    let mut next_id: Payload = 1;
    for &step in steps {
        let (call, batch) = match step {
            OwnerStep::Push(k) => {
                let items: Vec<Payload> = (next_id..next_id + k as u64).collect();
                next_id += k as u64;
                let batch = Batch::make(items.iter().copied());
                (OpCall::Push { batch: items }, Some(batch))
            }
            OwnerStep::Pop => (OpCall::Pop, None),
        };
        let invoke = yield_point(Ev::Invoke);
        let result = match batch {
            Some(b) => {
                owner.push_batch(b);
                OpResult::Pushed
            }
            None => OpResult::Popped(owner.pop()),
        };
        let response = yield_point(Ev::Response);
        events.push(OpEvent {
            thread: OWNER,
            call,
            result,
            invoke,
            response,
        });
    }
    leave();
    drop(owner);
    events
}

fn stealer_body(y: &Yielder<u64, Ev>, mut stealer: Stealer<Payload>, steps: &[StealStep]) -> Vec<OpEvent> {
    enter(y);
    let mut events = Vec::with_capacity(steps.len());
    for &step in steps {
        let invoke = yield_point(Ev::Invoke);
        let outcome = if step.optimized {
            stealer.steal_optimized(step.p)
        } else {
            stealer.steal(step.p)
        };
        let response = yield_point(Ev::Response);
        let result = muted(|| match outcome {
            StealOutcome::Stolen(b) => OpResult::Stolen(b.into_iter().collect()),
            StealOutcome::Empty => OpResult::Empty,
            StealOutcome::Contention => OpResult::Contention,
        });
        let call = if step.optimized {
            OpCall::StealOpt { p: step.p }
        } else {
            OpCall::Steal { p: step.p }
        };
        events.push(OpEvent {
            thread: STEALER,
            call,
            result,
            invoke,
            response,
        });
    }
    leave();
    drop(stealer);
    events
}

/// A history the checker rejected.
#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub script: Script,
    pub history: Vec<OpEvent>,
    pub verdict: Linearizability,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ScriptReport {
    pub executions: u64,
    pub counterexample: Option<Counterexample>,
    /// Executions cut short because both threads were asleep.
    pub sleep_blocked: u64,
    /// Distinct results of the stealer's operations over all executions.
    pub steal_results: Vec<Vec<OpResult>>,
    /// Distinct histories: for the results of each thread in program order,
    /// every real-time order seen with them.
    #[serde(skip)]
    pub observations: HashMap<(Vec<OpResult>, Vec<OpResult>), HashSet<Precedence>>,
}

struct Frame {
    thread: usize,
    backtrack: u8,
    done: u8,
    sleep: u8,
}

/// Races and vector clocks of a trace.
///
/// `races[j]` is the latest step of the other thread that conflicts with
/// step `j`, when the two are not already ordered through other steps. Such
/// a pair can be reversed by scheduling the later step's thread first.
/// `clocks[j][t]` counts the steps of thread `t` ordered before or at `j` by
/// program order and conflicts.
fn analyse(trace: &[Step]) -> (Vec<Option<usize>>, Vec<[u32; 2]>) {
    // Per address and thread: last writing step, last step of any kind.
    // A trace touches few addresses, so a scan beats hashing.
    let mut seen: Vec<(usize, [[Option<usize>; 2]; 2])> = Vec::with_capacity(64);
    let mut clocks: Vec<[u32; 2]> = Vec::with_capacity(trace.len());
    let mut last = [[0u32; 2]; 2];
    let mut races = Vec::with_capacity(trace.len());
    for (j, s) in trace.iter().enumerate() {
        let (t, q) = (s.thread, 1 - s.thread);
        let mut vc = last[t];
        let mut race = None;
        if let Ev::Access { addr, kind } = s.ev {
            let write = kind != AccessKind::Load;
            let k = match seen.iter().rposition(|e| e.0 == addr) {
                Some(k) => k,
                None => {
                    seen.push((addr, Default::default()));
                    seen.len() - 1
                }
            };
            let entry = &mut seen[k].1;
            if let Some(i) = entry[q][usize::from(write)] {
                if vc[q] < clocks[i][q] {
                    race = Some(i);
                }
                vc = [vc[0].max(clocks[i][0]), vc[1].max(clocks[i][1])];
            }
            entry[t][1] = Some(j);
            if write {
                entry[t][0] = Some(j);
            }
        }
        vc[t] += 1;
        races.push(race);
        clocks.push(vc);
        last[t] = vc;
    }
    (races, clocks)
}

/// Bit set over (owner operation, stealer operation) pairs: bit
/// `2 * (a * stealer_ops + b)` when owner operation `a` responds before
/// stealer operation `b` is invoked, the next bit for the converse.
pub type Precedence = u128;

/// Owner operations times stealer operations a script may have, so that
/// [`Precedence`] can hold every pair.
pub const MAX_OP_PAIRS: usize = 64;

fn precedence_bit(a: usize, b: usize, stealer_ops: usize, stealer_first: bool) -> Precedence {
    1 << (2 * (a * stealer_ops + b) + usize::from(stealer_first))
}

/// Precedence of a history with real stamps.
fn precedence(history: &[OpEvent]) -> Precedence {
    let owner: Vec<&OpEvent> = history.iter().filter(|e| e.thread == OWNER).collect();
    let stealer: Vec<&OpEvent> = history.iter().filter(|e| e.thread == STEALER).collect();
    let mut mask = 0;
    for (a, x) in owner.iter().enumerate() {
        for (b, y) in stealer.iter().enumerate() {
            if x.precedes(y) {
                mask |= precedence_bit(a, b, stealer.len(), false);
            }
            if y.precedes(x) {
                mask |= precedence_bit(a, b, stealer.len(), true);
            }
        }
    }
    mask
}

/// The real-time orders shown by executions equivalent to one trace.
///
/// Markers conflict with nothing, so within the equivalence class a stealer
/// marker may sit in any gap of the owner's event sequence between the last
/// owner event ordered before it and the first one ordered after it. Gaps
/// that lie between the same two owner markers give the same order, so only
/// the first of each is tried.
struct RealTime<'a> {
    trace: &'a [Step],
    history: &'a [OpEvent],
    /// Position of each owner step among the owner's steps.
    owner_index: Vec<usize>,
    /// Owner-side positions of the invocation and response of each owner
    /// operation.
    owner_ops: Vec<(usize, usize)>,
    /// Per stealer marker, in order: its step and its lowest and highest gap.
    windows: Vec<(usize, usize, usize)>,
}

impl<'a> RealTime<'a> {
    fn new(trace: &'a [Step], clocks: &[[u32; 2]], history: &'a [OpEvent]) -> Self {
        let mut owner_index = vec![usize::MAX; trace.len()];
        let mut owner_seen = Vec::new();
        for (j, _) in trace.iter().enumerate().filter(|(_, s)| s.thread == OWNER) {
            owner_index[j] = owner_seen.len();
            owner_seen.push(clocks[j][STEALER]);
        }
        let windows = trace
            .iter()
            .enumerate()
            .filter(|(_, s)| s.thread == STEALER && s.ev.is_marker())
            .map(|(j, _)| {
                let lo = clocks[j][OWNER] as usize;
                let hi = owner_seen.partition_point(|&c| c < clocks[j][STEALER]);
                (j, lo, hi)
            })
            .collect();
        let owner_ops = history
            .iter()
            .filter(|e| e.thread == OWNER)
            .map(|e| (owner_index[e.invoke as usize], owner_index[e.response as usize]))
            .collect();
        RealTime {
            trace,
            history,
            owner_index,
            owner_ops,
            windows,
        }
    }

    /// Distinct precedences, each with one gap assignment showing it.
    fn orders(&self) -> Vec<(Precedence, Vec<usize>)> {
        let mut owner_markers: Vec<usize> = self.owner_ops.iter().flat_map(|&(i, r)| [i, r]).collect();
        owner_markers.sort_unstable();
        let mut out: Vec<(Precedence, Vec<usize>)> = Vec::new();
        let mut gaps = Vec::with_capacity(self.windows.len());
        self.choose(&owner_markers, &mut gaps, &mut out);
        out
    }

    fn choose(&self, owner_markers: &[usize], gaps: &mut Vec<usize>, out: &mut Vec<(Precedence, Vec<usize>)>) {
        let Some(&(_, lo, hi)) = self.windows.get(gaps.len()) else {
            let mask = self.mask(gaps);
            if !out.iter().any(|o| o.0 == mask) {
                out.push((mask, gaps.clone()));
            }
            return;
        };
        let start = lo.max(gaps.last().copied().unwrap_or(0));
        if start > hi {
            return;
        }
        gaps.push(start);
        self.choose(owner_markers, gaps, out);
        gaps.pop();
        for g in owner_markers.iter().map(|m| m + 1).filter(|&g| g > start && g <= hi) {
            gaps.push(g);
            self.choose(owner_markers, gaps, out);
            gaps.pop();
        }
    }

    fn mask(&self, gaps: &[usize]) -> Precedence {
        let stealer_ops = gaps.len() / 2;
        let mut mask = 0;
        for (a, &(inv, resp)) in self.owner_ops.iter().enumerate() {
            for b in 0..stealer_ops {
                if resp < gaps[2 * b] {
                    mask |= precedence_bit(a, b, stealer_ops, false);
                }
                if gaps[2 * b + 1] <= inv {
                    mask |= precedence_bit(a, b, stealer_ops, true);
                }
            }
        }
        mask
    }

    /// The history with stamps placing the stealer markers in `gaps`.
    fn history(&self, gaps: &[usize]) -> Vec<OpEvent> {
        const STRIDE: u64 = 1 << 16;
        let stamp = |j: u64| -> u64 {
            let j = j as usize;
            if self.trace[j].thread == OWNER {
                (2 * self.owner_index[j] as u64 + 1) * STRIDE
            } else {
                let m = self.windows.iter().position(|w| w.0 == j).expect("stealer marker");
                2 * gaps[m] as u64 * STRIDE + m as u64 + 1
            }
        };
        self.history
            .iter()
            .map(|e| OpEvent {
                invoke: stamp(e.invoke),
                response: stamp(e.response),
                ..e.clone()
            })
            .collect()
    }
}

type Side = Coroutine<u64, Ev, Vec<OpEvent>, DefaultStack>;

const STACK_SIZE: usize = 256 * 1024;

/// Runs the two sides of a script as coroutines on the calling thread, so
/// that handing control from one side to the other costs a stack switch.
pub struct Explorer {
    reduce: bool,
    stacks: RefCell<Vec<DefaultStack>>,
}

impl Default for Explorer {
    fn default() -> Self {
        Self::new()
    }
}

struct Execution {
    trace: Vec<Step>,
    blocked_at: Option<usize>,
    history: Vec<OpEvent>,
}

impl Explorer {
    pub fn new() -> Self {
        Explorer {
            reduce: true,
            stacks: RefCell::new(Vec::new()),
        }
    }

    /// Explores without partial-order reduction: every step branches on
    /// both threads. Only useful for cross-checking on tiny scripts.
    pub fn unreduced() -> Self {
        Explorer {
            reduce: false,
            ..Self::new()
        }
    }

    fn stack(&self) -> DefaultStack {
        self.stacks
            .borrow_mut()
            .pop()
            .unwrap_or_else(|| DefaultStack::new(STACK_SIZE).expect("coroutine stack"))
    }

    fn execute(&self, script: &Script, prefix: &[Planned]) -> Execution {
        let _hook = hook::install(|point| {
            if let Point::Access { addr, kind } = point {
                yield_point(Ev::Access { addr, kind });
            }
        });
        MUTED.with(|m| m.set(false));
        let (owner, stealer) = new_queue::<Payload>();
        let owner_steps = script.owner.clone();
        let stealer_steps = script.stealer.clone();
        let mut sides: [Side; 2] = [
            Coroutine::with_stack(self.stack(), move |y, _| owner_body(y, owner, &owner_steps)),
            Coroutine::with_stack(self.stack(), move |y, _| stealer_body(y, stealer, &stealer_steps)),
        ];
        let mut history = Vec::with_capacity(script.len());
        let mut pending = [None; 2];
        for (t, side) in sides.iter_mut().enumerate() {
            match side.resume(0) {
                CoroutineResult::Yield(ev) => pending[t] = Some(ev),
                CoroutineResult::Return(events) => history.extend(events),
            }
        }

        let mut trace = Vec::with_capacity(prefix.len().max(256));
        let mut blocked_at = None;
        let mut sleep = 0u8;
        let mut last = OWNER;
        while pending.iter().any(Option::is_some) {
            let i = trace.len();
            let (thread, asleep) = match prefix.get(i) {
                Some(p) => (p.thread, p.sleep),
                None => {
                    let awake = |t: usize| pending[t].is_some() && sleep & (1 << t) == 0;
                    let thread = if awake(last) {
                        last
                    } else if awake(1 - last) {
                        1 - last
                    } else {
                        blocked_at.get_or_insert(i);
                        if pending[last].is_some() {
                            last
                        } else {
                            1 - last
                        }
                    };
                    (thread, sleep)
                }
            };
            let ev = pending[thread].expect("replayed schedule diverged");
            trace.push(Step {
                thread,
                ev,
                sleep: asleep,
                pending,
            });
            let other = 1 - thread;
            let stays = asleep & (1 << other) != 0 && pending[other].is_some_and(|e| !e.conflicts_with(ev));
            sleep = if stays && self.reduce { 1 << other } else { 0 };
            match sides[thread].resume(i as u64) {
                CoroutineResult::Yield(ev) => pending[thread] = Some(ev),
                CoroutineResult::Return(events) => {
                    pending[thread] = None;
                    history.extend(events);
                }
            }
            last = thread;
        }
        let mut stacks = self.stacks.borrow_mut();
        for side in sides {
            stacks.push(side.into_stack());
        }
        history.sort_by_key(|e| e.invoke);
        Execution {
            trace,
            blocked_at,
            history,
        }
    }

    /// Explores every interleaving class of `script`. Stops at the first
    /// non-linearizable history.
    ///
    /// # Panics
    ///
    /// If owner operations times stealer operations exceeds
    /// [`MAX_OP_PAIRS`].
    pub fn explore_script(&self, script: &Script) -> ScriptReport {
        assert!(
            script.owner.len() * script.stealer.len() <= MAX_OP_PAIRS,
            "script has too many owner/stealer operation pairs"
        );
        let mut report = ScriptReport::default();
        let mut frames: Vec<Frame> = Vec::new();
        let mut first_new = 0;
        loop {
            let prefix = frames
                .iter()
                .map(|f| Planned {
                    thread: f.thread,
                    sleep: if self.reduce { f.sleep | (f.done & !(1 << f.thread)) } else { 0 },
                })
                .collect::<Vec<_>>();
            let Execution {
                trace,
                blocked_at,
                history,
            } = self.execute(script, &prefix);
            report.executions += 1;
            let limit = blocked_at.unwrap_or(trace.len());
            if blocked_at.is_some() {
                report.sleep_blocked += 1;
            }

            for s in &trace[frames.len().min(limit)..limit] {
                frames.push(Frame {
                    thread: s.thread,
                    backtrack: 0,
                    done: 1 << s.thread,
                    sleep: s.sleep,
                });
            }
            frames.truncate(limit);

            let steals: Vec<OpResult> = history
                .iter()
                .filter(|e| e.thread == STEALER)
                .map(|e| e.result.clone())
                .collect();
            let owns: Vec<OpResult> = history
                .iter()
                .filter(|e| e.thread == OWNER)
                .map(|e| e.result.clone())
                .collect();
            if !report.steal_results.contains(&steals) {
                report.steal_results.push(steals.clone());
            }
            let known = report.observations.entry((owns, steals)).or_default();

            let mut verdict = None;
            if self.reduce {
                let (races, clocks) = analyse(&trace);
                for (j, race) in races.into_iter().enumerate().take(limit).skip(first_new) {
                    if let Some(i) = race {
                        frames[i].backtrack |= 1 << trace[j].thread;
                    }
                }
                let real_time = RealTime::new(&trace, &clocks, &history);
                for (mask, gaps) in real_time.orders() {
                    if known.insert(mask) {
                        let h = real_time.history(&gaps);
                        let v = check_linearizable_bounded(&h, script.len().max(1));
                        if !v.is_linearizable() {
                            verdict = Some((h, v));
                            break;
                        }
                    }
                }
            } else {
                for (f, s) in frames.iter_mut().zip(&trace).skip(first_new) {
                    for t in [OWNER, STEALER] {
                        if s.pending[t].is_some() {
                            f.backtrack |= 1 << t;
                        }
                    }
                }
                if known.insert(precedence(&history)) {
                    let v = check_linearizable_bounded(&history, script.len().max(1));
                    if !v.is_linearizable() {
                        verdict = Some((history, v));
                    }
                }
            }
            if let Some((history, verdict)) = verdict {
                report.counterexample = Some(Counterexample {
                    script: script.clone(),
                    history,
                    verdict,
                });
                return report;
            }

            loop {
                let Some(f) = frames.last_mut() else {
                    return report;
                };
                let todo = f.backtrack & !f.done & !f.sleep;
                if todo != 0 {
                    let t = todo.trailing_zeros() as usize;
                    f.done |= 1 << t;
                    f.thread = t;
                    first_new = frames.len() - 1;
                    break;
                }
                frames.pop();
            }
        }
    }
}

impl ScriptReport {
    pub fn observation_count(&self) -> usize {
        self.observations.values().map(HashSet::len).sum()
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ExploreReport {
    pub scripts: u64,
    pub executions: u64,
    pub max_executions_per_script: u64,
    pub elapsed_ms: u128,
    pub counterexamples: Vec<Counterexample>,
}

impl ExploreReport {
    pub fn is_clean(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Explores every maximal script of `family`.
pub fn explore_family(family: &ScriptFamily) -> ExploreReport {
    let start = Instant::now();
    let explorer = Explorer::new();
    let mut report = ExploreReport::default();
    for script in family.maximal_scripts() {
        let r = explorer.explore_script(&script);
        report.scripts += 1;
        report.executions += r.executions;
        report.max_executions_per_script = report.max_executions_per_script.max(r.executions);
        report.counterexamples.extend(r.counterexample);
    }
    report.elapsed_ms = start.elapsed().as_millis();
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> StealStep {
        StealStep {
            p: Proportion::HALF,
            optimized: false,
        }
    }

    #[test]
    fn family_counts() {
        let fam = ScriptFamily {
            max_ops: 3,
            max_stealer_ops: 1,
            max_payloads: 2,
            proportions: vec![Proportion::HALF],
        };
        // Owner sequences of length 2 within 2 payloads: PP, P1 P1, P, P2 in
        // all orders = pop/pop, pop/push1, pop/push2, push1/pop, push1/push1,
        // push2/pop; times two steal variants.
        assert_eq!(fam.maximal_scripts().len(), 12);
    }

    #[test]
    fn sequential_sides_give_one_execution() {
        let explorer = Explorer::new();
        let r = explorer.explore_script(&Script {
            owner: vec![OwnerStep::Push(2)],
            stealer: vec![],
        });
        assert_eq!(r.executions, 1);
        assert!(r.counterexample.is_none());
    }

    #[test]
    fn push_against_steal_reaches_every_outcome() {
        let explorer = Explorer::new();
        let r = explorer.explore_script(&Script {
            owner: vec![OwnerStep::Push(4)],
            stealer: vec![half()],
        });
        assert!(r.counterexample.is_none(), "{:?}", r.counterexample);
        assert!(r.steal_results.contains(&vec![OpResult::Empty]));
        assert!(r.steal_results.contains(&vec![OpResult::Stolen(vec![3, 4])]));
        assert!(r.steal_results.contains(&vec![OpResult::Contention]));
    }

    #[test]
    fn pops_racing_a_steal_are_linearizable() {
        let explorer = Explorer::new();
        let r = explorer.explore_script(&Script {
            owner: vec![OwnerStep::Push(4), OwnerStep::Pop, OwnerStep::Pop, OwnerStep::Pop],
            stealer: vec![half()],
        });
        assert!(r.counterexample.is_none(), "{:?}", r.counterexample);
        assert!(r.steal_results.contains(&vec![OpResult::Stolen(vec![3, 4])]));
        assert!(r.executions > 10);
    }

    #[test]
    fn reduction_keeps_every_observation() {
        let quarter = StealStep {
            p: Proportion::new(0.25).unwrap(),
            optimized: true,
        };
        let scripts = [
            Script {
                owner: vec![OwnerStep::Push(3)],
                stealer: vec![half(), quarter],
            },
            Script {
                owner: vec![OwnerStep::Push(2), OwnerStep::Pop],
                stealer: vec![quarter],
            },
            Script {
                owner: vec![OwnerStep::Pop, OwnerStep::Push(2)],
                stealer: vec![half()],
            },
        ];
        for script in &scripts {
            let reduced = Explorer::new().explore_script(script);
            let full = Explorer::unreduced().explore_script(script);
            assert!(reduced.executions < full.executions);
            assert_eq!(reduced.observations, full.observations, "{script:?}");
        }
    }
}
