//! Parallel exploration of a random DAG with one queue per worker.
//!
//! A worker pops a node, claims it if nobody has, and pushes the successors
//! not yet claimed as one batch. A worker whose queue runs dry scans the
//! other workers in id order and steals half of the first queue whose steal
//! flag it manages to take.

use std::cell::UnsafeCell;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{ImplKind, OwnerHandle, QueueAdapter, StealerHandle, TaskBatch};
use crate::{with_adapter, Proportion, StealOutcome, MIN_STEAL_SIZE};

pub type NodeId = u32;

pub const DEFAULT_DEGREE: f64 = 4.0;

/// Successor edges of a node only go this far ahead in rank.
pub const EDGE_WINDOW: usize = 1024;

pub const SCALING_CSV_HEADER: [&str; 5] = ["nodes", "threads", "wall_ms", "visited", "steals"];

#[derive(Debug, Error)]
pub enum DagError {
    #[error("invalid DAG configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// A DAG in compressed sparse row form. Node ids are ranks: every edge goes
/// from a lower id to a higher one, and node 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dag {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    seed: u64,
}

impl Dag {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn successors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn mean_out_degree(&self) -> f64 {
        self.edge_count() as f64 / self.node_count() as f64
    }
}

/// Builds a ranked random DAG on `n` nodes.
///
/// Node `u` gets `floor(d)` successors, plus one more with probability
/// `d - floor(d)`, drawn without repetition from the next [`EDGE_WINDOW`]
/// ranks. Every node other than the root that ends up without a predecessor
/// then gets one edge from a random node in the window below it, so the
/// realised mean out-degree is slightly above `d`.
pub fn generate_dag(n: usize, d: f64, seed: u64) -> Result<Dag, DagError> {
    if n == 0 {
        return Err(DagError::Config("node count must be at least 1".into()));
    }
    if n > NodeId::MAX as usize {
        return Err(DagError::Config(format!("node count {n} exceeds {}", NodeId::MAX)));
    }
    if !(d >= 0.0 && d.is_finite()) {
        return Err(DagError::Config(format!("mean out-degree {d} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let whole = d.floor() as usize;
    let frac = d - d.floor();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets: Vec<NodeId> = Vec::with_capacity((n as f64 * (d + 0.1)) as usize);
    let mut has_parent = vec![false; n];
    offsets.push(0);
    let mut picks = Vec::new();
    for u in 0..n {
        let ahead = (n - 1 - u).min(EDGE_WINDOW);
        let k = (whole + usize::from(frac > 0.0 && rng.gen::<f64>() < frac)).min(ahead);
        picks.clear();
        picks.extend(index::sample(&mut rng, ahead, k).into_iter().map(|i| (u + 1 + i) as NodeId));
        picks.sort_unstable();
        for &v in &picks {
            has_parent[v as usize] = true;
        }
        targets.extend_from_slice(&picks);
        offsets.push(targets.len());
    }

    // (parent, child) edges for nodes nothing points at.
    let mut extra: Vec<(NodeId, NodeId)> = Vec::new();
    for (v, _) in has_parent.iter().enumerate().skip(1).filter(|(_, &p)| !p) {
        let lo = v.saturating_sub(EDGE_WINDOW);
        extra.push((rng.gen_range(lo..v) as NodeId, v as NodeId));
    }
    if extra.is_empty() {
        return Ok(Dag { offsets, targets, seed });
    }
    extra.sort_unstable();
    let mut merged_offsets = Vec::with_capacity(n + 1);
    let mut merged = Vec::with_capacity(targets.len() + extra.len());
    merged_offsets.push(0);
    let mut e = 0;
    for u in 0..n {
        let start = merged.len();
        merged.extend_from_slice(&targets[offsets[u]..offsets[u + 1]]);
        while e < extra.len() && extra[e].0 as usize == u {
            merged.push(extra[e].1);
            e += 1;
        }
        merged[start..].sort_unstable();
        merged_offsets.push(merged.len());
    }
    Ok(Dag {
        offsets: merged_offsets,
        targets: merged,
        seed,
    })
}

/// Number of nodes reachable from the root, by a sequential traversal.
pub fn reachable_count(dag: &Dag) -> usize {
    let mut seen = vec![false; dag.node_count()];
    let mut stack = vec![dag.root()];
    seen[dag.root() as usize] = true;
    let mut count = 0;
    while let Some(v) = stack.pop() {
        count += 1;
        for &w in dag.successors(v) {
            if !seen[w as usize] {
                seen[w as usize] = true;
                stack.push(w);
            }
        }
    }
    count
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub implementation: ImplKind,
    pub nodes: usize,
    pub threads: usize,
    pub wall: Duration,
    pub visited: u64,
    pub steals_attempted: u64,
    pub steals_succeeded: u64,
    pub per_worker_visits: Vec<u64>,
    /// Highest number of steals seen running at once on a single queue.
    pub max_concurrent_steals: usize,
}

impl ExplorationReport {
    pub fn wall_ms(&self) -> f64 {
        self.wall.as_secs_f64() * 1e3
    }
}

/// A queue's stealer handle behind its steal flag.
struct StealSlot<S> {
    flag: AtomicBool,
    stealer: UnsafeCell<S>,
    active: AtomicUsize,
}

// SAFETY: the stealer is only reached through `try_steal`, which holds the
// flag for the whole access, so at most one thread touches it at a time.
unsafe impl<S: Send> Sync for StealSlot<S> {}

impl<S> StealSlot<S> {
    /// Runs `f` on the stealer if the flag is free; never waits.
    fn try_steal<R>(&self, max_active: &AtomicUsize, f: impl FnOnce(&mut S) -> R) -> Option<R> {
        if self
            .flag
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .is_err()
        {
            return None;
        }
        let now = self.active.fetch_add(1, Ordering::Relaxed) + 1;
        max_active.fetch_max(now, Ordering::Relaxed);
        // SAFETY: the flag is held, see the `Sync` impl.
        let r = f(unsafe { &mut *self.stealer.get() });
        self.active.fetch_sub(1, Ordering::Relaxed);
        self.flag.store(false, Ordering::Release);
        Some(r)
    }
}

struct Shared<'a, S> {
    dag: &'a Dag,
    claimed: Vec<AtomicBool>,
    slots: Vec<StealSlot<S>>,
    /// Nodes pushed to some queue and not yet fully processed.
    pending: AtomicU64,
    max_active: AtomicUsize,
    p: Proportion,
}

#[derive(Default)]
struct WorkerTally {
    visits: u64,
    attempted: u64,
    succeeded: u64,
}

/// Explores `dag` from its root with `workers` threads, stealing proportion
/// `p` from victims.
pub fn explore<A: QueueAdapter<NodeId>>(dag: &Dag, workers: usize, p: Proportion) -> Result<ExplorationReport, DagError> {
    if workers == 0 {
        return Err(DagError::Config("at least one worker is needed".into()));
    }
    if p.get() > 0.5 {
        return Err(DagError::Config(format!("steal proportion {} exceeds 0.5", p.get())));
    }
    let mut owners = Vec::with_capacity(workers);
    let mut slots = Vec::with_capacity(workers);
    for _ in 0..workers {
        let (o, s) = A::create();
        owners.push(o);
        slots.push(StealSlot {
            flag: AtomicBool::new(false),
            stealer: UnsafeCell::new(s),
            active: AtomicUsize::new(0),
        });
    }
    let shared = Shared {
        dag,
        claimed: (0..dag.node_count()).map(|_| AtomicBool::new(false)).collect(),
        slots,
        pending: AtomicU64::new(0),
        max_active: AtomicUsize::new(0),
        p,
    };

    let start = Instant::now();
    // The root is visited up front and its successors are dealt out round
    // robin, one batch per worker.
    let root = dag.root();
    shared.claimed[root as usize].store(true, Ordering::Relaxed);
    let mut shares = vec![Vec::new(); workers];
    for (i, &v) in dag.successors(root).iter().enumerate() {
        shares[i % workers].push(v);
    }
    for (owner, share) in owners.iter_mut().zip(shares) {
        if !share.is_empty() {
            shared.pending.fetch_add(share.len() as u64, Ordering::Relaxed);
            owner.push_batch(A::Batch::from_vec(share));
        }
    }

    let tallies: Vec<WorkerTally> = std::thread::scope(|s| {
        let handles: Vec<_> = owners
            .into_iter()
            .enumerate()
            .map(|(me, owner)| {
                let shared = &shared;
                s.spawn(move || work::<A>(me, owner, shared))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    });
    let wall = start.elapsed();

    let mut per_worker_visits: Vec<u64> = tallies.iter().map(|t| t.visits).collect();
    per_worker_visits[0] += 1;
    Ok(ExplorationReport {
        implementation: A::KIND,
        nodes: dag.node_count(),
        threads: workers,
        wall,
        visited: per_worker_visits.iter().sum(),
        steals_attempted: tallies.iter().map(|t| t.attempted).sum(),
        steals_succeeded: tallies.iter().map(|t| t.succeeded).sum(),
        per_worker_visits,
        max_concurrent_steals: shared.max_active.load(Ordering::Relaxed),
    })
}

fn work<A: QueueAdapter<NodeId>>(me: usize, mut owner: A::Owner, shared: &Shared<'_, A::Stealer>) -> WorkerTally {
    let mut tally = WorkerTally::default();
    let mut idle_scans = 0;
    loop {
        if let Some(v) = owner.pop() {
            idle_scans = 0;
            if !shared.claimed[v as usize].swap(true, Ordering::AcqRel) {
                tally.visits += 1;
                let next: Vec<NodeId> = shared
                    .dag
                    .successors(v)
                    .iter()
                    .copied()
                    .filter(|&w| !shared.claimed[w as usize].load(Ordering::Relaxed))
                    .collect();
                if !next.is_empty() {
                    shared.pending.fetch_add(next.len() as u64, Ordering::AcqRel);
                    owner.push_batch(A::Batch::from_vec(next));
                }
            }
            shared.pending.fetch_sub(1, Ordering::AcqRel);
            continue;
        }
        if let Some(batch) = steal_from_victims::<A>(me, shared, &mut tally) {
            idle_scans = 0;
            owner.push_batch(batch);
            continue;
        }
        if shared.pending.load(Ordering::Acquire) == 0 {
            idle_scans += 1;
            if idle_scans >= 2 {
                return tally;
            }
        } else {
            idle_scans = 0;
        }
        std::thread::yield_now();
    }
}

/// One scan over the other workers in id order.
fn steal_from_victims<A: QueueAdapter<NodeId>>(
    me: usize,
    shared: &Shared<'_, A::Stealer>,
    tally: &mut WorkerTally,
) -> Option<A::Batch> {
    for (victim, slot) in shared.slots.iter().enumerate() {
        if victim == me {
            continue;
        }
        let outcome = slot.try_steal(&shared.max_active, |stealer| {
            if stealer.size() < MIN_STEAL_SIZE {
                return None;
            }
            Some(stealer.steal(shared.p))
        });
        if let Some(Some(out)) = outcome {
            tally.attempted += 1;
            if let StealOutcome::Stolen(batch) = out {
                tally.succeeded += 1;
                return Some(batch);
            }
        }
    }
    None
}

/// [`explore`] with the implementation chosen at run time.
pub fn explore_dyn(kind: ImplKind, dag: &Dag, workers: usize, p: Proportion) -> Result<ExplorationReport, DagError> {
    with_adapter!(kind, A => explore::<A>(dag, workers, p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub implementation: ImplKind,
    pub sizes: Vec<usize>,
    pub threads: Vec<usize>,
    pub degree: f64,
    pub seed: u64,
}

/// Runs [`explore`] for every (size, thread count) pair, generating each
/// graph once.
pub fn scalability_run(cfg: &ScalingConfig) -> Result<Vec<ExplorationReport>, DagError> {
    if cfg.sizes.is_empty() || cfg.threads.is_empty() {
        return Err(DagError::Config("sizes and thread counts must not be empty".into()));
    }
    if cfg.threads.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DagError::Config(format!(
            "thread counts {:?} must be strictly ascending",
            cfg.threads
        )));
    }
    let mut out = Vec::with_capacity(cfg.sizes.len() * cfg.threads.len());
    for &n in &cfg.sizes {
        let dag = generate_dag(n, cfg.degree, cfg.seed)?;
        for &t in &cfg.threads {
            out.push(explore_dyn(cfg.implementation, &dag, t, Proportion::HALF)?);
        }
    }
    Ok(out)
}

/// Writes `nodes,threads,wall_ms,visited,steals`, one row per report;
/// `steals` counts successful steals.
pub fn write_scaling_csv_to<W: Write>(reports: &[ExplorationReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCALING_CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.nodes.to_string(),
            r.threads.to_string(),
            format!("{:.3}", r.wall_ms()),
            r.visited.to_string(),
            r.steals_succeeded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scaling_csv(reports: &[ExplorationReport], path: &Path) -> Result<(), DagError> {
    let io_err = |source| DagError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_scaling_csv_to(reports, file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => DagError::Config(format!("{other:?}")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{ChaseLevQueue, LfQueue, LockedQueue};

    #[test]
    fn single_node() {
        let dag = generate_dag(1, 3.0, 9).unwrap();
        assert_eq!((dag.node_count(), dag.edge_count()), (1, 0));
        let r = explore::<LfQueue>(&dag, 1, Proportion::HALF).unwrap();
        assert_eq!(r.visited, 1);
        assert_eq!(r.steals_attempted, 0);
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(matches!(generate_dag(0, 2.0, 1), Err(DagError::Config(_))));
        assert!(matches!(generate_dag(5, -1.0, 1), Err(DagError::Config(_))));
    }

    #[test]
    fn edges_climb_in_rank() {
        let dag = generate_dag(5000, 2.5, 3).unwrap();
        for v in 0..dag.node_count() as NodeId {
            assert!(dag.successors(v).iter().all(|&w| w > v));
            assert!(dag.successors(v).windows(2).all(|p| p[0] < p[1]));
        }
        assert_eq!(reachable_count(&dag), 5000);
        let mean = dag.mean_out_degree();
        assert!((2.5..2.7).contains(&mean), "{mean}");
    }

    #[test]
    fn zero_degree_is_a_tree() {
        let dag = generate_dag(300, 0.0, 5).unwrap();
        assert_eq!(dag.edge_count(), 299);
        assert_eq!(reachable_count(&dag), 300);
    }

    #[test]
    fn every_implementation_visits_everything() {
        let dag = generate_dag(20_000, 3.0, 11).unwrap();
        for threads in [1, 2, 4] {
            let reports = [
                explore::<LfQueue>(&dag, threads, Proportion::HALF).unwrap(),
                explore::<LockedQueue>(&dag, threads, Proportion::HALF).unwrap(),
                explore::<ChaseLevQueue>(&dag, threads, Proportion::HALF).unwrap(),
            ];
            for r in reports {
                assert_eq!(r.visited, 20_000, "{:?} with {threads}", r.implementation);
                assert_eq!(r.per_worker_visits.len(), threads);
                assert!(r.max_concurrent_steals <= 1);
            }
        }
    }

    #[test]
    fn thread_counts_must_ascend() {
        let cfg = ScalingConfig {
            implementation: ImplKind::Lf,
            sizes: vec![100],
            threads: vec![2, 1],
            degree: 2.0,
            seed: 0,
        };
        assert!(matches!(scalability_run(&cfg), Err(DagError::Config(_))));
    }

    #[test]
    fn scaling_csv_rows() {
        let cfg = ScalingConfig {
            implementation: ImplKind::Lf,
            sizes: vec![500],
            threads: vec![1],
            degree: 2.0,
            seed: 4,
        };
        let reports = scalability_run(&cfg).unwrap();
        assert_eq!(reports.len(), 1);
        let mut out = Vec::new();
        write_scaling_csv_to(&reports, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "nodes,threads,wall_ms,visited,steals");
        assert!(lines[1].starts_with("500,1,"));
        assert!(lines[1].ends_with(",500,0"));
    }
}
