//! Latency microbenchmarks for push, pop and steal.
//!
//! Each iteration times exactly one queue operation with a monotonic clock.
//! Building input batches, refilling the queue and dropping stolen batches
//! happen outside the timed region.

use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{ImplKind, OwnerHandle, QueueAdapter, StealerHandle, TaskBatch};
use crate::{with_adapter, Proportion, StealOutcome, MIN_STEAL_SIZE};

pub const DEFAULT_BATCH_SIZES: [usize; 4] = [1, 128, 512, 1024];
pub const DEFAULT_PROPORTIONS: [usize; 6] = [10, 20, 30, 40, 50, 60];
pub const DEFAULT_INITIAL_SIZE: usize = 10_000;
pub const DEFAULT_ITERATIONS: usize = 10_000;
pub const DEFAULT_WARMUP: usize = 1_000;

pub const CSV_HEADER: [&str; 8] = [
    "impl",
    "operation",
    "parameter",
    "iterations",
    "mean_ns",
    "median_ns",
    "p99_ns",
    "stddev_ns",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Push,
    Pop,
    Steal,
    StealOpt,
}

impl Operation {
    pub fn name(self) -> &'static str {
        match self {
            Operation::Push => "push",
            Operation::Pop => "pop",
            Operation::Steal => "steal",
            Operation::StealOpt => "steal_opt",
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operation {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "push" => Ok(Operation::Push),
            "pop" => Ok(Operation::Pop),
            "steal" => Ok(Operation::Steal),
            "steal_opt" => Ok(Operation::StealOpt),
            _ => Err(BenchError::Config(format!("unknown operation `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub implementation: ImplKind,
    pub operation: Operation,
    /// Batch sizes for push, proportion percentages for steal. Ignored by pop.
    pub parameters: Vec<usize>,
    /// Items in the queue before each steal or pop.
    pub initial_size: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Steal only: run the owner on a second thread, pushing and popping
    /// while the steals are timed.
    pub busy_owner: bool,
}

impl BenchConfig {
    pub fn new(implementation: ImplKind, operation: Operation) -> Self {
        let parameters = match operation {
            Operation::Push => DEFAULT_BATCH_SIZES.to_vec(),
            Operation::Pop => Vec::new(),
            Operation::Steal | Operation::StealOpt => DEFAULT_PROPORTIONS.to_vec(),
        };
        BenchConfig {
            implementation,
            operation,
            parameters,
            initial_size: DEFAULT_INITIAL_SIZE,
            warmup: DEFAULT_WARMUP,
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            busy_owner: false,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if let Some(&p) = self.parameters.iter().find(|&&p| p == 0) {
            return bad(format!("parameter {p} must be positive"));
        }
        if self.busy_owner && !self.is_steal() {
            return bad("busy owner mode applies to steal benchmarks only".into());
        }
        match self.operation {
            Operation::Push => {
                if self.parameters.is_empty() {
                    return bad("push needs at least one batch size".into());
                }
            }
            Operation::Pop => {
                if self.initial_size == 0 {
                    return bad("pop timing needs a pre-filled queue: initial size must be at least 1".into());
                }
            }
            Operation::Steal | Operation::StealOpt => {
                if self.parameters.is_empty() {
                    return bad("steal needs at least one proportion".into());
                }
                for &pct in &self.parameters {
                    if pct >= 100 {
                        return bad(format!("steal proportion {pct}% must be below 100%"));
                    }
                    if self.busy_owner && pct > 50 {
                        return bad(format!("steal proportion {pct}% exceeds 50% with a busy owner"));
                    }
                    let p = self.proportion(pct)?;
                    let needed = self.initial_size >= MIN_STEAL_SIZE && p.steal_count(self.initial_size) >= 1;
                    if !needed {
                        return bad(format!(
                            "initial size {} is too small to steal {pct}% of",
                            self.initial_size
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn is_steal(&self) -> bool {
        matches!(self.operation, Operation::Steal | Operation::StealOpt)
    }

    fn proportion(&self, pct: usize) -> Result<Proportion, BenchError> {
        let pct = u32::try_from(pct).map_err(|_| BenchError::Config(format!("proportion {pct}% out of range")))?;
        Proportion::percent(pct).map_err(|e| BenchError::Config(e.to_string()))
    }
}

/// One measured parameter point. Latencies are in nanoseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    #[serde(rename = "impl")]
    pub implementation: ImplKind,
    pub operation: Operation,
    pub parameter: u64,
    pub iterations: u64,
    pub mean_ns: f64,
    pub median_ns: f64,
    pub p99_ns: f64,
    pub stddev_ns: f64,
}

impl BenchRecord {
    /// Summarises raw samples. Every sample counts as at least 1 ns.
    pub fn from_samples(
        implementation: ImplKind,
        operation: Operation,
        parameter: u64,
        samples: &mut [u64],
    ) -> BenchRecord {
        assert!(!samples.is_empty(), "no samples");
        for s in samples.iter_mut() {
            *s = (*s).max(1);
        }
        samples.sort_unstable();
        let n = samples.len();
        let mean = samples.iter().map(|&s| s as f64).sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let median = if n % 2 == 1 {
            samples[n / 2] as f64
        } else {
            (samples[n / 2 - 1] + samples[n / 2]) as f64 / 2.0
        };
        // Nearest rank.
        let p99 = samples[((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1] as f64;
        BenchRecord {
            implementation,
            operation,
            parameter,
            iterations: n as u64,
            mean_ns: mean,
            median_ns: median,
            p99_ns: p99,
            stddev_ns: var.sqrt(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed benchmark CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed benchmark CSV: {0}")]
    Schema(String),
}

/// Runs the benchmark described by `cfg`, dispatching on its operation.
pub fn run(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    match cfg.operation {
        Operation::Push => bench_push(cfg),
        Operation::Pop => bench_pop(cfg),
        Operation::Steal | Operation::StealOpt => bench_steal(cfg),
    }
}

pub fn bench_push(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    expect_operation(cfg, &[Operation::Push])?;
    cfg.validate()?;
    with_adapter!(cfg.implementation, A => Ok(push_points::<A>(cfg)))
}

pub fn bench_pop(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    expect_operation(cfg, &[Operation::Pop])?;
    cfg.validate()?;
    with_adapter!(cfg.implementation, A => Ok(vec![pop_point::<A>(cfg)]))
}

pub fn bench_steal(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    expect_operation(cfg, &[Operation::Steal, Operation::StealOpt])?;
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.parameters.len());
    for &pct in &cfg.parameters {
        let p = cfg.proportion(pct)?;
        let record = if cfg.busy_owner {
            with_adapter!(cfg.implementation, A => steal_point_busy::<A>(cfg, pct, p))
        } else {
            with_adapter!(cfg.implementation, A => steal_point::<A>(cfg, pct, p))
        };
        out.push(record);
    }
    Ok(out)
}

fn expect_operation(cfg: &BenchConfig, allowed: &[Operation]) -> Result<(), BenchError> {
    if allowed.contains(&cfg.operation) {
        Ok(())
    } else {
        Err(BenchError::Config(format!(
            "operation {} does not belong to this benchmark",
            cfg.operation
        )))
    }
}

fn items(next: &mut u64, n: usize) -> Vec<u64> {
    let v = (*next..*next + n as u64).collect();
    *next += n as u64;
    v
}

fn push_points<A: QueueAdapter<u64>>(cfg: &BenchConfig) -> Vec<BenchRecord> {
    cfg.parameters
        .iter()
        .map(|&size| {
            let mut samples = Vec::with_capacity(cfg.iterations);
            let mut next = 0;
            for i in 0..cfg.warmup + cfg.iterations {
                let (mut owner, stealer) = A::create();
                let batch = A::Batch::from_vec(items(&mut next, size));
                let start = Instant::now();
                owner.push_batch(batch);
                let ns = start.elapsed().as_nanos() as u64;
                if i >= cfg.warmup {
                    samples.push(ns);
                }
                drop((owner, stealer));
            }
            BenchRecord::from_samples(A::KIND, Operation::Push, size as u64, &mut samples)
        })
        .collect()
}

fn pop_point<A: QueueAdapter<u64>>(cfg: &BenchConfig) -> BenchRecord {
    let (mut owner, _stealer) = A::create();
    let mut samples = Vec::with_capacity(cfg.iterations);
    let mut next = 0;
    for i in 0..cfg.warmup + cfg.iterations {
        if owner.size() == 0 {
            owner.push_batch(A::Batch::from_vec(items(&mut next, cfg.initial_size)));
        }
        let start = Instant::now();
        let item = owner.pop();
        let ns = start.elapsed().as_nanos() as u64;
        assert!(item.is_some(), "pop on a pre-filled queue came back empty");
        if i >= cfg.warmup {
            samples.push(ns);
        }
    }
    BenchRecord::from_samples(A::KIND, Operation::Pop, cfg.initial_size as u64, &mut samples)
}

fn steal_once<S: StealerHandle<u64>>(stealer: &mut S, p: Proportion, optimized: bool) -> (u64, StealOutcome<S::Batch>) {
    let start = Instant::now();
    let out = if optimized {
        stealer.steal_optimized(p)
    } else {
        stealer.steal(p)
    };
    (start.elapsed().as_nanos() as u64, out)
}

/// Quiescent owner: the queue is topped back up to the initial size between
/// steals, from the same thread.
fn steal_point<A: QueueAdapter<u64>>(cfg: &BenchConfig, pct: usize, p: Proportion) -> BenchRecord {
    let optimized = cfg.operation == Operation::StealOpt;
    let (mut owner, mut stealer) = A::create();
    let mut next = 0;
    let mut samples = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.warmup + cfg.iterations {
        let missing = cfg.initial_size - owner.size();
        if missing > 0 {
            owner.push_batch(A::Batch::from_vec(items(&mut next, missing)));
        }
        let (ns, out) = steal_once(&mut stealer, p, optimized);
        assert!(out.is_stolen(), "steal from a quiescent queue of {} items failed", cfg.initial_size);
        drop(out);
        if i >= cfg.warmup {
            samples.push(ns);
        }
    }
    BenchRecord::from_samples(A::KIND, cfg.operation, pct as u64, &mut samples)
}

/// Busy owner: a second thread owns the queue, keeps it near the initial
/// size and otherwise alternates single-item pushes and pops. Every steal
/// attempt is timed, including aborted ones.
fn steal_point_busy<A: QueueAdapter<u64>>(cfg: &BenchConfig, pct: usize, p: Proportion) -> BenchRecord {
    let optimized = cfg.operation == Operation::StealOpt;
    let (mut owner, mut stealer) = A::create();
    let mut next = 0;
    owner.push_batch(A::Batch::from_vec(items(&mut next, cfg.initial_size)));
    let stop = AtomicBool::new(false);
    let deficit = AtomicUsize::new(0);
    let mut samples = Vec::with_capacity(cfg.iterations);
    std::thread::scope(|s| {
        s.spawn(|| {
            while !stop.load(Ordering::Relaxed) {
                let missing = deficit.swap(0, Ordering::Relaxed);
                if missing > 0 {
                    owner.push_batch(A::Batch::from_vec(items(&mut next, missing)));
                } else {
                    owner.push_batch(A::Batch::from_vec(items(&mut next, 1)));
                    owner.pop();
                }
            }
        });
        for i in 0..cfg.warmup + cfg.iterations {
            let (ns, out) = steal_once(&mut stealer, p, optimized);
            match out {
                StealOutcome::Stolen(b) => {
                    deficit.fetch_add(b.len(), Ordering::Relaxed);
                }
                // Without a spare core the owner may be parked mid-operation;
                // let it finish before trying again.
                StealOutcome::Contention => std::thread::yield_now(),
                StealOutcome::Empty => {}
            }
            if i >= cfg.warmup {
                samples.push(ns);
            }
            // Let the owner refill before the next steal.
            while deficit.load(Ordering::Relaxed) > 0 {
                std::thread::yield_now();
            }
        }
        stop.store(true, Ordering::Relaxed);
    });
    BenchRecord::from_samples(A::KIND, cfg.operation, pct as u64, &mut samples)
}

/// Writes the CSV header and one row per record, latencies rounded to whole
/// nanoseconds.
pub fn write_csv_to<W: Write>(records: &[BenchRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.implementation.name().to_string(),
            r.operation.name().to_string(),
            r.parameter.to_string(),
            r.iterations.to_string(),
            format!("{}", r.mean_ns.round() as u64),
            format!("{}", r.median_ns.round() as u64),
            format!("{}", r.p99_ns.round() as u64),
            format!("{}", r.stddev_ns.round() as u64),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[BenchRecord], path: &Path) -> Result<(), BenchError> {
    let io_err = |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_csv_to(records, file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => BenchError::Schema(format!("{other:?}")),
    })
}

/// Reads records back from CSV written by [`write_csv_to`].
pub fn parse_csv<R: Read>(input: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Schema(format!("unexpected header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(BenchError::from)).collect()
}

pub fn write_json<W: Write>(records: &[BenchRecord], out: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kind: ImplKind, op: Operation) -> BenchConfig {
        BenchConfig {
            warmup: 10,
            iterations: 50,
            initial_size: 200,
            ..BenchConfig::new(kind, op)
        }
    }

    #[test]
    fn summary_statistics() {
        let mut s: Vec<u64> = (1..=100).collect();
        let r = BenchRecord::from_samples(ImplKind::Lf, Operation::Pop, 1, &mut s);
        assert_eq!(r.iterations, 100);
        assert_eq!(r.mean_ns, 50.5);
        assert_eq!(r.median_ns, 50.5);
        assert_eq!(r.p99_ns, 99.0);
        assert!((r.stddev_ns - 29.011_491_975_882_016).abs() < 1e-9);
    }

    #[test]
    fn zero_samples_count_as_one_nanosecond() {
        let r = BenchRecord::from_samples(ImplKind::Lf, Operation::Pop, 1, &mut [0, 0, 0]);
        assert_eq!((r.mean_ns, r.median_ns, r.p99_ns, r.stddev_ns), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn one_record_per_parameter() {
        for kind in ImplKind::ALL {
            let push = bench_push(&BenchConfig {
                parameters: vec![1, 64],
                ..quick(kind, Operation::Push)
            })
            .unwrap();
            assert_eq!(push.iter().map(|r| r.parameter).collect::<Vec<_>>(), [1, 64]);
            let steal = bench_steal(&quick(kind, Operation::Steal)).unwrap();
            assert_eq!(steal.len(), DEFAULT_PROPORTIONS.len());
            let pop = bench_pop(&quick(kind, Operation::Pop)).unwrap();
            assert_eq!(pop.len(), 1);
            for r in push.iter().chain(&steal).chain(&pop) {
                assert_eq!(r.implementation, kind);
                assert_eq!(r.iterations, 50);
                assert!(r.mean_ns > 0.0 && r.median_ns > 0.0 && r.median_ns <= r.p99_ns);
            }
        }
    }

    #[test]
    fn busy_owner_steals() {
        let cfg = BenchConfig {
            parameters: vec![10, 50],
            busy_owner: true,
            ..quick(ImplKind::Lf, Operation::StealOpt)
        };
        let r = bench_steal(&cfg).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].operation, Operation::StealOpt);
    }

    #[test]
    fn invalid_configurations() {
        let err = |cfg: BenchConfig| matches!(run(&cfg), Err(BenchError::Config(_)));
        assert!(err(BenchConfig {
            iterations: 0,
            ..quick(ImplKind::Lf, Operation::Push)
        }));
        assert!(err(BenchConfig {
            parameters: vec![150],
            ..quick(ImplKind::Lf, Operation::Steal)
        }));
        assert!(err(BenchConfig {
            parameters: vec![100],
            ..quick(ImplKind::Lf, Operation::Steal)
        }));
        assert!(err(BenchConfig {
            parameters: vec![0],
            ..quick(ImplKind::Lf, Operation::Push)
        }));
        assert!(err(BenchConfig {
            initial_size: 0,
            ..quick(ImplKind::Lf, Operation::Pop)
        }));
        assert!(err(BenchConfig {
            initial_size: 5,
            parameters: vec![10],
            ..quick(ImplKind::Lf, Operation::Steal)
        }));
        assert!(err(BenchConfig {
            parameters: vec![60],
            busy_owner: true,
            ..quick(ImplKind::Lf, Operation::Steal)
        }));
        assert!(err(BenchConfig {
            busy_owner: true,
            ..quick(ImplKind::Lf, Operation::Push)
        }));
        assert!(matches!(
            bench_push(&quick(ImplKind::Lf, Operation::Pop)),
            Err(BenchError::Config(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        write_csv_to(&[], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "impl,operation,parameter,iterations,mean_ns,median_ns,p99_ns,stddev_ns\n"
        );
        let r = BenchRecord {
            implementation: ImplKind::ChaseLev,
            operation: Operation::StealOpt,
            parameter: 60,
            iterations: 3,
            mean_ns: 10.5,
            median_ns: 10.0,
            p99_ns: 12.0,
            stddev_ns: 0.4,
        };
        let mut out = Vec::new();
        write_csv_to(&[r], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(1), Some("chaselev,steal_opt,60,3,11,10,12,0"));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn operation_names_round_trip() {
        for op in [Operation::Push, Operation::Pop, Operation::Steal, Operation::StealOpt] {
            assert_eq!(op.name().parse::<Operation>().unwrap(), op);
        }
        assert!("peek".parse::<Operation>().is_err());
    }
}
