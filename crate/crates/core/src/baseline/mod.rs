//! Comparator queues and the common bulk interface used by the harness, the
//! benchmarks and the DAG workload.
//!
//! Three implementations sit behind [`QueueAdapter`]:
//!
//! * [`LfQueue`] wraps the bulk-steal queue of this crate;
//! * [`LockedQueue`] is a `VecDeque` behind a mutex;
//! * [`ChaseLevQueue`] is a growable Chase–Lev deque whose bulk operations are
//!   loops over single-task operations.

pub mod chase_lev;
pub mod locked;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Batch, Owner, Proportion, StealOutcome, Stealer, MIN_STEAL_SIZE};

/// A detached group of tasks in an implementation's native form.
pub trait TaskBatch<T>: IntoIterator<Item = T> + Send {
    fn from_vec(items: Vec<T>) -> Self;
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Send> TaskBatch<T> for Vec<T> {
    fn from_vec(items: Vec<T>) -> Self {
        items
    }

    fn len(&self) -> usize {
        Vec::len(self)
    }
}

impl<T: Send> TaskBatch<T> for Batch<T> {
    fn from_vec(items: Vec<T>) -> Self {
        Batch::make(items)
    }

    fn len(&self) -> usize {
        Batch::len(self)
    }
}

/// Operations of the single owner thread.
pub trait OwnerHandle<T>: Send {
    type Batch: TaskBatch<T>;

    fn push_batch(&mut self, batch: Self::Batch);
    fn pop(&mut self) -> Option<T>;
    fn size(&self) -> usize;
}

/// Operations of the (single, externally serialized) stealer.
pub trait StealerHandle<T>: Send {
    type Batch: TaskBatch<T>;

    fn steal(&mut self, p: Proportion) -> StealOutcome<Self::Batch>;

    /// Implementations without a cheaper variant fall back to `steal`.
    fn steal_optimized(&mut self, p: Proportion) -> StealOutcome<Self::Batch> {
        self.steal(p)
    }

    fn size(&self) -> usize;
}

/// A queue implementation selectable by the benchmarks and workloads.
pub trait QueueAdapter<T: Send> {
    const KIND: ImplKind;
    type Batch: TaskBatch<T>;
    type Owner: OwnerHandle<T, Batch = Self::Batch>;
    type Stealer: StealerHandle<T, Batch = Self::Batch>;

    fn create() -> (Self::Owner, Self::Stealer);
}

/// Runtime selector for the three implementations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImplKind {
    Lf,
    Locked,
    ChaseLev,
}

impl ImplKind {
    pub const ALL: [ImplKind; 3] = [ImplKind::Lf, ImplKind::Locked, ImplKind::ChaseLev];

    pub fn name(self) -> &'static str {
        match self {
            ImplKind::Lf => "lf",
            ImplKind::Locked => "locked",
            ImplKind::ChaseLev => "chaselev",
        }
    }
}

impl fmt::Display for ImplKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown implementation `{0}` (expected lf, locked or chaselev)")]
pub struct UnknownImpl(pub String);

impl FromStr for ImplKind {
    type Err = UnknownImpl;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lf" => Ok(ImplKind::Lf),
            "locked" => Ok(ImplKind::Locked),
            "chaselev" => Ok(ImplKind::ChaseLev),
            other => Err(UnknownImpl(other.to_string())),
        }
    }
}

/// Calls `$body` with `$A` bound to the adapter type selected by `$kind`.
#[macro_export]
macro_rules! with_adapter {
    ($kind:expr, $A:ident => $body:expr) => {
        match $kind {
            $crate::baseline::ImplKind::Lf => {
                type $A = $crate::baseline::LfQueue;
                $body
            }
            $crate::baseline::ImplKind::Locked => {
                type $A = $crate::baseline::LockedQueue;
                $body
            }
            $crate::baseline::ImplKind::ChaseLev => {
                type $A = $crate::baseline::ChaseLevQueue;
                $body
            }
        }
    };
}

/// The bulk-steal queue of this crate.
pub struct LfQueue;

impl<T: Send> OwnerHandle<T> for Owner<T> {
    type Batch = Batch<T>;

    fn push_batch(&mut self, batch: Batch<T>) {
        Owner::push_batch(self, batch)
    }

    fn pop(&mut self) -> Option<T> {
        Owner::pop(self)
    }

    fn size(&self) -> usize {
        Owner::size(self)
    }
}

impl<T: Send> StealerHandle<T> for Stealer<T> {
    type Batch = Batch<T>;

    fn steal(&mut self, p: Proportion) -> StealOutcome<Batch<T>> {
        Stealer::steal(self, p)
    }

    fn steal_optimized(&mut self, p: Proportion) -> StealOutcome<Batch<T>> {
        Stealer::steal_optimized(self, p)
    }

    fn size(&self) -> usize {
        Stealer::size(self)
    }
}

impl<T: Send> QueueAdapter<T> for LfQueue {
    const KIND: ImplKind = ImplKind::Lf;
    type Batch = Batch<T>;
    type Owner = Owner<T>;
    type Stealer = Stealer<T>;

    fn create() -> (Owner<T>, Stealer<T>) {
        crate::new_queue()
    }
}

/// Mutex-guarded deque.
pub struct LockedQueue;

impl<T: Send> OwnerHandle<T> for locked::LockedOwner<T> {
    type Batch = Vec<T>;

    fn push_batch(&mut self, batch: Vec<T>) {
        locked::LockedOwner::push_batch(self, batch)
    }

    fn pop(&mut self) -> Option<T> {
        locked::LockedOwner::pop(self)
    }

    fn size(&self) -> usize {
        self.len()
    }
}

impl<T: Send> StealerHandle<T> for locked::LockedStealer<T> {
    type Batch = Vec<T>;

    fn steal(&mut self, p: Proportion) -> StealOutcome<Vec<T>> {
        locked::LockedStealer::steal(self, p)
    }

    fn size(&self) -> usize {
        self.len()
    }
}

impl<T: Send> QueueAdapter<T> for LockedQueue {
    const KIND: ImplKind = ImplKind::Locked;
    type Batch = Vec<T>;
    type Owner = locked::LockedOwner<T>;
    type Stealer = locked::LockedStealer<T>;

    fn create() -> (Self::Owner, Self::Stealer) {
        locked::locked_deque()
    }
}

/// Chase–Lev deque with looped bulk operations.
pub struct ChaseLevQueue;

pub struct ChaseLevOwner<T> {
    worker: chase_lev::Worker<T>,
}

pub struct ChaseLevStealer<T> {
    stealer: chase_lev::Stealer<T>,
}

impl<T: Send> OwnerHandle<T> for ChaseLevOwner<T> {
    type Batch = Vec<T>;

    /// One bottom push per item; the first item ends up at the bottom so it is
    /// popped first, as with the other implementations.
    fn push_batch(&mut self, batch: Vec<T>) {
        for item in batch.into_iter().rev() {
            self.worker.push(item);
        }
    }

    fn pop(&mut self) -> Option<T> {
        self.worker.pop()
    }

    fn size(&self) -> usize {
        self.worker.len()
    }
}

impl<T: Send> StealerHandle<T> for ChaseLevStealer<T> {
    type Batch = Vec<T>;

    /// `floor(len * p)` single-task steals. Lost races are not retried; the
    /// batch holds however many attempts succeeded, head to tail.
    fn steal(&mut self, p: Proportion) -> StealOutcome<Vec<T>> {
        let n = self.stealer.len();
        let k = p.steal_count(n);
        if n < MIN_STEAL_SIZE || k == 0 {
            return StealOutcome::Empty;
        }
        let mut out = Vec::with_capacity(k);
        let mut lost = false;
        for _ in 0..k {
            match self.stealer.steal_one() {
                chase_lev::Steal::Success(x) => out.push(x),
                chase_lev::Steal::Retry => lost = true,
                chase_lev::Steal::Empty => break,
            }
        }
        if out.is_empty() {
            return if lost {
                StealOutcome::Contention
            } else {
                StealOutcome::Empty
            };
        }
        out.reverse();
        StealOutcome::Stolen(out)
    }

    fn size(&self) -> usize {
        self.stealer.len()
    }
}

impl<T: Send> QueueAdapter<T> for ChaseLevQueue {
    const KIND: ImplKind = ImplKind::ChaseLev;
    type Batch = Vec<T>;
    type Owner = ChaseLevOwner<T>;
    type Stealer = ChaseLevStealer<T>;

    fn create() -> (Self::Owner, Self::Stealer) {
        let (worker, stealer) = chase_lev::deque();
        (ChaseLevOwner { worker }, ChaseLevStealer { stealer })
    }
}
