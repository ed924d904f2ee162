//! The bulk-steal queue.
//!
//! An unbounded singly linked list with two roles:
//!
//! * the **owner** pushes whole batches and pops single cells at the head;
//! * one **stealer** at a time detaches a proportion of the cells as a
//!   contiguous suffix at the tail.
//!
//! The shared state is a head link, an element counter and an owner operation
//! counter. A push costs one head store and one counter update whatever the
//! batch length. A steal walks from a head snapshot to the cut cell, checks
//! that at least half of the observed cells remain, and severs the list there
//! in a single write.
//!
//! Protocol details the safety argument depends on:
//!
//! * The owner's operation counter is odd while a push or pop is in flight.
//!   A steal only proceeds from a `(size, head)` pair read while the counter
//!   was even and unchanged, so the observed size is the exact length of the
//!   chain hanging off the snapshot.
//! * Popping a cell sets the low bit of its `next` link, and the sever is a
//!   compare-exchange against the untagged successor. An owner that pops the
//!   cut cell before the sever makes the steal abort; one that pops it after
//!   reads a null successor. The owner can therefore never reach a stolen cell.
//! * Popped cells are retired, not freed, while a steal that may still be
//!   walking over them is in flight.

use std::cell::UnsafeCell;
use std::fmt;
use std::ptr::{self, NonNull};
use std::sync::atomic::Ordering::{AcqRel, Acquire, Relaxed, Release, SeqCst};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::{is_popped, untag, Batch, Node, POPPED};
use crate::sync::{self, StealPhase, TracedIsize, TracedPtr, TracedUsize};

/// A queue smaller than this is never stolen from.
pub const MIN_STEAL_SIZE: usize = 2;

/// Retired cells are reclaimed by `push_batch` once this many are pending.
const RECLAIM_AFTER: usize = 64;
/// `pop` reclaims on its own only past this many pending cells.
const RECLAIM_HARD_LIMIT: usize = 4096;

/// Fraction of the observed queue a steal takes from the tail.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Proportion(f64);

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum ProportionError {
    #[error("steal proportion {0} is outside (0, 0.5]")]
    OutOfRange(f64),
    #[error("steal proportion {0} is outside (0, 1)")]
    OutOfUncappedRange(f64),
}

impl Proportion {
    pub const HALF: Proportion = Proportion(0.5);

    /// A proportion for concurrent use, in `(0, 0.5]`.
    pub fn new(p: f64) -> Result<Self, ProportionError> {
        if p > 0.0 && p <= 0.5 {
            Ok(Proportion(p))
        } else {
            Err(ProportionError::OutOfRange(p))
        }
    }

    /// A proportion in `(0, 1)`, for benchmarking against a quiescent owner.
    pub fn uncapped(p: f64) -> Result<Self, ProportionError> {
        if p > 0.0 && p < 1.0 {
            Ok(Proportion(p))
        } else {
            Err(ProportionError::OutOfUncappedRange(p))
        }
    }

    /// A proportion from a whole percentage, uncapped.
    pub fn percent(pct: u32) -> Result<Self, ProportionError> {
        Self::uncapped(f64::from(pct) / 100.0)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `floor(size * p)`, with a small tolerance so that decimal proportions
    /// such as 0.57 of 100 give 57.
    pub fn steal_count(self, size: usize) -> usize {
        (size as f64 * self.0 + 1e-9).floor() as usize
    }
}

impl TryFrom<f64> for Proportion {
    type Error = ProportionError;

    fn try_from(p: f64) -> Result<Self, ProportionError> {
        Proportion::uncapped(p)
    }
}

impl From<Proportion> for f64 {
    fn from(p: Proportion) -> f64 {
        p.0
    }
}

/// Result of a steal attempt.
#[derive(Debug, PartialEq, Eq)]
pub enum StealOutcome<B> {
    /// A non-empty suffix was detached.
    Stolen(B),
    /// The queue held fewer than [`MIN_STEAL_SIZE`] cells or the proportion
    /// rounded down to zero.
    Empty,
    /// The owner interfered; nothing was modified.
    Contention,
}

impl<B> StealOutcome<B> {
    pub fn stolen(self) -> Option<B> {
        match self {
            StealOutcome::Stolen(b) => Some(b),
            _ => None,
        }
    }

    pub fn is_stolen(&self) -> bool {
        matches!(self, StealOutcome::Stolen(_))
    }

    pub fn map<C>(self, f: impl FnOnce(B) -> C) -> StealOutcome<C> {
        match self {
            StealOutcome::Stolen(b) => StealOutcome::Stolen(f(b)),
            StealOutcome::Empty => StealOutcome::Empty,
            StealOutcome::Contention => StealOutcome::Contention,
        }
    }
}

#[repr(align(128))]
struct Line<T>(T);

struct Retired<T> {
    /// Popped cells not yet checked against the stealer.
    pending: Vec<NonNull<Node<T>>>,
    /// Cells that a steal in flight (`waiting_seq`) may still be walking.
    waiting: Vec<NonNull<Node<T>>>,
    waiting_seq: usize,
}

/// State shared by the [`Owner`] and [`Stealer`] of one queue.
pub struct BulkStealQueue<T> {
    head: Line<TracedPtr<Node<T>>>,
    size: Line<TracedIsize>,
    /// Bumped on entry to and exit from every push and pop.
    op_version: Line<TracedUsize>,
    /// Bumped on entry to and exit from every steal.
    steal_seq: Line<TracedUsize>,
    retired: UnsafeCell<Retired<T>>,
}

unsafe impl<T: Send> Send for BulkStealQueue<T> {}
unsafe impl<T: Send> Sync for BulkStealQueue<T> {}

impl<T> BulkStealQueue<T> {
    /// Creates an empty queue and returns its two handles.
    #[allow(clippy::new_ret_no_self)]
    pub fn new() -> (Owner<T>, Stealer<T>) {
        let shared = Arc::new(BulkStealQueue {
            head: Line(TracedPtr::new(ptr::null_mut())),
            size: Line(TracedIsize::new(0)),
            op_version: Line(TracedUsize::new(0)),
            steal_seq: Line(TracedUsize::new(0)),
            retired: UnsafeCell::new(Retired {
                pending: Vec::new(),
                waiting: Vec::new(),
                waiting_seq: 0,
            }),
        });
        (
            Owner {
                shared: Arc::clone(&shared),
                version: 0,
            },
            Stealer { shared },
        )
    }

    fn size_snapshot(&self) -> usize {
        self.size.0.load(Relaxed).max(0) as usize
    }
}

impl<T> Drop for BulkStealQueue<T> {
    fn drop(&mut self) {
        let mut cur = untag(*self.head.0.get_mut());
        while let Some(node) = NonNull::new(cur) {
            // SAFETY: both handles are gone; the chain is exclusively ours.
            unsafe {
                cur = untag(node.as_ref().next.load(Relaxed));
                Node::free_with_payload(node);
            }
        }
        let retired = self.retired.get_mut();
        // SAFETY: retired cells are unreachable and their payloads moved.
        unsafe {
            Node::free_shells(&mut retired.pending);
            Node::free_shells(&mut retired.waiting);
        }
    }
}

/// Creates an empty queue and returns its owner and stealer handles.
pub fn new_queue<T>() -> (Owner<T>, Stealer<T>) {
    BulkStealQueue::new()
}

/// Owner handle: pushes batches and pops cells at the head.
pub struct Owner<T> {
    shared: Arc<BulkStealQueue<T>>,
    /// Mirror of `op_version`; only the owner writes it.
    version: usize,
}

impl<T> Owner<T> {
    #[inline]
    fn begin_op(q: &BulkStealQueue<T>, version: &mut usize) {
        *version += 1;
        q.op_version.0.store(*version, Relaxed);
        sync::fence(Release);
    }

    #[inline]
    fn end_op(q: &BulkStealQueue<T>, version: &mut usize) {
        *version += 1;
        q.op_version.0.store(*version, Release);
    }

    /// Links `batch` in front of the current head.
    ///
    /// One head store and one size update, independent of the batch length.
    /// An empty batch is a no-op.
    pub fn push_batch(&mut self, batch: Batch<T>) {
        let Some((head, tail, len)) = batch.into_raw() else {
            return;
        };
        let q = &*self.shared;
        Self::begin_op(q, &mut self.version);
        let old = q.head.0.load(Relaxed);
        // SAFETY: the batch cells are ours until the head store publishes them.
        unsafe { tail.as_ref().next.store(old, Relaxed) };
        q.head.0.store(head.as_ptr(), Release);
        q.size.0.fetch_add(len as isize, AcqRel);
        Self::end_op(q, &mut self.version);

        if self.retired().pending.len() >= RECLAIM_AFTER {
            self.reclaim();
        }
    }

    /// Pushes a single value.
    pub fn push(&mut self, value: T) {
        self.push_batch(Batch::make([value]));
    }

    /// Removes and returns the value at the head, or `None` if the queue is empty.
    pub fn pop(&mut self) -> Option<T> {
        let q = &*self.shared;
        let head = NonNull::new(q.head.0.load(Relaxed))?;
        Self::begin_op(q, &mut self.version);
        // SAFETY: `head` is a live chain cell. Tagging its link tells a stealer
        // that picked it as the cut cell to back off.
        let next = unsafe { head.as_ref().next.fetch_or(POPPED, AcqRel) };
        debug_assert!(!is_popped(next));
        q.head.0.store(next, Release);
        q.size.0.fetch_sub(1, AcqRel);
        Self::end_op(q, &mut self.version);
        prefetch(next);

        // SAFETY: the cell is unlinked; stealers only ever read its link.
        let value = unsafe { Node::take_payload(head) };
        self.retired().pending.push(head);
        if self.retired().pending.len() >= RECLAIM_HARD_LIMIT {
            self.reclaim();
        }
        Some(value)
    }

    /// Relaxed snapshot of the element count; exact at quiescence.
    pub fn size(&self) -> usize {
        self.shared.size_snapshot()
    }

    pub fn is_empty(&self) -> bool {
        self.shared.head.0.load(Relaxed).is_null()
    }

    /// Number of pushes and pops started so far, times two.
    pub fn op_version(&self) -> usize {
        self.version
    }

    #[allow(clippy::mut_from_ref)]
    fn retired(&self) -> &mut Retired<T> {
        // SAFETY: only the unique owner handle and `Drop` touch the list, and
        // the owner never holds two of these borrows at once.
        unsafe { &mut *self.shared.retired.get() }
    }

    /// Frees popped cells that no steal in flight can reach.
    pub fn reclaim(&mut self) {
        // Pairs with the fence after the stealer bumps `steal_seq`: either the
        // stealer sees the head stores that unlinked these cells, or we see
        // its steal as in flight.
        sync::fence(SeqCst);
        let seq = self.shared.steal_seq.0.load(Relaxed);
        let retired = self.retired();
        // SAFETY: unreachable from the head and from any live steal.
        let free = |cells: &mut Vec<NonNull<Node<T>>>| unsafe { Node::free_shells(cells) };
        if seq & 1 == 0 {
            free(&mut retired.pending);
            free(&mut retired.waiting);
            return;
        }
        if retired.waiting_seq != seq {
            free(&mut retired.waiting);
        }
        retired.waiting_seq = seq;
        let pending = std::mem::take(&mut retired.pending);
        retired.waiting.extend(pending);
    }

    /// Values in the chain, head first.
    ///
    /// Borrowing the stealer mutably guarantees no steal is in flight.
    pub fn snapshot(&self, stealer: &mut Stealer<T>) -> Vec<T>
    where
        T: Clone,
    {
        assert!(
            Arc::ptr_eq(&self.shared, &stealer.shared),
            "stealer belongs to another queue"
        );
        let mut out = Vec::new();
        let mut cur = self.shared.head.0.load(Relaxed);
        while let Some(node) = NonNull::new(cur) {
            // SAFETY: the owner and the only stealer are both borrowed here.
            unsafe {
                out.push((*node.as_ref().payload.get()).assume_init_ref().clone());
                cur = untag(node.as_ref().next.load(Relaxed));
            }
        }
        out
    }

    /// Whether `stealer` belongs to this queue.
    pub fn same_queue(&self, stealer: &Stealer<T>) -> bool {
        Arc::ptr_eq(&self.shared, &stealer.shared)
    }

    /// Addresses of the shared fields, for matching traced accesses.
    #[cfg(feature = "instrument")]
    pub fn field_addresses(&self) -> FieldAddresses {
        FieldAddresses {
            head: self.shared.head.0.address(),
            size: self.shared.size.0.address(),
            op_version: self.shared.op_version.0.address(),
            steal_seq: self.shared.steal_seq.0.address(),
        }
    }
}

/// See [`Owner::field_addresses`].
#[cfg(feature = "instrument")]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldAddresses {
    pub head: usize,
    pub size: usize,
    pub op_version: usize,
    pub steal_seq: usize,
}

/// Starts loading the next head cell while the caller works on this one.
#[inline(always)]
fn prefetch<T>(_cell: *const T) {
    #[cfg(target_arch = "x86_64")]
    // SAFETY: prefetching is a hint and never faults, even on a dangling or
    // null address.
    unsafe {
        std::arch::x86_64::_mm_prefetch::<{ std::arch::x86_64::_MM_HINT_T0 }>(_cell.cast());
    }
}

impl<T> fmt::Debug for Owner<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Owner")
            .field("size", &self.size())
            .field("op_version", &self.version)
            .finish()
    }
}

/// Stealer handle. There is exactly one per queue; `&mut self` on the steal
/// methods keeps at most one steal in flight.
pub struct Stealer<T> {
    shared: Arc<BulkStealQueue<T>>,
}

impl<T> Stealer<T> {
    /// Detaches `floor(size * p)` cells from the tail.
    pub fn steal(&mut self, p: Proportion) -> StealOutcome<Batch<T>> {
        self.run(p, false)
    }

    /// Like [`steal`](Self::steal), but skips the walk over the detached suffix
    /// when the owner did not touch the queue during the steal. The returned
    /// batch then locates its tail lazily.
    pub fn steal_optimized(&mut self, p: Proportion) -> StealOutcome<Batch<T>> {
        self.run(p, true)
    }

    pub fn size(&self) -> usize {
        self.shared.size_snapshot()
    }

    fn run(&mut self, p: Proportion, optimized: bool) -> StealOutcome<Batch<T>> {
        let q = &*self.shared;
        q.steal_seq.0.fetch_add(1, SeqCst);
        sync::fence(SeqCst);
        let outcome = self.attempt(p, optimized);
        q.steal_seq.0.fetch_add(1, Release);
        outcome
    }

    fn attempt(&self, p: Proportion, optimized: bool) -> StealOutcome<Batch<T>> {
        use StealOutcome::{Contention, Empty, Stolen};
        let q = &*self.shared;

        let version = q.op_version.0.load(Acquire);
        if version & 1 == 1 {
            return Contention;
        }
        let observed = q.size.0.load(Acquire);
        let snapshot = q.head.0.load(Acquire);
        sync::fence(Acquire);
        if q.op_version.0.load(Relaxed) != version {
            return Contention;
        }

        let observed = observed.max(0) as usize;
        let steal_count = p.steal_count(observed);
        if observed < MIN_STEAL_SIZE || steal_count == 0 {
            return Empty;
        }
        let kept = observed - steal_count;

        // SAFETY (whole walk): the snapshot chain held `observed` cells. Cells
        // popped since are retired, not freed, while this steal is in flight,
        // and popping keeps the successor address in the tagged link.
        let mut cut = snapshot;
        for _ in 1..kept {
            if cut.is_null() {
                debug_assert!(false, "chain shorter than its observed size");
                return Contention;
            }
            cut = untag(unsafe { (*cut).next.load(Acquire) });
        }
        let Some(cut) = NonNull::new(cut) else {
            debug_assert!(false, "chain shorter than its observed size");
            return Contention;
        };

        sync::phase(StealPhase::Traversed);
        let remaining = q.size.0.load(Acquire);
        if remaining.saturating_mul(2) < observed as isize {
            return Contention;
        }

        sync::phase(StealPhase::BeforeSever);
        let link = unsafe { &cut.as_ref().next };
        let successor = link.load(Acquire);
        if is_popped(successor) || successor.is_null() {
            return Contention;
        }
        if link
            .compare_exchange(successor, ptr::null_mut(), AcqRel, Acquire)
            .is_err()
        {
            return Contention;
        }
        // SAFETY: non-null, and the sever made the suffix ours.
        let stolen = unsafe { NonNull::new_unchecked(successor) };

        if optimized {
            sync::fence(Acquire);
            if q.op_version.0.load(Relaxed) == version {
                q.size.0.fetch_sub(steal_count as isize, AcqRel);
                // SAFETY: the suffix is detached, initialized and null-terminated.
                return Stolen(unsafe { Batch::from_raw(stolen, None, steal_count) });
            }
        }

        let mut tail = stolen;
        let mut count = 1;
        // SAFETY: the detached suffix is exclusively ours.
        while let Some(next) = NonNull::new(unsafe { tail.as_ref().next.load(Acquire) }) {
            tail = next;
            count += 1;
        }
        debug_assert_eq!(count, steal_count);
        q.size.0.fetch_sub(count as isize, AcqRel);
        Stolen(unsafe { Batch::from_raw(stolen, Some(tail), count) })
    }
}

impl<T> fmt::Debug for Stealer<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stealer").field("size", &self.size()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn filled(items: impl IntoIterator<Item = u32>) -> (Owner<u32>, Stealer<u32>) {
        let (mut o, s) = new_queue();
        o.push_batch(Batch::make(items));
        (o, s)
    }

    fn collect(b: Batch<u32>) -> Vec<u32> {
        b.into_iter().collect()
    }

    #[test]
    fn fresh_queue_is_empty() {
        let (mut o, mut s) = new_queue::<u32>();
        assert_eq!(o.size(), 0);
        assert_eq!(o.op_version(), 0);
        assert_eq!(o.pop(), None);
        assert_eq!(s.steal(Proportion::HALF), StealOutcome::Empty);
    }

    #[test]
    fn queues_are_independent() {
        let (mut a, _sa) = new_queue::<u32>();
        let (b, _sb) = new_queue::<u32>();
        a.push(1);
        assert_eq!(a.size(), 1);
        assert_eq!(b.size(), 0);
    }

    #[test]
    fn push_single_then_pop() {
        let (mut o, _s) = new_queue();
        o.push_batch(Batch::make(["a"]));
        assert_eq!(o.size(), 1);
        assert_eq!(o.pop(), Some("a"));
    }

    #[test]
    fn push_prepends_batch() {
        let (mut o, mut s) = filled([10, 11]);
        o.push_batch(Batch::make([1, 2, 3]));
        assert_eq!(o.size(), 5);
        assert_eq!(o.snapshot(&mut s), vec![1, 2, 3, 10, 11]);
    }

    #[test]
    fn empty_batch_push_is_noop() {
        let (mut o, _s) = new_queue::<u32>();
        o.push_batch(Batch::new());
        assert_eq!(o.op_version(), 0);
        assert_eq!(o.size(), 0);
    }

    #[test]
    fn pop_order_within_and_across_batches() {
        let (mut o, _s) = filled([1, 2, 3]);
        assert_eq!(
            (0..4).map(|_| o.pop()).collect::<Vec<_>>(),
            vec![Some(1), Some(2), Some(3), None]
        );
        o.push(1);
        o.push(2);
        assert_eq!(o.pop(), Some(2));
    }

    #[test]
    fn pop_on_empty_mutates_nothing() {
        let (mut o, _s) = new_queue::<u32>();
        o.pop();
        assert_eq!(o.op_version(), 0);
    }

    #[test]
    fn steal_half_of_ten() {
        let (o, mut s) = filled(1..=10);
        let b = s.steal(Proportion::HALF).stolen().unwrap();
        assert!(b.tail_known());
        assert_eq!(collect(b), vec![6, 7, 8, 9, 10]);
        assert_eq!(o.size(), 5);
        assert_eq!(o.snapshot(&mut s), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn steal_single_cell_is_empty() {
        let (o, mut s) = filled([1]);
        assert_eq!(s.steal(Proportion::HALF), StealOutcome::Empty);
        assert_eq!(s.steal_optimized(Proportion::HALF), StealOutcome::Empty);
        assert_eq!(o.snapshot(&mut s), vec![1]);
    }

    #[test]
    fn proportion_rounding_to_zero_is_empty() {
        let (_o, mut s) = filled(1..=3);
        assert_eq!(s.steal(Proportion::new(0.25).unwrap()), StealOutcome::Empty);
    }

    #[test]
    fn optimized_steal_defers_tail() {
        let (o, mut s) = filled(1..=10);
        let b = s.steal_optimized(Proportion::HALF).stolen().unwrap();
        assert!(!b.tail_known());
        assert_eq!(b.len(), 5);
        assert_eq!(collect(b), vec![6, 7, 8, 9, 10]);
        assert_eq!(o.snapshot(&mut s), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn stolen_batch_can_be_pushed_elsewhere() {
        let (_o, mut s) = filled(1..=8);
        let (mut o2, mut s2) = new_queue();
        let b = s.steal_optimized(Proportion::HALF).stolen().unwrap();
        o2.push_batch(b);
        o2.push(0);
        assert_eq!(o2.size(), 5);
        assert_eq!(o2.snapshot(&mut s2), vec![0, 5, 6, 7, 8]);
    }

    #[test]
    fn large_steal_counts() {
        let (mut o, mut s) = filled(0..10_000);
        let b = s.steal(Proportion::new(0.2).unwrap()).stolen().unwrap();
        assert_eq!(b.len(), 2_000);
        assert_eq!(b.iter().next(), Some(&8_000));
        assert_eq!(o.size(), 8_000);
        let b = s.steal(Proportion::uncapped(0.6).unwrap()).stolen().unwrap();
        assert_eq!(b.len(), 4_800);
        assert_eq!(o.size(), 3_200);
        drop(b);
        while o.pop().is_some() {}
        assert_eq!(o.size(), 0);
    }

    #[test]
    fn proportion_bounds() {
        assert!(Proportion::new(0.0).is_err());
        assert!(Proportion::new(0.51).is_err());
        assert!(Proportion::new(0.5).is_ok());
        assert!(Proportion::uncapped(0.6).is_ok());
        assert!(Proportion::uncapped(1.0).is_err());
        assert_eq!(Proportion::percent(57).unwrap().steal_count(100), 57);
        assert_eq!(Proportion::percent(30).unwrap().steal_count(10), 3);
        assert_eq!(Proportion::HALF.steal_count(7), 3);
    }

    #[test]
    fn drop_releases_payloads() {
        use std::rc::Rc;
        let marker = Rc::new(());
        {
            let (mut o, mut s) = new_queue();
            o.push_batch((0..100).map(|_| Rc::clone(&marker)).collect());
            let stolen = s.steal(Proportion::HALF);
            for _ in 0..10 {
                o.pop();
            }
            drop(stolen);
        }
        assert_eq!(Rc::strong_count(&marker), 1);
    }

    #[test]
    fn reclaim_frees_when_no_steal_in_flight() {
        let (mut o, _s) = filled(0..200);
        for _ in 0..200 {
            o.pop();
        }
        assert_eq!(o.retired().pending.len(), 200);
        o.reclaim();
        assert!(o.retired().pending.is_empty() && o.retired().waiting.is_empty());
    }

    /// Replays random owner/stealer scripts against a plain `VecDeque` model.
    #[test]
    fn sequential_model_agreement() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (mut o, mut s) = new_queue::<u32>();
        let mut model: VecDeque<u32> = VecDeque::new();
        let mut next = 0u32;
        for _ in 0..20_000 {
            match rng.gen_range(0..4) {
                0 => {
                    let k = rng.gen_range(0..6);
                    let items: Vec<u32> = (next..next + k).collect();
                    next += k;
                    for &x in items.iter().rev() {
                        model.push_front(x);
                    }
                    o.push_batch(Batch::make(items));
                }
                1 => assert_eq!(o.pop(), model.pop_front()),
                _ => {
                    let p = Proportion::new(rng.gen_range(0.05..=0.5)).unwrap();
                    let optimized = rng.gen_bool(0.5);
                    let n = model.len();
                    let k = p.steal_count(n);
                    let got = if optimized { s.steal_optimized(p) } else { s.steal(p) };
                    if n < MIN_STEAL_SIZE || k == 0 {
                        assert_eq!(got, StealOutcome::Empty);
                    } else {
                        let want: Vec<u32> = model.drain(n - k..).collect();
                        assert_eq!(collect(got.stolen().unwrap()), want);
                    }
                }
            }
            assert_eq!(o.size(), model.len());
        }
        assert_eq!(o.snapshot(&mut s), Vec::from(model));
    }
}
