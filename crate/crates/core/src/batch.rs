//! Queue cells and detached batches of cells.

use std::alloc::{self, Layout};
use std::cell::{RefCell, UnsafeCell};
use std::fmt;
use std::iter::FusedIterator;
use std::marker::PhantomData;
use std::mem::MaybeUninit;
use std::ptr::{self, NonNull};
use std::sync::atomic::Ordering::Relaxed;

use crate::sync::TracedPtr;

/// Bytes each queue cell is padded to.
#[cfg(not(feature = "node-pad-64"))]
pub const NODE_PADDING: usize = 128;
#[cfg(feature = "node-pad-64")]
pub const NODE_PADDING: usize = 64;

/// Low bit set on a cell's `next` link once the owner has popped the cell.
pub(crate) const POPPED: usize = 1;

/// A queue cell: a payload and a link to its successor.
///
/// Cells are padded to [`NODE_PADDING`] bytes so that cells touched by the
/// owner and by a stealer never share a cache line (or an adjacent-line
/// prefetch pair at the default of 128).
#[cfg_attr(not(feature = "node-pad-64"), repr(C, align(128)))]
#[cfg_attr(feature = "node-pad-64", repr(C, align(64)))]
pub(crate) struct Node<T> {
    pub(crate) next: TracedPtr<Node<T>>,
    pub(crate) payload: UnsafeCell<MaybeUninit<T>>,
}

const _: () = assert!(std::mem::size_of::<Node<u64>>() >= NODE_PADDING);
const _: () = assert!(std::mem::align_of::<Node<u8>>() == NODE_PADDING);

impl<T> Node<T> {
    const LAYOUT: Layout = Layout::new::<Node<T>>();

    pub(crate) fn alloc(value: T) -> NonNull<Node<T>> {
        let raw = shells::take(Self::LAYOUT).unwrap_or_else(|| {
            // SAFETY: the layout has a non-zero size.
            let p = unsafe { alloc::alloc(Self::LAYOUT) };
            NonNull::new(p).unwrap_or_else(|| alloc::handle_alloc_error(Self::LAYOUT))
        });
        let node = raw.cast::<Node<T>>();
        // SAFETY: `raw` is fresh or recycled memory with the layout of a cell.
        unsafe {
            node.as_ptr().write(Node {
                next: TracedPtr::new(ptr::null_mut()),
                payload: UnsafeCell::new(MaybeUninit::new(value)),
            })
        };
        node
    }

    /// Releases a cell whose payload has already been moved out.
    ///
    /// # Safety
    ///
    /// `node` came from [`Node::alloc`], is not reachable by any other thread
    /// and its payload is uninitialized.
    pub(crate) unsafe fn free_shell(node: NonNull<Node<T>>) {
        ptr::drop_in_place(ptr::addr_of_mut!((*node.as_ptr()).next));
        shells::give(Self::LAYOUT, node.cast());
    }

    /// [`Node::free_shell`] for every cell in `cells`, which is left empty.
    ///
    /// # Safety
    ///
    /// As for [`Node::free_shell`], for each cell.
    pub(crate) unsafe fn free_shells(cells: &mut Vec<NonNull<Node<T>>>) {
        for node in cells.iter() {
            ptr::drop_in_place(ptr::addr_of_mut!((*node.as_ptr()).next));
        }
        shells::give_all(Self::LAYOUT, cells.drain(..).map(NonNull::cast));
    }

    /// Frees a cell together with its payload.
    ///
    /// # Safety
    ///
    /// As for [`Node::free_shell`], except the payload must be initialized.
    pub(crate) unsafe fn free_with_payload(node: NonNull<Node<T>>) {
        drop(Self::take_payload(node));
        Self::free_shell(node);
    }

    /// Moves the payload out, leaving the cell uninitialized.
    ///
    /// # Safety
    ///
    /// The payload is initialized and nobody else reads it.
    pub(crate) unsafe fn take_payload(node: NonNull<Node<T>>) -> T {
        (*node.as_ref().payload.get()).assume_init_read()
    }
}

/// Released cell memory, kept per thread for reuse by later allocations of the
/// same layout.
mod shells {
    use super::*;

    /// Shells kept per layout and thread; beyond this they go back to the
    /// allocator.
    pub(super) const CAPACITY: usize = 1 << 14;

    #[derive(Default)]
    struct Pool {
        free: Vec<(Layout, Vec<NonNull<u8>>)>,
    }

    impl Drop for Pool {
        fn drop(&mut self) {
            for (layout, shells) in self.free.drain(..) {
                for p in shells {
                    // SAFETY: every pooled shell was allocated with `layout`.
                    unsafe { alloc::dealloc(p.as_ptr(), layout) };
                }
            }
        }
    }

    impl Pool {
        fn list(&mut self, layout: Layout) -> &mut Vec<NonNull<u8>> {
            let i = match self.free.iter().position(|(l, _)| *l == layout) {
                Some(i) => i,
                None => {
                    self.free.push((layout, Vec::new()));
                    self.free.len() - 1
                }
            };
            &mut self.free[i].1
        }
    }

    thread_local! {
        static POOL: RefCell<Pool> = RefCell::new(Pool::default());
    }

    /// # Safety
    ///
    /// As for [`give`], for each shell.
    pub(super) unsafe fn give_all(layout: Layout, mut shells: impl Iterator<Item = NonNull<u8>>) {
        let _ = POOL.try_with(|pool| {
            let mut pool = pool.borrow_mut();
            let list = pool.list(layout);
            let room = CAPACITY.saturating_sub(list.len());
            list.extend(shells.by_ref().take(room));
        });
        for p in shells {
            alloc::dealloc(p.as_ptr(), layout);
        }
    }

    pub(super) fn take(layout: Layout) -> Option<NonNull<u8>> {
        POOL.try_with(|p| p.borrow_mut().list(layout).pop()).ok().flatten()
    }

    /// # Safety
    ///
    /// `p` was allocated by the global allocator with `layout` and nothing
    /// else refers to it.
    pub(super) unsafe fn give(layout: Layout, p: NonNull<u8>) {
        let kept = POOL
            .try_with(|pool| {
                let mut pool = pool.borrow_mut();
                let list = pool.list(layout);
                if list.len() < CAPACITY {
                    list.push(p);
                    true
                } else {
                    false
                }
            })
            .unwrap_or(false);
        if !kept {
            alloc::dealloc(p.as_ptr(), layout);
        }
    }
}

#[inline]
pub(crate) fn untag<T>(p: *mut Node<T>) -> *mut Node<T> {
    p.map_addr(|a| a & !POPPED)
}

#[inline]
pub(crate) fn is_popped<T>(p: *mut Node<T>) -> bool {
    p.addr() & POPPED != 0
}

/// A detached, singly linked run of cells with a known length.
///
/// A batch is the unit of [`Owner::push_batch`](crate::Owner::push_batch) and
/// the result of a successful steal. Iteration runs from the head (the cell
/// that will be popped first once pushed) to the tail.
///
/// Batches returned by the optimized steal know their length but not their
/// tail; the tail is located the first time the batch is walked or pushed.
pub struct Batch<T> {
    head: Option<NonNull<Node<T>>>,
    tail: Option<NonNull<Node<T>>>,
    len: usize,
    _owns: PhantomData<Box<Node<T>>>,
}

unsafe impl<T: Send> Send for Batch<T> {}
unsafe impl<T: Sync> Sync for Batch<T> {}

impl<T> Batch<T> {
    /// An empty batch.
    pub const fn new() -> Self {
        Batch {
            head: None,
            tail: None,
            len: 0,
            _owns: PhantomData,
        }
    }

    /// Builds a batch whose list order equals the iteration order of `items`.
    pub fn make(items: impl IntoIterator<Item = T>) -> Self {
        let mut items = items.into_iter();
        let Some(first) = items.next() else {
            return Batch::new();
        };
        let head = Node::alloc(first);
        let mut tail = head;
        let mut len = 1;
        for item in items {
            let node = Node::alloc(item);
            // SAFETY: every cell of the batch is exclusively ours.
            unsafe { *tail.as_mut().next.get_mut() = node.as_ptr() };
            tail = node;
            len += 1;
        }
        Batch {
            head: Some(head),
            tail: Some(tail),
            len,
            _owns: PhantomData,
        }
    }

    /// Wraps a detached chain.
    ///
    /// # Safety
    ///
    /// `head` starts a chain of exactly `len` cells that the caller owns
    /// exclusively, whose payloads are initialized and whose last link is null.
    /// If `tail` is given it is the last cell of that chain.
    pub(crate) unsafe fn from_raw(
        head: NonNull<Node<T>>,
        tail: Option<NonNull<Node<T>>>,
        len: usize,
    ) -> Self {
        debug_assert!(len > 0);
        Batch {
            head: Some(head),
            tail,
            len,
            _owns: PhantomData,
        }
    }

    /// Releases the chain as `(head, tail, len)`, walking to the tail if it is
    /// not yet known.
    pub(crate) fn into_raw(mut self) -> Option<(NonNull<Node<T>>, NonNull<Node<T>>, usize)> {
        let head = self.head.take()?;
        let tail = self.resolve_tail_from(head);
        let len = self.len;
        self.len = 0;
        self.tail = None;
        Some((head, tail, len))
    }

    fn resolve_tail_from(&mut self, head: NonNull<Node<T>>) -> NonNull<Node<T>> {
        if let Some(tail) = self.tail {
            return tail;
        }
        let mut cur = head;
        // SAFETY: the batch owns its cells; the chain ends with a null link.
        unsafe {
            loop {
                let next = cur.as_ref().next.load(Relaxed);
                match NonNull::new(next) {
                    Some(n) => cur = n,
                    None => break,
                }
            }
        }
        self.tail = Some(cur);
        cur
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Whether the tail cell has been located.
    pub fn tail_known(&self) -> bool {
        self.head.is_none() || self.tail.is_some()
    }

    pub fn iter(&self) -> Iter<'_, T> {
        Iter {
            cur: self.head,
            _batch: PhantomData,
        }
    }

    /// Appends `other` after the tail of `self`.
    pub fn append(&mut self, other: Batch<T>) {
        let Some((head, tail, len)) = other.into_raw() else {
            return;
        };
        match self.head {
            None => {
                self.head = Some(head);
                self.tail = Some(tail);
                self.len = len;
            }
            Some(h) => {
                let mut last = self.resolve_tail_from(h);
                // SAFETY: both chains are exclusively ours.
                unsafe { *last.as_mut().next.get_mut() = head.as_ptr() };
                self.tail = Some(tail);
                self.len += len;
            }
        }
    }
}

impl<T> Default for Batch<T> {
    fn default() -> Self {
        Batch::new()
    }
}

impl<T> FromIterator<T> for Batch<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Batch::make(iter)
    }
}

impl<T> Drop for Batch<T> {
    fn drop(&mut self) {
        let mut cur = self.head.take();
        while let Some(node) = cur {
            // SAFETY: the batch owns its cells and their payloads.
            unsafe {
                cur = NonNull::new(node.as_ref().next.load(Relaxed));
                Node::free_with_payload(node);
            }
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Batch<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl<T: PartialEq> PartialEq for Batch<T> {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter().eq(other.iter())
    }
}

impl<T: Eq> Eq for Batch<T> {}

/// Borrowing iterator over a [`Batch`], head to tail.
pub struct Iter<'a, T> {
    cur: Option<NonNull<Node<T>>>,
    _batch: PhantomData<&'a Batch<T>>,
}

impl<'a, T> Iterator for Iter<'a, T> {
    type Item = &'a T;

    fn next(&mut self) -> Option<&'a T> {
        let node = self.cur?;
        // SAFETY: the borrowed batch keeps its cells alive and initialized.
        unsafe {
            self.cur = NonNull::new(node.as_ref().next.load(Relaxed));
            Some((*node.as_ref().payload.get()).assume_init_ref())
        }
    }
}

impl<T> FusedIterator for Iter<'_, T> {}

/// Owning iterator over a [`Batch`], head to tail.
pub struct IntoIter<T> {
    batch: Batch<T>,
}

impl<T> Iterator for IntoIter<T> {
    type Item = T;

    fn next(&mut self) -> Option<T> {
        let node = self.batch.head?;
        // SAFETY: the batch owns the cell; unlinking it before reading keeps
        // the batch consistent if the payload move panics (it cannot).
        unsafe {
            self.batch.head = NonNull::new(node.as_ref().next.load(Relaxed));
            self.batch.len -= 1;
            if self.batch.head.is_none() {
                self.batch.tail = None;
            }
            let value = Node::take_payload(node);
            Node::free_shell(node);
            Some(value)
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.batch.len, Some(self.batch.len))
    }
}

impl<T> ExactSizeIterator for IntoIter<T> {}
impl<T> FusedIterator for IntoIter<T> {}

impl<T> IntoIterator for Batch<T> {
    type Item = T;
    type IntoIter = IntoIter<T>;

    fn into_iter(self) -> IntoIter<T> {
        IntoIter { batch: self }
    }
}

impl<'a, T> IntoIterator for &'a Batch<T> {
    type Item = &'a T;
    type IntoIter = Iter<'a, T>;

    fn into_iter(self) -> Iter<'a, T> {
        self.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn released_shells_are_reused_by_the_same_thread() {
        let a = Node::alloc(String::from("a"));
        // SAFETY: `a` is ours alone and still holds its payload.
        unsafe { Node::free_with_payload(a) };
        let b = Node::alloc(String::from("b"));
        assert_eq!(a, b);
        // SAFETY: as above.
        unsafe {
            assert_eq!(Node::take_payload(b), "b");
            Node::free_shell(b);
        }
        let pooled = b.as_ptr() as usize;
        std::thread::spawn(move || {
            let c = Node::alloc(String::from("c"));
            assert_ne!(c.as_ptr() as usize, pooled);
            // SAFETY: as above.
            unsafe { Node::free_with_payload(c) };
        })
        .join()
        .unwrap();
    }

    #[test]
    fn shell_pool_is_bounded() {
        let cells: Vec<_> = (0..shells::CAPACITY + 10).map(|i| Node::alloc([i as u8; 3])).collect();
        for c in cells {
            // SAFETY: each cell is ours and initialized.
            unsafe { Node::free_with_payload(c) };
        }
        let layout = Layout::new::<Node<[u8; 3]>>();
        let pooled: Vec<_> = std::iter::from_fn(|| shells::take(layout)).collect();
        assert_eq!(pooled.len(), shells::CAPACITY);
        for p in pooled {
            // SAFETY: the shells came out of the pool with this layout.
            unsafe { shells::give(layout, p) };
        }
    }

    /// Independent walk over the raw links, used to check the batch shape.
    fn walk<T: Clone>(b: &Batch<T>) -> (Vec<T>, Option<NonNull<Node<T>>>) {
        let mut out = Vec::new();
        let mut last = None;
        let mut cur = b.head;
        while let Some(n) = cur {
            unsafe {
                out.push((*n.as_ref().payload.get()).assume_init_ref().clone());
                last = Some(n);
                cur = NonNull::new(n.as_ref().next.load(Relaxed));
            }
        }
        (out, last)
    }

    #[test]
    fn empty_batch() {
        let b: Batch<u32> = Batch::make([]);
        assert_eq!(b.len(), 0);
        assert!(b.head.is_none() && b.tail.is_none());
    }

    #[test]
    fn single_item_head_is_tail() {
        let b = Batch::make(["a"]);
        assert_eq!(b.len(), 1);
        assert_eq!(b.head, b.tail);
    }

    #[test]
    fn walk_matches_input_order() {
        let b = Batch::make(["a", "b", "c"]);
        let (items, last) = walk(&b);
        assert_eq!(items, vec!["a", "b", "c"]);
        assert_eq!(b.len(), 3);
        assert_eq!(last, b.tail);
        unsafe { assert!(b.tail.unwrap().as_ref().next.load(Relaxed).is_null()) };
    }

    #[test]
    fn append_concatenates() {
        let mut a = Batch::make([1, 2]);
        a.append(Batch::make([3]));
        a.append(Batch::new());
        assert_eq!(a.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(a.len(), 3);
        let mut e = Batch::new();
        e.append(Batch::make([9]));
        assert_eq!(e.into_iter().collect::<Vec<_>>(), vec![9]);
    }

    #[test]
    fn into_iter_drops_remaining() {
        use std::rc::Rc;
        let marker = Rc::new(());
        let b = Batch::make((0..5).map(|_| Rc::clone(&marker)));
        let mut it = b.into_iter();
        it.next();
        drop(it);
        assert_eq!(Rc::strong_count(&marker), 1);
    }

    #[test]
    fn cells_fill_padding() {
        assert!(std::mem::size_of::<Node<[u8; 8]>>() >= NODE_PADDING);
        assert_eq!(std::mem::size_of::<Node<u8>>() % NODE_PADDING, 0);
    }
}
