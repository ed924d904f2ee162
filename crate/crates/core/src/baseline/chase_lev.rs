//! Dynamic circular work-stealing deque (Chase–Lev), in the C11 formulation of
//! Lê, Pop, Cohen and Zappa Nardelli.
//!
//! The owner pushes and pops at `bottom`; stealers take single tasks at `top`.
//! The ring buffer starts at [`INITIAL_CAPACITY`] slots and doubles when full.
//! Outgrown buffers are kept until the deque is dropped, so a stealer holding a
//! stale buffer pointer always reads valid memory.

use std::cell::UnsafeCell;
use std::mem::MaybeUninit;
use std::ptr;
use std::sync::atomic::Ordering::{Acquire, Relaxed, Release, SeqCst};
use std::sync::atomic::{fence, AtomicIsize, AtomicPtr};
use std::sync::Arc;

pub const INITIAL_CAPACITY: usize = 64;

struct Buffer<T> {
    mask: usize,
    slots: Box<[UnsafeCell<MaybeUninit<T>>]>,
}

impl<T> Buffer<T> {
    fn alloc(cap: usize) -> *mut Buffer<T> {
        debug_assert!(cap.is_power_of_two());
        let slots = (0..cap).map(|_| UnsafeCell::new(MaybeUninit::uninit())).collect();
        Box::into_raw(Box::new(Buffer {
            mask: cap - 1,
            slots,
        }))
    }

    fn cap(&self) -> usize {
        self.mask + 1
    }

    unsafe fn write(&self, index: isize, value: MaybeUninit<T>) {
        ptr::write_volatile(self.slots[index as usize & self.mask].get(), value);
    }

    /// Bitwise copy of a slot. Only the thread that wins the index may
    /// `assume_init` the result.
    unsafe fn read(&self, index: isize) -> MaybeUninit<T> {
        ptr::read_volatile(self.slots[index as usize & self.mask].get())
    }
}

#[repr(align(128))]
struct Padded<T>(T);

struct Inner<T> {
    top: Padded<AtomicIsize>,
    bottom: Padded<AtomicIsize>,
    buffer: AtomicPtr<Buffer<T>>,
    /// Outgrown buffers; touched only by the worker and by `Drop`.
    retired: UnsafeCell<Vec<*mut Buffer<T>>>,
}

unsafe impl<T: Send> Send for Inner<T> {}
unsafe impl<T: Send> Sync for Inner<T> {}

impl<T> Drop for Inner<T> {
    fn drop(&mut self) {
        let t = *self.top.0.get_mut();
        let b = *self.bottom.0.get_mut();
        let buf = *self.buffer.get_mut();
        unsafe {
            for i in t..b {
                drop((*buf).read(i).assume_init());
            }
            drop(Box::from_raw(buf));
            for old in self.retired.get_mut().drain(..) {
                drop(Box::from_raw(old));
            }
        }
    }
}

/// Result of a single-task steal.
#[derive(Debug, PartialEq, Eq)]
pub enum Steal<T> {
    Empty,
    /// Lost the race on `top` to the owner or another stealer.
    Retry,
    Success(T),
}

/// Owner side of a [`deque`].
pub struct Worker<T> {
    inner: Arc<Inner<T>>,
}

/// Stealer side of a [`deque`]; may be cloned.
pub struct Stealer<T> {
    inner: Arc<Inner<T>>,
}

impl<T> Clone for Stealer<T> {
    fn clone(&self) -> Self {
        Stealer {
            inner: Arc::clone(&self.inner),
        }
    }
}

/// Creates an empty deque.
pub fn deque<T>() -> (Worker<T>, Stealer<T>) {
    let inner = Arc::new(Inner {
        top: Padded(AtomicIsize::new(0)),
        bottom: Padded(AtomicIsize::new(0)),
        buffer: AtomicPtr::new(Buffer::alloc(INITIAL_CAPACITY)),
        retired: UnsafeCell::new(Vec::new()),
    });
    (
        Worker {
            inner: Arc::clone(&inner),
        },
        Stealer { inner },
    )
}

fn len_of<T>(inner: &Inner<T>) -> usize {
    let b = inner.bottom.0.load(Relaxed);
    let t = inner.top.0.load(Relaxed);
    (b - t).max(0) as usize
}

impl<T> Worker<T> {
    pub fn push(&mut self, value: T) {
        let inner = &*self.inner;
        let b = inner.bottom.0.load(Relaxed);
        let t = inner.top.0.load(Acquire);
        let mut buf = inner.buffer.load(Relaxed);
        // SAFETY: only the worker replaces the buffer.
        if b - t >= unsafe { (*buf).cap() } as isize {
            buf = self.grow(buf, t, b);
        }
        unsafe { (*buf).write(b, MaybeUninit::new(value)) };
        fence(Release);
        inner.bottom.0.store(b + 1, Relaxed);
    }

    fn grow(&self, old: *mut Buffer<T>, t: isize, b: isize) -> *mut Buffer<T> {
        let inner = &*self.inner;
        // SAFETY: the worker owns buffer replacement and the retired list.
        unsafe {
            let new = Buffer::alloc((*old).cap() * 2);
            for i in t..b {
                (*new).write(i, (*old).read(i));
            }
            inner.buffer.store(new, Release);
            (*inner.retired.get()).push(old);
            new
        }
    }

    pub fn pop(&mut self) -> Option<T> {
        let inner = &*self.inner;
        let b = inner.bottom.0.load(Relaxed) - 1;
        let buf = inner.buffer.load(Relaxed);
        inner.bottom.0.store(b, Relaxed);
        fence(SeqCst);
        let t = inner.top.0.load(Relaxed);
        if t > b {
            inner.bottom.0.store(b + 1, Relaxed);
            return None;
        }
        let value = unsafe { (*buf).read(b) };
        if t == b {
            let won = inner
                .top
                .0
                .compare_exchange(t, t + 1, SeqCst, Relaxed)
                .is_ok();
            inner.bottom.0.store(b + 1, Relaxed);
            // SAFETY: winning the race on the last slot makes the copy ours.
            return won.then(|| unsafe { value.assume_init() });
        }
        Some(unsafe { value.assume_init() })
    }

    pub fn len(&self) -> usize {
        len_of(&self.inner)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Current ring-buffer capacity.
    pub fn capacity(&self) -> usize {
        unsafe { (*self.inner.buffer.load(Relaxed)).cap() }
    }
}

impl<T> Stealer<T> {
    /// Takes the task at `top`.
    pub fn steal_one(&self) -> Steal<T> {
        let inner = &*self.inner;
        let t = inner.top.0.load(Acquire);
        fence(SeqCst);
        let b = inner.bottom.0.load(Acquire);
        if t >= b {
            return Steal::Empty;
        }
        let buf = inner.buffer.load(Acquire);
        let value = unsafe { (*buf).read(t) };
        if inner
            .top
            .0
            .compare_exchange(t, t + 1, SeqCst, Relaxed)
            .is_err()
        {
            return Steal::Retry;
        }
        // SAFETY: the successful CAS on `top` makes the slot copy ours.
        Steal::Success(unsafe { value.assume_init() })
    }

    pub fn len(&self) -> usize {
        len_of(&self.inner)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
