//! Atomic cells shared between an owner and a stealer.
//!
//! With the `instrument` feature every access reports its address and kind to
//! a per-thread hook *before* it executes, and the steal path reports its two
//! phase boundaries. Without the feature the wrappers are plain std atomics.

use std::sync::atomic::{self, AtomicIsize, AtomicPtr, AtomicUsize, Ordering};

/// What a traced atomic access does to its location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Load,
    Store,
    /// Read-modify-write, including failed compare-exchange attempts.
    Rmw,
}

impl AccessKind {
    /// Two accesses to one location conflict unless both are loads.
    pub fn conflicts_with(self, other: AccessKind) -> bool {
        !(self == AccessKind::Load && other == AccessKind::Load)
    }
}

/// Boundaries inside a steal that tests can stretch or pause at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StealPhase {
    /// The cut node has been reached; the half-remaining check is next.
    Traversed,
    /// The check passed; the sever is next.
    BeforeSever,
}

/// An event reported to an installed hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Point {
    Access { addr: usize, kind: AccessKind },
    Phase(StealPhase),
}

#[cfg(feature = "instrument")]
pub mod hook {
    //! Per-thread observation hooks.

    use super::Point;
    use std::cell::RefCell;
    use std::rc::Rc;
    use std::sync::atomic::{AtomicUsize, Ordering};

    static INSTALLED: AtomicUsize = AtomicUsize::new(0);

    thread_local! {
        static HOOK: RefCell<Option<Rc<dyn Fn(Point)>>> = const { RefCell::new(None) };
    }

    /// Removes the hook of the installing thread when dropped.
    #[must_use = "the hook is removed when the guard is dropped"]
    pub struct HookGuard {
        _not_send: std::marker::PhantomData<Rc<()>>,
    }

    impl Drop for HookGuard {
        fn drop(&mut self) {
            HOOK.with(|h| h.borrow_mut().take());
            INSTALLED.fetch_sub(1, Ordering::Relaxed);
        }
    }

    /// Installs `f` as the hook for the current thread, replacing any previous one.
    pub fn install(f: impl Fn(Point) + 'static) -> HookGuard {
        let previous = HOOK.with(|h| h.borrow_mut().replace(Rc::new(f)));
        if previous.is_none() {
            INSTALLED.fetch_add(1, Ordering::Relaxed);
        }
        HookGuard {
            _not_send: std::marker::PhantomData,
        }
    }

    #[inline]
    pub(crate) fn emit(point: Point) {
        if INSTALLED.load(Ordering::Relaxed) == 0 {
            return;
        }
        let hook = HOOK.with(|h| h.borrow().clone());
        if let Some(hook) = hook {
            hook(point);
        }
    }

    /// Runs `f` and returns every point the current thread reported meanwhile.
    pub fn record<R>(f: impl FnOnce() -> R) -> (R, Vec<Point>) {
        let log = Rc::new(RefCell::new(Vec::new()));
        let sink = Rc::clone(&log);
        let guard = install(move |p| sink.borrow_mut().push(p));
        let out = f();
        drop(guard);
        let points = log.borrow().clone();
        (out, points)
    }
}

#[inline(always)]
fn trace(_addr: usize, _kind: AccessKind) {
    #[cfg(feature = "instrument")]
    hook::emit(Point::Access {
        addr: _addr,
        kind: _kind,
    });
}

#[inline(always)]
pub(crate) fn phase(_phase: StealPhase) {
    #[cfg(feature = "instrument")]
    hook::emit(Point::Phase(_phase));
}

#[inline(always)]
pub(crate) fn fence(order: Ordering) {
    atomic::fence(order);
}

macro_rules! traced_int {
    ($(#[$m:meta])* $name:ident, $atomic:ty, $int:ty) => {
        $(#[$m])*
        #[repr(transparent)]
        pub(crate) struct $name($atomic);

        #[allow(dead_code)]
        impl $name {
            pub(crate) const fn new(v: $int) -> Self {
                Self(<$atomic>::new(v))
            }

            #[inline(always)]
            fn addr(&self) -> usize {
                self as *const Self as usize
            }

            #[inline(always)]
            pub(crate) fn load(&self, order: Ordering) -> $int {
                trace(self.addr(), AccessKind::Load);
                self.0.load(order)
            }

            #[inline(always)]
            pub(crate) fn store(&self, v: $int, order: Ordering) {
                trace(self.addr(), AccessKind::Store);
                self.0.store(v, order)
            }

            #[inline(always)]
            pub(crate) fn fetch_add(&self, v: $int, order: Ordering) -> $int {
                trace(self.addr(), AccessKind::Rmw);
                self.0.fetch_add(v, order)
            }

            #[inline(always)]
            pub(crate) fn fetch_sub(&self, v: $int, order: Ordering) -> $int {
                trace(self.addr(), AccessKind::Rmw);
                self.0.fetch_sub(v, order)
            }

            pub(crate) fn address(&self) -> usize {
                self.addr()
            }
        }
    };
}

traced_int!(
    /// Unsigned counter with traced accesses.
    TracedUsize,
    AtomicUsize,
    usize
);
traced_int!(
    /// Signed counter with traced accesses; may dip below zero transiently.
    TracedIsize,
    AtomicIsize,
    isize
);

/// Pointer cell with traced accesses.
#[repr(transparent)]
pub(crate) struct TracedPtr<T>(AtomicPtr<T>);

impl<T> TracedPtr<T> {
    pub(crate) const fn new(p: *mut T) -> Self {
        Self(AtomicPtr::new(p))
    }

    #[inline(always)]
    fn addr(&self) -> usize {
        self as *const Self as usize
    }

    #[inline(always)]
    pub(crate) fn load(&self, order: Ordering) -> *mut T {
        trace(self.addr(), AccessKind::Load);
        self.0.load(order)
    }

    #[inline(always)]
    pub(crate) fn store(&self, p: *mut T, order: Ordering) {
        trace(self.addr(), AccessKind::Store);
        self.0.store(p, order)
    }

    #[inline(always)]
    pub(crate) fn fetch_or(&self, bits: usize, order: Ordering) -> *mut T {
        trace(self.addr(), AccessKind::Rmw);
        self.0.fetch_or(bits, order)
    }

    #[inline(always)]
    pub(crate) fn compare_exchange(
        &self,
        current: *mut T,
        new: *mut T,
        success: Ordering,
        failure: Ordering,
    ) -> Result<*mut T, *mut T> {
        trace(self.addr(), AccessKind::Rmw);
        self.0.compare_exchange(current, new, success, failure)
    }

    /// Unsynchronized access for exclusively owned cells.
    pub(crate) fn get_mut(&mut self) -> &mut *mut T {
        self.0.get_mut()
    }

    #[cfg(feature = "instrument")]
    pub(crate) fn address(&self) -> usize {
        self.addr()
    }
}
