//! A deque behind one mutex, exposing the bulk API.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex, MutexGuard};

use crate::{Proportion, StealOutcome, MIN_STEAL_SIZE};

type Shared<T> = Arc<Mutex<VecDeque<T>>>;

fn lock<T>(q: &Shared<T>) -> MutexGuard<'_, VecDeque<T>> {
    q.lock().unwrap_or_else(|e| e.into_inner())
}

pub struct LockedOwner<T> {
    inner: Shared<T>,
}

pub struct LockedStealer<T> {
    inner: Shared<T>,
}

pub fn locked_deque<T>() -> (LockedOwner<T>, LockedStealer<T>) {
    let inner = Arc::new(Mutex::new(VecDeque::new()));
    (
        LockedOwner {
            inner: Arc::clone(&inner),
        },
        LockedStealer { inner },
    )
}

impl<T> LockedOwner<T> {
    /// Puts `items` in front, first item at the head.
    pub fn push_batch(&mut self, items: Vec<T>) {
        let mut q = lock(&self.inner);
        for item in items.into_iter().rev() {
            q.push_front(item);
        }
    }

    pub fn pop(&mut self) -> Option<T> {
        lock(&self.inner).pop_front()
    }

    pub fn len(&self) -> usize {
        lock(&self.inner).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T> LockedStealer<T> {
    /// Removes `floor(len * p)` items from the back one at a time under a
    /// single lock acquisition; returns them head to tail.
    pub fn steal(&mut self, p: Proportion) -> StealOutcome<Vec<T>> {
        let mut q = lock(&self.inner);
        let n = q.len();
        let k = p.steal_count(n);
        if n < MIN_STEAL_SIZE || k == 0 {
            return StealOutcome::Empty;
        }
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            out.extend(q.pop_back());
        }
        out.reverse();
        StealOutcome::Stolen(out)
    }

    pub fn len(&self) -> usize {
        lock(&self.inner).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
