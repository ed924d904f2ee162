//! Lock-free work-stealing queue with native bulk push and proportional bulk
//! steal, for one owner and one stealer at a time.
//!
//! ```
//! use bulksteal::{new_queue, Batch, Proportion};
//!
//! let (mut owner, mut stealer) = new_queue();
//! owner.push_batch(Batch::make(1..=10));
//!
//! let stolen = stealer.steal(Proportion::HALF).stolen().unwrap();
//! assert_eq!(stolen.into_iter().collect::<Vec<_>>(), vec![6, 7, 8, 9, 10]);
//! assert_eq!(owner.pop(), Some(1));
//! ```
//!
//! Besides the queue the crate carries the pieces used to evaluate it:
//! comparator queues ([`baseline`]), a correctness harness ([`verify`]),
//! latency benchmarks ([`bench`]) and a DAG-exploration workload ([`dag`]).

pub mod baseline;
mod batch;
pub mod bench;
pub mod dag;
mod queue;
pub mod sync;
pub mod verify;

pub use batch::{Batch, IntoIter, Iter, NODE_PADDING};
#[cfg(feature = "instrument")]
pub use queue::FieldAddresses;
pub use queue::{
    new_queue, BulkStealQueue, Owner, Proportion, ProportionError, StealOutcome, Stealer,
    MIN_STEAL_SIZE,
};
