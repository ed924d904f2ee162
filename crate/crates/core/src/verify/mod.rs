//! Correctness harness: conservation stress runs, steal-window races, a
//! sequential model and a linearizability checker for small histories.
//!
//! The race suite and the interleaving explorer need the `instrument`
//! feature.

#[cfg(feature = "instrument")]
pub mod explore;
pub mod history;
pub mod linearize;
pub mod oracle;
#[cfg(feature = "instrument")]
pub mod race;
pub mod stress;

pub use history::{merge_histories, Clock, OpCall, OpEvent, OpResult, Payload, Recorder, OWNER, STEALER};
pub use linearize::{check_linearizable, check_linearizable_bounded, Linearizability, DEFAULT_BOUND};
pub use oracle::{sequential_oracle_apply, SeqState};
pub use stress::{
    run_conservation, run_conservation_dyn, run_script, ConfigError, ConservationReport, HarnessError, StressConfig,
};
