//! Discrete-time simulation library for truthful online job scheduling.
//!
//! A stream of jobs, each reporting an arrival, a deadline, a length, and a
//! per-unit value, competes for `m` machine units per time slot over a finite
//! horizon. The library provides:
//!
//! - the job/instance data model with welfare and utility accounting ([`job`]);
//! - posted-pricing-FIFO mechanisms in clairvoyant (lengths reported at
//!   arrival) and non-clairvoyant (lengths observed at completion) variants,
//!   behind small mechanism contracts ([`mech`]);
//! - truthful switching constructions that move a running schedule from one
//!   mechanism to another while preserving incentives, plus the restart
//!   wrapper used in the non-clairvoyant setting ([`switching`]);
//! - regret-minimizing learners: a lazily-switching perturbed-leader engine
//!   for experts with switching costs, EXP3 for adversarial bandits, and a
//!   doubling wrapper for unknown reward range and horizon ([`learners`]);
//! - the `fts`/`ftbs` combiners that run a roster of mechanisms under a
//!   learner and switch truthfully between them ([`combiners`]);
//! - instance generators, including the clairvoyant and non-clairvoyant
//!   lower-bound constructions and stochastic streams ([`instances`]);
//! - an exhaustive misreport enumerator that hunts for profitable lies and
//!   order-respecting violations ([`truthcheck`]).

pub mod combiners;
pub mod error;
pub mod instances;
pub mod job;
pub mod learners;
pub mod mech;
pub mod switching;
pub mod truthcheck;

pub use error::SchedError;
pub use job::{
    served_jobs, total_welfare, utility, validate_instance, welfare_series, Allocation, Bounds,
    Instance, JobOutcome, JobType, Setting, WelfareSeries,
};

/// Comparison tolerance for welfare and utility values stored as `f64`.
///
/// Test corpora keep values on dyadic grids so sums are exact; the tolerance
/// only absorbs the residue of honest floating-point accumulation.
pub const VALUE_EPS: f64 = 1e-9;
