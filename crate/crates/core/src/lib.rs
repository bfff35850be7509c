//! Diversity-fair online selection.
//!
//! Candidates arrive in rounds, each carrying a set of binary attributes. A recruiter with total
//! capacity `K` (or per-round capacity `a`) irrevocably selects candidates to maximize the
//! smallest weighted expected coverage `min_k c_k E[#selected with attribute k]`.
//!
//! The crate provides the offline fluid benchmark ([`benchmark`]), a zero-loss online rounding
//! scheme ([`rounding`]), policies for the fixed-capacity ([`fixed_cap`]) and unknown-capacity
//! ([`unknown_cap`]) scenarios, hard-instance generators ([`generators`]) and a verification
//! harness that checks the guaranteed competitive ratios ([`harness`]).

pub mod benchmark;
pub mod error;
pub mod fixed_cap;
pub mod generators;
pub mod harness;
pub mod instance;
pub mod math;
pub mod rounding;
pub mod simplex;
pub mod stats;
pub mod unknown_cap;

pub use error::{Error, Result};
pub use instance::{
    least_utility, parse_instance, serialize_instance, validate_feasibility, AttributeVector, FeasibilityMode,
    FractionalSolution, Instance, Round, UtilityVector, EPSILON,
};
pub use stats::{instance_stats, InstanceStats};
