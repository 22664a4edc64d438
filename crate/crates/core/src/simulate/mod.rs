//! Exact event-driven simulation of the surplus process and its controlled
//! versions, plus Monte Carlo estimators built on top.

pub mod engine;
pub mod estimate;
pub mod path;
pub mod rng;
pub mod two_sided;

pub use crate::verify::falsify_two_sided_identity;
pub use engine::{run_one_sided, EngineParams, LowerRule, Outcome, StopRule, Termination};
pub use estimate::*;
pub use path::{
    occupation_below, occupation_below_zero, simulate_free_segment, Claim, ClaimSource, EventKind,
    FreePath, PathEvent, RefractedPath, SampledClaims, TRACE_HEADER,
};
pub use rng::{derive_seed, path_rng};
pub use two_sided::{run_two_sided, two_sided_refract, LowerRestart, TwoSidedParams};
