//! Spectrally negative Lévy risk models with loss-carry-forward taxation
//! (refraction at the running maximum) and capital injections (reflection
//! at zero).
//!
//! The crate has two independent routes to every quantity of interest:
//! closed-form evaluation through the scale functions `W^q` and
//! `Z^{q,theta}` ([`scale`], [`analytics`]), and an exact event-driven Monte
//! Carlo engine ([`simulate`]). [`verify`] pairs the two.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod model;
#[cfg(test)]
mod properties;
pub mod quad;
pub mod scale;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use model::{ClaimMixture, LevyModel, TaxRate};
pub use scale::{ScaleContext, ScaleEval, Theta};
pub use simulate::{McEstimate, RefractedPath, SimConfig};
pub use verify::{run_identity_suite, SuiteParams, VerifyReport};
