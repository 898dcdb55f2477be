//! Uncertainty-driven active learning for non-intrusive load monitoring.
//!
//! Heteroskedastic sequence-to-point networks are trained on the houses that
//! carry appliance sub-meters. MC-dropout turns each network into a mixture
//! of Gaussians per prediction; entropy and mutual-information scores over a
//! time window then decide which pool house gets sensors next.

pub mod acquisition;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod rng;
pub mod uncertainty;
pub mod verify;

pub use error::{Error, Result};
