//! Contrastive explanations for sequential plans.
//!
//! Given a black-box transition model, an agent plan and a user-proposed
//! alternative (the foil), `foilscope` works out why the plan is preferable:
//! either the foil hits an action whose missing precondition can be named in
//! the user's concept vocabulary, or the foil is costlier and an abstract cost
//! function over concepts shows it. Both searches run on samples drawn from
//! the model around the plan and foil, and attach Bayesian confidence that
//! tolerates noisy concept detectors.

pub mod concepts;
pub mod confidence;
pub mod cost;
pub mod dialogue;
pub mod env;
pub mod experiments;
mod error;
pub mod manifest;
pub mod model;
pub mod oracle;
pub mod precondition;
pub mod sampler;

pub use error::{Error, Result};
