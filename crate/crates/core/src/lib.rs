//! Multi-view editing of colored point scenes driven by a video diffusion
//! prior: render views along a camera path, invert them into the prior's
//! noise space, re-sample with an edit condition and cross-view latent
//! correspondence, then bake the edited frames back into scene colors.

// Validators deliberately write `!(x > 0.0)`-style negations so NaN fails
// the check; rewriting them with `partial_cmp` would silently admit NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correspondence;
pub mod demo;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod trajectory;

pub use error::{Error, Result};
