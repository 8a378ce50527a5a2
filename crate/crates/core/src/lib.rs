//! Isometric extension of metrics from a subset `A` of a finite metric space
//! `(X, w)` to the whole space.
//!
//! Every metric `d` on `A` is sent to a metric `E(d)` on `X` that restricts to
//! `d` on `A`, and the map `d ↦ E(d)` preserves the sup-distance between
//! metrics. The construction embeds each point of `X` as a sequence of
//! (measure on `A`, sparse profile) pairs, one per dyadic level, and averages
//! a Wasserstein-plus-sup distance over the levels.

pub mod embedding;
pub mod error;
pub mod extensor;
pub mod gen;
pub mod instance;
pub mod metric;
pub mod transport;
pub mod verify;
pub mod wd;

pub use error::{Error, Result};
