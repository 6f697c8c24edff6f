//! Interpretability metrics for part-based prototype networks.
//!
//! The engine ingests model artifacts exported in the `QPT1` tensor container
//! (feature maps, similarity maps, saliency maps, classifier weights, ...),
//! runs the perturbation protocols, and computes the output-completeness,
//! continuity, contrastivity, covariate-complexity, compactness and
//! performance metric suites.

// `!(x > 0.0)`-style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod interchange;
pub mod kernel;
pub mod metrics;
pub mod perturb;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
pub use grid::{Grid, Image, Mask};
