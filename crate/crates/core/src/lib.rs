//! Hyperbolic attribute editing.
//!
//! Latent codes live on the Poincaré ball. An encoder learns to place
//! samples so that fine-grained codes sit near the boundary and shared,
//! more abstract structure sits near the origin; edits then move codes
//! along geodesics or rescale them to a chosen hyperbolic radius, which
//! controls how far an edit is allowed to drift semantically.
//!
//! The pretrained image encoder and generator are replaced by a frozen
//! random affine map and its pseudo-inverse, which keeps every stage
//! exactly checkable at desk scale.
//!
//! Module map:
//!
//! - [`geometry`]: gyrovector operations, exp/log maps, distances, geodesics
//! - [`hyperlayers`]: MLPs, the Möbius linear layer, hyperbolic MLR
//! - [`grad`]: tape-based reverse mode plus a finite-difference verifier
//! - [`losses`], [`model`], [`train`]: the objective, the pipeline, Adam
//!   and checkpoints
//! - [`data`]: synthetic two-level hierarchy and its CSV format
//! - [`edit`]: interpolation, radius-controlled perturbation, shared edits
//! - [`eval`]: oracle classifier, radius sweep, radius structure
//! - [`check`], [`plot`], [`cli`]: self-checks, SVG output, command line

pub mod check;
pub mod cli;
pub mod data;
pub mod edit;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grad;
pub mod hyperlayers;
mod io;
pub mod losses;
pub mod model;
pub mod plot;
pub mod train;

pub use error::{HaeError, Result};
