//! Iterative visual prompting: optimize a continuous action by repeatedly
//! drawing sampled candidates onto an image and letting a selection oracle
//! pick the best ones.
//!
//! This crate is `no_std` and needs only `alloc`.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod annotate;
pub mod metrics;
pub mod optimize;
pub mod oracle;
pub mod raster;
pub mod seed;
pub mod sim;
pub mod space;

pub use annotate::{AnnotatedImage, AnnotationStyle, Candidate};
pub use optimize::{
    init_distribution, parallel_pivot, pivot_run, pivot_step, Aggregation, OptimizeError, PivotConfig, Problem,
    ProposalDistribution,
};
pub use oracle::{SelectionOracle, SelectionQuery, SelectionResponse};
pub use raster::{Raster, Rgb};
pub use space::{Action, ActionSpaceSpec, CameraModel, ImageSize, SpaceKind};
