//! Volumetric kernels for pose-aware tooth instance segmentation from
//! CBCT-like images.
//!
//! The crate is `no_std` (with `alloc`) and pure: every operation is a
//! deterministic function of its inputs and, where randomness is involved,
//! an explicit seed. File formats, the command-line front end and the
//! end-to-end pipeline live in the `dentvox-cli` companion crate.
//!
//! Modules follow the processing order of the pipeline:
//!
//! 1. [`volume`] – dense grids, projection, normalization and resampling.
//! 2. [`pose`] – pose loss and volume-of-interest realignment.
//! 3. [`detector`] – box algebra, NMS, anchor sampling and box metrics.
//! 4. [`distance`] – Chamfer distance maps, regression targets and assembly.
//! 5. [`augment`] – cutout, random affine and crop standardization.
//! 6. [`neural`] – reverse-mode tensor engine, SkipBlock and TSNet.
//! 7. [`metrics`] – F1, AJI, Hausdorff and ASSD.
//! 8. [`phantom`] – procedural jaw phantoms with exact ground truth.

#![no_std]

extern crate alloc;

pub mod augment;
pub mod detector;
pub mod distance;
mod error;
pub mod geometry;
pub mod metrics;
pub mod neural;
pub mod phantom;
pub mod pose;
pub mod rng;
pub mod volume;

pub use error::{Error, Result};
