//! Synthetic X-ray generation from annotated CT, with augmentation and
//! evaluation utilities for training and scoring radiograph models.
//!
//! The pipeline in brief:
//!
//! 1. load a CT ([`volume`]) or build a [`phantom`],
//! 2. sample C-arm poses and build a projection ([`geometry`]),
//! 3. render a DRR with one of three simulators ([`projector`], [`physics`]),
//!    projecting labels and landmarks alongside ([`labels2d`]),
//! 4. randomize appearance ([`augment`]),
//! 5. write datasets, folds and evaluation reports ([`dataset`], [`metrics`]).
//!
//! Runnable walkthroughs live in the crate's `examples/` directory, e.g.
//! `cargo run --example project_phantom`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod commands;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod labels2d;
pub mod metrics;
pub mod phantom;
pub mod physics;
pub mod projector;
pub mod volume;

pub use error::{Error, Result};
pub use grid::{Grid2, Image, Mask};
