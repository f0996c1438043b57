//! Bounding-box overlap metrics and regression losses built around the
//! control-distance IoU (CDIoU): a corner-distance ratio normalized by the
//! enclosing box diagonal, used both as a tie-breaker in evaluation and as a
//! penalty added to an IoU-family loss.
//!
//! Besides the metric/loss family the crate provides a finite-difference
//! gradient checker, a synthetic box-regression simulator and anchor-size
//! clustering of ground-truth boxes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cluster;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod simulator;

pub use error::{Error, Result};
pub use geometry::Box;
pub use losses::{BaseLoss, Gradient4, LossKind};
pub use metrics::MetricKind;
