//! Core library for phase-interface process monitoring.
//!
//! The crate turns segmented laboratory scenes into numbers: pixel-level mask
//! geometry, COCO-style instance-segmentation evaluation (flat and
//! vessel-conditioned), reference implementations of the attention blocks with
//! analytic gradients, weak color-attribute labeling, time-resolved process
//! descriptors, and a streaming monitor that converts frame records into
//! events and experiment records.

pub mod colorattr;
pub mod dataset;
pub mod descriptors;
pub mod evaluator;
pub mod geometry;
pub mod nnref;

pub use geometry::{BBox, BinaryMask, Polygon, RleMask};
