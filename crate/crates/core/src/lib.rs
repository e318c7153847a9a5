//! Zero-shot 3D scene understanding driven by a vision-language model.
//!
//! A colored mesh is rendered top-down, overlaid with a labelled grid, and
//! handed to a VLM that names camera viewpoints as `(i, j) orientation`
//! pairs. Those viewpoints are rendered with a software rasterizer and fed
//! back to the model for question answering, captioning, task
//! decomposition, dialog, or 3D semantic segmentation through
//! back-projection of labelled image regions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod coverage;
pub mod error;
mod font;
pub mod harness;
pub mod metrics;
pub mod pose;
pub mod render;
pub mod scene;
pub mod seg;
pub mod solp;
pub mod vlm;

pub use error::{Error, Result};
