//! Coarse-to-fine volumetric tooth segmentation toolkit.
//!
//! - [`volume`]: voxel grids, file IO, intensity normalization, resampling, cropping
//! - [`weaklabels`]: dense 33-class masks from sparse axial boxes
//! - [`roi`]: per-tooth regions of interest and reassembly of fine predictions
//! - [`metrics`]: soft Jaccard loss, IoU, average surface distance, evaluation reports
//! - [`segmenter`]: segmenter interfaces, reference segmenters and the pipeline driver
//! - [`phantom`]: deterministic synthetic CBCT-like studies with ground truth

pub mod components;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod phantom;
pub mod roi;
pub mod segmenter;
pub mod volume;
pub mod weaklabels;

pub use error::{Error, Result};
