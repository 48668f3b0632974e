//! Segmenter interfaces, reference segmenters and the coarse-to-fine driver.

mod classical;
mod external;
mod oracle;
mod pipeline;

pub use classical::{multi_otsu, ClassicalCoarse, ThresholdFine};
pub use external::{ExternalCoarse, ExternalFine};
pub use oracle::{OracleCoarse, OracleFine, UpsampleFine};
pub use pipeline::{
    coarse_stage, fine_stage, preprocess_stage, roi_stage, run_pipeline, PipelineConfig, PipelineOutput, Skipped,
};

use crate::error::Result;
use crate::metrics::ProbStack;
use crate::roi::RoICrop;
use crate::volume::Volume;

/// Whole-volume multiclass model working on the coarse grid.
pub trait CoarseSegmenter: Send + Sync {
    fn name(&self) -> &str;

    /// Per-class probabilities (33 classes, summing to one per voxel) on the
    /// geometry of `image`.
    fn segment_coarse(&self, image: &Volume) -> Result<ProbStack>;
}

/// Per-tooth binary model working on original-resolution crops.
pub trait FineSegmenter: Send + Sync {
    fn name(&self) -> &str;

    /// Probability that each crop voxel belongs to `crop.tooth`, on the crop geometry.
    fn segment_fine(&self, crop: &RoICrop) -> Result<Volume>;
}
