use std::path::PathBuf;

use super::{CoarseSegmenter, FineSegmenter};
use crate::error::{Error, Result};
use crate::metrics::ProbStack;
use crate::roi::RoICrop;
use crate::volume::{load_volume, ValueKind, Volume, NUM_CLASSES};

fn as_probability(v: Volume) -> Result<Volume> {
    match v.kind() {
        ValueKind::Probability => Ok(v),
        ValueKind::Intensity => {
            let (shape, spacing) = (v.shape(), v.spacing_mm());
            Volume::new(shape, spacing, v.into_data(), ValueKind::Probability)
        }
    }
}

/// Reads `class_00.vjson` ... `class_32.vjson` from a directory, e.g. the
/// output of a separately trained network.
#[derive(Debug, Clone)]
pub struct ExternalCoarse {
    pub dir: PathBuf,
}

impl CoarseSegmenter for ExternalCoarse {
    fn name(&self) -> &str {
        "external"
    }

    fn segment_coarse(&self, image: &Volume) -> Result<ProbStack> {
        let classes = (0..NUM_CLASSES)
            .map(|c| {
                let v = as_probability(load_volume(self.dir.join(format!("class_{c:02}.vjson")))?)?;
                if !v.same_geometry(image.shape(), image.spacing_mm()) {
                    return Err(Error::GeometryMismatch(format!(
                        "class {c} probabilities are {:?} @ {:?} mm, coarse image is {:?} @ {:?} mm",
                        v.shape(),
                        v.spacing_mm(),
                        image.shape(),
                        image.spacing_mm()
                    )));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        ProbStack::new(classes, true)
    }
}

/// Reads `tooth_NN.vjson` probability maps from a directory.
#[derive(Debug, Clone)]
pub struct ExternalFine {
    pub dir: PathBuf,
}

impl FineSegmenter for ExternalFine {
    fn name(&self) -> &str {
        "external"
    }

    fn segment_fine(&self, crop: &RoICrop) -> Result<Volume> {
        let v = as_probability(load_volume(self.dir.join(format!("tooth_{:02}.vjson", crop.tooth)))?)?;
        if !v.same_geometry(crop.image.shape(), crop.image.spacing_mm()) {
            return Err(Error::GeometryMismatch(format!(
                "tooth {} probabilities are {:?}, crop is {:?}",
                crop.tooth,
                v.shape(),
                crop.image.shape()
            )));
        }
        Ok(v)
    }
}
