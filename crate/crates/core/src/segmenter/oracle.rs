use super::{CoarseSegmenter, FineSegmenter};
use crate::error::{Error, Result};
use crate::metrics::ProbStack;
use crate::roi::RoICrop;
use crate::volume::{resample_labels_to, spacing_close, LabelVolume, ValueKind, Volume, NUM_CLASSES};

/// Coarse segmenter answering with the (resampled) ground truth.
#[derive(Debug, Clone)]
pub struct OracleCoarse {
    gt: LabelVolume,
}

impl OracleCoarse {
    pub fn new(gt: LabelVolume) -> Self {
        Self { gt }
    }
}

impl CoarseSegmenter for OracleCoarse {
    fn name(&self) -> &str {
        "oracle"
    }

    fn segment_coarse(&self, image: &Volume) -> Result<ProbStack> {
        let labels = if self.gt.same_geometry(image.shape(), image.spacing_mm()) {
            self.gt.clone()
        } else {
            resample_labels_to(&self.gt, image.shape(), image.spacing_mm())?
        };
        ProbStack::one_hot(&labels, NUM_CLASSES)
    }
}

/// Fine segmenter answering with the ground-truth tooth mask inside the crop.
#[derive(Debug, Clone)]
pub struct OracleFine {
    gt: LabelVolume,
}

impl OracleFine {
    pub fn new(gt: LabelVolume) -> Self {
        Self { gt }
    }
}

fn binary_probs(mask: &LabelVolume) -> Result<Volume> {
    let data = mask.labels().iter().map(|&l| if l != 0 { 1.0 } else { 0.0 }).collect();
    Volume::new(mask.shape(), mask.spacing_mm(), data, ValueKind::Probability)
}

impl FineSegmenter for OracleFine {
    fn name(&self) -> &str {
        "oracle"
    }

    fn segment_fine(&self, crop: &RoICrop) -> Result<Volume> {
        if !spacing_close(self.gt.spacing_mm(), crop.image.spacing_mm()) {
            return Err(Error::GeometryMismatch("ground truth and crop spacing differ".into()));
        }
        binary_probs(&self.gt.crop(&crop.box_fine)?.mask_of(crop.tooth))
    }
}

/// Fine segmenter that upsamples the coarse component, i.e. a coarse-only run.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpsampleFine;

impl FineSegmenter for UpsampleFine {
    fn name(&self) -> &str {
        "upsample"
    }

    fn segment_fine(&self, crop: &RoICrop) -> Result<Volume> {
        let fine_sp = crop.image.spacing_mm();
        let coarse_sp = crop.coarse_mask.spacing_mm();
        let ext = crop.box_fine.extent();
        let cext = crop.coarse_mask.shape();
        // coarse voxel containing each fine voxel center, in crop-local indices
        let taps: Vec<Vec<Option<usize>>> = (0..3)
            .map(|a| {
                (0..ext[a])
                    .map(|j| {
                        let g = crop.box_fine.min[a] + j;
                        let c = (((g as f64 + 0.5) * fine_sp[a] / coarse_sp[a]).floor() as usize)
                            .checked_sub(crop.box_coarse.min[a])?;
                        (c < cext[a]).then_some(c)
                    })
                    .collect()
            })
            .collect();
        let mut data = Vec::with_capacity(ext.iter().product());
        for &cz in &taps[0] {
            for &cy in &taps[1] {
                for &cx in &taps[2] {
                    let on = match (cz, cy, cx) {
                        (Some(z), Some(y), Some(x)) => crop.coarse_mask.get(z, y, x) != 0,
                        _ => false,
                    };
                    data.push(if on { 1.0 } else { 0.0 });
                }
            }
        }
        Volume::new(ext, fine_sp, data, ValueKind::Probability)
    }
}
