//! Training loss and evaluation metrics.

mod loss;
mod probs;
mod report;
mod surface;

pub use loss::{soft_jaccard_loss, DEFAULT_EPSILON};
pub use probs::ProbStack;
pub use report::{evaluate, match_labels, Aggregate, EvalReport, ToothMetrics};
pub use surface::{asd, asd_masks, boundary, squared_distance_transform};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Voxel-wise intersection over union of two binary masks (nonzero = set).
/// Two empty masks score 1.
pub fn iou(pred: &LabelVolume, gt: &LabelVolume) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::GeometryMismatch(format!(
            "prediction shape {:?} differs from ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        let (p, g) = (p != 0, g != 0);
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(labels: Vec<u8>) -> LabelVolume {
        LabelVolume::new([1, 1, labels.len()], [1.0; 3], labels).unwrap()
    }

    #[test]
    fn iou_cases() {
        assert_eq!(iou(&mask(vec![1, 1, 0]), &mask(vec![1, 1, 0])).unwrap(), 1.0);
        assert_eq!(iou(&mask(vec![1, 0, 0]), &mask(vec![0, 1, 1])).unwrap(), 0.0);
        assert_eq!(iou(&mask(vec![1, 0]), &mask(vec![1, 1])).unwrap(), 0.5);
        assert_eq!(iou(&mask(vec![0, 0]), &mask(vec![0, 0])).unwrap(), 1.0);
        assert!(iou(&mask(vec![0, 0]), &mask(vec![0, 0, 0])).is_err());
    }

    #[test]
    fn iou_is_symmetric() {
        let a = mask(vec![1, 0, 1, 1, 0, 1]);
        let b = mask(vec![0, 0, 1, 1, 1, 1]);
        assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
    }
}
