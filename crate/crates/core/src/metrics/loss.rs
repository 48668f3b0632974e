use super::ProbStack;
use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Stability term used when none is given.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Soft negative multiclass Jaccard loss.
///
/// For each class `c`, with voxel sums `I = Σ p·r`, `P = Σ p`, `R = Σ r`
/// over the one-hot target `r`, `J_c = (I + ε) / (P + R - I + ε)`.
/// Returns `1 - mean_c J_c`.
pub fn soft_jaccard_loss(pred: &ProbStack, target: &LabelVolume, epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    if pred.shape() != target.shape() {
        return Err(Error::GeometryMismatch(format!(
            "prediction shape {:?} differs from target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.num_classes();
    if let Some(&bad) = target.labels().iter().find(|&&l| l as usize >= n) {
        return Err(Error::InvalidParameter(format!("target label {bad} has no class among {n}")));
    }
    let mut inter = vec![0.0f64; n];
    let mut psum = vec![0.0f64; n];
    let mut rsum = vec![0.0f64; n];
    for &l in target.labels() {
        rsum[l as usize] += 1.0;
    }
    for c in 0..n {
        for (&p, &l) in pred.class(c).data().iter().zip(target.labels()) {
            psum[c] += p as f64;
            if l as usize == c {
                inter[c] += p as f64;
            }
        }
    }
    let mean_j = (0..n)
        .map(|c| (inter[c] + epsilon) / (psum[c] + rsum[c] - inter[c] + epsilon))
        .sum::<f64>()
        / n as f64;
    Ok(1.0 - mean_j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{ValueKind, Volume};

    #[test]
    fn perfect_prediction_is_zero() {
        let lv = LabelVolume::new([2, 2, 2], [1.0; 3], vec![0, 1, 1, 0, 2, 2, 0, 1]).unwrap();
        let p = ProbStack::one_hot(&lv, 33).unwrap();
        assert_eq!(soft_jaccard_loss(&p, &lv, DEFAULT_EPSILON).unwrap(), 0.0);
    }

    #[test]
    fn total_miss_scores_eps_ratio() {
        let lv = LabelVolume::new([1, 1, 4], [1.0; 3], vec![1, 1, 1, 0]).unwrap();
        // class 1 never predicted; class 0 predicted everywhere
        let c0 = Volume::filled([1, 1, 4], [1.0; 3], 1.0, ValueKind::Probability).unwrap();
        let c1 = Volume::filled([1, 1, 4], [1.0; 3], 0.0, ValueKind::Probability).unwrap();
        let p = ProbStack::new(vec![c0, c1], true).unwrap();
        let eps = 1e-5;
        let j0 = (1.0 + eps) / (4.0 + 1.0 - 1.0 + eps);
        let j1 = eps / (3.0 + eps);
        let want = 1.0 - (j0 + j1) / 2.0;
        assert!((soft_jaccard_loss(&p, &lv, eps).unwrap() - want).abs() < 1e-12);
        assert!(j1 < 1e-5);
    }

    #[test]
    fn rejects_mismatch() {
        let lv = LabelVolume::new([1, 1, 2], [1.0; 3], vec![0, 2]).unwrap();
        let c = Volume::filled([1, 1, 2], [1.0; 3], 0.5, ValueKind::Probability).unwrap();
        let p = ProbStack::new(vec![c.clone(), c], true).unwrap();
        assert!(soft_jaccard_loss(&p, &lv, 1e-5).is_err());
        let lv = LabelVolume::new([1, 1, 2], [1.0; 3], vec![0, 1]).unwrap();
        assert!(soft_jaccard_loss(&p, &lv, 0.0).is_err());
        let other = LabelVolume::new([1, 2, 1], [1.0; 3], vec![0, 1]).unwrap();
        assert!(soft_jaccard_loss(&p, &other, 1e-5).is_err());
    }
}
