use super::{ValueKind, Volume};
use crate::error::{Error, Result};

/// Percentile of already sorted samples, interpolating linearly between order
/// statistics at rank `pct / 100 * (n - 1)`.
pub fn percentile_of_sorted(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentiles of unsorted samples, using selection rather than a full sort.
pub fn percentiles(values: &[f32], pcts: &[f64]) -> Vec<f64> {
    assert!(!values.is_empty(), "percentile of empty sample");
    let mut work: Vec<f32> = values.to_vec();
    let n = work.len();
    pcts.iter()
        .map(|&pct| {
            let rank = pct / 100.0 * (n - 1) as f64;
            let lo = rank.floor() as usize;
            let frac = rank - lo as f64;
            let (_, lo_val, above) = work.select_nth_unstable_by(lo, f32::total_cmp);
            let lo_val = *lo_val as f64;
            let hi_val = above
                .iter()
                .copied()
                .min_by(f32::total_cmp)
                .map_or(lo_val, f64::from);
            lo_val + (hi_val - lo_val) * frac
        })
        .collect()
}

/// Clips to the `[lo_pct, hi_pct]` percentile range, then standardizes to zero
/// mean and unit standard deviation.
pub fn normalize_intensities(v: &Volume, lo_pct: f64, hi_pct: f64) -> Result<Volume> {
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::InvalidParameter(format!(
            "percentiles must satisfy 0 <= lo < hi <= 100, got {lo_pct} and {hi_pct}"
        )));
    }
    if v.kind() != ValueKind::Intensity {
        return Err(Error::InvalidParameter("normalization expects an intensity volume".into()));
    }
    if v.len() < 2 {
        return Err(Error::DegenerateInput("normalization needs at least two voxels".into()));
    }
    let bounds = percentiles(v.data(), &[lo_pct, hi_pct]);
    let (lo, hi) = (bounds[0], bounds[1]);
    let clip = |x: f32| (x as f64).clamp(lo, hi);

    let n = v.len() as f64;
    let mean = v.data().iter().map(|&x| clip(x)).sum::<f64>() / n;
    let var = v.data().iter().map(|&x| (clip(x) - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::DegenerateInput(format!(
            "volume is constant after clipping to [{lo}, {hi}]"
        )));
    }
    let data = v.data().iter().map(|&x| ((clip(x) - mean) / std) as f32).collect();
    Volume::new(v.shape(), v.spacing_mm(), data, ValueKind::Intensity)
}
