use serde::{Deserialize, Serialize};

use super::{CoarseSegmenter, FineSegmenter};
use crate::components::{label_components, Connectivity};
use crate::error::{Error, Result};
use crate::metrics::ProbStack;
use crate::roi::RoICrop;
use crate::volume::{percentiles, LabelVolume, ValueKind, Volume, MAX_LABEL, NUM_CLASSES};
use crate::weaklabels::{distance_field, energy_argmax, Centerline, EnergyParams};

const OTSU_BINS: usize = 256;

/// Three-class Otsu thresholds over a histogram of `values`.
///
/// Returns the lower edges of the middle and upper classes, or `None` when
/// fewer than three histogram bins are occupied.
pub fn multi_otsu(values: &[f32]) -> Option<[f32; 2]> {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    if !(hi > lo) {
        return None;
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut count = [0f64; OTSU_BINS];
    let mut sum = [0f64; OTSU_BINS];
    for &v in values {
        let b = (((v as f64 - lo) / width) as usize).min(OTSU_BINS - 1);
        count[b] += 1.0;
        sum[b] += v as f64;
    }
    if count.iter().filter(|&&c| c > 0.0).count() < 3 {
        return None;
    }
    let mut cw = [0f64; OTSU_BINS + 1];
    let mut cs = [0f64; OTSU_BINS + 1];
    for b in 0..OTSU_BINS {
        cw[b + 1] = cw[b] + count[b];
        cs[b + 1] = cs[b] + sum[b];
    }
    let class = |a: usize, b: usize| {
        let w = cw[b] - cw[a];
        if w > 0.0 { Some((cs[b] - cs[a]).powi(2) / w) } else { None }
    };
    // between-class variance up to a constant: sum of S_k^2 / W_k
    let mut best: Option<(f64, usize, usize)> = None;
    for k1 in 1..OTSU_BINS - 1 {
        let Some(c0) = class(0, k1) else { continue };
        for k2 in k1 + 1..OTSU_BINS {
            let (Some(c1), Some(c2)) = (class(k1, k2), class(k2, OTSU_BINS)) else { continue };
            let score = c0 + c1 + c2;
            if best.is_none_or(|(s, _, _)| score > s) {
                best = Some((score, k1, k2));
            }
        }
    }
    best.map(|(_, k1, k2)| [(lo + k1 as f64 * width) as f32, (lo + k2 as f64 * width) as f32])
}

/// Intensity-only coarse segmenter: brightest Otsu class, connected
/// components as tooth candidates, per-slice centroids as centerlines, and
/// the energy argmax on contrast-rescaled intensities.
///
/// Components are numbered 1, 2, ... in raster order of their first voxel, so
/// labels must be matched to a reference numbering before evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalCoarse {
    pub params: EnergyParams,
    /// Bright components with fewer voxels are ignored.
    pub min_component_voxels: usize,
    pub connectivity: Connectivity,
}

impl Default for ClassicalCoarse {
    fn default() -> Self {
        Self { params: EnergyParams::default(), min_component_voxels: 8, connectivity: Connectivity::TwentySix }
    }
}

/// Bright-class level mapped to this value by the contrast rescaling; the
/// class threshold maps to zero.
const BRIGHT_LEVEL: f64 = 1000.0;

impl ClassicalCoarse {
    pub fn new(params: EnergyParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, ..Self::default() })
    }

    pub fn label(&self, image: &Volume) -> Result<LabelVolume> {
        self.params.validate()?;
        let (shape, spacing) = (image.shape(), image.spacing_mm());
        let data = image.data();
        let background = || LabelVolume::background(shape, spacing);

        let threshold = match multi_otsu(data) {
            Some([_, t]) => t,
            None => {
                // two levels at most: the top one is bright
                let hi = data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let lo = data.iter().copied().fold(f32::INFINITY, f32::min);
                if !(hi > lo) {
                    return background();
                }
                hi
            }
        };
        let bright: Vec<bool> = data.iter().map(|&v| v >= threshold).collect();
        let comps = label_components(&bright, shape, self.connectivity);

        let mut kept: Vec<u32> = (1..=comps.count() as u32)
            .filter(|&id| comps.sizes[id as usize - 1] >= self.min_component_voxels)
            .collect();
        kept.sort_by_key(|&id| (std::cmp::Reverse(comps.sizes[id as usize - 1]), id));
        kept.truncate(MAX_LABEL as usize);
        kept.sort_unstable();
        if kept.is_empty() {
            return background();
        }

        let mut number = vec![0u8; comps.count() + 1];
        for (n, &id) in kept.iter().enumerate() {
            number[id as usize] = n as u8 + 1;
        }
        let plane = shape[1] * shape[2];
        let mut acc = vec![vec![[0f64; 3]; shape[0]]; kept.len()];
        let mut bright_sum = 0f64;
        let mut bright_n = 0usize;
        for (i, &id) in comps.ids.iter().enumerate() {
            if id == 0 {
                continue;
            }
            bright_sum += data[i] as f64;
            bright_n += 1;
            let n = number[id as usize];
            if n == 0 {
                continue;
            }
            let (z, r) = (i / plane, i % plane);
            let a = &mut acc[n as usize - 1][z];
            a[0] += 1.0;
            a[1] += (r / shape[2]) as f64;
            a[2] += (r % shape[2]) as f64;
        }
        let mean_bright = bright_sum / bright_n as f64;
        let t = threshold as f64;
        let scale = if mean_bright > t { BRIGHT_LEVEL / (mean_bright - t) } else { 1.0 };

        let mut fields = Vec::with_capacity(kept.len());
        for (n, slices) in acc.iter().enumerate() {
            let points = slices
                .iter()
                .enumerate()
                .filter(|(_, a)| a[0] > 0.0)
                .map(|(z, a)| {
                    [
                        (z as f64 + 0.5) * spacing[0],
                        (a[1] / a[0] + 0.5) * spacing[1],
                        (a[2] / a[0] + 0.5) * spacing[2],
                    ]
                })
                .collect();
            let c = Centerline::new(n as u8 + 1, points)?;
            fields.push((c.tooth, distance_field(shape, spacing, &c, self.params.distance)));
        }
        let rescaled = Volume::new(
            shape,
            spacing,
            data.iter().map(|&v| ((v as f64 - t) * scale) as f32).collect(),
            ValueKind::Intensity,
        )?;
        energy_argmax(&rescaled, &fields, &self.params)
    }
}

impl CoarseSegmenter for ClassicalCoarse {
    fn name(&self) -> &str {
        "classical"
    }

    fn segment_coarse(&self, image: &Volume) -> Result<ProbStack> {
        ProbStack::one_hot(&self.label(image)?, NUM_CLASSES)
    }
}

/// Intensity-only fine segmenter.
///
/// The crop is soft-thresholded halfway between its `quantile` intensity and
/// its 99th percentile, then restricted to the supra-threshold component with
/// the most voxels in the central third of the crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFine {
    pub quantile: f64,
    pub connectivity: Connectivity,
}

pub const DEFAULT_FINE_QUANTILE: f64 = 0.5;
const UPPER_PERCENTILE: f64 = 99.0;
/// Sigmoid width as a fraction of the gap between the two reference levels.
const SOFTNESS: f64 = 0.05;

impl Default for ThresholdFine {
    fn default() -> Self {
        Self { quantile: DEFAULT_FINE_QUANTILE, connectivity: Connectivity::TwentySix }
    }
}

impl ThresholdFine {
    pub fn new(quantile: f64) -> Result<Self> {
        if !(quantile > 0.0 && quantile < 1.0) {
            return Err(Error::InvalidParameter(format!("threshold quantile {quantile} outside (0, 1)")));
        }
        Ok(Self { quantile, ..Self::default() })
    }
}

impl FineSegmenter for ThresholdFine {
    fn name(&self) -> &str {
        "threshold"
    }

    fn segment_fine(&self, crop: &RoICrop) -> Result<Volume> {
        let img = &crop.image;
        let (shape, spacing) = (img.shape(), img.spacing_mm());
        let p = percentiles(img.data(), &[self.quantile * 100.0, UPPER_PERCENTILE]);
        let (low, high) = (p[0], p[1]);
        if !(high > low) {
            return Volume::filled(shape, spacing, 0.5, ValueKind::Probability);
        }
        let level = (low + high) / 2.0;
        let width = SOFTNESS * (high - low);
        let probs: Vec<f32> = img
            .data()
            .iter()
            .map(|&v| (1.0 / (1.0 + (-(v as f64 - level) / width).exp())) as f32)
            .collect();
        let mask: Vec<bool> = probs.iter().map(|&q| q > 0.5).collect();
        let comps = label_components(&mask, shape, self.connectivity);

        let central = |a: usize, i: usize| {
            let third = shape[a] / 3;
            i >= third && i < shape[a] - third
        };
        let mut votes = vec![0usize; comps.count() + 1];
        let plane = shape[1] * shape[2];
        for (i, &id) in comps.ids.iter().enumerate() {
            if id != 0 && central(0, i / plane) && central(1, (i % plane) / shape[2]) && central(2, i % shape[2]) {
                votes[id as usize] += 1;
            }
        }
        let chosen = (1..votes.len()).filter(|&id| votes[id] > 0).max_by_key(|&id| (votes[id], std::cmp::Reverse(id)));
        let data = probs
            .iter()
            .zip(&comps.ids)
            .map(|(&q, &id)| if Some(id as usize) == chosen { q } else { 0.0 })
            .collect();
        Volume::new(shape, spacing, data, ValueKind::Probability)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_levels_split_between_levels() {
        let mut v = vec![0.0f32; 600];
        v.extend(vec![10.0; 300]);
        v.extend(vec![30.0; 100]);
        let [t1, t2] = multi_otsu(&v).unwrap();
        assert!(t1 > 0.0 && t1 <= 10.0, "{t1}");
        assert!(t2 > 10.0 && t2 <= 30.0, "{t2}");
    }

    #[test]
    fn too_few_levels() {
        assert_eq!(multi_otsu(&[1.0, 1.0]), None);
        assert_eq!(multi_otsu(&[1.0, 2.0, 1.0]), None);
    }

    #[test]
    fn two_blobs_become_two_teeth() {
        let shape = [12, 12, 20];
        let v = Volume::from_fn(shape, [1.0; 3], ValueKind::Intensity, |[z, y, x]| {
            let blob = (3..9).contains(&z) && (4..8).contains(&y) && ((3..7).contains(&x) || (13..17).contains(&x));
            if blob { 1000.0 } else if z < 2 { 400.0 } else { 0.0 }
        })
        .unwrap();
        let labels = ClassicalCoarse::default().label(&v).unwrap();
        assert_eq!(labels.teeth().into_iter().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(labels.get(5, 5, 4), 1);
        assert_eq!(labels.get(5, 5, 15), 2);
        assert_eq!(labels.get(0, 5, 10), 0);
        assert_eq!(labels, ClassicalCoarse::default().label(&v).unwrap());
    }
}
