use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_centerline, AnnotationSet, DistanceField, DistanceMode};
use crate::error::{Error, Result};
use crate::volume::{voxel_center, LabelVolume, Volume, MAX_LABEL};

/// Parameters of the intensity-plus-distance energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Energy change per millimeter of centerline distance; must be negative.
    pub k: f64,
    /// Constant energy of the background class.
    pub background_energy: f64,
    #[serde(default)]
    pub distance: DistanceMode,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self { k: -100.0, background_energy: 300.0, distance: DistanceMode::Minimum }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k < 0.0) {
            return Err(Error::InvalidParameter(format!("energy slope k = {} must be negative", self.k)));
        }
        if !self.background_energy.is_finite() {
            return Err(Error::InvalidParameter("background energy must be finite".into()));
        }
        Ok(())
    }
}

/// Labels each voxel with the class of highest energy. Tooth `t` scores
/// `intensity + k * distance_t`, background scores the constant
/// `background_energy`. Ties go to background, then to the lower tooth.
pub fn energy_argmax(intensities: &Volume, fields: &[(u8, DistanceField)], params: &EnergyParams) -> Result<LabelVolume> {
    params.validate()?;
    let mut order: Vec<usize> = (0..fields.len()).collect();
    order.sort_by_key(|&i| fields[i].0);
    for w in order.windows(2) {
        if fields[w[0]].0 == fields[w[1]].0 {
            return Err(Error::InvalidParameter(format!("tooth {} given twice", fields[w[0]].0)));
        }
    }
    for (tooth, f) in fields {
        if !(1..=MAX_LABEL).contains(tooth) {
            return Err(Error::ToothOutOfRange(*tooth as i64));
        }
        if !intensities.same_geometry(f.shape, f.spacing_mm) || f.distances.len() != intensities.len() {
            return Err(Error::GeometryMismatch(format!(
                "distance field of tooth {tooth} does not match the intensity volume"
            )));
        }
    }
    let labels = intensities
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut best = params.background_energy;
            let mut label = 0u8;
            for &f in &order {
                let (tooth, field) = &fields[f];
                let e = v as f64 + params.k * field.distances[i];
                if e > best {
                    best = e;
                    label = *tooth;
                }
            }
            label
        })
        .collect();
    LabelVolume::new(intensities.shape(), intensities.spacing_mm(), labels)
}

/// Dense mask from weak annotations: centerline per annotated tooth, distance
/// field, energy argmax.
///
/// Equivalent to [`energy_argmax`] over full distance fields, but each tooth is
/// only evaluated where its energy can still beat the background, i.e. within
/// `(max_intensity - background_energy) / -k` millimeters of its centerline.
pub fn weak_to_mask(intensities: &Volume, a: &AnnotationSet, params: &EnergyParams) -> Result<LabelVolume> {
    params.validate()?;
    if !intensities.same_geometry(a.shape, a.spacing_mm) {
        return Err(Error::GeometryMismatch(format!(
            "annotations describe {:?} @ {:?} mm, image is {:?} @ {:?} mm",
            a.shape,
            a.spacing_mm,
            intensities.shape(),
            intensities.spacing_mm()
        )));
    }
    let shape = intensities.shape();
    let spacing = intensities.spacing_mm();
    let data = intensities.data();
    let max_intensity = data.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let reach = (max_intensity - params.background_energy) / -params.k;

    let mut best = vec![params.background_energy; data.len()];
    let mut labels = vec![0u8; data.len()];
    if reach <= 0.0 {
        return LabelVolume::new(shape, spacing, labels);
    }
    let plane = shape[1] * shape[2];

    for tooth in a.teeth() {
        let c = build_centerline(a, tooth)?;
        let dist = c.distance_fn(params.distance, spacing);
        let (lo, hi) = c.bounds();
        // voxels whose centers lie within `reach` of the centerline bounds, plus one
        // voxel of slack on each side against rounding at the cutoff
        let range = |axis: usize| {
            let s = spacing[axis];
            let first = ((lo[axis] - reach) / s - 1.5).ceil().max(0.0) as usize;
            let last = (((hi[axis] + reach) / s + 0.5).floor().max(-1.0) + 1.0) as usize;
            first.min(shape[axis])..last.min(shape[axis])
        };
        let (rz, ry, rx) = (range(0), range(1), range(2));
        let start = rz.start * plane;
        let end = rz.end.max(rz.start) * plane;
        best[start..end]
            .par_chunks_mut(plane)
            .zip(labels[start..end].par_chunks_mut(plane))
            .enumerate()
            .for_each(|(dz, (best_slab, label_slab))| {
                let z = rz.start + dz;
                for y in ry.clone() {
                    for x in rx.clone() {
                        let j = y * shape[2] + x;
                        let v = data[z * plane + j] as f64;
                        let e = v + params.k * dist(voxel_center(spacing, [z, y, x]));
                        if e > best_slab[j] {
                            best_slab[j] = e;
                            label_slab[j] = tooth;
                        }
                    }
                }
            });
    }
    LabelVolume::new(shape, spacing, labels)
}
