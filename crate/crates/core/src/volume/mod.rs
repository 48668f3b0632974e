//! Dense voxel grids and the preprocessing applied before segmentation.
//!
//! Both grid types store voxels row-major with `x` fastest, and place voxel
//! `i` along an axis of spacing `s` over the physical interval `[i*s, (i+1)*s)`,
//! so its center sits at `(i + 0.5) * s` millimeters.

mod io;
mod preprocess;
mod resample;

pub use io::{load, load_labels, load_volume, save_labels, save_volume, Loaded};
pub use preprocess::{normalize_intensities, percentile_of_sorted, percentiles};
pub use resample::{random_crop, resample_isotropic, resample_labels, resample_labels_to};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::Box3;

/// Voxel counts `(z, y, x)`.
pub type Shape = [usize; 3];
/// Voxel size in millimeters `(z, y, x)`.
pub type Spacing = [f64; 3];

/// Largest tooth number; labels run over `0..=MAX_LABEL` with 0 as background.
pub const MAX_LABEL: u8 = 32;
/// Number of classes in the multiclass problem (background plus 32 teeth).
pub const NUM_CLASSES: usize = MAX_LABEL as usize + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    #[default]
    Intensity,
    Probability,
}

#[inline]
pub fn voxel_count(shape: Shape) -> usize {
    shape[0] * shape[1] * shape[2]
}

#[inline]
pub(crate) fn linear_index(shape: Shape, z: usize, y: usize, x: usize) -> usize {
    (z * shape[1] + y) * shape[2] + x
}

#[inline]
pub(crate) fn unravel(shape: Shape, idx: usize) -> [usize; 3] {
    let x = idx % shape[2];
    let rest = idx / shape[2];
    [rest / shape[1], rest % shape[1], x]
}

/// Physical position of a voxel center in millimeters.
#[inline]
pub fn voxel_center(spacing: Spacing, idx: [usize; 3]) -> [f64; 3] {
    [
        (idx[0] as f64 + 0.5) * spacing[0],
        (idx[1] as f64 + 0.5) * spacing[1],
        (idx[2] as f64 + 0.5) * spacing[2],
    ]
}

fn check_geometry(shape: Shape, spacing: Spacing, len: usize) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::InvalidVolume(format!("shape {shape:?} has an empty axis")));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidVolume(format!(
            "spacing {spacing:?} must be finite and positive"
        )));
    }
    if len != voxel_count(shape) {
        return Err(Error::InvalidVolume(format!(
            "{len} voxels supplied for shape {shape:?}"
        )));
    }
    Ok(())
}

/// Scalar volume holding intensities or per-voxel probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: Shape,
    spacing_mm: Spacing,
    data: Vec<f32>,
    kind: ValueKind,
}

impl Volume {
    pub fn new(shape: Shape, spacing_mm: Spacing, data: Vec<f32>, kind: ValueKind) -> Result<Self> {
        check_geometry(shape, spacing_mm, data.len())?;
        if kind == ValueKind::Probability {
            if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidVolume(format!(
                    "probability volume holds value {bad} outside [0, 1]"
                )));
            }
        }
        Ok(Self { shape, spacing_mm, data, kind })
    }

    pub fn filled(shape: Shape, spacing_mm: Spacing, value: f32, kind: ValueKind) -> Result<Self> {
        Self::new(shape, spacing_mm, vec![value; voxel_count(shape)], kind)
    }

    /// Builds a volume by evaluating `f` at every voxel index.
    pub fn from_fn(
        shape: Shape,
        spacing_mm: Spacing,
        kind: ValueKind,
        mut f: impl FnMut([usize; 3]) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(voxel_count(shape));
        for z in 0..shape[0] {
            for y in 0..shape[1] {
                for x in 0..shape[2] {
                    data.push(f([z, y, x]));
                }
            }
        }
        Self::new(shape, spacing_mm, data, kind)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing_mm(&self) -> Spacing {
        self.spacing_mm
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[linear_index(self.shape, z, y, x)]
    }

    pub fn same_geometry(&self, shape: Shape, spacing_mm: Spacing) -> bool {
        self.shape == shape && spacing_close(self.spacing_mm, spacing_mm)
    }

    /// Copies the voxels inside `b`.
    pub fn crop(&self, b: &Box3) -> Result<Volume> {
        b.check_within(self.shape)?;
        let data = crop_slice(&self.data, self.shape, b);
        Volume::new(b.extent(), self.spacing_mm, data, self.kind)
    }
}

/// Dense 33-class label grid; 0 is background, 1..=32 are teeth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    shape: Shape,
    spacing_mm: Spacing,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(shape: Shape, spacing_mm: Spacing, labels: Vec<u8>) -> Result<Self> {
        check_geometry(shape, spacing_mm, labels.len())?;
        if let Some(bad) = labels.iter().find(|&&l| l > MAX_LABEL) {
            return Err(Error::InvalidVolume(format!("label {bad} outside 0..={MAX_LABEL}")));
        }
        Ok(Self { shape, spacing_mm, labels })
    }

    pub fn background(shape: Shape, spacing_mm: Spacing) -> Result<Self> {
        Self::new(shape, spacing_mm, vec![0; voxel_count(shape)])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing_mm(&self) -> Spacing {
        self.spacing_mm
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> u8 {
        self.labels[linear_index(self.shape, z, y, x)]
    }

    pub fn same_geometry(&self, shape: Shape, spacing_mm: Spacing) -> bool {
        self.shape == shape && spacing_close(self.spacing_mm, spacing_mm)
    }

    /// Distinct non-background labels, ascending.
    pub fn teeth(&self) -> BTreeSet<u8> {
        let mut seen = [false; NUM_CLASSES];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=MAX_LABEL).filter(|&t| seen[t as usize]).collect()
    }

    /// Binary mask (labels 0/1) of voxels equal to `label`.
    pub fn mask_of(&self, label: u8) -> LabelVolume {
        LabelVolume {
            shape: self.shape,
            spacing_mm: self.spacing_mm,
            labels: self.labels.iter().map(|&l| u8::from(l == label)).collect(),
        }
    }

    pub fn crop(&self, b: &Box3) -> Result<LabelVolume> {
        b.check_within(self.shape)?;
        let labels = crop_slice(&self.labels, self.shape, b);
        LabelVolume::new(b.extent(), self.spacing_mm, labels)
    }
}

pub(crate) fn spacing_close(a: Spacing, b: Spacing) -> bool {
    a.iter()
        .zip(&b)
        .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()))
}

fn crop_slice<T: Copy>(data: &[T], shape: Shape, b: &Box3) -> Vec<T> {
    let ext = b.extent();
    let mut out = Vec::with_capacity(voxel_count(ext));
    for z in b.min[0]..b.max[0] {
        for y in b.min[1]..b.max[1] {
            let row = linear_index(shape, z, y, 0);
            out.extend_from_slice(&data[row + b.min[2]..row + b.max[2]]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        let err = Volume::new([2, 2, 2], [1.0; 3], vec![0.0; 7], ValueKind::Intensity);
        assert!(matches!(err, Err(Error::InvalidVolume(_))));
    }

    #[test]
    fn rejects_nonpositive_spacing() {
        assert!(Volume::new([1, 1, 1], [1.0, 0.0, 1.0], vec![0.0], ValueKind::Intensity).is_err());
        assert!(LabelVolume::new([1, 1, 1], [1.0, -1.0, 1.0], vec![0]).is_err());
    }

    #[test]
    fn probability_range_enforced() {
        assert!(Volume::new([1, 1, 2], [1.0; 3], vec![0.5, 1.5], ValueKind::Probability).is_err());
        assert!(Volume::new([1, 1, 2], [1.0; 3], vec![0.0, 1.0], ValueKind::Probability).is_ok());
    }

    #[test]
    fn label_range_enforced() {
        assert!(LabelVolume::new([1, 1, 1], [1.0; 3], vec![33]).is_err());
        assert!(LabelVolume::new([1, 1, 1], [1.0; 3], vec![32]).is_ok());
    }

    #[test]
    fn unravel_inverts_linear_index() {
        let shape = [3, 4, 5];
        for idx in 0..voxel_count(shape) {
            let [z, y, x] = unravel(shape, idx);
            assert_eq!(linear_index(shape, z, y, x), idx);
        }
    }

    #[test]
    fn crop_copies_subgrid() {
        let v = Volume::from_fn([3, 3, 3], [1.0; 3], ValueKind::Intensity, |[z, y, x]| {
            (z * 100 + y * 10 + x) as f32
        })
        .unwrap();
        let c = v.crop(&Box3::new([1, 0, 1], [3, 2, 3]).unwrap()).unwrap();
        assert_eq!(c.shape(), [2, 2, 2]);
        assert_eq!(c.data(), &[101.0, 102.0, 111.0, 112.0, 201.0, 202.0, 211.0, 212.0]);
    }

    #[test]
    fn teeth_lists_present_labels() {
        let lv = LabelVolume::new([1, 1, 4], [1.0; 3], vec![0, 5, 3, 5]).unwrap();
        assert_eq!(lv.teeth().into_iter().collect::<Vec<_>>(), vec![3, 5]);
        assert_eq!(lv.mask_of(5).labels(), &[0, 1, 0, 1]);
    }
}
