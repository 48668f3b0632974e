//! Region-of-interest extraction for the fine stage and reassembly of its
//! per-tooth outputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::components::{label_components, Connectivity};
use crate::error::{Error, Result};
use crate::volume::{
    linear_index, load_labels, load_volume, save_labels, save_volume, unravel, voxel_count, LabelVolume,
    Shape, Spacing, Volume, MAX_LABEL,
};

/// Default physical margin added around each coarse tooth box.
pub const DEFAULT_MARGIN_MM: f64 = 3.0;
/// Default probability a fine prediction must reach to claim a voxel.
pub const DEFAULT_STITCH_THRESHOLD: f64 = 0.5;

/// Half-open voxel box: `min` inclusive, `max` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Box3 {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl Box3 {
    pub fn new(min: [usize; 3], max: [usize; 3]) -> Result<Self> {
        if (0..3).any(|a| min[a] >= max[a]) {
            return Err(Error::InvalidParameter(format!("box {min:?}..{max:?} is empty")));
        }
        Ok(Self { min, max })
    }

    pub fn full(shape: Shape) -> Self {
        Self { min: [0; 3], max: shape }
    }

    pub fn extent(&self) -> Shape {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    pub fn contains_box(&self, other: &Box3) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && other.max[a] <= self.max[a])
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] < self.max[a])
    }

    pub fn check_within(&self, shape: Shape) -> Result<()> {
        if (0..3).any(|a| self.min[a] >= self.max[a] || self.max[a] > shape[a]) {
            return Err(Error::BoxOutOfBounds { min: self.min, max: self.max, shape });
        }
        Ok(())
    }

    fn to_pair(self) -> [[usize; 3]; 2] {
        [self.min, self.max]
    }

    fn from_pair(p: [[usize; 3]; 2]) -> Result<Self> {
        Self::new(p[0], p[1])
    }
}

/// Binary mask of the largest connected component of voxels labeled `tooth`.
pub fn largest_component(lv: &LabelVolume, tooth: u8, conn: Connectivity) -> Result<LabelVolume> {
    if !(1..=MAX_LABEL).contains(&tooth) {
        return Err(Error::InvalidParameter(format!("tooth {tooth} outside 1..={MAX_LABEL}")));
    }
    let mask: Vec<bool> = lv.labels().iter().map(|&l| l == tooth).collect();
    let comps = label_components(&mask, lv.shape(), conn);
    let labels = match comps.largest() {
        Some(id) => comps.ids.iter().map(|&c| u8::from(c == id)).collect(),
        None => vec![0; lv.len()],
    };
    LabelVolume::new(lv.shape(), lv.spacing_mm(), labels)
}

/// Tightest box around the nonzero voxels.
pub fn bounding_box(mask: &LabelVolume) -> Result<Box3> {
    let mut min = [usize::MAX; 3];
    let mut max = [0usize; 3];
    let mut any = false;
    for (idx, _) in mask.labels().iter().enumerate().filter(|(_, &l)| l != 0) {
        any = true;
        let p = unravel(mask.shape(), idx);
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a] + 1);
        }
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    Ok(Box3 { min, max })
}

/// Grows every face by `ceil(margin_mm / spacing)` voxels, clamped to `bounds`.
pub fn expand_box(b: &Box3, margin_mm: f64, spacing_mm: Spacing, bounds: Shape) -> Result<Box3> {
    if !(margin_mm.is_finite() && margin_mm >= 0.0) {
        return Err(Error::InvalidParameter(format!("margin {margin_mm} must be >= 0")));
    }
    b.check_within(bounds)?;
    let mut out = *b;
    for a in 0..3 {
        // absorbs representation error such as 3.0 / 0.2 = 15.000000000000002
        let grow = (margin_mm / spacing_mm[a] - 1e-9).ceil().max(0.0) as usize;
        out.min[a] = b.min[a].saturating_sub(grow);
        out.max[a] = (b.max[a] + grow).min(bounds[a]);
    }
    Ok(out)
}

/// Maps a coarse box to the fine grid covering the same physical region,
/// rounding outward.
pub fn coarse_to_fine_box(b: &Box3, coarse_spacing: Spacing, fine_spacing: Spacing, fine_shape: Shape) -> Result<Box3> {
    let mut min = [0; 3];
    let mut max = [0; 3];
    for a in 0..3 {
        let ratio = coarse_spacing[a] / fine_spacing[a];
        min[a] = ((b.min[a] as f64 * ratio + 1e-9).floor() as usize).min(fine_shape[a]);
        max[a] = ((b.max[a] as f64 * ratio - 1e-9).ceil() as usize).min(fine_shape[a]);
    }
    let out = Box3 { min, max };
    out.check_within(fine_shape)?;
    Ok(out)
}

/// One tooth's fine-stage input.
#[derive(Debug, Clone, PartialEq)]
pub struct RoICrop {
    pub tooth: u8,
    /// Expanded box on the coarse grid.
    pub box_coarse: Box3,
    /// The same region on the original-resolution grid.
    pub box_fine: Box3,
    /// Original-resolution image inside `box_fine`.
    pub image: Volume,
    /// Binary precise mask inside `box_fine`, when a target was supplied.
    pub target: Option<LabelVolume>,
    /// Binary coarse component inside `box_coarse`.
    pub coarse_mask: LabelVolume,
}

fn check_same_extent(coarse: &LabelVolume, fine: &Volume) -> Result<()> {
    for a in 0..3 {
        let ce = coarse.shape()[a] as f64 * coarse.spacing_mm()[a];
        let fe = fine.shape()[a] as f64 * fine.spacing_mm()[a];
        let slack = coarse.spacing_mm()[a].max(fine.spacing_mm()[a]);
        if (ce - fe).abs() > slack + 1e-9 {
            return Err(Error::GeometryMismatch(format!(
                "coarse extent {ce} mm and fine extent {fe} mm differ on axis {a}"
            )));
        }
    }
    Ok(())
}

/// Largest coarse component of `tooth`, boxed, grown by `margin_mm`, mapped to
/// the fine grid and cropped from the image (and binarized target).
pub fn extract_roi(
    coarse_labels: &LabelVolume,
    fine_image: &Volume,
    fine_target: Option<&LabelVolume>,
    tooth: u8,
    margin_mm: f64,
    conn: Connectivity,
) -> Result<RoICrop> {
    check_same_extent(coarse_labels, fine_image)?;
    if let Some(t) = fine_target {
        if !t.same_geometry(fine_image.shape(), fine_image.spacing_mm()) {
            return Err(Error::GeometryMismatch("fine target and fine image differ".into()));
        }
    }
    let component = largest_component(coarse_labels, tooth, conn)?;
    let tight = bounding_box(&component).map_err(|_| Error::ToothAbsent(tooth))?;
    let box_coarse = expand_box(&tight, margin_mm, coarse_labels.spacing_mm(), coarse_labels.shape())?;
    let box_fine = coarse_to_fine_box(
        &box_coarse,
        coarse_labels.spacing_mm(),
        fine_image.spacing_mm(),
        fine_image.shape(),
    )?;
    let target = match fine_target {
        Some(t) => Some(t.crop(&box_fine)?.mask_of(tooth)),
        None => None,
    };
    Ok(RoICrop {
        tooth,
        box_coarse,
        box_fine,
        image: fine_image.crop(&box_fine)?,
        target,
        coarse_mask: component.crop(&box_coarse)?,
    })
}

/// A fine-stage probability map positioned in the full-resolution volume.
#[derive(Debug, Clone)]
pub struct FinePrediction {
    pub tooth: u8,
    pub box_fine: Box3,
    pub probs: Volume,
}

/// Reassembles per-tooth probability maps into a multiclass label volume.
///
/// A voxel takes the tooth with the highest probability among claims at or
/// above `threshold`; equal probabilities go to the lower tooth number.
/// The result does not depend on the order of `crops`.
pub fn stitch(crops: &[FinePrediction], shape: Shape, spacing_mm: Spacing, threshold: f64) -> Result<LabelVolume> {
    let mut best_p = vec![f32::NEG_INFINITY; voxel_count(shape)];
    let mut labels = vec![0u8; voxel_count(shape)];
    for c in crops {
        c.box_fine.check_within(shape)?;
        if c.probs.shape() != c.box_fine.extent() {
            return Err(Error::GeometryMismatch(format!(
                "tooth {} probabilities have shape {:?}, box extent is {:?}",
                c.tooth,
                c.probs.shape(),
                c.box_fine.extent()
            )));
        }
        if !(1..=MAX_LABEL).contains(&c.tooth) {
            return Err(Error::InvalidParameter(format!("tooth {} outside 1..={MAX_LABEL}", c.tooth)));
        }
        let ext = c.box_fine.extent();
        let mut k = 0;
        for z in 0..ext[0] {
            for y in 0..ext[1] {
                let row = linear_index(shape, z + c.box_fine.min[0], y + c.box_fine.min[1], c.box_fine.min[2]);
                for x in 0..ext[2] {
                    let p = c.probs.data()[k];
                    k += 1;
                    if (p as f64) < threshold {
                        continue;
                    }
                    let i = row + x;
                    if p > best_p[i] || (p == best_p[i] && c.tooth < labels[i]) {
                        best_p[i] = p;
                        labels[i] = c.tooth;
                    }
                }
            }
        }
    }
    LabelVolume::new(shape, spacing_mm, labels)
}

#[derive(Debug, Serialize, Deserialize)]
struct CropSidecar {
    tooth: u8,
    box_fine: [[usize; 3]; 2],
    box_coarse: [[usize; 3]; 2],
}

fn crop_stem(tooth: u8) -> String {
    format!("tooth_{tooth:02}")
}

/// Writes `tooth_NN.json` plus image, coarse-mask and optional target volumes into `dir`.
pub fn save_crop(dir: impl AsRef<Path>, crop: &RoICrop) -> Result<()> {
    let dir = dir.as_ref();
    let stem = crop_stem(crop.tooth);
    save_volume(&crop.image, dir.join(format!("{stem}_image.vjson")))?;
    save_labels(&crop.coarse_mask, dir.join(format!("{stem}_coarse.vjson")))?;
    if let Some(t) = &crop.target {
        save_labels(t, dir.join(format!("{stem}_target.vjson")))?;
    }
    let sidecar = CropSidecar {
        tooth: crop.tooth,
        box_fine: crop.box_fine.to_pair(),
        box_coarse: crop.box_coarse.to_pair(),
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&path, text + "\n").map_err(|source| Error::Io { path, source })
}

pub fn load_crop(dir: impl AsRef<Path>, tooth: u8) -> Result<RoICrop> {
    let dir = dir.as_ref();
    let stem = crop_stem(tooth);
    let path = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let malformed = |reason: String| Error::MalformedHeader { path: path.clone(), reason };
    let sidecar: CropSidecar = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if sidecar.tooth != tooth {
        return Err(malformed(format!("sidecar names tooth {}", sidecar.tooth)));
    }
    let target_path = dir.join(format!("{stem}_target.vjson"));
    let target = if target_path.exists() { Some(load_labels(&target_path)?) } else { None };
    let crop = RoICrop {
        tooth,
        box_coarse: Box3::from_pair(sidecar.box_coarse).map_err(|e| malformed(e.to_string()))?,
        box_fine: Box3::from_pair(sidecar.box_fine).map_err(|e| malformed(e.to_string()))?,
        image: load_volume(dir.join(format!("{stem}_image.vjson")))?,
        target,
        coarse_mask: load_labels(dir.join(format!("{stem}_coarse.vjson")))?,
    };
    if crop.image.shape() != crop.box_fine.extent() || crop.coarse_mask.shape() != crop.box_coarse.extent() {
        return Err(malformed("crop volumes do not match their boxes".into()));
    }
    Ok(crop)
}
