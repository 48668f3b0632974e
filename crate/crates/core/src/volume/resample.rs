use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{linear_index, voxel_count, LabelVolume, Shape, Spacing, Volume};
use crate::error::{Error, Result};

fn target_shape(shape: Shape, spacing: Spacing, target_mm: f64) -> Shape {
    let mut out = [0; 3];
    for a in 0..3 {
        out[a] = ((shape[a] as f64 * spacing[a] / target_mm).round() as usize).max(1);
    }
    out
}

fn check_target(target_mm: f64) -> Result<()> {
    if target_mm.is_finite() && target_mm > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("target spacing {target_mm} must be positive")))
    }
}

/// Per-axis linear interpolation stencil: two source indices and the weight of the second.
#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    w1: f64,
}

fn linear_taps(n_in: usize, s_in: f64, n_out: usize, s_out: f64) -> Vec<Tap> {
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|j| {
            let u = ((j as f64 + 0.5) * s_out / s_in - 0.5).clamp(0.0, last);
            let i0 = u.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            Tap { i0, i1, w1: u - i0 as f64 }
        })
        .collect()
}

/// Source voxel containing each output voxel center.
fn nearest_taps(n_in: usize, s_in: f64, n_out: usize, s_out: f64) -> Vec<usize> {
    (0..n_out)
        .map(|j| {
            let u = (j as f64 + 0.5) * s_out / s_in;
            (u.floor().max(0.0) as usize).min(n_in - 1)
        })
        .collect()
}

/// Trilinear resampling onto an isotropic grid of spacing `target_mm`.
///
/// Output voxel centers are mapped into the input's physical frame; samples
/// beyond the outermost input centers clamp to the edge voxel.
pub fn resample_isotropic(v: &Volume, target_mm: f64) -> Result<Volume> {
    check_target(target_mm)?;
    let (shape, spacing) = (v.shape(), v.spacing_mm());
    let out_shape = target_shape(shape, spacing, target_mm);
    let taps: Vec<Vec<Tap>> = (0..3)
        .map(|a| linear_taps(shape[a], spacing[a], out_shape[a], target_mm))
        .collect();
    let src = v.data();
    let plane = out_shape[1] * out_shape[2];

    let mut data = vec![0f32; voxel_count(out_shape)];
    data.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        let tz = taps[0][z];
        for (y, ty) in taps[1].iter().enumerate() {
            for (x, tx) in taps[2].iter().enumerate() {
                let at = |iz, iy, ix| src[linear_index(shape, iz, iy, ix)] as f64;
                let lerp_x = |iz, iy| at(iz, iy, tx.i0) * (1.0 - tx.w1) + at(iz, iy, tx.i1) * tx.w1;
                let lerp_y = |iz| lerp_x(iz, ty.i0) * (1.0 - ty.w1) + lerp_x(iz, ty.i1) * ty.w1;
                let value = lerp_y(tz.i0) * (1.0 - tz.w1) + lerp_y(tz.i1) * tz.w1;
                slab[y * out_shape[2] + x] = value as f32;
            }
        }
    });
    Volume::new(out_shape, [target_mm; 3], data, v.kind())
}

/// Nearest-neighbor resampling of labels with the same output geometry as
/// [`resample_isotropic`]. Each output voxel copies the input voxel that
/// contains its center.
pub fn resample_labels(lv: &LabelVolume, target_mm: f64) -> Result<LabelVolume> {
    check_target(target_mm)?;
    let (shape, spacing) = (lv.shape(), lv.spacing_mm());
    let out_shape = target_shape(shape, spacing, target_mm);
    resample_labels_to(lv, out_shape, [target_mm; 3])
}

/// Nearest-neighbor resampling of labels onto an arbitrary grid sharing the
/// same physical origin.
pub fn resample_labels_to(lv: &LabelVolume, out_shape: Shape, out_spacing: Spacing) -> Result<LabelVolume> {
    let (shape, spacing) = (lv.shape(), lv.spacing_mm());
    let taps: Vec<Vec<usize>> = (0..3)
        .map(|a| nearest_taps(shape[a], spacing[a], out_shape[a], out_spacing[a]))
        .collect();
    let src = lv.labels();
    let mut labels = Vec::with_capacity(voxel_count(out_shape));
    for &iz in &taps[0] {
        for &iy in &taps[1] {
            labels.extend(taps[2].iter().map(|&ix| src[linear_index(shape, iz, iy, ix)]));
        }
    }
    LabelVolume::new(out_shape, out_spacing, labels)
}

/// Crops `size` voxels at a uniformly drawn origin. Axes where `size` exceeds
/// the volume are zero padded, with the volume centered (extra voxel after).
pub fn random_crop(v: &Volume, size: Shape, seed: u64) -> Result<Volume> {
    if size.contains(&0) {
        return Err(Error::InvalidParameter(format!("crop size {size:?} has an empty axis")));
    }
    let shape = v.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // offset[a] maps output index i to input index i + offset[a]
    let mut offset = [0i64; 3];
    for a in 0..3 {
        offset[a] = if size[a] <= shape[a] {
            rng.random_range(0..=(shape[a] - size[a]) as u64) as i64
        } else {
            -(((size[a] - shape[a]) / 2) as i64)
        };
    }
    let src_index = |a: usize, i: usize| -> Option<usize> {
        let s = i as i64 + offset[a];
        (s >= 0 && (s as usize) < shape[a]).then_some(s as usize)
    };
    let data = {
        let mut out = Vec::with_capacity(voxel_count(size));
        for z in 0..size[0] {
            for y in 0..size[1] {
                for x in 0..size[2] {
                    let value = match (src_index(0, z), src_index(1, y), src_index(2, x)) {
                        (Some(iz), Some(iy), Some(ix)) => v.data()[linear_index(shape, iz, iy, ix)],
                        _ => 0.0,
                    };
                    out.push(value);
                }
            }
        }
        out
    };
    Volume::new(size, v.spacing_mm(), data, v.kind())
}
