//! Boundary extraction and average surface distance.

use crate::error::{Error, Result};
use crate::roi::Box3;
use crate::volume::{linear_index, unravel, voxel_count, LabelVolume, Shape, Spacing};

/// Set voxels with at least one face neighbor that is unset or outside the grid.
pub fn boundary(mask: &[bool], shape: Shape) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for z in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let i = linear_index(shape, z, y, x);
                if !mask[i] {
                    continue;
                }
                let p = [z, y, x];
                out[i] = (0..3).any(|a| {
                    let lo = p[a] == 0 || {
                        let mut q = p;
                        q[a] -= 1;
                        !mask[linear_index(shape, q[0], q[1], q[2])]
                    };
                    let hi = p[a] + 1 == shape[a] || {
                        let mut q = p;
                        q[a] += 1;
                        !mask[linear_index(shape, q[0], q[1], q[2])]
                    };
                    lo || hi
                });
            }
        }
    }
    out
}

/// Exact 1D squared distance transform on a line of samples spaced `step` apart
/// (lower envelope of parabolas). `f` holds input costs with `INFINITY` for
/// non-sites; `out` receives `min_j (step*(i-j))^2 + f[j]`.
fn edt_line(f: &[f64], step: f64, out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    let pos = |i: usize| i as f64 * step;
    let cross = |q: usize, v: usize| ((f[q] + pos(q) * pos(q)) - (f[v] + pos(v) * pos(v))) / (2.0 * (pos(q) - pos(v)));
    for q in 0..f.len() {
        if f[q] == f64::INFINITY {
            continue;
        }
        while let Some(&v) = sites.last() {
            let s = cross(q, v);
            if sites.len() > 1 && s <= bounds[bounds.len() - 1] {
                sites.pop();
                bounds.pop();
            } else {
                bounds.push(s);
                break;
            }
        }
        sites.push(q);
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    // bounds[k] separates sites[k] and sites[k + 1]
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && bounds[k] < pos(i) {
            k += 1;
        }
        let d = pos(i) - pos(sites[k]);
        *o = d * d + f[sites[k]];
    }
}

/// Squared Euclidean distance (mm²) from each voxel center to the nearest set voxel center.
pub fn squared_distance_transform(mask: &[bool], shape: Shape, spacing: Spacing) -> Vec<f64> {
    let mut g: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let (mut sites, mut bounds) = (Vec::new(), Vec::new());
    let strides = [shape[1] * shape[2], shape[2], 1];
    for axis in 0..3 {
        let n = shape[axis];
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for u in 0..shape[others[0]] {
            for v in 0..shape[others[1]] {
                let base = u * strides[others[0]] + v * strides[others[1]];
                for i in 0..n {
                    line[i] = g[base + i * strides[axis]];
                }
                edt_line(&line, spacing[axis], &mut out, &mut sites, &mut bounds);
                for i in 0..n {
                    g[base + i * strides[axis]] = out[i];
                }
            }
        }
    }
    g
}

fn union_box(a: &[bool], b: &[bool], shape: Shape) -> Option<Box3> {
    let mut min = [usize::MAX; 3];
    let mut max = [0; 3];
    let mut any = false;
    for (i, _) in a.iter().zip(b).enumerate().filter(|(_, (&x, &y))| x || y) {
        any = true;
        let p = unravel(shape, i);
        for ax in 0..3 {
            min[ax] = min[ax].min(p[ax]);
            max[ax] = max[ax].max(p[ax] + 1);
        }
    }
    any.then_some(Box3 { min, max })
}

fn crop_bools(m: &[bool], shape: Shape, b: &Box3) -> Vec<bool> {
    let mut out = Vec::with_capacity(voxel_count(b.extent()));
    for z in b.min[0]..b.max[0] {
        for y in b.min[1]..b.max[1] {
            let row = linear_index(shape, z, y, 0);
            out.extend_from_slice(&m[row + b.min[2]..row + b.max[2]]);
        }
    }
    out
}

/// Sum over `from` boundary voxels of the distance to the nearest `to` boundary voxel.
fn directed_sum(from: &[bool], to: &[bool], shape: Shape, spacing: Spacing) -> f64 {
    let dt = squared_distance_transform(to, shape, spacing);
    from.iter()
        .zip(&dt)
        .filter(|(&f, _)| f)
        .map(|(_, &d2)| d2.sqrt())
        .sum()
}

/// Average symmetric surface distance in millimeters between two boolean masks.
pub fn asd_masks(pred: &[bool], gt: &[bool], shape: Shape, spacing: Spacing) -> Result<f64> {
    assert_eq!(pred.len(), voxel_count(shape));
    assert_eq!(gt.len(), voxel_count(shape));
    if !pred.iter().any(|&p| p) || !gt.iter().any(|&g| g) {
        return Err(Error::UndefinedMetric("surface distance needs two non-empty masks".into()));
    }
    // Voxels outside the union box (grown by one) are unset in both masks, so
    // boundaries and distances are unchanged by working inside it.
    let tight = union_box(pred, gt, shape).expect("masks are non-empty");
    let crop = Box3 {
        min: tight.min.map(|m| m.saturating_sub(1)),
        max: [0, 1, 2].map(|a| (tight.max[a] + 1).min(shape[a])),
    };
    let sub = crop.extent();
    let bp = boundary(&crop_bools(pred, shape, &crop), sub);
    let bg = boundary(&crop_bools(gt, shape, &crop), sub);
    let np = bp.iter().filter(|&&b| b).count();
    let ng = bg.iter().filter(|&&b| b).count();
    let pg = directed_sum(&bp, &bg, sub, spacing);
    let gp = directed_sum(&bg, &bp, sub, spacing);
    Ok((pg + gp) / (np + ng) as f64)
}

/// Average symmetric surface distance between two binary label volumes
/// (nonzero = set), in the volumes' physical units.
pub fn asd(pred: &LabelVolume, gt: &LabelVolume) -> Result<f64> {
    if !pred.same_geometry(gt.shape(), gt.spacing_mm()) {
        return Err(Error::GeometryMismatch(format!(
            "prediction {:?} @ {:?} mm differs from ground truth {:?} @ {:?} mm",
            pred.shape(),
            pred.spacing_mm(),
            gt.shape(),
            gt.spacing_mm()
        )));
    }
    let p: Vec<bool> = pred.labels().iter().map(|&l| l != 0).collect();
    let g: Vec<bool> = gt.labels().iter().map(|&l| l != 0).collect();
    asd_masks(&p, &g, gt.shape(), gt.spacing_mm())
}
