//! Connected-component labeling of binary voxel masks.

use serde::{Deserialize, Serialize};

use crate::roi::Box3;
use crate::volume::{linear_index, voxel_count, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Face, edge and corner neighbors.
    #[default]
    TwentySix,
}

impl Connectivity {
    /// Neighbor offsets that precede the current voxel in raster order.
    fn backward_offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let d = [dz, dy, dx];
                    if d >= [0, 0, 0] {
                        continue;
                    }
                    let manhattan = dz.abs() + dy.abs() + dx.abs();
                    if self == Connectivity::Six && manhattan != 1 {
                        continue;
                    }
                    out.push(d);
                }
            }
        }
        out
    }
}

/// Component id per voxel plus per-component statistics.
///
/// Ids start at 1 and follow the raster order of each component's first voxel;
/// 0 marks voxels outside the mask.
#[derive(Debug, Clone)]
pub struct Components {
    pub shape: Shape,
    pub ids: Vec<u32>,
    pub sizes: Vec<usize>,
    pub boxes: Vec<Box3>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Id of the largest component; ties go to the smallest bounding-box
    /// minimum corner, then to the lower id.
    pub fn largest(&self) -> Option<u32> {
        (0..self.count())
            .min_by(|&a, &b| {
                self.sizes[b]
                    .cmp(&self.sizes[a])
                    .then(self.boxes[a].min.cmp(&self.boxes[b].min))
                    .then(a.cmp(&b))
            })
            .map(|i| i as u32 + 1)
    }

    pub fn mask_of(&self, id: u32) -> Vec<bool> {
        self.ids.iter().map(|&c| c == id).collect()
    }
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        let p = parent[a as usize];
        parent[a as usize] = parent[p as usize];
        a = p;
    }
    a
}

/// Two-pass union-find labeling.
pub fn label_components(mask: &[bool], shape: Shape, conn: Connectivity) -> Components {
    assert_eq!(mask.len(), voxel_count(shape), "mask length does not match shape");
    let offsets = conn.backward_offsets();
    let mut provisional = vec![0u32; mask.len()];
    let mut parent: Vec<u32> = vec![0];

    for z in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let idx = linear_index(shape, z, y, x);
                if !mask[idx] {
                    continue;
                }
                let mut current = 0u32;
                for d in &offsets {
                    let (nz, ny, nx) = (z as i64 + d[0], y as i64 + d[1], x as i64 + d[2]);
                    if nz < 0 || ny < 0 || nx < 0 || ny >= shape[1] as i64 || nx >= shape[2] as i64 {
                        continue;
                    }
                    let n = provisional[linear_index(shape, nz as usize, ny as usize, nx as usize)];
                    if n == 0 {
                        continue;
                    }
                    if current == 0 {
                        current = find(&mut parent, n);
                    } else {
                        let (ra, rb) = (find(&mut parent, current), find(&mut parent, n));
                        if ra != rb {
                            let (lo, hi) = (ra.min(rb), ra.max(rb));
                            parent[hi as usize] = lo;
                            current = lo;
                        }
                    }
                }
                if current == 0 {
                    current = parent.len() as u32;
                    parent.push(current);
                }
                provisional[idx] = current;
            }
        }
    }

    // Resolve roots and renumber by first appearance in raster order.
    let mut remap = vec![0u32; parent.len()];
    let mut ids = provisional;
    let mut sizes = Vec::new();
    let mut mins: Vec<[usize; 3]> = Vec::new();
    let mut maxs: Vec<[usize; 3]> = Vec::new();
    for (idx, id) in ids.iter_mut().enumerate() {
        if *id == 0 {
            continue;
        }
        let root = find(&mut parent, *id);
        if remap[root as usize] == 0 {
            sizes.push(0);
            mins.push([usize::MAX; 3]);
            maxs.push([0; 3]);
            remap[root as usize] = sizes.len() as u32;
        }
        let c = remap[root as usize];
        *id = c;
        let k = c as usize - 1;
        sizes[k] += 1;
        let p = crate::volume::unravel(shape, idx);
        for a in 0..3 {
            mins[k][a] = mins[k][a].min(p[a]);
            maxs[k][a] = maxs[k][a].max(p[a] + 1);
        }
    }
    let boxes = mins
        .into_iter()
        .zip(maxs)
        .map(|(min, max)| Box3 { min, max })
        .collect();
    Components { shape, ids, sizes, boxes }
}
