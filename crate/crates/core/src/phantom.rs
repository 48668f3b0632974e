//! Deterministic synthetic CBCT-like studies.
//!
//! Teeth are tapered capsules (a sphere at the crown swept to a smaller
//! sphere at the root tip) embedded in arch-shaped bone slabs. A study comes
//! with its exact 33-class ground truth and with weak axial-box annotations
//! read off that ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{add_scaled, distance, point_polyline_distance, sub, Point3};
use crate::volume::{linear_index, voxel_center, voxel_count, LabelVolume, Shape, Spacing, ValueKind, Volume, MAX_LABEL};
use crate::weaklabels::{AnnotationSet, AxialBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToothSpec {
    pub tooth: u8,
    pub crown_center_mm: Point3,
    pub root_tip_mm: Point3,
    pub crown_radius_mm: f64,
    pub root_radius_mm: f64,
}

impl ToothSpec {
    /// Signed distance-like score: `<= 0` inside the capsule.
    fn score(&self, p: Point3) -> f64 {
        let d = sub(self.root_tip_mm, self.crown_center_mm);
        let f = |t: f64| {
            let r = self.crown_radius_mm + (self.root_radius_mm - self.crown_radius_mm) * t;
            distance(p, add_scaled(self.crown_center_mm, d, t)) - r
        };
        // f is convex in t: golden-section search
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, 1.0);
        let (mut c, mut e) = (b - g * (b - a), a + g * (b - a));
        let (mut fc, mut fe) = (f(c), f(e));
        for _ in 0..60 {
            if fc < fe {
                b = e;
                e = c;
                fe = fc;
                c = b - g * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + g * (b - a);
                fe = f(e);
            }
        }
        f(0.0).min(f(1.0)).min(fc).min(fe)
    }

    fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..3 {
            lo[a] = (self.crown_center_mm[a] - self.crown_radius_mm).min(self.root_tip_mm[a] - self.root_radius_mm);
            hi[a] = (self.crown_center_mm[a] + self.crown_radius_mm).max(self.root_tip_mm[a] + self.root_radius_mm);
        }
        (lo, hi)
    }
}

/// Bone slab: voxels within `half_width_mm` (in-plane) of an arch polyline,
/// between two axial heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JawSlab {
    pub z_range_mm: [f64; 2],
    /// Arch polyline as (y, x) points in millimeters.
    pub arch_mm: Vec<[f64; 2]>,
    pub half_width_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub shape: Shape,
    pub spacing_mm: Spacing,
    pub teeth: Vec<ToothSpec>,
    #[serde(default)]
    pub jaws: Vec<JawSlab>,
    pub background_intensity: f32,
    /// Added to background inside bone.
    pub jaw_intensity: f32,
    /// Added to background inside teeth (replaces the bone offset).
    pub tooth_intensity: f32,
    pub noise_sigma: f32,
    pub seed: u64,
}

pub const DEFAULT_SPACING_MM: f64 = 0.4;
pub const DEFAULT_BACKGROUND: f32 = 0.0;
pub const DEFAULT_JAW: f32 = 700.0;
pub const DEFAULT_TOOTH: f32 = 1600.0;

/// A synthetic study.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: Volume,
    pub labels: LabelVolume,
    pub annotations: AnnotationSet,
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shape.contains(&0) || self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "phantom geometry {:?} @ {:?} mm is invalid",
                self.shape, self.spacing_mm
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
        }
        let mut seen = [false; MAX_LABEL as usize + 1];
        let extent: Vec<f64> = (0..3).map(|a| self.shape[a] as f64 * self.spacing_mm[a]).collect();
        for t in &self.teeth {
            if !(1..=MAX_LABEL).contains(&t.tooth) {
                return Err(Error::ToothOutOfRange(t.tooth as i64));
            }
            if std::mem::replace(&mut seen[t.tooth as usize], true) {
                return Err(Error::InvalidParameter(format!("tooth {} listed twice", t.tooth)));
            }
            if !(t.crown_radius_mm > 0.0 && t.root_radius_mm > 0.0) {
                return Err(Error::InvalidParameter(format!("tooth {} has a non-positive radius", t.tooth)));
            }
            let (lo, hi) = t.bounds();
            if (0..3).any(|a| lo[a] < 0.0 || hi[a] > extent[a]) {
                return Err(Error::TeethDoNotFit(format!("tooth {} extends outside the volume", t.tooth)));
            }
        }
        Ok(())
    }
}

/// Renders the image, ground-truth labels and weak annotations for `cfg`.
pub fn generate_phantom(cfg: &PhantomConfig) -> Result<Phantom> {
    cfg.validate()?;
    let (shape, spacing) = (cfg.shape, cfg.spacing_mm);
    let n = voxel_count(shape);

    let mut labels = vec![0u8; n];
    for t in &cfg.teeth {
        let (lo, hi) = t.bounds();
        let range = |a: usize| {
            let first = (lo[a] / spacing[a] - 0.5).floor().max(0.0) as usize;
            let last = ((hi[a] / spacing[a] - 0.5).ceil().max(0.0) as usize + 1).min(shape[a]);
            first..last
        };
        for z in range(0) {
            for y in range(1) {
                for x in range(2) {
                    if t.score(voxel_center(spacing, [z, y, x])) > 0.0 {
                        continue;
                    }
                    let i = linear_index(shape, z, y, x);
                    if labels[i] != 0 {
                        return Err(Error::PhantomOverlap(labels[i], t.tooth));
                    }
                    labels[i] = t.tooth;
                }
            }
        }
    }

    let mut jaw = vec![false; n];
    for slab in &cfg.jaws {
        let arch: Vec<Point3> = slab.arch_mm.iter().map(|p| [0.0, p[0], p[1]]).collect();
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let c = voxel_center(spacing, [0, y, x]);
                if point_polyline_distance([0.0, c[1], c[2]], &arch) > slab.half_width_mm {
                    continue;
                }
                for z in 0..shape[0] {
                    let cz = (z as f64 + 0.5) * spacing[0];
                    if cz >= slab.z_range_mm[0] && cz <= slab.z_range_mm[1] {
                        jaw[linear_index(shape, z, y, x)] = true;
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = cfg.background_intensity;
        if labels[i] != 0 {
            v += cfg.tooth_intensity;
        } else if jaw[i] {
            v += cfg.jaw_intensity;
        }
        if cfg.noise_sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            v += cfg.noise_sigma * z as f32;
        }
        data.push(v);
    }

    let image = Volume::new(shape, spacing, data, ValueKind::Intensity)?;
    let labels = LabelVolume::new(shape, spacing, labels)?;
    let annotations = annotate(&labels, format!("phantom-{}", cfg.seed))?;
    Ok(Phantom { image, labels, annotations })
}

/// Axial boxes on 3 to 7 evenly spaced slices per tooth (fewer only when the
/// tooth spans fewer slices), each the tight box of the tooth on that slice.
pub fn annotate(labels: &LabelVolume, study_id: String) -> Result<AnnotationSet> {
    let shape = labels.shape();
    let spacing = labels.spacing_mm();
    let mut boxes = Vec::new();
    for tooth in labels.teeth() {
        let slices: Vec<usize> = (0..shape[0])
            .filter(|&z| {
                let plane = &labels.labels()[z * shape[1] * shape[2]..(z + 1) * shape[1] * shape[2]];
                plane.contains(&tooth)
            })
            .collect();
        let (first, last) = (slices[0], *slices.last().unwrap());
        let extent_mm = (last - first) as f64 * spacing[0];
        let wanted = ((extent_mm / 4.0).ceil() as usize + 1).clamp(3, 7);
        let count = wanted.min(slices.len());
        let mut picks: Vec<usize> = if count == 1 {
            vec![first]
        } else {
            (0..count)
                .map(|i| first + ((i * (last - first)) as f64 / (count - 1) as f64).round() as usize)
                .collect()
        };
        picks.dedup();
        for z in picks {
            let (mut y0, mut x0, mut y1, mut x1) = (usize::MAX, usize::MAX, 0, 0);
            for y in 0..shape[1] {
                for x in 0..shape[2] {
                    if labels.get(z, y, x) == tooth {
                        y0 = y0.min(y);
                        x0 = x0.min(x);
                        y1 = y1.max(y + 1);
                        x1 = x1.max(x + 1);
                    }
                }
            }
            if y0 == usize::MAX {
                // a capsule is convex, so every slice between its ends is non-empty
                continue;
            }
            boxes.push(AxialBox { tooth, slice: z, y0, x0, y1, x1 });
        }
    }
    AnnotationSet::new(study_id, shape, spacing, boxes)
}

/// Occlusal gap between upper and lower crowns, and minimum gap between neighbors.
const OCCLUSAL_GAP_MM: f64 = 3.0;
const MIN_NEIGHBOR_GAP_MM: f64 = 2.5;
const MAX_CROWN_RADIUS_MM: f64 = 2.4;
const MIN_CROWN_RADIUS_MM: f64 = 1.0;
const ROOT_LENGTH_MM: f64 = 11.0;
const ARCH_SAMPLES: usize = 257;

fn arch_polyline(extent: [f64; 3], margin: f64) -> Vec<[f64; 2]> {
    let half_width = extent[2] / 2.0 - margin;
    let depth = extent[1] - 2.0 * margin;
    let xc = extent[2] / 2.0;
    (0..ARCH_SAMPLES)
        .map(|i| {
            let u = 2.0 * i as f64 / (ARCH_SAMPLES - 1) as f64 - 1.0;
            [margin + depth * u * u, xc + half_width * u]
        })
        .collect()
}

/// Point at arc-length fraction `f` along a 2D polyline.
fn point_at_fraction(poly: &[[f64; 2]], f: f64) -> [f64; 2] {
    let seg = |w: &[[f64; 2]]| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
    let total: f64 = poly.windows(2).map(seg).sum();
    let mut remaining = f * total;
    for w in poly.windows(2) {
        let l = seg(w);
        if remaining <= l {
            let t = if l > 0.0 { remaining / l } else { 0.0 };
            return [w[0][0] + (w[1][0] - w[0][0]) * t, w[0][1] + (w[1][1] - w[0][1]) * t];
        }
        remaining -= l;
    }
    *poly.last().unwrap()
}

/// Evenly spread slots (0..16) for `m` teeth in one arch.
fn arch_slots(m: usize) -> Vec<usize> {
    match m {
        0 => vec![],
        1 => vec![7],
        _ => (0..m).map(|i| ((i * 15) as f64 / (m - 1) as f64).round() as usize).collect(),
    }
}

/// Places `n_teeth` teeth on an upper and a lower parabolic arch with
/// universal numbering (upper 1..=16 right to left, lower 17..=32 left to right).
pub fn default_jaw(n_teeth: usize, shape: Shape, spacing_mm: Spacing, seed: u64) -> Result<PhantomConfig> {
    if !(1..=32).contains(&n_teeth) {
        return Err(Error::InvalidParameter(format!("n_teeth {n_teeth} outside 1..=32")));
    }
    let extent = [0, 1, 2].map(|a| shape[a] as f64 * spacing_mm[a]);
    let margin = MAX_CROWN_RADIUS_MM + 1.5;
    if extent[1] <= 2.0 * margin + 1.0 || extent[2] <= 2.0 * margin + 1.0 {
        return Err(Error::TeethDoNotFit(format!("in-plane extent {extent:?} mm is too small")));
    }
    let arch = arch_polyline(extent, margin);
    let n_upper = n_teeth.div_ceil(2);
    let arches = [(true, arch_slots(n_upper)), (false, arch_slots(n_teeth - n_upper))];

    // crown radius limited by the closest pair of neighbors in either arch
    let slot_point = |slot: usize| point_at_fraction(&arch, (slot as f64 + 0.5) / 16.0);
    let mut min_spacing = f64::INFINITY;
    for (_, slots) in &arches {
        for w in slots.windows(2) {
            let (a, b) = (slot_point(w[0]), slot_point(w[1]));
            min_spacing = min_spacing.min(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
    }
    let crown_r = ((min_spacing - MIN_NEIGHBOR_GAP_MM) / 2.0).min(MAX_CROWN_RADIUS_MM);
    if crown_r < MIN_CROWN_RADIUS_MM {
        return Err(Error::TeethDoNotFit(format!(
            "{n_teeth} teeth leave only {min_spacing:.2} mm between neighbors"
        )));
    }
    let root_r = crown_r / 2.0;

    let zc = extent[0] / 2.0;
    let crown_offset = OCCLUSAL_GAP_MM / 2.0 + crown_r;
    let room = zc - crown_offset - root_r - 0.5;
    let max_len = room.min(ROOT_LENGTH_MM * 1.15);
    if max_len < 2.0 * crown_r {
        return Err(Error::TeethDoNotFit(format!("axial extent {:.1} mm is too small", extent[0])));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut teeth = Vec::with_capacity(n_teeth);
    for (upper, slots) in &arches {
        let dir = if *upper { 1.0 } else { -1.0 };
        for &slot in slots {
            let tooth = if *upper { slot as u8 + 1 } else { 32 - slot as u8 };
            let [y, x] = slot_point(slot);
            let len = (ROOT_LENGTH_MM * rng.random_range(0.85..1.15)).min(max_len);
            let tilt = [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
            let crown = [zc + dir * crown_offset, y, x];
            teeth.push(ToothSpec {
                tooth,
                crown_center_mm: crown,
                root_tip_mm: [crown[0] + dir * len, y + tilt[0], x + tilt[1]],
                crown_radius_mm: crown_r,
                root_radius_mm: root_r,
            });
        }
    }
    teeth.sort_by_key(|t| t.tooth);

    let bone_top = zc + crown_offset + crown_r * 0.5;
    let bone_end = (zc + crown_offset + max_len + root_r + 1.5).min(extent[0]);
    let half_width = crown_r + 2.0;
    let mut jaws = vec![JawSlab { z_range_mm: [bone_top, bone_end], arch_mm: arch.clone(), half_width_mm: half_width }];
    if n_teeth > n_upper {
        jaws.push(JawSlab {
            z_range_mm: [(extent[0] - bone_end).max(0.0), extent[0] - bone_top],
            arch_mm: arch,
            half_width_mm: half_width,
        });
    }

    Ok(PhantomConfig {
        shape,
        spacing_mm,
        teeth,
        jaws,
        background_intensity: DEFAULT_BACKGROUND,
        jaw_intensity: DEFAULT_JAW,
        tooth_intensity: DEFAULT_TOOTH,
        noise_sigma: 0.0,
        seed,
    })
}
