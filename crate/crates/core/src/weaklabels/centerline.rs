use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnnotationSet;
use crate::error::{Error, Result};
use crate::geometry::{add_scaled, distance, point_polyline_distance, sub, norm, Point3};
use crate::volume::{voxel_center, voxel_count, Shape, Spacing};

/// Z-ordered polyline through a tooth's annotated box centers, in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    pub tooth: u8,
    pub points: Vec<Point3>,
}

/// How a voxel's scalar distance to a centerline is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Euclidean distance to the closest point of the polyline.
    #[default]
    Minimum,
    /// Mean distance to points sampled uniformly along the polyline.
    Mean,
}

impl Centerline {
    pub fn new(tooth: u8, mut points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter(format!("centerline of tooth {tooth} has no points")));
        }
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Ok(Self { tooth, points })
    }

    /// Axis-aligned physical bounds of the polyline.
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Points spaced at most `step` apart along the polyline, endpoints included.
    pub fn samples(&self, step: f64) -> Vec<Point3> {
        let mut out = vec![self.points[0]];
        for w in self.points.windows(2) {
            let d = sub(w[1], w[0]);
            let n = ((norm(d) / step).ceil() as usize).max(1);
            out.extend((1..=n).map(|i| add_scaled(w[0], d, i as f64 / n as f64)));
        }
        out
    }

    pub(crate) fn distance_fn(&self, mode: DistanceMode, spacing: Spacing) -> impl Fn(Point3) -> f64 + Sync + '_ {
        let samples = match mode {
            DistanceMode::Minimum => Vec::new(),
            DistanceMode::Mean => {
                let step = 0.5 * spacing.iter().copied().fold(f64::INFINITY, f64::min);
                self.samples(step)
            }
        };
        move |p| match mode {
            DistanceMode::Minimum => point_polyline_distance(p, &self.points),
            DistanceMode::Mean => samples.iter().map(|&s| distance(p, s)).sum::<f64>() / samples.len() as f64,
        }
    }
}

/// One point per annotated slice at the box center.
///
/// Box edges are voxel boundaries, so a box `[y0, y1)` is centered at
/// `(y0 + y1) / 2 * spacing`; the slice itself sits at its voxel center.
pub fn build_centerline(a: &AnnotationSet, tooth: u8) -> Result<Centerline> {
    let s = a.spacing_mm;
    let points: Vec<Point3> = a
        .boxes()
        .iter()
        .filter(|b| b.tooth == tooth)
        .map(|b| {
            [
                (b.slice as f64 + 0.5) * s[0],
                (b.y0 + b.y1) as f64 / 2.0 * s[1],
                (b.x0 + b.x1) as f64 / 2.0 * s[2],
            ]
        })
        .collect();
    if points.is_empty() {
        return Err(Error::ToothAbsent(tooth));
    }
    Centerline::new(tooth, points)
}

/// Per-voxel distance in millimeters from voxel centers to a centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub shape: Shape,
    pub spacing_mm: Spacing,
    pub distances: Vec<f64>,
}

pub fn distance_field(shape: Shape, spacing_mm: Spacing, c: &Centerline, mode: DistanceMode) -> DistanceField {
    let dist = c.distance_fn(mode, spacing_mm);
    let plane = shape[1] * shape[2];
    let mut distances = vec![0.0; voxel_count(shape)];
    distances.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                slab[y * shape[2] + x] = dist(voxel_center(spacing_mm, [z, y, x]));
            }
        }
    });
    DistanceField { shape, spacing_mm, distances }
}
