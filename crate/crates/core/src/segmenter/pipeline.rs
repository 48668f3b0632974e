use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CoarseSegmenter, FineSegmenter};
use crate::components::Connectivity;
use crate::error::{Error, Result};
use crate::roi::{extract_roi, stitch, FinePrediction, RoICrop, DEFAULT_MARGIN_MM, DEFAULT_STITCH_THRESHOLD};
use crate::volume::{normalize_intensities, resample_isotropic, LabelVolume, Shape, Spacing, ValueKind, Volume, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub coarse_spacing_mm: f64,
    pub margin_mm: f64,
    pub stitch_threshold: f64,
    pub lo_pct: f64,
    pub hi_pct: f64,
    pub connectivity: Connectivity,
    /// Worker threads for per-tooth work; does not affect results.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            coarse_spacing_mm: 1.0,
            margin_mm: DEFAULT_MARGIN_MM,
            stitch_threshold: DEFAULT_STITCH_THRESHOLD,
            lo_pct: 5.0,
            hi_pct: 99.5,
            connectivity: Connectivity::TwentySix,
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.coarse_spacing_mm > 0.0 && self.coarse_spacing_mm.is_finite()) {
            return bad("coarse spacing must be positive");
        }
        if !(self.margin_mm >= 0.0 && self.margin_mm.is_finite()) {
            return bad("margin must be non-negative");
        }
        if !(self.stitch_threshold > 0.0 && self.stitch_threshold <= 1.0) {
            return bad("stitch threshold must lie in (0, 1]");
        }
        if !(0.0 <= self.lo_pct && self.lo_pct < self.hi_pct && self.hi_pct <= 100.0) {
            return bad("percentiles must satisfy 0 <= lo < hi <= 100");
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Segmenter(format!("thread pool: {e}")))
    }
}

/// A tooth dropped from the fine stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub tooth: u8,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final labels at the input resolution.
    pub labels: LabelVolume,
    /// Coarse-stage argmax on the coarse grid.
    pub coarse_labels: LabelVolume,
    pub skipped: Vec<Skipped>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

/// Normalized full-resolution image and its coarse-grid resampling.
pub fn preprocess_stage(image: &Volume, cfg: &PipelineConfig) -> Result<(Volume, Volume)> {
    cfg.validate()?;
    if image.kind() != ValueKind::Intensity {
        return Err(Error::InvalidParameter("pipeline input must be an intensity volume".into()));
    }
    let normalized = normalize_intensities(image, cfg.lo_pct, cfg.hi_pct)?;
    let coarse = resample_isotropic(&normalized, cfg.coarse_spacing_mm)?;
    Ok((normalized, coarse))
}

/// Coarse segmentation followed by the per-voxel argmax.
pub fn coarse_stage(coarse_image: &Volume, seg: &dyn CoarseSegmenter) -> Result<LabelVolume> {
    let probs = seg.segment_coarse(coarse_image)?;
    if !coarse_image.same_geometry(probs.shape(), probs.spacing_mm()) {
        return Err(Error::Segmenter(format!(
            "coarse segmenter '{}' returned {:?}, expected {:?}",
            seg.name(),
            probs.shape(),
            coarse_image.shape()
        )));
    }
    if probs.num_classes() != NUM_CLASSES || !probs.is_softmax() {
        return Err(Error::Segmenter(format!(
            "coarse segmenter '{}' must return a {NUM_CLASSES}-class softmax stack",
            seg.name()
        )));
    }
    probs.argmax()
}

/// One crop per tooth present in the coarse labels, in ascending tooth order.
pub fn roi_stage(
    coarse_labels: &LabelVolume,
    fine_image: &Volume,
    fine_target: Option<&LabelVolume>,
    cfg: &PipelineConfig,
) -> Result<Vec<RoICrop>> {
    cfg.validate()?;
    let teeth: Vec<u8> = coarse_labels.teeth().into_iter().collect();
    cfg.pool()?.install(|| {
        teeth
            .par_iter()
            .map(|&t| extract_roi(coarse_labels, fine_image, fine_target, t, cfg.margin_mm, cfg.connectivity))
            .collect()
    })
}

/// Runs the fine segmenter on every crop and stitches the results. Teeth whose
/// segmentation fails are reported and left out.
pub fn fine_stage(
    crops: &[RoICrop],
    seg: &dyn FineSegmenter,
    shape: Shape,
    spacing_mm: Spacing,
    cfg: &PipelineConfig,
) -> Result<(LabelVolume, Vec<Skipped>)> {
    cfg.validate()?;
    let results: Vec<std::result::Result<FinePrediction, Skipped>> = cfg.pool()?.install(|| {
        crops
            .par_iter()
            .map(|crop| {
                let skip = |reason: String| Skipped { tooth: crop.tooth, reason };
                let probs = seg.segment_fine(crop).map_err(|e| skip(e.to_string()))?;
                if !probs.same_geometry(crop.image.shape(), crop.image.spacing_mm()) {
                    return Err(skip(format!(
                        "fine segmenter '{}' returned {:?}, crop is {:?}",
                        seg.name(),
                        probs.shape(),
                        crop.image.shape()
                    )));
                }
                if probs.kind() != ValueKind::Probability {
                    return Err(skip(format!("fine segmenter '{}' returned intensities", seg.name())));
                }
                Ok(FinePrediction { tooth: crop.tooth, box_fine: crop.box_fine, probs })
            })
            .collect()
    });
    let mut preds = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(p) => preds.push(p),
            Err(s) => {
                log::warn!("tooth {} skipped: {}", s.tooth, s.reason);
                skipped.push(s);
            }
        }
    }
    let labels = stitch(&preds, shape, spacing_mm, cfg.stitch_threshold)?;
    Ok((labels, skipped))
}

/// Normalize, resample, coarse segmentation, per-tooth RoIs, fine
/// segmentation and stitching back at the input resolution.
pub fn run_pipeline(
    image: &Volume,
    coarse: &dyn CoarseSegmenter,
    fine: &dyn FineSegmenter,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let (normalized, coarse_image) = preprocess_stage(image, cfg)?;
    lap("preprocess", &mut timings);
    let coarse_labels = coarse_stage(&coarse_image, coarse)?;
    lap("coarse", &mut timings);
    let crops = roi_stage(&coarse_labels, &normalized, None, cfg)?;
    lap("roi", &mut timings);
    let (labels, skipped) = fine_stage(&crops, fine, image.shape(), image.spacing_mm(), cfg)?;
    lap("fine", &mut timings);
    Ok(PipelineOutput { labels, coarse_labels, skipped, timings })
}
