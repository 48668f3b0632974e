use crate::error::{Error, Result};
use crate::volume::{voxel_count, LabelVolume, Shape, Spacing, ValueKind, Volume, MAX_LABEL};

/// Per-class probability maps sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbStack {
    shape: Shape,
    spacing_mm: Spacing,
    classes: Vec<Volume>,
    softmax: bool,
}

impl ProbStack {
    /// `softmax` asserts that per-voxel class probabilities sum to one.
    pub fn new(classes: Vec<Volume>, softmax: bool) -> Result<Self> {
        let first = classes
            .first()
            .ok_or_else(|| Error::InvalidParameter("probability stack needs at least one class".into()))?;
        let (shape, spacing_mm) = (first.shape(), first.spacing_mm());
        for (c, v) in classes.iter().enumerate() {
            if !v.same_geometry(shape, spacing_mm) {
                return Err(Error::GeometryMismatch(format!("class {c} has a different geometry")));
            }
            if v.kind() != ValueKind::Probability {
                return Err(Error::InvalidParameter(format!("class {c} is not a probability volume")));
            }
        }
        if softmax {
            for i in 0..voxel_count(shape) {
                let sum: f64 = classes.iter().map(|v| v.data()[i] as f64).sum();
                if (sum - 1.0).abs() > 1e-5 {
                    return Err(Error::InvalidVolume(format!(
                        "class probabilities at voxel {i} sum to {sum}"
                    )));
                }
            }
        }
        Ok(Self { shape, spacing_mm, classes, softmax })
    }

    /// Exact one-hot encoding of `lv` over `n_classes` classes.
    pub fn one_hot(lv: &LabelVolume, n_classes: usize) -> Result<Self> {
        if let Some(&bad) = lv.labels().iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} does not fit {n_classes} classes"
            )));
        }
        let classes = (0..n_classes)
            .map(|c| {
                let data = lv.labels().iter().map(|&l| if l as usize == c { 1.0 } else { 0.0 }).collect();
                Volume::new(lv.shape(), lv.spacing_mm(), data, ValueKind::Probability)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { shape: lv.shape(), spacing_mm: lv.spacing_mm(), classes, softmax: true })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing_mm(&self) -> Spacing {
        self.spacing_mm
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, c: usize) -> &Volume {
        &self.classes[c]
    }

    pub fn is_softmax(&self) -> bool {
        self.softmax
    }

    /// Most probable class per voxel; ties resolve to the lower class index.
    pub fn argmax(&self) -> Result<LabelVolume> {
        if self.classes.len() > MAX_LABEL as usize + 1 {
            return Err(Error::InvalidParameter(format!(
                "{} classes exceed the label range",
                self.classes.len()
            )));
        }
        let labels = (0..voxel_count(self.shape))
            .map(|i| {
                let mut best = 0;
                for c in 1..self.classes.len() {
                    if self.classes[c].data()[i] > self.classes[best].data()[i] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelVolume::new(self.shape, self.spacing_mm, labels)
    }
}
