//! Dense 33-class masks from sparse axial bounding boxes.
//!
//! Each annotated tooth gets a centerline through its box centers. Every voxel
//! then scores each tooth as `intensity + k * distance_to_centerline` against a
//! constant background score, and takes the best-scoring class.

mod centerline;
mod energy;

pub use centerline::{build_centerline, distance_field, Centerline, DistanceField, DistanceMode};
pub use energy::{energy_argmax, weak_to_mask, EnergyParams};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Shape, Spacing, MAX_LABEL};

/// Bounding box drawn on one axial slice; `y1`/`x1` are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxialBox {
    pub tooth: u8,
    pub slice: usize,
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

/// All weak annotations of one study.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub study_id: String,
    pub shape: Shape,
    pub spacing_mm: Spacing,
    boxes: Vec<AxialBox>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    tooth: i64,
    slice: i64,
    #[serde(rename = "box")]
    bounds: [i64; 4],
}

#[derive(Serialize, Deserialize)]
struct RawAnnotations {
    study_id: String,
    shape: Shape,
    spacing_mm: Spacing,
    boxes: Vec<RawBox>,
}

impl AnnotationSet {
    /// Validates and builds an annotation set.
    pub fn new(study_id: impl Into<String>, shape: Shape, spacing_mm: Spacing, boxes: Vec<AxialBox>) -> Result<Self> {
        if shape.contains(&0) || spacing_mm.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "annotation geometry {shape:?} / {spacing_mm:?} is invalid"
            )));
        }
        let mut seen = BTreeSet::new();
        for b in &boxes {
            if !(1..=MAX_LABEL).contains(&b.tooth) {
                return Err(Error::ToothOutOfRange(b.tooth as i64));
            }
            if b.y0 >= b.y1 || b.x0 >= b.x1 {
                return Err(Error::DegenerateBox { tooth: b.tooth, slice: b.slice });
            }
            if b.slice >= shape[0] || b.y1 > shape[1] || b.x1 > shape[2] {
                return Err(Error::AnnotationOutOfBounds { tooth: b.tooth, slice: b.slice as i64 });
            }
            if !seen.insert((b.tooth, b.slice)) {
                return Err(Error::DuplicateBox { tooth: b.tooth, slice: b.slice });
            }
        }
        Ok(Self { study_id: study_id.into(), shape, spacing_mm, boxes })
    }

    pub fn boxes(&self) -> &[AxialBox] {
        &self.boxes
    }

    /// Annotated tooth numbers, ascending.
    pub fn teeth(&self) -> BTreeSet<u8> {
        self.boxes.iter().map(|b| b.tooth).collect()
    }

    /// Boxes grouped per tooth, each group sorted by slice.
    pub fn by_tooth(&self) -> BTreeMap<u8, Vec<AxialBox>> {
        let mut out: BTreeMap<u8, Vec<AxialBox>> = BTreeMap::new();
        for b in &self.boxes {
            out.entry(b.tooth).or_default().push(*b);
        }
        for v in out.values_mut() {
            v.sort_by_key(|b| b.slice);
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_at(text, Path::new("<inline>"))
    }

    fn from_json_at(text: &str, path: &Path) -> Result<Self> {
        let raw: RawAnnotations = serde_json::from_str(text)
            .map_err(|e| Error::MalformedAnnotation { path: path.to_owned(), reason: e.to_string() })?;
        let mut boxes = Vec::with_capacity(raw.boxes.len());
        for b in raw.boxes {
            if !(1..=MAX_LABEL as i64).contains(&b.tooth) {
                return Err(Error::ToothOutOfRange(b.tooth));
            }
            let tooth = b.tooth as u8;
            if b.slice < 0 || b.bounds.iter().any(|&v| v < 0) {
                return Err(Error::AnnotationOutOfBounds { tooth, slice: b.slice });
            }
            let [y0, x0, y1, x1] = b.bounds.map(|v| v as usize);
            boxes.push(AxialBox { tooth, slice: b.slice as usize, y0, x0, y1, x1 });
        }
        Self::new(raw.study_id, raw.shape, raw.spacing_mm, boxes)
    }

    pub fn to_json(&self) -> String {
        let raw = RawAnnotations {
            study_id: self.study_id.clone(),
            shape: self.shape,
            spacing_mm: self.spacing_mm,
            boxes: self
                .boxes
                .iter()
                .map(|b| RawBox {
                    tooth: b.tooth as i64,
                    slice: b.slice as i64,
                    bounds: [b.y0, b.x0, b.y1, b.x1].map(|v| v as i64),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("annotations serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|source| Error::Io { path: path.to_owned(), source })
    }
}

/// Reads and validates an annotation file.
pub fn parse_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AnnotationSet::from_json_at(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(boxes: &str) -> String {
        format!(r#"{{"study_id":"s1","shape":[20,16,16],"spacing_mm":[1,1,1],"boxes":[{boxes}]}}"#)
    }

    fn parse(text: &str) -> Result<AnnotationSet> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ann.json");
        fs::write(&p, text).unwrap();
        parse_annotations(&p)
    }

    #[test]
    fn single_box() {
        let a = parse(&doc(r#"{"tooth":1,"slice":10,"box":[5,5,10,10]}"#)).unwrap();
        assert_eq!(a.boxes().len(), 1);
        assert_eq!(a.boxes()[0], AxialBox { tooth: 1, slice: 10, y0: 5, x0: 5, y1: 10, x1: 10 });
        assert_eq!(a.study_id, "s1");
    }

    #[test]
    fn tooth_33_rejected() {
        let err = parse(&doc(r#"{"tooth":33,"slice":10,"box":[5,5,10,10]}"#)).unwrap_err();
        assert!(matches!(err, Error::ToothOutOfRange(33)));
        let err = parse(&doc(r#"{"tooth":0,"slice":10,"box":[5,5,10,10]}"#)).unwrap_err();
        assert!(matches!(err, Error::ToothOutOfRange(0)));
    }

    #[test]
    fn duplicate_rejected() {
        let err = parse(&doc(
            r#"{"tooth":4,"slice":3,"box":[5,5,10,10]},{"tooth":4,"slice":3,"box":[1,1,2,2]}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateBox { tooth: 4, slice: 3 }));
    }

    #[test]
    fn degenerate_and_out_of_bounds() {
        let err = parse(&doc(r#"{"tooth":2,"slice":3,"box":[5,5,5,10]}"#)).unwrap_err();
        assert!(matches!(err, Error::DegenerateBox { .. }));
        let err = parse(&doc(r#"{"tooth":2,"slice":30,"box":[5,5,6,10]}"#)).unwrap_err();
        assert!(matches!(err, Error::AnnotationOutOfBounds { .. }));
        let err = parse(&doc(r#"{"tooth":2,"slice":3,"box":[5,5,6,17]}"#)).unwrap_err();
        assert!(matches!(err, Error::AnnotationOutOfBounds { .. }));
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(parse("{\"study_id\": 3"), Err(Error::MalformedAnnotation { .. })));
    }

    #[test]
    fn json_round_trip() {
        let a = parse(&doc(
            r#"{"tooth":4,"slice":3,"box":[5,5,10,10]},{"tooth":4,"slice":7,"box":[1,1,2,2]}"#,
        ))
        .unwrap();
        assert_eq!(AnnotationSet::from_json(&a.to_json()).unwrap(), a);
        assert_eq!(a.by_tooth()[&4].len(), 2);
    }
}
