use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use super::surface::asd_masks;
use crate::error::{Error, Result};
use crate::volume::{LabelVolume, MAX_LABEL, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToothMetrics {
    /// `None` when either mask is empty.
    pub asd_mm: Option<f64>,
    pub iou: f64,
    pub present_in_gt: bool,
    pub present_in_pred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Mean over ground-truth teeth with a defined surface distance.
    pub asd_mm: Option<f64>,
    /// Mean over ground-truth teeth.
    pub iou: Option<f64>,
    pub teeth: usize,
    pub asd_undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_tooth: BTreeMap<u8, ToothMetrics>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-tooth IoU and ASD for every tooth in either volume. Aggregates cover
/// teeth present in the ground truth; undefined distances are counted, not averaged.
pub fn evaluate(pred: &LabelVolume, gt: &LabelVolume) -> Result<EvalReport> {
    if !pred.same_geometry(gt.shape(), gt.spacing_mm()) {
        return Err(Error::GeometryMismatch(format!(
            "prediction {:?} @ {:?} mm differs from ground truth {:?} @ {:?} mm",
            pred.shape(),
            pred.spacing_mm(),
            gt.shape(),
            gt.spacing_mm()
        )));
    }
    let gt_teeth = gt.teeth();
    let pred_teeth = pred.teeth();
    let confusion = confusion(pred, gt);

    let mut per_tooth = BTreeMap::new();
    for &t in gt_teeth.union(&pred_teeth) {
        let ti = t as usize;
        let inter = confusion[ti][ti];
        let p_count: usize = confusion[ti].iter().sum();
        let g_count: usize = confusion.iter().map(|row| row[ti]).sum();
        let union = p_count + g_count - inter;
        let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        let asd_mm = if p_count > 0 && g_count > 0 {
            let p: Vec<bool> = pred.labels().iter().map(|&l| l == t).collect();
            let g: Vec<bool> = gt.labels().iter().map(|&l| l == t).collect();
            Some(asd_masks(&p, &g, gt.shape(), gt.spacing_mm())?)
        } else {
            None
        };
        per_tooth.insert(
            t,
            ToothMetrics { asd_mm, iou, present_in_gt: g_count > 0, present_in_pred: p_count > 0 },
        );
    }

    let scored: Vec<&ToothMetrics> = per_tooth.values().filter(|m| m.present_in_gt).collect();
    let defined: Vec<f64> = scored.iter().filter_map(|m| m.asd_mm).collect();
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let ious: Vec<f64> = scored.iter().map(|m| m.iou).collect();
    let aggregate = Aggregate {
        asd_mm: mean(&defined),
        iou: mean(&ious),
        teeth: scored.len(),
        asd_undefined: scored.len() - defined.len(),
    };
    Ok(EvalReport { per_tooth, aggregate })
}

/// `confusion[p][g]` counts voxels labeled `p` in the prediction and `g` in the ground truth.
fn confusion(pred: &LabelVolume, gt: &LabelVolume) -> Vec<[usize; NUM_CLASSES]> {
    let mut m = vec![[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        m[p as usize][g as usize] += 1;
    }
    m
}

/// Renumbers predicted teeth to the ground-truth numbering that maximizes the
/// summed per-tooth IoU (optimal assignment). Predicted teeth left unmatched
/// take unused numbers. Returns the relabeled volume and the mapping used.
pub fn match_labels(pred: &LabelVolume, gt: &LabelVolume) -> Result<(LabelVolume, BTreeMap<u8, u8>)> {
    if pred.shape() != gt.shape() {
        return Err(Error::GeometryMismatch(format!(
            "prediction shape {:?} differs from ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let p_teeth: Vec<u8> = pred.teeth().into_iter().collect();
    let g_teeth: Vec<u8> = gt.teeth().into_iter().collect();
    let conf = confusion(pred, gt);
    let p_counts: Vec<usize> = (0..NUM_CLASSES).map(|p| conf[p].iter().sum()).collect();
    let g_counts: Vec<usize> = (0..NUM_CLASSES).map(|g| conf.iter().map(|r| r[g]).sum()).collect();
    let score = |p: u8, g: u8| -> i64 {
        let inter = conf[p as usize][g as usize];
        let union = p_counts[p as usize] + g_counts[g as usize] - inter;
        (inter as f64 / union as f64 * 1e9).round() as i64
    };

    let mut mapping = BTreeMap::new();
    if !p_teeth.is_empty() && !g_teeth.is_empty() {
        // the assignment solver needs rows <= columns
        let pred_rows = p_teeth.len() <= g_teeth.len();
        let (rows, cols) = if pred_rows { (&p_teeth, &g_teeth) } else { (&g_teeth, &p_teeth) };
        let weights = Matrix::from_fn(rows.len(), cols.len(), |(r, c)| {
            if pred_rows {
                score(rows[r], cols[c])
            } else {
                score(cols[c], rows[r])
            }
        });
        let (_, assignment) = kuhn_munkres(&weights);
        for (r, &c) in assignment.iter().enumerate() {
            let (p, g) = if pred_rows { (rows[r], cols[c]) } else { (cols[c], rows[r]) };
            mapping.insert(p, g);
        }
    }
    let mut spare = (1..=MAX_LABEL).filter(|t| !g_teeth.contains(t));
    for &p in &p_teeth {
        mapping.entry(p).or_insert_with(|| spare.next().expect("at most 32 predicted teeth"));
    }
    let mut lut = [0u8; NUM_CLASSES];
    for (&p, &g) in &mapping {
        lut[p as usize] = g;
    }
    let labels = pred.labels().iter().map(|&l| lut[l as usize]).collect();
    Ok((LabelVolume::new(pred.shape(), pred.spacing_mm(), labels)?, mapping))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(labels: Vec<u8>) -> LabelVolume {
        LabelVolume::new([1, 2, labels.len() / 2], [0.5; 3], labels).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = lv(vec![0, 1, 1, 0, 2, 2, 0, 0]);
        let r = evaluate(&gt, &gt).unwrap();
        assert_eq!(r.aggregate.iou, Some(1.0));
        assert_eq!(r.aggregate.asd_mm, Some(0.0));
        assert_eq!(r.aggregate.teeth, 2);
        assert!(r.per_tooth.values().all(|m| m.iou == 1.0 && m.asd_mm == Some(0.0)));
    }

    #[test]
    fn all_background_prediction() {
        let gt = lv(vec![0, 1, 1, 0, 2, 2, 0, 0]);
        let pred = lv(vec![0; 8]);
        let r = evaluate(&pred, &gt).unwrap();
        assert_eq!(r.aggregate.iou, Some(0.0));
        assert_eq!(r.aggregate.asd_mm, None);
        assert_eq!(r.aggregate.asd_undefined, 2);
        assert!(r.per_tooth.values().all(|m| m.asd_mm.is_none() && !m.present_in_pred));
    }

    #[test]
    fn extra_predicted_tooth_is_reported_not_averaged() {
        let gt = lv(vec![0, 1, 1, 0, 0, 0, 0, 0]);
        let pred = lv(vec![0, 1, 1, 0, 0, 0, 5, 0]);
        let r = evaluate(&pred, &gt).unwrap();
        assert_eq!(r.aggregate.teeth, 1);
        assert_eq!(r.aggregate.iou, Some(1.0));
        assert!(!r.per_tooth[&5].present_in_gt);
    }

    #[test]
    fn json_shape() {
        let gt = lv(vec![0, 3, 3, 0]);
        let v: serde_json::Value = serde_json::from_str(&evaluate(&gt, &gt).unwrap().to_json()).unwrap();
        assert_eq!(v["per_tooth"]["3"]["iou"], 1.0);
        assert_eq!(v["aggregate"]["asd_mm"], 0.0);
    }

    #[test]
    fn geometry_mismatch() {
        let a = LabelVolume::background([1, 1, 2], [1.0; 3]).unwrap();
        let b = LabelVolume::background([1, 2, 1], [1.0; 3]).unwrap();
        assert!(matches!(evaluate(&a, &b), Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn matching_recovers_permutation() {
        let gt = lv(vec![1, 1, 2, 2, 3, 3, 0, 0]);
        let pred = lv(vec![7, 7, 9, 9, 4, 4, 0, 8]);
        let (relabeled, map) = match_labels(&pred, &gt).unwrap();
        assert_eq!(map[&7], 1);
        assert_eq!(map[&9], 2);
        assert_eq!(map[&4], 3);
        assert!(!gt.teeth().contains(&map[&8]));
        assert_eq!(&relabeled.labels()[..6], &gt.labels()[..6]);

        let fewer = lv(vec![5, 5, 0, 0, 0, 0, 0, 0]);
        let (relabeled, _) = match_labels(&fewer, &gt).unwrap();
        assert_eq!(&relabeled.labels()[..2], &[1, 1]);
    }
}
