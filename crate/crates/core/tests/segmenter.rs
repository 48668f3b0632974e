use std::collections::BTreeSet;

use toothseg_core::metrics::{evaluate, match_labels, ProbStack};
use toothseg_core::phantom::{default_jaw, generate_phantom, Phantom};
use toothseg_core::roi::{extract_roi, Box3, RoICrop};
use toothseg_core::segmenter::*;
use toothseg_core::volume::{save_volume, LabelVolume, ValueKind, Volume, NUM_CLASSES};
use toothseg_core::{Error, Result};

fn phantom(n: usize, seed: u64) -> Phantom {
    generate_phantom(&default_jaw(n, [80, 96, 96], [0.4; 3], seed).unwrap()).unwrap()
}

#[test]
fn oracle_pipeline_is_identity() {
    let p = phantom(6, 1);
    let out = run_pipeline(
        &p.image,
        &OracleCoarse::new(p.labels.clone()),
        &OracleFine::new(p.labels.clone()),
        &PipelineConfig::default(),
    )
    .unwrap();
    assert_eq!(out.labels, p.labels);
    assert!(out.skipped.is_empty());
    let r = evaluate(&out.labels, &p.labels).unwrap();
    assert_eq!(r.aggregate.iou, Some(1.0));
    assert_eq!(r.aggregate.asd_mm, Some(0.0));
    for stage in ["preprocess", "coarse", "roi", "fine"] {
        assert!(out.timings.contains_key(stage));
    }
}

#[test]
fn oracle_coarse_probabilities_are_one_hot() {
    let p = phantom(2, 4);
    let probs = OracleCoarse::new(p.labels.clone()).segment_coarse(&p.image).unwrap();
    assert_eq!(probs.num_classes(), NUM_CLASSES);
    assert_eq!(probs.argmax().unwrap(), p.labels);
    for c in 0..NUM_CLASSES {
        assert!(probs.class(c).data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}

#[test]
fn empty_coarse_output_gives_empty_labels() {
    let p = phantom(2, 2);
    let none = LabelVolume::background(p.labels.shape(), p.labels.spacing_mm()).unwrap();
    let out = run_pipeline(&p.image, &OracleCoarse::new(none.clone()), &OracleFine::new(p.labels.clone()), &PipelineConfig::default())
        .unwrap();
    assert_eq!(out.labels, none);
}

#[test]
fn output_labels_come_from_the_coarse_stage() {
    let p = phantom(6, 3);
    let out = run_pipeline(&p.image, &ClassicalCoarse::default(), &ThresholdFine::default(), &PipelineConfig::default()).unwrap();
    let coarse = out.coarse_labels.teeth();
    assert!(!coarse.is_empty());
    assert!(out.labels.teeth().is_subset(&coarse));
}

#[test]
fn classical_stand_in_on_noise_free_phantom() {
    let p = phantom(8, 5);
    let cfg = PipelineConfig::default();
    let full = run_pipeline(&p.image, &ClassicalCoarse::default(), &ThresholdFine::default(), &cfg).unwrap();
    let (matched, _) = match_labels(&full.labels, &p.labels).unwrap();
    let report = evaluate(&matched, &p.labels).unwrap();
    for (tooth, m) in &report.per_tooth {
        assert!(m.iou >= 0.7, "tooth {tooth}: iou {}", m.iou);
    }
    let coarse_only = run_pipeline(&p.image, &ClassicalCoarse::default(), &UpsampleFine, &cfg).unwrap();
    let (matched, _) = match_labels(&coarse_only.labels, &p.labels).unwrap();
    let coarse_report = evaluate(&matched, &p.labels).unwrap();
    assert!(report.aggregate.iou.unwrap() > coarse_report.aggregate.iou.unwrap());
}

#[test]
fn classical_coarse_is_background_on_flat_input() {
    let v = Volume::filled([10, 10, 10], [1.0; 3], 3.0, ValueKind::Intensity).unwrap();
    let labels = ClassicalCoarse::default().label(&v).unwrap();
    assert!(labels.teeth().is_empty());
}

#[test]
fn pipeline_is_deterministic_across_job_counts() {
    let p = phantom(8, 6);
    let run = |jobs| {
        let cfg = PipelineConfig { jobs, ..PipelineConfig::default() };
        run_pipeline(&p.image, &ClassicalCoarse::default(), &ThresholdFine::default(), &cfg).unwrap()
    };
    let a = run(1);
    for jobs in [1, 3, 8] {
        let b = run(jobs);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.coarse_labels, b.coarse_labels);
    }
}

#[test]
fn stage_composition_equals_pipeline() {
    let p = phantom(4, 7);
    let cfg = PipelineConfig::default();
    let (coarse, fine) = (ClassicalCoarse::default(), ThresholdFine::default());
    let whole = run_pipeline(&p.image, &coarse, &fine, &cfg).unwrap();
    let (normalized, coarse_image) = preprocess_stage(&p.image, &cfg).unwrap();
    let coarse_labels = coarse_stage(&coarse_image, &coarse).unwrap();
    let crops = roi_stage(&coarse_labels, &normalized, None, &cfg).unwrap();
    let (labels, skipped) = fine_stage(&crops, &fine, p.image.shape(), p.image.spacing_mm(), &cfg).unwrap();
    assert_eq!(coarse_labels, whole.coarse_labels);
    assert_eq!(labels, whole.labels);
    assert!(skipped.is_empty());
}

struct FailsOn(u8);

impl FineSegmenter for FailsOn {
    fn name(&self) -> &str {
        "fails"
    }

    fn segment_fine(&self, crop: &RoICrop) -> Result<Volume> {
        if crop.tooth == self.0 {
            return Err(Error::Segmenter("refused".into()));
        }
        UpsampleFine.segment_fine(crop)
    }
}

#[test]
fn failing_tooth_is_skipped() {
    let p = phantom(4, 8);
    let teeth: Vec<u8> = p.labels.teeth().into_iter().collect();
    let out = run_pipeline(&p.image, &OracleCoarse::new(p.labels.clone()), &FailsOn(teeth[1]), &PipelineConfig::default())
        .unwrap();
    assert_eq!(out.skipped.len(), 1);
    assert_eq!(out.skipped[0].tooth, teeth[1]);
    let expected: BTreeSet<u8> = teeth.iter().copied().filter(|&t| t != teeth[1]).collect();
    assert_eq!(out.labels.teeth(), expected);
}

#[test]
fn invalid_config_is_rejected() {
    let p = phantom(1, 1);
    let seg = OracleCoarse::new(p.labels.clone());
    for cfg in [
        PipelineConfig { lo_pct: 60.0, hi_pct: 40.0, ..PipelineConfig::default() },
        PipelineConfig { coarse_spacing_mm: 0.0, ..PipelineConfig::default() },
        PipelineConfig { jobs: 0, ..PipelineConfig::default() },
    ] {
        assert!(matches!(run_pipeline(&p.image, &seg, &UpsampleFine, &cfg), Err(Error::InvalidParameter(_))));
    }
}

fn crop_of(p: &Phantom, tooth: u8) -> RoICrop {
    let cfg = PipelineConfig::default();
    let (normalized, coarse_image) = preprocess_stage(&p.image, &cfg).unwrap();
    let coarse = coarse_stage(&coarse_image, &OracleCoarse::new(p.labels.clone())).unwrap();
    extract_roi(&coarse, &normalized, Some(&p.labels), tooth, 3.0, Default::default()).unwrap()
}

#[test]
fn threshold_fine_on_a_tooth_crop() {
    let p = phantom(4, 9);
    let tooth = *p.labels.teeth().iter().next().unwrap();
    let crop = crop_of(&p, tooth);
    let probs = ThresholdFine::new(0.5).unwrap().segment_fine(&crop).unwrap();
    assert!(probs.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let target = crop.target.as_ref().unwrap();
    let (mut inter, mut union) = (0, 0);
    for (&q, &t) in probs.data().iter().zip(target.labels()) {
        let pred = q >= 0.5;
        inter += (pred && t != 0) as usize;
        union += (pred || t != 0) as usize;
    }
    assert!(inter as f64 / union as f64 >= 0.8);
}

#[test]
fn threshold_fine_on_constant_crop() {
    let image = Volume::filled([6, 6, 6], [0.4; 3], 2.0, ValueKind::Intensity).unwrap();
    let crop = RoICrop {
        tooth: 1,
        box_coarse: Box3::full([3, 3, 3]),
        box_fine: Box3::full([6, 6, 6]),
        image,
        target: None,
        coarse_mask: LabelVolume::background([3, 3, 3], [0.8; 3]).unwrap(),
    };
    let probs = ThresholdFine::default().segment_fine(&crop).unwrap();
    let first = probs.data()[0];
    assert!(probs.data().iter().all(|&v| v == first));
    assert!(ThresholdFine::new(0.0).is_err());
    assert!(ThresholdFine::new(1.0).is_err());
}

#[test]
fn upsample_fine_reproduces_coarse_mask() {
    let p = phantom(2, 10);
    let tooth = *p.labels.teeth().iter().next().unwrap();
    let crop = crop_of(&p, tooth);
    let probs = UpsampleFine.segment_fine(&crop).unwrap();
    let on = probs.data().iter().filter(|&&v| v == 1.0).count();
    let coarse_on = crop.coarse_mask.labels().iter().filter(|&&l| l != 0).count();
    // 0.4 mm voxels inside 1 mm voxels: 2.5^3 fine voxels per coarse voxel on average
    let ratio = on as f64 / coarse_on as f64;
    assert!((ratio - 15.625).abs() < 2.0, "ratio {ratio}");
    assert!(probs.data().iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn external_segmenters_read_probability_files() {
    let p = phantom(2, 11);
    let cfg = PipelineConfig::default();
    let (normalized, coarse_image) = preprocess_stage(&p.image, &cfg).unwrap();
    let oracle = OracleCoarse::new(p.labels.clone()).segment_coarse(&coarse_image).unwrap();

    let dir = tempfile::tempdir().unwrap();
    for c in 0..NUM_CLASSES {
        save_volume(oracle.class(c), dir.path().join(format!("class_{c:02}.vjson"))).unwrap();
    }
    let ext = ExternalCoarse { dir: dir.path().to_path_buf() };
    let coarse = coarse_stage(&coarse_image, &ext).unwrap();
    assert_eq!(coarse, oracle.argmax().unwrap());

    let crops = roi_stage(&coarse, &normalized, None, &cfg).unwrap();
    let fine_dir = tempfile::tempdir().unwrap();
    let oracle_fine = OracleFine::new(p.labels.clone());
    for crop in &crops {
        let probs = oracle_fine.segment_fine(crop).unwrap();
        save_volume(&probs, fine_dir.path().join(format!("tooth_{:02}.vjson", crop.tooth))).unwrap();
    }
    let ext_fine = ExternalFine { dir: fine_dir.path().to_path_buf() };
    let (labels, skipped) = fine_stage(&crops, &ext_fine, p.image.shape(), p.image.spacing_mm(), &cfg).unwrap();
    assert!(skipped.is_empty());
    assert_eq!(labels, p.labels);

    let wrong = tempfile::tempdir().unwrap();
    assert!(matches!(
        ExternalCoarse { dir: wrong.path().to_path_buf() }.segment_coarse(&coarse_image),
        Err(Error::MissingFile(_))
    ));
}

#[test]
fn coarse_stage_rejects_wrong_geometry() {
    struct Wrong;
    impl CoarseSegmenter for Wrong {
        fn name(&self) -> &str {
            "wrong"
        }
        fn segment_coarse(&self, _: &Volume) -> Result<ProbStack> {
            ProbStack::one_hot(&LabelVolume::background([2, 2, 2], [1.0; 3])?, NUM_CLASSES)
        }
    }
    let v = Volume::filled([3, 3, 3], [1.0; 3], 0.0, ValueKind::Intensity).unwrap();
    assert!(matches!(coarse_stage(&v, &Wrong), Err(Error::Segmenter(_))));
}
