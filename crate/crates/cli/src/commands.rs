use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::Parser;
use serde::{Deserialize, Serialize};
use toothseg_core::metrics::{evaluate, match_labels};
use toothseg_core::phantom::{default_jaw, generate_phantom, PhantomConfig};
use toothseg_core::roi::{load_crop, save_crop};
use toothseg_core::segmenter::{
    coarse_stage, fine_stage, preprocess_stage, roi_stage, run_pipeline, ClassicalCoarse, CoarseSegmenter,
    ExternalCoarse, ExternalFine, FineSegmenter, OracleCoarse, OracleFine, ThresholdFine, UpsampleFine,
};
use toothseg_core::volume::{load_labels, load_volume, random_crop, save_labels, save_volume, Shape, Spacing};
use toothseg_core::weaklabels::{parse_annotations, weak_to_mask};

use crate::manifest::RunManifest;
use crate::*;

pub const INDEX_FILE: &str = "index.json";

/// Geometry of the full-resolution image plus the teeth in a crops directory.
#[derive(Debug, Serialize, Deserialize)]
struct CropIndex {
    shape: Shape,
    spacing_mm: Spacing,
    teeth: Vec<u8>,
}

pub fn dispatch(cli: Cli, argv: &[String]) -> Result<()> {
    let (seed, jobs) = (cli.seed, cli.jobs);
    ensure!(jobs >= 1, "--jobs must be at least 1");
    match cli.command {
        Command::Phantom(a) => phantom(a, argv, seed, jobs),
        Command::Preprocess(a) => preprocess(a, argv, seed, jobs),
        Command::Weak2mask(a) => weak2mask(a, argv, seed, jobs),
        Command::Coarse(a) => coarse(a, argv, seed, jobs),
        Command::Roi(a) => roi(a, argv, seed, jobs),
        Command::Fine(a) => fine(a, argv, seed, jobs),
        Command::Pipeline(a) => pipeline(a, argv, seed, jobs),
        Command::Evaluate(a) => evaluate_cmd(a, argv, seed, jobs),
        Command::Replay(a) => replay(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn manifest<T: Serialize>(command: &str, argv: &[String], seed: u64, jobs: usize, args: &T) -> Result<RunManifest> {
    RunManifest::new(command, argv, seed, jobs, serde_json::to_value(args)?)
}

fn shape3(v: &[usize]) -> Shape {
    [v[0], v[1], v[2]]
}

fn phantom(a: PhantomArgs, argv: &[String], seed: u64, jobs: usize) -> Result<()> {
    let start = Instant::now();
    let cfg: PhantomConfig = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: PhantomConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            cfg.seed = seed;
            cfg
        }
        None => {
            let mut cfg = default_jaw(a.teeth, shape3(&a.shape), [a.spacing; 3], seed)?;
            cfg.noise_sigma = a.noise;
            cfg
        }
    };
    let p = generate_phantom(&cfg)?;
    create_dir(&a.out)?;
    let outputs = vec![
        a.out.join("image.vjson"),
        a.out.join("labels.vjson"),
        a.out.join("ann.json"),
        a.out.join("phantom.json"),
    ];
    save_volume(&p.image, &outputs[0])?;
    save_labels(&p.labels, &outputs[1])?;
    p.annotations.save(&outputs[2])?;
    fs::write(&outputs[3], serde_json::to_string_pretty(&cfg)? + "\n")
        .with_context(|| format!("writing {}", outputs[3].display()))?;

    let mut m = manifest("phantom", argv, seed, jobs, &a)?;
    m.outputs = outputs;
    m.timings.insert("phantom".into(), start.elapsed().as_secs_f64());
    m.write(&a.out)?;
    Ok(())
}

fn preprocess(a: PreprocessArgs, argv: &[String], seed: u64, jobs: usize) -> Result<()> {
    let start = Instant::now();
    let image = load_volume(&a.input)?;
    let (normalized, coarse) = preprocess_stage(&image, &a.stage.config(jobs))?;
    create_dir(&a.out)?;
    let mut outputs = vec![a.out.join("normalized.vjson"), a.out.join("coarse.vjson")];
    save_volume(&normalized, &outputs[0])?;
    save_volume(&coarse, &outputs[1])?;
    if let Some(size) = &a.crop {
        let crop = random_crop(&coarse, shape3(size), seed)?;
        let path = a.out.join("crop.vjson");
        save_volume(&crop, &path)?;
        outputs.push(path);
    }
    let mut m = manifest("preprocess", argv, seed, jobs, &a)?;
    m.outputs = outputs;
    m.timings.insert("preprocess".into(), start.elapsed().as_secs_f64());
    m.write(&a.out)?;
    Ok(())
}

fn weak2mask(a: Weak2maskArgs, argv: &[String], seed: u64, jobs: usize) -> Result<()> {
    let start = Instant::now();
    let image = load_volume(&a.input)?;
    let ann = parse_annotations(&a.ann)?;
    let labels = weak_to_mask(&image, &ann, &a.energy.params())?;
    create_dir(&a.out)?;
    let path = a.out.join("labels.vjson");
    save_labels(&labels, &path)?;
    let mut m = manifest("weak2mask", argv, seed, jobs, &a)?;
    m.outputs = vec![path];
    m.timings.insert("weak2mask".into(), start.elapsed().as_secs_f64());
    m.write(&a.out)?;
    Ok(())
}

fn coarse_segmenter(a: &CoarseSegArgs, gt: Option<&Path>) -> Result<Box<dyn CoarseSegmenter>> {
    Ok(match a.coarse {
        CoarseKind::Oracle => {
            let gt = gt.context("the oracle coarse segmenter needs --gt")?;
            Box::new(OracleCoarse::new(load_labels(gt)?))
        }
        CoarseKind::Classical => Box::new(ClassicalCoarse::new(a.energy.params())?),
        CoarseKind::External => {
            let dir = a.coarse_probs.clone().context("the external coarse segmenter needs --coarse-probs")?;
            Box::new(ExternalCoarse { dir })
        }
    })
}

fn fine_segmenter(a: &FineSegArgs, gt: Option<&Path>) -> Result<Box<dyn FineSegmenter>> {
    Ok(match a.fine {
        FineKind::Oracle => {
            let gt = gt.context("the oracle fine segmenter needs --gt")?;
            Box::new(OracleFine::new(load_labels(gt)?))
        }
        FineKind::Threshold => Box::new(ThresholdFine::new(a.quantile)?),
        FineKind::Upsample => Box::new(UpsampleFine),
        FineKind::External => {
            let dir = a.fine_probs.clone().context("the external fine segmenter needs --fine-probs")?;
            Box::new(ExternalFine { dir })
        }
    })
}

fn coarse(a: CoarseArgs, argv: &[String], seed: u64, jobs: usize) -> Result<()> {
    let start = Instant::now();
    let image = load_volume(&a.input)?;
    let seg = coarse_segmenter(&a.seg, a.gt.as_deref())?;
    let labels = coarse_stage(&image, seg.as_ref())?;
    create_dir(&a.out)?;
    let path = a.out.join("coarse_labels.vjson");
    save_labels(&labels, &path)?;
    let mut m = manifest("coarse", argv, seed, jobs, &a)?;
    m.outputs = vec![path];
    m.timings.insert("coarse".into(), start.elapsed().as_secs_f64());
    m.write(&a.out)?;
    Ok(())
}

fn roi(a: RoiArgs, argv: &[String], seed: u64, jobs: usize) -> Result<()> {
    let start = Instant::now();
    let coarse = load_labels(&a.coarse_labels)?;
    let image = load_volume(&a.image)?;
    let gt = a.gt.as_deref().map(load_labels).transpose()?;
    let crops = roi_stage(&coarse, &image, gt.as_ref(), &a.stage.config(jobs))?;
    create_dir(&a.out)?;
    for crop in &crops {
        save_crop(&a.out, crop)?;
    }
    let index = CropIndex {
        shape: image.shape(),
        spacing_mm: image.spacing_mm(),
        teeth: crops.iter().map(|c| c.tooth).collect(),
    };
    let index_path = a.out.join(INDEX_FILE);
    fs::write(&index_path, serde_json::to_string_pretty(&index)? + "\n")
        .with_context(|| format!("writing {}", index_path.display()))?;
    let mut m = manifest("roi", argv, seed, jobs, &a)?;
    m.outputs = vec![index_path];
    m.timings.insert("roi".into(), start.elapsed().as_secs_f64());
    m.write(&a.out)?;
    Ok(())
}

fn fine(a: FineArgs, argv: &[String], seed: u64, jobs: usize) -> Result<()> {
    let start = Instant::now();
    let index_path = a.crops.join(INDEX_FILE);
    let text = fs::read_to_string(&index_path).with_context(|| format!("reading {}", index_path.display()))?;
    let index: CropIndex = serde_json::from_str(&text).with_context(|| format!("parsing {}", index_path.display()))?;
    let crops = index
        .teeth
        .iter()
        .map(|&t| load_crop(&a.crops, t))
        .collect::<toothseg_core::Result<Vec<_>>>()?;
    let seg = fine_segmenter(&a.seg, a.gt.as_deref())?;
    let (labels, skipped) = fine_stage(&crops, seg.as_ref(), index.shape, index.spacing_mm, &a.stage.config(jobs))?;
    create_dir(&a.out)?;
    let path = a.out.join("labels.vjson");
    save_labels(&labels, &path)?;
    let mut m = manifest("fine", argv, seed, jobs, &a)?;
    m.outputs = vec![path];
    m.skipped = skipped;
    m.timings.insert("fine".into(), start.elapsed().as_secs_f64());
    m.write(&a.out)?;
    Ok(())
}

fn pipeline(a: PipelineArgs, argv: &[String], seed: u64, jobs: usize) -> Result<()> {
    let image = load_volume(&a.input)?;
    let coarse = coarse_segmenter(&a.coarse, a.gt.as_deref())?;
    let fine = fine_segmenter(&a.fine, a.gt.as_deref())?;
    let out = run_pipeline(&image, coarse.as_ref(), fine.as_ref(), &a.stage.config(jobs))?;
    create_dir(&a.out)?;
    let outputs = vec![a.out.join("labels.vjson"), a.out.join("coarse_labels.vjson")];
    save_labels(&out.labels, &outputs[0])?;
    save_labels(&out.coarse_labels, &outputs[1])?;
    let mut m = manifest("pipeline", argv, seed, jobs, &a)?;
    m.outputs = outputs;
    m.timings = out.timings;
    m.skipped = out.skipped;
    m.write(&a.out)?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs, argv: &[String], seed: u64, jobs: usize) -> Result<()> {
    let start = Instant::now();
    let pred = load_labels(&a.pred)?;
    let gt = load_labels(&a.gt)?;
    let pred = if a.match_labels { match_labels(&pred, &gt)?.0 } else { pred };
    let report = evaluate(&pred, &gt)?;
    let text = report.to_json();
    if let Err(e) = writeln!(std::io::stdout().lock(), "{text}") {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(e).context("writing the report");
        }
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let path = dir.join("report.json");
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        let mut m = manifest("evaluate", argv, seed, jobs, &a)?;
        m.outputs = vec![path];
        m.timings.insert("evaluate".into(), start.elapsed().as_secs_f64());
        m.write(dir)?;
    }
    Ok(())
}

/// Replaces the value of `--out` in a recorded argument list.
fn redirect_out(argv: &[String], out: &Path) -> Vec<String> {
    let out = out.to_string_lossy().into_owned();
    let mut found = false;
    let mut result = Vec::with_capacity(argv.len());
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if arg == "--out" {
            it.next();
            result.extend(["--out".to_string(), out.clone()]);
            found = true;
        } else if arg.starts_with("--out=") {
            result.push(format!("--out={out}"));
            found = true;
        } else {
            result.push(arg.clone());
        }
    }
    if !found {
        result.extend(["--out".to_string(), out]);
    }
    result
}

fn replay(a: ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    if m.command == "replay" {
        bail!("{} records a replay", a.manifest.display());
    }
    let argv = match &a.out {
        Some(out) => {
            let absolute: PathBuf = std::path::absolute(out).context("resolving --out")?;
            redirect_out(&m.argv, &absolute)
        }
        None => m.argv.clone(),
    };
    std::env::set_current_dir(&m.cwd).with_context(|| format!("entering {}", m.cwd.display()))?;
    let cli = Cli::try_parse_from(&argv).with_context(|| format!("re-parsing the arguments in {}", a.manifest.display()))?;
    log::info!("replaying {} {:?}", m.command, argv);
    dispatch(cli, &argv)
}
