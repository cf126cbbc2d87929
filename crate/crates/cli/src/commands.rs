use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use viti_core::conditioning::{GarmentImage, PoseVideo};
use viti_core::diffusion::{LossForm, SamplerConfig};
use viti_core::evaluation::{aggregate, evaluate_clip, feature_extractor_by_name, perceptual_by_name, vfid, MetricReport};
use viti_core::io::{load_image, load_labels, load_mask, load_tensor4, load_video, save_mask, save_video, RAW_EXTENSION};
use viti_core::latent_codec::{MaskVideo, Video};
use viti_core::masking::{from_segmentation_labels, generate_box_mask, maybe_invert, MaskSpec, MaskStrategy};
use viti_core::model::{inpaint, InferenceRequest, VitiModel};
use viti_core::seed::SeedStreams;
use viti_core::training::synth::{write_dataset, SynthConfig};
use viti_core::training::{run_stage, StageId, StageOutcome};
use viti_core::{Error, Result};

use crate::config::RunConfig;

/// Command-line overrides applied on top of a run config.
#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub garment_scale: Option<f64>,
    pub loss_form: Option<LossForm>,
    pub workers: Option<usize>,
}

/// Loads, overrides and validates a run config, then runs every stage in
/// order. Nothing is written if validation fails.
pub fn cmd_train(config: &Path, overrides: &TrainOverrides) -> Result<Vec<StageOutcome>> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    for stage in &mut cfg.stages {
        if let Some(steps) = overrides.steps {
            stage.steps = steps;
        }
        if let Some(form) = overrides.loss_form {
            stage.loss_form = form;
        }
        if let Some(w) = overrides.workers {
            stage.workers = w;
        }
        if stage.stage == StageId::Viti {
            if let Some(s) = overrides.garment_scale {
                stage.garment_scale = Some(s);
            }
        }
    }
    cfg.validate()?;
    let seeds = SeedStreams::new(cfg.seed);
    let mut outcomes = Vec::new();
    for (i, stage) in cfg.stages.iter().enumerate() {
        log::info!("stage {} ({}): {} steps", i, stage.stage.as_str(), stage.steps);
        outcomes.push(run_stage(&cfg.model, stage, seeds.indexed_seed("stage", i as u64))?);
    }
    Ok(outcomes)
}

#[derive(Debug, Clone)]
pub struct InferArgs {
    pub checkpoint: PathBuf,
    pub video: PathBuf,
    pub mask: PathBuf,
    pub prompt: String,
    pub garment: Option<PathBuf>,
    pub pose: Option<PathBuf>,
    pub steps: Option<usize>,
    pub seed: u64,
    pub garment_scale: Option<f64>,
    pub guidance: Option<f64>,
    /// Output frame directory, or a `.vtns` file when `raw` is set.
    pub out: PathBuf,
    pub raw: bool,
}

/// Runs the inference pipeline and writes the composited clip.
pub fn cmd_infer(args: &InferArgs) -> Result<PathBuf> {
    let (mut model, _) = VitiModel::load(&args.checkpoint)?;
    if let Some(s) = args.garment_scale {
        model.set_garment_scale(s)?;
    }
    let video = load_video(&args.video)?;
    let mask = load_mask(&args.mask)?;
    let garment = args
        .garment
        .as_ref()
        .map(|p| load_image(p).and_then(GarmentImage::new))
        .transpose()?;
    let pose = args
        .pose
        .as_ref()
        .map(|p| load_tensor4(p).and_then(PoseVideo::new))
        .transpose()?;
    let mut sampler = SamplerConfig::new(
        args.steps.unwrap_or(model.schedule().len()),
        SeedStreams::new(args.seed).seed("sampler"),
    );
    sampler.guidance = args.guidance;
    let out = inpaint(
        &model,
        &InferenceRequest {
            video: &video,
            mask: &mask,
            prompt: &args.prompt,
            garment: garment.as_ref(),
            pose: pose.as_ref(),
            sampler,
        },
    )?;
    let path = if args.raw && args.out.extension().and_then(|e| e.to_str()) != Some(RAW_EXTENSION) {
        args.out.with_extension(RAW_EXTENSION)
    } else {
        args.out.clone()
    };
    save_video(&path, &out)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub real: PathBuf,
    pub generated: PathBuf,
    pub masks: Option<PathBuf>,
    pub perceptual: String,
    pub features: String,
    pub loss_form: LossForm,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct EvalRow<'a> {
    clip: &'a str,
    #[serde(flatten)]
    report: &'a MetricReport,
}

fn is_clip(path: &Path) -> bool {
    path.is_dir() || path.extension().and_then(|e| e.to_str()) == Some(RAW_EXTENSION)
}

/// A clip directory itself, or a directory of clips.
fn list_clips(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    if viti_core::io::frame_path(dir, 0).exists() {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("clip").to_string();
        return Ok(vec![(name, dir.to_path_buf())]);
    }
    let mut clips: Vec<(String, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_clip(p))
        .map(|p| (p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(), p))
        .collect();
    clips.sort();
    Ok(clips)
}

/// Per-clip metric rows followed by an aggregate row, as NDJSON.
pub fn cmd_eval(args: &EvalArgs) -> Result<PathBuf> {
    let perceptual = perceptual_by_name(&args.perceptual)?;
    let fx = feature_extractor_by_name(&args.features)?;
    let real = list_clips(&args.real)?;
    let generated = list_clips(&args.generated)?;
    if real.len() != generated.len() || real.is_empty() {
        return Err(Error::Config(format!(
            "real set has {} clips, generated set has {}",
            real.len(),
            generated.len()
        )));
    }
    let masks = args.masks.as_ref().map(|d| list_clips(d)).transpose()?;
    if let Some(m) = &masks {
        if m.len() != real.len() {
            return Err(Error::Config(format!("{} masks for {} clips", m.len(), real.len())));
        }
    }
    let mut real_videos: Vec<Video> = Vec::new();
    let mut gen_videos: Vec<Video> = Vec::new();
    let mut rows = Vec::new();
    for (i, ((name, rp), (_, gp))) in real.iter().zip(&generated).enumerate() {
        let r = load_video(rp)?;
        let g = load_video(gp)?;
        let mask: Option<MaskVideo> = masks.as_ref().map(|m| load_mask(&m[i].1)).transpose()?;
        rows.push((name.clone(), evaluate_clip(&r, &g, mask.as_ref(), perceptual.as_ref(), args.loss_form)?));
        real_videos.push(r);
        gen_videos.push(g);
    }
    let summary = aggregate(
        &rows.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>(),
        Some(vfid(&real_videos, &gen_videos, fx.as_ref())?),
    );
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = BufWriter::new(File::create(&args.out)?);
    for (name, report) in &rows {
        writeln!(f, "{}", serde_json::to_string(&EvalRow { clip: name, report })?)?;
    }
    writeln!(
        f,
        "{}",
        serde_json::to_string(&EvalRow {
            clip: "aggregate",
            report: &summary
        })?
    )?;
    f.flush()?;
    Ok(args.out.clone())
}

#[derive(Debug, Clone)]
pub struct MaskgenArgs {
    pub spec: MaskSpec,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Label map for the segmentation strategies.
    pub labels: Option<PathBuf>,
    pub label_values: Vec<u8>,
    pub out: PathBuf,
}

pub fn cmd_maskgen(args: &MaskgenArgs) -> Result<PathBuf> {
    let mut rng = args.spec.rng();
    let mask = match args.spec.strategy {
        MaskStrategy::TimeInvariantBox | MaskStrategy::TimeVariantBox => {
            generate_box_mask(&args.spec, args.frames, args.height, args.width, &mut rng)?
        }
        MaskStrategy::Instance | MaskStrategy::Garment => {
            let path = args
                .labels
                .as_ref()
                .ok_or_else(|| Error::Config("segmentation strategies need --labels".into()))?;
            if args.label_values.is_empty() {
                return Err(Error::Config("segmentation strategies need at least one --label".into()));
            }
            let labels = load_labels(path)?;
            let mask = from_segmentation_labels(&labels, &args.label_values)?;
            maybe_invert(&mask, args.spec.invert_prob, &mut rng)?.0
        }
    };
    save_mask(&args.out, &mask)?;
    Ok(args.out.clone())
}

pub fn cmd_data_synth(out: &Path, cfg: &SynthConfig) -> Result<PathBuf> {
    write_dataset(out, cfg)?;
    Ok(out.to_path_buf())
}
