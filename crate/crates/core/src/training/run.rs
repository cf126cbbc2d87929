use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::{Deserialize, Serialize};

use super::batch::{build_batch, Batch, BatchContext, BatchItem};
use super::data::{load_dataset, Sample};
use super::stage::{adapter_freeze_policy, StageConfig, StageId};
use crate::diffusion::{total_loss, LossForm, LossReport};
use crate::model::{LoadReport, ModelSpec, VitiModel};
use crate::seed::SeedStreams;
use crate::tensor::to_tensor;
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.ndjson";
pub const DIAGNOSTIC_DIR: &str = "diagnostic";

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub l_masked: f64,
    pub l_temporal: Option<f64>,
    pub l_total: f64,
    pub lr: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub steps_run: usize,
    pub load_report: Option<LoadReport>,
    pub rejected: usize,
    pub last: Option<LossReport>,
}

/// Loss of one prepared item through the model's encoders and denoiser.
pub fn item_loss(model: &VitiModel, item: &BatchItem, alpha: Option<f64>, form: LossForm) -> Result<(Tensor, LossReport)> {
    let cond = model.conditioner().bundle(&item.inputs, item.timestep)?;
    let prediction = model.dit().forward(&to_tensor(&item.fused)?, &cond)?;
    total_loss(&to_tensor(&item.noise)?, &prediction, &item.mask, alpha, form)
}

/// Mean loss over a batch; the report averages each component.
pub fn batch_loss(model: &VitiModel, batch: &Batch, alpha: Option<f64>, form: LossForm) -> Result<(Tensor, LossReport)> {
    if batch.items.is_empty() {
        return Err(Error::EmptyMask(format!("every sample of step {} was rejected", batch.step)));
    }
    let n = batch.items.len() as f64;
    let mut total: Option<Tensor> = None;
    let (mut masked, mut temporal) = (0.0, 0.0);
    for item in &batch.items {
        let (loss, report) = item_loss(model, item, alpha, form)?;
        masked += report.l_masked;
        temporal += report.l_temporal.unwrap_or(0.0);
        total = Some(match total {
            None => loss,
            Some(t) => (t + loss)?,
        });
    }
    let loss = (total.expect("non-empty batch") / n)?;
    let report = LossReport::new(masked / n, alpha.map(|_| temporal / n), alpha.unwrap_or(0.0));
    Ok((loss, report))
}

/// Builds the model a stage trains: the inpainting variant for stages 1–3,
/// the try-on variant for the viti stage.
pub fn stage_model(spec: &ModelSpec, cfg: &StageConfig, seeds: &SeedStreams) -> Result<(VitiModel, Option<LoadReport>)> {
    let stage_spec = if cfg.stage == StageId::Viti {
        spec.try_on(cfg.effective_garment_scale())
    } else {
        spec.inpainting()
    };
    let model = VitiModel::new(&stage_spec, seeds.seed("init"))?;
    let report = cfg.init_checkpoint.as_ref().map(|dir| model.load_weights(dir)).transpose()?;
    Ok((model, report))
}

pub fn batch_context<'a>(model: &'a VitiModel, cfg: &StageConfig, seeds: SeedStreams) -> BatchContext<'a> {
    let try_on = cfg.stage == StageId::Viti;
    BatchContext {
        codec: model.codec(),
        plugins: model.plugins(),
        schedule: model.schedule(),
        masks: cfg.mask_specs(),
        use_garment: try_on,
        use_pose: try_on,
        require_prompt: cfg.stage.requires_prompt(),
        condition_dropout: cfg.condition_dropout,
        batch_size: cfg.batch_size,
        seeds,
    }
}

fn check_geometry(model: &VitiModel, samples: &[Sample]) -> Result<()> {
    for s in samples {
        model
            .spec()
            .latent_shape(s.video.frames(), s.video.height(), s.video.width())
            .map_err(|e| e.for_record(&s.id))?;
    }
    Ok(())
}

/// Runs one training stage and writes its checkpoint and metrics log to
/// `cfg.output`. Validation happens before any data is loaded or any file is
/// written.
pub fn run_stage(spec: &ModelSpec, cfg: &StageConfig, seed: u64) -> Result<StageOutcome> {
    cfg.validate()?;
    spec.validate()?;
    let seeds = SeedStreams::new(seed);
    let samples = load_dataset(&cfg.dataset)?;
    let (model, load_report) = stage_model(spec, cfg, &seeds)?;
    check_geometry(&model, &samples)?;
    if let Some(r) = &load_report {
        log::info!(
            "stage {}: loaded {} tensors, {} fresh, {} unused",
            cfg.stage.as_str(),
            r.loaded.len(),
            r.fresh.len(),
            r.unused.len()
        );
    }

    let trainable = adapter_freeze_policy(&cfg.freeze, &model.store().names());
    let vars: Vec<_> = model
        .store()
        .vars()
        .into_iter()
        .filter(|(k, _)| trainable.contains(k))
        .map(|(_, v)| v)
        .collect();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    )?;

    fs::create_dir_all(&cfg.output)?;
    let metrics_path = cfg.output.join(METRICS_FILE);
    let mut log_file = BufWriter::new(File::create(&metrics_path)?);
    let ctx = batch_context(&model, cfg, seeds);
    let alpha = cfg.effective_alpha();
    let start = Instant::now();
    let workers = cfg.workers.min(cfg.steps.max(1));

    let (rejected, last) = std::thread::scope(|scope| -> Result<(usize, Option<LossReport>)> {
        let (tx, rx) = sync_channel::<(usize, Result<Batch>)>(2 * workers);
        for w in 0..workers {
            let tx = tx.clone();
            let (ctx, samples) = (&ctx, &samples);
            scope.spawn(move || {
                let mut step = w;
                while step < cfg.steps {
                    if tx.send((step, build_batch(ctx, samples, step))).is_err() {
                        break;
                    }
                    step += workers;
                }
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, Result<Batch>> = BTreeMap::new();
        let mut rejected = 0;
        let mut last = None;
        for step in 0..cfg.steps {
            let batch = loop {
                if let Some(b) = pending.remove(&step) {
                    break b?;
                }
                let (k, b) = rx
                    .recv()
                    .map_err(|_| Error::Contract("data workers stopped before the stage finished".into()))?;
                pending.insert(k, b);
            };
            rejected += batch.rejected.len();
            if batch.items.is_empty() {
                log::warn!("step {step}: every sample was rejected, skipping");
                continue;
            }
            let (loss, report) = batch_loss(&model, &batch, alpha, cfg.loss_form)?;
            if !report.is_finite() {
                let diag = cfg.output.join(DIAGNOSTIC_DIR);
                model.save(&diag, cfg.stage.as_str(), step)?;
                return Err(Error::Numeric(format!(
                    "non-finite loss at step {step} ({report:?}); diagnostic checkpoint in {}",
                    diag.display()
                )));
            }
            let lr = cfg.lr_schedule.rate(cfg.learning_rate, step, cfg.steps);
            opt.set_learning_rate(lr);
            opt.backward_step(&loss)?;
            let row = MetricsRow {
                step,
                l_masked: report.l_masked,
                l_temporal: report.l_temporal,
                l_total: report.l_total,
                lr,
                wall_time: start.elapsed().as_secs_f64(),
            };
            writeln!(log_file, "{}", serde_json::to_string(&row)?)?;
            last = Some(report);
        }
        Ok((rejected, last))
    })?;
    log_file.flush()?;
    model.save(&cfg.output, cfg.stage.as_str(), cfg.steps)?;
    Ok(StageOutcome {
        checkpoint: cfg.output.clone(),
        metrics: metrics_path,
        steps_run: cfg.steps,
        load_report,
        rejected,
        last,
    })
}

/// Reads a metrics log back.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
