use std::collections::HashMap;
use std::path::Path;

use candle_core::Tensor;
use ndarray::Array3;

use viti_core::latent_codec::Video;
use viti_core::model::{ModelSpec, VitiModel, WEIGHTS_FILE};
use viti_core::seed::SeedStreams;
use viti_core::training::synth::{write_dataset, SynthConfig};
use viti_core::training::{
    batch_context, build_batch, load_dataset, read_metrics, run_stage, stage_model, FreezePolicy, Sample,
    StageConfig, StageId,
};

fn small_spec() -> ModelSpec {
    let mut spec = ModelSpec::toy();
    spec.dit.model_dim = 32;
    spec.dit.depth = 1;
    spec.dit.heads = 2;
    spec.dit.mlp_ratio = 2;
    spec.schedule.num_timesteps = 20;
    spec
}

fn dataset(dir: &Path, clips: usize) -> std::path::PathBuf {
    let data = dir.join("data");
    write_dataset(&data, &SynthConfig { clips, ..Default::default() }).unwrap();
    data
}

fn weights(dir: &Path) -> HashMap<String, Tensor> {
    candle_core::safetensors::load(dir.join(WEIGHTS_FILE), &candle_core::Device::Cpu).unwrap()
}

fn same_weights(a: &HashMap<String, Tensor>, b: &HashMap<String, Tensor>, keys: impl Fn(&str) -> bool) -> bool {
    a.iter().filter(|(k, _)| keys(k)).all(|(k, t)| {
        let u = &b[k];
        t.flatten_all().unwrap().to_vec1::<f64>().unwrap() == u.flatten_all().unwrap().to_vec1::<f64>().unwrap()
    })
}

#[test]
fn stage_one_loss_decreases_in_most_seeded_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 4);
    let spec = small_spec();
    let runs = 20;
    let mut decreased = 0;
    for seed in 0..runs {
        let mut cfg = StageConfig::new(StageId::Stage1, &data, dir.path().join(format!("run{seed}")), 200);
        cfg.learning_rate = 1e-3;
        let outcome = run_stage(&spec, &cfg, seed).unwrap();
        let rows = read_metrics(&outcome.metrics).unwrap();
        let mean = |r: &[viti_core::training::MetricsRow]| r.iter().map(|x| x.l_masked).sum::<f64>() / r.len() as f64;
        if mean(&rows[150..]) < mean(&rows[..50]) {
            decreased += 1;
        }
    }
    assert!(decreased * 100 >= runs * 95, "loss decreased in {decreased}/{runs} runs");
}

#[test]
fn zero_steps_leave_weights_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 2);
    let spec = small_spec();
    let s1 = dir.path().join("s1");
    let mut cfg = StageConfig::new(StageId::Stage1, &data, &s1, 3);
    cfg.learning_rate = 1e-3;
    run_stage(&spec, &cfg, 0).unwrap();
    let mut next = StageConfig::new(StageId::Stage2, &data, dir.path().join("s2"), 0);
    next.init_checkpoint = Some(s1.clone());
    let outcome = run_stage(&spec, &next, 1).unwrap();
    assert_eq!(read_metrics(&outcome.metrics).unwrap().len(), 0);
    let (a, b) = (weights(&s1), weights(&outcome.checkpoint));
    assert_eq!(a.len(), b.len());
    assert!(same_weights(&a, &b, |_| true));
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let model = VitiModel::new(&small_spec(), 17).unwrap();
    model.save(&dir.path().join("a"), "viti", 12).unwrap();
    let (loaded, manifest) = VitiModel::load(&dir.path().join("a")).unwrap();
    assert_eq!(manifest.step, 12);
    assert_eq!(manifest.stage, "viti");
    assert_eq!(loaded.spec(), model.spec());
    loaded.save(&dir.path().join("b"), "viti", 12).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a").join(WEIGHTS_FILE)).unwrap(),
        std::fs::read(dir.path().join("b").join(WEIGHTS_FILE)).unwrap()
    );
    let names = model.store().names();
    assert_eq!(names, loaded.store().names());
    assert!(names.iter().all(|n| n.starts_with("dit.") || n.starts_with("garment_encoder.") || n.starts_with("pose_encoder.")));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 3);
    let spec = small_spec();
    let mut outputs = Vec::new();
    for workers in [1usize, 3] {
        let mut cfg = StageConfig::new(StageId::Stage1, &data, dir.path().join(format!("w{workers}")), 6);
        cfg.workers = workers;
        cfg.batch_size = 2;
        cfg.learning_rate = 1e-3;
        outputs.push(run_stage(&spec, &cfg, 4).unwrap().checkpoint);
    }
    assert_eq!(
        std::fs::read(outputs[0].join(WEIGHTS_FILE)).unwrap(),
        std::fs::read(outputs[1].join(WEIGHTS_FILE)).unwrap()
    );
}

#[test]
fn try_on_stage_loads_dit_and_initialises_adapters() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 2);
    let spec = small_spec();
    let s3 = dir.path().join("s3");
    run_stage(&spec, &StageConfig::new(StageId::Stage3, &data, &s3, 1), 0).unwrap();
    let mut viti = StageConfig::new(StageId::Viti, &data, dir.path().join("viti"), 2);
    viti.init_checkpoint = Some(s3.clone());
    viti.freeze = FreezePolicy::AdapterOnly;
    viti.learning_rate = 1e-2;
    let outcome = run_stage(&spec, &viti, 0).unwrap();
    let report = outcome.load_report.unwrap();
    assert!(report.unused.is_empty());
    assert!(report.loaded.iter().all(|n| n.starts_with("dit.")));
    assert!(report.fresh.iter().any(|n| n.starts_with("garment_encoder.")));
    assert!(report.fresh.iter().any(|n| n.starts_with("pose_encoder.")));
    assert!(report.fresh.iter().any(|n| n.contains(".garment_attn.")));
    assert!(report.fresh.iter().all(|n| !n.contains(".self_attn.")));

    // Adapter-only training leaves every loaded weight untouched.
    let (before, after) = (weights(&s3), weights(&outcome.checkpoint));
    assert!(same_weights(&before, &after, |_| true));
    let fresh = VitiModel::new(&spec.try_on(1.0), SeedStreams::new(0).seed("init")).unwrap();
    let moved = fresh
        .store()
        .tensors()
        .iter()
        .filter(|(k, _)| k.starts_with("garment_encoder."))
        .any(|(k, t)| {
            t.flatten_all().unwrap().to_vec1::<f64>().unwrap()
                != after[k].flatten_all().unwrap().to_vec1::<f64>().unwrap()
        });
    assert!(moved, "adapter weights did not train");
}

#[test]
fn batches_depend_only_on_seed_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 3);
    let samples = load_dataset(&data).unwrap();
    let spec = small_spec();
    let mut cfg = StageConfig::new(StageId::Viti, &data, dir.path().join("o"), 1);
    cfg.batch_size = 2;
    let seeds = SeedStreams::new(8);
    let (model, _) = stage_model(&spec, &cfg, &seeds).unwrap();
    let ctx = batch_context(&model, &cfg, seeds);
    let a = build_batch(&ctx, &samples, 5).unwrap();
    assert_eq!(a, build_batch(&ctx, &samples, 5).unwrap());
    assert_ne!(a, build_batch(&ctx, &samples, 6).unwrap());
    let shape = spec.latent_shape(8, 32, 24).unwrap();
    for item in &a.items {
        assert_eq!(item.fused.dim(), shape.dims());
        assert_eq!(item.noise.dim(), shape.dims());
        assert!(item.timestep < spec.schedule.num_timesteps);
        assert!(item.inputs.garment.is_some() && item.inputs.pose.is_some());
        assert!(item.inputs.text.nrows() > 0);
    }
}

#[test]
fn samples_without_garment_pixels_are_rejected_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 1);
    let mut samples = load_dataset(&data).unwrap();
    let blank = Sample {
        id: "blank".into(),
        labels: Some(Array3::zeros((8, 32, 24))),
        video: Video::constant(8, 32, 24, 0.0).unwrap(),
        ..samples[0].clone()
    };
    samples = vec![blank];
    let spec = small_spec();
    let cfg = StageConfig::new(StageId::Stage3, &data, dir.path().join("o"), 1);
    let seeds = SeedStreams::new(0);
    let (model, _) = stage_model(&spec, &cfg, &seeds).unwrap();
    let ctx = batch_context(&model, &cfg, seeds);
    let batch = build_batch(&ctx, &samples, 0).unwrap();
    assert!(batch.items.is_empty());
    assert_eq!(batch.rejected, vec!["blank".to_string()]);
}
