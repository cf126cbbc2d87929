//! Multi-stage training: datasets, batch assembly, freeze policies and the
//! optimiser loop.

mod batch;
mod data;
mod run;
mod stage;
pub mod synth;

pub use batch::{build_batch, prepare_item, Batch, BatchContext, BatchItem};
pub use data::{load_dataset, DatasetManifest, Sample, SampleRecord, SegmentationRef, DATASET_MANIFEST};
pub use run::{
    batch_context, batch_loss, item_loss, read_metrics, run_stage, stage_model, MetricsRow, StageOutcome,
    DIAGNOSTIC_DIR, METRICS_FILE,
};
pub use stage::{adapter_freeze_policy, is_adapter_param, FreezePolicy, LrSchedule, StageConfig, StageId};
