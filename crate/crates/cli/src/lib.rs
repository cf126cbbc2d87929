//! Command-line front end: `train`, `infer`, `eval`, `maskgen` and
//! `data-synth`.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use viti_core::diffusion::LossForm;
use viti_core::masking::{MaskSpec, MaskStrategy};
use viti_core::training::synth::SynthConfig;
use viti_core::Error;

pub use commands::{cmd_data_synth, cmd_eval, cmd_infer, cmd_maskgen, cmd_train, EvalArgs, InferArgs, MaskgenArgs, TrainOverrides};
pub use config::{RunConfig, OUT_DIR_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "viti", version, about = "Video try-on inpainting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every stage of a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the step count of every stage.
        #[arg(long)]
        steps: Option<usize>,
        /// Garment cross-attention scale for the viti stage.
        #[arg(long)]
        garment_scale: Option<f64>,
        #[arg(long, value_parser = parse_loss_form)]
        loss_form: Option<LossForm>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Inpaint a clip with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long)]
        garment: Option<PathBuf>,
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        garment_scale: Option<f64>,
        /// Classifier-free guidance weight (off by default).
        #[arg(long)]
        guidance: Option<f64>,
        /// Output directory (frames) or file (with --raw).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a raw tensor file instead of PNG frames.
        #[arg(long)]
        raw: bool,
    },
    /// Compare generated clips with references.
    Eval {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long, default_value = "gradient_stub")]
        perceptual: String,
        #[arg(long, default_value = "pooled_stats")]
        features: String,
        #[arg(long, value_parser = parse_loss_form, default_value = "mean_masked")]
        loss_form: LossForm,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one generated mask clip.
    Maskgen {
        #[arg(long, value_parser = parse_strategy)]
        strategy: MaskStrategy,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 24)]
        width: usize,
        #[arg(long, default_value_t = 0.2)]
        min_size: f64,
        #[arg(long, default_value_t = 0.6)]
        max_size: f64,
        #[arg(long, default_value_t = 0.0)]
        invert_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long = "label")]
        label_values: Vec<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic moving-shape dataset.
    DataSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        clips: usize,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 24)]
        width: usize,
        #[arg(long, default_value_t = 16)]
        garment_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_loss_form(s: &str) -> Result<LossForm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<MaskStrategy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown strategy `{s}`"))
}

fn out_path(explicit: Option<PathBuf>, default: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join(default)
    })
}

/// Machine-readable error record printed on stderr.
pub fn error_record(err: &Error) -> serde_json::Value {
    let mut record = serde_json::json!({ "error": err.kind(), "message": err.to_string() });
    if let Error::Record { record: id, .. } = err {
        record["record"] = serde_json::Value::String(id.clone());
    }
    record
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

/// Executes a parsed command, printing results on stdout.
pub fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            config,
            seed,
            steps,
            garment_scale,
            loss_form,
            workers,
        } => {
            let outcomes = cmd_train(
                &config,
                &TrainOverrides {
                    seed,
                    steps,
                    garment_scale,
                    loss_form,
                    workers,
                },
            )?;
            for o in outcomes {
                println!(
                    "{}",
                    serde_json::json!({
                        "checkpoint": o.checkpoint,
                        "metrics": o.metrics,
                        "steps": o.steps_run,
                        "rejected": o.rejected,
                        "last": o.last,
                    })
                );
            }
        }
        Command::Infer {
            checkpoint,
            video,
            mask,
            prompt,
            garment,
            pose,
            steps,
            seed,
            garment_scale,
            guidance,
            out,
            raw,
        } => {
            let path = cmd_infer(&InferArgs {
                checkpoint,
                video,
                mask,
                prompt,
                garment,
                pose,
                steps,
                seed,
                garment_scale,
                guidance,
                out: out_path(out, "infer_out"),
                raw,
            })?;
            println!("{}", serde_json::json!({ "output": path }));
        }
        Command::Eval {
            real,
            generated,
            masks,
            perceptual,
            features,
            loss_form,
            out,
        } => {
            let path = cmd_eval(&EvalArgs {
                real,
                generated,
                masks,
                perceptual,
                features,
                loss_form,
                out: out_path(out, "eval_report.ndjson"),
            })?;
            println!("{}", serde_json::json!({ "report": path }));
        }
        Command::Maskgen {
            strategy,
            frames,
            height,
            width,
            min_size,
            max_size,
            invert_prob,
            seed,
            labels,
            label_values,
            out,
        } => {
            let spec = MaskSpec::new(strategy)
                .with_size_range(min_size, max_size)
                .with_invert_prob(invert_prob)
                .with_seed(seed);
            spec.validate()?;
            let path = cmd_maskgen(&MaskgenArgs {
                spec,
                frames,
                height,
                width,
                labels,
                label_values,
                out,
            })?;
            println!("{}", serde_json::json!({ "mask": path }));
        }
        Command::DataSynth {
            out,
            clips,
            frames,
            height,
            width,
            garment_size,
            seed,
        } => {
            let path = cmd_data_synth(
                &out,
                &SynthConfig {
                    clips,
                    frames,
                    height,
                    width,
                    garment_size,
                    seed,
                },
            )?;
            println!("{}", serde_json::json!({ "dataset": path }));
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            exit_code(&e)
        }
    }
}
