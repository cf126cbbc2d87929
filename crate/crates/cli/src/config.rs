use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use viti_core::model::ModelSpec;
use viti_core::training::{DatasetManifest, StageConfig, StageId};
use viti_core::{Error, Result};

/// Environment variable that overrides `paths.out_dir`.
pub const OUT_DIR_ENV: &str = "VITI_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Paths {
    /// Root for stage outputs; defaults to `out` next to the config file.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Top-level run file.
///
/// Relative paths are resolved against the config file's directory, stage
/// outputs against `out_dir`. A stage without `init_checkpoint` starts from
/// the previous stage's output (the first stage starts fresh).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub stages: Vec<StageConfig>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base, std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Makes every path absolute and chains stage checkpoints.
    pub fn resolve_paths(&mut self, base: &Path, out_override: Option<PathBuf>) {
        let out = resolve(base, &out_override.or(self.paths.out_dir.clone()).unwrap_or_else(|| "out".into()));
        self.paths.out_dir = Some(out.clone());
        let mut previous: Option<PathBuf> = None;
        for (i, stage) in self.stages.iter_mut().enumerate() {
            stage.dataset = resolve(base, &stage.dataset);
            stage.output = if stage.output.as_os_str().is_empty() {
                out.join(format!("stage_{i}_{}", stage.stage.as_str()))
            } else {
                resolve(&out, &stage.output)
            };
            stage.init_checkpoint = match &stage.init_checkpoint {
                Some(p) => Some(resolve(base, p)),
                None => previous.clone(),
            };
            previous = Some(stage.output.clone());
        }
    }

    /// Everything that can be checked before compute: model capabilities,
    /// stage flags, stage ordering and dataset manifests.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.stages.is_empty() {
            return Err(Error::Config("run config lists no stages".into()));
        }
        for (i, stage) in self.stages.iter().enumerate() {
            stage.validate_flags()?;
            let produced_here = i > 0 && stage.init_checkpoint.as_ref() == Some(&self.stages[i - 1].output);
            if produced_here {
                let from = self.stages[i - 1].stage;
                if stage.stage == StageId::Viti && from < StageId::Stage3 {
                    return Err(Error::Config(format!(
                        "the viti stage must start from a stage-3 checkpoint, but it follows stage {}",
                        from.as_str()
                    )));
                }
            } else {
                stage.validate_init()?;
            }
            let (manifest, _) = DatasetManifest::read(&stage.dataset)?;
            if manifest.records.is_empty() {
                return Err(Error::Config(format!("dataset {} has no records", stage.dataset.display())));
            }
        }
        Ok(())
    }
}
