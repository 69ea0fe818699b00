//! TOML experiment configuration.
//!
//! One file can hold any subset of the three sections; each subcommand reads
//! its own section and rejects configs that lack it. Unknown keys are
//! errors, so typos fail fast instead of silently using defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use arclr_core::bench::SchedulerSpec;
use arclr_core::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: u32,
    pub datagen: Option<DatagenSection>,
    pub controller: Option<ControllerSection>,
    pub benchmark: Option<BenchmarkSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenSection {
    pub tasks: Vec<String>,
    pub runs_per_task: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Optional fixed segment length; omit to draw n uniformly from [1, 10].
    pub n: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub batch_size: Option<usize>,
    pub split: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub tasks: Vec<String>,
    pub schedulers: Vec<SchedulerSpec>,
    pub lr0: Vec<f64>,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub out_dir: PathBuf,
    /// Controller weights; required when a scheduler of kind "arc" appears.
    pub weights: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    if !path.exists() {
        return Err(Error::usage(format!("config file {} does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path)?;
    let config: ConfigFile = toml::from_str(&text)
        .map_err(|e| Error::usage(format!("invalid config {}: {e}", path.display())))?;
    if config.version != CONFIG_VERSION {
        return Err(Error::usage(format!(
            "unsupported config version {} (expected {CONFIG_VERSION})",
            config.version
        )));
    }
    Ok(config)
}

impl ConfigFile {
    pub fn datagen(&self) -> Result<&DatagenSection> {
        self.datagen
            .as_ref()
            .ok_or_else(|| Error::usage("config has no [datagen] section"))
    }

    pub fn controller(&self) -> Result<&ControllerSection> {
        self.controller
            .as_ref()
            .ok_or_else(|| Error::usage("config has no [controller] section"))
    }

    pub fn benchmark(&self) -> Result<&BenchmarkSection> {
        self.benchmark
            .as_ref()
            .ok_or_else(|| Error::usage("config has no [benchmark] section"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn full_config_parses() {
        let f = write_config(
            r#"
version = 1

[datagen]
tasks = ["quad-basin", "logit-blobs"]
runs_per_task = 5
seed = 7
out = "out/data.jsonl"
n = 3

[controller]
data = "out/data.jsonl"
out = "out/weights.json"
seed = 7
epochs = 60

[benchmark]
tasks = ["quad-ridge"]
lr0 = [1e-4, 1e-3]
seeds = [1, 2, 3]
horizon = 30
out_dir = "out/bench"
weights = "out/weights.json"

[[benchmark.schedulers]]
kind = "blr"

[[benchmark.schedulers]]
kind = "ccd"
t0 = 14
t_mult = 2

[[benchmark.schedulers]]
kind = "ed"
gamma = 0.96

[[benchmark.schedulers]]
kind = "arc"
invocations = 10
"#,
        );
        let config = load_config(f.path()).unwrap();
        assert_eq!(config.datagen().unwrap().tasks.len(), 2);
        assert_eq!(config.controller().unwrap().epochs, Some(60));
        let bench = config.benchmark().unwrap();
        assert_eq!(bench.schedulers.len(), 4);
        assert_eq!(bench.schedulers[1].label(), "ccd");
    }

    #[test]
    fn missing_file_is_usage_error() {
        let r = load_config(Path::new("/nonexistent/config.toml"));
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let f = write_config("version = 1\nbogus = true\n");
        assert!(matches!(load_config(f.path()), Err(Error::Usage(_))));
    }

    #[test]
    fn wrong_version_is_usage_error() {
        let f = write_config("version = 99\n");
        assert!(matches!(load_config(f.path()), Err(Error::Usage(_))));
    }

    #[test]
    fn missing_section_is_usage_error() {
        let f = write_config("version = 1\n");
        let config = load_config(f.path()).unwrap();
        assert!(matches!(config.datagen(), Err(Error::Usage(_))));
        assert!(matches!(config.controller(), Err(Error::Usage(_))));
        assert!(matches!(config.benchmark(), Err(Error::Usage(_))));
    }
}
