use std::fs;
use std::path::{Path, PathBuf};

use radar_fewshot::episode::{Protocol, SplitSpec, TrainConfig};
use radar_fewshot::fewshot::ModelConfig;
use radar_fewshot::radar::ChirpConfig;
use radar_fewshot::synth::SynthSpec;
use radar_fewshot::{Error, Result};
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

/// Evaluation protocols: one `n_way`-way row per entry of `shots`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_way: usize,
    pub shots: Vec<usize>,
    pub queries: usize,
    pub episodes: usize,
    /// `"test"` (held-out aspects) or `"train"` (training aspects).
    pub split: String,
    /// Optional per-scenario breakdown: `"subject"` or `"distance"`.
    pub scenario: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_way: 3,
            shots: vec![1, 5, 10],
            queries: 15,
            episodes: 600,
            split: "test".into(),
            scenario: None,
        }
    }
}

impl EvalConfig {
    pub fn protocols(&self) -> Vec<Protocol> {
        self.shots.iter().map(|&k| Protocol::new(self.n_way, k, self.queries)).collect()
    }
}

/// Everything a command needs. Written to `run_config.toml` in every output
/// directory, so a run can be repeated with `--config <that file>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Dataset directory for `train` and `eval`.
    pub data: Option<PathBuf>,
    /// Checkpoint evaluated by `eval`; absent means an untrained model.
    pub checkpoint: Option<PathBuf>,
    pub radar: ChirpConfig,
    pub synth: SynthSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: None,
            data: None,
            checkpoint: None,
            radar: ChirpConfig::default(),
            synth: SynthSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize run config: {e}")))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join(RUN_CONFIG_FILE);
        fs::write(&path, self.to_toml()?).map_err(|e| Error::Io { path, source: e })
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory; pass --out".into()))
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset directory; pass --data".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_exact() {
        let mut cfg = RunConfig { out: Some("runs/a".into()), ..RunConfig::default() };
        cfg.synth.noiseless = true;
        cfg.synth.distances = vec![1.2, 2.4];
        cfg.model.input.crop = Some(radar_fewshot::fewshot::CropSpec {
            range_bins: 64,
            doppler_bins: 128,
        });
        cfg.eval.scenario = Some("distance".into());
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_class_lists_roster() {
        let err = toml::from_str::<RunConfig>("[synth]\nclasses = [\"jump\"]\n").unwrap_err();
        assert!(err.to_string().contains("wave_right_hand"), "{err}");
    }
}
