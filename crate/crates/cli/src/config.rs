//! Run configuration, read from TOML.
//!
//! Every section and field is optional; missing values take the defaults
//! below. Unknown keys are rejected so typos surface as configuration
//! errors.
//!
//! ```toml
//! version = 1
//! seed = 0
//!
//! [data]
//! dir = "recordings"      # omit to generate synthetic recordings
//! method = "ps"           # ps | loso | aos
//! target = "A"
//! val_fraction = 0.2
//!
//! [synth]
//! n_subjects = 3
//! n_sessions = 3
//! recordings_per_class = 2
//! separability = 1.0
//!
//! [preprocess]
//! window_start_s = 0.25
//! window_dur_s = 1.0
//! downsample_factor = 10
//!
//! [model]
//! arch = "cnn"            # cnn | sepcnn
//! num_blocks = 3
//!
//! [train]
//! epochs_max = 100
//! patience = 10
//! bs = 32
//! lr = 5.082e-4
//! bits = 6                # 0 trains in float only
//! fp32_baseline = true
//!
//! [accel]
//! device = "xc7s25"
//! ping_pong = true
//! power_csv = "power.csv" # optional calibration rows
//! sim_samples = 1
//!
//! [search]
//! n_trials = 100
//! population = 20
//! jobs = 1
//! epochs_max = 100
//! patience = 10
//! fp32_baseline = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vibeswipe::accel::DeviceProfile;
use vibeswipe::dataio::{PreprocessConfig, SplitMethod, SynthSpec};
use vibeswipe::nn::{Arch, ModelConfig};
use vibeswipe::quant::check_bits;
use vibeswipe::rng;
use vibeswipe::trainer::TrainSpec;
use vibeswipe::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub data: DataSection,
    pub synth: SynthSection,
    pub preprocess: PreprocessConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub accel: AccelSection,
    pub search: SearchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            seed: 0,
            data: DataSection::default(),
            synth: SynthSection::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            accel: AccelSection::default(),
            search: SearchSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub method: SplitMethod,
    pub target: String,
    pub val_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { dir: None, method: SplitMethod::Ps, target: "A".into(), val_fraction: 0.2 }
    }
}

/// Synthetic recordings; the generator seed derives from the root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_subjects: usize,
    pub n_sessions: u8,
    pub recordings_per_class: u8,
    pub separability: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { n_subjects: 3, n_sessions: 3, recordings_per_class: 2, separability: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arch: Arch,
    pub num_blocks: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { arch: Arch::Cnn, num_blocks: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs_max: usize,
    pub patience: usize,
    pub bs: usize,
    pub lr: f64,
    pub bits: u32,
    pub fp32_baseline: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { epochs_max: 100, patience: 10, bs: 32, lr: 5.082e-4, bits: 6, fp32_baseline: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelSection {
    pub device: String,
    pub ping_pong: bool,
    pub power_csv: Option<PathBuf>,
    pub sim_samples: usize,
}

impl Default for AccelSection {
    fn default() -> Self {
        AccelSection { device: "xc7s25".into(), ping_pong: true, power_csv: None, sim_samples: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub n_trials: usize,
    pub population: usize,
    pub jobs: usize,
    pub epochs_max: usize,
    pub patience: usize,
    pub fp32_baseline: bool,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection { n_trials: 100, population: 20, jobs: 1, epochs_max: 100, patience: 10, fp32_baseline: false }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version)));
        }
        if self.train.bits != 0 {
            check_bits(self.train.bits)?;
        }
        self.train_spec(0).validate()?;
        ModelConfig::new(self.model.arch, self.model.num_blocks)
            .with_input_len(self.preprocess.sample_len(vibeswipe::dataio::SAMPLE_RATE))
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        DeviceProfile::by_name(&self.accel.device).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.data.val_fraction > 0.0 && self.data.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction {} must lie in (0, 1)", self.data.val_fraction)));
        }
        if self.preprocess.downsample_factor == 0 {
            return Err(Error::Config("downsample_factor must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.synth.separability) {
            return Err(Error::Config(format!("separability {} outside [0, 1]", self.synth.separability)));
        }
        Ok(())
    }

    /// Canonical TOML of the resolved configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn derived_seed(&self, purpose: &str) -> u64 {
        rng::derive_seed(self.seed, &[rng::hash_str(purpose)])
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            seed: self.derived_seed("synth"),
            n_subjects: self.synth.n_subjects,
            n_sessions: self.synth.n_sessions,
            recordings_per_class: self.synth.recordings_per_class,
            separability: self.synth.separability,
        }
    }

    pub fn qat_bits(&self) -> Option<u32> {
        (self.train.bits != 0).then_some(self.train.bits)
    }

    pub fn train_spec(&self, seed: u64) -> TrainSpec {
        TrainSpec {
            epochs_max: self.train.epochs_max,
            patience: self.train.patience,
            bs: self.train.bs,
            lr: self.train.lr,
            seed,
            qat_bits: self.qat_bits(),
        }
    }

    pub fn dataset_name(&self) -> String {
        match &self.data.dir {
            Some(d) => d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| d.display().to_string()),
            None => "synthetic".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut c = RunConfig::default();
        c.data.dir = Some("x/y".into());
        c.model.arch = Arch::SepCnn;
        assert_eq!(RunConfig::parse(&c.canonical()).unwrap(), c);
        assert_ne!(c.sha256(), RunConfig::default().sha256());
    }

    #[test]
    fn rejects_bad_values() {
        for text in ["[train]\nbits = 5", "[model]\nnum_blocks = 9", "[accel]\ndevice = \"xc7a100t\"", "version = 2", "[data]\nmystery = 1"] {
            let err = RunConfig::parse(text).and_then(|c| c.validate()).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
    }
}
