//! The run configuration document: one strict TOML file per run.
//!
//! Parsing is strict — unknown keys are rejected with the parser's
//! line-precise message — and every omitted field takes a documented
//! default, so an empty document is a valid configuration. The only values
//! the command line may override are the seed (`--seed`) and the output
//! directory (`--out`); everything else lives in the document, which the
//! manifest snapshots verbatim for reproducibility.
//!
//! The optional `FSTA_REPORT_ROOT` environment variable is prefixed onto
//! relative output directories, letting a batch driver relocate every
//! run's reports without touching the documents.

use std::fmt;
use std::path::{Path, PathBuf};

use fsta_core::fsta::FusionMode;
use fsta_core::model::{resnet20_snn, snn_tiny, InputShape, ModelError, NetworkSpec};
use fsta_core::train::{OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

/// Timesteps used when neither the document nor a referenced network spec
/// chooses a value.
pub const DEFAULT_TIMESTEPS: usize = 4;

#[derive(Debug)]
pub enum ConfigError {
    Io { path: String, message: String },
    Parse { path: String, message: String },
    MissingPath { key: &'static str, path: String },
    MissingSection { key: &'static str, needed_by: &'static str },
    Invalid { message: String },
    Model(ModelError),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "{path}: {message}"),
            ConfigError::Parse { path, message } => write!(f, "{path}: {message}"),
            ConfigError::MissingPath { key, path } => {
                write!(f, "`{key}` refers to {path}, which does not exist")
            }
            ConfigError::MissingSection { key, needed_by } => {
                write!(f, "the `{needed_by}` command needs the `{key}` section")
            }
            ConfigError::Invalid { message } => write!(f, "{message}"),
            ConfigError::Model(e) => write!(f, "network spec: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        ConfigError::Model(e)
    }
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Catalog {
    #[default]
    SnnTiny,
    Resnet20Snn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Built-in architecture, used unless `spec_path` is given.
    pub catalog: Catalog,
    /// JSON file holding a full network spec, overriding the catalog.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec_path: Option<PathBuf>,
    /// Simulation length; `None` keeps a referenced spec's own value
    /// (catalog entries fall back to [`DEFAULT_TIMESTEPS`]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timesteps: Option<usize>,
}

impl NetworkSection {
    pub fn timesteps_or_default(&self) -> usize {
        self.timesteps.unwrap_or(DEFAULT_TIMESTEPS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FstaSection {
    /// Insert attention modules into the network before building it.
    pub enabled: bool,
    /// Spatial attention kernel extent (odd).
    pub kernel: usize,
    pub mode: FusionMode,
    /// Spiking-stage ordinals to follow with a module; empty means every
    /// spiking stage.
    pub placement: Vec<usize>,
}

impl Default for FstaSection {
    fn default() -> Self {
        FstaSection { enabled: false, kernel: 7, mode: FusionMode::Serial, placement: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub kind: OptimizerName,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            kind: OptimizerName::Sgd,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerSection {
    pub fn kind(&self) -> OptimizerKind {
        match self.kind {
            OptimizerName::Sgd => OptimizerKind::Sgd { momentum: self.momentum },
            OptimizerName::Adam => OptimizerKind::Adam {
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerSection,
    pub cosine_lr: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    pub timestep_loss: bool,
    pub augment: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainSection {
            epochs: base.epochs,
            batch_size: base.batch_size,
            lr: base.lr,
            weight_decay: base.weight_decay,
            optimizer: OptimizerSection::default(),
            cosine_lr: base.cosine_lr,
            grad_clip: base.grad_clip,
            timestep_loss: base.timestep_loss,
            augment: base.augment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    /// Joules per accumulate.
    pub e_ac: f64,
    /// Joules per multiply-accumulate.
    pub e_mac: f64,
    /// Direct count overrides: when both are set, the energy command skips
    /// inference and prices these totals as given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macs: Option<f64>,
    /// Test images to trace when counting from inference.
    pub samples: usize,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection { e_ac: 0.9e-12, e_mac: 4.6e-12, acs: None, macs: None, samples: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// Emit per-channel spectra instead of channel-averaged ones.
    pub per_channel: bool,
    /// Test images to trace.
    pub samples: usize,
    /// Checkpoint to load; a fresh seeded network is analyzed otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { per_channel: false, samples: 8, checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    /// `firing.csv` of the baseline run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<PathBuf>,
    /// `firing.csv` of the run measured against it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cifar10Options {
    /// Directory holding `data_batch_1.bin` … `data_batch_5.bin` and
    /// `test_batch.bin`.
    pub dir: PathBuf,
    /// Per-channel normalization constants on the [0,1] scale; computed
    /// from the training split when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerOptions {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Stripes varying along x (constant down each column).
    Vertical,
    /// Stripes varying along y.
    Horizontal,
    /// Superposition of both.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GratingsOptions {
    pub train_samples: usize,
    pub test_samples: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Stripe period in pixels.
    pub period: f64,
    /// Orientation classes, in label order.
    pub orientations: Vec<Orientation>,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for GratingsOptions {
    fn default() -> Self {
        GratingsOptions {
            train_samples: 64,
            test_samples: 32,
            height: 16,
            width: 16,
            channels: 1,
            period: 4.0,
            orientations: vec![Orientation::Vertical, Orientation::Horizontal],
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoclassOptions {
    pub train_samples: usize,
    pub test_samples: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Gaussian blobs per image.
    pub blobs: usize,
    /// Blob standard deviation in pixels.
    pub blob_sigma: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TwoclassOptions {
    fn default() -> Self {
        TwoclassOptions {
            train_samples: 512,
            test_samples: 256,
            height: 12,
            width: 12,
            channels: 1,
            blobs: 3,
            blob_sigma: 1.2,
            noise: 0.05,
            seed: 0,
        }
    }
}

/// Where images and labels come from. In the document this is a table named
/// after the kind, e.g. `[dataset.synthetic_twoclass]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetDescriptor {
    Cifar10Binary(Cifar10Options),
    TensorContainer(ContainerOptions),
    SyntheticGratings(GratingsOptions),
    SyntheticTwoclass(TwoclassOptions),
}

impl DatasetDescriptor {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DatasetDescriptor::Cifar10Binary(_) => "cifar10_binary",
            DatasetDescriptor::TensorContainer(_) => "tensor_container",
            DatasetDescriptor::SyntheticGratings(_) => "synthetic_gratings",
            DatasetDescriptor::SyntheticTwoclass(_) => "synthetic_twoclass",
        }
    }
}

// ---------------------------------------------------------------------------
// The document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; relative paths go under `FSTA_REPORT_ROOT` when
    /// that variable is set.
    pub out: PathBuf,
    pub network: NetworkSection,
    pub fsta: FstaSection,
    pub train: TrainSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetDescriptor>,
    pub energy: EnergySection,
    pub spectrum: SpectrumSection,
    pub eval: EvalSection,
    pub compare: CompareSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("run"),
            network: NetworkSection::default(),
            fsta: FstaSection::default(),
            train: TrainSection::default(),
            dataset: None,
            energy: EnergySection::default(),
            spectrum: SpectrumSection::default(),
            eval: EvalSection::default(),
            compare: CompareSection::default(),
        }
    }
}

/// Which subcommand a config is being validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Train,
    Eval,
    Spectrum,
    Energy,
    Compare,
    GenData,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Train => "train",
            CommandKind::Eval => "eval",
            CommandKind::Spectrum => "spectrum",
            CommandKind::Energy => "energy",
            CommandKind::Compare => "compare",
            CommandKind::GenData => "gen-data",
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => {
            ConfigError::Parse { path: path.display().to_string(), message }
        }
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: "<string>".to_string(),
        message: e.to_string(),
    })
}

pub fn serialize_config(config: &RunConfig) -> Result<String, ConfigError> {
    toml::to_string(config).map_err(|e| ConfigError::Invalid { message: e.to_string() })
}

impl RunConfig {
    /// Resolve the effective output directory, honouring `FSTA_REPORT_ROOT`
    /// for relative paths.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os("FSTA_REPORT_ROOT") {
            Some(root) if self.out.is_relative() => PathBuf::from(root).join(&self.out),
            _ => self.out.clone(),
        }
    }

    /// Cross-field checks plus existence of every referenced file, scoped
    /// to what `command` will actually touch.
    pub fn validate(&self, command: CommandKind) -> Result<(), ConfigError> {
        let exists = |key: &'static str, path: &Path| -> Result<(), ConfigError> {
            if path.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath { key, path: path.display().to_string() })
            }
        };

        if self.fsta.enabled && self.fsta.kernel % 2 == 0 {
            return Err(ConfigError::Invalid {
                message: format!("fsta.kernel must be odd, got {}", self.fsta.kernel),
            });
        }

        let needs_network = matches!(
            command,
            CommandKind::Train | CommandKind::Eval | CommandKind::Spectrum | CommandKind::Energy
        );
        if needs_network {
            if let Some(p) = &self.network.spec_path {
                exists("network.spec_path", p)?;
            }
        }

        let counts_given = self.energy.acs.is_some() && self.energy.macs.is_some();
        let needs_dataset = match command {
            CommandKind::Train | CommandKind::Eval | CommandKind::Spectrum | CommandKind::GenData => true,
            CommandKind::Energy => !counts_given,
            CommandKind::Compare => false,
        };
        if needs_dataset {
            let Some(dataset) = &self.dataset else {
                return Err(ConfigError::MissingSection { key: "dataset", needed_by: command.name() });
            };
            match dataset {
                DatasetDescriptor::Cifar10Binary(o) => exists("dataset.cifar10_binary.dir", &o.dir)?,
                DatasetDescriptor::TensorContainer(o) => {
                    exists("dataset.tensor_container.train_images", &o.train_images)?;
                    exists("dataset.tensor_container.train_labels", &o.train_labels)?;
                    exists("dataset.tensor_container.test_images", &o.test_images)?;
                    exists("dataset.tensor_container.test_labels", &o.test_labels)?;
                    if o.classes < 2 {
                        return Err(ConfigError::Invalid {
                            message: format!("tensor_container.classes must be ≥ 2, got {}", o.classes),
                        });
                    }
                }
                DatasetDescriptor::SyntheticGratings(o) => {
                    if o.orientations.is_empty() {
                        return Err(ConfigError::Invalid {
                            message: "synthetic_gratings.orientations must not be empty".into(),
                        });
                    }
                    if !(o.period > 0.0) {
                        return Err(ConfigError::Invalid {
                            message: format!("synthetic_gratings.period must be positive, got {}", o.period),
                        });
                    }
                }
                DatasetDescriptor::SyntheticTwoclass(o) => {
                    if !(o.blob_sigma > 0.0) {
                        return Err(ConfigError::Invalid {
                            message: format!(
                                "synthetic_twoclass.blob_sigma must be positive, got {}",
                                o.blob_sigma
                            ),
                        });
                    }
                }
            }
            if command == CommandKind::GenData
                && !matches!(
                    dataset,
                    DatasetDescriptor::SyntheticGratings(_) | DatasetDescriptor::SyntheticTwoclass(_)
                )
            {
                return Err(ConfigError::Invalid {
                    message: format!(
                        "gen-data materializes synthetic datasets only, got `{}`",
                        dataset.kind_name()
                    ),
                });
            }
        }

        match command {
            CommandKind::Eval => {
                let Some(ck) = &self.eval.checkpoint else {
                    return Err(ConfigError::MissingSection { key: "eval.checkpoint", needed_by: "eval" });
                };
                exists("eval.checkpoint", ck)?;
            }
            CommandKind::Spectrum | CommandKind::Energy => {
                if let Some(ck) = &self.spectrum.checkpoint {
                    exists("spectrum.checkpoint", ck)?;
                }
            }
            CommandKind::Compare => {
                let Some(base) = &self.compare.baseline else {
                    return Err(ConfigError::MissingSection { key: "compare.baseline", needed_by: "compare" });
                };
                let Some(cand) = &self.compare.candidate else {
                    return Err(ConfigError::MissingSection { key: "compare.candidate", needed_by: "compare" });
                };
                exists("compare.baseline", base)?;
                exists("compare.candidate", cand)?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            optimizer: self.train.optimizer.kind(),
            cosine_lr: self.train.cosine_lr,
            grad_clip: self.train.grad_clip,
            timestep_loss: self.train.timestep_loss,
            augment: self.train.augment,
            seed: self.seed,
        }
    }

    /// Materialize the network description for the given data geometry,
    /// applying the timestep override and any attention insertion.
    pub fn network_spec(&self, input: InputShape, classes: usize) -> Result<NetworkSpec, ConfigError> {
        let mut spec = match &self.network.spec_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                let loaded: NetworkSpec =
                    serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                if loaded.input != input {
                    return Err(ConfigError::Invalid {
                        message: format!(
                            "network spec expects input {:?}, dataset provides {:?}",
                            loaded.input, input
                        ),
                    });
                }
                let mut loaded = loaded;
                if let Some(t) = self.network.timesteps {
                    loaded.timesteps = t;
                }
                loaded
            }
            None => {
                let t = self.network.timesteps_or_default();
                match self.network.catalog {
                    Catalog::SnnTiny => snn_tiny(input, classes, t),
                    Catalog::Resnet20Snn => resnet20_snn(input, classes, t),
                }
            }
        };

        if self.fsta.enabled {
            let placement: Vec<usize> = if self.fsta.placement.is_empty() {
                (0..spec.spiking_stage_indices().len()).collect()
            } else {
                self.fsta.placement.clone()
            };
            spec = fsta_core::model::insert_fsta(&spec, &placement, self.fsta.kernel, self.fsta.mode)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}
