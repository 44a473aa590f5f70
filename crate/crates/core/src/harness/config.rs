use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::activations::ActivationKind;
use crate::data::{load_cifar_bin, synth_teacher_dataset, CifarVariant, Dataset, ImageSet, TeacherSpec};
use crate::nn::{LayerSpec, NetworkSpec, NnError, Shape, TrainConfig};
use crate::search::SearchConfig;

/// Default output root when neither the config nor the CLI names a directory.
pub const OUTPUT_ROOT_ENV: &str = "HYBRIDNET_OUTPUT_ROOT";
/// Fallback MNIST directory when the config leaves `data.dir` unset.
pub const MNIST_DIR_ENV: &str = "HYBRIDNET_MNIST_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TrainOnly,
    AnalyzeCurve,
    #[default]
    FullSearch,
    EpSweep,
}

/// Either `builtin = "lenet5"` or an inline `input_shape` plus `layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub builtin: Option<String>,
    pub input_shape: Option<Shape>,
    pub layers: Option<Vec<LayerSpec>>,
}

impl NetworkConfig {
    pub fn builtin(name: &str) -> Self {
        NetworkConfig {
            builtin: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn resolve(&self) -> Result<NetworkSpec, HarnessError> {
        let spec = match (&self.builtin, &self.input_shape, &self.layers) {
            (Some(name), None, None) => NetworkSpec::builtin(name).ok_or_else(|| {
                HarnessError::Config(format!(
                    "network.builtin: unknown network `{name}` (known: {})",
                    NetworkSpec::BUILTINS.join(", ")
                ))
            })?,
            (None, Some(shape), Some(layers)) => NetworkSpec {
                input_shape: *shape,
                layers: layers.clone(),
            },
            _ => {
                return Err(HarnessError::Config(
                    "network: give either `builtin` or both `input_shape` and `layers`".into(),
                ))
            }
        };
        spec.validate().map_err(|e| match e {
            NnError::Config(m) => HarnessError::Config(format!("network: {m}")),
            other => HarnessError::Config(format!("network: {other}")),
        })?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Mnist {
        dir: Option<PathBuf>,
        train_limit: Option<usize>,
        eval_limit: Option<usize>,
        validation: Option<usize>,
        #[serde(default)]
        standardize: bool,
    },
    Synthetic {
        teacher: TeacherSpec,
        #[serde(default)]
        seed: u64,
    },
    Cifar {
        variant: CifarVariant,
        train_files: Vec<PathBuf>,
        eval_file: PathBuf,
        train_limit: Option<usize>,
        eval_limit: Option<usize>,
        validation: Option<usize>,
        #[serde(default)]
        standardize: bool,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Mnist {
            dir: None,
            train_limit: None,
            eval_limit: None,
            validation: None,
            standardize: false,
        }
    }
}

fn default_mnist_dir() -> PathBuf {
    std::env::var_os(MNIST_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

impl DataConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        let cfg = |m: String| Err(HarnessError::Config(m));
        match self {
            DataConfig::Mnist { train_limit, eval_limit, .. } | DataConfig::Cifar { train_limit, eval_limit, .. } => {
                if *train_limit == Some(0) {
                    return cfg("data.train_limit: must be positive".into());
                }
                if *eval_limit == Some(0) {
                    return cfg("data.eval_limit: must be positive".into());
                }
                if let DataConfig::Cifar { train_files, .. } = self {
                    if train_files.is_empty() {
                        return cfg("data.train_files: must list at least one batch file".into());
                    }
                }
                Ok(())
            }
            DataConfig::Synthetic { teacher, .. } => {
                if teacher.input_dim == 0 {
                    return cfg("data.teacher.input_dim: must be positive".into());
                }
                if teacher.classes < 2 {
                    return cfg("data.teacher.classes: need at least 2".into());
                }
                if teacher.train_count == 0 || teacher.eval_count == 0 {
                    return cfg("data.teacher: train_count and eval_count must be positive".into());
                }
                Ok(())
            }
        }
    }

    /// Reads or generates the dataset. Relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<Dataset, HarnessError> {
        let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let finish = |d: Dataset, validation: &Option<usize>, standardize: bool| -> Result<Dataset, HarnessError> {
            let d = match validation {
                Some(n) => d.with_validation(*n)?,
                None => d,
            };
            Ok(if standardize { d.standardized() } else { d })
        };
        match self {
            DataConfig::Mnist {
                dir,
                train_limit,
                eval_limit,
                validation,
                standardize,
            } => {
                let dir = dir.as_deref().map(at).unwrap_or_else(default_mnist_dir);
                let d = Dataset::mnist(&dir, *train_limit, *eval_limit)?;
                finish(d, validation, *standardize)
            }
            DataConfig::Synthetic { teacher, seed } => Ok(synth_teacher_dataset(teacher, *seed)?),
            DataConfig::Cifar {
                variant,
                train_files,
                eval_file,
                train_limit,
                eval_limit,
                validation,
                standardize,
            } => {
                let mut train: Option<ImageSet> = None;
                for f in train_files {
                    let part = load_cifar_bin(&at(f), *variant)?;
                    match &mut train {
                        None => train = Some(part),
                        Some(t) => {
                            t.pixels.extend(part.pixels);
                            t.labels.extend(part.labels);
                        }
                    }
                }
                let mut train = train.expect("validated non-empty");
                let mut eval = load_cifar_bin(&at(eval_file), *variant)?;
                if let Some(n) = train_limit {
                    train.truncate(*n);
                }
                if let Some(n) = eval_limit {
                    eval.truncate(*n);
                }
                let d = Dataset::from_parts(train, eval, variant.classes())?;
                finish(d, validation, *standardize)
            }
        }
    }
}

/// One experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub search: SearchConfig,
    pub output_dir: Option<PathBuf>,
    /// Evaluation points for `ep_sweep`.
    #[serde(default)]
    pub ep_list: Vec<usize>,
    /// Curve file for `analyze_curve`.
    pub curve: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every nested invariant and returns the resolved network.
    pub fn validate(&self) -> Result<NetworkSpec, HarnessError> {
        let spec = match self.mode {
            Mode::AnalyzeCurve => {
                if self.curve.is_none() {
                    return Err(HarnessError::Config("curve: required for curve analysis".into()));
                }
                self.search
                    .ag
                    .validate()
                    .map_err(|e| HarnessError::Config(format!("search.ag: {e}")))?;
                return Ok(NetworkSpec::builtin("mlp2").expect("builtin"));
            }
            _ => self.network.resolve()?,
        };
        self.data.validate()?;
        self.train.validate()?;
        if matches!(self.mode, Mode::FullSearch | Mode::EpSweep) {
            self.search.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            for i in spec.searchable_layers() {
                let l = &spec.layers[i];
                if l.activation != Some(ActivationKind::RELU) || l.dropout_rate() != 0.0 {
                    return Err(HarnessError::Config(format!(
                        "network.layers[{i}]: the search starts from ReLU without dropout"
                    )));
                }
            }
        }
        if self.mode == Mode::EpSweep {
            if self.ep_list.is_empty() {
                return Err(HarnessError::Config("ep_list: must not be empty".into()));
            }
            for (i, &ep) in self.ep_list.iter().enumerate() {
                if ep == 0 || ep > self.train.epochs {
                    return Err(HarnessError::Config(format!(
                        "ep_list[{i}]: {ep} outside 1..={}",
                        self.train.epochs
                    )));
                }
            }
        }
        if let Some(classes) = match &self.data {
            DataConfig::Mnist { .. } => Some(10),
            DataConfig::Cifar { variant, .. } => Some(variant.classes()),
            DataConfig::Synthetic { teacher, .. } => Some(teacher.classes),
        } {
            if classes > spec.classes() {
                return Err(HarnessError::Config(format!(
                    "network: outputs {} classes, data has {classes}",
                    spec.classes()
                )));
            }
        }
        Ok(spec)
    }
}
