//! `key = value` run configuration with command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tenproj_core::JacobianMode;
use tenproj_nn::data::DEFAULT_VAL_FRACTION;
use tenproj_nn::optim::{DEFAULT_DELTA, DEFAULT_LR, DEFAULT_RHO};
use tenproj_nn::{model1_tp, model2_avgpool, parse_model_spec, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Gradcheck,
    Selftest,
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Command::Train),
            "eval" => Ok(Command::Eval),
            "gradcheck" => Ok(Command::Gradcheck),
            "selftest" => Ok(Command::Selftest),
            _ => Err("expected one of train, eval, gradcheck, selftest".into()),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Gradcheck => "gradcheck",
            Command::Selftest => "selftest",
        })
    }
}

/// Which network to build.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelChoice {
    Model1Tp,
    Model2AvgPool,
    /// A model spec file in the text format of [`parse_model_spec`].
    SpecFile(PathBuf),
}

impl FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "" => Err("empty model name".into()),
            "model1_tp" => Ok(ModelChoice::Model1Tp),
            "model2_avgpool" => Ok(ModelChoice::Model2AvgPool),
            path => Ok(ModelChoice::SpecFile(PathBuf::from(path))),
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelChoice::Model1Tp => f.write_str("model1_tp"),
            ModelChoice::Model2AvgPool => f.write_str("model2_avgpool"),
            ModelChoice::SpecFile(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice (first on line {first})")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("{origin}: key `{key}`: invalid value `{value}`: {reason}")]
    Value {
        origin: String,
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key `{key}` for `{command}`")]
    Missing { key: &'static str, command: Command },
    #[error("cannot read model spec {path}: {reason}")]
    Model { path: PathBuf, reason: String },
}

/// Every setting of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub data_dir: PathBuf,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub model: Option<ModelChoice>,
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub seed: u64,
    pub trials: usize,
    pub lr: f64,
    pub rho: f64,
    pub delta: f64,
    /// `None` keeps the value from the model spec.
    pub eps: Option<f64>,
    /// `None` keeps the value from the model spec.
    pub jacobian_mode: Option<JacobianMode>,
    pub val_fraction: f64,
    pub train_limit: Option<usize>,
    pub val_limit: Option<usize>,
    pub summary_epochs: Vec<usize>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub gradcheck_seeds: usize,
    /// When false the `seconds` column is written as 0 so that metrics
    /// files depend only on the seed.
    pub wall_clock: bool,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            data_dir: PathBuf::from("data/fashion-mnist"),
            train_images: PathBuf::from("train-images-idx3-ubyte.gz"),
            train_labels: PathBuf::from("train-labels-idx1-ubyte.gz"),
            test_images: PathBuf::from("t10k-images-idx3-ubyte.gz"),
            test_labels: PathBuf::from("t10k-labels-idx1-ubyte.gz"),
            model: None,
            epochs: 15,
            batch_size: 100,
            eval_batch_size: 500,
            seed: 0,
            trials: 1,
            lr: DEFAULT_LR,
            rho: DEFAULT_RHO,
            delta: DEFAULT_DELTA,
            eps: None,
            jacobian_mode: None,
            val_fraction: DEFAULT_VAL_FRACTION,
            train_limit: None,
            val_limit: None,
            summary_epochs: vec![5, 10, 15],
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            gradcheck_seeds: 5,
            wall_clock: true,
        }
    }

    /// Data file path: absolute names are kept, relative ones are taken
    /// inside `data_dir`.
    pub fn data_path(&self, file: &Path) -> PathBuf {
        self.data_dir.join(file)
    }

    /// The model spec with the configured projection settings applied.
    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let choice = self.model.as_ref().ok_or(ConfigError::Missing {
            key: "model",
            command: self.command,
        })?;
        let mut spec = match choice {
            ModelChoice::Model1Tp => model1_tp(),
            ModelChoice::Model2AvgPool => model2_avgpool(),
            ModelChoice::SpecFile(path) => {
                let model_err = |reason: String| ConfigError::Model {
                    path: path.clone(),
                    reason,
                };
                let text = std::fs::read_to_string(path).map_err(|e| model_err(e.to_string()))?;
                parse_model_spec(&text).map_err(|e| model_err(e.to_string()))?
            }
        };
        if self.eps.is_some() || self.jacobian_mode.is_some() {
            let mut current = None;
            for l in &spec.layers {
                if let tenproj_nn::LayerSpec::TensorProjection { eps, jacobian_mode, .. } = l {
                    current = Some((*eps, *jacobian_mode));
                }
            }
            if let Some((eps, mode)) = current {
                spec = spec.with_projection_settings(self.eps.unwrap_or(eps), self.jacobian_mode.unwrap_or(mode));
            }
        }
        Ok(spec)
    }

    /// Checks ranges and the keys required by the command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let origin = "config";
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(value_err(origin, key, "0", "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("epochs", self.epochs)?;
        positive("batch_size", self.batch_size)?;
        positive("eval_batch_size", self.eval_batch_size)?;
        positive("trials", self.trials)?;
        positive("gradcheck_seeds", self.gradcheck_seeds)?;
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(value_err(origin, "val_fraction", &self.val_fraction.to_string(), "must lie in (0, 1)"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(value_err(origin, "lr", &self.lr.to_string(), "must be positive"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(value_err(origin, "rho", &self.rho.to_string(), "must lie in [0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(value_err(origin, "delta", &self.delta.to_string(), "must be positive"));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(value_err(origin, "eps", &e.to_string(), "must be positive"));
            }
        }
        if self.summary_epochs.contains(&0) {
            return Err(value_err(origin, "summary_epochs", "0", "epochs are numbered from 1"));
        }
        match self.command {
            Command::Train => {
                if self.model.is_none() {
                    return Err(ConfigError::Missing {
                        key: "model",
                        command: self.command,
                    });
                }
            }
            Command::Eval => {
                if self.model.is_none() {
                    return Err(ConfigError::Missing {
                        key: "model",
                        command: self.command,
                    });
                }
                if self.checkpoint.is_none() {
                    return Err(ConfigError::Missing {
                        key: "checkpoint",
                        command: self.command,
                    });
                }
            }
            Command::Gradcheck | Command::Selftest => {}
        }
        Ok(())
    }

    /// Sets `key` from its textual value; `origin` names where the value
    /// came from in error messages.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let err = |reason: &str| value_err(origin, key, value, reason);
        let uint = || value.parse::<usize>().map_err(|_| err("expected a non-negative integer"));
        let float = || {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err("expected a finite number"))
        };
        let limit = || -> Result<Option<usize>, ConfigError> {
            if value == "none" {
                Ok(None)
            } else {
                uint().map(Some)
            }
        };
        let path = || {
            if value.is_empty() {
                Err(err("expected a path"))
            } else {
                Ok(PathBuf::from(value))
            }
        };
        match key {
            "command" => self.command = value.parse().map_err(|e: String| err(&e))?,
            "data_dir" => self.data_dir = path()?,
            "train_images" => self.train_images = path()?,
            "train_labels" => self.train_labels = path()?,
            "test_images" => self.test_images = path()?,
            "test_labels" => self.test_labels = path()?,
            "model" => self.model = Some(value.parse().map_err(|e: String| err(&e))?),
            "epochs" => self.epochs = uint()?,
            "batch_size" => self.batch_size = uint()?,
            "eval_batch_size" => self.eval_batch_size = uint()?,
            "seed" => self.seed = value.parse().map_err(|_| err("expected a non-negative integer"))?,
            "trials" => self.trials = uint()?,
            "lr" => self.lr = float()?,
            "rho" => self.rho = float()?,
            "delta" => self.delta = float()?,
            "eps" => self.eps = Some(float()?),
            "jacobian_mode" => self.jacobian_mode = Some(value.parse().map_err(|_| err("expected exact or paper"))?),
            "val_fraction" => self.val_fraction = float()?,
            "train_limit" => self.train_limit = limit()?,
            "val_limit" => self.val_limit = limit()?,
            "summary_epochs" => {
                self.summary_epochs = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err("expected a comma-separated list of epochs"))?
            }
            "out_dir" => self.out_dir = path()?,
            "checkpoint" => self.checkpoint = Some(path()?),
            "gradcheck_seeds" => self.gradcheck_seeds = uint()?,
            "wall_clock" => {
                self.wall_clock = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(err("expected true or false")),
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }
}

fn value_err(origin: &str, key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Value {
        origin: origin.to_string(),
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

/// Parses a config file on top of the defaults for `command`. Blank lines
/// and text after `#` are ignored. Range checks are left to
/// [`RunConfig::validate`], which runs after overrides are applied.
pub fn parse_config_for(text: &str, command: Command) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::new(command);
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: content.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: content.to_string(),
            });
        }
        if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
                first: *first,
            });
        }
        seen.push((key.to_string(), line));
        cfg.set(key, value, &format!("line {line}")).map_err(|e| match e {
            ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line, key },
            other => other,
        })?;
    }
    Ok(cfg)
}

/// Parses a config file whose `command` key, if any, selects the command;
/// train is assumed otherwise.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_for(text, Command::Train)
}

/// Values given on the command line; each replaces the file value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub train_limit: Option<usize>,
    pub val_limit: Option<usize>,
    pub model: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub jacobian_mode: Option<JacobianMode>,
    pub checkpoint: Option<PathBuf>,
    /// Extra `key=value` pairs.
    pub set: Vec<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.train_limit {
            cfg.train_limit = Some(v);
        }
        if let Some(v) = self.val_limit {
            cfg.val_limit = Some(v);
        }
        if let Some(v) = &self.model {
            cfg.set("model", v, "--model")?;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &self.data_dir {
            cfg.data_dir = v.clone();
        }
        if let Some(v) = self.jacobian_mode {
            cfg.jacobian_mode = Some(v);
        }
        if let Some(v) = &self.checkpoint {
            cfg.checkpoint = Some(v.clone());
        }
        for pair in &self.set {
            let Some((k, v)) = pair.split_once('=') else {
                return Err(value_err("--set", pair, pair, "expected key=value"));
            };
            let (k, v) = (k.trim(), v.trim());
            cfg.set(k, v, "--set").map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => value_err("--set", &key, v, "unknown key"),
                other => other,
            })?;
        }
        Ok(())
    }
}

/// Defaults, then the optional file, then overrides; the result is
/// validated. The command always comes from the caller.
pub fn resolve(command: Command, file_text: Option<&str>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = match file_text {
        Some(text) => parse_config_for(text, command)?,
        None => RunConfig::new(command),
    };
    cfg.command = command;
    overrides.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}
