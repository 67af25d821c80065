//! Run configuration: decoding defaults, backend selection and the
//! `key = value` file format.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {message}")]
    BadValue { key: String, value: String, message: String },
    #[error("backend must be `builtin`, `copy`, `external:<http-url>` or `external:pipe:<command>`, got {0:?}")]
    Backend(String),
    #[error("cannot read config file: {0}")]
    Io(String),
}

/// Where revision candidates come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "snake_case")]
pub enum BackendSpec {
    Builtin,
    /// Echoes the input; a no-op baseline.
    Copy,
    Http(String),
    /// Command line of a child process speaking line-delimited JSON.
    Pipe(Vec<String>),
}

impl FromStr for BackendSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "builtin" {
            return Ok(Self::Builtin);
        }
        if s == "copy" {
            return Ok(Self::Copy);
        }
        let Some(rest) = s.strip_prefix("external:") else {
            return Err(ConfigError::Backend(s.into()));
        };
        if let Some(cmd) = rest.strip_prefix("pipe:") {
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if argv.is_empty() {
                return Err(ConfigError::Backend(s.into()));
            }
            return Ok(Self::Pipe(argv));
        }
        if rest.starts_with("http://") || rest.starts_with("https://") {
            return Ok(Self::Http(rest.into()));
        }
        Err(ConfigError::Backend(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub model: Option<PathBuf>,
    pub backend: BackendSpec,
    pub checker_url: Option<String>,
    pub corpus: Option<PathBuf>,
    pub port: u16,
    pub seed: u64,
    pub beam_size: usize,
    pub num_groups: usize,
    pub diversity_strength: f64,
    pub top_k: usize,
    pub ppl_factor: f64,
    pub context_tokens: usize,
    pub nucleus_p: f64,
    pub completions: usize,
    pub completion_max_tokens: usize,
    pub lm_order: usize,
    pub lm_discount: f64,
    pub backend_timeout_secs: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model: None,
            backend: BackendSpec::Builtin,
            checker_url: None,
            corpus: None,
            port: 8765,
            seed: 0,
            beam_size: 15,
            num_groups: 15,
            diversity_strength: 1.0,
            top_k: 8,
            ppl_factor: 1.3,
            context_tokens: 20,
            nucleus_p: 0.97,
            completions: 3,
            completion_max_tokens: 30,
            lm_order: 3,
            lm_discount: 0.75,
            backend_timeout_secs: 10.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        message: e.to_string(),
    })
}

fn optional(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl Config {
    /// Sets one key. Empty values clear optional keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "model" => self.model = optional(value).map(PathBuf::from),
            "backend" => self.backend = value.parse()?,
            "checker_url" => self.checker_url = optional(value),
            "corpus" => self.corpus = optional(value).map(PathBuf::from),
            "port" => self.port = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "beam_size" => self.beam_size = parse(key, value)?,
            "num_groups" => self.num_groups = parse(key, value)?,
            "diversity_strength" => self.diversity_strength = parse(key, value)?,
            "top_k" => self.top_k = parse(key, value)?,
            "ppl_factor" => self.ppl_factor = parse(key, value)?,
            "context_tokens" => self.context_tokens = parse(key, value)?,
            "nucleus_p" => self.nucleus_p = parse(key, value)?,
            "completions" => self.completions = parse(key, value)?,
            "completion_max_tokens" => self.completion_max_tokens = parse(key, value)?,
            "lm_order" => self.lm_order = parse(key, value)?,
            "lm_discount" => self.lm_discount = parse(key, value)?,
            "backend_timeout_secs" => self.backend_timeout_secs = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies a `key = value` document. `#` starts a comment line.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut c = Self::default();
        c.apply_str(&text)?;
        Ok(c)
    }

    pub fn beam(&self) -> crate::beam::BeamConfig {
        crate::beam::BeamConfig {
            beam_size: self.beam_size,
            num_groups: self.num_groups,
            strength: self.diversity_strength,
            ..Default::default()
        }
    }

    pub fn revision(&self) -> crate::revision::RevisionSettings {
        crate::revision::RevisionSettings {
            top_k: self.top_k,
            ppl_factor: self.ppl_factor,
            context_tokens: self.context_tokens,
        }
    }
}

/// Training hyperparameters of the neural revision and completion models,
/// kept for users who attach an external backend trained elsewhere. Nothing
/// in this crate reads them.
pub const NEURAL_TEMPLATE: &str = "\
# revision model (fairseq)
revision.architecture = lightconv_iwslt_de_en
revision.optimizer = adam
revision.lr = 5e-4
revision.adam_eps = 1e-08
revision.adam_betas = (0.9, 0.98)
revision.weight_decay = 0.0001
revision.clip_norm = 0.0
revision.lr_scheduler = inverse_sqrt
revision.warmup_updates = 4000
revision.warmup_init_lr = 1e-7
revision.min_lr = 1e-9
revision.max_tokens = 24000
revision.max_update = 1050530

# completion model (gpt2 small, fine-tuned)
completion.architecture = gpt2
completion.optimizer = adam
completion.lr = 5e-5
completion.adam_eps = 1e-8
completion.adam_betas = (0.9, 0.999)
completion.weight_decay = 0.0
completion.clip_norm = 1.0
completion.lr_scheduler = linear
completion.warmup_updates = 0
completion.epochs = 100
completion.batch_tokens = 262144
completion.max_update = 138300
";
