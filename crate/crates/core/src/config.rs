//! Model configuration: the ablation variant, layer sizes and loss weights,
//! parsed from a plain `key = value` file with `#` comments. Unknown keys are
//! errors so typos surface immediately.

use thiserror::Error;

/// Which model variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Bi-GRU + GCN + retrieval attention, subtraction comparison.
    Full,
    /// Attention pools the Bi-GRU states directly; GCN parameters are unused.
    NoGcn,
    /// Full encoder, but the classifier sees the concatenated pair instead of
    /// the difference.
    ConcatCompare,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "nogcn" => Some(Variant::NoGcn),
            "concat" => Some(Variant::ConcatCompare),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGcn => "nogcn",
            Variant::ConcatCompare => "concat",
        }
    }
}

/// How the loss weights the two classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassWeight {
    /// `w = S / (2 * S_class)` computed on the training split.
    Balanced,
    /// Explicit `(w_reject, w_accept)`.
    Fixed(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden: usize,
    pub gcn_layers: usize,
    pub leaky_slope: f64,
    pub variant: Variant,
    pub lambda: f64,
    pub class_weight: ClassWeight,
    pub learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 300,
            hidden: 300,
            gcn_layers: 3,
            leaky_slope: 0.01,
            variant: Variant::Full,
            lambda: 1e-5,
            class_weight: ClassWeight::Balanced,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`")]
    BadLine { line: usize },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: invalid value for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ModelConfig {
    /// Parses `key = value` text; every key is optional and defaults match
    /// the documented hyperparameters.
    pub fn parse(text: &str) -> Result<ModelConfig, ConfigError> {
        let mut config = ModelConfig::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine { line: line_no });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |reason: &str| ConfigError::BadValue {
                line: line_no,
                key: key.to_string(),
                reason: reason.to_string(),
            };
            match key {
                "variant" => {
                    config.variant = Variant::parse(value)
                        .ok_or_else(|| bad("expected full, nogcn or concat"))?;
                }
                "embedding_dim" => {
                    config.embedding_dim =
                        value.parse().map_err(|_| bad("expected a positive integer"))?;
                }
                "hidden" => {
                    config.hidden =
                        value.parse().map_err(|_| bad("expected a positive integer"))?;
                }
                "gcn_layers" => {
                    config.gcn_layers =
                        value.parse().map_err(|_| bad("expected a non-negative integer"))?;
                }
                "leaky_slope" => {
                    config.leaky_slope = value.parse().map_err(|_| bad("expected a number"))?;
                }
                "lambda" => {
                    config.lambda = value.parse().map_err(|_| bad("expected a number"))?;
                }
                "learning_rate" => {
                    config.learning_rate =
                        value.parse().map_err(|_| bad("expected a number"))?;
                }
                "class_weight" => {
                    config.class_weight = if value == "balanced" {
                        ClassWeight::Balanced
                    } else {
                        let (reject, accept) = value
                            .split_once(',')
                            .ok_or_else(|| bad("expected `balanced` or `w_reject,w_accept`"))?;
                        let reject = reject
                            .trim()
                            .parse()
                            .map_err(|_| bad("expected a number"))?;
                        let accept = accept
                            .trim()
                            .parse()
                            .map_err(|_| bad("expected a number"))?;
                        ClassWeight::Fixed(reject, accept)
                    };
                }
                other => {
                    return Err(ConfigError::UnknownKey {
                        line: line_no,
                        key: other.to_string(),
                    });
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.embedding_dim == 0 {
            return Err(ConfigError::Invalid("embedding_dim must be positive".into()));
        }
        if self.hidden == 0 {
            return Err(ConfigError::Invalid("hidden must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(ConfigError::Invalid("lambda must be non-negative".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(ConfigError::Invalid("learning_rate must be positive".into()));
        }
        if let ClassWeight::Fixed(reject, accept) = self.class_weight {
            if reject <= 0.0 || accept <= 0.0 {
                return Err(ConfigError::Invalid("class weights must be positive".into()));
            }
        }
        Ok(())
    }
}
