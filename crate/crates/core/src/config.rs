//! Run configuration: one TOML file with a section per stage.
//!
//! ```toml
//! seed = 3
//! arch = "treelstm"
//!
//! [generation]
//! symbolic_count = 5000
//!
//! [training]
//! dim = 20
//! epochs = 50
//!
//! [experiment]
//! name = "extrapolate-depth4"
//! variants = ["treelstm", "treelstm+data"]
//! ```
//!
//! Every key is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::GenConfig;
use crate::eval::OracleConfig;
use crate::expr::{FunctionTable, Grammar};
use crate::models::Arch;
use crate::tasks::ExperimentConfig;
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("unknown function `{0}` in grammar.functions")]
    UnknownFunction(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarConfig {
    /// Function names; the standard table by default. `log` and `atan2`
    /// are available in addition.
    pub functions: Vec<String>,
    pub variables: Vec<String>,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        let g = Grammar::default();
        Self {
            functions: g.functions.all().iter().map(|f| f.name().to_string()).collect(),
            variables: g.variables.iter().map(|v| v.name().to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Axiom file; the built-in axiom list when unset.
    pub axioms: Option<PathBuf>,
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    /// Directory for metric logs and experiment reports.
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            axioms: None,
            dataset: "data/dataset.jsonl".into(),
            checkpoint: "data/model.ckpt".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces the generation and training seeds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Architecture for `train`.
    pub arch: Arch,
    pub grammar: GrammarConfig,
    pub oracle: OracleConfig,
    pub generation: GenConfig,
    pub training: TrainConfig,
    pub experiment: ExperimentConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            arch: Arch::TreeLstm,
            grammar: GrammarConfig::default(),
            oracle: OracleConfig::default(),
            generation: GenConfig::default(),
            training: TrainConfig::default(),
            experiment: ExperimentConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grammar()?;
        self.generation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.training.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.experiment.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn grammar(&self) -> Result<Grammar, ConfigError> {
        let functions = FunctionTable::from_names(&self.grammar.functions).ok_or_else(|| {
            let bad = self.grammar.functions.iter().find(|n| FunctionTable::from_names(&[n.as_str()]).is_none());
            ConfigError::UnknownFunction(bad.cloned().unwrap_or_default())
        })?;
        if functions.is_empty() {
            return Err(ConfigError::Invalid("grammar.functions is empty".into()));
        }
        let vars: Vec<&str> = self.grammar.variables.iter().map(String::as_str).collect();
        if vars.iter().any(|v| v.is_empty() || v.contains(['(', ')', ' '])) {
            return Err(ConfigError::Invalid("bad variable name in grammar.variables".into()));
        }
        Ok(Grammar::new(functions, &vars))
    }

    pub fn generation(&self) -> GenConfig {
        GenConfig { seed: self.seed.unwrap_or(self.generation.seed), ..self.generation.clone() }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig { seed: self.seed.unwrap_or(self.training.seed), ..self.training.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Variant;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml_str("", "t").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_and_seed_override() {
        let text = r#"
seed = 9
arch = "lstm"

[generation]
symbolic_count = 500
seed = 2

[training]
dim = 12
use_funceval_data = false

[experiment]
name = "extrapolate"
variants = ["treelstm+data"]

[paths]
axioms = "axioms.txt"
"#;
        let c = RunConfig::from_toml_str(text, "t").unwrap();
        assert_eq!(c.arch, Arch::Lstm);
        assert_eq!(c.generation().symbolic_count, 500);
        assert_eq!(c.generation().seed, 9);
        assert_eq!(c.training().seed, 9);
        assert_eq!(c.training().dim, 12);
        assert!(!c.training().use_funceval_data);
        assert_eq!(c.experiment.variants, [Variant::new(Arch::TreeLstm, true)]);
        assert_eq!(c.paths.axioms.as_deref(), Some(Path::new("axioms.txt")));
        let without = RunConfig { seed: None, ..c.clone() };
        assert_eq!(without.generation().seed, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["colour = 1", "[training]\nlearning_rate = 0.1", "[nope]\na = 1"] {
            let err = RunConfig::from_toml_str(text, "t").unwrap_err().to_string();
            assert!(err.starts_with("t:"), "{err}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("[grammar]\nfunctions = [\"sin\", \"frob\"]", "t"),
            Err(ConfigError::UnknownFunction(f)) if f == "frob"
        ));
        assert!(RunConfig::from_toml_str("[training]\ndim = 0", "t").is_err());
        assert!(RunConfig::from_toml_str("[experiment]\nname = \"table9\"", "t").is_err());
    }

    #[test]
    fn extended_functions_can_be_enabled() {
        let mut names = GrammarConfig::default().functions;
        names.extend(["log".to_string(), "atan2".to_string()]);
        let c = RunConfig {
            grammar: GrammarConfig { functions: names, ..GrammarConfig::default() },
            ..RunConfig::default()
        };
        assert_eq!(c.grammar().unwrap().functions, FunctionTable::extended());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig { seed: Some(4), ..RunConfig::default() };
        c.training.lr = 0.0025;
        c.experiment.jobs = 3;
        c.paths.axioms = Some("a.txt".into());
        assert_eq!(RunConfig::from_toml_str(&c.to_toml(), "t").unwrap(), c);
        assert_eq!(RunConfig::from_toml_str(&RunConfig::default().to_toml(), "t").unwrap(), RunConfig::default());
    }
}
