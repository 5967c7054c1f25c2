use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reflectbench::dataset::DatasetManifest;
use reflectbench::economics::PricingTable;
use reflectbench::model::{validate_strategy, FeedbackKind, StrategyConfig};
use reflectbench::provider::{GenerationParams, ProvidersConfig};
use reflectbench::verifier::DEFAULT_TRANSLATION_PASS;

use crate::CliError;

fn default_concurrency() -> usize {
    4
}

fn default_translation_pass() -> f64 {
    DEFAULT_TRANSLATION_PASS
}

/// Run configuration. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub strategies: Vec<StrategyConfig>,
    pub providers: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricing: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub paper_parity: bool,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    /// Unit words stripped from math answers, one per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_words: Option<PathBuf>,
    #[serde(default = "default_translation_pass")]
    pub translation_pass: f64,
}

/// Parses JSON with errors that name the offending path, e.g. `strategies[1].feedback`.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &Path) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!("{}: at `{path}`: {inner}", origin.display()))
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_json(&text, path)
}

/// A config with everything it references loaded and checked.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
    pub manifest: DatasetManifest,
    pub manifest_dir: PathBuf,
    pub providers: ProvidersConfig,
    pub providers_dir: PathBuf,
    pub pricing: Option<PricingTable>,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn price_id(&self, model: &str) -> String {
        self.providers.price_id(model).to_string()
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let config: RunConfig = read_json(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest_path = base.join(&config.dataset);
    let (manifest, manifest_dir) =
        DatasetManifest::from_file(&manifest_path).map_err(|e| CliError::Config(e.to_string()))?;
    let providers_path = base.join(&config.providers);
    let providers: ProvidersConfig = read_json(&providers_path)?;
    let providers_dir = providers_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let pricing = match &config.pricing {
        Some(p) => {
            let p = base.join(p);
            let text = fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Some(PricingTable::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let loaded = LoadedConfig {
        config,
        base,
        manifest,
        manifest_dir,
        providers,
        providers_dir,
        pricing,
    };
    validate(&loaded)?;
    Ok(loaded)
}

/// Every problem found, one per line.
pub fn validate(c: &LoadedConfig) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let cfg = &c.config;
    if cfg.strategies.is_empty() {
        problems.push("strategies: the strategy grid is empty".to_string());
    }
    if cfg.concurrency == 0 {
        problems.push("concurrency: must be at least 1".to_string());
    }
    if !(0.0..=1.0).contains(&cfg.translation_pass) {
        problems.push("translation_pass: must lie in [0, 1]".to_string());
    }
    if let Err(e) = cfg.generation.validate() {
        problems.push(format!("generation: {e}"));
    }
    let mut labels = BTreeSet::new();
    for (i, s) in cfg.strategies.iter().enumerate() {
        if let Err(e) = validate_strategy(s, c.manifest.task, cfg.paper_parity) {
            for v in e.violations {
                problems.push(format!("strategies[{i}]: {v}"));
            }
        }
        if !labels.insert(s.label()) {
            problems.push(format!("strategies[{i}]: duplicate strategy `{}`", s.label()));
        }
        let mut models = vec![s.model_id.as_str()];
        if s.feedback == FeedbackKind::LlmJudge {
            models.extend(s.judge_model_id.as_deref());
        }
        for m in models {
            if !c.providers.models.contains_key(m) {
                problems.push(format!("strategies[{i}]: no provider configured for `{m}`"));
            } else if let Some(p) = &c.pricing {
                let id = c.price_id(m);
                if p.get(&id).is_err() {
                    problems.push(format!("strategies[{i}]: no price for `{id}`"));
                }
            }
        }
    }
    for (model, entry) in &c.providers.models {
        if let Err(e) = entry.resolve(model, &c.providers_dir) {
            problems.push(format!("providers: {e}"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(problems.join("\n")))
    }
}
