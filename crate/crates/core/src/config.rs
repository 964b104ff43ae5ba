//! Run configuration: every module config plus one global seed, read from a
//! flat `key = value` file and then overridden by explicit flags.
//!
//! Keys are `seed` and `<section>.<field>` with sections `filter`,
//! `skipgram`, `generate`, `debias` and `probe`. Blank lines and lines
//! starting with `#` are ignored. Unknown keys are an error.

use std::path::Path;
use std::str::FromStr;

use crate::audit::ProbeConfig;
use crate::clozegen::GenerationConfig;
use crate::corpus::FilterConfig;
use crate::debias::DebiasConfig;
use crate::embeddings::SkipgramConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub filter: FilterConfig,
    pub skipgram: SkipgramConfig,
    pub generate: GenerationConfig,
    pub debias: DebiasConfig,
    pub probe: ProbeConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_opt(key: &str, value: &str) -> Result<Option<usize>> {
    match value {
        "" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "filter.min_steps" => self.filter.min_steps = parse(key, v)?,
            "filter.max_steps" => self.filter.max_steps = parse(key, v)?,
            "filter.min_ascii_ratio" => self.filter.min_ascii_ratio = parse(key, v)?,
            "filter.require_text" => self.filter.require_text = parse(key, v)?,
            "filter.require_images" => self.filter.require_images = parse(key, v)?,
            "skipgram.dimension" => self.skipgram.dimension = parse(key, v)?,
            "skipgram.window" => self.skipgram.window = parse(key, v)?,
            "skipgram.negatives" => self.skipgram.negatives = parse(key, v)?,
            "skipgram.epochs" => self.skipgram.epochs = parse(key, v)?,
            "skipgram.learning_rate" => self.skipgram.learning_rate = parse(key, v)?,
            "skipgram.min_learning_rate" => self.skipgram.min_learning_rate = parse(key, v)?,
            "skipgram.min_count" => self.skipgram.min_count = parse(key, v)?,
            "generate.window" => self.generate.window = parse(key, v)?,
            "generate.nchoices" => self.generate.nchoices = parse(key, v)?,
            "generate.knn_k" => self.generate.knn_k = parse(key, v)?,
            "generate.questions_per_procedure" => self.generate.questions_per_procedure = parse(key, v)?,
            "debias.budget" => self.debias.budget = parse_opt(key, v)?,
            "debias.n_clusters" => self.debias.n_clusters = parse_opt(key, v)?,
            "debias.nchoices" => self.debias.nchoices = parse(key, v)?,
            "debias.knn_k" => self.debias.knn_k = parse(key, v)?,
            "debias.min_steps" => self.debias.min_steps = parse(key, v)?,
            "debias.max_resamples" => self.debias.max_resamples = parse(key, v)?,
            "debias.kmeans_max_iters" => self.debias.kmeans_max_iters = parse(key, v)?,
            "probe.learning_rate" => self.probe.learning_rate = parse(key, v)?,
            "probe.max_epochs" => self.probe.max_epochs = parse(key, v)?,
            "probe.patience" => self.probe.patience = parse(key, v)?,
            "probe.batch_size" => self.probe.batch_size = parse(key, v)?,
            "probe.n_token_features" => self.probe.n_token_features = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` assignments in order.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {pair:?}")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.apply([line]).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Copies the global seed into every stage and validates the result.
    pub fn resolve(mut self) -> Result<Self> {
        self.skipgram.seed = self.seed;
        self.generate.seed = self.seed;
        self.debias.seed = self.seed;
        self.probe.seed = self.seed;
        self.filter.validate()?;
        self.skipgram.validate()?;
        self.generate.validate()?;
        self.debias.validate()?;
        self.probe.validate()?;
        Ok(self)
    }
}
