//! Pipeline configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::fixture::FixtureSpec;
use crate::generator::{GeneratorConfig, Variant};
use crate::grounder::GrounderConfig;
use crate::nn::layers::StackDims;
use crate::normalize::FilterConfig;
use crate::tagger::{SchemeTaggerConfig, TaggerVariant};

/// Settings of the generation stages that belong to no model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSettings {
    /// Share of the merged corpus held out for generation and evaluation.
    pub test_fraction: f64,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings { test_fraction: 0.025 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Width of the hashed bag-of-words embedder used for normalization and
    /// fact faithfulness.
    pub embedding_width: usize,
    pub fixture: FixtureSpec,
    pub grounder: GrounderConfig,
    /// `variant` selects the tagger used by the annotate stage.
    pub tagger: SchemeTaggerConfig,
    pub filter: FilterConfig,
    /// `variant` is replaced by the one named on the command line.
    pub generator: GeneratorConfig,
    pub generation: GenerationSettings,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 13,
            embedding_width: 256,
            fixture: FixtureSpec::default(),
            grounder: GrounderConfig::default(),
            tagger: SchemeTaggerConfig::new(TaggerVariant::Pipelined),
            filter: FilterConfig::default(),
            generator: GeneratorConfig::new(Variant::Dual),
            generation: GenerationSettings::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Small models and short schedules for fixture-sized corpora.
    pub fn toy() -> Self {
        let mut c = PipelineConfig::default();
        let dims = StackDims {
            layers: 1,
            hidden: 32,
            heads: 4,
        };
        c.grounder.encoder = dims;
        c.grounder.reduced_dim = 32;
        c.grounder.max_positions = 64;
        c.tagger.encoder = dims;
        c.tagger.max_positions = 64;
        c.generator.encoder = dims;
        c.generator.decoder = dims;
        c.generator.max_positions = 128;
        for train in [&mut c.grounder.train, &mut c.tagger.train, &mut c.generator.train] {
            train.learning_rate = 3e-3;
            train.batch_size = 16;
            train.max_steps = 150;
            train.eval_every = 25;
            train.stop_below = Some(0.01);
        }
        c.generation.test_fraction = 0.1;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_width == 0 {
            return Err(Error::Config("embedding_width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.generation.test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.nli_threshold) {
            return Err(Error::Config("nli_threshold must lie in [0, 1]".into()));
        }
        self.fixture.validate()?;
        self.grounder.validate()?;
        self.tagger.validate()?;
        self.filter.validate()?;
        self.generator.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
