//! Client selection: HTTP services from a TOML config, offline mocks
//! otherwise.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use mmu_eval::datagen::{
    EchoRefiner, HttpQaGenerator, HttpRefiner, PoolSet, QaBuilder, QaTemplates, Refiner,
    DEFAULT_QA_PROMPT,
};
use mmu_eval::judges::http::{
    HttpClientConfig, HttpJudge, HttpTextService, HttpTranslator, PromptTemplate,
};
use mmu_eval::judges::mock::{ExactMatchJudge, IdentityTranslator};
use mmu_eval::judges::{Judge, Translator};

#[derive(Clone, Debug, Deserialize)]
pub struct ServiceConfig {
    #[serde(flatten)]
    pub http: HttpClientConfig,
    /// Prompt template file (TOML with a `template` key, or JSON).
    #[serde(default)]
    pub prompt: Option<PathBuf>,
}

/// Contents of the `--config` file for `judge` and `datagen`. Every
/// service is optional; a missing one falls back to its offline mock.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientsConfig {
    #[serde(default)]
    pub pivot: Option<String>,
    #[serde(default)]
    pub translator: Option<ServiceConfig>,
    #[serde(default)]
    pub judge: Option<ServiceConfig>,
    #[serde(default)]
    pub refiner: Option<ServiceConfig>,
    #[serde(default)]
    pub generator: Option<ServiceConfig>,
}

impl ClientsConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading client config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing client config {}", path.display()))
    }

    pub fn pivot(&self) -> &str {
        self.pivot.as_deref().unwrap_or("en")
    }

    pub fn translator(&self) -> Result<Box<dyn Translator>> {
        Ok(match &self.translator {
            Some(s) => Box::new(HttpTranslator::new(&s.http)?),
            None => Box::new(IdentityTranslator),
        })
    }

    pub fn judge(&self) -> Result<Box<dyn Judge>> {
        Ok(match &self.judge {
            Some(s) => {
                let prompt =
                    load_prompt(s.prompt.as_deref())?.unwrap_or_else(PromptTemplate::default_judge);
                Box::new(HttpJudge::new(&s.http, prompt)?)
            }
            None => Box::new(ExactMatchJudge),
        })
    }

    pub fn refiner(&self) -> Result<Box<dyn Refiner>> {
        Ok(match &self.refiner {
            Some(s) => {
                let prompt = load_prompt(s.prompt.as_deref())?
                    .context("the refiner service needs a `prompt` template file")?;
                Box::new(HttpRefiner::new(HttpTextService::new(&s.http)?, prompt)?)
            }
            None => Box::new(EchoRefiner),
        })
    }

    /// Pivot-language QA builder: the generator service if configured,
    /// else the fixed templates.
    pub fn qa_builder(
        &self,
        pools: &PoolSet,
        templates: QaTemplates,
    ) -> Result<Box<dyn QaBuilder>> {
        Ok(match &self.generator {
            Some(s) => {
                let prompt = load_prompt(s.prompt.as_deref())?
                    .unwrap_or_else(|| PromptTemplate::new(DEFAULT_QA_PROMPT));
                let labels: BTreeMap<String, String> = pools
                    .attributes()
                    .iter()
                    .map(|p| (p.attribute().to_string(), p.label().to_string()))
                    .collect();
                Box::new(HttpQaGenerator::new(
                    HttpTextService::new(&s.http)?,
                    prompt,
                    self.pivot(),
                    labels,
                )?)
            }
            None => Box::new(templates),
        })
    }
}

fn load_prompt(path: Option<&Path>) -> Result<Option<PromptTemplate>> {
    path.map(|p| PromptTemplate::load(p).with_context(|| format!("loading prompt {}", p.display())))
        .transpose()
}
