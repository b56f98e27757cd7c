use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{DatagenError, NameStage, Profile, DEFAULT_TEMPLATES_JSON};
use crate::judges::http::{HttpTextService, PromptTemplate};

/// One question-answer pair about a single attribute of one profile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub instance_id: String,
    pub question: String,
    pub answer: String,
    pub language: String,
    pub attribute: String,
    pub subject_name: String,
}

/// Lowercase alphanumeric runs joined by single dashes.
pub fn slugify(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

fn instance_id(name: &str, attribute: &str) -> String {
    format!("{}::{}", slugify(name), attribute)
}

/// Anything that turns a profile attribute into a pivot-language pair.
pub trait QaBuilder: Send + Sync {
    fn build(&self, profile: &Profile, attribute: &str) -> Result<QaPair, DatagenError>;
}

/// Question and answer patterns with `{name}` and `{value}` slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTemplate {
    pub question: String,
    pub answer: String,
}

/// Deterministic per-attribute templates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTemplates {
    pub language: String,
    pub templates: BTreeMap<String, QaTemplate>,
}

impl QaTemplates {
    pub fn new(
        language: impl Into<String>,
        templates: BTreeMap<String, QaTemplate>,
    ) -> Result<Self, DatagenError> {
        for (attr, t) in &templates {
            if !t.question.contains("{name}") {
                return Err(DatagenError::InvalidTemplate(format!(
                    "question for `{attr}` lacks a {{name}} slot"
                )));
            }
            if !t.answer.contains("{value}") {
                return Err(DatagenError::InvalidTemplate(format!(
                    "answer for `{attr}` lacks a {{value}} slot"
                )));
            }
        }
        Ok(Self {
            language: language.into(),
            templates,
        })
    }

    /// Parses a JSON object `attribute → {question, answer}`.
    pub fn from_json(language: &str, text: &str) -> Result<Self, DatagenError> {
        Self::new(language, serde_json::from_str(text)?)
    }

    pub fn default_templates() -> Self {
        Self::from_json("en", DEFAULT_TEMPLATES_JSON).expect("bundled templates are valid")
    }
}

impl QaBuilder for QaTemplates {
    fn build(&self, profile: &Profile, attribute: &str) -> Result<QaPair, DatagenError> {
        let value = profile
            .attributes
            .get(attribute)
            .ok_or_else(|| DatagenError::UnknownAttribute(attribute.to_string()))?;
        let t = self
            .templates
            .get(attribute)
            .ok_or_else(|| DatagenError::MissingTemplate(attribute.to_string()))?;
        let fill = |s: &str| s.replace("{name}", &profile.name).replace("{value}", value);
        Ok(QaPair {
            instance_id: instance_id(&profile.name, attribute),
            question: fill(&t.question),
            answer: fill(&t.answer),
            language: self.language.clone(),
            attribute: attribute.to_string(),
            subject_name: profile.name.clone(),
        })
    }
}

pub fn build_qa(
    profile: &Profile,
    attribute: &str,
    builder: &dyn QaBuilder,
) -> Result<QaPair, DatagenError> {
    builder.build(profile, attribute)
}

/// One pair per (profile, attribute), attributes in name order.
pub fn build_dataset(
    profiles: &[Profile],
    builder: &dyn QaBuilder,
) -> Result<Vec<QaPair>, DatagenError> {
    let mut out = Vec::new();
    for p in profiles {
        for attr in p.attributes.keys() {
            out.push(builder.build(p, attr)?);
        }
    }
    Ok(out)
}

/// Default generation prompt; the service must reply with a JSON object
/// `{"question": ..., "answer": ...}` as its text.
pub const DEFAULT_QA_PROMPT: &str = "Write one question and its answer about a fictional person.\n\
The question must ask only about their {attribute} and must contain the full name {name} exactly as written.\n\
The answer must state that the {attribute} is: {value}.\n\
Reply with a JSON object with the keys \"question\" and \"answer\" and nothing else.";

/// Model-backed generator behind the same interface as [`QaTemplates`].
#[derive(Debug)]
pub struct HttpQaGenerator {
    service: HttpTextService,
    prompt: PromptTemplate,
    language: String,
    /// attribute → human-readable label
    labels: BTreeMap<String, String>,
}

impl HttpQaGenerator {
    pub fn new(
        service: HttpTextService,
        prompt: PromptTemplate,
        language: impl Into<String>,
        labels: BTreeMap<String, String>,
    ) -> Result<Self, DatagenError> {
        prompt
            .require_slots(&["name", "attribute", "value"])
            .map_err(|e| DatagenError::InvalidTemplate(e.to_string()))?;
        Ok(Self {
            service,
            prompt,
            language: language.into(),
            labels,
        })
    }
}

#[derive(Deserialize)]
struct GeneratedPair {
    question: String,
    answer: String,
}

impl QaBuilder for HttpQaGenerator {
    fn build(&self, profile: &Profile, attribute: &str) -> Result<QaPair, DatagenError> {
        let value = profile
            .attributes
            .get(attribute)
            .ok_or_else(|| DatagenError::UnknownAttribute(attribute.to_string()))?;
        let label = self.labels.get(attribute).map_or(attribute, String::as_str);
        let prompt = self.prompt.render(&[
            ("name", &profile.name),
            ("attribute", label),
            ("value", value),
        ]);
        let text = self
            .service
            .complete(&prompt, &[("task", "qa_generation")])
            .map_err(DatagenError::Generator)?;
        let g: GeneratedPair = serde_json::from_str(text.trim()).map_err(|e| {
            DatagenError::Generator(crate::judges::ClientError::InvalidResponse(e.to_string()))
        })?;
        if !g.question.contains(&profile.name) {
            return Err(DatagenError::NameLost {
                name: profile.name.clone(),
                stage: NameStage::Generation,
            });
        }
        Ok(QaPair {
            instance_id: instance_id(&profile.name, attribute),
            question: g.question,
            answer: g.answer,
            language: self.language.clone(),
            attribute: attribute.to_string(),
            subject_name: profile.name.clone(),
        })
    }
}

pub fn write_qa_jsonl(mut writer: impl Write, pairs: &[QaPair]) -> Result<(), DatagenError> {
    for p in pairs {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_qa_jsonl(reader: impl BufRead) -> Result<Vec<QaPair>, DatagenError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| DatagenError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}
