//! Semantic-equivalence judging: translate the model output and the ground
//! truth into a pivot language, then ask a judge whether they mean the
//! same thing.
//!
//! Backends sit behind the [`Translator`] and [`Judge`] traits. The
//! [`mock`] module provides deterministic offline implementations; the
//! [`http`] module talks to plain JSON services.

mod batch;
mod cache;
pub mod http;
pub mod mock;

use std::collections::BTreeSet;

use thiserror::Error;

pub use batch::{batch_se, BatchOptions, BatchOutcome, CellFailure, FailureKind, SeRequest};
pub use cache::{CacheEntry, CacheKey, JudgeCache};

/// Transport-level failure of a remote client.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
}

impl ClientError {
    /// Connection failures, 429 and 5xx are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            ClientError::InvalidResponse(_) => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("empty input text")]
    EmptyInput,
    #[error("language `{0}` is not registered")]
    UnregisteredLanguage(String),
    #[error("translator unavailable: {0}")]
    TranslatorUnavailable(ClientError),
    #[error("judge unavailable: {0}")]
    JudgeUnavailable(ClientError),
    #[error("judge cache: {0}")]
    Cache(String),
    #[error("prompt template: {0}")]
    Template(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl JudgeError {
    /// True for failures of a remote service, as opposed to bad input.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            JudgeError::TranslatorUnavailable(_) | JudgeError::JudgeUnavailable(_)
        )
    }
}

pub trait Translator: Send + Sync {
    /// Identifier folded into cache keys.
    fn id(&self) -> String;
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ClientError>;
}

pub trait Judge: Send + Sync {
    fn id(&self) -> String;
    /// Whether the two texts have the same meaning.
    fn equivalent(&self, candidate: &str, reference: &str) -> Result<bool, ClientError>;
}

impl<T: Translator + ?Sized> Translator for &T {
    fn id(&self) -> String {
        (**self).id()
    }
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ClientError> {
        (**self).translate(text, source, target)
    }
}

impl<J: Judge + ?Sized> Judge for &J {
    fn id(&self) -> String {
        (**self).id()
    }
    fn equivalent(&self, candidate: &str, reference: &str) -> Result<bool, ClientError> {
        (**self).equivalent(candidate, reference)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeConfig {
    pub pivot: String,
    /// Also translate texts already in the pivot language (pivot → pivot).
    pub translate_pivot: bool,
    /// When set, languages outside this set are rejected.
    pub languages: Option<BTreeSet<String>>,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            pivot: "en".to_string(),
            translate_pivot: true,
            languages: None,
        }
    }
}

impl SeConfig {
    /// Cache namespace for a translator/judge pairing under this config.
    pub fn pipeline_id(&self, translator: &dyn Translator, judge: &dyn Judge) -> String {
        format!(
            "{}|{}|pivot={}|translate_pivot={}",
            judge.id(),
            translator.id(),
            self.pivot,
            self.translate_pivot
        )
    }
}

fn to_pivot(
    translator: &dyn Translator,
    text: &str,
    lang: &str,
    config: &SeConfig,
) -> Result<String, JudgeError> {
    if lang == config.pivot && !config.translate_pivot {
        return Ok(text.to_string());
    }
    let out = translator
        .translate(text, lang, &config.pivot)
        .map_err(JudgeError::TranslatorUnavailable)?;
    if out.trim().is_empty() {
        return Err(JudgeError::TranslatorUnavailable(
            ClientError::InvalidResponse("empty translation".into()),
        ));
    }
    Ok(out)
}

/// SE bit for one answer: `judge(T(output), T(truth))`.
pub fn semantic_equivalence(
    model_output: &str,
    ground_truth: &str,
    lang: &str,
    translator: &dyn Translator,
    judge: &dyn Judge,
    config: &SeConfig,
) -> Result<bool, JudgeError> {
    if model_output.trim().is_empty() || ground_truth.trim().is_empty() {
        return Err(JudgeError::EmptyInput);
    }
    if let Some(langs) = &config.languages {
        if !langs.contains(lang) {
            return Err(JudgeError::UnregisteredLanguage(lang.to_string()));
        }
    }
    let candidate = to_pivot(translator, model_output, lang, config)?;
    let reference = to_pivot(translator, ground_truth, lang, config)?;
    judge
        .equivalent(&candidate, &reference)
        .map_err(JudgeError::JudgeUnavailable)
}

#[cfg(test)]
mod tests {
    use super::mock::{
        CountingTranslator, DictionaryTranslator, ExactMatchJudge, IdentityTranslator,
    };
    use super::*;

    #[test]
    fn identity_pipeline() {
        let cfg = SeConfig::default();
        let (t, j) = (IdentityTranslator, ExactMatchJudge);
        assert!(semantic_equivalence("Paris", "Paris", "en", &t, &j, &cfg).unwrap());
        assert!(!semantic_equivalence("Paris", "London", "en", &t, &j, &cfg).unwrap());
    }

    #[test]
    fn dictionary_translation_then_judge() {
        let t = DictionaryTranslator::new().with("de", "en", "Blau", "blue");
        let cfg = SeConfig::default();
        assert!(semantic_equivalence("Blau", "blue", "de", &t, &ExactMatchJudge, &cfg).unwrap());
        assert!(!semantic_equivalence("Rot", "blue", "de", &t, &ExactMatchJudge, &cfg).unwrap());
    }

    #[test]
    fn pivot_pass_through_skips_translation() {
        let t = CountingTranslator::new(IdentityTranslator);
        let mut cfg = SeConfig::default();
        semantic_equivalence("a", "a", "en", &t, &ExactMatchJudge, &cfg).unwrap();
        assert_eq!(t.calls(), 2);
        cfg.translate_pivot = false;
        semantic_equivalence("a", "a", "en", &t, &ExactMatchJudge, &cfg).unwrap();
        assert_eq!(t.calls(), 2);
        semantic_equivalence("a", "a", "de", &t, &ExactMatchJudge, &cfg).unwrap();
        assert_eq!(t.calls(), 4);
    }

    #[test]
    fn input_and_registration_errors() {
        let cfg = SeConfig {
            languages: Some(["en".to_string()].into_iter().collect()),
            ..SeConfig::default()
        };
        let (t, j) = (IdentityTranslator, ExactMatchJudge);
        assert!(matches!(
            semantic_equivalence("", "x", "en", &t, &j, &cfg),
            Err(JudgeError::EmptyInput)
        ));
        assert!(matches!(
            semantic_equivalence("x", "x", "de", &t, &j, &cfg),
            Err(JudgeError::UnregisteredLanguage(_))
        ));
    }

    struct Down;
    impl Judge for Down {
        fn id(&self) -> String {
            "down".into()
        }
        fn equivalent(&self, _: &str, _: &str) -> Result<bool, ClientError> {
            Err(ClientError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn transport_failure_is_not_a_verdict() {
        let err = semantic_equivalence(
            "a",
            "a",
            "en",
            &IdentityTranslator,
            &Down,
            &SeConfig::default(),
        )
        .unwrap_err();
        assert!(err.is_transport());
        assert!(matches!(err, JudgeError::JudgeUnavailable(_)));
    }

    #[test]
    fn retryable_classification() {
        assert!(ClientError::Transport("x".into()).is_retryable());
        assert!(ClientError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(ClientError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(!ClientError::Status {
            status: 400,
            body: String::new()
        }
        .is_retryable());
        assert!(!ClientError::InvalidResponse("x".into()).is_retryable());
    }
}
