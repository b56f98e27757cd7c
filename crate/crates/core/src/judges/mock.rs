//! Deterministic offline clients.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{ClientError, Judge, Translator};

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn id(&self) -> String {
        "identity".into()
    }

    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String, ClientError> {
        Ok(text.to_string())
    }
}

/// Looks texts up in a fixed (source, target, text) table and falls back to
/// the identity for unknown entries.
#[derive(Clone, Debug, Default)]
pub struct DictionaryTranslator {
    entries: HashMap<(String, String, String), String>,
}

impl DictionaryTranslator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, source: &str, target: &str, text: &str, translation: &str) -> Self {
        self.insert(source, target, text, translation);
        self
    }

    pub fn insert(&mut self, source: &str, target: &str, text: &str, translation: &str) {
        self.entries.insert(
            (source.to_string(), target.to_string(), text.to_string()),
            translation.to_string(),
        );
    }
}

impl Translator for DictionaryTranslator {
    fn id(&self) -> String {
        format!("dictionary:{}", self.entries.len())
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ClientError> {
        let key = (source.to_string(), target.to_string(), text.to_string());
        Ok(self
            .entries
            .get(&key)
            .cloned()
            .unwrap_or_else(|| text.to_string()))
    }
}

/// Wraps a closure `(text, source, target) -> translation`.
pub struct FnTranslator<F> {
    f: F,
}

impl<F> FnTranslator<F>
where
    F: Fn(&str, &str, &str) -> Result<String, ClientError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> Translator for FnTranslator<F>
where
    F: Fn(&str, &str, &str) -> Result<String, ClientError> + Send + Sync,
{
    fn id(&self) -> String {
        "fn".into()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ClientError> {
        (self.f)(text, source, target)
    }
}

/// Case-folds, strips punctuation and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    text.chars()
        .filter(|c| {
            !c.is_ascii_punctuation()
                && !matches!(
                    c,
                    '。' | '、' | '，' | '！' | '？' | '«' | '»' | '“' | '”' | '‘' | '’'
                )
        })
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Equivalent iff the normalised texts are identical.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactMatchJudge;

impl Judge for ExactMatchJudge {
    fn id(&self) -> String {
        "exact-match".into()
    }

    fn equivalent(&self, candidate: &str, reference: &str) -> Result<bool, ClientError> {
        Ok(normalize_answer(candidate) == normalize_answer(reference))
    }
}

/// Fixed verdict for every pair.
#[derive(Clone, Copy, Debug)]
pub struct ConstantJudge(pub bool);

impl Judge for ConstantJudge {
    fn id(&self) -> String {
        format!("constant:{}", u8::from(self.0))
    }

    fn equivalent(&self, _: &str, _: &str) -> Result<bool, ClientError> {
        Ok(self.0)
    }
}

#[derive(Debug)]
pub struct CountingTranslator<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T> CountingTranslator<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: Translator> Translator for CountingTranslator<T> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.translate(text, source, target)
    }
}

#[derive(Debug)]
pub struct CountingJudge<J> {
    inner: J,
    calls: AtomicUsize,
}

impl<J> CountingJudge<J> {
    pub fn new(inner: J) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<J: Judge> Judge for CountingJudge<J> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn equivalent(&self, candidate: &str, reference: &str) -> Result<bool, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.equivalent(candidate, reference)
    }
}

/// Fails with a transport error whenever the candidate equals `trigger`.
#[derive(Clone, Debug)]
pub struct FailOn<J> {
    inner: J,
    trigger: String,
}

impl<J> FailOn<J> {
    pub fn new(inner: J, trigger: impl Into<String>) -> Self {
        Self {
            inner,
            trigger: trigger.into(),
        }
    }
}

impl<J: Judge> Judge for FailOn<J> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn equivalent(&self, candidate: &str, reference: &str) -> Result<bool, ClientError> {
        if candidate == self.trigger {
            return Err(ClientError::Transport("simulated outage".into()));
        }
        self.inner.equivalent(candidate, reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalisation() {
        assert_eq!(normalize_answer("  The  Blue, SKY! "), "the blue sky");
        assert!(ExactMatchJudge.equivalent("Paris.", "paris").unwrap());
        assert!(!ExactMatchJudge.equivalent("Paris", "London").unwrap());
    }

    #[test]
    fn dictionary_fallback_is_identity() {
        let t = DictionaryTranslator::new().with("de", "en", "Blau", "blue");
        assert_eq!(t.translate("Blau", "de", "en").unwrap(), "blue");
        assert_eq!(t.translate("Blau", "fr", "en").unwrap(), "Blau");
    }

    proptest! {
        #[test]
        fn exact_match_is_symmetric(a in "[a-zA-Z ,.!]{0,12}", b in "[a-zA-Z ,.!]{0,12}") {
            prop_assert_eq!(
                ExactMatchJudge.equivalent(&a, &b).unwrap(),
                ExactMatchJudge.equivalent(&b, &a).unwrap()
            );
        }
    }
}
