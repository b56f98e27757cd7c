//! Translate, back-translate, verify, refine.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatagenError, QaPair};
use crate::judges::http::{HttpTextService, PromptTemplate};
use crate::judges::{ClientError, Judge, Translator};

pub const DEFAULT_MAX_ITERATIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameStage {
    Generation,
    Translation,
    BackTranslation,
    Refinement,
}

impl fmt::Display for NameStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NameStage::Generation => "generation",
            NameStage::Translation => "translation",
            NameStage::BackTranslation => "back-translation",
            NameStage::Refinement => "refinement",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QaField {
    Question,
    Answer,
}

impl QaField {
    pub fn get(self, pair: &QaPair) -> &str {
        match self {
            QaField::Question => &pair.question,
            QaField::Answer => &pair.answer,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineStatus {
    Pending,
    Verified,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineState {
    /// Pivot-language pair being translated.
    pub source: QaPair,
    pub field: QaField,
    pub target_language: String,
    pub candidate_translation: String,
    pub back_translation: String,
    pub iterations: usize,
    pub status: RefineStatus,
}

/// Rewrites a candidate translation given what its back-translation lost.
pub trait Refiner: Send + Sync {
    fn id(&self) -> String;
    fn refine(
        &self,
        source: &str,
        candidate: &str,
        back_translation: &str,
        target: &str,
    ) -> Result<String, ClientError>;
}

impl<R: Refiner + ?Sized> Refiner for &R {
    fn id(&self) -> String {
        (**self).id()
    }
    fn refine(
        &self,
        source: &str,
        candidate: &str,
        back_translation: &str,
        target: &str,
    ) -> Result<String, ClientError> {
        (**self).refine(source, candidate, back_translation, target)
    }
}

/// Returns the candidate unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoRefiner;

impl Refiner for EchoRefiner {
    fn id(&self) -> String {
        "echo".into()
    }
    fn refine(&self, _: &str, candidate: &str, _: &str, _: &str) -> Result<String, ClientError> {
        Ok(candidate.to_string())
    }
}

#[derive(Debug)]
pub struct CountingRefiner<R> {
    inner: R,
    calls: AtomicUsize,
}

impl<R> CountingRefiner<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<R: Refiner> Refiner for CountingRefiner<R> {
    fn id(&self) -> String {
        self.inner.id()
    }
    fn refine(
        &self,
        source: &str,
        candidate: &str,
        back_translation: &str,
        target: &str,
    ) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner
            .refine(source, candidate, back_translation, target)
    }
}

/// Refinement through a text service. The prompt must contain `{source}`
/// and `{candidate}`; `{back_translation}` and `{target}` are optional.
#[derive(Debug)]
pub struct HttpRefiner {
    service: HttpTextService,
    prompt: PromptTemplate,
}

impl HttpRefiner {
    pub fn new(service: HttpTextService, prompt: PromptTemplate) -> Result<Self, DatagenError> {
        prompt
            .require_slots(&["source", "candidate"])
            .map_err(|e| DatagenError::InvalidTemplate(e.to_string()))?;
        Ok(Self { service, prompt })
    }
}

impl Refiner for HttpRefiner {
    fn id(&self) -> String {
        "http".into()
    }
    fn refine(
        &self,
        source: &str,
        candidate: &str,
        back_translation: &str,
        target: &str,
    ) -> Result<String, ClientError> {
        let prompt = self.prompt.render(&[
            ("source", source),
            ("candidate", candidate),
            ("back_translation", back_translation),
            ("target", target),
        ]);
        self.service.complete(
            &prompt,
            &[
                ("task", "refine_translation"),
                ("source", source),
                ("candidate", candidate),
                ("back_translation", back_translation),
                ("target", target),
            ],
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefineOptions {
    pub pivot: String,
    pub max_iterations: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            pivot: "en".into(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

fn keep_name(text: &str, name: &str, required: bool, stage: NameStage) -> Result<(), DatagenError> {
    if required && !text.contains(name) {
        return Err(DatagenError::NameLost {
            name: name.to_string(),
            stage,
        });
    }
    Ok(())
}

/// Translates one field of `pair` into `target` and checks it by
/// back-translation, refining the candidate until the judge accepts or the
/// iteration budget runs out.
///
/// Each iteration costs one back-translation, one judge call and, unless
/// it is the last, one refinement; the initial translation adds one call.
/// When the source text contains the subject name, every candidate and
/// back-translation must contain it verbatim.
pub fn verify_refine(
    pair: &QaPair,
    field: QaField,
    target: &str,
    translator: &dyn Translator,
    refiner: &dyn Refiner,
    judge: &dyn Judge,
    options: &RefineOptions,
) -> Result<RefineState, DatagenError> {
    if target == options.pivot {
        return Err(DatagenError::PivotTarget(target.to_string()));
    }
    if options.max_iterations == 0 {
        return Err(DatagenError::InvalidConfig(
            "max_iterations must be positive".into(),
        ));
    }
    let source = field.get(pair);
    if source.trim().is_empty() {
        return Err(DatagenError::EmptyInput);
    }
    let name = pair.subject_name.as_str();
    let named = !name.is_empty() && source.contains(name);

    let mut state = RefineState {
        source: pair.clone(),
        field,
        target_language: target.to_string(),
        candidate_translation: translator
            .translate(source, &options.pivot, target)
            .map_err(DatagenError::Translator)?,
        back_translation: String::new(),
        iterations: 0,
        status: RefineStatus::Pending,
    };
    let mut stage = NameStage::Translation;
    loop {
        state.iterations += 1;
        keep_name(&state.candidate_translation, name, named, stage)?;
        state.back_translation = translator
            .translate(&state.candidate_translation, target, &options.pivot)
            .map_err(DatagenError::Translator)?;
        keep_name(
            &state.back_translation,
            name,
            named,
            NameStage::BackTranslation,
        )?;
        if judge
            .equivalent(&state.back_translation, source)
            .map_err(DatagenError::Judge)?
        {
            state.status = RefineStatus::Verified;
            return Ok(state);
        }
        if state.iterations >= options.max_iterations {
            state.status = RefineStatus::Failed;
            return Ok(state);
        }
        state.candidate_translation = refiner
            .refine(
                source,
                &state.candidate_translation,
                &state.back_translation,
                target,
            )
            .map_err(DatagenError::Refiner)?;
        stage = NameStage::Refinement;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationOutcome {
    /// Present when both fields verified.
    pub pair: Option<QaPair>,
    pub question: RefineState,
    pub answer: RefineState,
}

/// Runs [`verify_refine`] on both fields of a pair.
pub fn translate_pair(
    pair: &QaPair,
    target: &str,
    translator: &dyn Translator,
    refiner: &dyn Refiner,
    judge: &dyn Judge,
    options: &RefineOptions,
) -> Result<TranslationOutcome, DatagenError> {
    let question = verify_refine(
        pair,
        QaField::Question,
        target,
        translator,
        refiner,
        judge,
        options,
    )?;
    let answer = verify_refine(
        pair,
        QaField::Answer,
        target,
        translator,
        refiner,
        judge,
        options,
    )?;
    let verified =
        question.status == RefineStatus::Verified && answer.status == RefineStatus::Verified;
    let translated = verified.then(|| QaPair {
        instance_id: pair.instance_id.clone(),
        question: question.candidate_translation.clone(),
        answer: answer.candidate_translation.clone(),
        language: target.to_string(),
        attribute: pair.attribute.clone(),
        subject_name: pair.subject_name.clone(),
    });
    Ok(TranslationOutcome {
        pair: translated,
        question,
        answer,
    })
}

/// Every pair into every target, in parallel. Results are in
/// pair-major order and errors are kept per entry.
pub fn translate_dataset(
    pairs: &[QaPair],
    targets: &[String],
    translator: &dyn Translator,
    refiner: &dyn Refiner,
    judge: &dyn Judge,
    options: &RefineOptions,
) -> Vec<Result<TranslationOutcome, DatagenError>> {
    let jobs: Vec<(&QaPair, &str)> = pairs
        .iter()
        .flat_map(|p| targets.iter().map(move |t| (p, t.as_str())))
        .collect();
    jobs.par_iter()
        .map(|(p, t)| translate_pair(p, t, translator, refiner, judge, options))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judges::mock::{
        ConstantJudge, CountingJudge, CountingTranslator, DictionaryTranslator, ExactMatchJudge,
        FnTranslator, IdentityTranslator,
    };

    fn pair() -> QaPair {
        QaPair {
            instance_id: "ada-ek::occupation".into(),
            question: "What is Ada Ek's occupation?".into(),
            answer: "Ada Ek's occupation is nurse.".into(),
            language: "en".into(),
            attribute: "occupation".into(),
            subject_name: "Ada Ek".into(),
        }
    }

    fn opts(max: usize) -> RefineOptions {
        RefineOptions {
            max_iterations: max,
            ..RefineOptions::default()
        }
    }

    #[test]
    fn identity_round_trip_verifies_first_time() {
        let s = verify_refine(
            &pair(),
            QaField::Question,
            "de",
            &IdentityTranslator,
            &EchoRefiner,
            &ExactMatchJudge,
            &opts(5),
        )
        .unwrap();
        assert_eq!(s.status, RefineStatus::Verified);
        assert_eq!(s.iterations, 1);
    }

    #[test]
    fn rejecting_judge_exhausts_budget() {
        let t = CountingTranslator::new(IdentityTranslator);
        let j = CountingJudge::new(ConstantJudge(false));
        let r = CountingRefiner::new(EchoRefiner);
        let s = verify_refine(&pair(), QaField::Question, "de", &t, &r, &j, &opts(3)).unwrap();
        assert_eq!(s.status, RefineStatus::Failed);
        assert_eq!(s.iterations, 3);
        assert_eq!((t.calls(), j.calls(), r.calls()), (4, 3, 2));
        assert!(t.calls() + j.calls() + r.calls() <= 3 * 4);
    }

    #[test]
    fn dropped_name_is_an_error() {
        let t = FnTranslator::new(|text: &str, _: &str, _: &str| Ok(text.replace("Ada Ek", "she")));
        let err = verify_refine(
            &pair(),
            QaField::Question,
            "de",
            &t,
            &EchoRefiner,
            &ExactMatchJudge,
            &opts(5),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DatagenError::NameLost {
                stage: NameStage::Translation,
                ..
            }
        ));
    }

    #[test]
    fn refinement_fixes_a_bad_translation() {
        let t = DictionaryTranslator::new()
            .with(
                "en",
                "de",
                "What is Ada Ek's occupation?",
                "Wie alt ist Ada Ek?",
            )
            .with("de", "en", "Wie alt ist Ada Ek?", "How old is Ada Ek?")
            .with(
                "de",
                "en",
                "Was ist Ada Eks Beruf?",
                "What is Ada Ek's occupation?",
            );
        struct Fix;
        impl Refiner for Fix {
            fn id(&self) -> String {
                "fix".into()
            }
            fn refine(&self, _: &str, _: &str, _: &str, _: &str) -> Result<String, ClientError> {
                Ok("Was ist Ada Eks Beruf?".into())
            }
        }
        let s = verify_refine(
            &pair(),
            QaField::Question,
            "de",
            &t,
            &Fix,
            &ExactMatchJudge,
            &opts(5),
        )
        .unwrap();
        assert_eq!(s.status, RefineStatus::Verified);
        assert_eq!(s.iterations, 2);
        assert_eq!(s.candidate_translation, "Was ist Ada Eks Beruf?");
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            verify_refine(
                &pair(),
                QaField::Question,
                "en",
                &IdentityTranslator,
                &EchoRefiner,
                &ExactMatchJudge,
                &opts(5)
            ),
            Err(DatagenError::PivotTarget(_))
        ));
        assert!(verify_refine(
            &pair(),
            QaField::Question,
            "de",
            &IdentityTranslator,
            &EchoRefiner,
            &ExactMatchJudge,
            &opts(0)
        )
        .is_err());
    }

    #[test]
    fn dataset_translation_keeps_names() {
        let targets = vec!["de".to_string(), "bn".to_string()];
        let out = translate_dataset(
            &[pair(), pair()],
            &targets,
            &IdentityTranslator,
            &EchoRefiner,
            &ExactMatchJudge,
            &opts(5),
        );
        assert_eq!(out.len(), 4);
        for o in out {
            let p = o.unwrap().pair.unwrap();
            assert!(p.question.contains(&p.subject_name));
        }
    }
}
