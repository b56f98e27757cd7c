use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{semantic_equivalence, CacheKey, Judge, JudgeCache, JudgeError, SeConfig, Translator};
use crate::dataset::EvalRecord;

/// One answer to judge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeRequest {
    pub instance_id: String,
    pub language: String,
    pub model_output: String,
    pub ground_truth: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Input,
    Translator,
    Judge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub instance_id: String,
    pub language: String,
    pub kind: FailureKind,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchOutcome {
    /// Judged cells, sorted by (instance, language), with only `se` filled.
    pub records: Vec<EvalRecord>,
    /// Cells that could not be judged; they are absent from `records`.
    pub failures: Vec<CellFailure>,
    pub cache_hits: usize,
}

impl BatchOutcome {
    pub fn has_transport_failures(&self) -> bool {
        self.failures
            .iter()
            .any(|f| matches!(f.kind, FailureKind::Translator | FailureKind::Judge))
    }
}

#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub se: SeConfig,
    /// Upper bound on concurrent client calls.
    pub max_in_flight: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            se: SeConfig::default(),
            max_in_flight: 4,
        }
    }
}

enum CellResult {
    Verdict { se: bool, cached: bool },
    Failed(FailureKind, String),
}

/// Judges every request, consulting and filling `cache`. Only cache I/O
/// errors abort the batch; per-cell failures are collected.
pub fn batch_se(
    requests: &[SeRequest],
    translator: &dyn Translator,
    judge: &dyn Judge,
    cache: &JudgeCache,
    options: &BatchOptions,
) -> Result<BatchOutcome, JudgeError> {
    let pipeline = options.se.pipeline_id(translator, judge);

    let mut seen = HashSet::new();
    let duplicate: Vec<bool> = requests
        .iter()
        .map(|r| !seen.insert((r.instance_id.as_str(), r.language.as_str())))
        .collect();

    let judge_one = |req: &SeRequest| -> Result<CellResult, JudgeError> {
        let key = CacheKey {
            candidate: req.model_output.clone(),
            reference: req.ground_truth.clone(),
            language: req.language.clone(),
            judge: pipeline.clone(),
        };
        if let Some(se) = cache.get(&key) {
            return Ok(CellResult::Verdict { se, cached: true });
        }
        match semantic_equivalence(
            &req.model_output,
            &req.ground_truth,
            &req.language,
            translator,
            judge,
            &options.se,
        ) {
            Ok(se) => {
                cache.insert(key, se)?;
                Ok(CellResult::Verdict { se, cached: false })
            }
            Err(e @ JudgeError::TranslatorUnavailable(_)) => {
                Ok(CellResult::Failed(FailureKind::Translator, e.to_string()))
            }
            Err(e @ JudgeError::JudgeUnavailable(_)) => {
                Ok(CellResult::Failed(FailureKind::Judge, e.to_string()))
            }
            Err(e @ (JudgeError::EmptyInput | JudgeError::UnregisteredLanguage(_))) => {
                Ok(CellResult::Failed(FailureKind::Input, e.to_string()))
            }
            Err(e) => Err(e),
        }
    };

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellResult>>> =
        Mutex::new((0..requests.len()).map(|_| None).collect());
    let fatal: Mutex<Option<JudgeError>> = Mutex::new(None);
    let workers = options.max_in_flight.max(1).min(requests.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= requests.len() || fatal.lock().expect("lock").is_some() {
                    break;
                }
                let outcome = if duplicate[idx] {
                    Ok(CellResult::Failed(
                        FailureKind::Input,
                        "duplicate cell".into(),
                    ))
                } else {
                    judge_one(&requests[idx])
                };
                match outcome {
                    Ok(r) => results.lock().expect("lock")[idx] = Some(r),
                    Err(e) => {
                        fatal.lock().expect("lock").get_or_insert(e);
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().expect("lock") {
        return Err(e);
    }

    let mut outcome = BatchOutcome::default();
    for (req, result) in requests.iter().zip(results.into_inner().expect("lock")) {
        match result.expect("every index is processed") {
            CellResult::Verdict { se, cached } => {
                if cached {
                    outcome.cache_hits += 1;
                }
                outcome
                    .records
                    .push(EvalRecord::new(&req.instance_id, &req.language).with_se(se));
            }
            CellResult::Failed(kind, error) => outcome.failures.push(CellFailure {
                instance_id: req.instance_id.clone(),
                language: req.language.clone(),
                kind,
                error,
            }),
        }
    }
    outcome
        .records
        .sort_by(|a, b| (&a.instance_id, &a.language).cmp(&(&b.instance_id, &b.language)));
    outcome
        .failures
        .sort_by(|a, b| (&a.instance_id, &a.language).cmp(&(&b.instance_id, &b.language)));
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judges::mock::{
        CountingJudge, CountingTranslator, ExactMatchJudge, FailOn, IdentityTranslator,
    };

    fn req(id: &str, lang: &str, out: &str, truth: &str) -> SeRequest {
        SeRequest {
            instance_id: id.into(),
            language: lang.into(),
            model_output: out.into(),
            ground_truth: truth.into(),
        }
    }

    fn four() -> Vec<SeRequest> {
        vec![
            req("i1", "en", "Paris", "Paris"),
            req("i1", "de", "Berlin", "Paris"),
            req("i2", "en", "blue", "Blue"),
            req("i2", "de", "red", "blue"),
        ]
    }

    #[test]
    fn cached_pairs_bypass_clients() {
        let t = CountingTranslator::new(IdentityTranslator);
        let j = CountingJudge::new(ExactMatchJudge);
        let cache = JudgeCache::in_memory();
        let opts = BatchOptions::default();
        batch_se(&four()[..2], &t, &j, &cache, &opts).unwrap();
        assert_eq!(j.calls(), 2);

        let out = batch_se(&four(), &t, &j, &cache, &opts).unwrap();
        assert_eq!(j.calls(), 4, "exactly two new judge calls");
        assert_eq!(out.cache_hits, 2);
        let bits: Vec<Option<bool>> = out.records.iter().map(|r| r.se).collect();
        // sorted: (i1,de) (i1,en) (i2,de) (i2,en)
        assert_eq!(bits, vec![Some(false), Some(true), Some(false), Some(true)]);
    }

    #[test]
    fn empty_batch() {
        let out = batch_se(
            &[],
            &IdentityTranslator,
            &ExactMatchJudge,
            &JudgeCache::in_memory(),
            &BatchOptions::default(),
        )
        .unwrap();
        assert!(out.records.is_empty() && out.failures.is_empty());
    }

    #[test]
    fn partial_failure() {
        let j = FailOn::new(ExactMatchJudge, "red");
        let out = batch_se(
            &four(),
            &IdentityTranslator,
            &j,
            &JudgeCache::in_memory(),
            &BatchOptions::default(),
        )
        .unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].kind, FailureKind::Judge);
        assert_eq!(out.failures[0].instance_id, "i2");
        assert!(out.has_transport_failures());
    }

    #[test]
    fn permutation_invariant_and_serial_equivalent() {
        let mut reversed = four();
        reversed.reverse();
        let serial = BatchOptions {
            max_in_flight: 1,
            ..BatchOptions::default()
        };
        let a = batch_se(
            &four(),
            &IdentityTranslator,
            &ExactMatchJudge,
            &JudgeCache::in_memory(),
            &BatchOptions::default(),
        )
        .unwrap();
        let b = batch_se(
            &reversed,
            &IdentityTranslator,
            &ExactMatchJudge,
            &JudgeCache::in_memory(),
            &serial,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicates_are_flagged() {
        let mut reqs = four();
        reqs.push(req("i1", "en", "Paris", "Paris"));
        let out = batch_se(
            &reqs,
            &IdentityTranslator,
            &ExactMatchJudge,
            &JudgeCache::in_memory(),
            &BatchOptions::default(),
        )
        .unwrap();
        assert_eq!(out.records.len(), 4);
        assert_eq!(out.failures[0].kind, FailureKind::Input);
        assert!(!out.has_transport_failures());
    }
}
