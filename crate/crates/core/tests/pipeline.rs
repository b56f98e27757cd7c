use mmu_eval::datagen::{
    build_dataset, load_rules, read_qa_jsonl, sample_profiles, translate_dataset, write_qa_jsonl,
    EchoRefiner, PoolSet, QaTemplates, RefineOptions, SamplingOptions, DEFAULT_RULES_JSON,
};
use mmu_eval::judges::mock::{CountingJudge, ExactMatchJudge, IdentityTranslator};
use mmu_eval::judges::{batch_se, BatchOptions, JudgeCache, SeRequest};

fn request(id: &str, lang: &str, output: &str, truth: &str) -> SeRequest {
    SeRequest {
        instance_id: id.into(),
        language: lang.into(),
        model_output: output.into(),
        ground_truth: truth.into(),
    }
}

#[test]
fn cached_verdicts_are_reused_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let requests = vec![
        request("a", "en", "Paris", "paris"),
        request("a", "de", "Berlin", "Paris"),
        request("b", "en", "blue", "blue"),
    ];
    let opts = BatchOptions::default();

    let judge = CountingJudge::new(ExactMatchJudge);
    let first = batch_se(
        &requests,
        &IdentityTranslator,
        &judge,
        &JudgeCache::open(&path).unwrap(),
        &opts,
    )
    .unwrap();
    assert_eq!(first.cache_hits, 0);
    assert_eq!(judge.calls(), 3);
    let verdicts: Vec<Option<bool>> = first.records.iter().map(|r| r.se).collect();
    assert_eq!(verdicts, [Some(false), Some(true), Some(true)]);

    let judge = CountingJudge::new(ExactMatchJudge);
    let second = batch_se(
        &requests,
        &IdentityTranslator,
        &judge,
        &JudgeCache::open(&path).unwrap(),
        &opts,
    )
    .unwrap();
    assert_eq!(second.cache_hits, 3);
    assert_eq!(judge.calls(), 0);
    assert_eq!(second.records, first.records);
}

#[test]
fn generated_dataset_round_trips_and_translates() {
    let pools = PoolSet::default_pools();
    let rules = load_rules(DEFAULT_RULES_JSON).unwrap();
    let profiles = sample_profiles(&pools, 12, 7, &rules, &SamplingOptions::default()).unwrap();
    assert!(profiles.iter().all(|p| !rules.iter().any(|r| r.matches(p))));

    let pairs = build_dataset(&profiles, &QaTemplates::default_templates()).unwrap();
    assert_eq!(
        pairs.len(),
        profiles.iter().map(|p| p.attributes.len()).sum::<usize>()
    );
    let mut buf = Vec::new();
    write_qa_jsonl(&mut buf, &pairs).unwrap();
    assert_eq!(read_qa_jsonl(buf.as_slice()).unwrap(), pairs);

    let langs = vec!["de".to_string(), "sq".to_string()];
    let outcomes = translate_dataset(
        &pairs,
        &langs,
        &IdentityTranslator,
        &EchoRefiner,
        &ExactMatchJudge,
        &RefineOptions::default(),
    );
    assert_eq!(outcomes.len(), pairs.len() * langs.len());
    assert!(outcomes
        .iter()
        .all(|o| o.as_ref().is_ok_and(|o| o.pair.is_some())));
}
