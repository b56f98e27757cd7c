use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use mmu_eval::datagen::{
    build_dataset, load_rules, sample_profiles, skew_report, translate_dataset, write_qa_jsonl,
    PoolSet, QaPair, QaTemplates, RefineOptions, RefineStatus, SamplingOptions, SkewEntry,
    DEFAULT_RULES_JSON, DEFAULT_TEMPLATES_JSON,
};
use mmu_eval::dataset::RecordLine;
use mmu_eval::judges::{batch_se, BatchOptions, JudgeCache, SeConfig, SeRequest};
use mmu_eval::report::OutputFormat;

use super::{emit, TransportFailure};
use crate::clients::ClientsConfig;
use crate::{DatagenArgs, JudgeArgs};

fn read_text(path: Option<&Path>, default: &str) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(default.to_string()),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn render_skew(entries: &[SkewEntry], format: OutputFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        OutputFormat::Json => return Ok(serde_json::to_string_pretty(entries)? + "\n"),
        OutputFormat::Csv => {
            out.push_str("attribute,pool_size,distinct,normalized_entropy,flagged\n");
            for e in entries {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    e.attribute,
                    e.pool_size,
                    e.histogram.len(),
                    e.normalized_entropy,
                    e.flagged
                );
            }
        }
        OutputFormat::Markdown => {
            out.push_str("## Attribute skew\n\n");
            out.push_str("| Attribute | Pool | Distinct | Entropy | Flagged |\n");
            out.push_str("|---|---|---|---|---|\n");
            for e in entries {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.3} | {} |",
                    e.attribute,
                    e.pool_size,
                    e.histogram.len(),
                    e.normalized_entropy,
                    if e.flagged { "yes" } else { "" }
                );
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct RefineLogLine<'a> {
    instance_id: &'a str,
    language: &'a str,
    status: &'static str,
    question_iterations: Option<usize>,
    answer_iterations: Option<usize>,
    error: Option<String>,
}

pub fn datagen(a: DatagenArgs) -> Result<()> {
    let clients = ClientsConfig::load(a.config.as_deref())?;
    let pivot = clients.pivot().to_string();
    let pools = match &a.pools {
        Some(p) => PoolSet::load(p).with_context(|| format!("loading pools {}", p.display()))?,
        None => PoolSet::default_pools(),
    };
    let rules = load_rules(&read_text(a.rules.as_deref(), DEFAULT_RULES_JSON)?)?;
    let templates = QaTemplates::from_json(
        &pivot,
        &read_text(a.templates.as_deref(), DEFAULT_TEMPLATES_JSON)?,
    )?;
    if a.languages.contains(&pivot) {
        bail!("--languages must not include the pivot language `{pivot}`");
    }

    let options = SamplingOptions {
        unique_names: !a.allow_duplicate_names,
        ..SamplingOptions::default()
    };
    let profiles = sample_profiles(&pools, a.count, a.seed, &rules, &options)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_jsonl(&a.out.join("profiles.jsonl"), &profiles)?;

    let skew = skew_report(&profiles, Some(&pools), a.skew_threshold)?;
    fs::write(
        a.out.join("skew.json"),
        serde_json::to_string_pretty(&skew)? + "\n",
    )?;

    let builder = clients.qa_builder(&pools, templates)?;
    let pairs = build_dataset(&profiles, builder.as_ref())?;
    let mut qa_out = BufWriter::new(File::create(a.out.join(format!("qa.{pivot}.jsonl")))?);
    write_qa_jsonl(&mut qa_out, &pairs)?;
    qa_out.flush()?;
    eprintln!(
        "{} profiles, {} {pivot} QA pairs",
        profiles.len(),
        pairs.len()
    );

    if !a.languages.is_empty() {
        translate_all(&a, &clients, &pivot, &pairs)?;
    }
    emit(None, &render_skew(&skew, a.format.into())?)
}

fn translate_all(
    a: &DatagenArgs,
    clients: &ClientsConfig,
    pivot: &str,
    pairs: &[QaPair],
) -> Result<()> {
    let translator = clients.translator()?;
    let refiner = clients.refiner()?;
    let judge = clients.judge()?;
    let options = RefineOptions {
        pivot: pivot.to_string(),
        max_iterations: a.max_iterations,
    };
    let outcomes = translate_dataset(
        pairs,
        &a.languages,
        translator.as_ref(),
        refiner.as_ref(),
        judge.as_ref(),
        &options,
    );

    let n_lang = a.languages.len();
    let mut verified: Vec<Vec<QaPair>> = vec![Vec::new(); n_lang];
    let mut log = Vec::with_capacity(outcomes.len());
    let mut transport = 0usize;
    for (idx, outcome) in outcomes.iter().enumerate() {
        let pair = &pairs[idx / n_lang];
        let lang = &a.languages[idx % n_lang];
        let line = match outcome {
            Ok(o) => {
                if let Some(p) = &o.pair {
                    verified[idx % n_lang].push(p.clone());
                }
                let failed = o.question.status == RefineStatus::Failed
                    || o.answer.status == RefineStatus::Failed;
                RefineLogLine {
                    instance_id: &pair.instance_id,
                    language: lang,
                    status: if failed { "rejected" } else { "verified" },
                    question_iterations: Some(o.question.iterations),
                    answer_iterations: Some(o.answer.iterations),
                    error: None,
                }
            }
            Err(e) => {
                if e.is_transport() {
                    transport += 1;
                }
                RefineLogLine {
                    instance_id: &pair.instance_id,
                    language: lang,
                    status: if e.is_transport() {
                        "error"
                    } else {
                        "rejected"
                    },
                    question_iterations: None,
                    answer_iterations: None,
                    error: Some(e.to_string()),
                }
            }
        };
        log.push(line);
    }
    write_jsonl(&a.out.join("refine_log.jsonl"), &log)?;
    for (lang, kept) in a.languages.iter().zip(&verified) {
        let mut out = BufWriter::new(File::create(a.out.join(format!("qa.{lang}.jsonl")))?);
        write_qa_jsonl(&mut out, kept)?;
        out.flush()?;
        eprintln!("{lang}: {}/{} pairs verified", kept.len(), pairs.len());
    }
    if transport > 0 {
        return Err(TransportFailure(format!(
            "{transport} translation jobs failed on a remote service; see refine_log.jsonl"
        ))
        .into());
    }
    Ok(())
}

fn read_requests(path: &Path) -> Result<Vec<SeRequest>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{} line {}", path.display(), idx + 1))?,
        );
    }
    Ok(out)
}

pub fn judge(a: JudgeArgs) -> Result<()> {
    let requests = read_requests(&a.input)?;
    if a.max_in_flight == 0 {
        bail!("--max-in-flight must be positive");
    }
    let clients = ClientsConfig::load(a.config.as_deref())?;
    let translator = clients.translator()?;
    let judge = clients.judge()?;
    let cache = match &a.cache {
        Some(p) => JudgeCache::open(p)?,
        None => JudgeCache::in_memory(),
    };
    let options = BatchOptions {
        se: SeConfig {
            pivot: clients.pivot().to_string(),
            translate_pivot: !a.skip_pivot,
            languages: (!a.languages.is_empty())
                .then(|| a.languages.iter().cloned().collect::<BTreeSet<_>>()),
        },
        max_in_flight: a.max_in_flight,
    };
    let outcome = batch_se(
        &requests,
        translator.as_ref(),
        judge.as_ref(),
        &cache,
        &options,
    )?;

    let mut text = String::new();
    for rec in &outcome.records {
        text.push_str(&serde_json::to_string(&RecordLine::from_record(rec, None))?);
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)?;
    eprintln!(
        "judged {} cells ({} from cache), {} failed",
        outcome.records.len(),
        outcome.cache_hits,
        outcome.failures.len()
    );
    for f in &outcome.failures {
        eprintln!("  {} {}: {}", f.instance_id, f.language, f.error);
    }
    if outcome.has_transport_failures() {
        return Err(TransportFailure("some cells failed on a remote service".into()).into());
    }
    if !outcome.failures.is_empty() {
        bail!("{} cells could not be judged", outcome.failures.len());
    }
    Ok(())
}
