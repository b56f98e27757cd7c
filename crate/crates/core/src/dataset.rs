//! Evaluation-record data model: languages and their roles, the
//! forget/retain partition, and the instance × language matrix of
//! observations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate cell ({instance}, {language})")]
    DuplicateCell { instance: String, language: String },
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
    #[error("cell ({instance}, {language}): prob {value} outside [0, 1]")]
    ProbOutOfRange {
        instance: String,
        language: String,
        value: f64,
    },
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error(
        "instance `{instance}` is marked `{found}` but the manifest places it in `{expected}`"
    )]
    SplitMismatch {
        instance: String,
        expected: Split,
        found: Split,
    },
    #[error("missing cell ({instance}, {language})")]
    MissingCell { instance: String, language: String },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether a language took part in memorisation/unlearning or is only
/// observed at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "training")]
    Training,
    #[serde(rename = "holdout", alias = "hold_out", alias = "hold-out")]
    HoldOut,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Language {
    pub code: String,
    pub role: Role,
}

impl Language {
    pub fn new(code: impl Into<String>, role: Role) -> Self {
        Self {
            code: code.into(),
            role,
        }
    }

    pub fn training(code: impl Into<String>) -> Self {
        Self::new(code, Role::Training)
    }

    pub fn holdout(code: impl Into<String>) -> Self {
        Self::new(code, Role::HoldOut)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Forget,
    Retain,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Forget => "forget",
            Split::Retain => "retain",
        })
    }
}

/// Sidecar manifest accompanying a record file.
///
/// The id lists are optional; when absent the partition is taken from the
/// `split` field of each record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub languages: Vec<Language>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forget_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retain_ids: Option<Vec<String>>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_spec(spec: &DatasetSpec) -> Self {
        Self {
            languages: spec.languages.clone(),
            forget_ids: Some(spec.forget_ids.iter().cloned().collect()),
            retain_ids: Some(spec.retain_ids.iter().cloned().collect()),
        }
    }
}

/// Language roster plus the forget/retain partition of instance ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    languages: Vec<Language>,
    forget_ids: BTreeSet<String>,
    retain_ids: BTreeSet<String>,
}

fn check_code(code: &str) -> Result<(), DataError> {
    if code.is_empty() {
        return Err(DataError::InvalidSpec("empty language code".into()));
    }
    if code.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
        return Err(DataError::InvalidSpec(format!(
            "language code `{code}` must be lowercase without whitespace"
        )));
    }
    Ok(())
}

impl DatasetSpec {
    pub fn new<F, R>(
        languages: Vec<Language>,
        forget_ids: F,
        retain_ids: R,
    ) -> Result<Self, DataError>
    where
        F: IntoIterator,
        F::Item: Into<String>,
        R: IntoIterator,
        R::Item: Into<String>,
    {
        let mut seen = BTreeSet::new();
        for lang in &languages {
            check_code(&lang.code)?;
            if !seen.insert(lang.code.as_str()) {
                return Err(DataError::InvalidSpec(format!(
                    "language `{}` listed twice",
                    lang.code
                )));
            }
        }
        let forget_ids: BTreeSet<String> = forget_ids.into_iter().map(Into::into).collect();
        let retain_ids: BTreeSet<String> = retain_ids.into_iter().map(Into::into).collect();
        if let Some(id) = forget_ids.intersection(&retain_ids).next() {
            return Err(DataError::InvalidSpec(format!(
                "instance `{id}` is in both the forget and retain sets"
            )));
        }
        Ok(Self {
            languages,
            forget_ids,
            retain_ids,
        })
    }

    pub fn languages(&self) -> &[Language] {
        &self.languages
    }

    pub fn language(&self, code: &str) -> Option<&Language> {
        self.languages.iter().find(|l| l.code == code)
    }

    pub fn require_language(&self, code: &str) -> Result<&Language, DataError> {
        self.language(code)
            .ok_or_else(|| DataError::UnknownLanguage(code.to_string()))
    }

    pub fn codes(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.code.clone()).collect()
    }

    pub fn codes_with_role(&self, role: Role) -> Vec<String> {
        self.languages
            .iter()
            .filter(|l| l.role == role)
            .map(|l| l.code.clone())
            .collect()
    }

    pub fn training_codes(&self) -> Vec<String> {
        self.codes_with_role(Role::Training)
    }

    pub fn holdout_codes(&self) -> Vec<String> {
        self.codes_with_role(Role::HoldOut)
    }

    /// Case-1/Case-2 analyses need at least one language in each role.
    pub fn require_both_roles(&self) -> Result<(), DataError> {
        for role in [Role::Training, Role::HoldOut] {
            if !self.languages.iter().any(|l| l.role == role) {
                return Err(DataError::InvalidSpec(format!(
                    "no {} language declared",
                    match role {
                        Role::Training => "training",
                        Role::HoldOut => "hold-out",
                    }
                )));
            }
        }
        Ok(())
    }

    pub fn forget_ids(&self) -> &BTreeSet<String> {
        &self.forget_ids
    }

    pub fn retain_ids(&self) -> &BTreeSet<String> {
        &self.retain_ids
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        if self.forget_ids.contains(id) {
            Some(Split::Forget)
        } else if self.retain_ids.contains(id) {
            Some(Split::Retain)
        } else {
            None
        }
    }

    /// All instance ids, forget set first, each half in sorted order.
    pub fn instance_ids(&self) -> impl Iterator<Item = &String> {
        self.forget_ids.iter().chain(self.retain_ids.iter())
    }

    pub fn n_instances(&self) -> usize {
        self.forget_ids.len() + self.retain_ids.len()
    }
}

/// One (instance, language) observation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub instance_id: String,
    pub language: String,
    /// Semantic-equivalence verdict: `true` when the answer was judged correct.
    pub se: Option<bool>,
    /// Length-normalised probability of the ground-truth answer.
    pub prob: Option<f64>,
    pub token_count: Option<u32>,
}

impl EvalRecord {
    pub fn new(instance_id: impl Into<String>, language: impl Into<String>) -> Self {
        Self {
            instance_id: instance_id.into(),
            language: language.into(),
            se: None,
            prob: None,
            token_count: None,
        }
    }

    pub fn with_se(mut self, se: bool) -> Self {
        self.se = Some(se);
        self
    }

    pub fn with_prob(mut self, prob: f64) -> Self {
        self.prob = Some(prob);
        self
    }

    pub fn with_token_count(mut self, n: u32) -> Self {
        self.token_count = Some(n);
        self
    }
}

/// Wire form of a record: one JSON object per line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecordLine {
    pub instance_id: String,
    pub language: String,
    #[serde(default)]
    pub split: Option<Split>,
    #[serde(default)]
    pub se: Option<u8>,
    #[serde(default)]
    pub prob: Option<f64>,
    #[serde(default)]
    pub token_count: Option<u32>,
}

impl RecordLine {
    pub fn from_record(record: &EvalRecord, split: Option<Split>) -> Self {
        Self {
            instance_id: record.instance_id.clone(),
            language: record.language.clone(),
            split,
            se: record.se.map(u8::from),
            prob: record.prob,
            token_count: record.token_count,
        }
    }

    fn into_record(self, line: usize) -> Result<(EvalRecord, Option<Split>), DataError> {
        let se = match self.se {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(other) => {
                return Err(DataError::MalformedLine {
                    line,
                    reason: format!("se must be 0, 1 or null, got {other}"),
                })
            }
        };
        if self.token_count == Some(0) {
            return Err(DataError::MalformedLine {
                line,
                reason: "token_count must be at least 1".into(),
            });
        }
        let record = EvalRecord {
            instance_id: self.instance_id,
            language: self.language,
            se,
            prob: self.prob,
            token_count: self.token_count,
        };
        Ok((record, self.split))
    }
}

/// The |instances| × |languages| grid of observations.
///
/// Cells are never imputed: a metric that asks for an absent cell gets
/// [`DataError::MissingCell`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMatrix {
    spec: DatasetSpec,
    records: BTreeMap<(String, String), EvalRecord>,
}

impl EvalMatrix {
    pub fn new(spec: DatasetSpec) -> Self {
        Self {
            spec,
            records: BTreeMap::new(),
        }
    }

    pub fn from_records(
        spec: DatasetSpec,
        records: impl IntoIterator<Item = EvalRecord>,
    ) -> Result<Self, DataError> {
        let mut matrix = Self::new(spec);
        for record in records {
            matrix.insert(record)?;
        }
        Ok(matrix)
    }

    pub fn insert(&mut self, record: EvalRecord) -> Result<(), DataError> {
        self.spec.require_language(&record.language)?;
        if self.spec.split_of(&record.instance_id).is_none() {
            return Err(DataError::UnknownInstance(record.instance_id));
        }
        if let Some(p) = record.prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::ProbOutOfRange {
                    instance: record.instance_id,
                    language: record.language,
                    value: p,
                });
            }
        }
        if record.token_count == Some(0) {
            return Err(DataError::InvalidSpec(format!(
                "cell ({}, {}): token_count must be at least 1",
                record.instance_id, record.language
            )));
        }
        let key = (record.instance_id.clone(), record.language.clone());
        if self.records.contains_key(&key) {
            return Err(DataError::DuplicateCell {
                instance: key.0,
                language: key.1,
            });
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.records.values()
    }

    pub fn get(&self, instance: &str, language: &str) -> Option<&EvalRecord> {
        self.records
            .get(&(instance.to_string(), language.to_string()))
    }

    pub fn cell(&self, instance: &str, language: &str) -> Result<&EvalRecord, DataError> {
        self.get(instance, language)
            .ok_or_else(|| DataError::MissingCell {
                instance: instance.to_string(),
                language: language.to_string(),
            })
    }

    /// Restriction to a language subset and an instance subset. Every
    /// requested cell must be present.
    pub fn slice<L, I>(&self, langs: &[L], ids: &[I]) -> Result<EvalMatrix, DataError>
    where
        L: AsRef<str>,
        I: AsRef<str>,
    {
        let wanted_langs: BTreeSet<&str> = langs.iter().map(AsRef::as_ref).collect();
        for code in &wanted_langs {
            self.spec.require_language(code)?;
        }
        let wanted_ids: BTreeSet<&str> = ids.iter().map(AsRef::as_ref).collect();
        for id in &wanted_ids {
            if self.spec.split_of(id).is_none() {
                return Err(DataError::UnknownInstance(id.to_string()));
            }
        }

        let languages = self
            .spec
            .languages
            .iter()
            .filter(|l| wanted_langs.contains(l.code.as_str()))
            .cloned()
            .collect();
        let forget = self
            .spec
            .forget_ids
            .iter()
            .filter(|id| wanted_ids.contains(id.as_str()))
            .cloned();
        let retain = self
            .spec
            .retain_ids
            .iter()
            .filter(|id| wanted_ids.contains(id.as_str()))
            .cloned();
        let spec = DatasetSpec::new(languages, forget, retain)?;

        let mut records = BTreeMap::new();
        for id in spec.instance_ids() {
            for lang in &spec.languages {
                let rec = self.cell(id, &lang.code)?;
                records.insert((id.clone(), lang.code.clone()), rec.clone());
            }
        }
        Ok(EvalMatrix { spec, records })
    }

    /// Slice keeping every instance.
    pub fn restrict_languages<L: AsRef<str>>(&self, langs: &[L]) -> Result<EvalMatrix, DataError> {
        let ids: Vec<&String> = self.spec.instance_ids().collect();
        self.slice(langs, &ids)
    }

    /// Writes the records as JSONL in (instance, language) order.
    pub fn save_jsonl<W: Write>(&self, mut out: W) -> Result<(), DataError> {
        for rec in self.records.values() {
            let line = RecordLine::from_record(rec, self.spec.split_of(&rec.instance_id));
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn parse_lines<R: BufRead>(source: R) -> Result<Vec<(usize, RecordLine)>, DataError> {
    let mut lines = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine =
            serde_json::from_str(&line).map_err(|e| DataError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        lines.push((line_no, parsed));
    }
    Ok(lines)
}

fn build_matrix(
    spec: DatasetSpec,
    lines: Vec<(usize, RecordLine)>,
) -> Result<EvalMatrix, DataError> {
    let mut matrix = EvalMatrix::new(spec);
    for (line_no, line) in lines {
        let (record, split) = line.into_record(line_no)?;
        let expected = matrix
            .spec
            .split_of(&record.instance_id)
            .ok_or_else(|| DataError::UnknownInstance(record.instance_id.clone()))?;
        if let Some(found) = split {
            if found != expected {
                return Err(DataError::SplitMismatch {
                    instance: record.instance_id,
                    expected,
                    found,
                });
            }
        }
        matrix.insert(record)?;
    }
    Ok(matrix)
}

/// Loads a JSONL record stream against a known spec.
pub fn load_eval_matrix<R: BufRead>(
    source: R,
    spec: &DatasetSpec,
) -> Result<EvalMatrix, DataError> {
    build_matrix(spec.clone(), parse_lines(source)?)
}

/// Loads a JSONL record stream using a manifest. Without explicit id lists
/// in the manifest, the partition is collected from the records' `split`
/// fields, which must then be present and consistent.
pub fn load_with_manifest<R: BufRead>(
    source: R,
    manifest: &Manifest,
) -> Result<EvalMatrix, DataError> {
    let lines = parse_lines(source)?;
    let spec = match (&manifest.forget_ids, &manifest.retain_ids) {
        (Some(f), Some(r)) => DatasetSpec::new(manifest.languages.clone(), f.clone(), r.clone())?,
        (None, None) => {
            let mut splits: BTreeMap<&str, Split> = BTreeMap::new();
            for (line_no, line) in &lines {
                let split = line.split.ok_or_else(|| DataError::MalformedLine {
                    line: *line_no,
                    reason: "missing `split` and the manifest has no id partition".into(),
                })?;
                match splits.get(line.instance_id.as_str()) {
                    Some(&prev) if prev != split => {
                        return Err(DataError::SplitMismatch {
                            instance: line.instance_id.clone(),
                            expected: prev,
                            found: split,
                        })
                    }
                    _ => {
                        splits.insert(&line.instance_id, split);
                    }
                }
            }
            let forget: Vec<String> = splits
                .iter()
                .filter(|(_, s)| **s == Split::Forget)
                .map(|(id, _)| id.to_string())
                .collect();
            let retain: Vec<String> = splits
                .iter()
                .filter(|(_, s)| **s == Split::Retain)
                .map(|(id, _)| id.to_string())
                .collect();
            DatasetSpec::new(manifest.languages.clone(), forget, retain)?
        }
        _ => {
            return Err(DataError::InvalidSpec(
                "manifest must list both forget_ids and retain_ids, or neither".into(),
            ))
        }
    };
    build_matrix(spec, lines)
}
