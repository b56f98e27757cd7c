//! Synthetic profile dataset construction.
//!
//! Profiles are drawn attribute by attribute from fixed value pools, so the
//! value distribution is controlled by construction rather than by whatever
//! a generator model happens to favour. [`skew_report`] measures how far a
//! profile set is from that ideal. Implausible combinations are removed
//! with declarative [`ExclusionRule`]s.
//!
//! Pool file format:
//!
//! ```json
//! {
//!   "first_names": ["Aldric", "..."],
//!   "last_names": ["Ashgrove", "..."],
//!   "attributes": [
//!     {"attribute": "occupation", "label": "occupation", "values": ["barista", "..."]}
//!   ]
//! }
//! ```
//!
//! Exclusion rule file: a JSON list of objects; each object is a conjunction
//! of `attribute: value` pairs, and a profile matching every pair of any
//! rule is rejected.

mod qa;
mod refine;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judges::ClientError;

pub use qa::{
    build_dataset, build_qa, read_qa_jsonl, slugify, write_qa_jsonl, HttpQaGenerator, QaBuilder,
    QaPair, QaTemplate, QaTemplates, DEFAULT_QA_PROMPT,
};
pub use refine::{
    translate_dataset, translate_pair, verify_refine, CountingRefiner, EchoRefiner, HttpRefiner,
    NameStage, QaField, RefineOptions, RefineState, RefineStatus, Refiner, TranslationOutcome,
    DEFAULT_MAX_ITERATIONS,
};

/// Default pools: 19 question-bearing attributes plus name parts.
pub const DEFAULT_POOLS_JSON: &str = include_str!("../../data/attribute_pools.json");
pub const DEFAULT_RULES_JSON: &str = include_str!("../../data/exclusion_rules.json");
pub const DEFAULT_TEMPLATES_JSON: &str = include_str!("../../data/qa_templates.json");

/// Default flag level for [`skew_report`].
pub const DEFAULT_SKEW_THRESHOLD: f64 = 0.8;
/// Default number of draws per profile before giving up.
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid pool: {0}")]
    InvalidPool(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("no template for attribute `{0}`")]
    MissingTemplate(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("invalid exclusion rule: {0}")]
    InvalidRule(String),
    #[error("could not draw profile {index} within {attempts} attempts")]
    ConstraintUnsatisfiable { index: usize, attempts: usize },
    #[error("subject name `{name}` lost in {stage}")]
    NameLost { name: String, stage: NameStage },
    #[error("target language `{0}` equals the pivot language")]
    PivotTarget(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("translator: {0}")]
    Translator(ClientError),
    #[error("refiner: {0}")]
    Refiner(ClientError),
    #[error("judge: {0}")]
    Judge(ClientError),
    #[error("generator: {0}")]
    Generator(ClientError),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DatagenError {
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            DatagenError::Translator(_)
                | DatagenError::Refiner(_)
                | DatagenError::Judge(_)
                | DatagenError::Generator(_)
        )
    }
}

/// Allowed values for one attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPool")]
pub struct AttributePool {
    attribute: String,
    label: String,
    values: Vec<String>,
}

#[derive(Deserialize)]
struct RawPool {
    attribute: String,
    #[serde(default)]
    label: Option<String>,
    values: Vec<String>,
}

impl TryFrom<RawPool> for AttributePool {
    type Error = DatagenError;
    fn try_from(raw: RawPool) -> Result<Self, Self::Error> {
        let label = raw.label.unwrap_or_else(|| raw.attribute.replace('_', " "));
        Self::with_label(raw.attribute, label, raw.values)
    }
}

fn check_values(what: &str, values: &[String]) -> Result<(), DatagenError> {
    if values.is_empty() {
        return Err(DatagenError::InvalidPool(format!("`{what}` has no values")));
    }
    let mut seen = BTreeSet::new();
    for v in values {
        if v.trim().is_empty() {
            return Err(DatagenError::InvalidPool(format!(
                "`{what}` has a blank value"
            )));
        }
        if !seen.insert(v) {
            return Err(DatagenError::InvalidPool(format!("`{what}` repeats `{v}`")));
        }
    }
    Ok(())
}

impl AttributePool {
    pub fn new(attribute: impl Into<String>, values: Vec<String>) -> Result<Self, DatagenError> {
        let attribute = attribute.into();
        let label = attribute.replace('_', " ");
        Self::with_label(attribute, label, values)
    }

    pub fn with_label(
        attribute: impl Into<String>,
        label: impl Into<String>,
        values: Vec<String>,
    ) -> Result<Self, DatagenError> {
        let attribute = attribute.into();
        if attribute.trim().is_empty() || attribute == "name" {
            return Err(DatagenError::InvalidPool(format!(
                "attribute name `{attribute}` is reserved or blank"
            )));
        }
        check_values(&attribute, &values)?;
        Ok(Self {
            attribute,
            label: label.into(),
            values,
        })
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    /// Human-readable attribute name used in generated text.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn contains(&self, value: &str) -> bool {
        self.values.iter().any(|v| v == value)
    }
}

/// Name parts plus the attribute pools.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPoolSet")]
pub struct PoolSet {
    first_names: Vec<String>,
    last_names: Vec<String>,
    attributes: Vec<AttributePool>,
}

#[derive(Deserialize)]
struct RawPoolSet {
    first_names: Vec<String>,
    last_names: Vec<String>,
    attributes: Vec<AttributePool>,
}

impl TryFrom<RawPoolSet> for PoolSet {
    type Error = DatagenError;
    fn try_from(raw: RawPoolSet) -> Result<Self, Self::Error> {
        Self::new(raw.first_names, raw.last_names, raw.attributes)
    }
}

impl PoolSet {
    pub fn new(
        first_names: Vec<String>,
        last_names: Vec<String>,
        attributes: Vec<AttributePool>,
    ) -> Result<Self, DatagenError> {
        check_values("first_names", &first_names)?;
        check_values("last_names", &last_names)?;
        let mut seen = BTreeSet::new();
        for p in &attributes {
            if !seen.insert(p.attribute()) {
                return Err(DatagenError::InvalidPool(format!(
                    "attribute `{}` defined twice",
                    p.attribute()
                )));
            }
        }
        Ok(Self {
            first_names,
            last_names,
            attributes,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, DatagenError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, DatagenError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn default_pools() -> Self {
        Self::from_json(DEFAULT_POOLS_JSON).expect("bundled pools are valid")
    }

    pub fn attributes(&self) -> &[AttributePool] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributePool> {
        self.attributes.iter().find(|p| p.attribute() == name)
    }

    pub fn first_names(&self) -> &[String] {
        &self.first_names
    }

    pub fn last_names(&self) -> &[String] {
        &self.last_names
    }
}

/// One fictitious person.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub attributes: BTreeMap<String, String>,
}

/// Conjunction of attribute values that must not co-occur.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExclusionRule(pub BTreeMap<String, String>);

impl ExclusionRule {
    pub fn new<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self(
            pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    pub fn matches(&self, profile: &Profile) -> bool {
        self.0
            .iter()
            .all(|(k, v)| profile.attributes.get(k) == Some(v))
    }

    fn validate(&self, pools: &PoolSet) -> Result<(), DatagenError> {
        if self.0.is_empty() {
            return Err(DatagenError::InvalidRule(
                "empty rule excludes everything".into(),
            ));
        }
        for (attr, value) in &self.0 {
            let pool = pools
                .attribute(attr)
                .ok_or_else(|| DatagenError::UnknownAttribute(attr.clone()))?;
            if !pool.contains(value) {
                return Err(DatagenError::InvalidRule(format!(
                    "`{value}` is not in the `{attr}` pool"
                )));
            }
        }
        Ok(())
    }
}

pub fn load_rules(text: &str) -> Result<Vec<ExclusionRule>, DatagenError> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingOptions {
    /// Redraw profiles whose full name is already taken.
    pub unique_names: bool,
    pub max_attempts: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            unique_names: true,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// Draws `n` profiles, each attribute uniformly from its pool, redrawing
/// any profile that matches an exclusion rule. Deterministic in `seed`.
pub fn sample_profiles(
    pools: &PoolSet,
    n: usize,
    seed: u64,
    rules: &[ExclusionRule],
    options: &SamplingOptions,
) -> Result<Vec<Profile>, DatagenError> {
    if n == 0 {
        return Err(DatagenError::EmptyInput);
    }
    if options.max_attempts == 0 {
        return Err(DatagenError::InvalidConfig(
            "max_attempts must be positive".into(),
        ));
    }
    for r in rules {
        r.validate(pools)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    for index in 0..n {
        let mut accepted = None;
        for _ in 0..options.max_attempts {
            let first = pools.first_names.choose(&mut rng).expect("non-empty pool");
            let last = pools.last_names.choose(&mut rng).expect("non-empty pool");
            let attributes = pools
                .attributes
                .iter()
                .map(|p| {
                    let v = p.values.choose(&mut rng).expect("non-empty pool");
                    (p.attribute.clone(), v.clone())
                })
                .collect();
            let profile = Profile {
                name: format!("{first} {last}"),
                attributes,
            };
            if options.unique_names && names.contains(&profile.name) {
                continue;
            }
            if rules.iter().any(|r| r.matches(&profile)) {
                continue;
            }
            accepted = Some(profile);
            break;
        }
        let profile = accepted.ok_or(DatagenError::ConstraintUnsatisfiable {
            index,
            attempts: options.max_attempts,
        })?;
        names.insert(profile.name.clone());
        out.push(profile);
    }
    Ok(out)
}

pub fn read_profiles_jsonl(reader: impl BufRead) -> Result<Vec<Profile>, DatagenError> {
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

/// `H(counts) / ln(pool_size)`. Pools with fewer than two values have no
/// room for diversity and score 0.
pub fn entropy_from_counts(counts: &[usize], pool_size: usize) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 || pool_size < 2 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    (h / (pool_size as f64).ln()).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewEntry {
    pub attribute: String,
    pub histogram: BTreeMap<String, usize>,
    /// Pool size used for normalisation.
    pub pool_size: usize,
    pub normalized_entropy: f64,
    /// Entropy below the threshold.
    pub flagged: bool,
}

/// Per-attribute value histogram and normalised entropy.
///
/// With `pools`, normalisation uses the declared pool size; otherwise it
/// uses the number of distinct observed values.
pub fn skew_report(
    profiles: &[Profile],
    pools: Option<&PoolSet>,
    threshold: f64,
) -> Result<Vec<SkewEntry>, DatagenError> {
    if profiles.is_empty() {
        return Err(DatagenError::EmptyInput);
    }
    let mut hist: BTreeMap<&str, BTreeMap<String, usize>> = BTreeMap::new();
    for p in profiles {
        for (k, v) in &p.attributes {
            *hist.entry(k).or_default().entry(v.clone()).or_default() += 1;
        }
    }
    hist.into_iter()
        .map(|(attr, histogram)| {
            let pool_size = match pools {
                Some(ps) => ps
                    .attribute(attr)
                    .ok_or_else(|| DatagenError::UnknownAttribute(attr.to_string()))?
                    .values()
                    .len(),
                None => histogram.len(),
            };
            let counts: Vec<usize> = histogram.values().copied().collect();
            let e = entropy_from_counts(&counts, pool_size);
            Ok(SkewEntry {
                attribute: attr.to_string(),
                histogram,
                pool_size,
                normalized_entropy: e,
                flagged: e < threshold,
            })
        })
        .collect()
}
