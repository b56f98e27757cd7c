//! Synthetic evaluation matrices with known ground truth.
//!
//! The generative model is deliberately simple and its constants are
//! conventions of this crate, not estimates of real model behaviour. Per
//! instance:
//!
//! 1. it is known in each training language with probability
//!    `memorization.training` (and in each hold-out language with
//!    `memorization.holdout`, 0 by default);
//! 2. if known in at least one training language, it additionally becomes
//!    known in each hold-out language with probability `spread_rate`;
//! 3. forget-set knowledge in language `l` is erased with probability
//!    `unlearn_effect[l]` (plus an optional per-instance offset);
//! 4. the SE bit is the surviving latent bit flipped with probability
//!    `noise`, and the answer probability is a Beta draw, high when known.
//!
//! Every uniform is drawn regardless of parameter values, so a seed fixes
//! the random stream independently of the configuration.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, DatasetSpec, EvalMatrix, EvalRecord, Language, Role, Split};
use crate::metrics::{
    evaluate_kss, persistence_report, Case, ComparisonSet, MetricError, MetricResult, ScoreMode,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("unknown sweep parameter `{0}`")]
    UnknownParam(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("config: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Memorization {
    pub training: f64,
    #[serde(default)]
    pub holdout: f64,
}

impl Default for Memorization {
    fn default() -> Self {
        Self {
            training: 0.9,
            holdout: 0.0,
        }
    }
}

/// Per-language erase probability with a default for unlisted languages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnEffect {
    pub default: f64,
    #[serde(default)]
    pub per_language: BTreeMap<String, f64>,
}

impl UnlearnEffect {
    pub fn uniform(p: f64) -> Self {
        Self {
            default: p,
            per_language: BTreeMap::new(),
        }
    }

    pub fn for_language(&self, code: &str) -> f64 {
        self.per_language.get(code).copied().unwrap_or(self.default)
    }
}

impl Default for UnlearnEffect {
    fn default() -> Self {
        Self::uniform(0.8)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

fn default_languages() -> Vec<Language> {
    let training = ["en", "zh", "de", "ru", "bn", "he", "ta", "sq"];
    let holdout = ["af", "es"];
    training
        .iter()
        .map(|c| Language::new(*c, Role::Training))
        .chain(holdout.iter().map(|c| Language::new(*c, Role::HoldOut)))
        .collect()
}

fn default_count() -> usize {
    100
}
fn default_spread() -> f64 {
    0.5
}
fn default_noise() -> f64 {
    0.05
}
fn default_known() -> BetaParams {
    BetaParams {
        alpha: 9.0,
        beta: 1.0,
    }
}
fn default_unknown() -> BetaParams {
    BetaParams {
        alpha: 1.0,
        beta: 9.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_count")]
    pub n_forget: usize,
    #[serde(default = "default_count")]
    pub n_retain: usize,
    #[serde(default = "default_languages")]
    pub languages: Vec<Language>,
    #[serde(default)]
    pub memorization: Memorization,
    #[serde(default = "default_spread")]
    pub spread_rate: f64,
    #[serde(default)]
    pub unlearn_effect: UnlearnEffect,
    /// Standard deviation of a per-instance shift of the erase
    /// probability; 0 disables per-instance heterogeneity.
    #[serde(default)]
    pub instance_effect_sd: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Answer-probability distribution when the fact is known.
    #[serde(default = "default_known")]
    pub prob_known: BetaParams,
    #[serde(default = "default_unknown")]
    pub prob_unknown: BetaParams,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_forget: default_count(),
            n_retain: default_count(),
            languages: default_languages(),
            memorization: Memorization::default(),
            spread_rate: default_spread(),
            unlearn_effect: UnlearnEffect::default(),
            instance_effect_sd: 0.0,
            noise: default_noise(),
            prob_known: default_known(),
            prob_unknown: default_unknown(),
            seed: 0,
        }
    }
}

/// Parameters accepted by [`ScenarioConfig::set_param`], besides
/// `unlearn_effect.<lang>`.
pub const SWEEP_PARAMS: &[&str] = &[
    "unlearn_effect",
    "spread_rate",
    "noise",
    "memorization_training",
    "memorization_holdout",
    "instance_effect_sd",
];

fn check_rate(name: &str, v: f64) -> Result<(), SimError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(SimError::InvalidConfig(format!(
            "{name} = {v} is outside [0, 1]"
        )));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    /// TOML for `.toml` files, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        let cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text)?,
            _ => Self::from_json(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec, SimError> {
        let forget = (0..self.n_forget).map(|i| format!("f{i:05}"));
        let retain = (0..self.n_retain).map(|i| format!("r{i:05}"));
        Ok(DatasetSpec::new(
            self.languages.clone(),
            forget.collect::<Vec<_>>(),
            retain.collect::<Vec<_>>(),
        )?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_forget + self.n_retain < 2 {
            return Err(SimError::InvalidConfig(
                "need at least two instances".into(),
            ));
        }
        self.dataset_spec()?;
        check_rate("memorization.training", self.memorization.training)?;
        check_rate("memorization.holdout", self.memorization.holdout)?;
        check_rate("spread_rate", self.spread_rate)?;
        check_rate("noise", self.noise)?;
        check_rate("unlearn_effect.default", self.unlearn_effect.default)?;
        for (code, v) in &self.unlearn_effect.per_language {
            if !self.languages.iter().any(|l| &l.code == code) {
                return Err(SimError::InvalidConfig(format!(
                    "unlearn_effect names unknown language `{code}`"
                )));
            }
            check_rate(&format!("unlearn_effect.{code}"), *v)?;
        }
        if !(self.instance_effect_sd.is_finite() && self.instance_effect_sd >= 0.0) {
            return Err(SimError::InvalidConfig(
                "instance_effect_sd must be ≥ 0".into(),
            ));
        }
        for (name, b) in [
            ("prob_known", self.prob_known),
            ("prob_unknown", self.prob_unknown),
        ] {
            if !(b.alpha > 0.0 && b.beta > 0.0 && b.alpha.is_finite() && b.beta.is_finite()) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} needs positive parameters"
                )));
            }
        }
        Ok(())
    }

    /// Sets one numeric parameter. `unlearn_effect` changes the default
    /// and leaves per-language overrides in place.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), SimError> {
        match name {
            "unlearn_effect" => self.unlearn_effect.default = value,
            "spread_rate" => self.spread_rate = value,
            "noise" => self.noise = value,
            "memorization_training" => self.memorization.training = value,
            "memorization_holdout" => self.memorization.holdout = value,
            "instance_effect_sd" => self.instance_effect_sd = value,
            other => match other.strip_prefix("unlearn_effect.") {
                Some(code) if self.languages.iter().any(|l| l.code == code) => {
                    self.unlearn_effect
                        .per_language
                        .insert(code.to_string(), value);
                }
                _ => return Err(SimError::UnknownParam(other.to_string())),
            },
        }
        Ok(())
    }
}

/// Latent knowledge of one cell before and after simulated unlearning.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthCell {
    pub instance_id: String,
    pub language: String,
    pub split: Split,
    pub known_before: bool,
    pub known_after: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cells: Vec<TruthCell>,
}

impl GroundTruth {
    pub fn get(&self, instance: &str, language: &str) -> Option<&TruthCell> {
        self.cells
            .iter()
            .find(|c| c.instance_id == instance && c.language == language)
    }

    pub fn save_jsonl(&self, mut writer: impl Write) -> std::io::Result<()> {
        for c in &self.cells {
            serde_json::to_writer(&mut writer, c)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }

    pub fn load_jsonl(reader: impl BufRead) -> Result<Self, SimError> {
        let mut cells = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            cells.push(
                serde_json::from_str(&line)
                    .map_err(|e| SimError::Parse(format!("line {}: {e}", idx + 1)))?,
            );
        }
        Ok(Self { cells })
    }
}

/// Draws an evaluation matrix and its ground truth. Deterministic in
/// `config.seed`.
pub fn simulate(config: &ScenarioConfig) -> Result<(EvalMatrix, GroundTruth), SimError> {
    config.validate()?;
    let spec = config.dataset_spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let beta = |b: BetaParams| Beta::new(b.alpha, b.beta).expect("validated parameters");
    let (known_dist, unknown_dist) = (beta(config.prob_known), beta(config.prob_unknown));
    let shift = Normal::new(0.0, config.instance_effect_sd).expect("validated sd");

    let langs = spec.languages().to_vec();
    let effects: Vec<f64> = langs
        .iter()
        .map(|l| config.unlearn_effect.for_language(&l.code))
        .collect();

    let mut records = Vec::with_capacity(spec.n_instances() * langs.len());
    let mut truth = GroundTruth::default();
    for id in spec.instance_ids() {
        let split = spec.split_of(id).expect("id comes from the spec");
        let offset = shift.sample(&mut rng);

        let mut before: Vec<bool> = langs
            .iter()
            .map(|l| {
                let u: f64 = rng.random();
                match l.role {
                    Role::Training => u < config.memorization.training,
                    Role::HoldOut => u < config.memorization.holdout,
                }
            })
            .collect();
        let seeded = langs
            .iter()
            .zip(&before)
            .any(|(l, k)| l.role == Role::Training && *k);
        for (l, known) in langs.iter().zip(before.iter_mut()) {
            let u: f64 = rng.random();
            if l.role == Role::HoldOut && seeded && u < config.spread_rate {
                *known = true;
            }
        }

        for (j, l) in langs.iter().enumerate() {
            let u_erase: f64 = rng.random();
            let u_noise: f64 = rng.random();
            let p_erase = (effects[j] + offset).clamp(0.0, 1.0);
            let after = before[j] && !(split == Split::Forget && u_erase < p_erase);
            let se = after ^ (u_noise < config.noise);
            let prob = if after {
                known_dist.sample(&mut rng)
            } else {
                unknown_dist.sample(&mut rng)
            };
            records.push(
                EvalRecord::new(id.as_str(), &l.code)
                    .with_se(se)
                    .with_prob(prob),
            );
            truth.cells.push(TruthCell {
                instance_id: id.clone(),
                language: l.code.clone(),
                split,
                known_before: before[j],
                known_after: after,
            });
        }
    }
    let matrix = EvalMatrix::from_records(spec, records)?;
    Ok((matrix, truth))
}

/// Metric suite for one simulated matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub kss: Vec<MetricResult>,
    /// Mean KPS over training-language bases against the hold-out set.
    pub kps_case1: Option<f64>,
    /// Mean KPS over training-language bases against the other training languages.
    pub kps_case2: Option<f64>,
}

impl MetricBundle {
    pub fn kss(&self, metric: &str, mode: ScoreMode, case: Case) -> Option<f64> {
        self.kss
            .iter()
            .find(|m| m.metric == metric && m.mode == mode && m.case == case)
            .map(|m| m.value)
    }
}

pub fn metric_bundle(matrix: &EvalMatrix) -> Result<MetricBundle, SimError> {
    let kss = evaluate_kss(
        matrix,
        &ScoreMode::ALL,
        &[Case::Case1, Case::Case2, Case::All],
    )?;
    let bases = matrix.spec().training_codes();
    let kps = |set: ComparisonSet| -> Result<Option<f64>, SimError> {
        Ok(persistence_report(matrix, &bases, &set)?.average())
    };
    Ok(MetricBundle {
        kss,
        kps_case1: kps(ComparisonSet::Case1HoldOut)?,
        kps_case2: kps(ComparisonSet::Case2TrainMinusBase)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub metrics: MetricBundle,
}

/// Runs the scenario once per value of `param`, in parallel. Run `i` uses
/// seed `base.seed ^ i`.
pub fn sweep(
    base: &ScenarioConfig,
    param: &str,
    values: &[f64],
) -> Result<Vec<SweepPoint>, SimError> {
    // Reject unknown names even when there is nothing to run.
    base.clone().set_param(param, 0.0)?;
    let configs = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = base.clone();
            cfg.set_param(param, v)?;
            cfg.seed = base.seed ^ i as u64;
            cfg.validate()?;
            Ok((v, cfg))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    configs
        .par_iter()
        .map(|(v, cfg)| {
            let (matrix, _) = simulate(cfg)?;
            Ok(SweepPoint {
                param: param.to_string(),
                value: *v,
                seed: cfg.seed,
                metrics: metric_bundle(&matrix)?,
            })
        })
        .collect()
}

/// One row of the long-format sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub metric: String,
    pub mode: Option<ScoreMode>,
    pub case: Option<Case>,
    pub score: Option<f64>,
}

pub fn tidy(points: &[SweepPoint]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for p in points {
        let row = |metric: &str, mode, case, score| SweepRow {
            param: p.param.clone(),
            value: p.value,
            seed: p.seed,
            metric: metric.to_string(),
            mode,
            case,
            score,
        };
        for m in &p.metrics.kss {
            rows.push(row(&m.metric, Some(m.mode), Some(m.case), Some(m.value)));
        }
        rows.push(row("kps", None, Some(Case::Case1), p.metrics.kps_case1));
        rows.push(row("kps", None, Some(Case::Case2), p.metrics.kps_case2));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{forgetting_scores, kss_pr, kss_roc, pairwise_persistence};

    fn perfect() -> ScenarioConfig {
        ScenarioConfig {
            n_forget: 40,
            n_retain: 40,
            memorization: Memorization {
                training: 1.0,
                holdout: 0.0,
            },
            spread_rate: 0.7,
            unlearn_effect: UnlearnEffect::uniform(1.0),
            noise: 0.0,
            seed: 11,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let cfg = ScenarioConfig::default();
        let (a, ta) = simulate(&cfg).unwrap();
        let (b, tb) = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let other = ScenarioConfig { seed: 1, ..cfg };
        assert_ne!(simulate(&other).unwrap().0, a);
    }

    #[test]
    fn perfect_unlearning_separates() {
        let (m, _) = simulate(&perfect()).unwrap();
        let langs = m.spec().codes();
        let s = forgetting_scores(&m, ScoreMode::Gen, &langs).unwrap();
        assert_eq!(kss_roc(&s).unwrap(), 1.0);
        assert_eq!(kss_pr(&s).unwrap(), 1.0);
        for a in &langs {
            for b in &langs {
                if a != b {
                    let v = pairwise_persistence(&m, a, b).unwrap();
                    assert!(v.is_none() || v == Some(0.0));
                }
            }
        }
    }

    #[test]
    fn ground_truth_matches_emission_without_noise() {
        let (m, t) = simulate(&perfect()).unwrap();
        for c in &t.cells {
            assert_eq!(
                m.get(&c.instance_id, &c.language).unwrap().se,
                Some(c.known_after)
            );
            if c.split == Split::Retain {
                assert_eq!(c.known_before, c.known_after);
            }
        }
    }

    #[test]
    fn no_spread_means_no_holdout_knowledge() {
        let cfg = ScenarioConfig {
            spread_rate: 0.0,
            noise: 0.0,
            ..ScenarioConfig::default()
        };
        let (m, _) = simulate(&cfg).unwrap();
        for l in m.spec().holdout_codes() {
            for id in m.spec().instance_ids() {
                let r = m.get(id, &l).unwrap();
                assert_eq!(r.se, Some(false));
            }
        }
        let bundle = metric_bundle(&m).unwrap();
        assert!(bundle.kps_case1.is_none() || bundle.kps_case1 == Some(0.0));
    }

    #[test]
    fn config_validation_and_params() {
        let mut cfg = ScenarioConfig::default();
        assert!(matches!(
            cfg.set_param("learning_rate", 0.1),
            Err(SimError::UnknownParam(_))
        ));
        cfg.set_param("unlearn_effect.af", 0.0).unwrap();
        assert_eq!(cfg.unlearn_effect.for_language("af"), 0.0);
        cfg.noise = 1.5;
        assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig(_))));
        let tiny = ScenarioConfig {
            n_forget: 1,
            n_retain: 0,
            ..ScenarioConfig::default()
        };
        assert!(tiny.validate().is_err());
    }

    #[test]
    fn config_files() {
        let toml_text = "n_forget = 5\nn_retain = 6\nspread_rate = 0.25\nseed = 3\n\n[unlearn_effect]\ndefault = 0.5\nper_language = { af = 0.0 }\n";
        let cfg = ScenarioConfig::from_toml(toml_text).unwrap();
        assert_eq!((cfg.n_forget, cfg.n_retain, cfg.seed), (5, 6, 3));
        assert_eq!(cfg.unlearn_effect.for_language("af"), 0.0);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn sweep_shapes() {
        let base = ScenarioConfig {
            n_forget: 20,
            n_retain: 20,
            ..ScenarioConfig::default()
        };
        assert!(sweep(&base, "unlearn_effect", &[]).unwrap().is_empty());
        assert!(matches!(
            sweep(&base, "bogus", &[]),
            Err(SimError::UnknownParam(_))
        ));
        let pts = sweep(&base, "noise", &[0.0, 0.1]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].seed, base.seed ^ 1);
        let rows = tidy(&pts);
        assert_eq!(rows.len(), 2 * (2 * 2 * 3 + 2));
    }
}
