//! `LABEL[@RATIO]=PATH` inputs and the evaluation document that
//! `evaluate` writes and the table commands read back.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mmu_eval::dataset::{load_with_manifest, EvalMatrix, Language, Manifest};
use mmu_eval::metrics::{
    evaluate_kss, forgetting_scores, persistence_report, Case, ComparisonSet, MetricResult,
    ScoreMode,
};
use mmu_eval::report::{histogram_data, Histogram, KpsEntry, KssEntry};

pub const DEFAULT_RATIO: &str = "all";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputSpec {
    pub label: Option<String>,
    pub ratio: Option<String>,
    pub path: PathBuf,
}

impl FromStr for InputSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let Some((head, path)) = s.split_once('=') else {
            return Ok(Self {
                label: None,
                ratio: None,
                path: PathBuf::from(s),
            });
        };
        if path.is_empty() {
            return Err(format!("`{s}`: empty path"));
        }
        let (label, ratio) = match head.split_once('@') {
            Some((l, r)) => (l, Some(r)),
            None => (head, None),
        };
        if label.is_empty() || ratio.is_some_and(str::is_empty) {
            return Err(format!("`{s}`: expected LABEL[@RATIO]=PATH"));
        }
        Ok(Self {
            label: Some(label.to_string()),
            ratio: ratio.map(str::to_string),
            path: PathBuf::from(path),
        })
    }
}

impl InputSpec {
    fn default_label(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into())
    }
}

/// Which metric slices to compute.
#[derive(Clone, Debug)]
pub struct Selection {
    pub modes: Vec<ScoreMode>,
    pub cases: Vec<Case>,
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub case: Case,
    pub histogram: Histogram,
}

/// Every metric for one record file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub method: String,
    pub ratio: String,
    pub languages: Vec<Language>,
    pub n_forget: usize,
    pub n_retain: usize,
    pub kss: Vec<MetricResult>,
    pub kps: Vec<KpsEntry>,
    #[serde(default)]
    pub histograms: Vec<HistogramEntry>,
}

impl Evaluation {
    pub fn kss_entry(&self) -> KssEntry {
        KssEntry {
            method: self.method.clone(),
            ratio: self.ratio.clone(),
            results: self.kss.clone(),
        }
    }
}

fn comparison(case: Case) -> Option<ComparisonSet> {
    match case {
        Case::Case1 => Some(ComparisonSet::Case1HoldOut),
        Case::Case2 => Some(ComparisonSet::Case2TrainMinusBase),
        Case::All => None,
    }
}

pub fn evaluate(
    matrix: &EvalMatrix,
    method: &str,
    ratio: &str,
    sel: &Selection,
) -> Result<Evaluation> {
    let spec = matrix.spec();
    let kss = evaluate_kss(matrix, &sel.modes, &sel.cases)?;

    let bases = spec.training_codes();
    let mut kps = Vec::new();
    for &case in &sel.cases {
        if let Some(set) = comparison(case) {
            kps.push(KpsEntry {
                ratio: ratio.to_string(),
                case,
                report: persistence_report(matrix, &bases, &set)?,
            });
        }
    }

    let mut histograms = Vec::new();
    for &case in &sel.cases {
        let langs = case.languages(spec);
        if langs.is_empty() {
            continue;
        }
        for &mode in &sel.modes {
            let scores = forgetting_scores(matrix, mode, &langs)?;
            histograms.push(HistogramEntry {
                case,
                histogram: histogram_data(&scores, sel.bins)?,
            });
        }
    }

    Ok(Evaluation {
        method: method.to_string(),
        ratio: ratio.to_string(),
        languages: spec.languages().to_vec(),
        n_forget: spec.forget_ids().len(),
        n_retain: spec.retain_ids().len(),
        kss,
        kps,
        histograms,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    Manifest::from_json(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

/// `manifest.json` next to the record file.
fn sidecar_manifest(records: &Path) -> PathBuf {
    records
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("manifest.json")
}

pub fn load_matrix(path: &Path, manifest: Option<&Path>) -> Result<EvalMatrix> {
    let manifest_path = match manifest {
        Some(p) => p.to_path_buf(),
        None => {
            let p = sidecar_manifest(path);
            if !p.exists() {
                bail!(
                    "no --manifest given and no manifest.json next to {}",
                    path.display()
                );
            }
            p
        }
    };
    let manifest = read_manifest(&manifest_path)?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_with_manifest(BufReader::new(file), &manifest)
        .with_context(|| format!("loading records from {}", path.display()))
}

fn is_evaluation(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Reads an evaluation document (`.json`) or evaluates a record file.
/// Labels given on the command line override those stored in the document.
pub fn load_input(
    input: &InputSpec,
    manifest: Option<&Path>,
    sel: &Selection,
) -> Result<Evaluation> {
    if is_evaluation(&input.path) {
        let text = std::fs::read_to_string(&input.path)
            .with_context(|| format!("reading {}", input.path.display()))?;
        let mut ev: Evaluation = serde_json::from_str(&text)
            .with_context(|| format!("parsing evaluation {}", input.path.display()))?;
        if let Some(l) = &input.label {
            ev.method = l.clone();
        }
        if let Some(r) = &input.ratio {
            ev.ratio = r.clone();
            for k in &mut ev.kps {
                k.ratio = r.clone();
            }
        }
        ev.kss
            .retain(|m| sel.modes.contains(&m.mode) && sel.cases.contains(&m.case));
        ev.kps.retain(|k| sel.cases.contains(&k.case));
        ev.histograms
            .retain(|h| sel.modes.contains(&h.histogram.mode) && sel.cases.contains(&h.case));
        return Ok(ev);
    }
    let matrix = load_matrix(&input.path, manifest)?;
    let label = input.label.clone().unwrap_or_else(|| input.default_label());
    let ratio = input.ratio.as_deref().unwrap_or(DEFAULT_RATIO);
    evaluate(&matrix, &label, ratio, sel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_input_specs() {
        let s: InputSpec = "NPO@p1=runs/npo.jsonl".parse().unwrap();
        assert_eq!(s.label.as_deref(), Some("NPO"));
        assert_eq!(s.ratio.as_deref(), Some("p1"));
        assert_eq!(s.path, PathBuf::from("runs/npo.jsonl"));

        let s: InputSpec = "MEM=mem.json".parse().unwrap();
        assert_eq!((s.label.as_deref(), s.ratio), (Some("MEM"), None));

        let s: InputSpec = "plain.jsonl".parse().unwrap();
        assert_eq!(s.label, None);
        assert_eq!(s.default_label(), "plain");

        assert!("X@=a".parse::<InputSpec>().is_err());
        assert!("=a".parse::<InputSpec>().is_err());
        assert!("X=".parse::<InputSpec>().is_err());
    }
}
