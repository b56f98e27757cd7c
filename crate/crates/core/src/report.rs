//! Tables, histograms and sweep output.
//!
//! Displayed values are rounded to two decimals, and relative increases
//! are computed from those rounded values so that every subscript can be
//! re-derived from the printed numbers. JSON output keeps full precision.
//! Nothing time-dependent is rendered, so identical inputs give
//! byte-identical documents.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    relative_increase, Case, ForgettingScores, MetricError, MetricResult, PersistenceReport,
    ScoreMode,
};
use crate::simulator::SweepRow;

/// Shown for undefined persistence values.
pub const UNDEFINED_CELL: &str = "—";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no baseline value for {metric} {mode} {ratio} {case}")]
    MissingBaseline {
        metric: String,
        mode: ScoreMode,
        ratio: String,
        case: Case,
    },
    #[error("bin count must be positive")]
    InvalidBins,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[serde(rename = "md")]
    Markdown,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(OutputFormat::Markdown),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!(
                "unknown format `{other}` (expected md, csv or json)"
            )),
        }
    }
}

/// Two-decimal rounding, half away from zero.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

fn signed(p: i64) -> String {
    if p >= 0 {
        format!("+{p}")
    } else {
        p.to_string()
    }
}

/// `value_{±pct}` for methods, the plain value for baselines.
pub fn format_cell(value: f64, relative: Option<i64>) -> String {
    match relative {
        Some(p) => format!("{}_{{{}}}", fmt2(value), signed(p)),
        None => fmt2(value),
    }
}

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = md_row(header);
    out.push_str(&md_row(&vec!["---".to_string(); header.len()]));
    for r in rows {
        out.push_str(&md_row(r));
    }
    out
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json_string<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

// ---------------------------------------------------------------- KSS

/// Metric results of one method at one forget ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KssEntry {
    pub method: String,
    /// Forget-ratio label such as `p1`.
    pub ratio: String,
    pub results: Vec<MetricResult>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KssColumn {
    pub metric: String,
    pub ratio: String,
    pub case: Case,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KssCell {
    pub value: f64,
    /// Percent change of the rounded value against the rounded baseline.
    pub relative_increase: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KssRow {
    pub method: String,
    pub mode: ScoreMode,
    pub baseline: bool,
    pub cells: Vec<Option<KssCell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KssTable {
    pub columns: Vec<KssColumn>,
    pub rows: Vec<KssRow>,
}

fn metric_title(metric: &str) -> &str {
    match metric {
        "kss_roc" => "KSS-ROC",
        "kss_pr" => "KSS-PR",
        other => other,
    }
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items
        .filter(|s| seen.insert(*s))
        .map(str::to_string)
        .collect()
}

fn lookup(
    entries: &[&KssEntry],
    ratio: &str,
    metric: &str,
    mode: ScoreMode,
    case: Case,
) -> Option<f64> {
    entries
        .iter()
        .filter(|e| e.ratio == ratio)
        .flat_map(|e| &e.results)
        .find(|r| r.metric == metric && r.mode == mode && r.case == case)
        .map(|r| r.value)
}

/// Table with one row per (method, mode) and one column per
/// (metric, ratio, case). Rows of `baseline` come first and carry no
/// relative increase; every other cell needs a matching baseline cell.
pub fn kss_table(
    entries: &[KssEntry],
    baseline: Option<&str>,
    modes: &[ScoreMode],
    cases: &[Case],
) -> Result<KssTable, ReportError> {
    let ratios = first_seen(entries.iter().map(|e| e.ratio.as_str()));
    let mut methods = first_seen(entries.iter().map(|e| e.method.as_str()));
    if let Some(b) = baseline {
        if let Some(pos) = methods.iter().position(|m| m == b) {
            let m = methods.remove(pos);
            methods.insert(0, m);
        }
    }

    let mut columns = Vec::new();
    for metric in ["kss_roc", "kss_pr"] {
        for ratio in &ratios {
            for &case in cases {
                columns.push(KssColumn {
                    metric: metric.to_string(),
                    ratio: ratio.clone(),
                    case,
                });
            }
        }
    }

    let base_entries: Vec<&KssEntry> = entries
        .iter()
        .filter(|e| Some(e.method.as_str()) == baseline)
        .collect();
    let mut rows = Vec::new();
    for method in &methods {
        let is_base = Some(method.as_str()) == baseline;
        let own: Vec<&KssEntry> = entries.iter().filter(|e| &e.method == method).collect();
        for &mode in modes {
            let mut cells = Vec::with_capacity(columns.len());
            for col in &columns {
                let Some(value) = lookup(&own, &col.ratio, &col.metric, mode, col.case) else {
                    cells.push(None);
                    continue;
                };
                let rel = match baseline {
                    Some(_) if !is_base => {
                        let b = lookup(&base_entries, &col.ratio, &col.metric, mode, col.case)
                            .ok_or_else(|| ReportError::MissingBaseline {
                                metric: col.metric.clone(),
                                mode,
                                ratio: col.ratio.clone(),
                                case: col.case,
                            })?;
                        Some(relative_increase(round2(value), round2(b))?)
                    }
                    _ => None,
                };
                cells.push(Some(KssCell {
                    value,
                    relative_increase: rel,
                }));
            }
            rows.push(KssRow {
                method: method.clone(),
                mode,
                baseline: is_base,
                cells,
            });
        }
    }
    Ok(KssTable { columns, rows })
}

#[derive(Serialize)]
struct KssCsvRow<'a> {
    method: &'a str,
    mode: ScoreMode,
    metric: &'a str,
    ratio: &'a str,
    case: Case,
    value: f64,
    rounded: f64,
    relative_increase: Option<i64>,
}

pub fn render_kss(table: &KssTable, format: OutputFormat) -> Result<String, ReportError> {
    match format {
        OutputFormat::Json => json_string(table),
        OutputFormat::Csv => {
            let mut rows = Vec::new();
            for r in &table.rows {
                for (col, cell) in table.columns.iter().zip(&r.cells) {
                    if let Some(c) = cell {
                        rows.push(KssCsvRow {
                            method: &r.method,
                            mode: r.mode,
                            metric: &col.metric,
                            ratio: &col.ratio,
                            case: col.case,
                            value: c.value,
                            rounded: round2(c.value),
                            relative_increase: c.relative_increase,
                        });
                    }
                }
            }
            csv_string(&rows)
        }
        OutputFormat::Markdown => {
            let mut header = vec!["Method".to_string(), "Mode".to_string()];
            header.extend(
                table
                    .columns
                    .iter()
                    .map(|c| format!("{} {} {}", metric_title(&c.metric), c.ratio, c.case.title())),
            );
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let mut cells = vec![r.method.clone(), r.mode.title().to_string()];
                    cells.extend(r.cells.iter().map(|c| match c {
                        Some(c) => format_cell(c.value, c.relative_increase),
                        None => String::new(),
                    }));
                    cells
                })
                .collect();
            let mut out = String::from("## Knowledge separability\n\n");
            out.push_str(&md_table(&header, &rows));
            out.push_str(
                "\nSubscripts: percent change against the baseline, from the two-decimal values.\n",
            );
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------- KPS

/// Persistence results of one method at one (ratio, case).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpsEntry {
    pub ratio: String,
    pub case: Case,
    pub report: PersistenceReport,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpsColumn {
    pub ratio: String,
    pub case: Case,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpsCell {
    pub value: Option<f64>,
    pub defined_pairs: usize,
    pub total_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpsRow {
    pub base: String,
    pub cells: Vec<Option<KpsCell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpsTable {
    pub columns: Vec<KpsColumn>,
    /// One row per base language, sorted by code.
    pub rows: Vec<KpsRow>,
    /// Per-column mean over defined cells.
    pub average: Vec<Option<f64>>,
    /// Source reports, for the pairwise matrices.
    pub entries: Vec<KpsEntry>,
}

pub fn kps_table(entries: &[KpsEntry]) -> KpsTable {
    let columns: Vec<KpsColumn> = entries
        .iter()
        .map(|e| KpsColumn {
            ratio: e.ratio.clone(),
            case: e.case,
        })
        .collect();
    let bases: BTreeSet<&str> = entries
        .iter()
        .flat_map(|e| e.report.kps_by_base.iter().map(|b| b.base.as_str()))
        .collect();
    let rows: Vec<KpsRow> = bases
        .iter()
        .map(|base| KpsRow {
            base: base.to_string(),
            cells: entries
                .iter()
                .map(|e| {
                    e.report.kps_for(base).map(|b| KpsCell {
                        value: b.value,
                        defined_pairs: b.defined_pairs,
                        total_pairs: b.total_pairs,
                    })
                })
                .collect(),
        })
        .collect();
    let average = (0..columns.len())
        .map(|j| {
            let vals: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.cells[j].as_ref().and_then(|c| c.value))
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    KpsTable {
        columns,
        rows,
        average,
        entries: entries.to_vec(),
    }
}

fn opt2(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED_CELL.to_string(), fmt2)
}

#[derive(Serialize)]
struct KpsCsvRow<'a> {
    base: &'a str,
    ratio: &'a str,
    case: Case,
    value: Option<f64>,
    defined_pairs: Option<usize>,
    total_pairs: Option<usize>,
}

pub fn render_kps(table: &KpsTable, format: OutputFormat) -> Result<String, ReportError> {
    match format {
        OutputFormat::Json => json_string(table),
        OutputFormat::Csv => {
            let mut rows = Vec::new();
            for r in &table.rows {
                for (col, cell) in table.columns.iter().zip(&r.cells) {
                    if let Some(c) = cell {
                        rows.push(KpsCsvRow {
                            base: &r.base,
                            ratio: &col.ratio,
                            case: col.case,
                            value: c.value,
                            defined_pairs: Some(c.defined_pairs),
                            total_pairs: Some(c.total_pairs),
                        });
                    }
                }
            }
            for (col, avg) in table.columns.iter().zip(&table.average) {
                rows.push(KpsCsvRow {
                    base: "avg",
                    ratio: &col.ratio,
                    case: col.case,
                    value: *avg,
                    defined_pairs: None,
                    total_pairs: None,
                });
            }
            csv_string(&rows)
        }
        OutputFormat::Markdown => {
            let mut header = vec!["Base".to_string()];
            header.extend(
                table
                    .columns
                    .iter()
                    .map(|c| format!("{} {}", c.ratio, c.case.title())),
            );
            let mut rows: Vec<Vec<String>> = Vec::new();
            let mut notes = Vec::new();
            for r in &table.rows {
                let mut cells = vec![r.base.clone()];
                for (col, cell) in table.columns.iter().zip(&r.cells) {
                    match cell {
                        Some(c) => {
                            cells.push(opt2(c.value));
                            if c.defined_pairs < c.total_pairs {
                                notes.push(format!(
                                    "{} {} {}: {}/{} comparison languages defined",
                                    r.base,
                                    col.ratio,
                                    col.case.title(),
                                    c.defined_pairs,
                                    c.total_pairs
                                ));
                            }
                        }
                        None => cells.push(String::new()),
                    }
                }
                rows.push(cells);
            }
            let mut avg = vec!["avg".to_string()];
            avg.extend(table.average.iter().map(|v| opt2(*v)));
            rows.push(avg);

            let mut out = String::from("## Knowledge persistence\n\n");
            out.push_str(&md_table(&header, &rows));
            let _ = writeln!(
                out,
                "\n{UNDEFINED_CELL}: no forget instance was judged forgotten in the base language, so the score is undefined. The avg row skips undefined cells."
            );
            if !notes.is_empty() {
                out.push_str("\nPartial coverage:\n\n");
                for n in notes {
                    let _ = writeln!(out, "- {n}");
                }
            }
            for e in &table.entries {
                let _ = writeln!(
                    out,
                    "\n### Pairwise persistence, {} {}\n",
                    e.ratio,
                    e.case.title()
                );
                out.push_str(&pairwise_markdown(&e.report));
            }
            Ok(out)
        }
    }
}

/// Base languages as rows, comparison languages as columns.
pub fn pairwise_markdown(report: &PersistenceReport) -> String {
    let bases = first_seen(report.pairwise.iter().map(|p| p.base.as_str()));
    // Columns follow the row order, then any language that is never a base.
    let others: Vec<String> = first_seen(
        bases
            .iter()
            .map(String::as_str)
            .chain(report.pairwise.iter().map(|p| p.other.as_str())),
    )
    .into_iter()
    .filter(|o| report.pairwise.iter().any(|p| &p.other == o))
    .collect();
    if bases.is_empty() {
        return "(no pairs)\n".to_string();
    }
    let mut header = vec!["base \\ other".to_string()];
    header.extend(others.iter().cloned());
    let rows: Vec<Vec<String>> = bases
        .iter()
        .map(|b| {
            let mut cells = vec![b.clone()];
            cells.extend(others.iter().map(|o| match report.pair(b, o) {
                Some(p) => opt2(p.value),
                None => String::new(),
            }));
            cells
        })
        .collect();
    md_table(&header, &rows)
}

// ---------------------------------------------------------- histogram

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub mode: ScoreMode,
    pub bins: usize,
    /// `bins + 1` edges over [0, 1].
    pub edges: Vec<f64>,
    /// Fraction of forget instances per bin.
    pub forget: Vec<f64>,
    /// Fraction of retain instances per bin.
    pub retain: Vec<f64>,
    pub n_forget: usize,
    pub n_retain: usize,
}

fn bin_of(score: f64, bins: usize) -> usize {
    ((score.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

fn densities(values: &[f64], bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for v in values {
        counts[bin_of(*v, bins)] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / values.len() as f64)
        .collect()
}

/// Per-class score distributions over `bins` equal-width bins of [0, 1].
/// The top bin is closed, so a score of 1 lands in it.
pub fn histogram_data(scores: &ForgettingScores, bins: usize) -> Result<Histogram, ReportError> {
    if bins == 0 {
        return Err(ReportError::InvalidBins);
    }
    let (f, r) = (scores.forget_values(), scores.retain_values());
    if f.is_empty() {
        return Err(MetricError::EmptyClass("forget").into());
    }
    if r.is_empty() {
        return Err(MetricError::EmptyClass("retain").into());
    }
    Ok(Histogram {
        mode: scores.mode,
        bins,
        edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        forget: densities(&f, bins),
        retain: densities(&r, bins),
        n_forget: f.len(),
        n_retain: r.len(),
    })
}

#[derive(Serialize)]
struct HistCsvRow {
    bin: usize,
    lower: f64,
    upper: f64,
    forget: f64,
    retain: f64,
}

pub fn render_histogram(h: &Histogram, format: OutputFormat) -> Result<String, ReportError> {
    let rows: Vec<HistCsvRow> = (0..h.bins)
        .map(|i| HistCsvRow {
            bin: i,
            lower: h.edges[i],
            upper: h.edges[i + 1],
            forget: h.forget[i],
            retain: h.retain[i],
        })
        .collect();
    match format {
        OutputFormat::Json => json_string(h),
        OutputFormat::Csv => csv_string(&rows),
        OutputFormat::Markdown => {
            let header: Vec<String> = ["Bin", "Forget", "Retain"].map(String::from).to_vec();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        format!(
                            "[{:.2}, {:.2}{}",
                            r.lower,
                            r.upper,
                            if r.bin + 1 == h.bins { "]" } else { ")" }
                        ),
                        format!("{:.3}", r.forget),
                        format!("{:.3}", r.retain),
                    ]
                })
                .collect();
            let mut out = format!(
                "## Forgetting score distribution ({}, {} forget / {} retain)\n\n",
                h.mode.title(),
                h.n_forget,
                h.n_retain
            );
            out.push_str(&md_table(&header, &body));
            Ok(out)
        }
    }
}

// -------------------------------------------------------------- sweep

pub fn render_sweep(rows: &[SweepRow], format: OutputFormat) -> Result<String, ReportError> {
    match format {
        OutputFormat::Json => json_string(&rows),
        OutputFormat::Csv => csv_string(rows),
        OutputFormat::Markdown => {
            let header: Vec<String> = ["Param", "Value", "Seed", "Metric", "Mode", "Case", "Score"]
                .map(String::from)
                .to_vec();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.param.clone(),
                        r.value.to_string(),
                        r.seed.to_string(),
                        r.metric.clone(),
                        r.mode.map_or(String::new(), |m| m.as_str().to_string()),
                        r.case.map_or(String::new(), |c| c.as_str().to_string()),
                        r.score
                            .map_or_else(|| UNDEFINED_CELL.to_string(), |s| format!("{s:.4}")),
                    ]
                })
                .collect();
            let mut out = String::from("## Sweep\n\n");
            out.push_str(&md_table(&header, &body));
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{BaseKps, ComparisonLabel, PairwiseEntry};

    fn result(metric: &str, mode: ScoreMode, case: Case, value: f64) -> MetricResult {
        MetricResult {
            metric: metric.into(),
            mode,
            case,
            value,
            n_forget: 1,
            n_retain: 1,
        }
    }

    fn entry(method: &str, ratio: &str, roc: f64) -> KssEntry {
        KssEntry {
            method: method.into(),
            ratio: ratio.into(),
            results: vec![
                result("kss_roc", ScoreMode::Prob, Case::Case1, roc),
                result("kss_pr", ScoreMode::Prob, Case::Case1, 0.01),
            ],
        }
    }

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(0.57, Some(10)), "0.57_{+10}");
        assert_eq!(format_cell(0.52, Some(0)), "0.52_{+0}");
        assert_eq!(format_cell(0.40, Some(-23)), "0.40_{-23}");
        assert_eq!(format_cell(0.52, None), "0.52");
    }

    #[test]
    fn kss_table_layout_and_subscripts() {
        let entries = vec![entry("GA", "p1", 0.5712), entry("MEM", "p1", 0.5249)];
        let t = kss_table(&entries, Some("MEM"), &[ScoreMode::Prob], &[Case::Case1]).unwrap();
        assert_eq!(t.columns.len(), 2);
        assert_eq!(t.rows[0].method, "MEM");
        assert!(t.rows[0].cells[0]
            .as_ref()
            .unwrap()
            .relative_increase
            .is_none());
        assert_eq!(
            t.rows[1].cells[0].as_ref().unwrap().relative_increase,
            Some(10)
        );
        let md = render_kss(&t, OutputFormat::Markdown).unwrap();
        assert!(md.contains("| MEM | Prob | 0.52 | 0.01 |"));
        assert!(md.contains("| GA | Prob | 0.57_{+10} | 0.01_{+0} |"));
    }

    #[test]
    fn missing_and_zero_baseline() {
        let entries = vec![entry("GA", "p1", 0.57), entry("MEM", "p3", 0.52)];
        assert!(matches!(
            kss_table(&entries, Some("MEM"), &[ScoreMode::Prob], &[Case::Case1]),
            Err(ReportError::MissingBaseline { .. })
        ));
        let zero = vec![entry("GA", "p1", 0.57), entry("MEM", "p1", 0.001)];
        assert!(matches!(
            kss_table(&zero, Some("MEM"), &[ScoreMode::Prob], &[Case::Case1]),
            Err(ReportError::Metric(MetricError::ZeroBaseline))
        ));
    }

    #[test]
    fn csv_and_json_agree() {
        let entries = vec![entry("GA", "p1", 0.123456789), entry("MEM", "p1", 0.5)];
        let t = kss_table(&entries, Some("MEM"), &[ScoreMode::Prob], &[Case::Case1]).unwrap();
        let csv_text = render_kss(&t, OutputFormat::Csv).unwrap();
        let json: KssTable =
            serde_json::from_str(&render_kss(&t, OutputFormat::Json).unwrap()).unwrap();
        let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
        let csv_values: Vec<f64> = rdr
            .records()
            .map(|r| r.unwrap()[5].parse().unwrap())
            .collect();
        let json_values: Vec<f64> = json
            .rows
            .iter()
            .flat_map(|r| r.cells.iter().flatten().map(|c| c.value))
            .collect();
        assert_eq!(csv_values, json_values);
        assert_eq!(render_kss(&t, OutputFormat::Csv).unwrap(), csv_text);
    }

    fn report(bases: &[(&str, Option<f64>)]) -> PersistenceReport {
        PersistenceReport {
            comparison_set_label: ComparisonLabel::Case1HoldOut,
            pairwise: bases
                .iter()
                .map(|(b, v)| PairwiseEntry {
                    base: b.to_string(),
                    other: "af".into(),
                    value: *v,
                    forgotten_in_base: usize::from(v.is_some()),
                    retained_in_other: 0,
                })
                .collect(),
            kps_by_base: bases
                .iter()
                .map(|(b, v)| BaseKps {
                    base: b.to_string(),
                    value: *v,
                    defined_pairs: usize::from(v.is_some()),
                    total_pairs: 1,
                    coverage: if v.is_some() { 1.0 } else { 0.0 },
                })
                .collect(),
        }
    }

    #[test]
    fn kps_layout_with_undefined() {
        let langs = ["bn", "de", "en", "he", "ru", "sq", "ta", "zh"];
        let mut entries = Vec::new();
        for ratio in ["p1", "p3", "p5"] {
            for case in [Case::Case1, Case::Case2] {
                let bases: Vec<_> = langs
                    .iter()
                    .map(|l| (*l, if *l == "zh" { None } else { Some(0.2) }))
                    .collect();
                entries.push(KpsEntry {
                    ratio: ratio.into(),
                    case,
                    report: report(&bases),
                });
            }
        }
        let t = kps_table(&entries);
        assert_eq!(t.rows.len(), 8);
        assert_eq!(t.columns.len(), 6);
        assert!(t.average.iter().all(|a| (a.unwrap() - 0.2).abs() < 1e-12));
        let md = render_kps(&t, OutputFormat::Markdown).unwrap();
        assert!(md.contains("| zh | — | — | — | — | — | — |"));
        assert!(md.contains("| avg | 0.20 |"));
    }

    #[test]
    fn single_pair_matrix() {
        let md = pairwise_markdown(&report(&[("en", Some(0.5))]));
        assert_eq!(md, "| base \\ other | af |\n| --- | --- |\n| en | 0.50 |\n");
    }

    #[test]
    fn histogram_examples() {
        let s = ForgettingScores::from_values(ScoreMode::Gen, &[1.0, 1.0], &[1.0]).unwrap();
        let h = histogram_data(&s, 10).unwrap();
        assert_eq!(h.forget[9], 1.0);
        assert_eq!(h.retain[9], 1.0);

        let s = ForgettingScores::from_values(ScoreMode::Gen, &[0.9, 0.8], &[0.1, 0.2]).unwrap();
        let h = histogram_data(&s, 2).unwrap();
        assert_eq!(h.forget, vec![0.0, 1.0]);
        assert_eq!(h.retain, vec![1.0, 0.0]);
        assert!(matches!(
            histogram_data(&s, 0),
            Err(ReportError::InvalidBins)
        ));
    }
}
