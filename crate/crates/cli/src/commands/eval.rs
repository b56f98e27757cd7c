use std::collections::BTreeSet;
use std::fmt::Write as _;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use mmu_eval::report::{
    kps_table, kss_table, render_histogram, render_kps, render_kss, KpsTable, KssTable,
    OutputFormat,
};

use super::emit;
use crate::inputs::{load_input, Evaluation, HistogramEntry, InputSpec, Selection};
use crate::{EvaluateArgs, KssArgs, SelectArgs, TableArgs};

fn selection(s: &SelectArgs) -> Result<Selection> {
    if s.bins == 0 {
        bail!("--bins must be positive");
    }
    Ok(Selection {
        modes: s.mode.modes(),
        cases: s.case.cases(),
        bins: s.bins,
    })
}

fn load_all(table: &TableArgs, extra: &[InputSpec], sel: &Selection) -> Result<Vec<Evaluation>> {
    let inputs: Vec<&InputSpec> = extra.iter().chain(&table.inputs).collect();
    let evals = inputs
        .par_iter()
        .map(|i| load_input(i, table.manifest.as_deref(), sel))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = BTreeSet::new();
    for e in &evals {
        if !seen.insert((e.method.as_str(), e.ratio.as_str())) {
            bail!(
                "two inputs for method `{}` at ratio `{}`",
                e.method,
                e.ratio
            );
        }
    }
    Ok(evals)
}

/// Splits `--baseline` values into the baseline label and any inputs
/// given inline.
fn baseline_inputs(values: &[String]) -> Result<(Option<String>, Vec<InputSpec>)> {
    let mut label: Option<String> = None;
    let mut inputs = Vec::new();
    for v in values {
        let this = if v.contains('=') {
            let spec: InputSpec = v.parse().map_err(anyhow::Error::msg)?;
            let l = spec.label.clone().expect("`=` form carries a label");
            inputs.push(spec);
            l
        } else {
            v.clone()
        };
        match &label {
            Some(l) if *l != this => bail!("conflicting baseline labels `{l}` and `{this}`"),
            _ => label = Some(this),
        }
    }
    Ok((label, inputs))
}

fn collect(a: &KssArgs, sel: &Selection) -> Result<(Option<String>, Vec<Evaluation>)> {
    let (baseline, extra) = baseline_inputs(&a.baseline)?;
    let evals = load_all(&a.table, &extra, sel)?;
    if let Some(b) = &baseline {
        if !evals.iter().any(|e| &e.method == b) {
            bail!("baseline `{b}` matches no input");
        }
    }
    Ok((baseline, evals))
}

fn separability(evals: &[Evaluation], baseline: Option<&str>, sel: &Selection) -> Result<KssTable> {
    let entries: Vec<_> = evals.iter().map(Evaluation::kss_entry).collect();
    Ok(kss_table(&entries, baseline, &sel.modes, &sel.cases)?)
}

#[derive(Serialize)]
struct MethodKps {
    method: String,
    table: KpsTable,
}

/// One persistence table per method, in input order. The baseline is
/// skipped when other methods are present.
fn persistence(evals: &[Evaluation], baseline: Option<&str>) -> Vec<MethodKps> {
    let mut methods: Vec<&str> = Vec::new();
    for e in evals {
        if !methods.contains(&e.method.as_str()) {
            methods.push(&e.method);
        }
    }
    if methods.len() > 1 {
        methods.retain(|m| Some(*m) != baseline);
    }
    methods
        .into_iter()
        .map(|m| {
            let entries: Vec<_> = evals
                .iter()
                .filter(|e| e.method == m)
                .flat_map(|e| e.kps.iter().cloned())
                .collect();
            MethodKps {
                method: m.to_string(),
                table: kps_table(&entries),
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Adds a leading `method` column to a CSV document.
fn with_method_column(method: &str, csv: &str, header: bool) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            if header {
                let _ = writeln!(out, "method,{line}");
            }
        } else {
            let _ = writeln!(out, "{},{line}", csv_field(method));
        }
    }
    out
}

fn render_persistence(tables: &[MethodKps], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(tables)? + "\n"),
        OutputFormat::Csv => {
            let mut out = String::new();
            for (i, t) in tables.iter().enumerate() {
                out.push_str(&with_method_column(
                    &t.method,
                    &render_kps(&t.table, format)?,
                    i == 0,
                ));
            }
            Ok(out)
        }
        OutputFormat::Markdown => {
            let mut parts = Vec::new();
            for t in tables {
                parts.push(render_kps(&t.table, format)?.replacen(
                    "## Knowledge persistence",
                    &format!("## Knowledge persistence: {}", t.method),
                    1,
                ));
            }
            Ok(parts.join("\n"))
        }
    }
}

#[derive(Serialize)]
struct HistogramRecord<'a> {
    method: &'a str,
    ratio: &'a str,
    #[serde(flatten)]
    entry: &'a HistogramEntry,
}

fn histograms(evals: &[Evaluation]) -> Vec<HistogramRecord<'_>> {
    evals
        .iter()
        .flat_map(|e| {
            e.histograms.iter().map(move |h| HistogramRecord {
                method: &e.method,
                ratio: &e.ratio,
                entry: h,
            })
        })
        .collect()
}

fn render_histograms(records: &[HistogramRecord<'_>], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(records)? + "\n"),
        OutputFormat::Csv => {
            let mut out = String::new();
            for (i, r) in records.iter().enumerate() {
                let h = &r.entry.histogram;
                let csv = render_histogram(h, format)?;
                let mut header = true;
                for line in csv.lines() {
                    if header {
                        if i == 0 {
                            let _ = writeln!(out, "method,ratio,case,mode,{line}");
                        }
                        header = false;
                    } else {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{line}",
                            csv_field(r.method),
                            csv_field(r.ratio),
                            r.entry.case,
                            h.mode.as_str()
                        );
                    }
                }
            }
            Ok(out)
        }
        OutputFormat::Markdown => {
            let mut out = String::from("## Forgetting score distributions\n");
            for r in records {
                let title = format!("### {} {} {}", r.method, r.ratio, r.entry.case.title());
                let _ = write!(
                    out,
                    "\n{}",
                    render_histogram(&r.entry.histogram, format)?.replacen(
                        "## Forgetting score distribution",
                        &title,
                        1
                    )
                );
            }
            Ok(out)
        }
    }
}

#[derive(Serialize)]
struct Document<'a> {
    inputs: Vec<String>,
    baseline: Option<&'a str>,
    kss: KssTable,
    kps: Vec<MethodKps>,
    histograms: Vec<HistogramRecord<'a>>,
}

fn render_document(
    evals: &[Evaluation],
    baseline: Option<&str>,
    sel: &Selection,
    format: OutputFormat,
) -> Result<String> {
    let doc = Document {
        inputs: evals
            .iter()
            .map(|e| format!("{}@{}", e.method, e.ratio))
            .collect(),
        baseline,
        kss: separability(evals, baseline, sel)?,
        kps: persistence(evals, baseline),
        histograms: histograms(evals),
    };
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(&doc)? + "\n"),
        OutputFormat::Csv => {
            let mut out = String::new();
            let _ = writeln!(out, "# kss");
            out.push_str(&render_kss(&doc.kss, format)?);
            let _ = writeln!(out, "\n# kps");
            out.push_str(&render_persistence(&doc.kps, format)?);
            let _ = writeln!(out, "\n# histograms");
            out.push_str(&render_histograms(&doc.histograms, format)?);
            Ok(out)
        }
        OutputFormat::Markdown => {
            let mut out = String::from("# Unlearning evaluation report\n\n");
            let _ = writeln!(out, "Inputs: {}", doc.inputs.join(", "));
            if let Some(b) = baseline {
                let _ = writeln!(out, "Baseline: {b}");
            }
            let _ = writeln!(out);
            out.push_str(&render_kss(&doc.kss, format)?);
            out.push('\n');
            out.push_str(&render_persistence(&doc.kps, format)?);
            out.push('\n');
            out.push_str(&render_histograms(&doc.histograms, format)?);
            Ok(out)
        }
    }
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let sel = selection(&a.select)?;
    let ev = load_input(&a.input, a.manifest.as_deref(), &sel)?;
    let text = match a.format.into() {
        OutputFormat::Json => serde_json::to_string_pretty(&ev)? + "\n",
        f => render_document(std::slice::from_ref(&ev), None, &sel, f)?,
    };
    emit(a.out.as_deref(), &text)
}

pub fn kss(a: KssArgs) -> Result<()> {
    let sel = selection(&a.table.select)?;
    let (baseline, evals) = collect(&a, &sel)?;
    let table = separability(&evals, baseline.as_deref(), &sel)?;
    emit(
        a.table.out.as_deref(),
        &render_kss(&table, a.table.format.into())?,
    )
}

pub fn kps(a: TableArgs) -> Result<()> {
    let sel = selection(&a.select)?;
    let evals = load_all(&a, &[], &sel)?;
    let tables = persistence(&evals, None);
    emit(
        a.out.as_deref(),
        &render_persistence(&tables, a.format.into())?,
    )
}

pub fn report(a: KssArgs) -> Result<()> {
    let sel = selection(&a.table.select)?;
    let (baseline, evals) = collect(&a, &sel)?;
    let text = render_document(&evals, baseline.as_deref(), &sel, a.table.format.into())?;
    emit(a.table.out.as_deref(), &text)
}
