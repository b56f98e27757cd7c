use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use mmu_eval::report::OutputFormat;
use mmu_eval::unlearn::{
    agnostic_importance, ga_loss, gagdr_loss, gaklr_loss, importance_by_dataset, npo_loss,
    read_activations_binary, read_activations_jsonl, read_distributions_jsonl,
    read_sequences_jsonl, ActivationSample, SequenceLogProb,
};

use super::emit;
use crate::{LossesArgs, Objective};

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn sequences(path: &Path) -> Result<Vec<SequenceLogProb>> {
    read_sequences_jsonl(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn activations(path: &Path) -> Result<Vec<ActivationSample>> {
    let reader = open(path)?;
    let samples = if path.extension().is_some_and(|e| e == "bin") {
        read_activations_binary(reader)
    } else {
        read_activations_jsonl(reader)
    };
    samples.with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct LossValue {
    objective: &'static str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
}

#[derive(Serialize)]
struct NeuronScore {
    neuron: usize,
    score: f64,
}

fn render_loss(v: &LossValue, format: OutputFormat) -> Result<String> {
    Ok(match format {
        OutputFormat::Json => serde_json::to_string_pretty(v)? + "\n",
        OutputFormat::Csv => format!(
            "objective,value,beta\n{},{},{}\n",
            v.objective,
            v.value,
            v.beta.map_or(String::new(), |b| b.to_string())
        ),
        OutputFormat::Markdown => {
            let beta = v.beta.map_or(String::new(), |b| format!(" (β = {b})"));
            format!(
                "| Objective | Value |\n|---|---|\n| {}{beta} | {:.6} |\n",
                v.objective, v.value
            )
        }
    })
}

fn render_scores(scores: &[NeuronScore], format: OutputFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        OutputFormat::Json => return Ok(serde_json::to_string_pretty(scores)? + "\n"),
        OutputFormat::Csv => {
            out.push_str("neuron,score\n");
            for s in scores {
                let _ = writeln!(out, "{},{}", s.neuron, s.score);
            }
        }
        OutputFormat::Markdown => {
            out.push_str("| Neuron | Score |\n|---|---|\n");
            for s in scores {
                let _ = writeln!(out, "| {} | {:.6} |", s.neuron, s.score);
            }
        }
    }
    Ok(out)
}

pub fn losses(a: LossesArgs) -> Result<()> {
    let format = a.format.into();
    let loss = |objective, value, beta| LossValue {
        objective,
        value,
        beta,
    };
    let text = match a.objective {
        Objective::Ga { forget } => {
            render_loss(&loss("ga", ga_loss(&sequences(&forget)?)?, None), format)?
        }
        Objective::Gagdr { forget, retain } => {
            let v = gagdr_loss(&sequences(&forget)?, &sequences(&retain)?)?;
            render_loss(&loss("gagdr", v, None), format)?
        }
        Objective::Gaklr { forget, retain } => {
            let dists = read_distributions_jsonl(open(&retain)?)
                .with_context(|| format!("reading {}", retain.display()))?;
            let v = gaklr_loss(&sequences(&forget)?, &dists)?;
            render_loss(&loss("gaklr", v, None), format)?
        }
        Objective::Npo { forget, beta } => {
            let v = npo_loss(&sequences(&forget)?, beta)?;
            render_loss(&loss("npo", v, Some(beta)), format)?
        }
        Objective::Importance {
            activations: path,
            epsilon,
            top,
        } => {
            let (forget, retain) = importance_by_dataset(&activations(&path)?)?;
            let mut scores: Vec<NeuronScore> = agnostic_importance(&forget, &retain, epsilon)?
                .into_iter()
                .enumerate()
                .map(|(neuron, score)| NeuronScore { neuron, score })
                .collect();
            if let Some(k) = top {
                scores.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.neuron.cmp(&y.neuron)));
                scores.truncate(k);
            }
            render_scores(&scores, format)?
        }
    };
    emit(None, &text)
}
