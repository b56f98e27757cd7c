use std::fs::{self, File};
use std::io::{BufWriter, Write};

use anyhow::{anyhow, Context, Result};

use mmu_eval::dataset::Manifest;
use mmu_eval::report::render_sweep;
use mmu_eval::simulator::{self, tidy, ScenarioConfig};

use super::emit;
use crate::{ScenarioArgs, SimulateArgs, SweepArgs};

fn scenario(a: &ScenarioArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ScenarioConfig::default(),
    };
    for o in &a.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("--set `{o}`: expected KEY=VALUE"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("--set `{o}`: value is not a number"))?;
        cfg.set_param(key.trim(), value)?;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = scenario(&a.scenario)?;
    let (matrix, truth) = simulator::simulate(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let mut records = BufWriter::new(File::create(a.out.join("records.jsonl"))?);
    matrix.save_jsonl(&mut records)?;
    records.flush()?;

    let manifest = Manifest::from_spec(matrix.spec());
    fs::write(
        a.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    let mut truth_out = BufWriter::new(File::create(a.out.join("truth.jsonl"))?);
    truth.save_jsonl(&mut truth_out)?;
    truth_out.flush()?;

    fs::write(
        a.out.join("scenario.json"),
        serde_json::to_string_pretty(&cfg)? + "\n",
    )?;
    eprintln!(
        "wrote {} cells ({} forget, {} retain, {} languages) to {}",
        matrix.len(),
        cfg.n_forget,
        cfg.n_retain,
        cfg.languages.len(),
        a.out.display()
    );
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = scenario(&a.scenario)?;
    let points = simulator::sweep(&cfg, &a.param, &a.values)?;
    emit(
        a.out.as_deref(),
        &render_sweep(&tidy(&points), a.format.into())?,
    )
}
