mod data;
mod eval;
mod losses;
mod sim;

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use thiserror::Error;

use crate::Command;

/// Some cells or pairs failed because a remote service did.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct TransportFailure(pub String);

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Evaluate(a) => eval::evaluate(a),
        Command::Kss(a) => eval::kss(a),
        Command::Kps(a) => eval::kps(a),
        Command::Report(a) => eval::report(a),
        Command::Simulate(a) => sim::simulate(a),
        Command::Sweep(a) => sim::sweep(a),
        Command::Datagen(a) => data::datagen(a),
        Command::Judge(a) => data::judge(a),
        Command::Losses(a) => losses::losses(a),
    }
}

/// Writes `text` to `out`, or to stdout without one.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.is_empty() && !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}
