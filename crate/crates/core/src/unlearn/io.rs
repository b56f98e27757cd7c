//! Readers for log-probability and activation dumps.
//!
//! JSONL formats, one object per line:
//! - sequences: `{"current": [..], "reference": [..]}` (reference optional)
//! - distributions: `{"current": [..], "reference": [..]}`
//! - activations: `{"activations": [..], "tag": "forget" | "retain"}`
//!
//! Binary activation format, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "MMUACT01"
//! n_samples  u64
//! n_neurons  u64
//! tags       n_samples bytes, 0 = forget, 1 = retain
//! values     n_neurons columns of n_samples f64 each (column-major)
//! ```

use std::io::{BufRead, Read, Write};

use serde::de::DeserializeOwned;

use super::{ActivationSample, DistributionPair, SequenceLogProb, UnlearnError};
use crate::dataset::Split;

pub const ACTIVATION_MAGIC: &[u8; 8] = b"MMUACT01";

fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, UnlearnError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| UnlearnError::Malformed {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_sequences_jsonl(reader: impl BufRead) -> Result<Vec<SequenceLogProb>, UnlearnError> {
    let items: Vec<SequenceLogProb> = read_jsonl(reader)?;
    for s in &items {
        s.validate()?;
    }
    Ok(items)
}

pub fn read_distributions_jsonl(
    reader: impl BufRead,
) -> Result<Vec<DistributionPair>, UnlearnError> {
    read_jsonl(reader)
}

pub fn read_activations_jsonl(reader: impl BufRead) -> Result<Vec<ActivationSample>, UnlearnError> {
    let items: Vec<ActivationSample> = read_jsonl(reader)?;
    for s in &items {
        s.validate()?;
    }
    Ok(items)
}

pub fn write_activations_binary(
    mut writer: impl Write,
    samples: &[ActivationSample],
) -> Result<(), UnlearnError> {
    let n_neurons = samples.first().map_or(0, |s| s.activations.len());
    if let Some(bad) = samples.iter().find(|s| s.activations.len() != n_neurons) {
        return Err(UnlearnError::DimensionMismatch {
            expected: n_neurons,
            found: bad.activations.len(),
        });
    }
    writer.write_all(ACTIVATION_MAGIC)?;
    writer.write_all(&(samples.len() as u64).to_le_bytes())?;
    writer.write_all(&(n_neurons as u64).to_le_bytes())?;
    let tags: Vec<u8> = samples
        .iter()
        .map(|s| match s.tag {
            Split::Forget => 0,
            Split::Retain => 1,
        })
        .collect();
    writer.write_all(&tags)?;
    for j in 0..n_neurons {
        for s in samples {
            writer.write_all(&s.activations[j].to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn read_u64(reader: &mut impl Read) -> Result<u64, UnlearnError> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_activations_binary(
    mut reader: impl Read,
) -> Result<Vec<ActivationSample>, UnlearnError> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != ACTIVATION_MAGIC {
        return Err(UnlearnError::Format("bad magic header".into()));
    }
    let n_samples = usize::try_from(read_u64(&mut reader)?)
        .map_err(|_| UnlearnError::Format("sample count too large".into()))?;
    let n_neurons = usize::try_from(read_u64(&mut reader)?)
        .map_err(|_| UnlearnError::Format("neuron count too large".into()))?;
    if n_samples
        .checked_mul(n_neurons)
        .and_then(|n| n.checked_mul(8))
        .is_none()
    {
        return Err(UnlearnError::Format("payload size overflows".into()));
    }

    let mut tags = vec![0u8; n_samples];
    reader.read_exact(&mut tags)?;
    let mut samples = tags
        .into_iter()
        .map(|t| {
            let tag = match t {
                0 => Split::Forget,
                1 => Split::Retain,
                other => return Err(UnlearnError::Format(format!("unknown tag byte {other}"))),
            };
            Ok(ActivationSample {
                activations: Vec::with_capacity(n_neurons),
                tag,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut buf = [0u8; 8];
    for _ in 0..n_neurons {
        for s in samples.iter_mut() {
            reader.read_exact(&mut buf)?;
            s.activations.push(f64::from_le_bytes(buf));
        }
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(UnlearnError::Format("trailing bytes after payload".into()));
    }
    for s in &samples {
        s.validate()?;
    }
    Ok(samples)
}
