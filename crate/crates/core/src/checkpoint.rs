//! Binary checkpoint container: a JSON header plus named f64 sections.
//!
//! The format is byte-stable: identical parameters always serialize to
//! identical bytes. Model checkpoints, baseline fits, and full training
//! states all share the same container.

use crate::error::{Error, Result};
use crate::model::{ArchSpec, Network};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"YRBIN01\n";

/// Writes `header` (JSON) and named float sections.
pub fn write_container(path: &Path, header: &str, sections: &[(String, &[f64])]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(header.as_bytes());
    buf.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (name, data) in sections {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in *data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<(String, Vec<(String, Vec<f64>)>)> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Format(format!(
                "truncated checkpoint {}",
                path.display()
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a checkpoint container",
            path.display()
        )));
    }
    let hlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let header = String::from_utf8(take(&mut pos, hlen)?.to_vec())
        .map_err(|_| Error::Format("non-utf8 checkpoint header".into()))?;
    let n_sections = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut sections = Vec::with_capacity(n_sections);
    for _ in 0..n_sections {
        let nlen = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, nlen)?.to_vec())
            .map_err(|_| Error::Format("non-utf8 section name".into()))?;
        let count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let raw = take(&mut pos, count * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        sections.push((name, data));
    }
    Ok((header, sections))
}

/// What a saved checkpoint contains.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointHeader {
    Network { version: u32, arch: ArchSpec },
    Constant { version: u32, mean: f64 },
    Linear { version: u32, dim: usize },
}

/// A loaded predictor: a network or one of the two baselines.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Network(Network),
    /// Constant prediction: the training-set mean year.
    Constant(f64),
    /// Ridge-regression coefficients over BoVW features (weights..., intercept).
    Linear(Vec<f64>),
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    let header = serde_json::to_string(&CheckpointHeader::Network {
        version: 1,
        arch: net.arch().clone(),
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    let params = net.parameters();
    let sections: Vec<(String, &[f64])> = params
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("param.{i}"), p.value.data()))
        .collect();
    write_container(path, &header, &sections)
}

pub fn save_constant(path: &Path, mean: f64) -> Result<()> {
    let header = serde_json::to_string(&CheckpointHeader::Constant { version: 1, mean })
        .map_err(|e| Error::Format(e.to_string()))?;
    write_container(path, &header, &[])
}

pub fn save_linear(path: &Path, coeffs: &[f64]) -> Result<()> {
    let header = serde_json::to_string(&CheckpointHeader::Linear {
        version: 1,
        dim: coeffs.len().saturating_sub(1),
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    write_container(path, &header, &[("coef".to_string(), coeffs)])
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (header, sections) = read_container(path)?;
    let header: CheckpointHeader =
        serde_json::from_str(&header).map_err(|e| Error::Format(e.to_string()))?;
    match header {
        CheckpointHeader::Network { arch, .. } => {
            let mut net = Network::from_arch(&arch)?;
            let snapshot: Vec<Vec<f64>> = sections.into_iter().map(|(_, d)| d).collect();
            net.restore_params(&snapshot)?;
            Ok(Checkpoint::Network(net))
        }
        CheckpointHeader::Constant { mean, .. } => Ok(Checkpoint::Constant(mean)),
        CheckpointHeader::Linear { .. } => {
            let coef = sections
                .into_iter()
                .find(|(n, _)| n == "coef")
                .map(|(_, d)| d)
                .ok_or_else(|| Error::Format("linear checkpoint missing coef".into()))?;
            Ok(Checkpoint::Linear(coef))
        }
    }
}
