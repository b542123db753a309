//! On-disk formats for chains, run metadata, sampler schemes, and reports.
//!
//! A run directory holds `chain.csv` (header of parameter names, one row per
//! iteration), `meta.json` (strategy, seed, runtime, acceptance counts, and
//! the blocking scheme), and `report.csv` (per-parameter efficiency).
//! Floats are written in Rust's shortest round-trip decimal form, so writing
//! a chain and reading it back is bit-exact, and identical seeded runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::EfficiencyReport;
use crate::error::{Error, Result};
use crate::mcmc::{BlockAcceptance, ChainOutput, SamplerScheme};

pub const CHAIN_FILE: &str = "chain.csv";
pub const META_FILE: &str = "meta.json";
pub const REPORT_FILE: &str = "report.csv";

/// Metadata stored beside each chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub strategy: String,
    pub iterations: usize,
    pub seed: u64,
    pub runtime_seconds: f64,
    pub scheme: SamplerScheme,
    pub acceptance: Vec<BlockAcceptance>,
}

impl RunMeta {
    pub fn from_chain(chain: &ChainOutput, strategy: &str) -> Self {
        Self {
            strategy: strategy.to_string(),
            iterations: chain.iterations(),
            seed: chain.seed,
            runtime_seconds: chain.runtime_seconds,
            scheme: chain.scheme.clone(),
            acceptance: chain.acceptance.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Chain CSV
// ---------------------------------------------------------------------------

pub fn write_chain_csv(path: &Path, chain: &ChainOutput) -> Result<()> {
    let mut out = String::with_capacity(16 * chain.samples.len());
    out.push_str(&chain.names.join(","));
    out.push('\n');
    for it in 0..chain.iterations() {
        let row = chain.row(it);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parameter names and row-major samples from a chain CSV.
pub fn read_chain_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header row".into(),
    })?;
    let names: Vec<String> = header.split(',').map(str::to_string).collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: "empty parameter name in header".into(),
        });
    }
    let dim = names.len();
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!("{} fields, expected {dim}", fields.len()),
            });
        }
        for field in fields {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad float {field:?}"),
            })?;
            samples.push(v);
        }
    }
    Ok((names, samples))
}

// ---------------------------------------------------------------------------
// JSON sidecars
// ---------------------------------------------------------------------------

pub fn write_meta_json(path: &Path, chain: &ChainOutput, strategy: &str) -> Result<()> {
    let meta = RunMeta::from_chain(chain, strategy);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_meta_json(path: &Path) -> Result<RunMeta> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_scheme_json(path: &Path, scheme: &SamplerScheme) -> Result<()> {
    let mut text = serde_json::to_string_pretty(scheme)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_scheme_json(path: &Path) -> Result<SamplerScheme> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

// ---------------------------------------------------------------------------
// Run directories
// ---------------------------------------------------------------------------

/// Write `chain.csv` and `meta.json` into `dir` (created if absent).
pub fn write_run(dir: &Path, chain: &ChainOutput, strategy: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_chain_csv(&dir.join(CHAIN_FILE), chain)?;
    write_meta_json(&dir.join(META_FILE), chain, strategy)
}

/// Reassemble a chain and its strategy label from a run directory.
pub fn read_run(dir: &Path) -> Result<(ChainOutput, String)> {
    let (names, samples) = read_chain_csv(&dir.join(CHAIN_FILE))?;
    let meta = read_meta_json(&dir.join(META_FILE))?;
    if samples.len() != meta.iterations * names.len() {
        return Err(Error::Dimension(format!(
            "chain holds {} values but metadata promises {} iterations of {} parameters",
            samples.len(),
            meta.iterations,
            names.len()
        )));
    }
    let chain = ChainOutput {
        dim: names.len(),
        names,
        samples,
        seed: meta.seed,
        runtime_seconds: meta.runtime_seconds,
        acceptance: meta.acceptance,
        scheme: meta.scheme,
    };
    Ok((chain, meta.strategy))
}

pub fn write_report_csv(path: &Path, report: &EfficiencyReport) -> Result<()> {
    fs::write(path, report.to_csv())?;
    Ok(())
}
