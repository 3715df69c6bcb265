use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::experiments::{FscoreRow, RocTable, RuntimeRow};
use super::ExperimentConfig;

fn num(x: f64) -> String {
    format!("{x}")
}

/// Columns: detector, threshold, pfa, pd, trials.
pub fn write_roc_csv(table: &RocTable, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["detector", "threshold", "pfa", "pd", "trials"])?;
    for (label, curve) in &table.curves {
        for p in curve {
            w.write_record([
                label.clone(),
                num(p.threshold),
                num(p.pfa),
                num(p.pd),
                table.trials.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fscore_csv(rows: &[FscoreRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "method", "filter", "samples", "sigma_w2", "fscore", "se", "trials", "tp", "fp", "fn",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.filter.clone(),
            r.samples.to_string(),
            num(r.sigma_w2),
            num(r.fscore),
            num(r.se),
            r.trials.to_string(),
            r.tp.to_string(),
            r.fp.to_string(),
            r.fn_.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_runtime_csv(rows: &[RuntimeRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "n", "mean_seconds", "std_seconds", "trials"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.n.to_string(),
            num(r.mean_seconds),
            num(r.std_seconds),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// SHA-256 of the compact JSON form of the configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let text = serde_json::to_string(cfg)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Run record written next to every experiment's CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, outputs: Vec<String>) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config: cfg.clone(),
            config_sha256: config_hash(cfg)?,
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
        })
    }
}
