//! Append-only run ledger: one self-describing JSON record per line,
//! schema-versioned, each carrying the config hash and seed so every
//! number in a summary is recomputable from the ledger alone.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    record: &'a str,
    config_hash: &'a str,
    module_version: &'a str,
    /// Wall-clock seconds; informational only, never used in summaries.
    ts: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(flatten)]
    payload: T,
}

pub struct RunLedger {
    out: BufWriter<File>,
    config_hash: String,
}

impl RunLedger {
    pub fn create(path: &Path, config_hash: &str) -> Result<Self> {
        let out = BufWriter::new(File::create(path)?);
        Ok(Self { out, config_hash: config_hash.to_string() })
    }

    pub fn append<T: Serialize>(&mut self, record: &str, seed: Option<u64>, payload: &T) -> Result<()> {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let env = Envelope {
            schema: SCHEMA_VERSION,
            record,
            config_hash: &self.config_hash,
            module_version: env!("CARGO_PKG_VERSION"),
            ts,
            seed,
            payload,
        };
        serde_json::to_writer(&mut self.out, &env)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
