use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;
use crate::noise::NoisePath;

use super::config::ExperimentConfig;

pub fn version() -> String {
    format!("qchaos {}", env!("CARGO_PKG_VERSION"))
}

/// Provenance block embedded in every artifact.
pub fn meta(cfg: &ExperimentConfig, extra: Value) -> Value {
    json!({
        "version": version(),
        "experiment": cfg.experiment.name.name(),
        "config": cfg,
        "extra": extra,
    })
}

/// Line-delimited JSON with a leading `{"meta": …}` header line.
pub struct NdjsonWriter {
    out: BufWriter<File>,
}

impl NdjsonWriter {
    pub fn create(path: &Path, meta: Value) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &json!({ "meta": meta }))?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn line<T: Serialize>(&mut self, v: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, v)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(v)?)?;
    Ok(())
}

/// `summary.json`: the run's summary wrapped with provenance.
pub fn write_summary<T: Serialize>(dir: &Path, cfg: &ExperimentConfig, summary: &T) -> Result<PathBuf> {
    let path = dir.join("summary.json");
    write_json(&path, &json!({ "meta": meta(cfg, Value::Null), "summary": summary }))?;
    Ok(path)
}

/// Regenerate and write the increments of realizations `0..n`.
pub fn dump_noise(dir: &Path, cfg: &ExperimentConfig, n: usize, dt: f64, steps: usize) -> Result<()> {
    for i in 0..n as u64 {
        let mut noise = NoisePath::for_realization(cfg.numerics.base_seed, i, dt)?.recording();
        for _ in 0..steps {
            noise.next_dw();
        }
        let mut out = BufWriter::new(File::create(dir.join(format!("noise-r{i}.ndjson")))?);
        noise.write_ndjson(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

/// Compact label for file names, e.g. `0.02 → 2e-2`.
pub fn label(v: f64) -> String {
    format!("{v:e}")
}
