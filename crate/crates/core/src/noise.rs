//! Replayable Wiener increments.
//!
//! A [`NoisePath`] is fully determined by `(seed, stream, dt)`. Ensemble member
//! `i` uses ChaCha stream `i` under the shared base seed, so workers derive
//! independent paths without coordination. Increments are regenerated on
//! replay rather than stored, unless recording is switched on for audit output.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NoisePath {
    seed: u64,
    stream: u64,
    dt: f64,
    sqrt_dt: f64,
    cursor: u64,
    rng: ChaCha8Rng,
    recorded: Option<Vec<f64>>,
}

impl NoisePath {
    pub fn new(seed: u64, dt: f64) -> Result<Self> {
        Self::with_stream(seed, 0, dt)
    }

    /// Path of ensemble member `index` under `base_seed`.
    pub fn for_realization(base_seed: u64, index: u64, dt: f64) -> Result<Self> {
        Self::with_stream(base_seed, index, dt)
    }

    fn with_stream(seed: u64, stream: u64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("noise dt must be > 0, got {dt}")));
        }
        Ok(Self {
            seed,
            stream,
            dt,
            sqrt_dt: dt.sqrt(),
            cursor: 0,
            rng: Self::make_rng(seed, stream),
            recorded: None,
        })
    }

    fn make_rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }

    /// Keep every drawn increment so it can be dumped later.
    pub fn recording(mut self) -> Self {
        self.recorded = Some(Vec::new());
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of increments drawn since construction or the last rewind.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Next increment, distributed `Normal(0, dt)`.
    pub fn next_dw(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let dw = z * self.sqrt_dt;
        if let Some(rec) = self.recorded.as_mut() {
            if rec.len() as u64 == self.cursor {
                rec.push(dw);
            }
        }
        self.cursor += 1;
        dw
    }

    /// Reset to the first increment; later draws repeat the earlier ones.
    pub fn rewind(&mut self) {
        self.rng = Self::make_rng(self.seed, self.stream);
        self.cursor = 0;
    }

    pub fn recorded(&self) -> Option<&[f64]> {
        self.recorded.as_deref()
    }

    /// Write recorded increments as `{"i": .., "dw": ..}` lines.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Line {
            i: usize,
            dw: f64,
        }
        let rec = self
            .recorded
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("noise path was not recording".into()))?;
        for (i, &dw) in rec.iter().enumerate() {
            serde_json::to_writer(&mut out, &Line { i, dw })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
