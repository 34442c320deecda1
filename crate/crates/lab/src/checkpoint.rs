//! Versioned binary checkpoints.
//!
//! Layout, all integers and doubles little-endian:
//!
//! ```text
//! magic "SGGFCKPT" | version u32
//! fusion config: kind u8 | d_x u64 | d_v u64 | n_predicates u64 | mfb_factor u64 | tied u8 | adds_prior u8
//! iteration u64 | validation loss opt-f64 | stopped u8
//! rng: seed [u8; 32] | stream u64 | word_pos u128
//! params | velocity opt-params
//! early stop: best loss opt-f64 | best iteration u64 | best params opt-params | stale u64
//! history: count u64, then per entry iteration u64 | train loss f64 | val loss opt-f64 | val acc opt-f64
//! ```
//!
//! `params` is a slot count u32 followed by `code u8 | rows u64 | cols u64 | doubles`.
//! An `opt-` value is a presence byte followed by the value when present.

use std::path::Path;

use sgg_fusion_core::fusion::{FusionConfig, FusionKind, FusionParams, ParamSlot};
use sgg_fusion_core::numerics::Matrix;
use sgg_fusion_core::trainer::{Checkpoint, EarlyStopState, HistoryEntry, RngState};

use crate::error::{self, LabError, Result};

pub const MAGIC: &[u8; 8] = b"SGGFCKPT";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn opt_f64(&mut self, v: Option<f64>) {
        self.u8(v.is_some() as u8);
        if let Some(v) = v {
            self.f64(v);
        }
    }
    fn params(&mut self, p: &FusionParams) {
        self.u32(p.slots().len() as u32);
        for (slot, m) in p.slots() {
            self.u8(slot.code());
            self.usize(m.rows());
            self.usize(m.cols());
            for &w in m.as_slice() {
                self.f64(w);
            }
        }
    }
    fn opt_params(&mut self, p: Option<&FusionParams>) {
        self.u8(p.is_some() as u8);
        if let Some(p) = p {
            self.params(p);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, field: &str, reason: impl ToString) -> LabError {
        LabError::format(self.path, format!("{field} @ byte {}", self.pos), reason)
    }
    fn take(&mut self, n: usize, field: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(field, "unexpected end of file"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }
    fn bool(&mut self, field: &str) -> Result<bool> {
        match self.u8(field)? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(self.err(field, format!("flag byte {b}"))),
        }
    }
    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
    fn usize(&mut self, field: &str) -> Result<usize> {
        let v = self.u64(field)?;
        usize::try_from(v).map_err(|_| self.err(field, "value too large"))
    }
    fn u128(&mut self, field: &str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16, field)?.try_into().unwrap()))
    }
    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
    fn opt_f64(&mut self, field: &str) -> Result<Option<f64>> {
        Ok(if self.bool(field)? { Some(self.f64(field)?) } else { None })
    }
    fn params(&mut self, config: &FusionConfig, field: &str) -> Result<FusionParams> {
        let n = self.u32(field)?;
        let mut slots = Vec::with_capacity(n as usize);
        for i in 0..n {
            let f = format!("{field}[{i}]");
            let code = self.u8(&f)?;
            let slot = ParamSlot::from_code(code).ok_or_else(|| self.err(&f, format!("slot code {code}")))?;
            let rows = self.usize(&f)?;
            let cols = self.usize(&f)?;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l <= (self.bytes.len() - self.pos) / 8)
                .ok_or_else(|| self.err(&f, "matrix larger than the file"))?;
            let data = (0..len).map(|_| self.f64(&f)).collect::<Result<Vec<_>>>()?;
            let m = Matrix::new(rows, cols, data).map_err(|e| self.err(&f, e))?;
            slots.push((slot, m));
        }
        FusionParams::from_slots(config.clone(), slots).map_err(|e| self.err(field, e))
    }
    fn opt_params(&mut self, config: &FusionConfig, field: &str) -> Result<Option<FusionParams>> {
        Ok(if self.bool(field)? { Some(self.params(config, field)?) } else { None })
    }
}

pub fn encode(c: &Checkpoint) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let cfg = c.params.config();
    let kind = FusionKind::ALL.iter().position(|k| *k == cfg.kind).expect("known kind");
    w.u8(kind as u8);
    for d in [cfg.d_x, cfg.d_v, cfg.n_predicates, cfg.mfb_factor] {
        w.usize(d);
    }
    w.u8(cfg.tied as u8);
    w.u8(cfg.reference_adds_prior as u8);
    w.usize(c.iteration);
    w.opt_f64(c.validation_loss);
    w.u8(c.stopped as u8);
    w.0.extend_from_slice(&c.rng.seed);
    w.u64(c.rng.stream);
    w.0.extend_from_slice(&c.rng.word_pos.to_le_bytes());
    w.params(&c.params);
    w.opt_params(c.velocity.as_ref());
    w.opt_f64(c.early_stop.best_loss);
    w.usize(c.early_stop.best_iteration);
    w.opt_params(c.early_stop.best_params.as_ref());
    w.usize(c.early_stop.stale);
    w.usize(c.history.len());
    for h in &c.history {
        w.usize(h.iteration);
        w.f64(h.train_loss);
        w.opt_f64(h.validation_loss);
        w.opt_f64(h.validation_accuracy);
    }
    w.0
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8, "magic")? != MAGIC {
        return Err(r.err("magic", "not a checkpoint file"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.err("version", format!("unsupported version {version}")));
    }
    let kind = r.u8("config.kind")?;
    let kind = *FusionKind::ALL
        .get(kind as usize)
        .ok_or_else(|| r.err("config.kind", format!("kind code {kind}")))?;
    let config = FusionConfig {
        kind,
        d_x: r.usize("config.d_x")?,
        d_v: r.usize("config.d_v")?,
        n_predicates: r.usize("config.n_predicates")?,
        mfb_factor: r.usize("config.mfb_factor")?,
        tied: r.bool("config.tied")?,
        reference_adds_prior: r.bool("config.reference_adds_prior")?,
    };
    config.validate().map_err(|e| r.err("config", e))?;
    let iteration = r.usize("iteration")?;
    let validation_loss = r.opt_f64("validation_loss")?;
    let stopped = r.bool("stopped")?;
    let seed: [u8; 32] = r.take(32, "rng.seed")?.try_into().unwrap();
    let rng = RngState {
        seed,
        stream: r.u64("rng.stream")?,
        word_pos: r.u128("rng.word_pos")?,
    };
    let params = r.params(&config, "params")?;
    let velocity = r.opt_params(&config, "velocity")?;
    let early_stop = EarlyStopState {
        best_loss: r.opt_f64("early_stop.best_loss")?,
        best_iteration: r.usize("early_stop.best_iteration")?,
        best_params: r.opt_params(&config, "early_stop.best_params")?,
        stale: r.usize("early_stop.stale")?,
    };
    let n = r.usize("history")?;
    if n > (bytes.len() - r.pos) / 19 {
        return Err(r.err("history", "more entries than the file holds"));
    }
    let mut history = Vec::with_capacity(n);
    for _ in 0..n {
        history.push(HistoryEntry {
            iteration: r.usize("history.iteration")?,
            train_loss: r.f64("history.train_loss")?,
            validation_loss: r.opt_f64("history.validation_loss")?,
            validation_accuracy: r.opt_f64("history.validation_accuracy")?,
        });
    }
    if r.pos != bytes.len() {
        return Err(r.err("end", "trailing bytes"));
    }
    Ok(Checkpoint {
        params,
        iteration,
        validation_loss,
        rng,
        velocity,
        early_stop,
        history,
        stopped,
    })
}

pub fn save(path: &Path, c: &Checkpoint) -> Result<()> {
    error::write(path, &encode(c))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&error::read(path)?, path)
}

/// History as tab-separated text; absent validation values are empty cells.
pub fn history_tsv(history: &[HistoryEntry]) -> String {
    let mut out = String::from("iteration\ttrain_loss\tvalidation_loss\tvalidation_accuracy\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for h in history {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            h.iteration,
            h.train_loss,
            opt(h.validation_loss),
            opt(h.validation_accuracy)
        ));
    }
    out
}
