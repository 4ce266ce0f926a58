//! Versioned binary checkpoints: layer sizes, parameters, and optimizer
//! state, byte-stable across runs on the same platform.
//!
//! Layout (little-endian): an 8-byte magic, a format version, the
//! observation mode and dimensions, the five networks (actor, both critics,
//! both targets), the log-temperature, and the Adam state of every
//! optimizer.

use crate::env::ObsMode;
use crate::nn::{AdamDump, Mlp, ScalarAdamDump};
use crate::sac::{PolicyParams, SacTrainer};
use alloc::string::String;
use alloc::vec::Vec;

const MAGIC: &[u8; 8] = b"CFHOCKPT";
const VERSION: u32 = 1;

/// Everything a checkpoint file carries.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub mode: ObsMode,
    pub ap_count: u32,
    pub obs_dim: u32,
    pub params: PolicyParams,
    pub optimizer: OptimizerState,
}

/// Adam accumulators of every trainable object, flattened in parameter
/// order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub actor: AdamDump,
    pub critic1: AdamDump,
    pub critic2: AdamDump,
    pub temperature: ScalarAdamDump,
}

/// Malformed or truncated checkpoint bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointError(pub String);

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "checkpoint: {}", self.0)
    }
}

/// Serialize a trainer snapshot (parameters plus optimizer state).
pub fn serialize(trainer: &SacTrainer, mode: ObsMode, ap_count: usize, obs_dim: usize) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(mode_tag(mode));
    w.u32(ap_count as u32);
    w.u32(obs_dim as u32);
    let p = &trainer.params;
    for net in [&p.actor, &p.critic1, &p.critic2, &p.target1, &p.target2] {
        w.mlp(net);
    }
    w.f64(p.log_temperature);
    for opt in [
        trainer.actor_optimizer_state(),
        trainer.critic1_optimizer_state(),
        trainer.critic2_optimizer_state(),
    ] {
        w.u64(opt.step);
        w.f64_slice(&opt.first_moment);
        w.f64_slice(&opt.second_moment);
    }
    let t = trainer.temperature_optimizer_state();
    w.u64(t.step);
    w.f64(t.first_moment);
    w.f64(t.second_moment);
    w.out
}

/// Parse checkpoint bytes back into parameters and optimizer state.
pub fn deserialize(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(CheckpointError("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError(alloc::format!(
            "unsupported version {version}"
        )));
    }
    let mode = tag_mode(r.u8()?)?;
    let ap_count = r.u32()?;
    let obs_dim = r.u32()?;
    let actor = r.mlp()?;
    let critic1 = r.mlp()?;
    let critic2 = r.mlp()?;
    let target1 = r.mlp()?;
    let target2 = r.mlp()?;
    let log_temperature = r.f64()?;
    let mut adams = Vec::with_capacity(3);
    for _ in 0..3 {
        let step = r.u64()?;
        let m = r.f64_vec()?;
        let v = r.f64_vec()?;
        adams.push(AdamDump {
            step,
            first_moment: m,
            second_moment: v,
        });
    }
    let temperature = ScalarAdamDump {
        step: r.u64()?,
        first_moment: r.f64()?,
        second_moment: r.f64()?,
    };
    if r.pos != bytes.len() {
        return Err(CheckpointError("trailing bytes".into()));
    }
    let critic2_opt = adams.pop().unwrap();
    let critic1_opt = adams.pop().unwrap();
    let actor_opt = adams.pop().unwrap();
    Ok(Checkpoint {
        mode,
        ap_count,
        obs_dim,
        params: PolicyParams {
            actor,
            critic1,
            critic2,
            target1,
            target2,
            log_temperature,
        },
        optimizer: OptimizerState {
            actor: actor_opt,
            critic1: critic1_opt,
            critic2: critic2_opt,
            temperature,
        },
    })
}

fn mode_tag(mode: ObsMode) -> u8 {
    match mode {
        ObsMode::Da => 0,
        ObsMode::Ha => 1,
        ObsMode::PoDa => 2,
        ObsMode::PoHa => 3,
    }
}

fn tag_mode(tag: u8) -> Result<ObsMode, CheckpointError> {
    Ok(match tag {
        0 => ObsMode::Da,
        1 => ObsMode::Ha,
        2 => ObsMode::PoDa,
        3 => ObsMode::PoHa,
        t => return Err(CheckpointError(alloc::format!("unknown mode tag {t}"))),
    })
}

#[derive(Default)]
struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.out.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn f64_slice(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }
    fn mlp(&mut self, net: &Mlp) {
        self.u8(u8::from(net.output_tanh));
        self.u32(net.layers.len() as u32);
        for l in &net.layers {
            self.u32(l.in_dim as u32);
            self.u32(l.out_dim as u32);
            for &w in &l.w {
                self.f64(w);
            }
            for &b in &l.b {
                self.f64(b);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64_vec(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u64()? as usize;
        if n > self.buf.len() / 8 + 1 {
            return Err(CheckpointError("length field out of range".into()));
        }
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
    fn mlp(&mut self) -> Result<Mlp, CheckpointError> {
        let output_tanh = self.u8()? != 0;
        let n_layers = self.u32()? as usize;
        if n_layers > 64 {
            return Err(CheckpointError("layer count out of range".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let in_dim = self.u32()? as usize;
            let out_dim = self.u32()? as usize;
            if in_dim * out_dim > self.buf.len() / 8 + 1 {
                return Err(CheckpointError("layer size out of range".into()));
            }
            let mut w = Vec::with_capacity(in_dim * out_dim);
            for _ in 0..in_dim * out_dim {
                w.push(self.f64()?);
            }
            let mut b = Vec::with_capacity(out_dim);
            for _ in 0..out_dim {
                b.push(self.f64()?);
            }
            layers.push(crate::nn::Dense {
                w,
                b,
                in_dim,
                out_dim,
            });
        }
        Ok(Mlp {
            layers,
            output_tanh,
        })
    }
}
