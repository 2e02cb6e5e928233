//! `EQTC` binary checkpoints: bit-exact persistence of parameters,
//! optimizer moments, memory buffer, and schedule position.
//!
//! Layout (all integers little-endian):
//!   magic "EQTC" · u32 version · config JSON (u64 len + bytes)
//!   · tensor section (params) · u8 optimizer flag [ · u64 step · m · v ]
//!   · u8 memory flag [ · u64 m,d · f64 tau,ema · z payload · usage ]
//!   · u64 epochs_done · u64 global_step · u64 root_seed · u64 fnv1a
//! A tensor section is u64 count, then per record: u64 name len, name,
//! u64 rank, dims, f32 payload. The trailing hash covers all prior bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::TrainError;
use crate::optim::AdamW;
use eqt_model::{MemoryBuffer, Params};
use eqt_tensor::Tensor;

const MAGIC: &[u8; 4] = b"EQTC";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_json: String,
    pub params: Params<f32>,
    pub optimizer: Option<AdamW>,
    pub memory: Option<MemoryBuffer>,
    /// Completed epochs; training resumes at this epoch index.
    pub epochs_done: u64,
    pub global_step: u64,
    pub root_seed: u64,
}

// ── encoding ──

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len() as u64);
    out.extend_from_slice(b);
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_bytes(out, name.as_bytes());
    put_u64(out, shape.len() as u64);
    for &d in shape {
        put_u64(out, d as u64);
    }
    for &x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_param_section(out: &mut Vec<u8>, params: &Params<f32>) {
    put_u64(out, params.len() as u64);
    for (name, t) in params.iter() {
        put_tensor(out, name, t.shape(), t.data());
    }
}

fn put_moment_section(out: &mut Vec<u8>, moments: &BTreeMap<String, Vec<f32>>) {
    put_u64(out, moments.len() as u64);
    for (name, m) in moments {
        put_tensor(out, name, &[m.len()], m);
    }
}

fn fnv1a_bytes(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_bytes(&mut out, ck.config_json.as_bytes());
    put_param_section(&mut out, &ck.params);
    match &ck.optimizer {
        Some(opt) => {
            out.push(1);
            put_u64(&mut out, opt.step);
            put_moment_section(&mut out, &opt.m);
            put_moment_section(&mut out, &opt.v);
        }
        None => out.push(0),
    }
    match &ck.memory {
        Some(buf) => {
            out.push(1);
            let (m, d) = (buf.z.shape()[0], buf.z.shape()[1]);
            put_u64(&mut out, m as u64);
            put_u64(&mut out, d as u64);
            out.extend_from_slice(&buf.tau.to_le_bytes());
            out.extend_from_slice(&buf.ema_beta.to_le_bytes());
            for &x in buf.z.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            for &u in &buf.usage {
                put_u64(&mut out, u);
            }
        }
        None => out.push(0),
    }
    put_u64(&mut out, ck.epochs_done);
    put_u64(&mut out, ck.global_step);
    put_u64(&mut out, ck.root_seed);
    let h = fnv1a_bytes(&out);
    put_u64(&mut out, h);
    out
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), TrainError> {
    fs::write(path, encode(ck))
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })
}

// ── decoding ──

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, why: &str) -> Result<T, TrainError> {
        Err(TrainError::Checkpoint {
            path: self.path.display().to_string(),
            why: format!("{why} (offset {})", self.pos),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.buf.len() {
            return self.fail(&format!("truncated: need {n} bytes"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn f64(&mut self) -> Result<f64, TrainError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn byte(&mut self) -> Result<u8, TrainError> {
        Ok(self.take(1)?[0])
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>, TrainError> {
        let raw = self.take(4 * n)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four"))).collect())
    }

    fn sized_string(&mut self, cap: usize) -> Result<String, TrainError> {
        let n = self.u64()? as usize;
        if n > cap {
            return self.fail(&format!("implausible string length {n}"));
        }
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).or_else(|_| self.fail("invalid UTF-8"))
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f32>), TrainError> {
        let name = self.sized_string(1 << 16)?;
        let rank = self.u64()? as usize;
        if rank > 8 {
            return self.fail(&format!("implausible rank {rank} for {name}"));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel = 1usize;
        for _ in 0..rank {
            let d = self.u64()? as usize;
            numel = numel.checked_mul(d).ok_or(()).or_else(|_| self.fail("dims overflow"))?;
            shape.push(d);
        }
        let data = self.f32_vec(numel)?;
        Ok((name, shape, data))
    }

    fn moment_section(&mut self) -> Result<BTreeMap<String, Vec<f32>>, TrainError> {
        let count = self.u64()? as usize;
        let mut map = BTreeMap::new();
        for _ in 0..count {
            let (name, shape, data) = self.tensor()?;
            if shape.len() != 1 {
                return self.fail(&format!("moment {name} must be rank 1"));
            }
            if map.insert(name.clone(), data).is_some() {
                return self.fail(&format!("duplicate moment {name}"));
            }
        }
        Ok(map)
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint, TrainError> {
    let mut r = Reader { buf: bytes, pos: 0, path };
    if bytes.len() < 16 {
        return r.fail("too short for header");
    }
    let declared = fnv1a_bytes(&bytes[..bytes.len() - 8]);
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("eight"));
    if declared != stored {
        return Err(TrainError::Checkpoint {
            path: path.display().to_string(),
            why: format!("hash mismatch: stored {stored:016x}, computed {declared:016x}"),
        });
    }
    if r.take(4)? != MAGIC {
        return r.fail("bad magic, not an EQTC file");
    }
    let version = r.u32()?;
    if version != VERSION {
        return r.fail(&format!("unsupported version {version}, expected {VERSION}"));
    }
    let config_json = r.sized_string(1 << 24)?;

    let count = r.u64()? as usize;
    let mut params = Params::<f32>::new();
    for _ in 0..count {
        let (name, shape, data) = r.tensor()?;
        params.insert(&name, Tensor::leaf(&shape, data).expect("sized payload"));
    }

    let optimizer = match r.byte()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let m = r.moment_section()?;
            let v = r.moment_section()?;
            Some(AdamW { step, m, v })
        }
        b => return r.fail(&format!("bad optimizer flag {b}")),
    };

    let memory = match r.byte()? {
        0 => None,
        1 => {
            let m = r.u64()? as usize;
            let d = r.u64()? as usize;
            let tau = r.f64()?;
            let ema_beta = r.f64()?;
            let z = r.f32_vec(m * d)?;
            let mut usage = Vec::with_capacity(m);
            for _ in 0..m {
                usage.push(r.u64()?);
            }
            Some(MemoryBuffer {
                z: Tensor::from_vec(&[m, d], z).expect("sized payload"),
                tau,
                ema_beta,
                usage,
            })
        }
        b => return r.fail(&format!("bad memory flag {b}")),
    };

    let epochs_done = r.u64()?;
    let global_step = r.u64()?;
    let root_seed = r.u64()?;
    let _hash = r.u64()?;
    if r.pos != bytes.len() {
        return r.fail(&format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(Checkpoint { config_json, params, optimizer, memory, epochs_done, global_step, root_seed })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes =
        fs::read(path).map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
    decode(&bytes, path)
}
