//! Cumulative-parity data: generation, the label rule, and the on-disk
//! dataset format (`eqt-parity v1` header + one ASCII bit line per sequence).

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::TrainError;
use eqt_model::substream;

/// One binary sequence; labels are recomputed on demand, never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParitySample {
    pub bits: Vec<u8>,
}

impl ParitySample {
    pub fn labels(&self) -> Vec<u8> {
        cumulative_parity(&self.bits)
    }
}

/// A homogeneous-length split of sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub seed: u64,
    pub length: usize,
    pub samples: Vec<ParitySample>,
}

/// y_t = y_{t−1} ⊕ b_t with y_0 = 0.
pub fn cumulative_parity(bits: &[u8]) -> Vec<u8> {
    assert!(!bits.is_empty(), "parity needs at least one bit");
    let mut acc = 0u8;
    bits.iter()
        .map(|&b| {
            assert!(b <= 1, "non-binary symbol {b}");
            acc ^= b;
            acc
        })
        .collect()
}

/// I.i.d. uniform bits from a dedicated (seed, split) stream. Distinct
/// split tags give disjoint streams, so train and eval never overlap by
/// construction.
pub fn generate_dataset(count: usize, length: usize, seed: u64, split: &str) -> Dataset {
    assert!(count >= 1, "dataset needs at least one sequence");
    assert!(length >= 1, "sequences need at least one bit");
    let mut rng = substream(seed, &format!("data.{split}"), length as u64, 0);
    let samples = (0..count)
        .map(|_| ParitySample { bits: (0..length).map(|_| rng.gen_range(0..=1u8)).collect() })
        .collect();
    Dataset { seed, length, samples }
}

// ── file format ──

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), TrainError> {
    let mut out = Vec::with_capacity(ds.samples.len() * (ds.length + 1) + 64);
    writeln!(
        out,
        "eqt-parity v1 seed={} count={} length={}",
        ds.seed,
        ds.samples.len(),
        ds.length
    )
    .expect("in-memory write");
    for s in &ds.samples {
        assert_eq!(s.bits.len(), ds.length, "ragged sample");
        for &b in &s.bits {
            out.push(b'0' + b);
        }
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })
}

pub fn read_dataset(path: &Path) -> Result<Dataset, TrainError> {
    let text = fs::read_to_string(path)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(path, "empty file"))?;
    let rest = header
        .strip_prefix("eqt-parity v1 ")
        .ok_or_else(|| bad(path, "missing `eqt-parity v1` header"))?;
    let mut seed = None;
    let mut count = None;
    let mut length = None;
    for field in rest.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| bad(path, "malformed header field"))?;
        match k {
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad(path, "bad seed"))?),
            "count" => count = Some(v.parse::<usize>().map_err(|_| bad(path, "bad count"))?),
            "length" => length = Some(v.parse::<usize>().map_err(|_| bad(path, "bad length"))?),
            other => return Err(bad(path, &format!("unknown header field `{other}`"))),
        }
    }
    let (seed, count, length) = (
        seed.ok_or_else(|| bad(path, "header lacks seed"))?,
        count.ok_or_else(|| bad(path, "header lacks count"))?,
        length.ok_or_else(|| bad(path, "header lacks length"))?,
    );
    let mut samples = Vec::with_capacity(count);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let bits: Vec<u8> = line
            .bytes()
            .map(|c| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(bad(path, &format!("non-binary byte {:?}", c as char))),
            })
            .collect::<Result<_, _>>()?;
        if bits.len() != length {
            return Err(bad(path, &format!("line length {} != header length {length}", bits.len())));
        }
        samples.push(ParitySample { bits });
    }
    if samples.len() != count {
        return Err(bad(path, &format!("{} sequences != header count {count}", samples.len())));
    }
    Ok(Dataset { seed, length, samples })
}

fn bad(path: &Path, why: &str) -> TrainError {
    TrainError::Format { path: path.display().to_string(), why: why.to_string() }
}
