//! Named parameter registry with deterministic initialization.
//!
//! Parameters are immutable tensors keyed by stable names in a sorted map;
//! the optimizer replaces entries wholesale (rebind) instead of mutating,
//! which keeps live autodiff graphs sound and serialization order fixed.

use std::collections::BTreeMap;

use eqt_tensor::{Element, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ArchConfig;
use crate::rng::substream;

#[derive(Debug, Clone, Default)]
pub struct Params<T: Element> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Params<T> {
    pub fn new() -> Self {
        Params { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<T>) {
        assert!(
            self.map.insert(name.to_string(), t).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        self.map.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Replace an existing entry (optimizer step / checkpoint load).
    pub fn rebind(&mut self, name: &str, t: Tensor<T>) {
        let slot = self.map.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        assert_eq!(slot.shape(), t.shape(), "rebind {name}: shape changed");
        *slot = t;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn count_scalars(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    pub fn count_scalars_with_prefix(&self, prefix: &str) -> usize {
        self.map
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Same values at another precision, re-leafed for gradient tracking.
    pub fn cast<U: Element>(&self) -> Params<U> {
        let map = self
            .map
            .iter()
            .map(|(k, v)| (k.clone(), v.cast::<U>().detach_as_leaf()))
            .collect();
        Params { map }
    }

    /// Same values with gradient tracking severed (frozen evaluation copy).
    pub fn detached(&self) -> Params<T> {
        let map = self.map.iter().map(|(k, v)| (k.clone(), v.detach())).collect();
        Params { map }
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|t| t.all_finite())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn normal_init<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n).map(|_| T::from_f64(gaussian(rng) * std)).collect();
    Tensor::leaf(shape, data).expect("sized init")
}

fn zeros_leaf<T: Element>(shape: &[usize]) -> Tensor<T> {
    Tensor::leaf(shape, vec![T::ZERO; shape.iter().product()]).expect("sized init")
}

fn ones_leaf<T: Element>(shape: &[usize]) -> Tensor<T> {
    Tensor::leaf(shape, vec![T::ONE; shape.iter().product()]).expect("sized init")
}

fn init_block<T: Element>(
    p: &mut Params<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    d: usize,
    ffn_mult: usize,
    std: f64,
) {
    let f = d * ffn_mult;
    p.insert(&format!("{prefix}.ln1.g"), ones_leaf(&[d]));
    p.insert(&format!("{prefix}.ln1.b"), zeros_leaf(&[d]));
    for w in ["wq", "wk", "wv", "wo"] {
        p.insert(&format!("{prefix}.{w}"), normal_init(rng, &[d, d], std));
    }
    p.insert(&format!("{prefix}.ln2.g"), ones_leaf(&[d]));
    p.insert(&format!("{prefix}.ln2.b"), zeros_leaf(&[d]));
    p.insert(&format!("{prefix}.ffn.w1"), normal_init(rng, &[d, f], std));
    p.insert(&format!("{prefix}.ffn.b1"), zeros_leaf(&[f]));
    p.insert(&format!("{prefix}.ffn.w2"), normal_init(rng, &[f, d], std));
    p.insert(&format!("{prefix}.ffn.b2"), zeros_leaf(&[d]));
}

/// Full parameter set: forward stack θ, reverse stack φ, mask head ψ.
/// The token embedding is a single tensor shared by the forward model, the
/// reverse model (through `rev.win`), and the tied LM head.
pub fn init_params<T: Element>(cfg: &ArchConfig, root_seed: u64) -> Params<T> {
    cfg.validate();
    let std = 0.02;
    let mut p = Params::new();

    let mut rng = substream(root_seed, "init.embed", 0, 0);
    p.insert("tok_emb", normal_init(&mut rng, &[cfg.vocab_size, cfg.d_model], std));

    for i in 0..cfg.n_layers {
        let mut rng = substream(root_seed, "init.layer", i as u64, 0);
        init_block(&mut p, &mut rng, &format!("l{i}"), cfg.d_model, cfg.ffn_multiplier, std);
    }
    p.insert("final_ln.g", ones_leaf(&[cfg.d_model]));
    p.insert("final_ln.b", zeros_leaf(&[cfg.d_model]));

    let dr = cfg.reverse_d_model;
    let mut rng = substream(root_seed, "init.reverse", 0, 0);
    p.insert("rev.win", normal_init(&mut rng, &[cfg.d_model, dr], std));
    p.insert("rev.hin", normal_init(&mut rng, &[cfg.d_model, dr], std));
    for i in 0..cfg.reverse_layers {
        let mut rng = substream(root_seed, "init.reverse.layer", i as u64, 0);
        init_block(&mut p, &mut rng, &format!("rev.l{i}"), dr, cfg.ffn_multiplier, std);
    }
    p.insert("rev.final_ln.g", ones_leaf(&[dr]));
    p.insert("rev.final_ln.b", zeros_leaf(&[dr]));
    let mut rng = substream(root_seed, "init.reverse.out", 0, 0);
    p.insert("rev.out.w", normal_init(&mut rng, &[dr, cfg.vocab_size], std));
    p.insert("rev.out.b", zeros_leaf(&[cfg.vocab_size]));

    let mut rng = substream(root_seed, "init.mask", 0, 0);
    p.insert("mask.w1", normal_init(&mut rng, &[2 * cfg.d_model, cfg.mask_head_hidden], std));
    p.insert("mask.b1", zeros_leaf(&[cfg.mask_head_hidden]));
    p.insert("mask.w2", normal_init(&mut rng, &[cfg.mask_head_hidden, cfg.vocab_size], std));
    p.insert("mask.b2", zeros_leaf(&[cfg.vocab_size]));

    p
}

/// Per-component scalar counts and the energy-network overhead ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub embedding: usize,
    pub forward: usize,
    pub reverse: usize,
    pub mask_head: usize,
    pub total: usize,
    /// (reverse + mask_head) / (embedding + forward); the LM head is tied
    /// to the embedding and the confidence/memory terms add no parameters.
    pub energy_overhead: f64,
}

pub fn param_report<T: Element>(p: &Params<T>) -> ParamReport {
    let embedding = p.count_scalars_with_prefix("tok_emb");
    let reverse = p.count_scalars_with_prefix("rev.");
    let mask_head = p.count_scalars_with_prefix("mask.");
    let total = p.count_scalars();
    let forward = total - embedding - reverse - mask_head;
    let base = embedding + forward;
    ParamReport {
        embedding,
        forward,
        reverse,
        mask_head,
        total,
        energy_overhead: (reverse + mask_head) as f64 / base as f64,
    }
}
