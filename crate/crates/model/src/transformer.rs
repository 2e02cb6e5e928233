//! Pre-norm decoder blocks, causal and anti-causal, plus the tied LM head
//! and the reverse window scorer used by the energy terms.

use eqt_tensor::ops::{
    add, bmm_nn, bmm_nt, concat, gelu, index_select, layer_norm, log_softmax_last, matmul_nn,
    matmul_nt, mul, permute, reshape, scale, softmax_last, sum_axis,
};
use eqt_tensor::{Element, Tensor};

use crate::config::{ArchConfig, TokenBatch};
use crate::params::Params;
use crate::pe::sinusoidal_pe;

pub const LN_EPS: f64 = 1e-5;
const MASK_NEG: f64 = -1e9;

/// Attention direction: causal masks the future, anti-causal the past.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Causal,
    AntiCausal,
}

/// Additive attention mask [t, t]: 0 where allowed, −1e9 where blocked.
pub fn direction_mask<T: Element>(t: usize, dir: Direction) -> Tensor<T> {
    Tensor::from_fn(&[t, t], |flat| {
        let (i, j) = (flat / t, flat % t);
        let blocked = match dir {
            Direction::Causal => j > i,
            Direction::AntiCausal => j < i,
        };
        if blocked { T::from_f64(MASK_NEG) } else { T::ZERO }
    })
}

fn shared_ids(ids: &[usize]) -> std::rc::Rc<Vec<usize>> {
    std::rc::Rc::new(ids.to_vec())
}

/// Multi-head scaled dot-product attention over [b, t, d] (no residual).
pub fn mhsa<T: Element>(
    p: &Params<T>,
    prefix: &str,
    n_heads: usize,
    x: &Tensor<T>,
    dir: Direction,
) -> Tensor<T> {
    let (b, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    assert_eq!(d % n_heads, 0, "width {d} not divisible by {n_heads} heads");
    let hd = d / n_heads;
    let flat = reshape(x, &[b * t, d]);

    let split = |w: &str| -> Tensor<T> {
        let proj = matmul_nn(&flat, p.get(&format!("{prefix}.{w}")));
        // [b·t, d] → [b, t, H, hd] → [b, H, t, hd] → [b·H, t, hd]
        let heads = permute(&reshape(&proj, &[b, t, n_heads, hd]), &[0, 2, 1, 3]);
        reshape(&heads, &[b * n_heads, t, hd])
    };
    let q = split("wq");
    let k = split("wk");
    let v = split("wv");

    let scores = scale(&bmm_nt(&q, &k), T::from_f64(1.0 / (hd as f64).sqrt()));
    let masked = add(&scores, &direction_mask::<T>(t, dir));
    let weights = softmax_last(&masked);
    let ctx = bmm_nn(&weights, &v);
    // [b·H, t, hd] → [b, H, t, hd] → [b, t, H, hd] → [b·t, d]
    let merged = reshape(&permute(&reshape(&ctx, &[b, n_heads, t, hd]), &[0, 2, 1, 3]), &[b * t, d]);
    reshape(&matmul_nn(&merged, p.get(&format!("{prefix}.wo"))), &[b, t, d])
}

fn ffn<T: Element>(p: &Params<T>, prefix: &str, x: &Tensor<T>) -> Tensor<T> {
    let (b, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let flat = reshape(x, &[b * t, d]);
    let h = gelu(&add(&matmul_nn(&flat, p.get(&format!("{prefix}.ffn.w1"))), p.get(&format!("{prefix}.ffn.b1"))));
    let out = add(&matmul_nn(&h, p.get(&format!("{prefix}.ffn.w2"))), p.get(&format!("{prefix}.ffn.b2")));
    reshape(&out, &[b, t, x.shape()[2]])
}

/// One pre-norm block: h + MHSA(LN(h)), then + FFN(LN(·)).
pub fn block_forward<T: Element>(
    p: &Params<T>,
    prefix: &str,
    n_heads: usize,
    h: &Tensor<T>,
    dir: Direction,
) -> Tensor<T> {
    let ln1 = layer_norm(h, p.get(&format!("{prefix}.ln1.g")), p.get(&format!("{prefix}.ln1.b")), LN_EPS);
    let h1 = add(h, &mhsa(p, prefix, n_heads, &ln1, dir));
    let ln2 = layer_norm(&h1, p.get(&format!("{prefix}.ln2.g")), p.get(&format!("{prefix}.ln2.b")), LN_EPS);
    add(&h1, &ffn(p, prefix, &ln2))
}

/// Token embedding plus positional encoding: [b, t, d].
pub fn embed_batch<T: Element>(p: &Params<T>, cfg: &ArchConfig, tokens: &TokenBatch) -> Tensor<T> {
    assert!(tokens.len <= cfg.max_seq_len, "sequence {} exceeds max {}", tokens.len, cfg.max_seq_len);
    for &id in &tokens.ids {
        assert!(id < cfg.vocab_size, "token id {id} out of vocab {}", cfg.vocab_size);
    }
    let emb = index_select(p.get("tok_emb"), &shared_ids(&tokens.ids));
    let x = reshape(&emb, &[tokens.batch, tokens.len, cfg.d_model]);
    let pe = sinusoidal_pe::<T>(tokens.len, cfg.d_model);
    add(&x, &pe)
}

/// Causal stack output before the final norm — the proposal state f.
pub fn forward_proposal_stack<T: Element>(
    p: &Params<T>,
    cfg: &ArchConfig,
    tokens: &TokenBatch,
) -> Tensor<T> {
    let mut h = embed_batch(p, cfg, tokens);
    for i in 0..cfg.n_layers {
        h = block_forward(p, &format!("l{i}"), cfg.n_heads, &h, Direction::Causal);
    }
    h
}

pub fn final_norm<T: Element>(p: &Params<T>, h: &Tensor<T>) -> Tensor<T> {
    layer_norm(h, p.get("final_ln.g"), p.get("final_ln.b"), LN_EPS)
}

/// Tied LM head: logits = h·Eᵀ, over the last axis of [.., d].
pub fn lm_logits<T: Element>(p: &Params<T>, h: &Tensor<T>) -> Tensor<T> {
    let shape = h.shape().to_vec();
    let d = *shape.last().unwrap();
    let rows: usize = shape[..shape.len() - 1].iter().product();
    let flat = reshape(h, &[rows, d]);
    let logits = matmul_nt(&flat, p.get("tok_emb"));
    let vocab = p.get("tok_emb").shape()[0];
    let mut out_shape = shape;
    *out_shape.last_mut().unwrap() = vocab;
    reshape(&logits, &out_shape)
}

/// The baseline model end to end: [b, t, vocab].
pub fn standard_logits<T: Element>(
    p: &Params<T>,
    cfg: &ArchConfig,
    tokens: &TokenBatch,
) -> Tensor<T> {
    lm_logits(p, &final_norm(p, &forward_proposal_stack(p, cfg, tokens)))
}

// ── reverse window scoring ──

/// Mean reverse NLL per row: the anti-causal model reads the window in
/// sequence order with the projected state appended as the final slot, so
/// each output slot j ≥ 1 is conditioned on slots j..s (its own token's
/// future plus the state) and scores the token at slot j − 1; the state
/// slot itself scores the window's last token.
///
/// `window_ids` is [g, s] flattened; `h_rows` is [g, d]. Returns [g, 1].
pub fn reverse_window_nll<T: Element>(
    p: &Params<T>,
    cfg: &ArchConfig,
    h_rows: &Tensor<T>,
    window_ids: &[usize],
    s: usize,
) -> Tensor<T> {
    let g = h_rows.shape()[0];
    assert_eq!(window_ids.len(), g * s, "window ids must be [g, s]");
    let dr = cfg.reverse_d_model;

    let emb = index_select(p.get("tok_emb"), &shared_ids(window_ids));
    let win = reshape(&matmul_nn(&emb, p.get("rev.win")), &[g, s, dr]);
    let state = reshape(&matmul_nn(h_rows, p.get("rev.hin")), &[g, 1, dr]);
    let mut h = add(&concat(&[&win, &state], 1), &sinusoidal_pe::<T>(s + 1, dr));
    for i in 0..cfg.reverse_layers {
        h = block_forward(p, &format!("rev.l{i}"), cfg.n_heads, &h, Direction::AntiCausal);
    }
    let h = layer_norm(&h, p.get("rev.final_ln.g"), p.get("rev.final_ln.b"), LN_EPS);
    let flat = reshape(&h, &[g * (s + 1), dr]);
    let logits = add(&matmul_nn(&flat, p.get("rev.out.w")), p.get("rev.out.b"));
    let logp = log_softmax_last(&reshape(&logits, &[g, s + 1, cfg.vocab_size]));

    // Targets: slot j predicts window token j−1 (j = 1..=s); slot 0 unused.
    let vocab = cfg.vocab_size;
    let one_hot = Tensor::<T>::from_fn(&[g, s + 1, vocab], |flat| {
        let c = flat % vocab;
        let j = (flat / vocab) % (s + 1);
        let gi = flat / (vocab * (s + 1));
        if j >= 1 && window_ids[gi * s + (j - 1)] == c { T::ONE } else { T::ZERO }
    });
    let picked = sum_axis(&sum_axis(&mul(&logp, &one_hot), 2), 1); // [g, 1, 1]
    scale(&reshape(&picked, &[g, 1]), T::from_f64(-1.0 / s as f64))
}

/// Masked-reconstruction NLL per row from the 2-layer perceptron head.
///
/// `pe_sel` is [g·m, d] positional rows, `targets` is [g·m]; returns [g, 1].
pub fn mask_head_nll<T: Element>(
    p: &Params<T>,
    cfg: &ArchConfig,
    h_rows: &Tensor<T>,
    pe_sel: &Tensor<T>,
    targets: &[usize],
    m: usize,
) -> Tensor<T> {
    let g = h_rows.shape()[0];
    let d = cfg.d_model;
    assert_eq!(pe_sel.shape(), &[g * m, d], "positional rows must be [g·m, d]");
    assert_eq!(targets.len(), g * m, "one target per masked position");

    let h_rep = reshape(
        &eqt_tensor::ops::broadcast_to(&reshape(h_rows, &[g, 1, d]), &[g, m, d]),
        &[g * m, d],
    );
    let x = concat(&[&h_rep, pe_sel], 1);
    let hidden = gelu(&add(&matmul_nn(&x, p.get("mask.w1")), p.get("mask.b1")));
    let logits = add(&matmul_nn(&hidden, p.get("mask.w2")), p.get("mask.b2"));
    let logp = log_softmax_last(&logits);

    let vocab = cfg.vocab_size;
    let one_hot = Tensor::<T>::from_fn(&[g * m, vocab], |flat| {
        if targets[flat / vocab] == flat % vocab { T::ONE } else { T::ZERO }
    });
    let picked = sum_axis(&mul(&logp, &one_hot), 1); // [g·m, 1]
    let per_row = sum_axis(&reshape(&picked, &[g, m]), 1); // [g, 1]
    scale(&per_row, T::from_f64(-1.0 / m as f64))
}
