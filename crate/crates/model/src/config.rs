//! Architecture configuration shared by the forward model, the reverse
//! model, and the auxiliary heads.

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_multiplier: usize,
    pub max_seq_len: usize,
    /// Anti-causal reverse-model depth.
    pub reverse_layers: usize,
    /// Reverse-model width; may differ from d_model (embeddings stay tied
    /// through a learned input projection).
    pub reverse_d_model: usize,
    /// Hidden width of the masked-reconstruction perceptron.
    pub mask_head_hidden: usize,
}

impl ArchConfig {
    /// Reference scale: 6 layers × 256 wide × 8 heads over a binary vocab.
    pub fn paper() -> Self {
        ArchConfig {
            vocab_size: 2,
            d_model: 256,
            n_layers: 6,
            n_heads: 8,
            ffn_multiplier: 4,
            max_seq_len: 256,
            reverse_layers: 2,
            reverse_d_model: 128,
            mask_head_hidden: 128,
        }
    }

    /// Small configuration for single-core experiment runs.
    pub fn desk() -> Self {
        ArchConfig {
            vocab_size: 2,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            ffn_multiplier: 4,
            max_seq_len: 64,
            reverse_layers: 2,
            reverse_d_model: 64,
            mask_head_hidden: 64,
        }
    }

    pub fn validate(&self) {
        assert!(self.vocab_size >= 1, "vocab_size must be ≥ 1");
        assert!(
            self.d_model >= 1 && self.d_model % self.n_heads == 0,
            "d_model {} must be divisible by n_heads {}",
            self.d_model,
            self.n_heads
        );
        assert!(self.d_model % 2 == 0, "sinusoidal encoding needs even d_model");
        assert!(self.reverse_d_model % 2 == 0, "sinusoidal encoding needs even reverse width");
        assert!(
            self.reverse_d_model % self.n_heads == 0,
            "reverse_d_model {} must be divisible by n_heads {}",
            self.reverse_d_model,
            self.n_heads
        );
        assert!(self.n_layers >= 1 && self.reverse_layers >= 1, "depths must be ≥ 1");
        assert!(self.ffn_multiplier >= 1, "ffn_multiplier must be ≥ 1");
        assert!(self.max_seq_len >= 1, "max_seq_len must be ≥ 1");
        assert!(self.mask_head_hidden >= 1, "mask_head_hidden must be ≥ 1");
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Token ids for a batch of same-length sequences, row-major [batch, len].
#[derive(Debug, Clone)]
pub struct TokenBatch {
    pub ids: Vec<usize>,
    pub batch: usize,
    pub len: usize,
    /// Stable per-sequence identifiers (dataset indices) for reproducible
    /// per-sequence randomness such as mask draws.
    pub seq_ids: Vec<u64>,
}

impl TokenBatch {
    pub fn new(ids: Vec<usize>, batch: usize, len: usize, seq_ids: Vec<u64>) -> Self {
        assert_eq!(ids.len(), batch * len, "TokenBatch: ids length mismatch");
        assert_eq!(seq_ids.len(), batch, "TokenBatch: one seq_id per row");
        TokenBatch { ids, batch, len, seq_ids }
    }

    /// Single sequence, id 0.
    pub fn single(ids: Vec<usize>) -> Self {
        let len = ids.len();
        TokenBatch::new(ids, 1, len, vec![0])
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b * self.len..(b + 1) * self.len]
    }
}
