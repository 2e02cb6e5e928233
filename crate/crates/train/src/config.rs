//! Run configuration: one JSON document drives architecture, training,
//! solver, and energy settings for both model variants.

use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use eqt_model::{ArchConfig, EnergyWeights, EqtConfig};
use eqt_solver::{GradFlow, SolverConfig, StopMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Standard,
    Eqt,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Standard => "standard",
            Variant::Eqt => "eqt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    DetachedInner,
    ExactUnroll,
}

impl GradMode {
    pub fn flow(self) -> GradFlow {
        match self {
            GradMode::DetachedInner => GradFlow::DetachedInner,
            GradMode::ExactUnroll => GradFlow::ExactUnroll,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverModeCfg {
    FixedK,
    EarlyStop,
    Adaptive,
}

impl SolverModeCfg {
    pub fn mode(self) -> StopMode {
        match self {
            SolverModeCfg::FixedK => StopMode::FixedK,
            SolverModeCfg::EarlyStop => StopMode::EarlyStop,
            SolverModeCfg::Adaptive => StopMode::Adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_multiplier: usize,
    pub max_seq_len: usize,
    pub reverse_layers: usize,
    pub reverse_d_model: usize,
    pub mask_head_hidden: usize,
}

impl ArchSection {
    pub fn to_arch(&self) -> ArchConfig {
        let a = ArchConfig {
            vocab_size: self.vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_multiplier: self.ffn_multiplier,
            max_seq_len: self.max_seq_len,
            reverse_layers: self.reverse_layers,
            reverse_d_model: self.reverse_d_model,
            mask_head_hidden: self.mask_head_hidden,
        };
        a.validate();
        a
    }

    fn from_arch(a: &ArchConfig) -> Self {
        ArchSection {
            vocab_size: a.vocab_size,
            d_model: a.d_model,
            n_layers: a.n_layers,
            n_heads: a.n_heads,
            ffn_multiplier: a.ffn_multiplier,
            max_seq_len: a.max_seq_len,
            reverse_layers: a.reverse_layers,
            reverse_d_model: a.reverse_d_model,
            mask_head_hidden: a.mask_head_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub beta_energy: f64,
    pub k_train: usize,
    pub grad_mode: GradMode,
    /// γ/K schedule; disabled for the parity reproduction.
    pub curriculum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub alpha: f64,
    pub gamma: f64,
    pub eps_stop: f64,
    pub mode: SolverModeCfg,
    pub tau_energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub rev: f64,
    pub mask: f64,
    pub conf: f64,
    pub mem: f64,
    /// Reverse-prediction window length W.
    pub window: usize,
    pub memory_slots: usize,
    pub memory_tau: f64,
    pub memory_ema: f64,
}

impl EnergySection {
    pub fn weights(&self) -> EnergyWeights {
        EnergyWeights { rev: self.rev, mask: self.mask, conf: self.conf, mem: self.mem }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    pub lengths: Vec<usize>,
    /// Refinement iteration counts evaluated at test time.
    pub eval_k: Vec<usize>,
    /// Total sequence counts, split evenly across `lengths`.
    pub train_sequences: usize,
    pub eval_sequences: usize,
    /// Load datasets from files under this directory instead of generating.
    pub data_dir: Option<String>,
    /// Real wall-clock in the `seconds` column (off keeps logs byte-stable).
    pub log_wall_time: bool,
    pub arch: ArchSection,
    pub train: TrainSection,
    pub solver: SolverSection,
    pub energy: EnergySection,
}

impl RunConfig {
    /// Desktop-scale preset: 2 layers, d=64, lengths {8,16,32,64}.
    pub fn desk() -> Self {
        RunConfig {
            variant: Variant::Eqt,
            seed: 0,
            lengths: vec![8, 16, 32, 64],
            eval_k: vec![8, 32],
            train_sequences: 4096,
            eval_sequences: 1024,
            data_dir: None,
            log_wall_time: false,
            arch: ArchSection::from_arch(&ArchConfig::desk()),
            train: TrainSection {
                epochs: 10,
                batch_size: 64,
                learning_rate: 1e-3,
                weight_decay: 0.01,
                clip_norm: 1.0,
                beta_energy: 0.3,
                k_train: 2,
                grad_mode: GradMode::DetachedInner,
                curriculum: false,
            },
            solver: SolverSection {
                alpha: 0.1,
                gamma: 1.0,
                eps_stop: 1e-3,
                mode: SolverModeCfg::FixedK,
                tau_energy: None,
            },
            energy: EnergySection {
                rev: 1.0,
                mask: 0.5,
                conf: 0.2,
                mem: 0.0,
                window: 4,
                memory_slots: 64,
                memory_tau: 0.1,
                memory_ema: 0.99,
            },
        }
    }

    /// Full-scale preset matching the published protocol (compute heavy).
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.lengths = vec![8, 16, 32, 48, 64, 96, 128, 192, 256];
        c.eval_k = vec![8, 32];
        c.train_sequences = 32_768;
        c.eval_sequences = 4_096;
        c.arch = ArchSection::from_arch(&ArchConfig::paper());
        c.train.epochs = 25;
        c.train.batch_size = 256;
        c.train.learning_rate = 3e-4;
        c.energy.window = 8;
        c
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: String| Err(TrainError::Config(m));
        if self.lengths.is_empty() {
            return err("lengths: must name at least one sequence length".into());
        }
        if self.lengths.iter().any(|&l| l == 0) {
            return err("lengths: zero-length sequences are meaningless".into());
        }
        if let Some(&l) = self.lengths.iter().find(|&&l| l > self.arch.max_seq_len) {
            return err(format!("lengths: {l} exceeds arch.max_seq_len {}", self.arch.max_seq_len));
        }
        if self.train_sequences < self.lengths.len() {
            return err(format!(
                "train_sequences: {} cannot cover {} lengths",
                self.train_sequences,
                self.lengths.len()
            ));
        }
        if self.eval_sequences < self.lengths.len() {
            return err(format!(
                "eval_sequences: {} cannot cover {} lengths",
                self.eval_sequences,
                self.lengths.len()
            ));
        }
        if self.eval_k.is_empty() && self.variant == Variant::Eqt {
            return err("eval_k: equilibrium variant needs at least one K".into());
        }
        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 {
            return err("train: epochs and batch_size must be positive".into());
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return err(format!("train.learning_rate: {} must be positive", t.learning_rate));
        }
        if t.weight_decay < 0.0 || t.beta_energy < 0.0 {
            return err("train: weight_decay and beta_energy must be nonnegative".into());
        }
        if !(t.clip_norm > 0.0) {
            return err(format!("train.clip_norm: {} must be positive", t.clip_norm));
        }
        let s = &self.solver;
        if !(s.alpha > 0.0 && s.gamma > 0.0 && s.eps_stop > 0.0) {
            return err("solver: alpha, gamma, eps_stop must be positive".into());
        }
        if s.mode == SolverModeCfg::Adaptive && s.tau_energy.is_none() {
            return err("solver: adaptive mode needs tau_energy".into());
        }
        let e = &self.energy;
        if [e.rev, e.mask, e.conf, e.mem].iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return err("energy: weights must be finite and nonnegative".into());
        }
        if e.window == 0 {
            return err("energy.window: must be at least 1".into());
        }
        if e.mem > 0.0 && (e.memory_slots == 0 || !(e.memory_tau > 0.0)) {
            return err("energy: memory term needs memory_slots ≥ 1 and memory_tau > 0".into());
        }
        // Mirror ArchConfig::validate as recoverable errors.
        let a = &self.arch;
        if a.vocab_size == 0 {
            return err("arch.vocab_size: must be at least 1".into());
        }
        if a.d_model == 0 || a.d_model % 2 != 0 {
            return err(format!("arch.d_model: {} must be positive and even", a.d_model));
        }
        if a.n_heads == 0 || a.d_model % a.n_heads != 0 {
            return err(format!("arch.n_heads: {} must divide d_model {}", a.n_heads, a.d_model));
        }
        if a.reverse_d_model == 0
            || a.reverse_d_model % 2 != 0
            || a.reverse_d_model % a.n_heads != 0
        {
            return err(format!(
                "arch.reverse_d_model: {} must be even and divisible by n_heads {}",
                a.reverse_d_model, a.n_heads
            ));
        }
        if a.n_layers == 0 || a.reverse_layers == 0 {
            return err("arch: n_layers and reverse_layers must be at least 1".into());
        }
        if a.ffn_multiplier == 0 || a.max_seq_len == 0 || a.mask_head_hidden == 0 {
            return err("arch: ffn_multiplier, max_seq_len, mask_head_hidden must be ≥ 1".into());
        }
        Ok(())
    }

    pub fn arch(&self) -> ArchConfig {
        self.arch.to_arch()
    }

    /// Split a sequence total evenly across the lengths; the remainder
    /// goes to the earliest lengths, one extra each.
    fn split_counts(total: usize, n: usize) -> Vec<usize> {
        let base = total / n;
        let extra = total % n;
        (0..n).map(|i| base + usize::from(i < extra)).collect()
    }

    pub fn train_counts(&self) -> Vec<usize> {
        Self::split_counts(self.train_sequences, self.lengths.len())
    }

    pub fn eval_counts(&self) -> Vec<usize> {
        Self::split_counts(self.eval_sequences, self.lengths.len())
    }

    /// Solver configuration for `k` refinement iterations.
    pub fn solver_config(&self, k: usize) -> SolverConfig {
        SolverConfig {
            k_max: k,
            alpha: self.solver.alpha,
            gamma: self.solver.gamma,
            eps_stop: self.solver.eps_stop,
            tau_energy: self.solver.tau_energy,
            mode: self.solver.mode.mode(),
            record_trace: false,
            snapshots: false,
            final_energy: true,
        }
    }

    pub fn eqt_config(&self, k: usize) -> EqtConfig {
        EqtConfig {
            weights: self.energy.weights(),
            solver: self.solver_config(k),
            window: self.energy.window,
            flow: self.train.grad_mode.flow(),
        }
    }

    // ── JSON round trip ──

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| TrainError::Config(format!("parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `--set key.path=value` override. Values parse as JSON when
    /// possible (numbers, booleans, arrays, null) and as strings otherwise;
    /// unknown keys are rejected by re-deserialization.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<Self, TrainError> {
        let mut root: serde_json::Value =
            serde_json::to_value(self).expect("config re-serializes");
        let pointer = format!("/{}", key.split('.').collect::<Vec<_>>().join("/"));
        let slot = root
            .pointer_mut(&pointer)
            .ok_or_else(|| TrainError::Config(format!("--set {key}: unknown field")))?;
        *slot = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let cfg: RunConfig = serde_json::from_value(root)
            .map_err(|e| TrainError::Config(format!("--set {key}={raw}: {e}")))?;
        Ok(cfg)
    }
}

/// (γ, K) in effect at a training step. Off: fixed (1.0, K_train). On:
/// γ anneals 10→1 linearly over the first 10% of steps; K starts at 4 and
/// jumps to 16 at the midpoint.
pub fn curriculum(step: u64, total_steps: u64, tc: &TrainSection) -> (f64, usize) {
    if !tc.curriculum {
        return (1.0, tc.k_train);
    }
    let horizon = ((total_steps as f64) * 0.1).ceil().max(1.0);
    let frac = (step as f64 / horizon).min(1.0);
    let gamma = 10.0 - 9.0 * frac;
    let k = if (step as f64) < 0.5 * total_steps as f64 { 4 } else { 16 };
    (gamma, k)
}
