//! Causal transformer with per-position equilibrium refinement: the
//! forward stack proposes states, a composite self-supervised energy
//! (reverse prediction, masked reconstruction, confidence, memory) scores
//! them, and the proximal solver refines each position before the LM head.

pub mod config;
pub mod energy;
pub mod memory;
pub mod params;
pub mod pe;
pub mod rng;
pub mod transformer;

pub use config::{ArchConfig, TokenBatch};
pub use energy::{
    energy_conf_rows, eqt_forward, mask_count, mask_positions, EnergyBreakdown, EnergyWeights,
    EqtConfig, EqtOutput, GroupSpec, PlanLayout, PositionEnergy, MEMORY_TOP_K,
};
pub use memory::{energy_mem_rows, MemoryBuffer};
pub use params::{init_params, param_report, ParamReport, Params};
pub use pe::{pe_rows, sinusoidal_pe};
pub use rng::substream;
pub use transformer::{
    block_forward, direction_mask, embed_batch, final_norm, forward_proposal_stack, lm_logits,
    mask_head_nll, mhsa, reverse_window_nll, standard_logits, Direction, LN_EPS,
};
