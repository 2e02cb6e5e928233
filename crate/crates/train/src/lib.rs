//! Training and evaluation for the parity experiments: dataset plumbing,
//! the combined objective, AdamW with cosine schedule, the epoch loop,
//! metrics, and bit-exact checkpointing.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{
    curriculum, ArchSection, EnergySection, GradMode, RunConfig, SolverModeCfg, SolverSection,
    TrainSection, Variant,
};
pub use data::{
    cumulative_parity, generate_dataset, read_dataset, write_dataset, Dataset, ParitySample,
};
pub use error::TrainError;
pub use eval::{
    alignment_probe, difficulty_regimes, evaluate, regime_of, AlignmentStats, LengthMetrics,
    Regime, RegimeSummary, TokenRecord,
};
pub use loss::{make_batch, nll_and_hits, total_loss, Batch, LossParts};
pub use optim::{clip_scale, cosine_lr, global_norm, AdamW, StepOutcome};
pub use trainer::{
    load_splits, train, train_log_csv, train_with_state, write_train_log, TrainOutcome, TrainRow,
};
