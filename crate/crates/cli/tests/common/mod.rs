//! Shared fixtures: a tiny fast-training configuration and eval CSVs
//! carrying the published accuracy table.

use std::path::{Path, PathBuf};

use eqt_train::{RunConfig, Variant};

/// Seconds-scale training: one layer, d=16, 32 sequences of length 4.
pub fn tiny_run(variant: Variant) -> RunConfig {
    let mut run = RunConfig::desk();
    run.variant = variant;
    run.lengths = vec![4];
    run.eval_k = vec![1, 2];
    run.train_sequences = 32;
    run.eval_sequences = 16;
    run.arch.d_model = 16;
    run.arch.n_layers = 1;
    run.arch.n_heads = 2;
    run.arch.max_seq_len = 8;
    run.arch.reverse_layers = 1;
    run.arch.reverse_d_model = 8;
    run.arch.mask_head_hidden = 8;
    run.train.epochs = 1;
    run.train.batch_size = 16;
    run.train.k_train = 1;
    run.energy.window = 2;
    run.validate().expect("tiny fixture config is valid");
    run
}

/// Published accuracy-vs-length table: (length, standard, eqt K=8, eqt K=32).
pub const TABLE: [(usize, f64, f64, f64); 9] = [
    (8, 100.00, 100.00, 100.00),
    (16, 100.00, 99.99, 99.99),
    (32, 99.94, 99.85, 99.85),
    (48, 98.09, 96.56, 96.56),
    (64, 88.15, 92.81, 92.81),
    (96, 77.19, 77.68, 77.68),
    (128, 64.64, 67.04, 67.04),
    (192, 51.86, 59.93, 59.93),
    (256, 55.79, 56.60, 56.59),
];

pub fn table_standard_csv() -> String {
    let mut s = String::from(
        "variant,seq_len,K,token_accuracy,mean_iters_used,mean_energy_init,mean_energy_final,n_tokens\n",
    );
    for (len, std, _, _) in TABLE {
        s.push_str(&format!("standard,{len},0,{std:.4},0.0000,0.000000,0.000000,4096\n"));
    }
    s
}

pub fn table_eqt_csv() -> String {
    let mut s = String::from(
        "variant,seq_len,K,token_accuracy,mean_iters_used,mean_energy_init,mean_energy_final,n_tokens\n",
    );
    for (len, _, k8, k32) in TABLE {
        for (k, acc) in [(8, k8), (32, k32)] {
            s.push_str(&format!("eqt,{len},{k},{acc:.4},{k}.0000,1.000000,0.500000,4096\n"));
        }
    }
    s
}

/// Write both fixture CSVs under `dir` and return their paths.
pub fn write_table_csvs(dir: &Path) -> (PathBuf, PathBuf) {
    let std_path = dir.join("eval_standard.csv");
    let eqt_path = dir.join("eval_eqt.csv");
    std::fs::write(&std_path, table_standard_csv()).unwrap();
    std::fs::write(&eqt_path, table_eqt_csv()).unwrap();
    (std_path, eqt_path)
}
