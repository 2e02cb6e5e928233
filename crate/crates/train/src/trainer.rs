//! The training loop: joint-length epochs, curriculum, clipped AdamW steps,
//! per-epoch validation, logging, and checkpointing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::{curriculum, RunConfig, Variant};
use crate::data::{generate_dataset, read_dataset, Dataset};
use crate::error::TrainError;
use crate::loss::{make_batch, total_loss, LossParts};
use crate::optim::{cosine_lr, AdamW, StepOutcome};
use eqt_model::{init_params, substream, MemoryBuffer, Params};
use eqt_tensor::{backward, Tensor};

/// One `train_log.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub epoch: usize,
    pub split: String,
    pub seq_len: usize,
    pub loss: f64,
    pub pred_loss: f64,
    pub energy: f64,
    /// Token accuracy in percent.
    pub accuracy: f64,
    pub lr: f64,
    pub gamma: f64,
    pub k: usize,
    pub seconds: f64,
}

pub struct TrainOutcome {
    pub params: Params<f32>,
    pub optimizer: AdamW,
    pub memory: Option<MemoryBuffer>,
    pub log: Vec<TrainRow>,
    pub best_val_accuracy: f64,
    pub final_val_accuracy: f64,
    pub total_steps: u64,
    pub checkpoints: Vec<PathBuf>,
    /// Optimizer steps skipped due to non-finite gradients.
    pub skipped_steps: u64,
}

fn dataset_for(run: &RunConfig, split: &str, length: usize, count: usize) -> Result<Dataset, TrainError> {
    if let Some(dir) = &run.data_dir {
        let path = Path::new(dir).join(format!("parity_{split}_L{length}.txt"));
        let ds = read_dataset(&path)?;
        if ds.length != length || ds.samples.len() < count {
            return Err(TrainError::Format {
                path: path.display().to_string(),
                why: format!(
                    "want ≥{count} sequences of length {length}, found {} of length {}",
                    ds.samples.len(),
                    ds.length
                ),
            });
        }
        Ok(Dataset { seed: ds.seed, length, samples: ds.samples[..count].to_vec() })
    } else {
        Ok(generate_dataset(count, length, run.seed, split))
    }
}

/// Load or generate the per-length train/eval splits.
pub fn load_splits(run: &RunConfig) -> Result<(Vec<Dataset>, Vec<Dataset>), TrainError> {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    let tc = run.train_counts();
    let ec = run.eval_counts();
    for (i, &l) in run.lengths.iter().enumerate() {
        train.push(dataset_for(run, "train", l, tc[i])?);
        eval.push(dataset_for(run, "eval", l, ec[i])?);
    }
    Ok((train, eval))
}

fn seq_id_base(length_index: usize, split: &str) -> u64 {
    let split_bit = if split == "eval" { 1u64 << 31 } else { 0 };
    ((length_index as u64) << 32) | split_bit
}

/// Mean loss/accuracy of a split without touching parameters; the
/// equilibrium variant refines with the same K as training.
#[allow(clippy::too_many_arguments)]
fn eval_split(
    run: &RunConfig,
    params: &Params<f32>,
    ds: &Dataset,
    length_index: usize,
    epoch: usize,
    k: usize,
    gamma: f64,
    memory: Option<&MemoryBuffer>,
) -> (f64, f64, f64, f64) {
    let arch = run.arch();
    let mut ec = run.eqt_config(k);
    ec.solver.gamma = gamma;
    let n = ds.samples.len();
    let bs = run.train.batch_size.min(n);
    let (mut loss_sum, mut pred_sum, mut energy_sum, mut hits, mut tokens) = (0.0, 0.0, 0.0, 0, 0);
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(bs) {
        let batch = make_batch(ds, chunk, seq_id_base(length_index, "eval"));
        let parts = eqt_tensor::no_grad(|| {
            total_loss(
                params,
                &arch,
                run.variant,
                &batch,
                &ec,
                run.train.beta_energy,
                epoch,
                run.seed,
                memory,
            )
        });
        let w = batch.labels.len() as f64;
        loss_sum += parts.total.data()[0] as f64 * w;
        pred_sum += parts.pred * w;
        energy_sum += parts.energy * w;
        hits += parts.hits;
        tokens += parts.tokens;
    }
    let t = tokens as f64;
    (loss_sum / t, pred_sum / t, energy_sum / t, 100.0 * hits as f64 / t)
}

/// Train from scratch or from a checkpoint; `out_dir` enables artifacts.
pub fn train_with_state(
    run: &RunConfig,
    resume: Option<Checkpoint>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    run.validate()?;
    let arch = run.arch();
    let (train_sets, val_sets) = load_splits(run)?;

    let steps_per_epoch: u64 = train_sets
        .iter()
        .map(|ds| ds.samples.len().div_ceil(run.train.batch_size) as u64)
        .sum();
    let total_steps = steps_per_epoch * run.train.epochs as u64;

    let (mut params, mut opt, mut memory, start_epoch, mut global_step) = match resume {
        Some(ck) => {
            let declared = RunConfig::from_json(&ck.config_json)?;
            if declared != *run {
                return Err(TrainError::Config(
                    "resume: checkpoint was produced by a different configuration".into(),
                ));
            }
            (ck.params, ck.optimizer.expect("training checkpoint carries optimizer state"),
             ck.memory, ck.epochs_done as usize, ck.global_step)
        }
        None => {
            let params = init_params::<f32>(&arch, run.seed);
            let opt = AdamW::new(&params);
            let memory = (run.energy.mem > 0.0).then(|| {
                MemoryBuffer::init(
                    run.energy.memory_slots,
                    arch.d_model,
                    run.energy.memory_tau,
                    run.energy.memory_ema,
                    run.seed,
                )
            });
            (params, opt, memory, 0, 0)
        }
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| TrainError::Io { path: dir.display().to_string(), source: e })?;
    }

    let mut log: Vec<TrainRow> = Vec::new();
    let mut checkpoints: Vec<PathBuf> = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut final_val = 0.0;
    let mut skipped = 0u64;

    for epoch in start_epoch..run.train.epochs {
        let mut epoch_val_acc = 0.0;
        for (li, ds) in train_sets.iter().enumerate() {
            let t0 = Instant::now();
            let n = ds.samples.len();
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = substream(run.seed, "data.shuffle", epoch as u64, li as u64);
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }

            let (mut loss_sum, mut pred_sum, mut energy_sum) = (0.0, 0.0, 0.0);
            let (mut hits, mut tokens) = (0usize, 0usize);
            let (mut last_lr, mut last_gamma, mut last_k) = (0.0, 1.0, run.train.k_train);

            for (bi, chunk) in order.chunks(run.train.batch_size).enumerate() {
                let (gamma, k) = curriculum(global_step, total_steps, &run.train);
                let lr = cosine_lr(run.train.learning_rate, global_step, total_steps);
                (last_lr, last_gamma, last_k) = (lr, gamma, k);

                let mut ec = run.eqt_config(k);
                ec.solver.gamma = gamma;
                let batch = make_batch(ds, chunk, seq_id_base(li, "train"));
                let parts: LossParts<f32> = total_loss(
                    &params,
                    &arch,
                    run.variant,
                    &batch,
                    &ec,
                    run.train.beta_energy,
                    epoch,
                    run.seed,
                    memory.as_ref(),
                );
                let loss_val = parts.total.data()[0] as f64;
                if !loss_val.is_finite() {
                    if let Some(dir) = out_dir {
                        let path = dir.join("abort.eqtc");
                        save_checkpoint(
                            &path,
                            &Checkpoint {
                                config_json: run.to_json(),
                                params: params.clone(),
                                optimizer: Some(opt.clone()),
                                memory: memory.clone(),
                                epochs_done: epoch as u64,
                                global_step,
                                root_seed: run.seed,
                            },
                        )?;
                        checkpoints.push(path);
                    }
                    return Err(TrainError::NonFiniteLoss { epoch, step: global_step, batch: bi });
                }

                let store = backward(&parts.total, false).expect("scalar loss");
                let mut grads: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
                for (name, t) in params.iter() {
                    if let Some(g) = store.get(t) {
                        grads.insert(name.clone(), g);
                    }
                }
                drop(store);
                match opt.apply(&mut params, &grads, lr, run.train.weight_decay, run.train.clip_norm)
                {
                    StepOutcome::Applied { .. } => {}
                    StepOutcome::SkippedNonFinite => skipped += 1,
                }
                global_step += 1;

                let w = batch.labels.len() as f64;
                loss_sum += loss_val * w;
                pred_sum += parts.pred * w;
                energy_sum += parts.energy * w;
                hits += parts.hits;
                tokens += parts.tokens;

                // Fold refined states into the episodic memory.
                if let (Some(buf), Variant::Eqt, Some(h_star)) =
                    (memory.as_mut(), run.variant, parts.h_star.as_ref())
                {
                    if run.energy.mem > 0.0 {
                        let d = arch.d_model;
                        let data = h_star.data();
                        for r in 0..data.len() / d {
                            buf.update(&data[r * d..(r + 1) * d]);
                        }
                    }
                }
            }

            let t = tokens as f64;
            let seconds = if run.log_wall_time { t0.elapsed().as_secs_f64() } else { 0.0 };
            log.push(TrainRow {
                epoch,
                split: "train".into(),
                seq_len: ds.length,
                loss: loss_sum / t,
                pred_loss: pred_sum / t,
                energy: energy_sum / t,
                accuracy: 100.0 * hits as f64 / t,
                lr: last_lr,
                gamma: last_gamma,
                k: last_k,
                seconds,
            });

            let tv = Instant::now();
            let (vloss, vpred, venergy, vacc) = eval_split(
                run,
                &params,
                &val_sets[li],
                li,
                epoch,
                last_k,
                last_gamma,
                memory.as_ref(),
            );
            epoch_val_acc += vacc;
            log.push(TrainRow {
                epoch,
                split: "val".into(),
                seq_len: ds.length,
                loss: vloss,
                pred_loss: vpred,
                energy: venergy,
                accuracy: vacc,
                lr: last_lr,
                gamma: last_gamma,
                k: last_k,
                seconds: if run.log_wall_time { tv.elapsed().as_secs_f64() } else { 0.0 },
            });
        }

        epoch_val_acc /= run.lengths.len() as f64;
        final_val = epoch_val_acc;
        let is_best = epoch_val_acc > best_val;
        if is_best {
            best_val = epoch_val_acc;
        }
        if let Some(dir) = out_dir {
            let ck = Checkpoint {
                config_json: run.to_json(),
                params: params.clone(),
                optimizer: Some(opt.clone()),
                memory: memory.clone(),
                epochs_done: epoch as u64 + 1,
                global_step,
                root_seed: run.seed,
            };
            let path = dir.join(format!("checkpoint_epoch_{epoch:03}.eqtc"));
            save_checkpoint(&path, &ck)?;
            checkpoints.push(path);
            if is_best {
                let path = dir.join("best.eqtc");
                save_checkpoint(&path, &ck)?;
            }
        }
    }

    Ok(TrainOutcome {
        params,
        optimizer: opt,
        memory,
        log,
        best_val_accuracy: best_val.max(0.0),
        final_val_accuracy: final_val,
        total_steps,
        checkpoints,
        skipped_steps: skipped,
    })
}

/// Train from scratch.
pub fn train(run: &RunConfig, out_dir: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    train_with_state(run, None, out_dir)
}

/// Serialize log rows as `train_log.csv`.
pub fn train_log_csv(rows: &[TrainRow]) -> String {
    let mut s = String::from("epoch,split,seq_len,loss,pred_loss,energy,accuracy,lr,gamma,K,seconds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.4},{:.8},{:.4},{},{:.3}\n",
            r.epoch,
            r.split,
            r.seq_len,
            r.loss,
            r.pred_loss,
            r.energy,
            r.accuracy,
            r.lr,
            r.gamma,
            r.k,
            r.seconds
        ));
    }
    s
}

pub fn write_train_log(rows: &[TrainRow], path: &Path) -> Result<(), TrainError> {
    fs::write(path, train_log_csv(rows))
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })
}
