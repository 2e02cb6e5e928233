//! The combined objective and the training loop: objective arithmetic,
//! equivalence to the standard model at K = 0, gradient-mode contracts,
//! determinism, and the non-finite abort path.

use std::collections::BTreeMap;

use eqt_model::{init_params, ArchConfig, EnergyWeights, EqtConfig, Params};
use eqt_solver::{GradFlow, SolverConfig, StopMode};
use eqt_tensor::{backward, grad_check, GradCheckConfig, Tensor};
use eqt_train::{
    generate_dataset, make_batch, total_loss, train, train_log_csv, train_with_state, AdamW,
    ArchSection, Batch, Checkpoint, RunConfig, TrainError, Variant,
};

const LN2: f64 = std::f64::consts::LN_2;

fn small_arch() -> ArchConfig {
    ArchConfig {
        vocab_size: 2,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        ffn_multiplier: 2,
        max_seq_len: 8,
        reverse_layers: 1,
        reverse_d_model: 8,
        mask_head_hidden: 8,
    }
}

fn micro_arch() -> ArchConfig {
    ArchConfig {
        vocab_size: 2,
        d_model: 4,
        n_layers: 1,
        n_heads: 2,
        ffn_multiplier: 2,
        max_seq_len: 4,
        reverse_layers: 1,
        reverse_d_model: 4,
        mask_head_hidden: 4,
    }
}

fn parity_weights() -> EnergyWeights {
    EnergyWeights { rev: 1.0, mask: 0.5, conf: 0.2, mem: 0.0 }
}

fn ec_of(weights: EnergyWeights, k: usize, window: usize, flow: GradFlow) -> EqtConfig {
    EqtConfig {
        weights,
        solver: SolverConfig {
            k_max: k,
            alpha: 0.1,
            gamma: 1.0,
            eps_stop: 1e-3,
            tau_energy: None,
            mode: StopMode::FixedK,
            record_trace: false,
            snapshots: false,
            final_energy: true,
        },
        window,
        flow,
    }
}

fn batch_of(n: usize, len: usize, seed: u64) -> Batch {
    let ds = generate_dataset(n, len, seed, "train");
    let indices: Vec<usize> = (0..n).collect();
    make_batch(&ds, &indices, 0)
}

/// A run small enough to train inside a unit test.
fn tiny_run(variant: Variant) -> RunConfig {
    let mut c = RunConfig::desk();
    c.variant = variant;
    c.lengths = vec![4];
    c.eval_k = vec![2];
    c.train_sequences = 32;
    c.eval_sequences = 8;
    c.arch = ArchSection {
        vocab_size: 2,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        ffn_multiplier: 2,
        max_seq_len: 8,
        reverse_layers: 1,
        reverse_d_model: 8,
        mask_head_hidden: 8,
    };
    c.train.epochs = 2;
    c.train.batch_size = 16;
    c.train.k_train = 1;
    c.energy.window = 2;
    c
}

fn grads_of(
    params: &Params<f32>,
    loss: &Tensor<f32>,
) -> BTreeMap<String, Tensor<f32>> {
    let store = backward(loss, false).expect("scalar loss");
    let mut grads = BTreeMap::new();
    for (name, t) in params.iter() {
        if let Some(g) = store.get(t) {
            grads.insert(name.clone(), g);
        }
    }
    grads
}

// ── objective arithmetic ──

#[test]
fn objective_total_is_pred_plus_beta_times_energy() {
    let arch = small_arch();
    let params = init_params::<f32>(&arch, 7);
    let batch = batch_of(8, 6, 11);
    let ec = ec_of(parity_weights(), 2, 3, GradFlow::DetachedInner);
    let beta = 0.3;
    let parts = total_loss(&params, &arch, Variant::Eqt, &batch, &ec, beta, 0, 7, None);
    let total = parts.total.data()[0] as f64;
    let recomposed = parts.pred + beta * parts.energy;
    assert!(
        (total - recomposed).abs() <= 1e-6,
        "total {total} vs pred + β·energy {recomposed}"
    );
    assert!(parts.energy > 0.0, "untrained energy is positive");
}

#[test]
fn beta_zero_reduces_the_objective_to_the_prediction_loss() {
    let arch = small_arch();
    let params = init_params::<f32>(&arch, 7);
    let batch = batch_of(4, 6, 11);
    let ec = ec_of(parity_weights(), 2, 3, GradFlow::DetachedInner);
    let parts = total_loss(&params, &arch, Variant::Eqt, &batch, &ec, 0.0, 0, 7, None);
    assert_eq!(parts.total.data()[0] as f64, parts.pred);
    assert!(parts.energy.is_finite(), "initial energy is still reported");
}

#[test]
fn untrained_prediction_loss_is_near_ln2_for_both_variants() {
    let arch = small_arch();
    let batch = batch_of(16, 6, 23);
    let ec = ec_of(parity_weights(), 2, 3, GradFlow::DetachedInner);
    for seed in [3, 4] {
        let params = init_params::<f32>(&arch, seed);
        for variant in [Variant::Standard, Variant::Eqt] {
            let parts = total_loss(&params, &arch, variant, &batch, &ec, 0.3, 0, seed, None);
            assert!(
                (parts.pred - LN2).abs() <= 0.1,
                "{variant} seed {seed}: untrained NLL {} too far from ln 2",
                parts.pred
            );
        }
    }
}

// ── K = 0 equivalence with the standard model ──

#[test]
fn zero_iterations_and_zero_beta_match_the_standard_loss_and_gradients_bitwise() {
    let arch = small_arch();
    let params = init_params::<f32>(&arch, 17);
    let batch = batch_of(6, 5, 29);
    let ec0 = ec_of(parity_weights(), 0, 3, GradFlow::DetachedInner);

    let std_parts = total_loss(&params, &arch, Variant::Standard, &batch, &ec0, 0.0, 0, 17, None);
    let eqt_parts = total_loss(&params, &arch, Variant::Eqt, &batch, &ec0, 0.0, 0, 17, None);

    assert_eq!(
        std_parts.total.data()[0].to_bits(),
        eqt_parts.total.data()[0].to_bits(),
        "losses must agree bitwise"
    );
    assert_eq!(std_parts.hits, eqt_parts.hits);

    let gs = grads_of(&params, &std_parts.total);
    let ge = grads_of(&params, &eqt_parts.total);
    assert_eq!(
        gs.keys().collect::<Vec<_>>(),
        ge.keys().collect::<Vec<_>>(),
        "the same parameters receive gradients"
    );
    for (name, a) in &gs {
        let b = &ge[name];
        let same = a
            .data()
            .iter()
            .zip(b.data().iter())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same, "{name}: gradients differ between standard and K=0 equilibrium");
    }
    // Energy networks receive no gradient on either path.
    assert!(!gs.contains_key("rev.out.w"));
    assert!(!gs.contains_key("mask.w1"));
}

// ── gradient modes ──

#[test]
fn exact_unroll_gradients_match_finite_differences() {
    let arch = micro_arch();
    let params = init_params::<f64>(&arch, 13);
    let ds = generate_dataset(1, 3, 19, "train");
    let batch = make_batch(&ds, &[0], 0);
    let ec = ec_of(parity_weights(), 2, 2, GradFlow::ExactUnroll);
    let cfg = GradCheckConfig { step: 1e-5, tol: 1e-3 };

    for name in ["tok_emb", "l0.wq", "l0.ffn.w1", "rev.win", "rev.out.w", "mask.w1", "final_ln.g"]
    {
        let point = params.get(name).clone();
        let report = grad_check(
            |x: &Tensor<f64>| {
                let mut p = params.clone();
                p.rebind(name, x.clone());
                total_loss(&p, &arch, Variant::Eqt, &batch, &ec, 0.3, 0, 13, None).total
            },
            &point,
            cfg,
        );
        assert!(
            report.ok,
            "{name}: {} of {} coordinates off, max rel err {:.3e} at {}",
            report.failures.len(),
            report.n_checked,
            report.max_rel_err,
            report.worst_index
        );
    }
}

#[test]
fn detached_inner_is_a_measured_approximation_of_exact_unroll() {
    let arch = small_arch();
    let params = init_params::<f32>(&arch, 41);
    let batch = batch_of(4, 5, 43);
    let exact = ec_of(parity_weights(), 2, 3, GradFlow::ExactUnroll);
    let cheap = ec_of(parity_weights(), 2, 3, GradFlow::DetachedInner);

    let ge = grads_of(
        &params,
        &total_loss(&params, &arch, Variant::Eqt, &batch, &exact, 0.3, 0, 41, None).total,
    );
    let gd = grads_of(
        &params,
        &total_loss(&params, &arch, Variant::Eqt, &batch, &cheap, 0.3, 0, 41, None).total,
    );
    assert_eq!(ge.keys().collect::<Vec<_>>(), gd.keys().collect::<Vec<_>>());

    let mut worst = (String::new(), 0.0f64);
    for (name, a) in &ge {
        let b = &gd[name];
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for (x, y) in a.data().iter().zip(b.data().iter()) {
            assert!(x.is_finite() && y.is_finite(), "{name}: non-finite gradient");
            num += ((*x - *y) as f64).powi(2);
            den += (*x as f64).powi(2);
        }
        let rel = (num.sqrt()) / den.sqrt().max(1e-12);
        if rel > worst.1 {
            worst = (name.clone(), rel);
        }
    }
    // The two modes agree on the graph shape but not on the values: the
    // detached mode drops the inner-gradient dependency on parameters.
    assert!(worst.1 > 1e-6, "modes should measurably differ, max rel gap {}", worst.1);
    eprintln!("max relative gradient gap detached vs exact: {} on {}", worst.1, worst.0);
}

// ── memorizing a single sequence ──

#[test]
fn overfitting_one_sequence_drives_the_reverse_energy_toward_zero() {
    let arch = small_arch();
    let mut params = init_params::<f32>(&arch, 5);
    let ds = generate_dataset(1, 8, 9, "train");
    let batch = make_batch(&ds, &[0], 0);
    // Reverse term only, so the reported energy is exactly E_rev.
    let ec = ec_of(
        EnergyWeights { rev: 1.0, mask: 0.0, conf: 0.0, mem: 0.0 },
        2,
        3,
        GradFlow::DetachedInner,
    );
    let mut opt = AdamW::new(&params);
    let mut energy = f64::INFINITY;
    for _ in 0..200 {
        let parts = total_loss(&params, &arch, Variant::Eqt, &batch, &ec, 1.0, 0, 5, None);
        energy = parts.energy;
        let grads = grads_of(&params, &parts.total);
        opt.apply(&mut params, &grads, 1e-2, 0.0, 1e9);
    }
    assert!(energy < 0.05, "reverse energy after 200 memorization steps: {energy}");
}

// ── the epoch loop ──

#[test]
fn same_seed_runs_produce_identical_logs_parameters_and_optimizer_state() {
    let run = tiny_run(Variant::Eqt);
    let a = train(&run, None).expect("train");
    let b = train(&run, None).expect("train");

    assert_eq!(train_log_csv(&a.log), train_log_csv(&b.log), "logs must be byte-identical");
    assert_eq!(a.total_steps, b.total_steps);
    assert_eq!(a.skipped_steps, 0);
    assert_eq!(b.skipped_steps, 0);
    assert_eq!(a.optimizer, b.optimizer, "optimizer state must match bitwise");
    for (name, t) in a.params.iter() {
        let u = b.params.get(name);
        let same =
            t.data().iter().zip(u.data().iter()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same, "{name}: parameters diverged between same-seed runs");
    }
}

#[test]
fn the_log_covers_every_epoch_length_and_split_in_order() {
    let mut run = tiny_run(Variant::Standard);
    run.lengths = vec![3, 4];
    run.train_sequences = 32;
    run.eval_sequences = 8;
    let out = train(&run, None).expect("train");

    // epochs × lengths × (train, val)
    assert_eq!(out.log.len(), run.train.epochs * run.lengths.len() * 2);
    let mut it = out.log.iter();
    for epoch in 0..run.train.epochs {
        for &len in &run.lengths {
            for split in ["train", "val"] {
                let row = it.next().expect("row");
                assert_eq!((row.epoch, row.seq_len, row.split.as_str()), (epoch, len, split));
                assert!(row.loss.is_finite() && row.accuracy >= 0.0 && row.accuracy <= 100.0);
                assert_eq!(row.seconds, 0.0, "wall time disabled keeps the column at zero");
            }
        }
    }
    // Standard variant never refines: K is logged as configured but γ = 1.
    assert!(out.log.iter().all(|r| r.gamma == 1.0));
}

#[test]
fn training_writes_per_epoch_and_best_checkpoints() {
    let run = tiny_run(Variant::Standard);
    let dir = tempfile::tempdir().expect("tempdir");
    let out = train(&run, Some(dir.path())).expect("train");
    for epoch in 0..run.train.epochs {
        assert!(dir.path().join(format!("checkpoint_epoch_{epoch:03}.eqtc")).exists());
    }
    assert!(dir.path().join("best.eqtc").exists());
    assert_eq!(out.checkpoints.len(), run.train.epochs);
    assert!(out.best_val_accuracy >= out.final_val_accuracy - 1e-9);
}

#[test]
fn a_non_finite_loss_aborts_with_a_checkpoint_and_a_typed_error() {
    let run = tiny_run(Variant::Eqt);
    let dir = tempfile::tempdir().expect("tempdir");

    // Resume from a checkpoint whose parameters are already poisoned.
    let mut params = init_params::<f32>(&run.arch(), run.seed);
    let shape = params.get("tok_emb").shape().to_vec();
    let n: usize = shape.iter().product();
    params.rebind("tok_emb", Tensor::leaf(&shape, vec![f32::NAN; n]).expect("leaf"));
    let opt = AdamW::new(&params);
    let ck = Checkpoint {
        config_json: run.to_json(),
        params,
        optimizer: Some(opt),
        memory: None,
        epochs_done: 0,
        global_step: 0,
        root_seed: run.seed,
    };

    match train_with_state(&run, Some(ck), Some(dir.path())) {
        Err(TrainError::NonFiniteLoss { epoch: 0, step: 0, batch: 0 }) => {}
        Err(other) => panic!("expected a non-finite-loss abort, got: {other}"),
        Ok(_) => panic!("training on NaN parameters cannot succeed"),
    }
    assert!(dir.path().join("abort.eqtc").exists(), "abort checkpoint for post-mortems");
}

#[test]
fn resuming_from_a_checkpoint_of_a_different_config_is_rejected() {
    let run = tiny_run(Variant::Eqt);
    let params = init_params::<f32>(&run.arch(), run.seed);
    let opt = AdamW::new(&params);
    let mut other = run.clone();
    other.train.learning_rate = 5e-4;
    let ck = Checkpoint {
        config_json: other.to_json(),
        params,
        optimizer: Some(opt),
        memory: None,
        epochs_done: 0,
        global_step: 0,
        root_seed: run.seed,
    };
    match train_with_state(&run, Some(ck), None) {
        Err(e) => assert!(e.to_string().contains("different configuration"), "got: {e}"),
        Ok(_) => panic!("mismatched resume config must be rejected"),
    }
}
