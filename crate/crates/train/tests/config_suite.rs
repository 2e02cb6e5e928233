//! Run-configuration parsing, overrides, validation, and the curriculum.

use eqt_train::{curriculum, GradMode, RunConfig, SolverModeCfg, Variant};

#[test]
fn presets_validate_and_round_trip() {
    for cfg in [RunConfig::desk(), RunConfig::paper()] {
        cfg.validate().unwrap();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back, "JSON round trip must be stable");
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut doc: serde_json::Value = serde_json::from_str(&RunConfig::desk().to_json()).unwrap();
    doc.as_object_mut().unwrap().insert("tpyo".into(), serde_json::json!(1));
    let err = RunConfig::from_json(&doc.to_string()).unwrap_err().to_string();
    assert!(err.contains("tpyo"), "error should name the bad key: {err}");
}

#[test]
fn overrides_set_nested_fields() {
    let cfg = RunConfig::desk();
    let cfg = cfg.with_override("train.learning_rate", "0.01").unwrap();
    assert_eq!(cfg.train.learning_rate, 0.01);
    let cfg = cfg.with_override("variant", "standard").unwrap();
    assert_eq!(cfg.variant, Variant::Standard);
    let cfg = cfg.with_override("lengths", "[8,16]").unwrap();
    assert_eq!(cfg.lengths, vec![8, 16]);
    let cfg = cfg.with_override("solver.tau_energy", "0.5").unwrap();
    assert_eq!(cfg.solver.tau_energy, Some(0.5));
    let cfg = cfg.with_override("solver.tau_energy", "null").unwrap();
    assert_eq!(cfg.solver.tau_energy, None);
    let cfg = cfg.with_override("train.grad_mode", "exact_unroll").unwrap();
    assert_eq!(cfg.train.grad_mode, GradMode::ExactUnroll);
    let cfg = cfg.with_override("solver.mode", "adaptive").unwrap();
    assert_eq!(cfg.solver.mode, SolverModeCfg::Adaptive);
}

#[test]
fn overrides_reject_unknown_or_ill_typed_fields() {
    let cfg = RunConfig::desk();
    assert!(cfg.with_override("train.nope", "1").is_err());
    assert!(cfg.with_override("nope", "1").is_err());
    assert!(cfg.with_override("train.learning_rate", "fast").is_err());
    assert!(cfg.with_override("variant", "quantum").is_err());
}

#[test]
fn validation_catches_inconsistent_configs() {
    let desk = RunConfig::desk();
    let cases: Vec<(RunConfig, &str)> = vec![
        (desk.with_override("lengths", "[]").unwrap(), "lengths"),
        (desk.with_override("lengths", "[8,16,32,128]").unwrap(), "max_seq_len"),
        (desk.with_override("train_sequences", "3").unwrap(), "cover"),
        (desk.with_override("train.clip_norm", "0.0").unwrap(), "clip_norm"),
        (desk.with_override("train.epochs", "0").unwrap(), "epochs"),
        (desk.with_override("solver.alpha", "-0.1").unwrap(), "solver"),
        (desk.with_override("solver.mode", "adaptive").unwrap(), "tau_energy"),
        (desk.with_override("energy.rev", "-1.0").unwrap(), "energy"),
        (desk.with_override("arch.d_model", "63").unwrap(), "d_model"),
        (desk.with_override("arch.n_heads", "5").unwrap(), "n_heads"),
    ];
    for (cfg, needle) in cases {
        let err = cfg.validate().expect_err(needle).to_string();
        assert!(err.contains(needle), "`{err}` should mention `{needle}`");
    }
}

#[test]
fn desk_preset_matches_the_experiment_grid() {
    let d = RunConfig::desk();
    assert_eq!(d.lengths, vec![8, 16, 32, 64]);
    assert_eq!(d.train_sequences, 4096);
    assert_eq!(d.eval_sequences, 1024);
    assert_eq!(d.train.epochs, 10);
    assert_eq!(d.train.k_train, 2);
    assert_eq!(d.eval_k, vec![8, 32]);
    assert_eq!(d.arch.d_model, 64);
    assert_eq!(d.arch.n_layers, 2);
    assert_eq!(d.arch.n_heads, 4);
    assert_eq!((d.energy.rev, d.energy.mask, d.energy.conf, d.energy.mem), (1.0, 0.5, 0.2, 0.0));
}

#[test]
fn paper_preset_matches_the_published_protocol() {
    let p = RunConfig::paper();
    assert_eq!(p.lengths, vec![8, 16, 32, 48, 64, 96, 128, 192, 256]);
    assert_eq!(p.train_sequences, 32_768);
    assert_eq!(p.eval_sequences, 4_096);
    assert_eq!(p.train.epochs, 25);
    assert_eq!(p.train.learning_rate, 3e-4);
    assert_eq!(p.train.batch_size, 256);
    assert_eq!(p.arch.d_model, 256);
    assert_eq!(p.arch.n_layers, 6);
}

// ── curriculum ──

#[test]
fn curriculum_off_is_constant() {
    let tc = RunConfig::desk().train;
    assert!(!tc.curriculum);
    for step in [0u64, 100, 999] {
        assert_eq!(curriculum(step, 1000, &tc), (1.0, tc.k_train));
    }
}

#[test]
fn curriculum_on_anneals_gamma_and_steps_k() {
    let mut tc = RunConfig::desk().train;
    tc.curriculum = true;
    let total = 1000u64;
    let (g0, k0) = curriculum(0, total, &tc);
    assert_eq!(g0, 10.0, "start at γ = 10");
    assert_eq!(k0, 4, "start at K = 4");
    let (g_end, _) = curriculum(100, total, &tc); // 10% horizon reached
    assert!((g_end - 1.0).abs() < 1e-12, "γ annealed to 1, got {g_end}");
    let (g_mid, _) = curriculum(50, total, &tc);
    assert!((g_mid - 5.5).abs() < 1e-12, "linear midpoint, got {g_mid}");
    let (_, k_late) = curriculum(500, total, &tc);
    assert_eq!(k_late, 16, "K jumps at the midpoint");
    let (g_late, _) = curriculum(900, total, &tc);
    assert_eq!(g_late, 1.0, "γ stays at 1 after the horizon");
}
