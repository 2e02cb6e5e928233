//! Command-layer checks: config resolution, run artifacts, exit-code
//! classification, the report surfaces, and the probe wrapper — through
//! the library API and, for the exit codes, the installed binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use common::{tiny_run, write_table_csvs};
use eqt_cli::{
    build_report, cmd_eval, cmd_gen_data, cmd_params, cmd_probe, cmd_report, cmd_train, probe_csv,
    probe_summary, resolve_config, EvalRow, Preset, RunLock,
};
use eqt_model::{init_params, param_report};
use eqt_solver::ProbeSpec;
use eqt_train::{generate_dataset, read_dataset, RunConfig, Variant};
use tempfile::TempDir;

// ── shared trained checkpoints ──

struct Trained {
    _dir: TempDir,
    eqt: PathBuf,
    standard: PathBuf,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let eqt_dir = dir.path().join("eqt");
        let std_dir = dir.path().join("standard");
        cmd_train(&tiny_run(Variant::Eqt), &eqt_dir).unwrap();
        cmd_train(&tiny_run(Variant::Standard), &std_dir).unwrap();
        Trained {
            eqt: eqt_dir.join("best.eqtc"),
            standard: std_dir.join("best.eqtc"),
            _dir: dir,
        }
    })
}

fn row(variant: &str, seq_len: usize, k: usize, acc: f64) -> EvalRow {
    EvalRow {
        variant: variant.into(),
        seq_len,
        k,
        token_accuracy: acc,
        mean_iters_used: k as f64,
        mean_energy_init: 0.0,
        mean_energy_final: 0.0,
        n_tokens: 1,
    }
}

// ── configuration resolution ──

#[test]
fn overrides_apply_in_order_and_the_seed_flag_wins() {
    let sets =
        ["train.epochs=3".to_string(), "train.epochs=5".to_string(), "seed=2".to_string()];
    let run = resolve_config(Preset::Desk, None, &sets, Some(9)).unwrap();
    assert_eq!(run.train.epochs, 5);
    assert_eq!(run.seed, 9);
    let paper = resolve_config(Preset::Paper, None, &[], None).unwrap();
    assert_eq!(paper.lengths.last(), Some(&256));
}

#[test]
fn a_missing_config_file_is_a_usage_error_naming_the_path() {
    let err = resolve_config(Preset::Desk, Some(Path::new("/nonexistent/run.json")), &[], None)
        .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("/nonexistent/run.json"), "{err}");
}

#[test]
fn unknown_config_fields_are_rejected_by_name() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("run.json");
    let mut doc: serde_json::Value = serde_json::from_str(&RunConfig::desk().to_json()).unwrap();
    doc["bogus"] = 1.into();
    std::fs::write(&path, doc.to_string()).unwrap();
    let err = resolve_config(Preset::Desk, Some(&path), &[], None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("bogus"), "{err}");

    let err =
        resolve_config(Preset::Desk, None, &["arch.bogus=3".to_string()], None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("bogus"), "{err}");
}

// ── train ──

#[test]
fn the_same_seed_produces_byte_identical_train_logs() {
    let dir = TempDir::new().unwrap();
    let mut run = tiny_run(Variant::Eqt);
    run.seed = 7;
    cmd_train(&run, &dir.path().join("a")).unwrap();
    cmd_train(&run, &dir.path().join("b")).unwrap();
    let a = std::fs::read(dir.path().join("a/train_log.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/train_log.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn a_run_directory_holds_config_log_checkpoints_and_no_stale_lock() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let run = tiny_run(Variant::Eqt);
    let summary = cmd_train(&run, &out).unwrap();
    for name in ["config.json", "train_log.csv", "best.eqtc", "checkpoint_epoch_000.eqtc"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    assert!(!out.join("lock").exists(), "lock not released");
    assert_eq!(summary.total_steps, 2); // 32 sequences / batch 16 × 1 epoch
    let text = std::fs::read_to_string(out.join("config.json")).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), run);
}

#[test]
fn the_run_directory_lock_is_exclusive_until_released() {
    let dir = TempDir::new().unwrap();
    let lock = RunLock::acquire(dir.path()).unwrap();
    let err = RunLock::acquire(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("locked"), "{err}");
    drop(lock);
    drop(RunLock::acquire(dir.path()).unwrap());
}

// ── eval ──

#[test]
fn an_explicit_k_list_emits_one_row_per_length_and_k() {
    let (rows, csv) = cmd_eval(&trained().eqt, None, Some(&[1, 2]), None).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].seq_len, rows[0].k), (4, 1));
    assert_eq!((rows[1].seq_len, rows[1].k), (4, 2));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("variant,seq_len,K,token_accuracy,"), "{csv}");
}

#[test]
fn the_standard_variant_ignores_the_k_list_and_records_zero() {
    let (rows, _) = cmd_eval(&trained().standard, None, Some(&[8, 32]), None).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].k, 0);
    assert_eq!(rows[0].mean_iters_used, 0.0);
}

#[test]
fn re_evaluating_the_same_checkpoint_writes_an_identical_csv() {
    let (_, a) = cmd_eval(&trained().eqt, None, None, None).unwrap();
    let (_, b) = cmd_eval(&trained().eqt, None, None, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn an_eval_length_beyond_max_seq_len_is_a_usage_error() {
    let err = cmd_eval(&trained().eqt, Some(&[512]), None, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("exceeds max_seq_len"), "{err}");
}

// ── report ──

#[test]
fn the_published_fixture_reproduces_the_table_and_average_row() {
    let dir = TempDir::new().unwrap();
    let (std_csv, eqt_csv) = write_table_csvs(dir.path());
    let out = dir.path().join("report");
    let report = cmd_report(&[&std_csv, &eqt_csv], &[], &out).unwrap();
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert_eq!(md, report.markdown);
    assert!(
        md.starts_with("| Length | Standard | EqT(K=8) | EqT(K=32) | Δ | Regime |\n"),
        "{md}"
    );
    assert!(md.contains("\n| 192 | 51.86 | 59.93 | 59.93 | +8.07 | Hard |\n"), "{md}");
    assert!(md.contains("\n| Average (L ≥ 64) | 67.53 | 70.81 | 70.81 | +3.28 | — |\n"), "{md}");
    let regimes: Vec<String> = report.rows.iter().map(|r| r.regime.to_string()).collect();
    assert_eq!(
        regimes,
        ["Easy", "Easy", "Easy", "Easy", "Medium", "Medium", "Hard", "Hard", "Hard"]
    );
    // 9 data rows + header + rule + average
    assert_eq!(md.lines().count(), 12);
    // no training logs were given: panel (c) is header-only
    assert_eq!(report.fig_c, "source,epoch,split,seq_len,loss,accuracy\n");
}

#[test]
fn a_single_length_report_has_one_row_and_no_average() {
    let rows =
        vec![row("standard", 128, 0, 64.64), row("eqt", 128, 8, 67.04)];
    let report = build_report(&rows, &[]).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert!(report.average.is_none());
    assert!(!report.markdown.contains("Average"), "{}", report.markdown);
}

#[test]
fn mismatched_length_grids_are_rejected_listing_the_missing_cells() {
    let rows = vec![
        row("standard", 8, 0, 99.0),
        row("standard", 16, 0, 90.0),
        row("eqt", 8, 8, 99.0),
        row("eqt", 8, 32, 99.0),
        row("eqt", 16, 8, 92.0), // K=32 missing at L=16
        row("eqt", 24, 8, 80.0), // standard missing at L=24
        row("eqt", 24, 32, 81.0),
    ];
    let err = build_report(&rows, &[]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("L=16 (eqt K=32)"), "{msg}");
    assert!(msg.contains("L=24 (standard)"), "{msg}");
}

#[test]
fn emitted_deltas_and_averages_match_recomputation_from_raw_rows() {
    // Two "seeds" per cell so the averaging path is exercised.
    let mut rows = Vec::new();
    let grid: [(usize, [f64; 2], [f64; 2], [f64; 2]); 3] = [
        (32, [99.9, 99.8], [99.7, 99.9], [99.71, 99.91]),
        (64, [85.0, 86.0], [88.0, 89.0], [88.01, 89.01]),
        (128, [60.0, 61.0], [64.0, 65.5], [64.01, 65.51]),
    ];
    for (len, std, k8, k32) in grid {
        for s in 0..2 {
            rows.push(row("standard", len, 0, std[s]));
            rows.push(row("eqt", len, 8, k8[s]));
            rows.push(row("eqt", len, 32, k32[s]));
        }
    }
    let report = build_report(&rows, &[]).unwrap();

    let cell = |variant: &str, k: Option<usize>, len: usize| -> f64 {
        let xs: Vec<f64> = rows
            .iter()
            .filter(|r| {
                r.variant == variant && r.seq_len == len && k.is_none_or(|k| r.k == k)
            })
            .map(|r| r.token_accuracy)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    for r in &report.rows {
        let std_mean = cell("standard", None, r.seq_len);
        let last = cell("eqt", Some(32), r.seq_len);
        assert_eq!(r.standard, std_mean);
        assert_eq!(r.delta, last - std_mean);
        let line = format!(
            "| {} | {:.2} | {:.2} | {:.2} | {:+.2} |",
            r.seq_len,
            std_mean,
            cell("eqt", Some(8), r.seq_len),
            last,
            last - std_mean
        );
        assert!(report.markdown.contains(&line), "{line}\n{}", report.markdown);
        assert!(report.fig_b.contains(&format!("{},{:.4}\n", r.seq_len, last - std_mean)));
    }
    let tail: Vec<f64> = report.rows.iter().filter(|r| r.seq_len >= 64).map(|r| r.delta).collect();
    let avg = report.average.as_ref().unwrap();
    assert_eq!(avg.delta, tail.iter().sum::<f64>() / tail.len() as f64);
    assert!(report.markdown.contains(&format!("| Average (L ≥ 64) | ")), "{}", report.markdown);
}

#[test]
fn figure_csvs_carry_the_four_panels() {
    let dir = TempDir::new().unwrap();
    let (std_csv, eqt_csv) = write_table_csvs(dir.path());
    let log_path = dir.path().join("train_log.csv");
    std::fs::write(
        &log_path,
        "epoch,split,seq_len,loss,pred_loss,energy,accuracy,lr,gamma,K,seconds\n\
         0,train,8,0.5,0.4,0.1,90.0,0.001,1.0,2,0.0\n\
         0,val,8,0.6,0.5,0.1,88.0,0.001,1.0,2,0.0\n",
    )
    .unwrap();
    let out = dir.path().join("report");
    let report = cmd_report(&[&std_csv, &eqt_csv], &[&log_path], &out).unwrap();

    assert!(report.fig_a.starts_with("seq_len,standard,eqt_k8,eqt_k32\n"));
    assert_eq!(report.fig_a.lines().count(), 10);
    assert!(report.fig_a.contains("\n192,51.8600,59.9300,59.9300\n"));

    assert!(report.fig_b.starts_with("seq_len,delta\n"));
    assert!(report.fig_b.contains("\n192,8.0700\n"));

    assert_eq!(
        report.fig_c,
        "source,epoch,split,seq_len,loss,accuracy\n\
         train_log,0,train,8,0.5,90.0\n\
         train_log,0,val,8,0.6,88.0\n"
    );

    let lines: Vec<&str> = report.fig_d.lines().collect();
    assert_eq!(lines[0], "regime,mean_delta");
    assert_eq!(lines.len(), 4);
    let parsed: Vec<(&str, f64)> = lines[1..]
        .iter()
        .map(|l| {
            let (name, v) = l.split_once(',').unwrap();
            (name, v.parse().unwrap())
        })
        .collect();
    assert_eq!(parsed[0].0, "Easy");
    assert_eq!(parsed[1].0, "Medium");
    assert_eq!(parsed[2].0, "Hard");
    assert!((parsed[0].1 - -0.4075).abs() < 5e-5);
    assert!((parsed[1].1 - 2.575).abs() < 5e-5);
    assert!((parsed[2].1 - 11.27 / 3.0).abs() < 5e-5);
    for (path, text) in [
        ("fig_a.csv", &report.fig_a),
        ("fig_b.csv", &report.fig_b),
        ("fig_c.csv", &report.fig_c),
        ("fig_d.csv", &report.fig_d),
    ] {
        assert_eq!(&std::fs::read_to_string(out.join(path)).unwrap(), text);
    }
}

// ── probe ──

#[test]
fn probe_defaults_match_the_worked_constants() {
    let diag = cmd_probe(&ProbeSpec::default());
    assert!((diag.rho_theory - 0.8).abs() < 1e-12);
    assert!(!diag.outside_guarantee);
    let summary = probe_summary(&diag);
    assert!(summary.contains("0.8000"), "{summary}");
    assert!(summary.contains("0.0281"), "{summary}");
    assert!(summary.contains("inside"), "{summary}");
    let csv = probe_csv(&diag);
    assert_eq!(csv.lines().count(), 1 + 16, "header plus exactly K data rows");
    assert!(csv.lines().nth(1).unwrap().starts_with("1,"));
    assert!(csv.lines().last().unwrap().starts_with("16,"));
}

#[test]
fn an_alpha_above_the_guarantee_bound_is_flagged() {
    let spec = ProbeSpec { alpha: 0.5, ..ProbeSpec::default() };
    let diag = cmd_probe(&spec);
    assert!(diag.outside_guarantee);
    assert!(probe_summary(&diag).contains("outside the guarantee"));
}

// ── gen-data and params ──

#[test]
fn gen_data_files_reproduce_in_memory_generation_exactly() {
    let dir = TempDir::new().unwrap();
    let run = tiny_run(Variant::Eqt);
    let data_dir = dir.path().join("data");
    let paths = cmd_gen_data(&run, &data_dir).unwrap();
    assert_eq!(paths.len(), 2); // one length, two splits

    let ds = read_dataset(&data_dir.join("parity_train_L4.txt")).unwrap();
    assert_eq!(ds.samples, generate_dataset(32, 4, run.seed, "train").samples);
    assert_ne!(ds.samples, generate_dataset(32, 4, run.seed + 1, "train").samples);

    // Training from the files matches training from memory byte-for-byte.
    let mem_out = dir.path().join("mem");
    cmd_train(&run, &mem_out).unwrap();
    let mut file_run = run.clone();
    file_run.data_dir = Some(data_dir.display().to_string());
    let file_out = dir.path().join("file");
    cmd_train(&file_run, &file_out).unwrap();
    assert_eq!(
        std::fs::read(mem_out.join("train_log.csv")).unwrap(),
        std::fs::read(file_out.join("train_log.csv")).unwrap()
    );
}

#[test]
fn params_reports_counts_for_the_resolved_config() {
    let run = RunConfig::desk();
    let text = cmd_params(&run);
    let report = param_report(&init_params::<f32>(&run.arch(), run.seed));
    assert!(text.contains(&report.total.to_string()), "{text}");
    assert!(text.contains(&report.reverse.to_string()), "{text}");
    assert!(text.contains('%'), "{text}");
}

// ── binary exit codes ──

fn eqt_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eqt"))
}

#[test]
fn the_binary_maps_usage_errors_to_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = eqt_bin()
        .args(["train", "--config", "/nonexistent/run.json", "--out"])
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.json"));
}

#[test]
fn the_binary_maps_a_mid_run_abort_to_exit_3_with_partial_artifacts() {
    let dir = TempDir::new().unwrap();
    let mut run = tiny_run(Variant::Eqt);
    run.train.learning_rate = 1e18; // drives the first update to overflow
    run.train.clip_norm = 1e30;
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, run.to_json()).unwrap();
    let out_dir = dir.path().join("run");
    let out = eqt_bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
    assert!(out_dir.join("abort.eqtc").exists(), "partial checkpoint missing");
    assert!(!out_dir.join("lock").exists(), "lock not released on abort");
}

#[test]
fn the_binary_prints_the_probe_summary_and_exits_0() {
    let out = eqt_bin().args(["probe"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.0281"), "{stdout}");
    assert!(stdout.lines().count() >= 4 + 17, "summary plus CSV expected:\n{stdout}");
}
