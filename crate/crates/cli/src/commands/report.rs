//! `report`: merge eval CSVs (both variants, any number of seeds) into the
//! accuracy-vs-length markdown table and four figure CSVs. Everything is
//! recomputed from the raw rows; no checkpoint is touched.

use std::path::Path;

use crate::csvio::{parse_field, read_csv, CsvTable};
use crate::error::{usage, CliError};
use crate::lock::RunLock;
use eqt_train::{difficulty_regimes, regime_of, Regime, RegimeSummary};

use super::eval::EVAL_HEADER;

// ── raw rows ──

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub variant: String,
    pub seq_len: usize,
    pub k: usize,
    pub token_accuracy: f64,
    pub mean_iters_used: f64,
    pub mean_energy_init: f64,
    pub mean_energy_final: f64,
    pub n_tokens: usize,
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>, CliError> {
    let origin = path.display().to_string();
    let table = read_csv(path)?;
    if table.header.join(",") != EVAL_HEADER {
        return Err(usage(format!("{origin}: not an eval CSV (unexpected header)")));
    }
    let mut rows = Vec::with_capacity(table.rows.len());
    for r in &table.rows {
        rows.push(EvalRow {
            variant: r[0].clone(),
            seq_len: parse_field(&r[1], "seq_len", &origin)?,
            k: parse_field(&r[2], "K", &origin)?,
            token_accuracy: parse_field(&r[3], "token_accuracy", &origin)?,
            mean_iters_used: parse_field(&r[4], "mean_iters_used", &origin)?,
            mean_energy_init: parse_field(&r[5], "mean_energy_init", &origin)?,
            mean_energy_final: parse_field(&r[6], "mean_energy_final", &origin)?,
            n_tokens: parse_field(&r[7], "n_tokens", &origin)?,
        });
    }
    Ok(rows)
}

// ── derived table ──

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub seq_len: usize,
    pub standard: f64,
    /// One entry per K in `Report::ks` order.
    pub eqt: Vec<f64>,
    /// EqT at the largest K minus Standard.
    pub delta: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportAverage {
    pub standard: f64,
    pub eqt: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub ks: Vec<usize>,
    pub rows: Vec<ReportRow>,
    /// Column means over lengths ≥ 64; absent for single-row tables or
    /// grids that never reach 64.
    pub average: Option<ReportAverage>,
    pub summary: RegimeSummary,
    pub markdown: String,
    pub fig_a: String,
    pub fig_b: String,
    pub fig_c: String,
    pub fig_d: String,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean accuracy for rows matching one (variant, K, length) cell, or None
/// if the cell has no rows.
fn cell_mean(rows: &[EvalRow], variant: &str, k: Option<usize>, len: usize) -> Option<f64> {
    let accs: Vec<f64> = rows
        .iter()
        .filter(|r| r.variant == variant && r.seq_len == len && k.is_none_or(|k| r.k == k))
        .map(|r| r.token_accuracy)
        .collect();
    if accs.is_empty() { None } else { Some(mean(&accs)) }
}

pub fn build_report(rows: &[EvalRow], train_logs: &[(String, String)]) -> Result<Report, CliError> {
    if !rows.iter().any(|r| r.variant == "standard") {
        return Err(usage("report needs eval rows for the standard variant"));
    }
    let mut ks: Vec<usize> = rows.iter().filter(|r| r.variant == "eqt").map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(usage("report needs eval rows for the eqt variant"));
    }

    let mut lengths: Vec<usize> = rows.iter().map(|r| r.seq_len).collect();
    lengths.sort_unstable();
    lengths.dedup();

    // Every length must be covered by the standard variant and by every K.
    let mut missing = Vec::new();
    let mut table = Vec::new();
    for &len in &lengths {
        let standard = cell_mean(rows, "standard", None, len);
        if standard.is_none() {
            missing.push(format!("L={len} (standard)"));
        }
        let mut eqt = Vec::with_capacity(ks.len());
        for &k in &ks {
            match cell_mean(rows, "eqt", Some(k), len) {
                Some(a) => eqt.push(a),
                None => missing.push(format!("L={len} (eqt K={k})")),
            }
        }
        if let Some(standard) = standard {
            if eqt.len() == ks.len() {
                let delta = eqt[ks.len() - 1] - standard;
                table.push(ReportRow {
                    seq_len: len,
                    standard,
                    eqt,
                    delta,
                    regime: regime_of(standard),
                });
            }
        }
    }
    if !missing.is_empty() {
        return Err(usage(format!(
            "length grids do not match across inputs; missing: {}",
            missing.join(", ")
        )));
    }

    let tail: Vec<&ReportRow> = table.iter().filter(|r| r.seq_len >= 64).collect();
    let average = (table.len() > 1 && !tail.is_empty()).then(|| ReportAverage {
        standard: mean(&tail.iter().map(|r| r.standard).collect::<Vec<_>>()),
        eqt: (0..ks.len())
            .map(|i| mean(&tail.iter().map(|r| r.eqt[i]).collect::<Vec<_>>()))
            .collect(),
        delta: mean(&tail.iter().map(|r| r.delta).collect::<Vec<_>>()),
    });

    let triples: Vec<(usize, f64, f64)> =
        table.iter().map(|r| (r.seq_len, r.standard, r.eqt[ks.len() - 1])).collect();
    let summary = difficulty_regimes(&triples);

    let markdown = render_markdown(&ks, &table, average.as_ref());
    let fig_a = render_fig_a(&ks, &table);
    let fig_b = render_fig_b(&table);
    let fig_c = render_fig_c(train_logs)?;
    let fig_d = render_fig_d(&summary);

    Ok(Report { ks, rows: table, average, summary, markdown, fig_a, fig_b, fig_c, fig_d })
}

// ── rendering ──

fn render_markdown(ks: &[usize], rows: &[ReportRow], average: Option<&ReportAverage>) -> String {
    let mut md = String::from("| Length | Standard |");
    for &k in ks {
        md.push_str(&format!(" EqT(K={k}) |"));
    }
    md.push_str(" Δ | Regime |\n|");
    for _ in 0..ks.len() + 4 {
        md.push_str("---|");
    }
    md.push('\n');
    for r in rows {
        md.push_str(&format!("| {} | {:.2} |", r.seq_len, r.standard));
        for &a in &r.eqt {
            md.push_str(&format!(" {a:.2} |"));
        }
        md.push_str(&format!(" {:+.2} | {} |\n", r.delta, r.regime));
    }
    if let Some(avg) = average {
        md.push_str(&format!("| Average (L ≥ 64) | {:.2} |", avg.standard));
        for &a in &avg.eqt {
            md.push_str(&format!(" {a:.2} |"));
        }
        md.push_str(&format!(" {:+.2} | — |\n", avg.delta));
    }
    md
}

fn render_fig_a(ks: &[usize], rows: &[ReportRow]) -> String {
    let mut s = String::from("seq_len,standard");
    for &k in ks {
        s.push_str(&format!(",eqt_k{k}"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{:.4}", r.seq_len, r.standard));
        for &a in &r.eqt {
            s.push_str(&format!(",{a:.4}"));
        }
        s.push('\n');
    }
    s
}

fn render_fig_b(rows: &[ReportRow]) -> String {
    let mut s = String::from("seq_len,delta\n");
    for r in rows {
        s.push_str(&format!("{},{:.4}\n", r.seq_len, r.delta));
    }
    s
}

/// Training curves: one block of (epoch, split, seq_len, loss, accuracy)
/// rows per supplied train log, tagged by source. Header-only when no logs
/// are given.
fn render_fig_c(train_logs: &[(String, String)]) -> Result<String, CliError> {
    let mut s = String::from("source,epoch,split,seq_len,loss,accuracy\n");
    for (source, text) in train_logs {
        let table: CsvTable = crate::csvio::parse_csv(text, source)?;
        let cols = ["epoch", "split", "seq_len", "loss", "accuracy"]
            .map(|name| table.col(name, source));
        let mut idx = Vec::with_capacity(cols.len());
        for c in cols {
            idx.push(c?);
        }
        let tag = source.replace(',', "_");
        for row in &table.rows {
            s.push_str(&tag);
            for &i in &idx {
                s.push(',');
                s.push_str(&row[i]);
            }
            s.push('\n');
        }
    }
    Ok(s)
}

fn render_fig_d(summary: &RegimeSummary) -> String {
    let mut s = String::from("regime,mean_delta\n");
    for (regime, delta) in &summary.mean_delta {
        s.push_str(&format!("{regime},{delta:.4}\n"));
    }
    s
}

// ── filesystem entry point ──

pub fn cmd_report(
    eval_paths: &[&Path],
    train_log_paths: &[&Path],
    out: &Path,
) -> Result<Report, CliError> {
    let mut rows = Vec::new();
    for path in eval_paths {
        rows.extend(read_eval_csv(path)?);
    }
    let mut logs = Vec::new();
    for path in train_log_paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        logs.push((stem, text));
    }
    let report = build_report(&rows, &logs)?;
    let _lock = RunLock::acquire(out)?;
    let files = [
        ("report.md", &report.markdown),
        ("fig_a.csv", &report.fig_a),
        ("fig_b.csv", &report.fig_b),
        ("fig_c.csv", &report.fig_c),
        ("fig_d.csv", &report.fig_d),
    ];
    for (name, text) in files {
        let path = out.join(name);
        std::fs::write(&path, text)
            .map_err(|e| crate::error::runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}
