//! `probe`: thin wrapper over the synthetic quadratic convergence probe.
//! The CSV carries one row per iteration k = 1..=K; the k = 0 baseline is
//! folded into the diagnostics.

use eqt_solver::{quadratic_convergence_probe, ConvergenceDiagnostics, ProbeSpec};

pub fn cmd_probe(spec: &ProbeSpec) -> ConvergenceDiagnostics {
    quadratic_convergence_probe(spec)
}

pub fn probe_csv(diag: &ConvergenceDiagnostics) -> String {
    let mut s = String::from("k,phi,energy,step_norm,dist_to_hstar\n");
    for row in diag.rows.iter().filter(|r| r.k > 0) {
        s.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            row.k, row.phi, row.energy, row.step_norm, row.dist_to_hstar
        ));
    }
    s
}

pub fn probe_summary(diag: &ConvergenceDiagnostics) -> String {
    let k = diag.rows.len() - 1;
    let mut s = format!(
        "theoretical contraction ρ = {:.4} (ρ^{} = {:.4})\n\
         fitted contraction ρ̂ = {:.4} (log-fit R² = {:.4})\n\
         error reduction after {} iterations: {:.4}\n",
        diag.rho_theory,
        k,
        diag.rho_theory.powi(k as i32),
        diag.rho_hat,
        diag.fit_r2,
        k,
        diag.reduction
    );
    if diag.outside_guarantee {
        s.push_str("WARNING: α is outside the guarantee window 0 < α < 2/(μ + L + 1/γ)\n");
    } else {
        s.push_str("α is inside the guarantee window 0 < α < 2/(μ + L + 1/γ)\n");
    }
    s
}
