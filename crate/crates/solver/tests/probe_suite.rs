//! Convergence-rate probe: fitted contraction vs theory on synthetic quadratics.

use eqt_solver::{
    fit_contraction, quadratic_convergence_probe, theoretical_rate, ProbeSpec, SpectrumKind,
};

#[test]
fn worked_constants_give_rate_point_eight() {
    let rho = theoretical_rate(0.1, 10.0, 1.0, 0.1);
    assert!((rho - 0.8).abs() < 1e-12, "ρ = {rho}, want 0.8");
    // 16 iterations then reduce error by ρ¹⁶ ≈ 0.028.
    assert!((rho.powi(16) - 0.028147497671).abs() < 1e-9);
}

#[test]
fn isotropic_rate_is_exact_single_mode_factor() {
    // μ = L collapses the harmonic mean to the lone damped eigenvalue.
    let rho = theoretical_rate(2.0, 2.0, 0.5, 0.05);
    assert!((rho - (1.0 - 0.05 * (2.0 + 2.0))).abs() < 1e-12);
}

#[test]
fn default_probe_matches_worked_example() {
    let diag = quadratic_convergence_probe(&ProbeSpec::default());
    assert!((diag.rho_theory - 0.8).abs() < 1e-12);
    assert!(diag.rho_hat <= diag.rho_theory + 0.02, "ρ̂ = {}", diag.rho_hat);
    assert!(diag.rho_hat > 0.0 && diag.rho_hat < 1.0);
    assert!(diag.fit_r2 >= 0.99, "fit R² = {}", diag.fit_r2);
    assert!(
        diag.reduction >= 0.02 && diag.reduction <= 0.04,
        "16-step error reduction = {}, want ≈ 0.028",
        diag.reduction
    );
    assert!(!diag.outside_guarantee);

    // Row schema: k = 0..=16, distances strictly decreasing, first step 0.
    assert_eq!(diag.rows.len(), 17);
    assert_eq!(diag.rows[0].k, 0);
    assert_eq!(diag.rows[0].step_norm, 0.0);
    for w in diag.rows.windows(2) {
        assert!(w[1].dist_to_hstar < w[0].dist_to_hstar, "distance not decreasing");
        assert_eq!(w[1].k, w[0].k + 1);
    }
}

#[test]
fn log_spaced_spectrum_converges_with_sane_fit() {
    let spec = ProbeSpec { spectrum: SpectrumKind::LogSpaced, ..ProbeSpec::default() };
    let diag = quadratic_convergence_probe(&spec);
    assert!(diag.rho_hat > 0.0 && diag.rho_hat < 1.0);
    assert!(diag.fit_r2 >= 0.95, "multi-mode decay still near log-linear");
    assert!(diag.reduction < 0.2);
}

#[test]
fn isotropic_probe_converges_to_1e6_within_60_iterations() {
    // α = 1/(L + 1/γ) zeroes the single damped mode.
    let spec = ProbeSpec {
        mu: 2.0,
        l_smooth: 2.0,
        alpha: 1.0 / (2.0 + 1.0),
        k: 60,
        ..ProbeSpec::default()
    };
    let diag = quadratic_convergence_probe(&spec);
    let last = diag.rows.last().unwrap();
    assert!(
        last.dist_to_hstar <= 1e-6,
        "dist after {} iters = {}",
        last.k,
        last.dist_to_hstar
    );
}

#[test]
fn step_outside_guarantee_window_is_flagged_but_runs() {
    // 2/(μ + L + 1/γ) = 0.18018…; α = 0.19 is outside.
    let spec = ProbeSpec { alpha: 0.19, ..ProbeSpec::default() };
    let diag = quadratic_convergence_probe(&spec);
    assert!(diag.outside_guarantee);
    assert_eq!(diag.rows.len(), 17);
    assert!(diag.rows.iter().all(|r| r.dist_to_hstar.is_finite()));
}

#[test]
fn probe_is_deterministic_for_a_seed() {
    let spec = ProbeSpec { seed: 7, ..ProbeSpec::default() };
    let a = quadratic_convergence_probe(&spec);
    let b = quadratic_convergence_probe(&spec);
    assert_eq!(a.rho_hat.to_bits(), b.rho_hat.to_bits());
    assert_eq!(a.fit_r2.to_bits(), b.fit_r2.to_bits());
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.dist_to_hstar.to_bits(), rb.dist_to_hstar.to_bits());
        assert_eq!(ra.phi.to_bits(), rb.phi.to_bits());
    }
}

#[test]
fn fit_recovers_exact_geometric_decay() {
    let dists: Vec<f64> = (0..20).map(|k| 3.0 * 0.7f64.powi(k)).collect();
    let (rho, r2) = fit_contraction(&dists);
    assert!((rho - 0.7).abs() < 1e-12);
    assert!((r2 - 1.0).abs() < 1e-12);
}

#[test]
fn fit_handles_exact_convergence() {
    // Distance hits zero: treated as exact convergence, not a fit failure.
    let (rho, r2) = fit_contraction(&[1.0, 0.0, 0.0]);
    assert_eq!(rho, 0.0);
    assert_eq!(r2, 1.0);
    let (rho, r2) = fit_contraction(&[]);
    assert_eq!(rho, 0.0);
    assert_eq!(r2, 1.0);
}
