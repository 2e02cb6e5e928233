//! Refinement-loop behavior: stopping rules, guards, certificates, traces.

use std::cell::RefCell;

use eqt_solver::{
    certify_equilibrium, equilibrium_residual, refine, EnergyEval, EnergyFn, GradFlow,
    QuadraticEnergy, SolverConfig, StopCause, StopMode,
};
use eqt_tensor::{layer_norm, ops, Tensor};

fn probe_cfg(k_max: usize) -> SolverConfig {
    SolverConfig { k_max, record_trace: true, snapshots: true, ..SolverConfig::default() }
}

/// Energy that replays a scripted sequence of totals with zero gradient.
struct ScriptedEnergy {
    values: RefCell<Vec<f64>>,
}

impl ScriptedEnergy {
    fn new(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.reverse();
        ScriptedEnergy { values: RefCell::new(v) }
    }
}

impl EnergyFn<f64> for ScriptedEnergy {
    fn energy(&self, h: &Tensor<f64>) -> EnergyEval<f64> {
        let v = self.values.borrow_mut().pop().expect("script exhausted");
        // Keep the graph attached to h but with zero gradient, so the
        // iterate never moves and the scripted values drive the stop rules.
        let total = ops::add_const(&ops::scale(&ops::sum_squares(h), 0.0), v);
        EnergyEval { total, per_row: vec![v; h.shape()[0]] }
    }
}

// ── K_max = 0 ──

#[test]
fn k_max_zero_returns_finished_f_with_empty_trace() {
    let f = Tensor::<f64>::from_fn(&[2, 4], |i| i as f64 * 0.3 - 1.0);
    let energy = QuadraticEnergy::axis_aligned(&[1.0, 2.0, 3.0, 4.0], Tensor::zeros(&[1, 4]));
    let cfg = probe_cfg(0);

    // Probe mode: no finisher → output is exactly f.
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);
    assert_eq!(res.h_star.data(), f.data());
    assert!(res.traces.iter().all(|t| t.iters.is_empty() && t.iterations_used == 0));

    // With a layer-norm finisher the output is layer_norm(f).
    let gain = Tensor::<f64>::ones(&[4]);
    let bias = Tensor::<f64>::zeros(&[4]);
    let finish = |h: &Tensor<f64>| layer_norm(h, &gain, &bias, 1e-5);
    let res = refine(&f, &energy, &cfg, GradFlow::None, Some(&finish));
    let want = layer_norm(&f, &gain, &bias, 1e-5);
    assert_eq!(res.h_star.data(), want.data());
    assert_eq!(res.h_pre_norm.data(), f.data());
}

// ── scalar quadratic ──

#[test]
fn scalar_quadratic_converges_monotonically_to_closed_form() {
    // L(h) = ½‖h‖² (λq = 1, c = 0), γ = 1, f = 2 → h* = (0 + 2)/(1 + 1) = 1.
    let f = Tensor::<f64>::full(&[1, 1], 2.0);
    let energy = QuadraticEnergy::axis_aligned(&[1.0], Tensor::zeros(&[1, 1]));
    let cfg = probe_cfg(200);
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);

    let h_star = res.h_star.data()[0];
    assert!((h_star - 1.0).abs() < 1e-9, "h* = {h_star}, want 1");

    // Iterates decrease monotonically from 2 toward 1.
    let snaps = res.snapshots.unwrap();
    let vals: Vec<f64> = snaps.iter().map(|s| s.data()[0]).collect();
    assert_eq!(vals[0], 2.0);
    for w in vals.windows(2) {
        assert!(w[1] <= w[0] + 1e-15 && w[1] >= 1.0 - 1e-12, "not monotone: {w:?}");
    }

    // Matches the closed-form helper too.
    let cf = energy.closed_form_minimizer(&f, 1.0);
    assert!((cf.data()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn all_zero_weights_early_stop_at_first_iteration() {
    // λ = 0 everywhere → ∇L = 0 and h⁰ = f is already the fixed point.
    let f = Tensor::<f64>::from_fn(&[3, 5], |i| (i as f64).sin());
    let energy = QuadraticEnergy::axis_aligned(&[0.0; 5], Tensor::zeros(&[1, 5]));
    let cfg = SolverConfig {
        k_max: 50,
        mode: StopMode::EarlyStop,
        record_trace: true,
        ..SolverConfig::default()
    };
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);
    for t in &res.traces {
        assert_eq!(t.iterations_used, 1);
        assert_eq!(t.stop_cause, StopCause::StepSmall);
        assert_eq!(t.iters[0].step_norm, 0.0);
        assert_eq!(t.iters[0].grad_energy_norm, 0.0);
        assert_eq!(t.iters[0].grad_prox_norm, 0.0);
    }
    assert_eq!(res.h_star.data(), f.data());
}

// ── adaptive stopping ──

#[test]
fn adaptive_stops_after_third_iteration_when_energy_crosses_tau() {
    // Post-update energies 5, 3, 0.5; τ = 1 → first L < τ after iteration 3.
    let energy = ScriptedEnergy::new(&[9.0, 5.0, 3.0, 0.5]);
    let f = Tensor::<f64>::full(&[1, 2], 1.0);
    let cfg = SolverConfig {
        k_max: 10,
        mode: StopMode::Adaptive,
        tau_energy: Some(1.0),
        record_trace: true,
        ..SolverConfig::default()
    };
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);
    let t = &res.traces[0];
    assert_eq!(t.iterations_used, 3);
    assert_eq!(t.stop_cause, StopCause::EnergyBelowTau);
    let energies: Vec<f64> = t.iters.iter().map(|r| r.energy).collect();
    assert_eq!(energies, vec![5.0, 3.0, 0.5]);
    assert_eq!(res.energy_initial, vec![9.0]);
    assert_eq!(res.energy_final, Some(vec![0.5]));
}

#[test]
fn adaptive_tau_above_initial_energy_uses_zero_iterations() {
    let f = Tensor::<f64>::from_fn(&[2, 3], |i| i as f64);
    let energy = QuadraticEnergy::axis_aligned(&[1.0, 1.0, 1.0], Tensor::zeros(&[1, 3]));
    let cfg = SolverConfig {
        k_max: 16,
        mode: StopMode::Adaptive,
        tau_energy: Some(1e9),
        record_trace: true,
        ..SolverConfig::default()
    };
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);
    for t in &res.traces {
        assert_eq!(t.iterations_used, 0);
        assert_eq!(t.stop_cause, StopCause::EnergyBelowTau);
        assert!(t.iters.is_empty());
    }
    assert_eq!(res.h_star.data(), f.data());
}

#[test]
fn adaptive_tau_zero_runs_to_cap() {
    // Quadratic energies are ≥ 0, so τ = 0 can never trigger.
    let f = Tensor::<f64>::from_fn(&[1, 3], |i| 1.0 + i as f64);
    let energy = QuadraticEnergy::axis_aligned(&[0.5, 1.0, 2.0], Tensor::zeros(&[1, 3]));
    let cfg = SolverConfig {
        k_max: 12,
        mode: StopMode::Adaptive,
        tau_energy: Some(0.0),
        ..SolverConfig::default()
    };
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);
    assert_eq!(res.traces[0].iterations_used, 12);
    assert_eq!(res.traces[0].stop_cause, StopCause::Cap);
}

// ── guards ──

#[test]
fn divergence_guard_stops_after_five_rising_objectives() {
    // Scripted energies rise forever; the iterate never moves, so Φ tracks
    // the energy exactly and rises every iteration.
    let energy = ScriptedEnergy::new(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let f = Tensor::<f64>::full(&[1, 2], 1.0);
    let cfg = SolverConfig { k_max: 40, record_trace: true, ..SolverConfig::default() };
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);
    let t = &res.traces[0];
    assert_eq!(t.stop_cause, StopCause::Diverged);
    assert_eq!(t.iterations_used, 5);
}

#[test]
fn non_finite_iterate_reverts_row_and_freezes() {
    // A huge curvature with the default step overshoots to overflow within
    // a few iterations; the row must revert to its last finite iterate.
    let f = Tensor::<f64>::full(&[1, 1], 1.0);
    let energy = QuadraticEnergy::axis_aligned(&[1e308], Tensor::zeros(&[1, 1]));
    let cfg = probe_cfg(20);
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);
    let t = &res.traces[0];
    assert_eq!(t.stop_cause, StopCause::NonFinite);
    assert!(res.h_star.all_finite(), "frozen state must stay finite");
    assert!(t.iterations_used < 20);
}

// ── certificates ──

#[test]
fn residual_vanishes_at_closed_form_minimizer() {
    let f = Tensor::<f64>::from_fn(&[4, 6], |i| ((i * 37 % 11) as f64 - 5.0) * 0.3);
    let eig = [0.3, 0.7, 1.1, 2.0, 3.5, 5.0];
    let center = Tensor::from_fn(&[1, 6], |i| (i as f64 - 2.5) * 0.2);
    let energy = QuadraticEnergy::axis_aligned(&eig, center);
    let gamma = 1.0;
    let h_star = energy.closed_form_minimizer(&f, gamma);
    let residuals = equilibrium_residual(&energy, &h_star, &f, gamma);
    for r in residuals {
        assert!(r <= 1e-6, "residual {r} at exact minimizer");
    }
    let (_, certified) = certify_equilibrium(&energy, &h_star, &f, gamma, 1e-3);
    assert!(certified.iter().all(|&c| c));
}

#[test]
fn residual_zero_at_f_when_all_weights_zero() {
    let f = Tensor::<f64>::from_fn(&[2, 4], |i| i as f64 * 0.1);
    let energy = QuadraticEnergy::axis_aligned(&[0.0; 4], Tensor::zeros(&[1, 4]));
    let residuals = equilibrium_residual(&energy, &f, &f, 1.0);
    assert_eq!(residuals, vec![0.0, 0.0]);
}

#[test]
fn residual_shrinks_with_more_iterations() {
    let f = Tensor::<f64>::from_fn(&[5, 8], |i| ((i % 7) as f64 - 3.0) * 0.4);
    let eig: Vec<f64> = (0..8).map(|i| 0.2 + 0.5 * i as f64).collect();
    let energy = QuadraticEnergy::axis_aligned(&eig, Tensor::zeros(&[1, 8]));
    let r2 = {
        let res = refine(&f, &energy, &probe_cfg(2), GradFlow::None, None);
        equilibrium_residual(&energy, &res.h_pre_norm, &f, 1.0)
    };
    let r32 = {
        let res = refine(&f, &energy, &probe_cfg(32), GradFlow::None, None);
        equilibrium_residual(&energy, &res.h_pre_norm, &f, 1.0)
    };
    for (a, b) in r32.iter().zip(&r2) {
        assert!(a <= b, "residual K=32 {a} > K=2 {b}");
    }
}

// ── consistency & determinism ──

#[test]
fn early_stop_matches_fixed_k_within_ten_epsilon() {
    // Curvatures ≥ 1 keep the slowest contraction at 0.8, so the leftover
    // drift after the stop is well inside the 10·ε consistency bound.
    let f = Tensor::<f64>::from_fn(&[6, 10], |i| ((i * 13 % 17) as f64 - 8.0) * 0.08);
    let eig: Vec<f64> = (0..10).map(|i| 1.0 + 0.2 * i as f64).collect();
    let energy = QuadraticEnergy::axis_aligned(&eig, Tensor::zeros(&[1, 10]));
    let eps = 1e-3;
    let fixed = SolverConfig { k_max: 64, ..SolverConfig::default() };
    let early = SolverConfig {
        k_max: 64,
        mode: StopMode::EarlyStop,
        eps_stop: eps,
        record_trace: true,
        ..SolverConfig::default()
    };
    let hf = refine(&f, &energy, &fixed, GradFlow::None, None);
    let he = refine(&f, &energy, &early, GradFlow::None, None);
    assert!(he.traces.iter().any(|t| t.iterations_used < 64), "early stop never fired");
    let d = 10;
    for r in 0..6 {
        let diff: f64 = (0..d)
            .map(|j| {
                let a = he.h_star.data()[r * d + j];
                let b = hf.h_star.data()[r * d + j];
                (a - b) * (a - b)
            })
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 10.0 * eps, "row {r}: early-stop vs fixed-K differ by {diff}");
    }
}

#[test]
fn identical_inputs_produce_bit_identical_traces() {
    let f = Tensor::<f64>::from_fn(&[3, 7], |i| ((i * 29 % 13) as f64 - 6.0) * 0.31);
    let eig: Vec<f64> = (0..7).map(|i| 0.4 + 0.7 * i as f64).collect();
    let center = Tensor::from_fn(&[1, 7], |i| (i as f64) * 0.05);
    let energy = QuadraticEnergy::axis_aligned(&eig, center);
    let cfg = probe_cfg(24);
    let a = refine(&f, &energy, &cfg, GradFlow::None, None);
    let b = refine(&f, &energy, &cfg, GradFlow::None, None);
    assert_eq!(a.h_star.data(), b.h_star.data());
    for (ta, tb) in a.traces.iter().zip(&b.traces) {
        assert_eq!(ta.iterations_used, tb.iterations_used);
        for (ra, rb) in ta.iters.iter().zip(&tb.iters) {
            assert_eq!(ra.phi.to_bits(), rb.phi.to_bits());
            assert_eq!(ra.energy.to_bits(), rb.energy.to_bits());
            assert_eq!(ra.step_norm.to_bits(), rb.step_norm.to_bits());
            assert_eq!(ra.grad_energy_norm.to_bits(), rb.grad_energy_norm.to_bits());
            assert_eq!(ra.grad_prox_norm.to_bits(), rb.grad_prox_norm.to_bits());
        }
    }
}

#[test]
fn closed_form_oracle_twenty_random_draws() {
    // Scalar instances: h* = (λc + f/γ)/(λ + 1/γ).
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for draw in 0..20 {
        let lam = 0.1 + 3.9 * next();
        let gamma = 0.5 + 1.5 * next();
        let c = 4.0 * next() - 2.0;
        let fv = 4.0 * next() - 2.0;
        let want = (lam * c + fv / gamma) / (lam + 1.0 / gamma);

        let f = Tensor::<f64>::full(&[1, 1], fv);
        let energy = QuadraticEnergy::axis_aligned(&[lam], Tensor::full(&[1, 1], c));
        // Safe step for this curvature; plenty of iterations to saturate.
        let cfg = SolverConfig {
            k_max: 600,
            alpha: 0.9 / (lam + 1.0 / gamma),
            gamma,
            ..SolverConfig::default()
        };
        let res = refine(&f, &energy, &cfg, GradFlow::None, None);
        let got = res.h_star.data()[0];
        assert!(
            (got - want).abs() <= 1e-5,
            "draw {draw}: refined {got} vs closed form {want} (λ={lam}, γ={gamma})"
        );
        let cf = energy.closed_form_minimizer(&f, gamma).data()[0];
        assert!((cf - want).abs() <= 1e-12);
    }
}

#[test]
fn trace_phi_recomputable_from_snapshots() {
    let f = Tensor::<f64>::from_fn(&[2, 5], |i| (i as f64 - 4.0) * 0.3);
    let eig = [0.5, 1.0, 1.5, 2.0, 2.5];
    let center = Tensor::from_fn(&[1, 5], |i| 0.1 * i as f64);
    let energy = QuadraticEnergy::axis_aligned(&eig, center);
    let gamma = 1.3;
    let cfg = SolverConfig { gamma, ..probe_cfg(10) };
    let res = refine(&f, &energy, &cfg, GradFlow::None, None);
    let snaps = res.snapshots.unwrap();
    let d = 5;
    for (k, snap) in snaps.iter().enumerate().skip(1) {
        let eval = energy.energy(snap);
        for r in 0..2 {
            let dist2: f64 = (0..d)
                .map(|j| {
                    let a = snap.data()[r * d + j];
                    let b = f.data()[r * d + j];
                    (a - b) * (a - b)
                })
                .sum();
            let phi = eval.per_row[r] + dist2 / (2.0 * gamma);
            let rec = res.traces[r].iters[k - 1].phi;
            assert!((phi - rec).abs() <= 1e-9, "Φ mismatch at k={k}, row {r}");
        }
    }
}

#[test]
fn contraction_ratios_bounded_below_one_on_quadratic() {
    let f = Tensor::<f64>::from_fn(&[1, 6], |i| 1.0 + i as f64 * 0.5);
    let eig = [0.5, 0.8, 1.1, 1.4, 1.7, 2.0];
    let energy = QuadraticEnergy::axis_aligned(&eig, Tensor::zeros(&[1, 6]));
    let res = refine(&f, &energy, &probe_cfg(30), GradFlow::None, None);
    let t = &res.traces[0];
    assert_eq!(t.contraction_ratios.len(), t.iters.len() - 1);
    for &rho in &t.contraction_ratios {
        assert!(rho > 0.0 && rho < 1.0, "ratio {rho} out of (0,1)");
    }
}

// ── config validation ──

#[test]
#[should_panic(expected = "alpha")]
fn nonpositive_alpha_rejected() {
    SolverConfig { alpha: 0.0, ..SolverConfig::default() }.validate();
}

#[test]
#[should_panic(expected = "tau_energy")]
fn adaptive_without_tau_rejected() {
    SolverConfig { mode: StopMode::Adaptive, ..SolverConfig::default() }.validate();
}
