//! Solver configuration and stopping vocabulary.

/// How the refinement loop decides it is done.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    /// Run exactly `k_max` iterations.
    FixedK,
    /// Stop when the relative step ‖Δh‖/max(1,‖h‖) falls below `eps_stop`.
    EarlyStop,
    /// Stop at the first iterate whose energy falls below `tau_energy`
    /// (checked at the initial state too), else at `k_max`.
    Adaptive,
}

/// Why a row stopped iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCause {
    /// Hit the iteration cap.
    Cap,
    /// Relative step norm under `eps_stop`.
    StepSmall,
    /// Energy under `tau_energy`.
    EnergyBelowTau,
    /// Objective Φ rose five consecutive iterations.
    Diverged,
    /// A non-finite value appeared; the row keeps its last finite iterate.
    NonFinite,
}

impl StopCause {
    pub fn as_str(self) -> &'static str {
        match self {
            StopCause::Cap => "cap",
            StopCause::StepSmall => "step_small",
            StopCause::EnergyBelowTau => "energy_below_tau",
            StopCause::Diverged => "diverged",
            StopCause::NonFinite => "non_finite",
        }
    }
}

/// How gradients flow through the unrolled refinement during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradFlow {
    /// Inference: no graph is built.
    None,
    /// Inner energy gradients are treated as constants; the update chain
    /// itself stays differentiable (default training mode).
    DetachedInner,
    /// Inner gradients are recorded with `create_graph`, so backprop
    /// differentiates through them (requires double-backward).
    ExactUnroll,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Iteration cap K.
    pub k_max: usize,
    /// Step size α.
    pub alpha: f64,
    /// Proximal damping γ.
    pub gamma: f64,
    /// Early-stop threshold on the relative step norm.
    pub eps_stop: f64,
    /// Adaptive-stop energy threshold.
    pub tau_energy: Option<f64>,
    pub mode: StopMode,
    /// Record per-iteration Φ/energy/norm rows in the trace.
    pub record_trace: bool,
    /// Keep h snapshots (k = 0..=iterations) for post-hoc diagnostics.
    pub snapshots: bool,
    /// Evaluate the energy once more after the final update (for
    /// `energy_final`, traces and adaptive stopping; callers that evaluate
    /// the refined state themselves can skip it).
    pub final_energy: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k_max: 8,
            alpha: 0.1,
            gamma: 1.0,
            eps_stop: 1e-3,
            tau_energy: None,
            mode: StopMode::FixedK,
            record_trace: false,
            snapshots: false,
            final_energy: true,
        }
    }
}

impl SolverConfig {
    /// Check the structural invariants; panics on nonsense values.
    pub fn validate(&self) {
        assert!(self.alpha > 0.0, "solver: alpha must be positive, got {}", self.alpha);
        assert!(self.gamma > 0.0, "solver: gamma must be positive, got {}", self.gamma);
        assert!(self.eps_stop > 0.0, "solver: eps_stop must be positive, got {}", self.eps_stop);
        if self.mode == StopMode::Adaptive {
            assert!(self.tau_energy.is_some(), "solver: adaptive mode needs tau_energy");
        }
    }
}
