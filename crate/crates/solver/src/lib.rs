//! Per-token proximal refinement of transformer states against a learned
//! energy, with convergence traces, stopping rules, and a synthetic
//! quadratic probe for validating contraction behavior.

pub mod config;
pub mod energy;
pub mod probe;
pub mod refine;

pub use config::{GradFlow, SolverConfig, StopCause, StopMode};
pub use energy::{EnergyEval, EnergyFn, QuadraticEnergy};
pub use probe::{
    fit_contraction, quadratic_convergence_probe, spectrum_eigenvalues, theoretical_rate,
    ConvergenceDiagnostics, ProbeRow, ProbeSpec, SpectrumKind,
};
pub use refine::{
    certify_equilibrium, equilibrium_residual, refine, IterRecord, RefineResult, SolverTrace,
};
