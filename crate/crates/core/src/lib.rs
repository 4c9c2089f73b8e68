//! Solving, checking and validating high-dimensional estimating equations
//! `Φ_n(θ) = n⁻¹ Σ φ(X_i; θ) = 0` and their penalized counterparts
//! `Φ_n(θ) ∈ ∂p_λ(θ)`.
//!
//! Everything numerical is generic over [`Scalar`] (`f32`, `f64`); the `*64`
//! aliases below fix the common double-precision case.

pub mod conditions;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod penalty;
pub mod scalar;
pub mod solver;
pub mod stack;
pub mod stats;
pub mod zoo;

pub use data::{load_csv, read_csv, Dataset, Obs};
pub use error::{Error, Result};
pub use model::{
    evaluate_i_hat, evaluate_j_hat, evaluate_phi_bar, DomainBox, EstimatingModel, FdStep, FnModel, RowFilter,
};
pub use penalty::{FusionMap, Penalty, PenaltyKind, SubdiffRectangle};
pub use scalar::Scalar;
pub use solver::{
    check_inclusion, primal_dual_witness, solve_penalized, solve_sequential, solve_unpenalized, SolveOptions,
    SolveResult, Status, WitnessResult,
};
pub use stack::{stack_multisample, stack_stepwise, Stage, StackedModel};

pub type Dataset64 = Dataset<f64>;
pub type Penalty64 = Penalty<f64>;
pub type SolveOptions64 = SolveOptions<f64>;
pub type SolveResult64 = SolveResult<f64>;
pub type WitnessResult64 = WitnessResult<f64>;
pub type StackedModel64 = StackedModel<f64>;
pub type ConditionReport64 = conditions::ConditionReport<f64>;
pub type InferenceReport64 = inference::InferenceReport<f64>;

pub type Dataset32 = Dataset<f32>;
pub type Penalty32 = Penalty<f32>;
pub type SolveResult32 = SolveResult<f32>;
