//! Constructive machinery and explicit-constant rate bounds for Prokhorov
//! distances in the CLT and functional CLT under sublinear expectations.
//!
//! The crate is organised bottom-up:
//!
//! * [`real`], [`special`], [`quadrature`]: scalar trait and numerical plumbing.
//! * [`scenario`]: sublinear expectations realised as suprema over finite
//!   families of classical laws, moment envelopes and truncated moments.
//! * [`kernels`]: the compact smoothing density `g_r`, its Taylor error and
//!   Gaussian kernel constants.
//! * [`smoothfields`]: smoothed set-probability fields and the adaptive
//!   drift/volatility selectors built from their derivatives.
//! * [`paths`]: broken-line processes, Wiener broken lines and bridge refinement.
//! * [`dp`]: nested upper expectations by backward dynamic programming.
//! * [`prokhorov`]: exact deficiency and Lévy–Prokhorov distance between
//!   empirical measures via integer max-flow.
//! * [`bounds`]: closed-form evaluators for every rate bound and constant.
//! * [`harness`]: experiment orchestration and report emission.
//!
//! Modules that are pure numerics are generic over [`Real`] (`f32`/`f64`);
//! the type aliases below fix the scalar to `f64`.
// NaN-rejecting guards read `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dp;
pub mod harness;
pub mod kernels;
pub mod paths;
pub mod prokhorov;
pub mod quadrature;
pub mod real;
pub mod rng;
pub mod rules;
pub mod scenario;
pub mod smoothfields;
pub mod special;

pub use real::Real;

pub type BrokenLine64 = paths::BrokenLine<f64>;
pub type BrokenLine32 = paths::BrokenLine<f32>;
pub type PathSample64 = paths::PathSample<f64>;
pub type EmpiricalMeasure64 = prokhorov::EmpiricalMeasure<f64>;
pub type DeficiencyReport64 = prokhorov::DeficiencyReport<f64>;
pub type CompactKernel64 = kernels::CompactKernel<f64>;
pub type GaussianKernel64 = kernels::GaussianKernel<f64>;
pub type GaussLegendre64 = quadrature::GaussLegendre<f64>;
pub type BoundInputs64 = bounds::BoundInputs<f64>;

/// Crate-level error aggregating the per-module error types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Kernel(#[from] kernels::KernelError),
    #[error(transparent)]
    Field(#[from] smoothfields::FieldError),
    #[error(transparent)]
    Path(#[from] paths::PathError),
    #[error(transparent)]
    Dp(#[from] dp::DpError),
    #[error(transparent)]
    Prokhorov(#[from] prokhorov::ProkhorovError),
    #[error(transparent)]
    Bounds(#[from] bounds::BoundsError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
