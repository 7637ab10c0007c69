//! Group-coded matrix multiplication on heterogeneous clusters.
//!
//! Workers are organized into groups with their own size and exponential
//! latency rate. The crate computes optimal per-group task allocations,
//! simulates computing, decoding and execution times for MDS, group and
//! product codes, and runs real coded matrix-vector jobs under injected
//! straggler delays.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! and `*F32` aliases below name the concrete instantiations.

// `!(x > y)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod asymptotics;
pub mod codec;
pub mod error;
pub mod figures;
pub mod model;
pub mod montecarlo;
pub mod runtime;
pub mod scalar;
pub mod stream;

pub use allocator::{
    h_load, optimal_allocation, round_allocation, solve_allocation_continuous, ContinuousAllocation,
};
pub use asymptotics::{
    asymptotic_group_time, check_order_bounds, closed_form_l2_half_rate, xi, BoundsReport,
    HalfRateOptimum, XiValue,
};
pub use codec::{
    decode_from_subset, group_decode, group_decode_parallel, group_encode, mds_generator,
    CodedAssignment, GeneratorMatrix, Matrix, Parity,
};
pub use error::{Error, Result};
pub use model::{kth_smallest, sample_completion_times, Allocation, CompletionSample, GroupSystem};
pub use montecarlo::{
    comp_time_group, comp_time_mds, comp_time_product, dec_units, group_decodes_cheaper, rho_dec,
    run_experiment, CodeSpec, CodeVariant, ExperimentConfig, ExperimentSummary, TimingResult,
};
pub use runtime::{run_coded_job, DelayInjector, JobTrace, NoDelay, SampledDelays};
pub use scalar::Scalar;

pub type GroupSystemF64 = GroupSystem<f64>;
pub type GroupSystemF32 = GroupSystem<f32>;
pub type CompletionSampleF64 = CompletionSample<f64>;
pub type CompletionSampleF32 = CompletionSample<f32>;
pub type ContinuousAllocationF64 = ContinuousAllocation<f64>;
pub type ContinuousAllocationF32 = ContinuousAllocation<f32>;
pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type GeneratorMatrixF64 = GeneratorMatrix<f64>;
pub type GeneratorMatrixF32 = GeneratorMatrix<f32>;
pub type CodeSpecF64 = CodeSpec<f64>;
pub type CodeSpecF32 = CodeSpec<f32>;
