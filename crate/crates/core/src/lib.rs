//! Streaming zero-shot video restoration with chunked autoregressive
//! flow-matching priors.
//!
//! A degraded clip `y = A x + n` is pre-restored by early-stopped CG, encoded,
//! and split into latent chunks. Each chunk is diffused to a small `t0` and
//! sampled in `K` reverse steps conditioned on the finalized chunks before it.
//! Guided steps pull the clean estimate towards the measurement with a
//! proximal CG update in pixel space.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for common use.

// `!(x >= 0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bound;
pub mod cg;
pub mod codec;
pub mod data_io;
pub mod error;
pub mod noise;
pub mod operators;
pub mod prior;
pub mod resample;
pub mod sampler;
pub mod scalar;
pub mod types;

pub use analysis::{efficiency_report, psnr, ssim, write_metrics_csv, Efficiency, MetricsRow};
pub use bound::{
    bound_coefficients, coupled_run, lipschitz_empirical, lipschitz_exact, sweep_case, sweep_run,
    sweep_run_with, verify_bound, BoundCoefficients, BoundReport, CoupledInputs, LipschitzProfile,
    SweepCase, SweepConfig, Verdict,
};
pub use cg::{cg_solve, solve_prerestore, solve_proximal, CgConfig, CgResult};
pub use codec::{Codec, CodecKind, CounterSnapshot, PassBucket};
pub use error::{Error, Result};
pub use noise::{gaussian_draw, NoiseStream};
pub use operators::{Degradation, FrameWindow, LinearOperator, OperatorKind, TaskKind};
pub use prior::{
    cfm_loss, denoised_estimate, update_context, vector_field, ContextCache, GaussArPrior,
    LearnedPrior, Retention, VectorField,
};
pub use sampler::{
    init_estimate, initialize_chunk, reverse_step, run, run_avis, run_flash, run_joint_baseline,
    RunConfig, RunMode, RunOutput, RunTrace,
};
pub use scalar::Real;
pub use types::{
    make_schedule, merge_chunks, split_chunks, Chunk, LatentSeq, Measurement, Schedule, Video,
    VideoShape,
};

pub type Video32 = Video<f32>;
pub type Video64 = Video<f64>;
pub type LatentSeq32 = LatentSeq<f32>;
pub type LatentSeq64 = LatentSeq<f64>;
pub type Chunk32 = Chunk<f32>;
pub type Chunk64 = Chunk<f64>;
pub type Schedule32 = Schedule<f32>;
pub type Schedule64 = Schedule<f64>;
pub type Degradation32 = Degradation<f32>;
pub type Degradation64 = Degradation<f64>;
pub type Measurement32 = Measurement<f32>;
pub type Measurement64 = Measurement<f64>;
pub type RunConfig32 = RunConfig<f32>;
pub type RunConfig64 = RunConfig<f64>;
pub type BoundReport64 = BoundReport<f64>;
