//! Numerical core for EDM-style diffusion sampling and training.

pub mod analysis;
pub mod augment;
pub mod dataset;
pub mod denoiser;
pub mod error;
pub mod format;
pub mod par;
pub mod rng;
pub mod samplers;
pub mod schedules;
pub mod tensor;
pub mod training;

pub use dataset::{dataset_load, dataset_save, Dataset};
pub use denoiser::{Denoise, Denoiser, Preconditioner, RawNet};
pub use error::{Error, Result};
pub use par::Exec;
pub use rng::{gaussian, rng_stream, RngStream};
pub use samplers::{SamplerKind, StochasticParams, Trajectory};
pub use schedules::{Framework, Schedule, ScheduleParams, StepPlan};
pub use tensor::Tensor;
