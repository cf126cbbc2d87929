//! Noise schedule, forward diffusion, losses and the ancestral sampler.

mod loss;
mod sampler;
mod schedule;

pub use loss::{
    active_entries, masked_diffusion_loss, temporal_consistency_loss, total_loss, LossForm, LossReport,
    TEMPORAL_WEIGHT,
};
pub use sampler::{
    initial_noise, sample, sample_from, timestep_sequence, NoisePredictor, PosteriorStep, SamplerConfig,
};
pub use schedule::{q_sample, q_sample_array, NoiseSchedule, ScheduleConfig};
