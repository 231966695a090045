//! Synthetic score streams, the backlog recursion and baseline policies.

mod backlog;
mod baselines;
mod generate;
mod gk;
mod profile;

pub use backlog::BacklogState;
pub use baselines::{batch_topk, local_density, EwmaController};
pub use generate::{discretize, generate_interval, Mixture};
pub use gk::{GkSketch, WindowedGk};
pub use profile::{
    builtin_profile, builtin_profiles, BAStreamProfile, BetaComponent, Burst, CapacitySchedule, Keyframe, RegimeShift,
    Seasonality, StressEvent, StressKind, TRIMODAL_VALLEYS,
};
