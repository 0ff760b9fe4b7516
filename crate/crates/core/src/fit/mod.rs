//! Staged gradient-based recovery of poses, shape and offsets.

mod adam;
mod config;
mod engine;
mod init;

pub use adam::Adam;
pub use config::{AdamConfig, EarlyStop, FitConfig, GroupKind, JointRotation, StageConfig, StepSizes};
pub use engine::{
    default_render_size, fit, fit_with_poses, refine, run_stages, silhouette_ious, FitResult, StageTrace, StopReason,
};
pub use init::init_poses;
