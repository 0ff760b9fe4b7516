//! Rotation math, the gradient contract shared by every objective, and a
//! central-difference checker.

mod check;
mod params;
mod rotation;

pub use check::{
    evaluate_with_gradient, finite_difference_check, finite_difference_report, relative_error, FiniteDifferenceReport,
    Objective, SumOfSquares,
};
pub use params::{pose_group, trans_group, GradientReport, Layout, ParamGroup, ParamVector, OFFSETS, SHAPE};
pub(crate) use rotation::rodrigues_unchecked;
pub use rotation::{
    project_to_rotation, rodrigues, rodrigues_backward, rodrigues_with_jacobian, rotation_log, skew, Mat3, Vec3,
};
