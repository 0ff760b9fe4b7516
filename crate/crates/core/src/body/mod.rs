//! Parametric body model with free-form per-vertex offsets.

mod forward;
mod model;
mod subject;

pub(crate) use forward::{
    joints_from_body, keypoints_backward, keypoints_unchecked, shape_blend_backward, shape_blend_unchecked,
    skin_backward, skin_forward,
};
pub use forward::{
    pose_blend, pose_mesh, regress_joints, regress_keypoints3d, shape_blend, shaped_tpose, unpose_vertices,
};
pub use model::{normalize_height, BodyModel, ModelDefinition, MODEL_FORMAT_VERSION, REFERENCE_SPAN_METERS};
pub use subject::{clamp_offsets, FramePose, SubjectParams, MAX_OFFSET_NORM};
