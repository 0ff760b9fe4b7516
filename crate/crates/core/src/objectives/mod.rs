//! Loss terms and their weighted composition.

mod composed;
mod observation;
mod spec;
mod terms;

pub use composed::{ComposedObjective, ObjectiveContext};
pub use observation::{Anchor, FrameObservation, KeypointFile, KeypointFrame};
pub use spec::{ObjectiveSpec, TermKind, TermSpec};
pub use terms::{
    loss_keypoints2d, loss_keypoints3d, loss_pose_params, loss_posed, loss_silhouette, loss_tpose, loss_undressed,
    reg_landmarks, reg_laplacian, reg_symmetry,
};
