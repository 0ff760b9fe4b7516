//! Single-term convenience wrappers around [`ObjectiveContext`].

use crate::body::{BodyModel, SubjectParams};
use crate::diff::Objective;
use crate::error::Result;
use crate::objectives::composed::ObjectiveContext;
use crate::objectives::observation::FrameObservation;
use crate::objectives::spec::{ObjectiveSpec, TermKind};
use crate::render::Camera;

fn supervised(
    model: &BodyModel,
    est: &SubjectParams,
    target: &SubjectParams,
    term: TermKind,
    frame: Option<usize>,
) -> Result<f64> {
    est.validate(model)?;
    let ctx = ObjectiveContext::new(model, est.frames.len())?.with_target(target)?;
    let spec = ObjectiveSpec::single(term).with_frames(frame.into_iter().collect());
    let obj = ctx.compose_all(&spec, est)?;
    obj.value(&est.to_params()?)
}

#[allow(clippy::too_many_arguments)]
fn observed(
    model: &BodyModel,
    camera: &Camera,
    est: &SubjectParams,
    observations: &[FrameObservation],
    render_size: (usize, usize),
    tau: f64,
    term: TermKind,
    frame: usize,
) -> Result<f64> {
    est.validate(model)?;
    let ctx = ObjectiveContext::new(model, est.frames.len())?
        .with_observations(*camera, observations, render_size)?
        .with_tau(tau)?;
    let obj = ctx.compose_all(&ObjectiveSpec::single(term).with_frames(vec![frame]), est)?;
    obj.value(&est.to_params()?)
}

/// Mean squared vertex distance between the shaped T-poses.
pub fn loss_tpose(model: &BodyModel, est: &SubjectParams, target: &SubjectParams) -> Result<f64> {
    supervised(model, est, target, TermKind::Tpose, None)
}

/// Mean squared vertex distance between the posed meshes of one frame.
pub fn loss_posed(model: &BodyModel, est: &SubjectParams, target: &SubjectParams, frame: usize) -> Result<f64> {
    supervised(model, est, target, TermKind::Posed, Some(frame))
}

/// Mean squared vertex distance between the undressed bodies (offsets ignored).
pub fn loss_undressed(model: &BodyModel, est: &SubjectParams, target: &SubjectParams) -> Result<f64> {
    supervised(model, est, target, TermKind::Undressed, None)
}

/// Squared Frobenius distance of the joint rotation matrices plus squared
/// translation distance for one frame.
pub fn loss_pose_params(model: &BodyModel, est: &SubjectParams, target: &SubjectParams, frame: usize) -> Result<f64> {
    supervised(model, est, target, TermKind::PoseParams, Some(frame))
}

/// Mean squared distance of the regressed 3D keypoints for one frame.
pub fn loss_keypoints3d(model: &BodyModel, est: &SubjectParams, target: &SubjectParams, frame: usize) -> Result<f64> {
    supervised(model, est, target, TermKind::Keypoints3d, Some(frame))
}

/// Offsets Laplacian smoothness.
pub fn reg_laplacian(model: &BodyModel, est: &SubjectParams) -> Result<f64> {
    est.validate(model)?;
    let ctx = ObjectiveContext::new(model, est.frames.len())?;
    ctx.compose_all(&ObjectiveSpec::single(TermKind::Laplacian), est)?.value(&est.to_params()?)
}

/// Left/right mirror consistency of the offsets.
pub fn reg_symmetry(model: &BodyModel, est: &SubjectParams) -> Result<f64> {
    est.validate(model)?;
    let ctx = ObjectiveContext::new(model, est.frames.len())?;
    ctx.compose_all(&ObjectiveSpec::single(TermKind::Symmetry), est)?.value(&est.to_params()?)
}

/// Mean squared difference between the rendered silhouette (at `render_size`)
/// and the area-resampled observed mask.
pub fn loss_silhouette(
    model: &BodyModel,
    camera: &Camera,
    est: &SubjectParams,
    observations: &[FrameObservation],
    frame: usize,
    render_size: (usize, usize),
    tau: f64,
) -> Result<f64> {
    observed(model, camera, est, observations, render_size, tau, TermKind::Silhouette, frame)
}

/// Confidence-weighted reprojection error, normalized by total confidence and
/// image height².
pub fn loss_keypoints2d(
    model: &BodyModel,
    camera: &Camera,
    est: &SubjectParams,
    observations: &[FrameObservation],
    frame: usize,
) -> Result<f64> {
    observed(model, camera, est, observations, (camera.width, camera.height), 1.0, TermKind::Keypoints2d, frame)
}

/// Anchor-vertex reprojection error with the keypoint normalization; zero
/// when the frame has no anchors.
pub fn reg_landmarks(
    model: &BodyModel,
    camera: &Camera,
    est: &SubjectParams,
    observations: &[FrameObservation],
    frame: usize,
) -> Result<f64> {
    observed(model, camera, est, observations, (camera.width, camera.height), 1.0, TermKind::Anchors, frame)
}
