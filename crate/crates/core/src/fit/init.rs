//! Heuristic pose initialization from 2D keypoints.

use super::config::FitConfig;
use crate::body::{pose_mesh, regress_keypoints3d, BodyModel, FramePose, SubjectParams};
use crate::diff::Vec3;
use crate::error::{Error, Result};
use crate::objectives::FrameObservation;
use crate::render::{Camera, MIN_DEPTH};
use crate::synth::root_theta;

const START_DEPTH: f64 = 3.0;
const SOLVE_ROUNDS: usize = 4;

/// Initial pose for every frame: the configured A-pose, the yaw among
/// `yaw_candidates` evenly spaced values with the lowest keypoint loss
/// (lowest index on ties), and a translation matching the projected
/// keypoint bounding-box height and centroid.
pub fn init_poses(
    model: &BodyModel,
    camera: &Camera,
    observations: &[FrameObservation],
    config: &FitConfig,
) -> Result<Vec<FramePose>> {
    if observations.is_empty() {
        return Err(Error::Configuration("initialization needs at least one observation".into()));
    }
    let mut theta = vec![[0.0; 3]; model.num_joints()];
    for r in &config.init_pose {
        if r.joint == 0 || r.joint >= model.num_joints() {
            return Err(Error::Configuration(format!("init pose joint {} is not a non-root joint", r.joint)));
        }
        theta[r.joint] = r.theta;
    }
    // Root-relative keypoints of the neutral body for each yaw candidate.
    let n = config.yaw_candidates;
    let mut subject = SubjectParams::neutral(model, 1);
    let candidates: Vec<(FramePose, Vec<Vec3>)> = (0..n)
        .map(|k| {
            let yaw = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let mut pose = FramePose { theta: theta.clone(), trans: [0.0; 3] };
            pose.theta[0] = root_theta(yaw);
            subject.frames[0] = pose.clone();
            let kp = regress_keypoints3d(model, &pose_mesh(model, &subject, 0)?)?;
            Ok((pose, kp))
        })
        .collect::<Result<_>>()?;

    observations
        .iter()
        .enumerate()
        .map(|(frame, obs)| {
            let used: Vec<usize> =
                (0..obs.keypoints.len()).filter(|&k| obs.keypoints[k][2] > config.init_confidence).collect();
            if used.len() < 4 {
                return Err(Error::Initialization {
                    frame,
                    reason: format!("{} keypoints above confidence {} (need 4)", used.len(), config.init_confidence),
                });
            }
            let observed: Vec<[f64; 2]> = used.iter().map(|&k| [obs.keypoints[k][0], obs.keypoints[k][1]]).collect();
            let (obs_h, obs_c) = bbox(&observed);
            if !(obs_h > 0.0) {
                return Err(Error::Initialization { frame, reason: "observed keypoints have zero height".into() });
            }
            let mut best: Option<(f64, FramePose)> = None;
            for (pose, kp) in &candidates {
                let pts: Vec<Vec3> = used.iter().map(|&k| kp[k]).collect();
                let Some(t) = solve_translation(camera, &pts, obs_h, obs_c) else { continue };
                let loss = keypoint_loss(camera, kp, t, obs);
                if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                    best = Some((loss, FramePose { theta: pose.theta.clone(), trans: t.into() }));
                }
            }
            best.map(|(_, p)| p)
                .ok_or_else(|| Error::Initialization { frame, reason: "no yaw candidate could be placed".into() })
        })
        .collect()
}

fn bbox(points: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    let mut c = [0.0; 2];
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
            c[a] += p[a] / points.len() as f64;
        }
    }
    (hi[1] - lo[1], c)
}

/// Depth from similar triangles on the bbox height, then lateral shift to
/// align centroids; repeated a few times since the two interact.
fn solve_translation(camera: &Camera, pts: &[Vec3], obs_h: f64, obs_c: [f64; 2]) -> Option<Vec3> {
    let zc = pts.iter().map(|p| p.z).sum::<f64>() / pts.len() as f64;
    let mut t = Vec3::new(0.0, 0.0, START_DEPTH - zc);
    for _ in 0..SOLVE_ROUNDS {
        let proj = project_all(camera, pts, t)?;
        let (h, _) = bbox(&proj);
        if !(h > 0.0) {
            return None;
        }
        t.z = (t.z + zc) * h / obs_h - zc;
        let proj = project_all(camera, pts, t)?;
        let (_, c) = bbox(&proj);
        let depth = t.z + zc;
        t.x += (obs_c[0] - c[0]) * depth / camera.focal;
        t.y += (obs_c[1] - c[1]) * depth / camera.focal;
    }
    t.iter().all(|x| x.is_finite()).then_some(t)
}

fn project_all(camera: &Camera, pts: &[Vec3], t: Vec3) -> Option<Vec<[f64; 2]>> {
    pts.iter()
        .map(|p| {
            let q = p + t;
            (q.z > MIN_DEPTH).then(|| camera.project_point(&q).ok()).flatten()
        })
        .collect()
}

/// Confidence-weighted keypoint loss with the observation's normalization.
fn keypoint_loss(camera: &Camera, kp: &[Vec3], t: Vec3, obs: &FrameObservation) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, o) in kp.iter().zip(&obs.keypoints) {
        let Ok(uv) = camera.project_point(&(p + t)) else { return f64::INFINITY };
        num += o[2] * ((uv[0] - o[0]).powi(2) + (uv[1] - o[1]).powi(2));
        den += o[2];
    }
    num / (den * camera.height as f64 * camera.height as f64)
}
