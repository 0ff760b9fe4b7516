//! Subjects, turn-around sequences and rendered observations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_6;

use super::procedural::template_normals;
use super::procedural::BARE_JOINTS;
use crate::body::{pose_mesh, regress_keypoints3d, shape_blend, BodyModel, FramePose, SubjectParams};
use crate::diff::{rotation_log, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::objectives::{Anchor, FrameObservation};
use crate::render::{render_silhouette, Camera, SilhouetteImage};

const FRAC_PI_12: f64 = std::f64::consts::PI / 12.0;

/// Canonical A-pose: shoulders lowered 30° from the T-pose (60° abduction)
/// and elbows bent 15° forward, as `(joint, axis-angle)`.
pub const A_POSE: [(usize, [f64; 3]); 4] = [
    (16, [0.0, 0.0, -FRAC_PI_6]),
    (17, [0.0, 0.0, FRAC_PI_6]),
    (18, [0.0, -FRAC_PI_12, 0.0]),
    (19, [0.0, FRAC_PI_12, 0.0]),
];

/// Softness used for synthetic masks before thresholding.
pub const MASK_TAU: f64 = 0.5;

/// Full rest pose with the A-pose joints filled in.
pub fn a_pose(num_joints: usize) -> Vec<[f64; 3]> {
    let mut theta = vec![[0.0; 3]; num_joints];
    for (j, t) in A_POSE {
        if j < num_joints {
            theta[j] = t;
        }
    }
    theta
}

/// Root rotation `R_x(π)·R_y(yaw)`: camera y points down, so the flip
/// brings the y-up template upright with yaw 0 facing the camera.
pub fn root_rotation(yaw: f64) -> Mat3 {
    let flip = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let (s, c) = yaw.sin_cos();
    flip * Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn root_theta(yaw: f64) -> [f64; 3] {
    rotation_log(&root_rotation(yaw)).into()
}

/// Inverse of [`root_rotation`] up to the tilt it cannot represent; the
/// result lies in `(-π, π]`.
pub fn root_yaw(theta: [f64; 3]) -> f64 {
    let r = crate::diff::rodrigues(&Vec3::from(theta)).unwrap_or_else(|_| Mat3::identity());
    let flip = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let ry = flip * r;
    ry[(0, 2)].atan2(ry[(0, 0)])
}

/// Absolute angular difference wrapped to `[0, π]`.
pub fn yaw_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Synthetic capture setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub frames: usize,
    /// Total yaw range swept by the turn-around (degrees).
    pub yaw_coverage_deg: f64,
    pub camera_distance: f64,
    pub resolution: usize,
    /// Gaussian keypoint noise (pixels).
    pub keypoint_noise: f64,
    /// Mask corruption radius in pixels: positive erodes, negative dilates.
    pub mask_corruption: i64,
    /// Random yaw and limb perturbations.
    pub jitter: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 8,
            yaw_coverage_deg: 360.0,
            camera_distance: 3.0,
            resolution: 1080,
            keypoint_noise: 0.0,
            mask_corruption: 0,
            jitter: true,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.frames == 0 {
            return bad("frame count must be at least 1".into());
        }
        if self.resolution < 64 {
            return bad(format!("resolution must be at least 64, got {}", self.resolution));
        }
        if !(self.camera_distance > 0.0 && self.camera_distance.is_finite()) {
            return bad(format!("camera distance must be positive, got {}", self.camera_distance));
        }
        if !(self.keypoint_noise >= 0.0 && self.keypoint_noise.is_finite()) {
            return bad(format!("keypoint noise must be non-negative, got {}", self.keypoint_noise));
        }
        if !self.yaw_coverage_deg.is_finite() {
            return bad("yaw coverage must be finite".into());
        }
        Ok(())
    }

    /// Square capture camera at the scenario resolution.
    pub fn camera(&self) -> Result<Camera> {
        Camera::new(self.resolution, self.resolution)
    }
}

/// Random shape plus a smooth clothing-like offset field.
pub fn sample_subject(model: &BodyModel, seed: u64) -> (Vec<f64>, Vec<[f64; 3]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..model.num_betas()).map(|_| rng.random_range(-2.0..=2.0)).collect();
    let amplitude = rng.random_range(0.01..=0.03);
    let noise_seed: u64 = rng.random();

    let def = model.definition();
    let normals = template_normals(def);
    let bare: Vec<bool> = (0..model.num_vertices()).map(|v| BARE_JOINTS.contains(&model.dominant_joint(v))).collect();
    let mut field: Vec<Vec3> = def
        .template
        .iter()
        .zip(&normals)
        .zip(&bare)
        .map(|((p, n), &b)| if b { Vec3::zeros() } else { n * (0.35 + 0.65 * value_noise(*p, noise_seed)) })
        .collect();
    let neighbors = model.neighbors();
    for _ in 0..5 {
        field = (0..field.len())
            .map(|v| {
                let nb = &neighbors[v];
                if nb.is_empty() {
                    return field[v];
                }
                let mean = nb.iter().fold(Vec3::zeros(), |acc, &u| acc + field[u]) / nb.len() as f64;
                field[v] + (mean - field[v]) * 0.5
            })
            .collect();
    }
    symmetrize(model, &mut field);
    for (f, &b) in field.iter_mut().zip(&bare) {
        if b {
            *f = Vec3::zeros();
        }
    }
    let peak = field.iter().map(|f| f.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    let offsets = field.iter().map(|f| (f * scale).into()).collect();
    (beta, offsets)
}

/// Mirrors the field across x = 0 by averaging each symmetry pair; vertices
/// outside every pair lose their x component.
fn symmetrize(model: &BodyModel, field: &mut [Vec3]) {
    let mirror = |v: Vec3| Vec3::new(-v.x, v.y, v.z);
    let mut paired = vec![false; field.len()];
    for &[l, r] in model.symmetry_pairs() {
        let avg = (field[l] + mirror(field[r])) * 0.5;
        field[l] = avg;
        field[r] = mirror(avg);
        paired[l] = true;
        paired[r] = true;
    }
    for (f, p) in field.iter_mut().zip(paired) {
        if !p {
            f.x = 0.0;
        }
    }
}

/// Three octaves of trilinear value noise in `[-1, 1]`.
fn value_noise(p: [f64; 3], seed: u64) -> f64 {
    let mut total = 0.0;
    let mut norm = 0.0;
    for octave in 0..3u64 {
        let freq = 2.0 * (1u64 << octave) as f64;
        let amp = 0.5f64.powi(octave as i32);
        let q = p.map(|x| x * freq);
        let base = q.map(|x| x.floor());
        let frac: Vec<f64> = (0..3)
            .map(|c| {
                let t = q[c] - base[c];
                t * t * (3.0 - 2.0 * t)
            })
            .collect();
        let mut acc = 0.0;
        for corner in 0..8u64 {
            let mut w = 1.0;
            let mut cell = [0i64; 3];
            for c in 0..3 {
                let bit = (corner >> c) & 1 == 1;
                cell[c] = base[c] as i64 + bit as i64;
                w *= if bit { frac[c] } else { 1.0 - frac[c] };
            }
            acc += w * lattice(cell, seed ^ octave.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        total += amp * acc;
        norm += amp;
    }
    total / norm
}

fn lattice(cell: [i64; 3], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ (cell[0] as u64).wrapping_mul(0x8CB9_2BA7_2F3D_8DD7)
            ^ (cell[1] as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)
            ^ (cell[2] as u64).wrapping_mul(0xA076_1D64_78BD_642F),
    );
    rng.random_range(-1.0..=1.0)
}

/// Turn-around poses: A-pose with yaw stepping through the coverage, plus
/// optional jitter, translated so the body's bounding box is centered in
/// front of the camera at `camera_distance`.
pub fn make_turnaround(model: &BodyModel, beta: &[f64], scenario: &ScenarioSpec) -> Result<Vec<FramePose>> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x7475_726e);
    let body = shape_blend(model, beta)?;
    let joints = crate::body::regress_joints(model, beta)?;
    let (lo, hi) =
        body.iter().fold((Vec3::repeat(f64::MAX), Vec3::repeat(f64::MIN)), |(lo, hi), v| (lo.inf(v), hi.sup(v)));
    let center = Vec3::new(0.0, 0.5 * (lo.y + hi.y), 0.0);
    let pelvis = joints[0];
    let jitter_deg = |rng: &mut ChaCha8Rng, limit: f64| -> f64 {
        if scenario.jitter {
            rng.random_range(-limit..=limit).to_radians()
        } else {
            0.0
        }
    };
    let mut frames = Vec::with_capacity(scenario.frames);
    for i in 0..scenario.frames {
        let yaw =
            (scenario.yaw_coverage_deg * i as f64 / scenario.frames as f64).to_radians() + jitter_deg(&mut rng, 3.0);
        let mut theta = a_pose(model.num_joints());
        for t in theta.iter_mut().skip(1) {
            for x in t.iter_mut() {
                *x += jitter_deg(&mut rng, 2.0);
            }
        }
        theta[0] = root_theta(yaw);
        let r = root_rotation(yaw);
        let trans = Vec3::new(0.0, 0.0, scenario.camera_distance) - pelvis - r * (center - pelvis);
        frames.push(FramePose { theta, trans: trans.into() });
    }
    Ok(frames)
}

/// Renders masks and keypoints for every frame of `subject`.
pub fn render_observations(
    model: &BodyModel,
    camera: &Camera,
    subject: &SubjectParams,
    scenario: &ScenarioSpec,
) -> Result<(Vec<FrameObservation>, SubjectParams)> {
    scenario.validate()?;
    subject.validate(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x6f62_7376);
    let noise = Normal::new(0.0, scenario.keypoint_noise).map_err(|e| Error::Scenario(e.to_string()))?;
    let def = model.definition();
    let mut observations = Vec::with_capacity(subject.frames.len());
    for frame in 0..subject.frames.len() {
        let posed = pose_mesh(model, subject, frame)?;
        check_frustum(camera, &posed, frame)?;
        let mut mask = render_silhouette(camera, &posed, model.faces(), MASK_TAU)?.thresholded();
        mask = morph(&mask, scenario.mask_corruption);
        let inside = |u: f64, v: f64| u >= 0.0 && v >= 0.0 && u < camera.width as f64 && v < camera.height as f64;
        let mut noisy = |p: [f64; 2]| -> [f64; 2] {
            if scenario.keypoint_noise > 0.0 {
                [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)]
            } else {
                p
            }
        };
        let keypoints = regress_keypoints3d(model, &posed)?
            .iter()
            .map(|k| {
                let p = camera.project_point(k)?;
                let q = noisy(p);
                Ok([q[0], q[1], if inside(p[0], p[1]) { 1.0 } else { 0.0 }])
            })
            .collect::<Result<Vec<_>>>()?;
        // Eye anchors stand in for face landmarks; only emitted when the face
        // points toward the camera.
        let normals = vertex_normals(&posed, model.faces());
        let mut anchors = Vec::new();
        for &v in &def.eye_ids {
            let view = posed[v].normalize();
            if normals[v].dot(&view) < -0.2 {
                let p = camera.project_point(&posed[v])?;
                if inside(p[0], p[1]) {
                    let q = noisy(p);
                    anchors.push(Anchor { vertex: v, u: q[0], v: q[1], confidence: 1.0 });
                }
            }
        }
        observations.push(FrameObservation { mask, keypoints, anchors });
    }
    Ok((observations, subject.clone()))
}

fn vertex_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut normals = vec![Vec3::zeros(); vertices.len()];
    for f in faces {
        let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
        for &i in f {
            normals[i] += n;
        }
    }
    normals.iter().map(|n| n.try_normalize(0.0).unwrap_or_else(Vec3::zeros)).collect()
}

fn check_frustum(camera: &Camera, posed: &[Vec3], frame: usize) -> Result<()> {
    for p in posed {
        let uv = camera
            .project_point(p)
            .map_err(|_| Error::Scenario(format!("frame {frame}: subject is behind the camera")))?;
        if !(uv[0] >= 0.0 && uv[1] >= 0.0 && uv[0] <= camera.width as f64 && uv[1] <= camera.height as f64) {
            return Err(Error::Scenario(format!("frame {frame}: subject leaves the image")));
        }
    }
    Ok(())
}

/// Binary erosion (`radius > 0`) or dilation (`radius < 0`) with a disk.
pub fn morph(mask: &SilhouetteImage, radius: i64) -> SilhouetteImage {
    if radius == 0 {
        return mask.clone();
    }
    let erode = radius > 0;
    let r = radius.unsigned_abs() as i64;
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let on = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize) >= 0.5;
    let mut data = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let value = if erode {
                offsets.iter().all(|(dx, dy)| on(x + dx, y + dy))
            } else {
                offsets.iter().any(|(dx, dy)| on(x + dx, y + dy))
            };
            data.push(if value { 1.0 } else { 0.0 });
        }
    }
    SilhouetteImage::new(w as usize, h as usize, data).expect("same dimensions")
}

/// Synthesizes a complete subject: sampled shape and offsets posed by the
/// scenario's turn-around.
pub fn synthesize_subject(model: &BodyModel, scenario: &ScenarioSpec) -> Result<SubjectParams> {
    let (beta, offsets) = sample_subject(model, scenario.seed);
    let frames = make_turnaround(model, &beta, scenario)?;
    Ok(SubjectParams { beta, offsets, frames })
}
