//! Every objective term against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{pose_mesh, regress_keypoints3d, BodyModel, SubjectParams};
use crate::diff::{finite_difference_report, GradientReport, Layout, Objective, ParamVector};
use crate::error::Result;
use crate::objectives::{Anchor, FrameObservation, ObjectiveContext, ObjectiveSpec, TermKind};
use crate::render::{render_silhouette, Camera};
use crate::synth::{a_pose, build_procedural_model, root_theta, DEFAULT_BETAS, MASK_TAU, MIN_VERTICES};

/// Finite-difference step and accepted relative error for a term.
pub fn term_tolerance(kind: TermKind) -> (f64, f64) {
    match kind {
        TermKind::Silhouette => (1e-4, 1e-3),
        TermKind::Keypoints2d | TermKind::Anchors => (1e-5, 1e-4),
        _ => (1e-5, 1e-5),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Random parameter points per term.
    pub points: usize,
    pub frames: usize,
    /// Square image size of the silhouette and keypoint terms.
    pub resolution: usize,
    /// Silhouette softness in pixels.
    pub tau: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seed: 0, points: 10, frames: 1, resolution: 64, tau: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCheck {
    pub term: String,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_relative_error: f64,
    /// Point, group and index of the worst entry.
    pub worst_point: usize,
    pub worst_group: String,
    pub worst_index: usize,
    pub passed: bool,
}

/// The coarsest procedural body; keeps the per-vertex difference quotients
/// affordable.
pub fn gradcheck_model() -> Result<BodyModel> {
    BodyModel::new(build_procedural_model(MIN_VERTICES, DEFAULT_BETAS)?)
}

/// Random subject around the A-pose, facing a random direction, about 3 m
/// in front of the camera.
pub fn random_subject(model: &BodyModel, frames: usize, rng: &mut ChaCha8Rng) -> SubjectParams {
    let mut s = SubjectParams::neutral(model, frames);
    for b in &mut s.beta {
        *b = rng.random_range(-1.5..1.5);
    }
    for d in &mut s.offsets {
        *d = [0; 3].map(|_| rng.random_range(-0.01..0.01));
    }
    let base = a_pose(model.num_joints());
    for f in &mut s.frames {
        for (t, b) in f.theta.iter_mut().zip(&base) {
            *t = [0, 1, 2].map(|c| b[c] + rng.random_range(-0.3..0.3));
        }
        f.theta[0] = root_theta(rng.random_range(0.0..std::f64::consts::TAU));
        for c in 0..3 {
            f.theta[0][c] += rng.random_range(-0.1..0.1);
        }
        f.trans = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(2.9..3.3)];
    }
    s
}

/// `subject` moved by a few centimeters and about 0.1 rad per joint; the
/// target the estimate is compared against.
pub fn perturbed_subject(subject: &SubjectParams, rng: &mut ChaCha8Rng) -> SubjectParams {
    let mut s = subject.clone();
    for b in &mut s.beta {
        *b += rng.random_range(-0.3..0.3);
    }
    for d in &mut s.offsets {
        for x in d.iter_mut() {
            *x += rng.random_range(-0.005..0.005);
        }
    }
    for f in &mut s.frames {
        for t in &mut f.theta {
            for x in t.iter_mut() {
                *x += rng.random_range(-0.1..0.1);
            }
        }
        for x in &mut f.trans {
            *x += rng.random_range(-0.03..0.03);
        }
    }
    s
}

fn observe(model: &BodyModel, camera: &Camera, subject: &SubjectParams) -> Result<Vec<FrameObservation>> {
    let eye = model.definition().eye_ids.first().copied().unwrap_or(0);
    (0..subject.frames.len())
        .map(|f| {
            let posed = pose_mesh(model, subject, f)?;
            let mask = render_silhouette(camera, &posed, model.faces(), MASK_TAU)?.thresholded();
            let keypoints = regress_keypoints3d(model, &posed)?
                .iter()
                .map(|k| camera.project_point(k).map(|uv| [uv[0], uv[1], 1.0]))
                .collect::<Result<_>>()?;
            let uv = camera.project_point(&posed[eye])?;
            let anchors = vec![Anchor { vertex: eye, u: uv[0], v: uv[1], confidence: 0.9 }];
            Ok(FrameObservation { mask, keypoints, anchors })
        })
        .collect()
}

/// Wraps an objective and perturbs its gradient; exercises the failure path.
struct BrokenGradient<'a>(&'a dyn Objective);

impl Objective for BrokenGradient<'_> {
    fn layout(&self) -> Layout {
        self.0.layout()
    }

    fn value(&self, params: &ParamVector) -> Result<f64> {
        self.0.value(params)
    }

    fn value_and_gradient(&self, params: &ParamVector) -> Result<GradientReport> {
        let mut r = self.0.value_and_gradient(params)?;
        for g in 0..r.gradient.groups().len() {
            for i in 0..r.gradient.groups()[g].values.len() {
                let x = r.gradient.at(g, i);
                r.gradient.set(g, i, x * 1.01 + 1e-3);
            }
        }
        Ok(r)
    }
}

/// Runs the finite-difference check for every term at `config.points`
/// random points. `fault` corrupts the gradient of one term.
pub fn run_gradcheck(model: &BodyModel, config: &GradcheckConfig, fault: Option<TermKind>) -> Result<Vec<TermCheck>> {
    let camera = Camera::new(config.resolution, config.resolution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let points: Vec<(SubjectParams, SubjectParams)> = (0..config.points)
        .map(|_| {
            let estimate = random_subject(model, config.frames, &mut rng);
            let target = perturbed_subject(&estimate, &mut rng);
            (target, estimate)
        })
        .collect();
    let observations = points.iter().map(|(target, _)| observe(model, &camera, target)).collect::<Result<Vec<_>>>()?;
    let mut contexts = Vec::with_capacity(points.len());
    for ((target, _), obs) in points.iter().zip(&observations) {
        let ctx = ObjectiveContext::new(model, config.frames)?
            .with_observations(camera, obs, (config.resolution, config.resolution))?
            .with_target(target)?
            .with_tau(config.tau)?;
        contexts.push(ctx);
    }
    TermKind::ALL
        .iter()
        .map(|&kind| {
            let (epsilon, tolerance) = term_tolerance(kind);
            let mut check = TermCheck {
                term: kind.to_string(),
                epsilon,
                tolerance,
                max_relative_error: 0.0,
                worst_point: 0,
                worst_group: String::new(),
                worst_index: 0,
                passed: true,
            };
            for (i, ((_, estimate), ctx)) in points.iter().zip(&contexts).enumerate() {
                let objective = ctx.compose_all(&ObjectiveSpec::single(kind), estimate)?;
                let params = estimate.to_params()?;
                let broken = BrokenGradient(&objective);
                let checked: &dyn Objective = if fault == Some(kind) { &broken } else { &objective };
                let r = finite_difference_report(checked, &params, epsilon)?;
                if !(r.max_relative_error <= check.max_relative_error) {
                    check.max_relative_error = r.max_relative_error;
                    check.worst_point = i;
                    check.worst_group = r.group;
                    check.worst_index = r.index;
                }
            }
            check.passed = check.max_relative_error <= tolerance;
            log::info!(
                "{}: max relative error {:.3e} (tolerance {:.0e})",
                check.term,
                check.max_relative_error,
                tolerance
            );
            Ok(check)
        })
        .collect()
}
