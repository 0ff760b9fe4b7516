//! Shape blending, joint regression, pose correctives and linear blend
//! skinning, with the reverse-mode pass used by every objective.

use super::model::BodyModel;
use super::subject::{FramePose, SubjectParams};
use crate::diff::{rodrigues, rodrigues_backward, rodrigues_with_jacobian, Mat3, Vec3};
use crate::error::{ensure, Error, Result};

/// `T̄ + B_s·β`: the undressed rest shape.
pub fn shape_blend(model: &BodyModel, beta: &[f64]) -> Result<Vec<Vec3>> {
    ensure(beta.len() == model.num_betas(), || {
        format!("beta has {} entries, model B = {}", beta.len(), model.num_betas())
    })?;
    Ok(shape_blend_unchecked(model, beta))
}

pub(crate) fn shape_blend_unchecked(model: &BodyModel, beta: &[f64]) -> Vec<Vec3> {
    (0..model.num_vertices())
        .map(|v| {
            let mut p = model.template[v];
            for axis in 0..3 {
                p[axis] += model.shape_dir(v, axis).iter().zip(beta).map(|(d, b)| d * b).sum::<f64>();
            }
            p
        })
        .collect()
}

/// `Σ_v` of the shape basis transposed against a per-vertex gradient.
pub(crate) fn shape_blend_backward(model: &BodyModel, grad_body: &[Vec3], grad_beta: &mut [f64]) {
    for (v, g) in grad_body.iter().enumerate() {
        for axis in 0..3 {
            let ga = g[axis];
            if ga == 0.0 {
                continue;
            }
            for (gb, d) in grad_beta.iter_mut().zip(model.shape_dir(v, axis)) {
                *gb += d * ga;
            }
        }
    }
}

/// `T̄ + B_s·β + D`, without any pose-dependent correction.
pub fn shaped_tpose(model: &BodyModel, beta: &[f64], offsets: &[Vec3]) -> Result<Vec<Vec3>> {
    ensure(offsets.len() == model.num_vertices(), || {
        format!("offsets has {} rows, model V = {}", offsets.len(), model.num_vertices())
    })?;
    let mut body = shape_blend(model, beta)?;
    for (b, d) in body.iter_mut().zip(offsets) {
        *b += d;
    }
    Ok(body)
}

/// Joint locations regressed from the undressed shape; offsets never move joints.
pub fn regress_joints(model: &BodyModel, beta: &[f64]) -> Result<Vec<Vec3>> {
    Ok(joints_from_body(model, &shape_blend(model, beta)?))
}

pub(crate) fn joints_from_body(model: &BodyModel, body: &[Vec3]) -> Vec<Vec3> {
    model.joint_rows.iter().map(|row| row.iter().fold(Vec3::zeros(), |acc, &(v, w)| acc + body[v] * w)).collect()
}

fn check_theta(model: &BodyModel, theta: &[Vec3]) -> Result<()> {
    ensure(theta.len() == model.num_joints(), || {
        format!("theta has {} joints, model J = {}", theta.len(), model.num_joints())
    })?;
    if theta.iter().any(|t| !t.iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidArgument("theta contains non-finite values".into()));
    }
    Ok(())
}

/// Pose-corrective displacement `B_p(θ)` from the rotation deviations `R(θ_j) − I`, j ≥ 1.
pub fn pose_blend(model: &BodyModel, theta: &[Vec3]) -> Result<Vec<Vec3>> {
    check_theta(model, theta)?;
    let rots = theta.iter().map(rodrigues).collect::<Result<Vec<_>>>()?;
    Ok(pose_blend_from_rotations(model, &rots))
}

fn pose_feature(rots: &[Mat3]) -> Vec<f64> {
    let mut f = Vec::with_capacity(9 * rots.len().saturating_sub(1));
    for r in rots.iter().skip(1) {
        for row in 0..3 {
            for col in 0..3 {
                let id = if row == col { 1.0 } else { 0.0 };
                f.push(r[(row, col)] - id);
            }
        }
    }
    f
}

fn pose_blend_from_rotations(model: &BodyModel, rots: &[Mat3]) -> Vec<Vec3> {
    let n = model.num_vertices();
    if !model.has_pose_dirs {
        return vec![Vec3::zeros(); n];
    }
    let feature = pose_feature(rots);
    (0..n)
        .map(|v| Vec3::from_fn(|axis, _| model.pose_dir(v, axis).iter().zip(&feature).map(|(d, f)| d * f).sum()))
        .collect()
}

/// Everything the reverse pass needs from one skinning evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Skinned {
    pub vertices: Vec<Vec3>,
    rest: Vec<Vec3>,
    rot: Vec<Mat3>,
    rot_jac: Vec<[Mat3; 3]>,
    global_r: Vec<Mat3>,
    joints: Vec<Vec3>,
    blend_r: Vec<Mat3>,
}

impl Skinned {
    pub fn rotations(&self) -> &[Mat3] {
        &self.rot
    }
}

/// Gradients of one skinned frame with respect to its inputs. The body
/// gradient already includes the path through joint regression.
#[derive(Debug, Clone)]
pub(crate) struct SkinGrad {
    /// Gradient on the rest vertices (applies to offsets directly).
    pub rest: Vec<Vec3>,
    /// Gradient on `T̄ + B_s·β` (rest path plus joint-regression path).
    pub body: Vec<Vec3>,
    pub theta: Vec<Vec3>,
    pub trans: Vec3,
}

/// Poses `body + offsets` (plus pose correctives) with the kinematic tree.
pub(crate) fn skin_forward(
    model: &BodyModel,
    body: &[Vec3],
    joints: &[Vec3],
    offsets: &[Vec3],
    theta: &[Vec3],
    trans: Vec3,
) -> Skinned {
    let nj = model.num_joints();
    let mut rot = Vec::with_capacity(nj);
    let mut rot_jac = Vec::with_capacity(nj);
    for t in theta {
        let (r, j) = rodrigues_with_jacobian(t);
        rot.push(r);
        rot_jac.push(j);
    }
    let blend = pose_blend_from_rotations(model, &rot);
    let rest: Vec<Vec3> = body.iter().zip(offsets).zip(&blend).map(|((b, d), p)| b + d + p).collect();

    let mut global_r = vec![Mat3::identity(); nj];
    let mut global_t = vec![Vec3::zeros(); nj];
    for &j in &model.order {
        match model.parents[j] {
            None => {
                global_r[j] = rot[j];
                global_t[j] = joints[j];
            }
            Some(p) => {
                global_r[j] = global_r[p] * rot[j];
                global_t[j] = global_r[p] * (joints[j] - joints[p]) + global_t[p];
            }
        }
    }
    // Skinning transforms A_j = [G_R | G_t − G_R·J_j].
    let skin_t: Vec<Vec3> = (0..nj).map(|j| global_t[j] - global_r[j] * joints[j]).collect();

    let mut blend_r = Vec::with_capacity(rest.len());
    let mut vertices = Vec::with_capacity(rest.len());
    for (v, x) in rest.iter().enumerate() {
        let mut r = Mat3::zeros();
        let mut t = Vec3::zeros();
        for &(j, w) in &model.skin[v] {
            r += global_r[j] * w;
            t += skin_t[j] * w;
        }
        vertices.push(r * x + t + trans);
        blend_r.push(r);
    }
    Skinned { vertices, rest, rot, rot_jac, global_r, joints: joints.to_vec(), blend_r }
}

/// Reverse pass of [`skin_forward`]. `grad_rot` adds direct gradients on the
/// per-joint rotation matrices (used by the rotation-parameter loss).
pub(crate) fn skin_backward(
    model: &BodyModel,
    fwd: &Skinned,
    grad_vertices: &[Vec3],
    grad_rot: Option<&[Mat3]>,
) -> SkinGrad {
    let nj = model.num_joints();
    let nv = model.num_vertices();
    let mut trans = Vec3::zeros();
    let mut grad_rest = vec![Vec3::zeros(); nv];
    let mut ga_r = vec![Mat3::zeros(); nj];
    let mut ga_t = vec![Vec3::zeros(); nj];
    for v in 0..nv {
        let g = grad_vertices[v];
        if g == Vec3::zeros() {
            continue;
        }
        trans += g;
        grad_rest[v] = fwd.blend_r[v].transpose() * g;
        let gr = g * fwd.rest[v].transpose();
        for &(j, w) in &model.skin[v] {
            ga_r[j] += gr * w;
            ga_t[j] += g * w;
        }
    }

    let mut g_global_r = vec![Mat3::zeros(); nj];
    let mut g_global_t = vec![Vec3::zeros(); nj];
    let mut g_joints = vec![Vec3::zeros(); nj];
    for j in 0..nj {
        g_global_r[j] = ga_r[j] - ga_t[j] * fwd.joints[j].transpose();
        g_global_t[j] = ga_t[j];
        g_joints[j] -= fwd.global_r[j].transpose() * ga_t[j];
    }
    let mut g_rot: Vec<Mat3> = match grad_rot {
        Some(extra) => extra.to_vec(),
        None => vec![Mat3::zeros(); nj],
    };
    for &j in model.order.iter().rev() {
        match model.parents[j] {
            None => {
                g_rot[j] += g_global_r[j];
                g_joints[j] += g_global_t[j];
            }
            Some(p) => {
                let gp_r = fwd.global_r[p];
                g_rot[j] += gp_r.transpose() * g_global_r[j];
                let gt = g_global_t[j];
                let carried = g_global_r[j] * fwd.rot[j].transpose() + gt * (fwd.joints[j] - fwd.joints[p]).transpose();
                g_global_r[p] += carried;
                g_global_t[p] += gt;
                let back = gp_r.transpose() * gt;
                g_joints[j] += back;
                g_joints[p] -= back;
            }
        }
    }

    if model.has_pose_dirs {
        let nb = model.definition().num_pose_basis();
        let mut g_feature = vec![0.0; nb];
        for (v, g) in grad_rest.iter().enumerate() {
            for axis in 0..3 {
                let ga = g[axis];
                if ga == 0.0 {
                    continue;
                }
                for (gf, d) in g_feature.iter_mut().zip(model.pose_dir(v, axis)) {
                    *gf += d * ga;
                }
            }
        }
        for j in 1..nj {
            for row in 0..3 {
                for col in 0..3 {
                    g_rot[j][(row, col)] += g_feature[(j - 1) * 9 + row * 3 + col];
                }
            }
        }
    }

    let theta = (0..nj).map(|j| rodrigues_backward(&fwd.rot_jac[j], &g_rot[j])).collect();

    let mut body = grad_rest.clone();
    for (row, gj) in model.joint_rows.iter().zip(&g_joints) {
        for &(v, w) in row {
            body[v] += gj * w;
        }
    }
    SkinGrad { rest: grad_rest, body, theta, trans }
}

/// Posed vertices of one frame: `W(T̄ + B_s·β + B_p(θ) + D, J(β), θ, 𝒲) + t`.
pub fn pose_mesh(model: &BodyModel, subject: &SubjectParams, frame: usize) -> Result<Vec<Vec3>> {
    ensure(frame < subject.frames.len(), || format!("frame {frame} out of range ({} frames)", subject.frames.len()))?;
    let pose = &subject.frames[frame];
    let offsets = subject.offsets_vec();
    ensure(offsets.len() == model.num_vertices(), || {
        format!("offsets has {} rows, model V = {}", offsets.len(), model.num_vertices())
    })?;
    let thetas = pose.thetas();
    check_theta(model, &thetas)?;
    let body = shape_blend(model, &subject.beta)?;
    let joints = joints_from_body(model, &body);
    Ok(skin_forward(model, &body, &joints, &offsets, &thetas, pose.translation()).vertices)
}

/// `𝒥_K · vertices`.
pub fn regress_keypoints3d(model: &BodyModel, posed: &[Vec3]) -> Result<Vec<Vec3>> {
    ensure(posed.len() == model.num_vertices(), || {
        format!("expected {} vertices, got {}", model.num_vertices(), posed.len())
    })?;
    Ok(keypoints_unchecked(model, posed))
}

pub(crate) fn keypoints_unchecked(model: &BodyModel, posed: &[Vec3]) -> Vec<Vec3> {
    model.keypoint_rows.iter().map(|row| row.iter().fold(Vec3::zeros(), |acc, &(v, w)| acc + posed[v] * w)).collect()
}

pub(crate) fn keypoints_backward(model: &BodyModel, grad_keypoints: &[Vec3], grad_vertices: &mut [Vec3]) {
    for (row, g) in model.keypoint_rows.iter().zip(grad_keypoints) {
        for &(v, w) in row {
            grad_vertices[v] += g * w;
        }
    }
}

/// Maps posed vertices back to T-pose space by inverting each vertex's
/// blended skinning transform and removing the pose correctives.
pub fn unpose_vertices(model: &BodyModel, posed: &[Vec3], beta: &[f64], pose: &FramePose) -> Result<Vec<Vec3>> {
    ensure(posed.len() == model.num_vertices(), || {
        format!("expected {} vertices, got {}", model.num_vertices(), posed.len())
    })?;
    let thetas = pose.thetas();
    check_theta(model, &thetas)?;
    let body = shape_blend(model, beta)?;
    let joints = joints_from_body(model, &body);
    let zeros = vec![Vec3::zeros(); model.num_vertices()];
    // Skinning the zero shape isolates the per-vertex affine maps x ↦ R_v·x + t_v + trans.
    let origin = skin_forward(model, &zeros, &joints, &zeros, &thetas, pose.translation());
    let blend = pose_blend_from_rotations(model, &origin.rot);
    let mut out = Vec::with_capacity(posed.len());
    for (v, y) in posed.iter().enumerate() {
        let r = origin.blend_r[v];
        // With zero rest position the skinned output equals the affine offset
        // minus the pose blend term pushed through R_v.
        let offset = origin.vertices[v] - r * blend[v];
        let sv = r.singular_values();
        let cond = sv.max() / sv.min();
        if !(cond <= 1e12) {
            return Err(Error::DegenerateSkinning { vertex: v, condition: cond });
        }
        let inv = r.try_inverse().ok_or(Error::DegenerateSkinning { vertex: v, condition: f64::INFINITY })?;
        out.push(inv * (y - offset) - blend[v]);
    }
    Ok(out)
}
