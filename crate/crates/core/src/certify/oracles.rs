//! Forward-model identities and the distance-index oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gradcheck::{perturbed_subject, random_subject};
use crate::body::{pose_blend, pose_mesh, regress_joints, shaped_tpose, unpose_vertices, BodyModel, SubjectParams};
use crate::diff::{rodrigues, Mat3, Vec3};
use crate::error::Result;
use crate::synth::{
    bidirectional_distance_stats, point_to_surface_distance, point_to_surface_distance_brute, unit_model,
};

/// Largest deviation of each forward-model identity for one random draw,
/// in meters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ForwardOracles {
    /// `T(β₁+β₂, D₁+D₂)` against `T(β₁, D₁) + T(β₂, D₂) − T̄`.
    pub linearity: f64,
    /// One-hot skinning against an independent per-joint rigid transform.
    pub rigid_limit: f64,
    /// Posing with `t` against posing at zero translation plus `t`.
    pub translation_equivariance: f64,
    /// Pose correctives at the zero pose.
    pub pose_blend_at_zero: f64,
    /// Unposing a posed mesh against its T-shape.
    pub round_trip: f64,
}

impl ForwardOracles {
    pub const LINEARITY_TOL: f64 = 1e-12;
    pub const RIGID_TOL: f64 = 1e-10;
    pub const ROUND_TRIP_TOL: f64 = 1e-9;

    /// Whether every identity holds within its tolerance; the translation
    /// and zero-pose identities must be exact.
    pub fn passed(&self) -> bool {
        self.linearity <= Self::LINEARITY_TOL
            && self.rigid_limit <= Self::RIGID_TOL
            && self.translation_equivariance == 0.0
            && self.pose_blend_at_zero == 0.0
            && self.round_trip <= Self::ROUND_TRIP_TOL
    }

    /// Element-wise maximum.
    pub fn max(self, o: Self) -> Self {
        Self {
            linearity: self.linearity.max(o.linearity),
            rigid_limit: self.rigid_limit.max(o.rigid_limit),
            translation_equivariance: self.translation_equivariance.max(o.translation_equivariance),
            pose_blend_at_zero: self.pose_blend_at_zero.max(o.pose_blend_at_zero),
            round_trip: self.round_trip.max(o.round_trip),
        }
    }
}

fn max_deviation(a: &[Vec3], b: &[Vec3]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Shape, offsets and poses drawn uniformly; wider than anything a fit
/// visits.
fn random_draw(model: &BodyModel, frames: usize, rng: &mut ChaCha8Rng) -> SubjectParams {
    let mut s = SubjectParams::neutral(model, frames);
    for b in &mut s.beta {
        *b = rng.random_range(-2.0..2.0);
    }
    for d in &mut s.offsets {
        *d = [0; 3].map(|_| rng.random_range(-0.03..0.03));
    }
    for f in &mut s.frames {
        for t in &mut f.theta {
            *t = [0; 3].map(|_| rng.random_range(-0.8..0.8));
        }
        f.trans = [0; 3].map(|_| rng.random_range(-2.0..2.0));
    }
    s
}

/// Per-joint rigid transform of the T-shape, composed along the kinematic
/// tree without the skinning code.
fn rigid_pose(model: &BodyModel, subject: &SubjectParams, owner: &[usize]) -> Result<Vec<Vec3>> {
    let rest = shaped_tpose(model, &subject.beta, &subject.offsets_vec())?;
    let joints = regress_joints(model, &subject.beta)?;
    let pose = &subject.frames[0];
    let mut world_r: Vec<Mat3> = Vec::with_capacity(model.num_joints());
    let mut world_p: Vec<Vec3> = Vec::with_capacity(model.num_joints());
    for j in 0..model.num_joints() {
        let local = rodrigues(&pose.joint(j))?;
        match model.parent(j) {
            None => {
                world_r.push(local);
                world_p.push(joints[j]);
            }
            Some(p) => {
                world_r.push(world_r[p] * local);
                world_p.push(world_r[p] * (joints[j] - joints[p]) + world_p[p]);
            }
        }
    }
    let t = pose.translation();
    Ok(rest.iter().zip(owner).map(|(v, &k)| world_r[k] * (v - joints[k]) + world_p[k] + t).collect())
}

/// Checks every forward-model identity for one seed. `model` serves the
/// linearity, translation and round-trip checks; small unit models with
/// one-hot weights and with pose correctives cover the rest.
pub fn forward_model_oracles(model: &BodyModel, seed: u64) -> Result<ForwardOracles> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ForwardOracles::default();

    let a = random_draw(model, 1, &mut rng);
    let b = random_draw(model, 1, &mut rng);
    let sum_beta: Vec<f64> = a.beta.iter().zip(&b.beta).map(|(x, y)| x + y).collect();
    let sum_d: Vec<Vec3> = a.offsets_vec().iter().zip(b.offsets_vec()).map(|(x, y)| x + y).collect();
    let lhs = shaped_tpose(model, &sum_beta, &sum_d)?;
    let ta = shaped_tpose(model, &a.beta, &a.offsets_vec())?;
    let tb = shaped_tpose(model, &b.beta, &b.offsets_vec())?;
    let rhs: Vec<Vec3> = ta.iter().zip(&tb).zip(model.template()).map(|((x, y), t)| x + y - t).collect();
    out.linearity = max_deviation(&lhs, &rhs);

    let moved = pose_mesh(model, &a, 0)?;
    let mut at_origin = a.clone();
    at_origin.frames[0].trans = [0.0; 3];
    let t = a.frames[0].translation();
    let shifted: Vec<Vec3> = pose_mesh(model, &at_origin, 0)?.iter().map(|v| v + t).collect();
    out.translation_equivariance = max_deviation(&moved, &shifted);

    let unposed = unpose_vertices(model, &moved, &a.beta, &a.frames[0])?;
    out.round_trip = max_deviation(&unposed, &ta);

    let correctives = BodyModel::new(unit_model(seed, true, false))?;
    let zero = pose_blend(&correctives, &vec![Vec3::zeros(); correctives.num_joints()])?;
    out.pose_blend_at_zero = zero.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let c = random_draw(&correctives, 1, &mut rng);
    let posed = pose_mesh(&correctives, &c, 0)?;
    let unposed = unpose_vertices(&correctives, &posed, &c.beta, &c.frames[0])?;
    let rest = shaped_tpose(&correctives, &c.beta, &c.offsets_vec())?;
    out.round_trip = out.round_trip.max(max_deviation(&unposed, &rest));

    let rigid = BodyModel::new(unit_model(seed, false, true))?;
    let r = random_draw(&rigid, 1, &mut rng);
    let owner: Vec<usize> = (0..rigid.num_vertices()).map(|v| rigid.dominant_joint(v)).collect();
    out.rigid_limit = max_deviation(&pose_mesh(&rigid, &r, 0)?, &rigid_pose(&rigid, &r, &owner)?);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceOracle {
    pub points: usize,
    /// Largest |index − brute force| over all points (meters).
    pub max_abs_difference: f64,
    /// Swapping the meshes gives bit-identical bidirectional statistics.
    pub symmetric: bool,
}

/// Compares the distance index with the all-triangle oracle on `points`
/// random queries against a randomly posed body; half the queries are
/// spread over an enlarged bounding box and half lie within a few
/// centimeters of the surface.
pub fn distance_oracle(model: &BodyModel, seed: u64, points: usize) -> Result<DistanceOracle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subject = random_subject(model, 1, &mut rng);
    let mesh = pose_mesh(model, &subject, 0)?;
    let (mut lo, mut hi) = (mesh[0], mesh[0]);
    for v in &mesh {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let pad = (hi - lo) * 0.2;
    let (lo, hi) = (lo - pad, hi + pad);
    let queries: Vec<Vec3> = (0..points)
        .map(|i| {
            if i % 2 == 0 {
                Vec3::from_fn(|c, _| rng.random_range(lo[c]..hi[c]))
            } else {
                let v = mesh[rng.random_range(0..mesh.len())];
                v + Vec3::from_fn(|_, _| rng.random_range(-0.03..0.03))
            }
        })
        .collect();
    let fast = point_to_surface_distance(&queries, &mesh, model.faces())?;
    let brute = point_to_surface_distance_brute(&queries, &mesh, model.faces())?;
    let max_abs_difference = fast.iter().zip(&brute).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let other = pose_mesh(model, &perturbed_subject(&subject, &mut rng), 0)?;
    let ab = bidirectional_distance_stats(&mesh, model.faces(), &other, model.faces())?;
    let ba = bidirectional_distance_stats(&other, model.faces(), &mesh, model.faces())?;
    let symmetric = ab.mean_mm.to_bits() == ba.mean_mm.to_bits()
        && ab.std_mm.to_bits() == ba.std_mm.to_bits()
        && ab.max_mm.to_bits() == ba.max_mm.to_bits();
    Ok(DistanceOracle { points, max_abs_difference, symmetric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::build_procedural_model;

    #[test]
    fn identities_hold_on_the_coarse_model() {
        let model = BodyModel::new(build_procedural_model(200, 4).unwrap()).unwrap();
        for seed in 0..3 {
            let r = forward_model_oracles(&model, seed).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn rigid_reference_detects_a_wrong_owner() {
        let rigid = BodyModel::new(unit_model(1, false, true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_draw(&rigid, 1, &mut rng);
        let wrong = vec![0; rigid.num_vertices()];
        let d = max_deviation(&pose_mesh(&rigid, &r, 0).unwrap(), &rigid_pose(&rigid, &r, &wrong).unwrap());
        assert!(d > 1e-3);
    }

    #[test]
    fn distance_index_matches_brute_force() {
        let model = BodyModel::new(build_procedural_model(200, 4).unwrap()).unwrap();
        let r = distance_oracle(&model, 2, 200).unwrap();
        assert!(r.max_abs_difference <= 1e-9, "{r:?}");
        assert!(r.symmetric);
    }
}
