//! Subject parameters: shared shape and offsets plus per-frame pose.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::BodyModel;
use crate::diff::{pose_group, trans_group, ParamVector, Vec3, OFFSETS, SHAPE};
use crate::error::{Error, Result};

/// Largest allowed per-vertex offset magnitude (meters).
pub const MAX_OFFSET_NORM: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    /// Axis-angle rotation per joint (radians).
    pub theta: Vec<[f64; 3]>,
    /// Global translation added after skinning (meters).
    pub trans: [f64; 3],
}

impl FramePose {
    pub fn rest(num_joints: usize) -> Self {
        Self { theta: vec![[0.0; 3]; num_joints], trans: [0.0; 3] }
    }

    pub fn joint(&self, j: usize) -> Vec3 {
        Vec3::from(self.theta[j])
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::from(self.trans)
    }

    pub fn thetas(&self) -> Vec<Vec3> {
        self.theta.iter().map(|t| Vec3::from(*t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    pub beta: Vec<f64>,
    /// T-pose space offsets, one per vertex (meters).
    pub offsets: Vec<[f64; 3]>,
    pub frames: Vec<FramePose>,
}

impl SubjectParams {
    /// Zero shape, zero offsets and `frames` rest poses.
    pub fn neutral(model: &BodyModel, frames: usize) -> Self {
        Self {
            beta: vec![0.0; model.num_betas()],
            offsets: vec![[0.0; 3]; model.num_vertices()],
            frames: vec![FramePose::rest(model.num_joints()); frames],
        }
    }

    pub fn offsets_vec(&self) -> Vec<Vec3> {
        self.offsets.iter().map(|o| Vec3::from(*o)).collect()
    }

    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        let bad = |m: String| Err(Error::ContractViolation(m));
        if self.beta.len() != model.num_betas() {
            return bad(format!("beta has {} entries, model B = {}", self.beta.len(), model.num_betas()));
        }
        if self.offsets.len() != model.num_vertices() {
            return bad(format!("offsets has {} rows, model V = {}", self.offsets.len(), model.num_vertices()));
        }
        if self.frames.is_empty() {
            return bad("subject needs at least one frame".into());
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.theta.len() != model.num_joints() {
                return bad(format!("frame {i}: theta has {} joints, model J = {}", f.theta.len(), model.num_joints()));
            }
        }
        let finite = self.beta.iter().all(|x| x.is_finite())
            && self.offsets.iter().flatten().all(|x| x.is_finite())
            && self.frames.iter().all(|f| f.theta.iter().flatten().chain(&f.trans).all(|x| x.is_finite()));
        if !finite {
            return Err(Error::InvalidArgument("subject parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// Flattens into groups `shape`, `offsets`, then `pose_i`, `trans_i` per frame.
    pub fn to_params(&self) -> Result<ParamVector> {
        let mut p = ParamVector::new();
        p.push(SHAPE, self.beta.clone())?;
        p.push(OFFSETS, self.offsets.iter().flatten().copied().collect())?;
        for (i, f) in self.frames.iter().enumerate() {
            p.push(pose_group(i), f.theta.iter().flatten().copied().collect())?;
            p.push(trans_group(i), f.trans.to_vec())?;
        }
        Ok(p)
    }

    pub fn from_params(params: &ParamVector, frames: usize) -> Result<Self> {
        let triples = |flat: &[f64], what: &str| -> Result<Vec<[f64; 3]>> {
            if flat.len() % 3 != 0 {
                return Err(Error::ContractViolation(format!("group {what} length not a multiple of 3")));
            }
            Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        };
        let beta = params.require(SHAPE)?.to_vec();
        let offsets = triples(params.require(OFFSETS)?, OFFSETS)?;
        let frames = (0..frames)
            .map(|i| {
                let theta = triples(params.require(&pose_group(i))?, "pose")?;
                let t = params.require(&trans_group(i))?;
                if t.len() != 3 {
                    return Err(Error::ContractViolation(format!("trans_{i} must have 3 entries")));
                }
                Ok(FramePose { theta, trans: [t[0], t[1], t[2]] })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { beta, offsets, frames })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Projects every offset back into the ball of radius [`MAX_OFFSET_NORM`].
pub fn clamp_offsets(offsets: &mut [f64]) {
    for o in offsets.chunks_exact_mut(3) {
        let n = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt();
        if n > MAX_OFFSET_NORM {
            let s = MAX_OFFSET_NORM / n;
            o.iter_mut().for_each(|x| *x *= s);
        }
    }
}
