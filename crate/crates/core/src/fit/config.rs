//! Fit configuration: stage schedule, optimizer settings and budgets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diff::{pose_group, trans_group, OFFSETS, SHAPE};
use crate::error::{Error, Result};
use crate::objectives::{ObjectiveSpec, TermKind};
use crate::synth::A_POSE;

/// Parameter families a stage may optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    /// Per-frame joint rotations.
    Poses,
    /// Per-frame global translations.
    Translations,
    Shape,
    Offsets,
}

impl GroupKind {
    /// Concrete parameter group names for a problem with `frames` frames.
    pub fn group_names(self, frames: usize) -> Vec<String> {
        match self {
            GroupKind::Poses => (0..frames).map(pose_group).collect(),
            GroupKind::Translations => (0..frames).map(trans_group).collect(),
            GroupKind::Shape => vec![SHAPE.to_string()],
            GroupKind::Offsets => vec![OFFSETS.to_string()],
        }
    }

    /// Family of a concrete group name.
    pub fn of_group(name: &str) -> Option<Self> {
        if name == SHAPE {
            Some(GroupKind::Shape)
        } else if name == OFFSETS {
            Some(GroupKind::Offsets)
        } else if name.starts_with("pose_") {
            Some(GroupKind::Poses)
        } else if name.starts_with("trans_") {
            Some(GroupKind::Translations)
        } else {
            None
        }
    }
}

/// Adam step size per parameter family (model units: radians, meters, β).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSizes {
    pub poses: f64,
    pub translations: f64,
    pub shape: f64,
    pub offsets: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self { poses: 0.05, translations: 0.02, shape: 0.1, offsets: 0.001 }
    }
}

impl StepSizes {
    pub fn for_kind(&self, kind: GroupKind) -> f64 {
        match kind {
            GroupKind::Poses => self.poses,
            GroupKind::Translations => self.translations,
            GroupKind::Shape => self.shape,
            GroupKind::Offsets => self.offsets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub name: String,
    pub groups: Vec<GroupKind>,
    pub objective: ObjectiveSpec,
    pub steps: usize,
    #[serde(default)]
    pub step_sizes: StepSizes,
    /// Silhouette softness at the first and last step, in pixels of the
    /// observed masks; interpolated geometrically in between.
    #[serde(default = "default_tau")]
    pub tau: [f64; 2],
    /// Step-size multiplier reached at the last step, interpolated
    /// geometrically from 1.
    #[serde(default = "one")]
    pub step_decay: f64,
}

fn one() -> f64 {
    1.0
}

fn default_tau() -> [f64; 2] {
    [1.0, 1.0]
}

impl StageConfig {
    /// Softness (observation pixels) used at `step` of `steps`.
    pub fn tau_at(&self, step: usize) -> f64 {
        let [a, b] = self.tau;
        if step + 1 >= self.steps {
            return b;
        }
        a * (b / a).powf(step as f64 / (self.steps - 1) as f64)
    }

    /// Step-size multiplier at `step`.
    pub fn step_scale(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return 1.0;
        }
        self.step_decay.powf(step as f64 / (self.steps - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// A stage stops once its best value improves by less than `tolerance` for
/// `patience` consecutive steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStop {
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self { tolerance: 1e-9, patience: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRotation {
    pub joint: usize,
    pub theta: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub stages: Vec<StageConfig>,
    pub adam: AdamConfig,
    /// Silhouette render size `[width, height]`; `None` renders at half the
    /// observation size.
    pub render_resolution: Option<[usize; 2]>,
    pub budget_seconds: Option<f64>,
    pub seed: u64,
    pub early_stop: EarlyStop,
    /// Non-root joint rotations of the initialization pose.
    pub init_pose: Vec<JointRotation>,
    /// Number of evenly spaced yaw candidates tried at initialization.
    pub yaw_candidates: usize,
    /// Keypoints at or below this confidence are ignored by initialization.
    pub init_confidence: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        use GroupKind::*;
        let refinement = ObjectiveSpec::new(&[
            (TermKind::Silhouette, 1.0),
            (TermKind::Keypoints2d, 0.5),
            (TermKind::Laplacian, 10.0),
            (TermKind::Symmetry, 1.0),
            (TermKind::Anchors, 0.5),
        ]);
        let coarse = StepSizes { poses: 0.01, translations: 0.005, shape: 0.1, offsets: 0.001 };
        Self {
            stages: vec![
                StageConfig {
                    name: "P".into(),
                    groups: vec![Poses, Translations, Shape],
                    objective: ObjectiveSpec::single(TermKind::Keypoints2d),
                    steps: 60,
                    step_sizes: coarse.clone(),
                    tau: default_tau(),
                    step_decay: 1.0,
                },
                StageConfig {
                    name: "S".into(),
                    groups: vec![Shape, Poses, Translations],
                    objective: ObjectiveSpec::new(&[(TermKind::Silhouette, 1.0), (TermKind::Keypoints2d, 0.5)]),
                    steps: 40,
                    step_sizes: coarse,
                    tau: [0.5, 0.5],
                    step_decay: 1.0,
                },
                StageConfig {
                    name: "D".into(),
                    groups: vec![Offsets, Shape, Poses, Translations],
                    objective: refinement,
                    steps: 25,
                    step_sizes: StepSizes { poses: 0.002, translations: 0.001, shape: 0.02, offsets: 0.0003 },
                    tau: [0.5, 0.5],
                    step_decay: 1.0,
                },
            ],
            adam: AdamConfig::default(),
            render_resolution: None,
            budget_seconds: None,
            seed: 0,
            early_stop: EarlyStop::default(),
            init_pose: A_POSE.iter().map(|&(joint, theta)| JointRotation { joint, theta }).collect(),
            yaw_candidates: 36,
            init_confidence: 0.2,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        if self.stages.is_empty() {
            return bad("at least one stage is required".into());
        }
        for s in &self.stages {
            if s.groups.is_empty() {
                return bad(format!("stage {} optimizes no parameter group", s.name));
            }
            let sizes = &s.step_sizes;
            for (what, v) in [
                ("poses", sizes.poses),
                ("translations", sizes.translations),
                ("shape", sizes.shape),
                ("offsets", sizes.offsets),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("stage {}: {what} step size must be positive, got {v}", s.name));
                }
            }
            if !(s.step_decay > 0.0 && s.step_decay.is_finite()) {
                return bad(format!("stage {}: step decay must be positive, got {}", s.name, s.step_decay));
            }
            if !s.tau.iter().all(|t| *t > 0.0 && t.is_finite()) {
                return bad(format!("stage {}: softness must be positive, got {:?}", s.name, s.tau));
            }
            s.objective.resolve()?;
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return bad(format!("invalid optimizer settings {a:?}"));
        }
        if let Some([w, h]) = self.render_resolution {
            if w < 8 || h < 8 {
                return bad(format!("render resolution {w}x{h} is below 8x8"));
            }
        }
        if let Some(b) = self.budget_seconds {
            if !(b >= 0.0) {
                return bad(format!("budget must be non-negative, got {b}"));
            }
        }
        if self.yaw_candidates == 0 {
            return bad("yaw_candidates must be positive".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// The final stage, used by refinement.
    pub fn refinement_stage(&self) -> Option<&StageConfig> {
        self.stages.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = FitConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<FitConfig>(&text).unwrap(), c);
        assert_eq!(c.stages.iter().map(|s| s.steps).collect::<Vec<_>>(), [60, 40, 25]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = FitConfig::default();
        c.stages[1].step_sizes.shape = 0.0;
        assert!(matches!(c.validate(), Err(Error::Configuration(_))));
        let c = FitConfig { stages: vec![], ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn tau_interpolates_geometrically() {
        let s = &StageConfig { tau: [4.0, 0.5], ..FitConfig::default().stages[1].clone() };
        assert_eq!(s.tau_at(0), 4.0);
        assert_eq!(s.tau_at(39), 0.5);
        assert!(s.tau_at(20) < 4.0 && s.tau_at(20) > 0.5);
    }
}
