//! On-disk observation bundles.
//!
//! Layout of a bundle directory:
//! `model.json`, `scenario.json`, `keypoints.json`, `frames/NNN.pgm` and,
//! when ground truth is known, `subject.json`.

use std::path::{Path, PathBuf};

use crate::body::{BodyModel, ModelDefinition, SubjectParams};
use crate::error::{Error, Result};
use crate::objectives::{FrameObservation, KeypointFile};
use crate::render::{Camera, SilhouetteImage};

use super::procedural::{build_procedural_model, DEFAULT_BETAS, DEFAULT_VERTICES};
use super::scenario::{render_observations, synthesize_subject, ScenarioSpec};

pub const MODEL_FILE: &str = "model.json";
pub const SUBJECT_FILE: &str = "subject.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const KEYPOINTS_FILE: &str = "keypoints.json";
pub const FRAMES_DIR: &str = "frames";

/// File name of frame `i`'s mask inside [`FRAMES_DIR`].
pub fn frame_file_name(i: usize) -> String {
    format!("{i:03}.pgm")
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub model: BodyModel,
    pub scenario: ScenarioSpec,
    pub observations: Vec<FrameObservation>,
    pub ground_truth: Option<SubjectParams>,
}

impl Bundle {
    pub fn camera(&self) -> Result<Camera> {
        self.scenario.camera()
    }

    /// Ground truth, or an error naming the missing file.
    pub fn require_ground_truth(&self, dir: &Path) -> Result<&SubjectParams> {
        self.ground_truth.as_ref().ok_or_else(|| Error::Io {
            path: dir.join(SUBJECT_FILE),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "bundle has no ground truth"),
        })
    }

    /// Writes every bundle file under `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let frames = dir.join(FRAMES_DIR);
        std::fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
        self.model.definition().save(&dir.join(MODEL_FILE))?;
        write_json(&dir.join(SCENARIO_FILE), &self.scenario)?;
        KeypointFile::from_observations(&self.observations).save(&dir.join(KEYPOINTS_FILE))?;
        for (i, obs) in self.observations.iter().enumerate() {
            obs.mask.save_pgm(&frames.join(frame_file_name(i)))?;
        }
        if let Some(gt) = &self.ground_truth {
            gt.save(&dir.join(SUBJECT_FILE))?;
        }
        Ok(())
    }

    /// Reads a bundle; `subject.json` is optional.
    pub fn read(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Io {
                path: dir.into(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "bundle directory not found"),
            });
        }
        let model = BodyModel::new(ModelDefinition::load(&dir.join(MODEL_FILE))?)?;
        let scenario: ScenarioSpec = read_json(&dir.join(SCENARIO_FILE))?;
        scenario.validate()?;
        let camera = scenario.camera()?;
        let kp_path = dir.join(KEYPOINTS_FILE);
        let keypoints = KeypointFile::load(&kp_path)?;
        let masks = (0..keypoints.frames.len())
            .map(|i| SilhouetteImage::load_pgm(&dir.join(FRAMES_DIR).join(frame_file_name(i))))
            .collect::<Result<Vec<_>>>()?;
        let observations = keypoints.into_observations(masks).map_err(|m| Error::parse(&kp_path, m))?;
        if observations.is_empty() {
            return Err(Error::parse(&kp_path, "bundle has no frames"));
        }
        for (i, obs) in observations.iter().enumerate() {
            obs.validate(&model, &camera).map_err(|e| Error::parse(&kp_path, format!("frame {i}: {e}")))?;
        }
        let subject_path = dir.join(SUBJECT_FILE);
        let ground_truth = if subject_path.exists() {
            let gt = SubjectParams::load(&subject_path)?;
            gt.validate(&model).map_err(|e| Error::parse(&subject_path, e))?;
            if gt.frames.len() != observations.len() {
                return Err(Error::parse(
                    &subject_path,
                    format!("{} frames for {} observations", gt.frames.len(), observations.len()),
                ));
            }
            Some(gt)
        } else {
            None
        };
        Ok(Self { model, scenario, observations, ground_truth })
    }
}

/// Builds the default procedural model and renders a full bundle for
/// `scenario`.
pub fn synthesize_bundle(scenario: &ScenarioSpec) -> Result<Bundle> {
    let model = BodyModel::new(build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS)?)?;
    synthesize_bundle_with(model, scenario)
}

pub fn synthesize_bundle_with(model: BodyModel, scenario: &ScenarioSpec) -> Result<Bundle> {
    scenario.validate()?;
    let camera = scenario.camera()?;
    let subject = synthesize_subject(&model, scenario)?;
    let (observations, truth) = render_observations(&model, &camera, &subject, scenario)?;
    Ok(Bundle { model, scenario: scenario.clone(), observations, ground_truth: Some(truth) })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Path of frame `i`'s mask inside bundle `dir`.
pub fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(FRAMES_DIR).join(frame_file_name(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let scenario = ScenarioSpec { frames: 2, resolution: 128, keypoint_noise: 1.0, ..Default::default() };
        let bundle = synthesize_bundle(&scenario).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bundle.write(dir.path()).unwrap();
        let back = Bundle::read(dir.path()).unwrap();
        assert_eq!(back.scenario, scenario);
        assert_eq!(back.ground_truth, bundle.ground_truth);
        assert_eq!(back.observations.len(), 2);
        for (a, b) in back.observations.iter().zip(&bundle.observations) {
            assert_eq!(a.mask, b.mask);
            assert_eq!(a.keypoints, b.keypoints);
            assert_eq!(a.anchors, b.anchors);
        }
        assert_eq!(back.model.definition(), bundle.model.definition());
    }

    #[test]
    fn missing_files_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = Bundle::read(dir.path()).unwrap_err();
        assert!(err.to_string().contains(MODEL_FILE), "{err}");
    }
}
