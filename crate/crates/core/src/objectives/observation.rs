use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body::BodyModel;
use crate::error::{ensure, Error, Result};
use crate::render::{Camera, SilhouetteImage};

/// A 2D target for one mesh vertex (generalized face landmark).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub vertex: usize,
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

/// Evidence for one frame: a silhouette mask and 2D keypoints in the pixel
/// frame of the capture camera.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub mask: SilhouetteImage,
    /// `(u, v, confidence)` per model keypoint.
    pub keypoints: Vec<[f64; 3]>,
    pub anchors: Vec<Anchor>,
}

impl FrameObservation {
    pub fn validate(&self, model: &BodyModel, camera: &Camera) -> Result<()> {
        ensure(self.keypoints.len() == model.num_keypoints(), || {
            format!("observation has {} keypoints, model K = {}", self.keypoints.len(), model.num_keypoints())
        })?;
        ensure(self.mask.width() == camera.width && self.mask.height() == camera.height, || {
            format!(
                "mask is {}x{}, camera is {}x{}",
                self.mask.width(),
                self.mask.height(),
                camera.width,
                camera.height
            )
        })?;
        for kp in &self.keypoints {
            check_point(kp[0], kp[1], kp[2])?;
        }
        for a in &self.anchors {
            check_point(a.u, a.v, a.confidence)?;
            ensure(a.vertex < model.num_vertices(), || format!("anchor vertex {} out of range", a.vertex))?;
        }
        Ok(())
    }

    /// Keypoints with confidence above `threshold`.
    pub fn confident_keypoints(&self, threshold: f64) -> usize {
        self.keypoints.iter().filter(|k| k[2] > threshold).count()
    }
}

fn check_point(u: f64, v: f64, c: f64) -> Result<()> {
    if !(u.is_finite() && v.is_finite()) {
        return Err(Error::DegenerateObservation("non-finite 2D point".into()));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::DegenerateObservation(format!("confidence {c} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeypointFrame {
    pub points: Vec<[f64; 3]>,
    /// `[vertex, u, v, confidence]` rows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<[f64; 4]>,
}

/// The `keypoints.json` document of an observation bundle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeypointFile {
    pub frames: Vec<KeypointFrame>,
}

impl KeypointFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn from_observations(observations: &[FrameObservation]) -> Self {
        let frames = observations
            .iter()
            .map(|o| KeypointFrame {
                points: o.keypoints.clone(),
                anchors: o.anchors.iter().map(|a| [a.vertex as f64, a.u, a.v, a.confidence]).collect(),
            })
            .collect();
        Self { frames }
    }

    /// Pairs keypoint rows with masks, frame by frame.
    pub fn into_observations(self, masks: Vec<SilhouetteImage>) -> std::result::Result<Vec<FrameObservation>, String> {
        if masks.len() != self.frames.len() {
            return Err(format!("{} keypoint frames but {} masks", self.frames.len(), masks.len()));
        }
        self.frames
            .into_iter()
            .zip(masks)
            .map(|(f, mask)| {
                let anchors = f
                    .anchors
                    .iter()
                    .map(|a| {
                        if a[0] < 0.0 || a[0].fract() != 0.0 {
                            return Err(format!("anchor vertex id {} is not an index", a[0]));
                        }
                        Ok(Anchor { vertex: a[0] as usize, u: a[1], v: a[2], confidence: a[3] })
                    })
                    .collect::<std::result::Result<_, _>>()?;
                Ok(FrameObservation { mask, keypoints: f.points, anchors })
            })
            .collect()
    }
}
