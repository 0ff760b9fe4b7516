use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss terms available to [`ObjectiveSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermKind {
    Tpose,
    Posed,
    Silhouette,
    Undressed,
    PoseParams,
    Keypoints3d,
    Keypoints2d,
    Laplacian,
    Symmetry,
    Anchors,
}

impl TermKind {
    pub const ALL: [TermKind; 10] = [
        TermKind::Tpose,
        TermKind::Posed,
        TermKind::Silhouette,
        TermKind::Undressed,
        TermKind::PoseParams,
        TermKind::Keypoints3d,
        TermKind::Keypoints2d,
        TermKind::Laplacian,
        TermKind::Symmetry,
        TermKind::Anchors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TermKind::Tpose => "tpose",
            TermKind::Posed => "posed",
            TermKind::Silhouette => "silhouette",
            TermKind::Undressed => "undressed",
            TermKind::PoseParams => "pose_params",
            TermKind::Keypoints3d => "keypoints3d",
            TermKind::Keypoints2d => "keypoints2d",
            TermKind::Laplacian => "laplacian",
            TermKind::Symmetry => "symmetry",
            TermKind::Anchors => "anchors",
        }
    }

    /// Needs ground-truth parameters.
    pub fn supervised(self) -> bool {
        matches!(
            self,
            TermKind::Tpose | TermKind::Posed | TermKind::Undressed | TermKind::PoseParams | TermKind::Keypoints3d
        )
    }

    /// Evaluated once per frame rather than once per subject.
    pub fn per_frame(self) -> bool {
        matches!(
            self,
            TermKind::Posed
                | TermKind::Silhouette
                | TermKind::PoseParams
                | TermKind::Keypoints3d
                | TermKind::Keypoints2d
                | TermKind::Anchors
        )
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TermKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TermKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Configuration(format!("unknown objective term {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub name: String,
    pub weight: f64,
}

/// Weighted list of terms and the frames they are summed over (empty means
/// every frame).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub terms: Vec<TermSpec>,
    #[serde(default)]
    pub frames: Vec<usize>,
}

impl ObjectiveSpec {
    pub fn new(terms: &[(TermKind, f64)]) -> Self {
        Self {
            terms: terms.iter().map(|(k, w)| TermSpec { name: k.name().to_string(), weight: *w }).collect(),
            frames: Vec::new(),
        }
    }

    pub fn single(term: TermKind) -> Self {
        Self::new(&[(term, 1.0)])
    }

    pub fn with_frames(mut self, frames: Vec<usize>) -> Self {
        self.frames = frames;
        self
    }

    /// Parsed terms; rejects unknown names, negative weights and all-zero specs.
    pub fn resolve(&self) -> Result<Vec<(TermKind, f64)>> {
        let mut out = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let kind: TermKind = t.name.parse()?;
            if !(t.weight >= 0.0) || !t.weight.is_finite() {
                return Err(Error::Configuration(format!("term {} has invalid weight {}", t.name, t.weight)));
            }
            out.push((kind, t.weight));
        }
        if !out.iter().any(|(_, w)| *w > 0.0) {
            return Err(Error::Configuration("objective needs at least one term with positive weight".into()));
        }
        Ok(out)
    }
}
