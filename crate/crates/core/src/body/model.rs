//! Model definition file format, validation, and the prepared (sparse,
//! topologically ordered) form used by the forward pass.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diff::Vec3;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Eye-to-ankle span every model is scaled to at load time.
pub const REFERENCE_SPAN_METERS: f64 = 1.66;

/// Neutral, self-describing body model file.
///
/// `shape_dirs` is `V·3·B` values indexed `(v·3 + axis)·B + b`; `pose_dirs`
/// uses the same convention with `9·(J−1)` basis entries, one per element of
/// `R(θ_j) − I` (row-major) for joints `1..J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDefinition {
    pub version: u32,
    #[serde(rename = "V")]
    pub num_vertices: usize,
    #[serde(rename = "J")]
    pub num_joints: usize,
    #[serde(rename = "K")]
    pub num_keypoints: usize,
    #[serde(rename = "B")]
    pub num_betas: usize,
    pub template: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    /// Parent joint index, `-1` for the root.
    pub parents: Vec<i64>,
    pub shape_dirs: Vec<f64>,
    pub pose_dirs: Vec<f64>,
    pub joint_regressor: Vec<Vec<f64>>,
    pub skin_weights: Vec<Vec<f64>>,
    pub keypoint_regressor: Vec<Vec<f64>>,
    pub symmetry_pairs: Vec<[usize; 2]>,
    pub eye_ids: Vec<usize>,
    pub ankle_ids: Vec<usize>,
}

impl ModelDefinition {
    pub fn num_pose_basis(&self) -> usize {
        9 * self.num_joints.saturating_sub(1)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Mean-y of the eye vertices minus mean-y of the ankle vertices.
    pub fn eye_ankle_span(&self) -> Result<f64> {
        let mean_y = |ids: &[usize], what: &str| -> Result<f64> {
            if ids.is_empty() {
                return Err(Error::DegenerateModel(format!("{what} vertex set is empty")));
            }
            let mut sum = 0.0;
            for &i in ids {
                let v = self
                    .template
                    .get(i)
                    .ok_or_else(|| Error::DegenerateModel(format!("{what} id {i} out of range")))?;
                sum += v[1];
            }
            Ok(sum / ids.len() as f64)
        };
        Ok(mean_y(&self.eye_ids, "eye")? - mean_y(&self.ankle_ids, "ankle")?)
    }

    /// Checks every structural invariant of the format.
    pub fn validate(&self) -> Result<()> {
        let (v, j, k, b) = (self.num_vertices, self.num_joints, self.num_keypoints, self.num_betas);
        let bad = |m: String| Err(Error::DegenerateModel(m));
        if v < 4 {
            return bad(format!("need at least 4 vertices, got {v}"));
        }
        if j == 0 || k == 0 {
            return bad("joint and keypoint counts must be positive".into());
        }
        if self.template.len() != v {
            return bad(format!("template has {} rows, V = {v}", self.template.len()));
        }
        if self.template.iter().flatten().any(|x| !x.is_finite()) {
            return bad("template contains non-finite values".into());
        }
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i >= v)) {
            return bad(format!("face {f:?} references a vertex >= {v}"));
        }
        if self.shape_dirs.len() != v * 3 * b {
            return bad(format!("shape_dirs has {} entries, expected {}", self.shape_dirs.len(), v * 3 * b));
        }
        if self.pose_dirs.len() != v * 3 * self.num_pose_basis() {
            return bad(format!(
                "pose_dirs has {} entries, expected {}",
                self.pose_dirs.len(),
                v * 3 * self.num_pose_basis()
            ));
        }
        if self.shape_dirs.iter().chain(&self.pose_dirs).any(|x| !x.is_finite()) {
            return bad("blendshape bases contain non-finite values".into());
        }
        self.validate_tree()?;
        check_stochastic_rows("joint_regressor", &self.joint_regressor, j, v)?;
        check_stochastic_rows("skin_weights", &self.skin_weights, v, j)?;
        check_stochastic_rows("keypoint_regressor", &self.keypoint_regressor, k, v)?;
        for &[l, r] in &self.symmetry_pairs {
            if l >= v || r >= v {
                return bad(format!("symmetry pair ({l}, {r}) out of range"));
            }
            let (a, c) = (self.template[l], self.template[r]);
            if (a[0] + c[0]).abs() > 1e-6 || (a[1] - c[1]).abs() > 1e-6 || (a[2] - c[2]).abs() > 1e-6 {
                return bad(format!("symmetry pair ({l}, {r}) is not mirrored about x = 0"));
            }
        }
        for (name, ids) in [("eye", &self.eye_ids), ("ankle", &self.ankle_ids)] {
            if let Some(&i) = ids.iter().find(|&&i| i >= v) {
                return bad(format!("{name} id {i} out of range"));
            }
        }
        Ok(())
    }

    fn validate_tree(&self) -> Result<()> {
        let j = self.num_joints;
        if self.parents.len() != j {
            return Err(Error::DegenerateModel(format!("parents has {} entries, J = {j}", self.parents.len())));
        }
        if self.parents[0] != -1 {
            return Err(Error::DegenerateModel("joint 0 must be the root (parent -1)".into()));
        }
        for (i, &p) in self.parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= j || p as usize == i {
                return Err(Error::DegenerateModel(format!("joint {i} has invalid parent {p}")));
            }
        }
        // Every joint must reach the root without revisiting a joint.
        for start in 1..j {
            let mut cur = start;
            for _ in 0..j {
                if cur == 0 {
                    break;
                }
                cur = self.parents[cur] as usize;
            }
            if cur != 0 {
                return Err(Error::DegenerateModel(format!("joint {start} is not connected to the root")));
            }
        }
        Ok(())
    }
}

fn check_stochastic_rows(name: &str, rows: &[Vec<f64>], n_rows: usize, n_cols: usize) -> Result<()> {
    if rows.len() != n_rows {
        return Err(Error::DegenerateModel(format!("{name} has {} rows, expected {n_rows}", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_cols {
            return Err(Error::DegenerateModel(format!("{name} row {i} has {} columns, expected {n_cols}", row.len())));
        }
        if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::DegenerateModel(format!("{name} row {i} has negative or non-finite entries")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::DegenerateModel(format!("{name} row {i} sums to {sum}")));
        }
    }
    Ok(())
}

/// Uniformly rescales template and blendshape bases so the template's
/// eye-to-ankle span equals [`REFERENCE_SPAN_METERS`]. Regressors and
/// weights are unchanged.
pub fn normalize_height(model: &ModelDefinition) -> Result<ModelDefinition> {
    let span = model.eye_ankle_span()?;
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::DegenerateModel(format!("eye-ankle span must be positive, got {span}")));
    }
    let scale = REFERENCE_SPAN_METERS / span;
    let mut out = model.clone();
    if scale == 1.0 {
        return Ok(out);
    }
    for v in &mut out.template {
        for x in v.iter_mut() {
            *x *= scale;
        }
    }
    out.shape_dirs.iter_mut().for_each(|x| *x *= scale);
    out.pose_dirs.iter_mut().for_each(|x| *x *= scale);
    Ok(out)
}

pub(crate) type SparseRow = Vec<(usize, f64)>;

fn sparse_rows(rows: &[Vec<f64>]) -> Vec<SparseRow> {
    rows.iter().map(|r| r.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, w)| (i, *w)).collect()).collect()
}

/// A validated model with derived lookup structures. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct BodyModel {
    def: ModelDefinition,
    pub(crate) template: Vec<Vec3>,
    pub(crate) parents: Vec<Option<usize>>,
    /// Joints ordered so every parent precedes its children.
    pub(crate) order: Vec<usize>,
    pub(crate) skin: Vec<SparseRow>,
    pub(crate) joint_rows: Vec<SparseRow>,
    pub(crate) keypoint_rows: Vec<SparseRow>,
    pub(crate) has_pose_dirs: bool,
    pub(crate) neighbors: Vec<Vec<usize>>,
}

impl BodyModel {
    /// Validates the definition and builds the derived structures. The
    /// definition is used as given; see [`BodyModel::load_normalized`].
    pub fn new(def: ModelDefinition) -> Result<Self> {
        def.validate()?;
        let template = def.template.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect();
        let parents: Vec<Option<usize>> =
            def.parents.iter().map(|&p| if p < 0 { None } else { Some(p as usize) }).collect();
        let order = topological_order(&parents);
        let neighbors = vertex_neighbors(def.num_vertices, &def.faces);
        Ok(Self {
            template,
            order,
            skin: sparse_rows(&def.skin_weights),
            joint_rows: sparse_rows(&def.joint_regressor),
            keypoint_rows: sparse_rows(&def.keypoint_regressor),
            has_pose_dirs: def.pose_dirs.iter().any(|x| *x != 0.0),
            neighbors,
            parents,
            def,
        })
    }

    /// Applies [`normalize_height`] and then builds the model.
    pub fn from_definition_normalized(def: &ModelDefinition) -> Result<Self> {
        Self::new(normalize_height(def)?)
    }

    pub fn load_normalized(path: &Path) -> Result<Self> {
        Self::from_definition_normalized(&ModelDefinition::load(path)?)
    }

    pub fn definition(&self) -> &ModelDefinition {
        &self.def
    }

    pub fn num_vertices(&self) -> usize {
        self.def.num_vertices
    }

    pub fn num_joints(&self) -> usize {
        self.def.num_joints
    }

    pub fn num_keypoints(&self) -> usize {
        self.def.num_keypoints
    }

    pub fn num_betas(&self) -> usize {
        self.def.num_betas
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.def.faces
    }

    pub fn template(&self) -> &[Vec3] {
        &self.template
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    /// 1-ring vertex neighbourhoods derived from the faces.
    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn symmetry_pairs(&self) -> &[[usize; 2]] {
        &self.def.symmetry_pairs
    }

    /// Joint with the largest skinning weight for each vertex.
    pub fn dominant_joint(&self, vertex: usize) -> usize {
        self.skin[vertex].iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|&(j, _)| j).unwrap_or(0)
    }

    #[inline]
    pub(crate) fn shape_dir(&self, v: usize, axis: usize) -> &[f64] {
        let b = self.def.num_betas;
        let start = (v * 3 + axis) * b;
        &self.def.shape_dirs[start..start + b]
    }

    #[inline]
    pub(crate) fn pose_dir(&self, v: usize, axis: usize) -> &[f64] {
        let p = self.def.num_pose_basis();
        let start = (v * 3 + axis) * p;
        &self.def.pose_dirs[start..start + p]
    }
}

fn topological_order(parents: &[Option<usize>]) -> Vec<usize> {
    let n = parents.len();
    let mut depth = vec![0usize; n];
    for (j, d) in depth.iter_mut().enumerate() {
        let mut cur = j;
        while let Some(p) = parents[cur] {
            *d += 1;
            cur = p;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (depth[j], j));
    order
}

fn vertex_neighbors(n: usize, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut nb: Vec<Vec<usize>> = vec![Vec::new(); n];
    for f in faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            if a != b {
                nb[a].push(b);
                nb[b].push(a);
            }
        }
    }
    for list in &mut nb {
        list.sort_unstable();
        list.dedup();
    }
    nb
}
