//! Surface distances and the pose-normalized evaluation report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{pose_mesh, regress_keypoints3d, BodyModel, SubjectParams};
use crate::diff::Vec3;
use crate::error::{ensure, Error, Result};
use crate::fit::silhouette_ious;
use crate::objectives::FrameObservation;
use crate::render::Camera;

/// Exact distance from `p` to triangle `abc`. Zero-area triangles reduce to
/// their edges.
pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let n = ab.cross(&ac);
    let nn = n.norm_squared();
    let scale = ab.norm_squared().max(ac.norm_squared());
    if nn > 1e-24 * scale * scale && nn > 0.0 {
        // Barycentric coordinates of the projection onto the plane.
        let v = ap.cross(&ac).dot(&n) / nn;
        let w = ab.cross(&ap).dot(&n) / nn;
        if v >= 0.0 && w >= 0.0 && v + w <= 1.0 {
            // Measured from the nearest corner: exact zero when p is a corner.
            let q = [ap, p - b, p - c].into_iter().min_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()));
            return q.expect("three corners").dot(&n).abs() / nn.sqrt();
        }
    }
    segment_distance(p, a, b).min(segment_distance(p, b, c)).min(segment_distance(p, c, a))
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let e = b - a;
    let l2 = e.norm_squared();
    let t = if l2 > 0.0 { (p - a).dot(&e) / l2 } else { 0.0 };
    if t <= 0.0 {
        (p - a).norm()
    } else if t >= 1.0 {
        (p - b).norm()
    } else {
        (p - (a + e * t)).norm()
    }
}

fn check_mesh(vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    if faces.is_empty() {
        return Err(Error::DegenerateInput("mesh has no faces".into()));
    }
    ensure(faces.iter().flatten().all(|&i| i < vertices.len()), || "face index out of range".into())
}

/// Brute-force oracle: minimum over every triangle.
pub fn point_to_surface_distance_brute(points: &[Vec3], vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<Vec<f64>> {
    check_mesh(vertices, faces)?;
    Ok(points
        .iter()
        .map(|p| {
            faces
                .iter()
                .map(|f| point_triangle_distance(p, &vertices[f[0]], &vertices[f[1]], &vertices[f[2]]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self { lo: Vec3::repeat(f64::INFINITY), hi: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb { lo: self.lo.inf(&o.lo), hi: self.hi.sup(&o.hi) }
    }

    fn distance(&self, p: &Vec3) -> f64 {
        let d = (self.lo - p).sup(&(p - self.hi)).sup(&Vec3::zeros());
        d.norm()
    }
}

enum Node {
    Leaf { bounds: Aabb, faces: Vec<usize> },
    Split { bounds: Aabb, children: Box<[Node; 2]> },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Split { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 8;

/// Bounding-volume hierarchy over a triangle mesh for closest-point queries.
pub struct MeshIndex<'a> {
    vertices: &'a [Vec3],
    faces: &'a [[usize; 3]],
    root: Node,
}

impl<'a> MeshIndex<'a> {
    pub fn new(vertices: &'a [Vec3], faces: &'a [[usize; 3]]) -> Result<Self> {
        check_mesh(vertices, faces)?;
        let boxes: Vec<Aabb> = faces
            .iter()
            .map(|f| {
                let mut b = Aabb::empty();
                for &i in f {
                    b.grow(&vertices[i]);
                }
                b
            })
            .collect();
        let root = build(&boxes, (0..faces.len()).collect());
        Ok(Self { vertices, faces, root })
    }

    fn face_distance(&self, p: &Vec3, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        point_triangle_distance(p, &self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        self.visit(&self.root, p, &mut best);
        best
    }

    fn visit(&self, node: &Node, p: &Vec3, best: &mut f64) {
        match node {
            Node::Leaf { faces, .. } => {
                for &f in faces {
                    *best = best.min(self.face_distance(p, f));
                }
            }
            Node::Split { children, .. } => {
                let d0 = children[0].bounds().distance(p);
                let d1 = children[1].bounds().distance(p);
                let order = if d0 <= d1 { [(0, d0), (1, d1)] } else { [(1, d1), (0, d0)] };
                for (i, d) in order {
                    if d < *best {
                        self.visit(&children[i], p, best);
                    }
                }
            }
        }
    }
}

fn build(boxes: &[Aabb], mut faces: Vec<usize>) -> Node {
    let bounds = faces.iter().fold(Aabb::empty(), |acc, &f| acc.merge(&boxes[f]));
    if faces.len() <= LEAF_SIZE {
        return Node::Leaf { bounds, faces };
    }
    let centroid = |f: usize| (boxes[f].lo + boxes[f].hi) * 0.5;
    let extent = bounds.hi - bounds.lo;
    let axis = extent.imax();
    faces.sort_by(|&a, &b| centroid(a)[axis].total_cmp(&centroid(b)[axis]).then(a.cmp(&b)));
    let right = faces.split_off(faces.len() / 2);
    Node::Split { bounds, children: Box::new([build(boxes, faces), build(boxes, right)]) }
}

/// Exact Euclidean distance from each point to the mesh surface.
pub fn point_to_surface_distance(points: &[Vec3], vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<Vec<f64>> {
    let index = MeshIndex::new(vertices, faces)?;
    Ok(points.par_iter().map(|p| index.distance(p)).collect())
}

/// Mean, standard deviation and maximum of the pooled distances, in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean_mm: f64,
    pub std_mm: f64,
    pub max_mm: f64,
}

/// Pooled vertex-to-surface distances in both directions. Each direction
/// is reduced separately and the halves are combined with commutative
/// operations, so swapping the meshes gives bit-identical statistics.
pub fn bidirectional_distance_stats(
    a: &[Vec3],
    a_faces: &[[usize; 3]],
    b: &[Vec3],
    b_faces: &[[usize; 3]],
) -> Result<DistanceStats> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::DegenerateInput("meshes must have vertices".into()));
    }
    let ab = point_to_surface_distance(a, b, b_faces)?;
    let ba = point_to_surface_distance(b, a, a_faces)?;
    let n = (ab.len() + ba.len()) as f64;
    let sum = |d: &[f64]| d.iter().sum::<f64>();
    let mean = (sum(&ab) + sum(&ba)) / n;
    let sq = |d: &[f64]| d.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let var = (sq(&ab) + sq(&ba)) / n;
    let max = ab.iter().chain(&ba).copied().fold(0.0, f64::max);
    Ok(DistanceStats { mean_mm: mean * 1e3, std_mm: var.sqrt() * 1e3, max_mm: max * 1e3 })
}

/// Mean bidirectional vertex-to-surface distance in millimeters.
pub fn bidirectional_surface_error(
    a: &[Vec3],
    a_faces: &[[usize; 3]],
    b: &[Vec3],
    b_faces: &[[usize; 3]],
) -> Result<f64> {
    bidirectional_distance_stats(a, a_faces, b, b_faces).map(|s| s.mean_mm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mean_mm: f64,
    pub std_mm: f64,
    pub max_mm: f64,
    /// Per-frame RMSE of the estimate's projected keypoints (pixels).
    pub keypoint_rmse_px: Vec<f64>,
    /// Per-frame silhouette IoU of the estimate under its own poses.
    pub iou: Vec<f64>,
}

/// Both T-shapes re-posed with the ground truth's frame-0 pose.
pub fn pose_normalized_meshes(
    model: &BodyModel,
    estimate: &SubjectParams,
    ground_truth: &SubjectParams,
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    estimate.validate(model)?;
    ground_truth.validate(model)?;
    let pose = ground_truth
        .frames
        .first()
        .ok_or_else(|| Error::ContractViolation("ground truth has no frames".into()))?
        .clone();
    let repose = |s: &SubjectParams| -> Result<Vec<Vec3>> {
        let single = SubjectParams { beta: s.beta.clone(), offsets: s.offsets.clone(), frames: vec![pose.clone()] };
        pose_mesh(model, &single, 0)
    };
    Ok((repose(estimate)?, repose(ground_truth)?))
}

/// Pose-normalized bidirectional error plus per-frame image diagnostics.
pub fn evaluate_fit(
    model: &BodyModel,
    camera: &Camera,
    estimate: &SubjectParams,
    ground_truth: &SubjectParams,
    observations: &[FrameObservation],
) -> Result<EvaluationReport> {
    let (est, gt) = pose_normalized_meshes(model, estimate, ground_truth)?;
    let stats = bidirectional_distance_stats(&est, model.faces(), &gt, model.faces())?;
    ensure(estimate.frames.len() == observations.len(), || {
        format!("estimate has {} frames, {} observations", estimate.frames.len(), observations.len())
    })?;
    let keypoint_rmse_px = observations
        .iter()
        .enumerate()
        .map(|(f, obs)| {
            let kp = regress_keypoints3d(model, &pose_mesh(model, estimate, f)?)?;
            let mut sum = 0.0;
            let mut n = 0usize;
            for (k, o) in kp.iter().zip(&obs.keypoints) {
                if o[2] > 0.0 {
                    let uv = camera.project_point(k)?;
                    sum += (uv[0] - o[0]).powi(2) + (uv[1] - o[1]).powi(2);
                    n += 1;
                }
            }
            Ok(if n > 0 { (sum / n as f64).sqrt() } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    let iou = silhouette_ious(model, camera, estimate, observations)?;
    Ok(EvaluationReport { mean_mm: stats.mean_mm, std_mm: stats.std_mm, max_mm: stats.max_mm, keypoint_rmse_px, iou })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(z: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let v = vec![Vec3::new(0.0, 0.0, z), Vec3::new(1.0, 0.0, z), Vec3::new(1.0, 1.0, z), Vec3::new(0.0, 1.0, z)];
        (v, vec![[0, 1, 2], [0, 2, 3]])
    }

    #[test]
    fn triangle_cases() {
        let (a, b, c) = (Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(point_triangle_distance(&Vec3::new(0.2, 0.2, 0.0), &a, &b, &c), 0.0);
        let above = Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.7);
        assert!((point_triangle_distance(&above, &a, &b, &c) - 0.7).abs() < 1e-15);
        assert!((point_triangle_distance(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c) - 2f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance(&Vec3::new(0.5, -2.0, 0.0), &a, &b, &c) - 2.0).abs() < 1e-15);
        // Degenerate: all three corners on a line.
        let d = point_triangle_distance(&Vec3::new(0.5, 1.0, 0.0), &a, &b, &Vec3::new(2.0, 0.0, 0.0));
        assert!((d - 1.0).abs() < 1e-15);
        let p = point_triangle_distance(&Vec3::new(0.0, 3.0, 4.0), &a, &a, &a);
        assert!((p - 5.0).abs() < 1e-15);
    }

    #[test]
    fn parallel_squares_one_millimeter_apart() {
        let (a, f) = square(0.0);
        let (b, _) = square(0.001);
        let e = bidirectional_surface_error(&a, &f, &b, &f).unwrap();
        assert!((e - 1.0).abs() < 1e-9);
        assert_eq!(bidirectional_surface_error(&a, &f, &a, &f).unwrap(), 0.0);
    }

    #[test]
    fn empty_mesh_is_rejected() {
        assert!(point_to_surface_distance(&[Vec3::zeros()], &[Vec3::zeros()], &[]).is_err());
    }
}
