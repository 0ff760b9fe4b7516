//! Procedural capsule-limb humanoid on the 24-joint kinematic tree.
//!
//! Every body part is a closed tube of elliptical rings. Joints are averages
//! of designated rings, shape directions are differences of meshes generated
//! from perturbed anatomy, and the right side is an exact mirror of the left.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::{normalize_height, ModelDefinition, MODEL_FORMAT_VERSION};
use crate::diff::Vec3;
use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 24;
pub const NUM_KEYPOINTS: usize = 25;
pub const MIN_VERTICES: usize = 200;
pub const DEFAULT_VERTICES: usize = 1000;
pub const DEFAULT_BETAS: usize = 10;

/// Kinematic parents of the 24-joint tree.
pub const PARENTS: [i64; NUM_JOINTS] =
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21];

/// Left/right counterpart of each joint (midline joints map to themselves).
pub const MIRROR_JOINT: [usize; NUM_JOINTS] =
    [0, 2, 1, 3, 5, 4, 6, 8, 7, 9, 11, 10, 12, 14, 13, 15, 17, 16, 19, 18, 21, 20, 23, 22];

/// Joints whose surrounding surface carries no clothing offsets (head,
/// hands, feet).
pub const BARE_JOINTS: [usize; 10] = [7, 8, 10, 11, 12, 15, 20, 21, 22, 23];

/// Index of the head-top keypoint.
pub const HEAD_TOP_KEYPOINT: usize = 24;

const EYE_ANGLE: f64 = 0.35;

#[derive(Debug, Clone, Copy, Default)]
struct Anatomy {
    bulk: f64,
    girth: f64,
    arm_length: f64,
    leg_length: f64,
    shoulders: f64,
}

impl Anatomy {
    /// Per-unit-β perturbation of the k-th handcrafted direction.
    fn unit(k: usize, amount: f64) -> Self {
        let mut a = Self::default();
        match k {
            0 => a.bulk = 0.06 * amount,
            1 => a.girth = 0.08 * amount,
            2 => a.arm_length = 0.04 * amount,
            3 => a.leg_length = 0.04 * amount,
            _ => a.shoulders = 0.02 * amount,
        }
        a
    }
}

const HANDCRAFTED: usize = 5;

#[derive(Debug, Clone, Copy)]
struct Station {
    center: [f64; 3],
    a: f64,
    b: f64,
}

fn st(x: f64, y: f64, z: f64, a: f64, b: f64) -> Station {
    Station { center: [x, y, z], a, b }
}

#[derive(Debug, Clone, Copy)]
enum Bone {
    /// The segment from `parent(j)` to `j`, moved by `parent(j)`.
    Child(usize),
    /// A segment from `j` along a fixed offset, moved by `j`.
    Leaf(usize, [f64; 3]),
}

#[derive(Debug, Clone)]
struct TubeSpec {
    stations: Vec<Station>,
    /// Cross-section axes.
    u: [f64; 3],
    w: [f64; 3],
    /// `(station, joint)` rings that define joint positions.
    joint_rings: Vec<(usize, usize)>,
    bones: Vec<Bone>,
    midline: bool,
}

fn smooth_bump(y: f64, lo: f64, hi: f64, ramp: f64) -> f64 {
    let s = |t: f64| {
        let t = t.clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    };
    s((y - lo + ramp) / ramp) * s((hi + ramp - y) / ramp)
}

/// Midline and left-side parts for the given anatomy.
fn tube_specs(an: &Anatomy) -> Vec<TubeSpec> {
    let r = 1.0 + an.bulk;
    let hip_y = 0.88;
    let leg_y = |y: f64| hip_y - (hip_y - y) * (1.0 + an.leg_length);
    let shoulder_x = 0.19;
    let arm_x = |x: f64| {
        let x = if x > shoulder_x { shoulder_x + (x - shoulder_x) * (1.0 + an.arm_length) } else { x };
        x + an.shoulders
    };

    let torso_rows = [
        (0.80, 0.13, 0.09),
        (0.88, 0.17, 0.11),
        (0.95, 0.17, 0.11),
        (1.00, 0.16, 0.10),
        (1.06, 0.15, 0.10),
        (1.12, 0.15, 0.10),
        (1.19, 0.16, 0.11),
        (1.25, 0.17, 0.115),
        (1.31, 0.18, 0.115),
        (1.37, 0.19, 0.11),
        (1.43, 0.19, 0.10),
        (1.47, 0.14, 0.08),
        (1.50, 0.06, 0.06),
    ];
    let torso = TubeSpec {
        stations: torso_rows
            .iter()
            .map(|&(y, a, b)| {
                let g = 1.0 + an.girth * smooth_bump(y, 0.95, 1.31, 0.12);
                let s = 1.0 + 2.5 * an.shoulders * smooth_bump(y, 1.37, 1.45, 0.08);
                st(0.0, y, 0.0, a * r * g * s, b * r * g)
            })
            .collect(),
        u: [1.0, 0.0, 0.0],
        w: [0.0, 0.0, 1.0],
        joint_rings: vec![(2, 0), (4, 3), (6, 6), (7, 9)],
        bones: vec![
            Bone::Child(1),
            Bone::Child(2),
            Bone::Child(3),
            Bone::Child(4),
            Bone::Child(5),
            Bone::Child(6),
            Bone::Child(9),
            Bone::Child(12),
            Bone::Child(13),
            Bone::Child(14),
            Bone::Child(16),
            Bone::Child(17),
        ],
        midline: true,
    };

    let head_rows = [
        (1.48, 0.05, 0.05),
        (1.50, 0.05, 0.05),
        (1.54, 0.05, 0.055),
        (1.58, 0.075, 0.09),
        (1.62, 0.08, 0.10),
        (1.68, 0.085, 0.10),
        (1.74, 0.08, 0.095),
        (1.79, 0.055, 0.065),
    ];
    let head = TubeSpec {
        stations: head_rows.iter().map(|&(y, a, b)| st(0.0, y, 0.01, a * r, b * r)).collect(),
        u: [1.0, 0.0, 0.0],
        w: [0.0, 0.0, 1.0],
        joint_rings: vec![(1, 12), (4, 15)],
        bones: vec![Bone::Child(12), Bone::Child(15), Bone::Leaf(15, [0.0, 0.15, 0.0])],
        midline: true,
    };

    let leg_rows = [
        (0.93, 0.09, 0.085, 0.0),
        (0.88, 0.09, 0.082, 0.0),
        (0.80, 0.093, 0.078, 0.0),
        (0.65, 0.097, 0.062, 0.0),
        (0.50, 0.10, 0.050, 0.01),
        (0.40, 0.10, 0.052, 0.0),
        (0.30, 0.10, 0.048, -0.005),
        (0.18, 0.10, 0.038, -0.01),
        (0.08, 0.10, 0.035, -0.01),
    ];
    let leg = TubeSpec {
        stations: leg_rows.iter().map(|&(y, x, rad, z)| st(x, leg_y(y), z, rad * r, rad * r)).collect(),
        u: [1.0, 0.0, 0.0],
        w: [0.0, 0.0, 1.0],
        joint_rings: vec![(1, 1), (4, 4), (8, 7)],
        bones: vec![Bone::Child(1), Bone::Child(4), Bone::Child(7), Bone::Child(10)],
        midline: false,
    };

    let foot_rows = [
        (-0.05, 0.045, 0.035, 0.035),
        (0.02, 0.045, 0.04, 0.04),
        (0.12, 0.03, 0.045, 0.025),
        (0.20, 0.025, 0.04, 0.02),
    ];
    let foot = TubeSpec {
        stations: foot_rows.iter().map(|&(z, y, a, b)| st(0.10, leg_y(y), z, a * r, b * r)).collect(),
        u: [1.0, 0.0, 0.0],
        w: [0.0, 1.0, 0.0],
        joint_rings: vec![(2, 10)],
        bones: vec![Bone::Child(7), Bone::Child(10), Bone::Leaf(10, [0.0, -0.01, 0.08])],
        midline: false,
    };

    let arm_rows = [
        (0.08, 0.055, 0.055),
        (0.19, 0.055, 0.055),
        (0.30, 0.048, 0.048),
        (0.46, 0.038, 0.038),
        (0.58, 0.035, 0.035),
        (0.71, 0.028, 0.028),
        (0.76, 0.018, 0.042),
        (0.79, 0.015, 0.045),
        (0.86, 0.012, 0.04),
    ];
    let arm = TubeSpec {
        stations: arm_rows.iter().map(|&(x, a, b)| st(arm_x(x), 1.43, 0.0, a * r, b * r)).collect(),
        u: [0.0, 1.0, 0.0],
        w: [0.0, 0.0, 1.0],
        joint_rings: vec![(0, 13), (1, 16), (3, 18), (5, 20), (7, 22)],
        bones: vec![
            Bone::Child(13),
            Bone::Child(16),
            Bone::Child(18),
            Bone::Child(20),
            Bone::Child(22),
            Bone::Leaf(22, [0.08, 0.0, 0.0]),
        ],
        midline: false,
    };
    vec![torso, head, leg, foot, arm]
}

/// Ring counts and interpolation density, fixed once per model.
#[derive(Debug, Clone)]
struct TubeTopology {
    ring_size: usize,
    /// Sub-rings inserted after each station (except the last).
    subdivisions: Vec<usize>,
}

impl TubeTopology {
    fn rings(&self) -> usize {
        self.subdivisions.iter().sum::<usize>() + 1
    }

    fn vertices(&self) -> usize {
        self.rings() * self.ring_size + 2
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn topology_for(spec: &TubeSpec, h: f64) -> TubeTopology {
    let n = spec.stations.len() as f64;
    let perimeter = spec.stations.iter().map(|s| std::f64::consts::PI * (s.a + s.b)).sum::<f64>() / n;
    let ring_size = (4 * ((perimeter / (4.0 * h)).round() as usize)).max(8);
    let subdivisions =
        spec.stations.windows(2).map(|w| ((dist(w[0].center, w[1].center) / h).ceil() as usize).max(1)).collect();
    TubeTopology { ring_size, subdivisions }
}

/// Vertices of one tube plus the ring index of each station.
struct TubeMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    station_rings: Vec<usize>,
    ring_size: usize,
    rings: usize,
}

fn ring_angle(k: usize, n: usize) -> f64 {
    2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64
}

fn build_tube(spec: &TubeSpec, topo: &TubeTopology) -> TubeMesh {
    let n = topo.ring_size;
    let mut rings: Vec<Station> = Vec::with_capacity(topo.rings());
    let mut station_rings = Vec::with_capacity(spec.stations.len());
    for (i, s) in spec.stations.iter().enumerate() {
        station_rings.push(rings.len());
        rings.push(*s);
        if let (Some(next), Some(&sub)) = (spec.stations.get(i + 1), topo.subdivisions.get(i)) {
            for q in 1..sub {
                let t = q as f64 / sub as f64;
                let lerp = |a: f64, b: f64| a + (b - a) * t;
                rings.push(Station {
                    center: std::array::from_fn(|c| lerp(s.center[c], next.center[c])),
                    a: lerp(s.a, next.a),
                    b: lerp(s.b, next.b),
                });
            }
        }
    }
    let mut vertices = Vec::with_capacity(rings.len() * n + 2);
    for ring in &rings {
        for k in 0..n {
            let phi = ring_angle(k, n);
            let (cu, sw) = (ring.a * phi.cos(), ring.b * phi.sin());
            vertices.push(std::array::from_fn(|c| ring.center[c] + cu * spec.u[c] + sw * spec.w[c]));
        }
    }
    let cap = |ring: &Station, toward: &Station| -> [f64; 3] {
        let d = dist(ring.center, toward.center);
        let depth = 0.6 * ring.a.min(ring.b);
        std::array::from_fn(|c| ring.center[c] + (ring.center[c] - toward.center[c]) / d * depth)
    };
    let last = rings.len() - 1;
    vertices.push(cap(&rings[0], &rings[1]));
    vertices.push(cap(&rings[last], &rings[last - 1]));

    let idx = |ring: usize, k: usize| ring * n + k % n;
    let (p0, p1) = (rings.len() * n, rings.len() * n + 1);
    let mut faces = Vec::with_capacity(2 * n * rings.len());
    for i in 0..last {
        for k in 0..n {
            let (a, b, c, d) = (idx(i, k), idx(i, k + 1), idx(i + 1, k), idx(i + 1, k + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    for k in 0..n {
        faces.push([p0, idx(0, k + 1), idx(0, k)]);
        faces.push([p1, idx(last, k), idx(last, k + 1)]);
    }
    // Orient outward: positive signed volume about the tube centroid.
    let centroid: [f64; 3] =
        std::array::from_fn(|c| vertices.iter().map(|v| v[c]).sum::<f64>() / vertices.len() as f64);
    let volume: f64 = faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| Vec3::from(vertices[i]) - Vec3::from(centroid));
            a.dot(&b.cross(&c))
        })
        .sum();
    if volume < 0.0 {
        for f in &mut faces {
            f.swap(1, 2);
        }
    }
    TubeMesh { vertices, faces, station_rings, ring_size: n, rings: rings.len() }
}

fn mirror(p: [f64; 3]) -> [f64; 3] {
    [-p[0], p[1], p[2]]
}

/// Tube meshes assembled into one vertex array.
struct Assembly {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    /// Per vertex: owning part index into `parts`.
    part_of: Vec<usize>,
    parts: Vec<PartInfo>,
    symmetry_pairs: Vec<[usize; 2]>,
}

struct PartInfo {
    offset: usize,
    ring_size: usize,
    rings: usize,
    station_rings: Vec<usize>,
    joint_rings: Vec<(usize, usize)>,
    bones: Vec<Bone>,
}

impl PartInfo {
    fn ring(&self, station: usize) -> std::ops::Range<usize> {
        let start = self.offset + self.station_rings[station] * self.ring_size;
        start..start + self.ring_size
    }

    fn poles(&self) -> (usize, usize) {
        let base = self.offset + self.rings * self.ring_size;
        (base, base + 1)
    }
}

fn mirror_bone(b: &Bone) -> Bone {
    match *b {
        Bone::Child(j) => Bone::Child(MIRROR_JOINT[j]),
        Bone::Leaf(j, o) => Bone::Leaf(MIRROR_JOINT[j], mirror(o)),
    }
}

fn assemble(specs: &[TubeSpec], topos: &[TubeTopology]) -> Assembly {
    let mut out = Assembly {
        vertices: Vec::new(),
        faces: Vec::new(),
        part_of: Vec::new(),
        parts: Vec::new(),
        symmetry_pairs: Vec::new(),
    };
    for (spec, topo) in specs.iter().zip(topos) {
        let mesh = build_tube(spec, topo);
        let n = mesh.ring_size;
        let copies: &[bool] = if spec.midline { &[false] } else { &[false, true] };
        let left_offset = out.vertices.len();
        for &mirrored in copies {
            let offset = out.vertices.len();
            let part = out.parts.len();
            if mirrored {
                out.vertices.extend(mesh.vertices.iter().map(|&v| mirror(v)));
                out.faces.extend(mesh.faces.iter().map(|f| [f[0] + offset, f[2] + offset, f[1] + offset]));
                for i in 0..mesh.vertices.len() {
                    out.symmetry_pairs.push([left_offset + i, offset + i]);
                }
            } else {
                out.vertices.extend(mesh.vertices.iter().copied());
                out.faces.extend(mesh.faces.iter().map(|f| f.map(|i| i + offset)));
            }
            out.part_of.extend(std::iter::repeat_n(part, mesh.vertices.len()));
            let map_joint = |j: usize| if mirrored { MIRROR_JOINT[j] } else { j };
            out.parts.push(PartInfo {
                offset,
                ring_size: n,
                rings: mesh.rings,
                station_rings: mesh.station_rings.clone(),
                joint_rings: spec.joint_rings.iter().map(|&(s, j)| (s, map_joint(j))).collect(),
                bones: if mirrored { spec.bones.iter().map(mirror_bone).collect() } else { spec.bones.clone() },
            });
        }
        if spec.midline {
            // Ring angle φ mirrors to π − φ, i.e. index k to n/2 − 1 − k.
            for ring in 0..mesh.rings {
                for k in 0..n {
                    let m = (n / 2 + n - 1 - k) % n;
                    let (vk, vm) = (left_offset + ring * n + k, left_offset + ring * n + m);
                    if out.vertices[vk][0] > 0.0 {
                        out.symmetry_pairs.push([vk, vm]);
                    }
                }
            }
        }
    }
    out
}

fn segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let (p, a, b) = (Vec3::from(p), Vec3::from(a), Vec3::from(b));
    let e = b - a;
    let t = if e.norm_squared() > 0.0 { ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + e * t)).norm()
}

/// Inverse-distance (power 4) weights to the two nearest allowed bones.
fn skin_weights(asm: &Assembly, joints: &[[f64; 3]]) -> Vec<Vec<f64>> {
    asm.vertices
        .iter()
        .zip(&asm.part_of)
        .map(|(&v, &part)| {
            let mut cands: Vec<(f64, usize)> = asm.parts[part]
                .bones
                .iter()
                .map(|bone| match *bone {
                    Bone::Child(j) => {
                        let p = PARENTS[j] as usize;
                        (segment_distance(v, joints[p], joints[j]), p)
                    }
                    Bone::Leaf(j, o) => {
                        let end = std::array::from_fn(|c| joints[j][c] + o[c]);
                        (segment_distance(v, joints[j], end), j)
                    }
                })
                .collect();
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut row = vec![0.0; NUM_JOINTS];
            for &(d, j) in cands.iter().take(2) {
                row[j] += (d + 1e-4).powi(-4);
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= total);
            row
        })
        .collect()
}

fn vertex_normals(vertices: &[[f64; 3]], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut normals = vec![Vec3::zeros(); vertices.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| Vec3::from(vertices[i]));
        let n = (b - a).cross(&(c - a));
        for &i in f {
            normals[i] += n;
        }
    }
    normals.iter().map(|n| n.try_normalize(0.0).unwrap_or_else(Vec3::zeros)).collect()
}

/// Picks the edge length whose vertex count is closest to the target.
fn choose_resolution(specs: &[TubeSpec], target: usize) -> Vec<TubeTopology> {
    let count = |topos: &[TubeTopology]| -> usize {
        specs.iter().zip(topos).map(|(s, t)| t.vertices() * if s.midline { 1 } else { 2 }).sum()
    };
    let mut best: Option<(usize, Vec<TubeTopology>)> = None;
    for i in 0..600 {
        let h = 0.3 * (0.002f64 / 0.3).powf(i as f64 / 599.0);
        let topos: Vec<_> = specs.iter().map(|s| topology_for(s, h)).collect();
        let gap = count(&topos).abs_diff(target);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, topos));
        }
    }
    best.map(|(_, t)| t).unwrap_or_default()
}

/// Builds the humanoid with about `target_vertices` vertices and `num_betas`
/// shape directions, height-normalized.
pub fn build_procedural_model(target_vertices: usize, num_betas: usize) -> Result<ModelDefinition> {
    if target_vertices < MIN_VERTICES {
        return Err(Error::Configuration(format!(
            "vertex target {target_vertices} is below the minimum of {MIN_VERTICES}"
        )));
    }
    if num_betas == 0 {
        return Err(Error::Configuration("at least one shape direction is required".into()));
    }
    let base_specs = tube_specs(&Anatomy::default());
    let topos = choose_resolution(&base_specs, target_vertices);
    let asm = assemble(&base_specs, &topos);
    let nv = asm.vertices.len();

    let mut joint_regressor = vec![vec![0.0; nv]; NUM_JOINTS];
    for part in &asm.parts {
        for &(station, joint) in &part.joint_rings {
            let ring = part.ring(station);
            let w = 1.0 / ring.len() as f64;
            for v in ring {
                joint_regressor[joint][v] = w;
            }
        }
    }
    let joints: Vec<[f64; 3]> = joint_regressor
        .iter()
        .map(|row| {
            let mut acc = [0.0; 3];
            for (v, w) in row.iter().enumerate() {
                for (a, x) in acc.iter_mut().zip(&asm.vertices[v]) {
                    *a += w * x;
                }
            }
            acc
        })
        .collect();
    let skin = skin_weights(&asm, &joints);

    let mut keypoint_regressor = joint_regressor.clone();
    let head = &asm.parts[1];
    let mut top = vec![0.0; nv];
    top[head.poles().1] = 1.0;
    keypoint_regressor.push(top);

    let eye_ring = head.ring(5);
    let n = head.ring_size;
    let target_phi = std::f64::consts::FRAC_PI_2 - EYE_ANGLE;
    let k = (0..n)
        .min_by(|&a, &b| (ring_angle(a, n) - target_phi).abs().total_cmp(&(ring_angle(b, n) - target_phi).abs()))
        .unwrap_or(0);
    let eye_ids = vec![eye_ring.start + k, eye_ring.start + (n / 2 + n - 1 - k) % n];
    let ankle_ids: Vec<usize> = asm
        .parts
        .iter()
        .filter(|p| p.joint_rings.iter().any(|&(_, j)| j == 7 || j == 8))
        .flat_map(|p| {
            let (s, _) = *p.joint_rings.iter().find(|&&(_, j)| j == 7 || j == 8).expect("ankle ring");
            p.ring(s)
        })
        .collect();

    let shape_dirs = shape_directions(&asm, &topos, num_betas, &joints, &eye_ids, &ankle_ids);

    let def = ModelDefinition {
        version: MODEL_FORMAT_VERSION,
        num_vertices: nv,
        num_joints: NUM_JOINTS,
        num_keypoints: NUM_KEYPOINTS,
        num_betas,
        template: asm.vertices.clone(),
        faces: asm.faces.clone(),
        parents: PARENTS.to_vec(),
        shape_dirs,
        pose_dirs: vec![0.0; nv * 3 * 9 * (NUM_JOINTS - 1)],
        joint_regressor,
        skin_weights: skin,
        keypoint_regressor,
        symmetry_pairs: asm.symmetry_pairs.clone(),
        eye_ids,
        ankle_ids,
    };
    let def = normalize_height(&def)?;
    def.validate()?;
    Ok(def)
}

/// Flat `V×3×B` shape basis. Directions keep the eye-ankle span fixed by
/// removing their projection onto a uniform scaling about the pelvis.
fn shape_directions(
    asm: &Assembly,
    topos: &[TubeTopology],
    num_betas: usize,
    joints: &[[f64; 3]],
    eye_ids: &[usize],
    ankle_ids: &[usize],
) -> Vec<f64> {
    let nv = asm.vertices.len();
    let mesh_for = |an: &Anatomy| assemble(&tube_specs(an), topos).vertices;
    let mut dirs: Vec<Vec<[f64; 3]>> = Vec::with_capacity(num_betas);
    let h = 1e-3;
    for k in 0..num_betas.min(HANDCRAFTED) {
        let plus = mesh_for(&Anatomy::unit(k, h));
        let minus = mesh_for(&Anatomy::unit(k, -h));
        dirs.push((0..nv).map(|v| std::array::from_fn(|c| (plus[v][c] - minus[v][c]) / (2.0 * h))).collect());
    }
    let normals = vertex_normals(&asm.vertices, &asm.faces);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in HANDCRAFTED..num_betas {
        // Symmetric sum of Gaussian bumps along the normals.
        let bumps: Vec<([f64; 3], f64)> = (0..6)
            .map(|_| {
                let c = [rng.random_range(0.0..0.4), rng.random_range(0.0..1.8), rng.random_range(-0.1..0.1)];
                (c, rng.random_range(-0.012..0.012))
            })
            .collect();
        let field = |p: [f64; 3]| -> f64 {
            bumps
                .iter()
                .map(|(c, w)| {
                    let g = |q: [f64; 3]| (-(dist(q, *c).powi(2)) / (2.0 * 0.15f64.powi(2))).exp();
                    w * (g(p) + g(mirror(p)))
                })
                .sum()
        };
        dirs.push(
            (0..nv)
                .map(|v| {
                    let s = field(asm.vertices[v]);
                    std::array::from_fn(|c| s * normals[v][c])
                })
                .collect(),
        );
    }
    let mean_y = |m: &[[f64; 3]], ids: &[usize]| ids.iter().map(|&i| m[i][1]).sum::<f64>() / ids.len() as f64;
    let span = mean_y(&asm.vertices, eye_ids) - mean_y(&asm.vertices, ankle_ids);
    let pelvis = joints[0];
    for d in &mut dirs {
        let c = (mean_y(d, eye_ids) - mean_y(d, ankle_ids)) / span;
        for (v, p) in d.iter_mut().zip(&asm.vertices) {
            for k in 0..3 {
                v[k] -= c * (p[k] - pelvis[k]);
            }
        }
    }
    let mut flat = vec![0.0; nv * 3 * num_betas];
    for (k, d) in dirs.iter().enumerate() {
        for v in 0..nv {
            for c in 0..3 {
                flat[(v * 3 + c) * num_betas + k] = d[v][c];
            }
        }
    }
    flat
}

/// Outward unit normals of the model's template (area weighted).
pub fn template_normals(def: &ModelDefinition) -> Vec<Vec3> {
    vertex_normals(&def.template, &def.faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_valid_and_normalized() {
        let def = build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap();
        assert!((def.eye_ankle_span().unwrap() - 1.66).abs() < 1e-12);
        assert!(def.num_vertices.abs_diff(DEFAULT_VERTICES) < 100, "{}", def.num_vertices);
        for row in &def.skin_weights {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn small_targets_are_rejected() {
        assert!(matches!(build_procedural_model(199, 4), Err(Error::Configuration(_))));
        assert!(build_procedural_model(200, 1).is_ok());
    }
}
