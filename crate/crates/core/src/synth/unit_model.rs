//! A three-bone stack of boxes with random blendshapes. Small enough for
//! dense oracles and the only shipped model with non-zero pose correctives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::{ModelDefinition, MODEL_FORMAT_VERSION};

const BOX_FACES: [[usize; 3]; 12] = [
    [0, 2, 1],
    [1, 2, 3],
    [4, 5, 6],
    [5, 7, 6],
    [0, 1, 4],
    [1, 5, 4],
    [2, 6, 3],
    [3, 6, 7],
    [0, 4, 2],
    [2, 4, 6],
    [1, 3, 5],
    [3, 7, 5],
];

/// Builds the unit model. `rigid` makes every skin-weight row one-hot.
pub fn unit_model(seed: u64, with_pose_dirs: bool, rigid: bool) -> ModelDefinition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_joints = 3;
    let num_betas = 2;
    let (w, d, h) = (0.1, 0.08, 0.5);
    let mut template = Vec::new();
    for bone in 0..num_joints {
        let y0 = bone as f64 * h;
        for corner in 0..8 {
            let x = if corner & 1 == 0 { w } else { -w };
            let y = if corner & 2 == 0 { y0 } else { y0 + h };
            let z = if corner & 4 == 0 { d } else { -d };
            template.push([x, y, z]);
        }
    }
    let nv = template.len();
    let faces = (0..num_joints)
        .flat_map(|b| BOX_FACES.iter().map(move |f| [f[0] + 8 * b, f[1] + 8 * b, f[2] + 8 * b]))
        .collect();

    let mut joint_regressor = vec![vec![0.0; nv]; num_joints];
    let mut keypoint_regressor = vec![vec![0.0; nv]; num_joints];
    for b in 0..num_joints {
        for c in [0, 1, 4, 5] {
            joint_regressor[b][8 * b + c] = 0.25;
        }
        for c in 0..8 {
            keypoint_regressor[b][8 * b + c] = 0.125;
        }
    }
    let skin_weights = (0..nv)
        .map(|v| {
            let own = v / 8;
            if rigid {
                let mut row = vec![0.0; num_joints];
                row[own] = 1.0;
                return row;
            }
            let mut row: Vec<f64> = (0..num_joints)
                .map(|j| if j == own { 2.0 + rng.random::<f64>() } else { rng.random::<f64>() })
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            row
        })
        .collect();
    let shape_dirs = (0..nv * 3 * num_betas).map(|_| rng.random_range(-0.05..0.05)).collect();
    let nb = 9 * (num_joints - 1);
    let pose_dirs =
        (0..nv * 3 * nb).map(|_| if with_pose_dirs { rng.random_range(-0.02..0.02) } else { 0.0 }).collect();
    let symmetry_pairs = (0..nv).step_by(2).map(|v| [v, v + 1]).collect();
    ModelDefinition {
        version: MODEL_FORMAT_VERSION,
        num_vertices: nv,
        num_joints,
        num_keypoints: num_joints,
        num_betas,
        template,
        faces,
        parents: vec![-1, 0, 1],
        shape_dirs,
        pose_dirs,
        joint_regressor,
        skin_weights,
        keypoint_regressor,
        symmetry_pairs,
        eye_ids: vec![8 * (num_joints - 1) + 2, 8 * (num_joints - 1) + 3],
        ankle_ids: vec![0, 1],
    }
}
