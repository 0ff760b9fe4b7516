//! Synthetic subjects, scenarios and evaluation.

mod bundle;
mod metric;
mod obj;
mod procedural;
mod scenario;
mod unit_model;

pub use bundle::{
    frame_file_name, frame_path, read_json, synthesize_bundle, synthesize_bundle_with, write_json, Bundle, FRAMES_DIR,
    KEYPOINTS_FILE, MODEL_FILE, SCENARIO_FILE, SUBJECT_FILE,
};
pub use metric::{
    bidirectional_distance_stats, bidirectional_surface_error, evaluate_fit, point_to_surface_distance,
    point_to_surface_distance_brute, point_triangle_distance, pose_normalized_meshes, DistanceStats, EvaluationReport,
    MeshIndex,
};
pub use obj::{obj_string, parse_obj, read_obj, write_obj};
pub use procedural::{
    build_procedural_model, template_normals, BARE_JOINTS, DEFAULT_BETAS, DEFAULT_VERTICES, HEAD_TOP_KEYPOINT,
    MIN_VERTICES, MIRROR_JOINT, NUM_JOINTS, NUM_KEYPOINTS, PARENTS,
};
pub use scenario::{
    a_pose, make_turnaround, morph, render_observations, root_rotation, root_theta, root_yaw, sample_subject,
    synthesize_subject, yaw_difference, ScenarioSpec, A_POSE, MASK_TAU,
};
pub use unit_model::unit_model;
