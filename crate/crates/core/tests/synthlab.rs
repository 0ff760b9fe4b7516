use bodyfit_core::body::BodyModel;
use bodyfit_core::fit::{fit, FitConfig};
use bodyfit_core::synth::{
    build_procedural_model, evaluate_fit, render_observations, synthesize_bundle_with, synthesize_subject, Bundle,
    ScenarioSpec, DEFAULT_BETAS, DEFAULT_VERTICES,
};

fn default_model() -> BodyModel {
    BodyModel::new(build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap()).unwrap()
}

#[test]
fn generator_is_deterministic() {
    let model = default_model();
    let scenario = ScenarioSpec { seed: 13, frames: 3, resolution: 128, keypoint_noise: 2.0, ..Default::default() };
    let a = synthesize_bundle_with(model.clone(), &scenario).unwrap();
    let b = synthesize_bundle_with(model.clone(), &scenario).unwrap();
    assert_eq!(a.ground_truth, b.ground_truth);
    assert_eq!(a.observations, b.observations);

    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    let back = Bundle::read(dir.path()).unwrap();
    assert_eq!(back.observations, a.observations);
    assert_eq!(back.ground_truth, a.ground_truth);

    let other = synthesize_bundle_with(model, &ScenarioSpec { seed: 14, ..scenario }).unwrap();
    assert_ne!(other.ground_truth, a.ground_truth);
}

#[test]
fn model_building_is_deterministic() {
    let a = build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap();
    let b = build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn heavier_mask_erosion_gives_worse_fits() {
    let model = default_model();
    let mut config = FitConfig::default();
    for s in &mut config.stages {
        s.steps = s.steps.div_ceil(2);
    }
    let seeds = 10;
    let mut means = Vec::new();
    for radius in [0, 3, 6] {
        let mut total = 0.0;
        for seed in 0..seeds {
            let scenario =
                ScenarioSpec { seed, frames: 2, resolution: 256, mask_corruption: radius, ..Default::default() };
            let camera = scenario.camera().unwrap();
            let subject = synthesize_subject(&model, &scenario).unwrap();
            let (obs, truth) = render_observations(&model, &camera, &subject, &scenario).unwrap();
            let r = fit(&model, &camera, &obs, &config).unwrap();
            total += evaluate_fit(&model, &camera, &r.params, &truth, &obs).unwrap().mean_mm;
        }
        means.push(total / seeds as f64);
    }
    assert!(means[0] <= means[1] && means[1] <= means[2], "mean error by radius: {means:?}");
}
