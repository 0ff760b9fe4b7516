use bodyfit_core::body::BodyModel;
use bodyfit_core::certify::distance_oracle;
use bodyfit_core::synth::{
    build_procedural_model, evaluate_fit, render_observations, synthesize_subject, ScenarioSpec, DEFAULT_BETAS,
    DEFAULT_VERTICES,
};

fn default_model() -> BodyModel {
    BodyModel::new(build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap()).unwrap()
}

#[test]
fn distance_index_agrees_with_brute_force() {
    let model = default_model();
    for seed in 0..5 {
        let r = distance_oracle(&model, seed, 1000).unwrap();
        assert!(r.max_abs_difference <= 1e-9, "seed {seed}: {r:?}");
        assert!(r.symmetric, "seed {seed}");
    }
}

#[test]
fn ground_truth_scores_exactly_zero() {
    let model = default_model();
    for seed in 0..100 {
        let scenario = ScenarioSpec { seed, frames: 1, resolution: 64, ..Default::default() };
        let camera = scenario.camera().unwrap();
        let subject = synthesize_subject(&model, &scenario).unwrap();
        let (obs, truth) = render_observations(&model, &camera, &subject, &scenario).unwrap();
        let r = evaluate_fit(&model, &camera, &truth, &truth, &obs).unwrap();
        assert_eq!((r.mean_mm, r.std_mm, r.max_mm), (0.0, 0.0, 0.0), "seed {seed}");
    }
}
