use bodyfit_core::body::{normalize_height, BodyModel, REFERENCE_SPAN_METERS};
use bodyfit_core::certify::forward_model_oracles;
use bodyfit_core::synth::{build_procedural_model, synthesize_subject, ScenarioSpec, DEFAULT_BETAS, DEFAULT_VERTICES};

fn default_model() -> BodyModel {
    BodyModel::new(build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap()).unwrap()
}

#[test]
fn forward_identities_hold_for_many_seeds() {
    let model = default_model();
    for seed in 0..100 {
        let r = forward_model_oracles(&model, seed).unwrap();
        assert!(r.passed(), "seed {seed}: {r:?}");
    }
}

#[test]
fn height_normalization_is_idempotent() {
    let mut def = build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap();
    for v in &mut def.template {
        for x in v.iter_mut() {
            *x *= 1.37;
        }
    }
    let once = normalize_height(&def).unwrap();
    assert!((once.eye_ankle_span().unwrap() - REFERENCE_SPAN_METERS).abs() <= 1e-12);
    let twice = normalize_height(&once).unwrap();
    let max = once.template.iter().zip(&twice.template).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()));
    assert!(max.fold(0.0, f64::max) <= 1e-12);
}

#[test]
fn synthesized_subjects_are_valid() {
    let model = default_model();
    for seed in 0..20 {
        let scenario = ScenarioSpec { seed, ..Default::default() };
        let s = synthesize_subject(&model, &scenario).unwrap();
        s.validate(&model).unwrap();
        assert_eq!(s.frames.len(), scenario.frames);
    }
}
