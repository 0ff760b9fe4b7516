use bodyfit_core::body::{BodyModel, MAX_OFFSET_NORM};
use bodyfit_core::fit::{fit, refine, FitConfig, GroupKind, StopReason};
use bodyfit_core::objectives::{FrameObservation, ObjectiveSpec, TermKind};
use bodyfit_core::render::Camera;
use bodyfit_core::synth::{
    build_procedural_model, render_observations, synthesize_subject, ScenarioSpec, DEFAULT_BETAS, DEFAULT_VERTICES,
};

struct Problem {
    model: BodyModel,
    camera: Camera,
    observations: Vec<FrameObservation>,
}

fn problem(seed: u64, frames: usize) -> Problem {
    let model = BodyModel::new(build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap()).unwrap();
    let scenario = ScenarioSpec { seed, frames, resolution: 256, keypoint_noise: 1.0, ..Default::default() };
    let camera = scenario.camera().unwrap();
    let subject = synthesize_subject(&model, &scenario).unwrap();
    let (observations, _) = render_observations(&model, &camera, &subject, &scenario).unwrap();
    Problem { model, camera, observations }
}

fn short_config() -> FitConfig {
    let mut config = FitConfig::default();
    for s in &mut config.stages {
        s.steps = 15;
    }
    config
}

#[test]
fn best_so_far_never_increases() {
    let p = problem(4, 2);
    let r = fit(&p.model, &p.camera, &p.observations, &short_config()).unwrap();
    assert!(!r.diverged);
    for stage in &r.stages {
        let mut running = f64::INFINITY;
        for (v, b) in stage.values.iter().zip(&stage.best) {
            running = running.min(*v);
            assert_eq!(*b, running, "stage {}", stage.name);
        }
    }
}

#[test]
fn fits_are_bit_identical() {
    let p = problem(5, 2);
    let a = fit(&p.model, &p.camera, &p.observations, &short_config()).unwrap();
    let b = fit(&p.model, &p.camera, &p.observations, &short_config()).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.stage_params, b.stage_params);
    for (x, y) in a.stages.iter().zip(&b.stages) {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x.values), bits(&y.values));
    }
}

#[test]
fn frozen_groups_are_untouched() {
    let p = problem(6, 2);
    let start = fit(&p.model, &p.camera, &p.observations, &short_config()).unwrap().params;
    let frozen = [GroupKind::Shape, GroupKind::Poses];
    let r = refine(&p.model, &p.camera, &p.observations, &start, 10, &short_config(), &frozen).unwrap();
    assert_eq!(r.params.beta, start.beta);
    for (a, b) in r.params.frames.iter().zip(&start.frames) {
        assert_eq!(a.theta, b.theta);
    }
    assert_ne!(r.params.offsets, start.offsets, "free groups should move");

    let every = [GroupKind::Shape, GroupKind::Poses, GroupKind::Translations, GroupKind::Offsets];
    let r = refine(&p.model, &p.camera, &p.observations, &start, 10, &short_config(), &every).unwrap();
    assert_eq!(r.params, start);
    assert_eq!(r.stages[0].stop, StopReason::Skipped);
}

#[test]
fn offsets_stay_within_the_clamp() {
    let model = BodyModel::new(build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS).unwrap()).unwrap();
    // A heavily dilated mask rewards inflating the body, so offsets run
    // into the clamp instead of settling near zero.
    let scenario = ScenarioSpec { seed: 7, frames: 1, resolution: 256, mask_corruption: -40, ..Default::default() };
    let camera = scenario.camera().unwrap();
    let subject = synthesize_subject(&model, &scenario).unwrap();
    let (observations, truth) = render_observations(&model, &camera, &subject, &scenario).unwrap();
    let mut config = short_config();
    let stage = config.stages.last_mut().unwrap();
    stage.groups = vec![GroupKind::Offsets];
    stage.objective = ObjectiveSpec::single(TermKind::Silhouette);
    stage.step_sizes.offsets = 0.2;
    let mut start = truth.clone();
    start.offsets.iter_mut().for_each(|d| *d = [0.0; 3]);
    let r = refine(&model, &camera, &observations, &start, 20, &config, &[]).unwrap();
    let largest = r.params.offsets.iter().map(|d| d.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
    assert!(largest <= MAX_OFFSET_NORM * (1.0 + 1e-12), "{largest}");
    assert!(largest > 0.9 * MAX_OFFSET_NORM, "clamp never engaged: {largest}");
}

#[test]
fn more_frames_never_buy_more_steps_under_a_budget() {
    let mut steps = Vec::new();
    for frames in [1, 2, 4] {
        let p = problem(8, frames);
        let mut config = FitConfig::default();
        for s in &mut config.stages {
            s.steps = 100_000;
        }
        config.early_stop.patience = usize::MAX;
        config.budget_seconds = Some(1.5);
        let r = fit(&p.model, &p.camera, &p.observations, &config).unwrap();
        assert!(r.budget_exhausted);
        steps.push(r.executed_steps());
    }
    assert!(steps.windows(2).all(|w| w[1] <= w[0]), "{steps:?}");
}
