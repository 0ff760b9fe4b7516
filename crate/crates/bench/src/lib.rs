//! Benchmark fixtures; the benchmarks live under `benches/`.

use bodyfit_core::body::{pose_mesh, BodyModel, SubjectParams};
use bodyfit_core::diff::Vec3;
use bodyfit_core::fit::FitConfig;
use bodyfit_core::objectives::{FrameObservation, ObjectiveContext, ObjectiveSpec};
use bodyfit_core::render::Camera;
use bodyfit_core::synth::{
    build_procedural_model, render_observations, synthesize_subject, ScenarioSpec, DEFAULT_BETAS, DEFAULT_VERTICES,
};
use bodyfit_core::Result;

/// One synthetic subject on the default model, captured at `resolution`.
pub struct Fixture {
    pub model: BodyModel,
    pub camera: Camera,
    pub subject: SubjectParams,
    pub observations: Vec<FrameObservation>,
    /// Frame 0 posed.
    pub posed: Vec<Vec3>,
}

impl Fixture {
    pub fn new(frames: usize, resolution: usize) -> Result<Self> {
        let model = BodyModel::new(build_procedural_model(DEFAULT_VERTICES, DEFAULT_BETAS)?)?;
        let scenario = ScenarioSpec { seed: 1, frames, resolution, keypoint_noise: 1.0, ..Default::default() };
        let camera = scenario.camera()?;
        let subject = synthesize_subject(&model, &scenario)?;
        let (observations, _) = render_observations(&model, &camera, &subject, &scenario)?;
        let posed = pose_mesh(&model, &subject, 0)?;
        Ok(Self { model, camera, subject, observations, posed })
    }

    /// Objective context rendering at `render` pixels square.
    pub fn context(&self, render: usize) -> Result<ObjectiveContext<'_>> {
        ObjectiveContext::new(&self.model, self.observations.len())?.with_observations(
            self.camera,
            &self.observations,
            (render, render),
        )
    }

    /// The default configuration's final-stage objective.
    pub fn refinement_spec() -> ObjectiveSpec {
        FitConfig::default().refinement_stage().expect("default has stages").objective.clone()
    }
}
