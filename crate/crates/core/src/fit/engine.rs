//! Staged optimization driver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::{FitConfig, GroupKind, StageConfig};
use super::init::init_poses;
use crate::body::{clamp_offsets, pose_mesh, BodyModel, FramePose, SubjectParams};
use crate::diff::{evaluate_with_gradient, Objective, ParamVector, OFFSETS};
use crate::error::{Error, Result};
use crate::objectives::{FrameObservation, ObjectiveContext};
use crate::render::{mask_iou, render_silhouette, Camera};
use crate::synth::MASK_TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStop,
    Budget,
    Diverged,
    /// Nothing to optimize: zero steps or every group frozen.
    Skipped,
}

/// Per-step record of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub name: String,
    /// Objective value of the iterate evaluated at each step, scored at the
    /// stage's final softness.
    pub values: Vec<f64>,
    /// Best value so far at each step.
    pub best: Vec<f64>,
    /// Render-pixel softness of the gradient at each step.
    pub tau: Vec<f64>,
    pub seconds: f64,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: SubjectParams,
    pub stages: Vec<StageTrace>,
    /// Best iterate of each stage, in stage order.
    pub stage_params: Vec<SubjectParams>,
    pub diverged: bool,
    pub budget_exhausted: bool,
    /// Final silhouette IoU per frame against the observed masks.
    pub iou: Vec<f64>,
}

impl FitResult {
    pub fn executed_steps(&self) -> usize {
        self.stages.iter().map(|s| s.values.len()).sum()
    }
}

/// Default silhouette render size for a capture camera: half its size.
pub fn default_render_size(camera: &Camera) -> [usize; 2] {
    [(camera.width / 2).max(8), (camera.height / 2).max(8)]
}

/// Initializes poses from keypoints, then runs every stage.
pub fn fit(
    model: &BodyModel,
    camera: &Camera,
    observations: &[FrameObservation],
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let poses = init_poses(model, camera, observations, config)?;
    let mut init = SubjectParams::neutral(model, observations.len());
    init.frames = poses;
    run_stages(model, camera, observations, config, init, &[])
}

/// Fits shape and offsets with the given per-frame poses held fixed.
pub fn fit_with_poses(
    model: &BodyModel,
    camera: &Camera,
    observations: &[FrameObservation],
    config: &FitConfig,
    poses: Vec<FramePose>,
) -> Result<FitResult> {
    let mut init = SubjectParams::neutral(model, observations.len());
    if poses.len() != observations.len() {
        return Err(Error::ContractViolation(format!("{} poses for {} observations", poses.len(), observations.len())));
    }
    init.frames = poses;
    run_stages(model, camera, observations, config, init, &[GroupKind::Poses, GroupKind::Translations])
}

/// Runs the final stage's objective for `steps` more steps from `params`.
pub fn refine(
    model: &BodyModel,
    camera: &Camera,
    observations: &[FrameObservation],
    params: &SubjectParams,
    steps: usize,
    config: &FitConfig,
    frozen: &[GroupKind],
) -> Result<FitResult> {
    let stage = config.refinement_stage().ok_or_else(|| Error::Configuration("no stages configured".into()))?;
    let single = FitConfig { stages: vec![StageConfig { steps, ..stage.clone() }], ..config.clone() };
    run_stages(model, camera, observations, &single, params.clone(), frozen)
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::BehindCamera { .. } | Error::InvalidArgument(_))
}

/// Executes the configured stages from `init`. Groups in `frozen` are never
/// modified. Each stage starts from the previous stage's best iterate.
pub fn run_stages(
    model: &BodyModel,
    camera: &Camera,
    observations: &[FrameObservation],
    config: &FitConfig,
    init: SubjectParams,
    frozen: &[GroupKind],
) -> Result<FitResult> {
    config.validate()?;
    if observations.is_empty() {
        return Err(Error::Configuration("fitting needs at least one observation".into()));
    }
    init.validate(model)?;
    let frames = observations.len();
    if init.frames.len() != frames {
        return Err(Error::ContractViolation(format!(
            "{} initial frames for {frames} observations",
            init.frames.len()
        )));
    }
    let [rw, rh] = config.render_resolution.unwrap_or_else(|| default_render_size(camera));
    let tau_scale = rh as f64 / camera.height as f64;
    let mut ctx = ObjectiveContext::new(model, frames)?.with_observations(*camera, observations, (rw, rh))?;

    let start = Instant::now();
    let over_budget = || config.budget_seconds.is_some_and(|b| start.elapsed().as_secs_f64() >= b);
    let mut current = init;
    let mut traces = Vec::new();
    let mut stage_params = Vec::new();
    let mut diverged = false;
    let mut budget_exhausted = false;

    for stage in &config.stages {
        if diverged || budget_exhausted {
            break;
        }
        let stage_start = Instant::now();
        let free: Vec<String> =
            stage.groups.iter().filter(|g| !frozen.contains(g)).flat_map(|g| g.group_names(frames)).collect();
        let mut trace = StageTrace {
            name: stage.name.clone(),
            values: Vec::new(),
            best: Vec::new(),
            tau: Vec::new(),
            seconds: 0.0,
            stop: StopReason::Skipped,
        };
        if free.is_empty() || stage.steps == 0 {
            traces.push(trace);
            stage_params.push(current.clone());
            continue;
        }
        let spec = &stage.objective;
        let full = current.to_params()?;
        let mut x = ParamVector::new();
        for g in full.groups() {
            if free.contains(&g.name) {
                x.push(g.name.clone(), g.values.clone())?;
            }
        }
        let step_sizes = x
            .groups()
            .iter()
            .map(|g| stage.step_sizes.for_kind(GroupKind::of_group(&g.name).expect("known group")))
            .collect();
        let mut adam = Adam::new(config.adam.clone(), &x, step_sizes);
        let mut best: Option<(f64, ParamVector)> = None;
        let mut stall = 0;
        let final_tau = stage.tau[1] * tau_scale;
        trace.stop = StopReason::Completed;
        for step in 0..stage.steps {
            if over_budget() {
                trace.stop = StopReason::Budget;
                budget_exhausted = true;
                break;
            }
            let tau = stage.tau_at(step) * tau_scale;
            ctx.set_tau(tau)?;
            let evaluated = evaluate_with_gradient(&ctx.compose(spec, &current, &free)?, &x).and_then(|r| {
                // Values under different softness are not comparable, so an
                // annealed stage scores every iterate at its final softness.
                if tau == final_tau {
                    return Ok((r.value, r));
                }
                ctx.set_tau(final_tau)?;
                let score = ctx.compose(spec, &current, &free)?.value(&x)?;
                Ok((score, r))
            });
            let (value, report) = match evaluated {
                Ok((v, r)) if v.is_finite() && r.value.is_finite() && r.gradient.all_finite() => (v, r),
                Ok(_) => {
                    trace.stop = StopReason::Diverged;
                    break;
                }
                Err(e) if is_divergence(&e) => {
                    log::warn!("stage {}: diverged at step {step}: {e}", stage.name);
                    trace.stop = StopReason::Diverged;
                    break;
                }
                Err(e) => return Err(e),
            };
            let previous = best.as_ref().map_or(f64::INFINITY, |(b, _)| *b);
            if value < previous {
                best = Some((value, x.clone()));
            }
            let best_value = previous.min(value);
            trace.values.push(value);
            trace.best.push(best_value);
            trace.tau.push(tau);
            if previous.is_finite() && previous - best_value < config.early_stop.tolerance {
                stall += 1;
                if stall >= config.early_stop.patience {
                    trace.stop = StopReason::EarlyStop;
                    break;
                }
            } else {
                stall = 0;
            }
            adam.step(&mut x, &report.gradient, stage.step_scale(step));
            if let Some(d) = x.get_mut(OFFSETS) {
                clamp_offsets(d);
            }
            if !x.all_finite() {
                trace.stop = StopReason::Diverged;
                break;
            }
        }
        diverged |= trace.stop == StopReason::Diverged;
        if let Some((_, b)) = best {
            current = ctx.compose(spec, &current, &free)?.merged(&b)?;
        }
        trace.seconds = stage_start.elapsed().as_secs_f64();
        log::info!(
            "stage {}: {} steps, best {:.6e}, {:.1}s ({:?})",
            stage.name,
            trace.values.len(),
            trace.best.last().copied().unwrap_or(f64::NAN),
            trace.seconds,
            trace.stop
        );
        traces.push(trace);
        stage_params.push(current.clone());
    }
    let iou = silhouette_ious(model, camera, &current, observations)?;
    Ok(FitResult { params: current, stages: traces, stage_params, diverged, budget_exhausted, iou })
}

/// IoU between each observed mask and the subject rendered at the capture
/// resolution.
pub fn silhouette_ious(
    model: &BodyModel,
    camera: &Camera,
    params: &SubjectParams,
    observations: &[FrameObservation],
) -> Result<Vec<f64>> {
    observations
        .iter()
        .enumerate()
        .map(|(f, obs)| {
            let posed = pose_mesh(model, params, f)?;
            let img = render_silhouette(camera, &posed, model.faces(), MASK_TAU)?;
            mask_iou(&img, &obs.mask)
        })
        .collect()
}
