use std::sync::Mutex;

use rayon::prelude::*;

use crate::body::{
    joints_from_body, keypoints_backward, keypoints_unchecked, shape_blend_backward, shape_blend_unchecked,
    skin_backward, skin_forward, BodyModel, SubjectParams,
};
use crate::diff::{rodrigues_unchecked, GradientReport, Layout, Mat3, Objective, ParamVector, Vec3};
use crate::error::{ensure, Error, Result};
use crate::objectives::observation::FrameObservation;
use crate::objectives::spec::{ObjectiveSpec, TermKind};
use crate::render::{render_backward, render_forward, render_forward_update, Camera, RenderState, MIN_DEPTH};

struct Target {
    tpose: Vec<Vec3>,
    body: Vec<Vec3>,
    posed: Vec<Vec<Vec3>>,
    keypoints: Vec<Vec<Vec3>>,
    rotations: Vec<Vec<Mat3>>,
    trans: Vec<Vec3>,
}

struct Observed<'a> {
    camera: Camera,
    render_camera: Camera,
    frames: &'a [FrameObservation],
    /// Masks resampled to the render resolution.
    masks: Vec<Vec<f64>>,
}

/// Everything fixed across evaluations of a fit problem: the model, the
/// observations (with masks pre-resampled to the render size), optional
/// ground truth and the silhouette softness.
pub struct ObjectiveContext<'a> {
    model: &'a BodyModel,
    num_frames: usize,
    observed: Option<Observed<'a>>,
    target: Option<Target>,
    tau: f64,
}

impl<'a> ObjectiveContext<'a> {
    pub fn new(model: &'a BodyModel, num_frames: usize) -> Result<Self> {
        ensure(num_frames >= 1, || "a fit problem needs at least one frame".into())?;
        Ok(Self { model, num_frames, observed: None, target: None, tau: 2.0 })
    }

    /// Attaches observations captured by `camera`; silhouettes are compared at
    /// `render_size` (width, height).
    pub fn with_observations(
        mut self,
        camera: Camera,
        frames: &'a [FrameObservation],
        render_size: (usize, usize),
    ) -> Result<Self> {
        ensure(frames.len() == self.num_frames, || {
            format!("{} observations for {} frames", frames.len(), self.num_frames)
        })?;
        camera.validate()?;
        for obs in frames {
            obs.validate(self.model, &camera)?;
        }
        let render_camera = camera.scaled_to(render_size.0, render_size.1);
        render_camera.validate()?;
        let masks = frames.iter().map(|o| o.mask.resample_area(render_size.0, render_size.1).data().to_vec()).collect();
        self.observed = Some(Observed { camera, render_camera, frames, masks });
        Ok(self)
    }

    pub fn with_target(mut self, target: &SubjectParams) -> Result<Self> {
        target.validate(self.model)?;
        ensure(target.frames.len() == self.num_frames, || {
            format!("target has {} frames, problem has {}", target.frames.len(), self.num_frames)
        })?;
        let model = self.model;
        let body = shape_blend_unchecked(model, &target.beta);
        let offsets = target.offsets_vec();
        let joints = joints_from_body(model, &body);
        let mut posed = Vec::with_capacity(self.num_frames);
        let mut keypoints = Vec::with_capacity(self.num_frames);
        let mut rotations = Vec::with_capacity(self.num_frames);
        let mut trans = Vec::with_capacity(self.num_frames);
        for pose in &target.frames {
            let sk = skin_forward(model, &body, &joints, &offsets, &pose.thetas(), pose.translation());
            keypoints.push(keypoints_unchecked(model, &sk.vertices));
            rotations.push(pose.thetas().iter().map(rodrigues_unchecked).collect());
            posed.push(sk.vertices);
            trans.push(pose.translation());
        }
        let tpose = body.iter().zip(&offsets).map(|(b, d)| b + d).collect();
        self.target = Some(Target { tpose, body, posed, keypoints, rotations, trans });
        Ok(self)
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.set_tau(tau)?;
        Ok(self)
    }

    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("blur radius must be positive, got {tau}")));
        }
        self.tau = tau;
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn model(&self) -> &BodyModel {
        self.model
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Builds a weighted objective over the `free` parameter groups; all
    /// other groups are held at their values in `base`.
    pub fn compose(
        &self,
        spec: &ObjectiveSpec,
        base: &SubjectParams,
        free: &[String],
    ) -> Result<ComposedObjective<'_>> {
        let terms = spec.resolve()?;
        for (kind, _) in &terms {
            if kind.supervised() && self.target.is_none() {
                return Err(Error::Configuration(format!("term {kind} needs ground-truth parameters")));
            }
            let observational = matches!(kind, TermKind::Silhouette | TermKind::Keypoints2d | TermKind::Anchors);
            if observational && self.observed.is_none() {
                return Err(Error::Configuration(format!("term {kind} needs observations")));
            }
        }
        let frames = if spec.frames.is_empty() { (0..self.num_frames).collect() } else { spec.frames.clone() };
        if let Some(&bad) = frames.iter().find(|&&f| f >= self.num_frames) {
            return Err(Error::Configuration(format!(
                "objective frame {bad} out of range ({} frames)",
                self.num_frames
            )));
        }
        base.validate(self.model)?;
        ensure(base.frames.len() == self.num_frames, || {
            format!("parameters have {} frames, problem has {}", base.frames.len(), self.num_frames)
        })?;
        let full = base.to_params()?;
        let mut layout = Vec::with_capacity(free.len());
        for g in full.groups() {
            if free.contains(&g.name) {
                layout.push((g.name.clone(), g.values.len()));
            }
        }
        for name in free {
            ensure(full.get(name).is_some(), || format!("unknown parameter group {name}"))?;
        }
        let renders = (0..self.num_frames).map(|_| Mutex::new(None)).collect();
        Ok(ComposedObjective { ctx: self, terms, frames, base: full, layout, renders })
    }

    /// Objective over every parameter group.
    pub fn compose_all(&self, spec: &ObjectiveSpec, base: &SubjectParams) -> Result<ComposedObjective<'_>> {
        let free: Vec<String> = base.to_params()?.layout().into_iter().map(|(n, _)| n).collect();
        self.compose(spec, base, &free)
    }
}

/// Weighted sum of loss terms, differentiable in its free parameter groups.
pub struct ComposedObjective<'c> {
    ctx: &'c ObjectiveContext<'c>,
    terms: Vec<(TermKind, f64)>,
    frames: Vec<usize>,
    base: ParamVector,
    layout: Layout,
    /// Last full silhouette render per frame. Value-only evaluations that
    /// move a few vertices (finite differences over offsets) patch it
    /// instead of rasterizing every face.
    renders: Vec<Mutex<Option<RenderState>>>,
}

struct FrameGrad {
    value: f64,
    rest: Vec<Vec3>,
    body: Vec<Vec3>,
    theta: Vec<Vec3>,
    trans: Vec3,
}

impl ComposedObjective<'_> {
    pub fn terms(&self) -> &[(TermKind, f64)] {
        &self.terms
    }

    /// Full parameter set with the free groups taken from `params`.
    pub fn merged(&self, params: &ParamVector) -> Result<SubjectParams> {
        ensure(params.layout() == self.layout, || {
            format!("parameter layout {:?} does not match objective layout {:?}", params.layout(), self.layout)
        })?;
        let mut full = self.base.clone();
        for g in params.groups() {
            if let Some(dst) = full.get_mut(&g.name) {
                dst.copy_from_slice(&g.values);
            }
        }
        SubjectParams::from_params(&full, self.ctx.num_frames)
    }

    fn active(&self, kind: TermKind) -> Option<f64> {
        self.terms.iter().filter(|(k, w)| *k == kind && *w > 0.0).map(|(_, w)| *w).reduce(|a, b| a + b)
    }

    fn evaluate(&self, params: &ParamVector, want_grad: bool) -> Result<(f64, Option<ParamVector>)> {
        let est = self.merged(params)?;
        if !params.all_finite() {
            return Err(Error::InvalidArgument("parameters contain non-finite values".into()));
        }
        let model = self.ctx.model;
        let nv = model.num_vertices();
        let body = shape_blend_unchecked(model, &est.beta);
        let offsets = est.offsets_vec();
        let joints = joints_from_body(model, &body);

        let mut value = 0.0;
        let mut g_body = vec![Vec3::zeros(); nv];
        let mut g_offsets = vec![Vec3::zeros(); nv];
        if let Some(w) = self.active(TermKind::Tpose) {
            let target = &self.target().tpose;
            let tpose: Vec<Vec3> = body.iter().zip(&offsets).map(|(b, d)| b + d).collect();
            let mut g = vec![Vec3::zeros(); nv];
            value += w * mean_squared(&tpose, target, want_grad.then_some((w, g.as_mut_slice())));
            for v in 0..nv {
                g_body[v] += g[v];
                g_offsets[v] += g[v];
            }
        }
        if let Some(w) = self.active(TermKind::Undressed) {
            value += w * mean_squared(&body, &self.target().body, want_grad.then_some((w, g_body.as_mut_slice())));
        }
        if let Some(w) = self.active(TermKind::Laplacian) {
            value += w * laplacian(model, &offsets, want_grad.then_some((w, g_offsets.as_mut_slice())));
        }
        if let Some(w) = self.active(TermKind::Symmetry) {
            value += w * symmetry(model, &offsets, want_grad.then_some((w, g_offsets.as_mut_slice())))?;
        }

        let per_frame = self.terms.iter().any(|(k, w)| k.per_frame() && *w > 0.0);
        let mut g_theta = vec![Vec::new(); self.ctx.num_frames];
        let mut g_trans = vec![Vec3::zeros(); self.ctx.num_frames];
        if per_frame {
            let results: Vec<FrameGrad> = self
                .frames
                .par_iter()
                .map(|&f| self.frame(&est, f, &body, &joints, &offsets, want_grad))
                .collect::<Result<_>>()?;
            for (&f, r) in self.frames.iter().zip(results) {
                value += r.value;
                if want_grad {
                    for v in 0..nv {
                        g_body[v] += r.body[v];
                        g_offsets[v] += r.rest[v];
                    }
                    if g_theta[f].is_empty() {
                        g_theta[f] = r.theta;
                    } else {
                        for (a, b) in g_theta[f].iter_mut().zip(&r.theta) {
                            *a += b;
                        }
                    }
                    g_trans[f] += r.trans;
                }
            }
        }
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("objective evaluated to {value}")));
        }
        if !want_grad {
            return Ok((value, None));
        }

        let mut g_beta = vec![0.0; model.num_betas()];
        shape_blend_backward(model, &g_body, &mut g_beta);
        let mut full = self.base.zeros_like();
        full.get_mut(crate::diff::SHAPE).expect("shape group").copy_from_slice(&g_beta);
        let go = full.get_mut(crate::diff::OFFSETS).expect("offsets group");
        for (v, g) in g_offsets.iter().enumerate() {
            go[3 * v..3 * v + 3].copy_from_slice(g.as_slice());
        }
        for f in 0..self.ctx.num_frames {
            if !g_theta[f].is_empty() {
                let gp = full.get_mut(&crate::diff::pose_group(f)).expect("pose group");
                for (j, g) in g_theta[f].iter().enumerate() {
                    gp[3 * j..3 * j + 3].copy_from_slice(g.as_slice());
                }
            }
            full.get_mut(&crate::diff::trans_group(f)).expect("trans group").copy_from_slice(g_trans[f].as_slice());
        }
        let mut grad = params.zeros_like();
        for i in 0..grad.groups().len() {
            let name = grad.groups()[i].name.clone();
            let src = full.require(&name)?.to_vec();
            grad.get_mut(&name).expect("free group").copy_from_slice(&src);
        }
        if !grad.all_finite() {
            return Err(Error::InvalidArgument("gradient contains non-finite values".into()));
        }
        Ok((value, Some(grad)))
    }

    fn target(&self) -> &Target {
        self.ctx.target.as_ref().expect("checked at compose")
    }

    fn observed(&self) -> &Observed<'_> {
        self.ctx.observed.as_ref().expect("checked at compose")
    }

    fn render(&self, f: usize, cam: &Camera, vertices: &[Vec3], want_grad: bool) -> Result<RenderState> {
        let faces = self.ctx.model.faces();
        let tau = self.ctx.tau;
        let mut cached = self.renders[f].lock().unwrap_or_else(|e| e.into_inner());
        if !want_grad {
            if let Some(base) = cached.as_ref() {
                if let Some(state) = render_forward_update(cam, vertices, faces, tau, base)? {
                    return Ok(state);
                }
            }
        }
        let state = render_forward(cam, vertices, faces, tau)?;
        *cached = Some(state.clone());
        Ok(state)
    }

    fn frame(
        &self,
        est: &SubjectParams,
        f: usize,
        body: &[Vec3],
        joints: &[Vec3],
        offsets: &[Vec3],
        want_grad: bool,
    ) -> Result<FrameGrad> {
        let model = self.ctx.model;
        let nv = model.num_vertices();
        let pose = &est.frames[f];
        let sk = skin_forward(model, body, joints, offsets, &pose.thetas(), pose.translation());
        let mut value = 0.0;
        let mut gv = vec![Vec3::zeros(); nv];
        let mut g_rot: Option<Vec<Mat3>> = None;
        let mut g_trans_direct = Vec3::zeros();

        if let Some(w) = self.active(TermKind::Posed) {
            value +=
                w * mean_squared(&sk.vertices, &self.target().posed[f], want_grad.then_some((w, gv.as_mut_slice())));
        }
        if let Some(w) = self.active(TermKind::Silhouette) {
            let obs = self.observed();
            let cam = &obs.render_camera;
            let state = self.render(f, cam, &sk.vertices, want_grad)?;
            let mask = &obs.masks[f];
            let n = mask.len() as f64;
            let diff: Vec<f64> = state.image.data().iter().zip(mask).map(|(a, b)| a - b).collect();
            value += w * diff.iter().map(|d| d * d).sum::<f64>() / n;
            if want_grad {
                let grad_image: Vec<f64> = diff.iter().map(|d| 2.0 * w * d / n).collect();
                let g = render_backward(cam, &sk.vertices, model.faces(), self.ctx.tau, &state, &grad_image);
                for (a, b) in gv.iter_mut().zip(&g) {
                    *a += b;
                }
            }
        }
        let w3 = self.active(TermKind::Keypoints3d);
        let w2 = self.active(TermKind::Keypoints2d);
        if w3.is_some() || w2.is_some() {
            let kp = keypoints_unchecked(model, &sk.vertices);
            let mut gk = vec![Vec3::zeros(); kp.len()];
            if let Some(w) = w3 {
                value +=
                    w * mean_squared(&kp, &self.target().keypoints[f], want_grad.then_some((w, gk.as_mut_slice())));
            }
            if let Some(w) = w2 {
                let obs = self.observed();
                let targets = &obs.frames[f].keypoints;
                let total: f64 = targets.iter().map(|t| t[2]).sum();
                if !(total > 0.0) {
                    return Err(Error::DegenerateObservation(format!("frame {f}: every keypoint has zero confidence")));
                }
                let rows: Vec<(Vec3, [f64; 3])> = kp.iter().copied().zip(targets.iter().copied()).collect();
                let (v, g) = projected_error(&obs.camera, &rows, total, w, want_grad)?;
                value += w * v;
                for (a, b) in gk.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            if want_grad {
                keypoints_backward(model, &gk, &mut gv);
            }
        }
        if let Some(w) = self.active(TermKind::Anchors) {
            let obs = self.observed();
            let anchors = &obs.frames[f].anchors;
            let total: f64 = anchors.iter().map(|a| a.confidence).sum();
            if total > 0.0 {
                let rows: Vec<(Vec3, [f64; 3])> =
                    anchors.iter().map(|a| (sk.vertices[a.vertex], [a.u, a.v, a.confidence])).collect();
                let (v, g) = projected_error(&obs.camera, &rows, total, w, want_grad)?;
                value += w * v;
                for (a, gi) in anchors.iter().zip(&g) {
                    gv[a.vertex] += gi;
                }
            }
        }
        if let Some(w) = self.active(TermKind::PoseParams) {
            let target = self.target();
            let mut gr = vec![Mat3::zeros(); model.num_joints()];
            for (j, r) in sk.rotations().iter().enumerate() {
                let d = r - target.rotations[f][j];
                value += w * d.norm_squared();
                gr[j] = d * (2.0 * w);
            }
            let dt = pose.translation() - target.trans[f];
            value += w * dt.norm_squared();
            g_trans_direct = dt * (2.0 * w);
            g_rot = Some(gr);
        }

        if !want_grad {
            return Ok(FrameGrad {
                value,
                rest: Vec::new(),
                body: Vec::new(),
                theta: Vec::new(),
                trans: Vec3::zeros(),
            });
        }
        let sg = skin_backward(model, &sk, &gv, g_rot.as_deref());
        Ok(FrameGrad { value, rest: sg.rest, body: sg.body, theta: sg.theta, trans: sg.trans + g_trans_direct })
    }
}

impl Objective for ComposedObjective<'_> {
    fn layout(&self) -> Layout {
        self.layout.clone()
    }

    fn value(&self, params: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(params, false)?.0)
    }

    fn value_and_gradient(&self, params: &ParamVector) -> Result<GradientReport> {
        let (value, gradient) = self.evaluate(params, true)?;
        Ok(GradientReport { value, gradient: gradient.expect("gradient requested") })
    }
}

/// `Σ‖a − b‖² / n`; adds `w·∂/∂a` into `grad` when given.
fn mean_squared(a: &[Vec3], b: &[Vec3], grad: Option<(f64, &mut [Vec3])>) -> f64 {
    let n = a.len() as f64;
    let mut sum = 0.0;
    match grad {
        Some((w, g)) => {
            let s = 2.0 * w / n;
            for ((x, y), gi) in a.iter().zip(b).zip(g.iter_mut()) {
                let d = x - y;
                sum += d.norm_squared();
                *gi += d * s;
            }
        }
        None => {
            for (x, y) in a.iter().zip(b) {
                sum += (x - y).norm_squared();
            }
        }
    }
    sum / n
}

/// Confidence-weighted squared reprojection error normalized by total
/// confidence and image height², with `w`-scaled gradients on the 3D points.
fn projected_error(
    camera: &Camera,
    rows: &[(Vec3, [f64; 3])],
    total: f64,
    w: f64,
    want_grad: bool,
) -> Result<(f64, Vec<Vec3>)> {
    let norm = total * camera.height as f64 * camera.height as f64;
    let mut value = 0.0;
    let mut grads = vec![Vec3::zeros(); if want_grad { rows.len() } else { 0 }];
    for (i, (p, t)) in rows.iter().enumerate() {
        if t[2] == 0.0 {
            continue;
        }
        if !(p.z > MIN_DEPTH) {
            return Err(Error::BehindCamera { z: p.z });
        }
        let uv = camera.project_unchecked(p);
        let d = [uv[0] - t[0], uv[1] - t[1]];
        value += t[2] * (d[0] * d[0] + d[1] * d[1]) / norm;
        if want_grad {
            let s = 2.0 * w * t[2] / norm;
            grads[i] = camera.project_backward(p, [s * d[0], s * d[1]]);
        }
    }
    Ok((value, grads))
}

fn laplacian(model: &BodyModel, d: &[Vec3], grad: Option<(f64, &mut [Vec3])>) -> f64 {
    let nbrs = model.neighbors();
    let active = nbrs.iter().filter(|n| !n.is_empty()).count();
    if active == 0 {
        return 0.0;
    }
    let m = active as f64;
    let mut sum = 0.0;
    let mut residuals = Vec::with_capacity(d.len());
    for (v, ring) in nbrs.iter().enumerate() {
        if ring.is_empty() {
            residuals.push(Vec3::zeros());
            continue;
        }
        let mean = ring.iter().map(|&u| d[u]).sum::<Vec3>() / ring.len() as f64;
        let r = d[v] - mean;
        sum += r.norm_squared();
        residuals.push(r);
    }
    if let Some((w, g)) = grad {
        for (v, ring) in nbrs.iter().enumerate() {
            if ring.is_empty() {
                continue;
            }
            let s = residuals[v] * (2.0 * w / m);
            g[v] += s;
            let share = s / ring.len() as f64;
            for &u in ring {
                g[u] -= share;
            }
        }
    }
    sum / m
}

#[inline]
fn mirror_x(v: Vec3) -> Vec3 {
    Vec3::new(-v.x, v.y, v.z)
}

fn symmetry(model: &BodyModel, d: &[Vec3], grad: Option<(f64, &mut [Vec3])>) -> Result<f64> {
    let pairs = model.symmetry_pairs();
    if pairs.is_empty() {
        return Err(Error::Configuration("symmetry term needs symmetry pairs".into()));
    }
    let n = pairs.len() as f64;
    let mut sum = 0.0;
    let mut g = grad;
    for &[l, r] in pairs {
        let res = d[l] - mirror_x(d[r]);
        sum += res.norm_squared();
        if let Some((w, g)) = g.as_mut() {
            let s = res * (2.0 * *w / n);
            g[l] += s;
            g[r] -= mirror_x(s);
        }
    }
    Ok(sum / n)
}
