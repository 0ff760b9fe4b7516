//! Command-line driver for synthesis, fitting, evaluation, rendering and
//! gradient certification.
//!
//! Every command returns an [`Outcome`]; errors are usage or I/O problems.
//! `main` maps them to the exit codes 0 (success), 1 (check failure) and
//! 2 (usage/IO error).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bodyfit_core::body::{pose_mesh, shaped_tpose, SubjectParams};
use bodyfit_core::certify::{gradcheck_model, run_gradcheck, GradcheckConfig, TermCheck};
use bodyfit_core::fit::{fit, fit_with_poses, silhouette_ious, FitConfig, FitResult, StopReason};
use bodyfit_core::objectives::TermKind;
use bodyfit_core::render::{mask_iou, render_silhouette};
use bodyfit_core::synth::{evaluate_fit, synthesize_bundle, write_json, write_obj, Bundle, ScenarioSpec, MASK_TAU};

pub const RESULT_FILE: &str = "result.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const TSHAPE_FILE: &str = "tshape.obj";
pub const IOU_FILE: &str = "iou.csv";

pub fn posed_file_name(frame: usize) -> String {
    format!("posed_{frame:03}.obj")
}

pub fn render_file_name(frame: usize) -> String {
    format!("render_{frame:03}.pgm")
}

/// Manifest file written by `command` into `dir`.
pub fn manifest_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("{command}.manifest.json"))
}

#[derive(Debug, Parser)]
#[command(name = "bodyfit", version, about = "Fit a personalized body model to silhouettes and keypoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic observation bundle with ground truth.
    Synth(SynthArgs),
    /// Fit shape, offsets and poses to a bundle.
    Fit(FitArgs),
    /// Compare a fitted result with the bundle's ground truth.
    Eval(EvalArgs),
    /// Check every objective gradient against central differences.
    Gradcheck(GradcheckArgs),
    /// Render the fitted model over the bundle's frames.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Square image size in pixels.
    #[arg(long, default_value_t = 1080)]
    pub resolution: usize,
    /// Keypoint noise standard deviation in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Mask corruption radius in pixels: positive erodes, negative dilates.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub corruption: i64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Fit configuration, or a fit manifest whose recorded config is reused.
    /// Defaults to the built-in configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Freeze poses and translations at the bundle's ground truth.
    #[arg(long)]
    pub gt_poses: bool,
    /// Wall-clock limit; overrides the configuration's budget.
    #[arg(long)]
    pub budget_seconds: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub tolerance_report: PathBuf,
    /// Number of random points per term.
    #[arg(long, default_value_t = 10, hide = true)]
    pub points: usize,
    /// Test hook: corrupt the named term's gradient.
    #[arg(long, hide = true)]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CheckFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::CheckFailed => 1,
        }
    }
}

/// Exit code for usage and I/O errors.
pub const USAGE_ERROR: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    /// Seconds since the Unix epoch when the command started.
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub tool_version: String,
}

struct ManifestBuilder {
    command: &'static str,
    started: Instant,
    started_unix: f64,
}

impl ManifestBuilder {
    fn start(command: &'static str) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self { command, started: Instant::now(), started_unix }
    }

    /// Writes the manifest to a temporary file and renames it into place.
    fn finish<C: Serialize>(
        self,
        dir: &Path,
        config: &C,
        seed: u64,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command.into(),
            config: serde_json::to_value(config)?,
            inputs,
            outputs,
            seed,
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        };
        let path = manifest_path(dir, self.command);
        let tmp = path.with_extension("json.tmp");
        write_json(&tmp, &manifest)?;
        std::fs::rename(&tmp, &path).with_context(|| format!("{}: cannot move manifest into place", path.display()))?;
        Ok(path)
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Fit(a) => cmd_fit(&a).map(|_| Outcome::Success),
        Command::Eval(a) => {
            let report = cmd_eval(&a)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?).context("standard output")?;
            Ok(Outcome::Success)
        }
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Render(a) => cmd_render(&a).map(|_| Outcome::Success),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("{}: cannot create directory", dir.display()))
}

fn read_bundle(dir: &Path) -> Result<Bundle> {
    Ok(Bundle::read(dir)?)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("synth");
    let scenario = ScenarioSpec {
        seed: args.seed,
        frames: args.frames,
        resolution: args.resolution,
        keypoint_noise: args.noise,
        mask_corruption: args.corruption,
        ..Default::default()
    };
    scenario.validate()?;
    create_dir(&args.out)?;
    let bundle = synthesize_bundle(&scenario)?;
    bundle.write(&args.out)?;
    log::info!("wrote {} frames to {}", scenario.frames, args.out.display());
    manifest.finish(&args.out, &scenario, args.seed, vec![], vec![args.out.clone()])?;
    Ok(Outcome::Success)
}

/// Per-stage summary stored in `result.json`; no timing so reruns compare
/// byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub name: String,
    pub steps: usize,
    pub best: Option<f64>,
    pub stop: StopReason,
}

/// Contents of `result.json`: the recovered subject plus fit status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    #[serde(flatten)]
    pub subject: SubjectParams,
    pub diverged: bool,
    pub budget_exhausted: bool,
    /// Per-frame silhouette IoU against the observed masks.
    pub iou: Vec<f64>,
    pub stages: Vec<StageSummary>,
}

impl FitOutput {
    pub fn from_result(result: &FitResult) -> Self {
        Self {
            subject: result.params.clone(),
            diverged: result.diverged,
            budget_exhausted: result.budget_exhausted,
            iou: result.iou.clone(),
            stages: result
                .stages
                .iter()
                .map(|s| StageSummary {
                    name: s.name.clone(),
                    steps: s.values.len(),
                    best: s.best.last().copied(),
                    stop: s.stop,
                })
                .collect(),
        }
    }
}

/// `--config` accepts a fit configuration or a fit manifest.
fn load_fit_config(path: &Path) -> Result<FitConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}: cannot read", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))?;
    let config = match value.get("command").and_then(|c| c.as_str()) {
        Some("fit") => value.get("config").cloned().unwrap_or_default(),
        Some(other) => bail!("{}: manifest of command `{other}`, expected `fit`", path.display()),
        None => value,
    };
    let config: FitConfig =
        serde_json::from_value(config).with_context(|| format!("{}: invalid fit configuration", path.display()))?;
    config.validate().with_context(|| path.display().to_string())?;
    Ok(config)
}

pub fn trace_csv(result: &FitResult) -> String {
    let mut s = String::from("stage,step,objective,best,tau\n");
    for stage in &result.stages {
        for (i, ((v, b), t)) in stage.values.iter().zip(&stage.best).zip(&stage.tau).enumerate() {
            let _ = writeln!(s, "{},{i},{v:e},{b:e},{t}", stage.name);
        }
    }
    s
}

/// Runs the fit and writes its artifacts; returns the result for callers
/// that want the full trace.
pub fn cmd_fit(args: &FitArgs) -> Result<FitResult> {
    let manifest = ManifestBuilder::start("fit");
    let bundle = read_bundle(&args.data)?;
    let mut config = match &args.config {
        Some(p) => load_fit_config(p)?,
        None => FitConfig::default(),
    };
    if let Some(b) = args.budget_seconds {
        config.budget_seconds = Some(b);
    }
    config.validate()?;
    let camera = bundle.camera()?;
    let result = if args.gt_poses {
        let gt = bundle.require_ground_truth(&args.data)?;
        fit_with_poses(&bundle.model, &camera, &bundle.observations, &config, gt.frames.clone())?
    } else {
        fit(&bundle.model, &camera, &bundle.observations, &config)?
    };
    if result.diverged {
        log::warn!("fit diverged; the best iterate before divergence is reported");
    }

    create_dir(&args.out)?;
    let mut outputs = Vec::new();
    let result_path = args.out.join(RESULT_FILE);
    write_json(&result_path, &FitOutput::from_result(&result))?;
    outputs.push(result_path);
    let trace_path = args.out.join(TRACE_FILE);
    std::fs::write(&trace_path, trace_csv(&result)).with_context(|| trace_path.display().to_string())?;
    outputs.push(trace_path);
    let model = &bundle.model;
    let p = &result.params;
    let tshape_path = args.out.join(TSHAPE_FILE);
    write_obj(&tshape_path, &shaped_tpose(model, &p.beta, &p.offsets_vec())?, model.faces())?;
    outputs.push(tshape_path);
    for f in 0..p.frames.len() {
        let path = args.out.join(posed_file_name(f));
        write_obj(&path, &pose_mesh(model, p, f)?, model.faces())?;
        outputs.push(path);
    }
    let mut inputs = vec![args.data.clone()];
    inputs.extend(args.config.clone());
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        config: &'a FitConfig,
        gt_poses: bool,
    }
    let seed = config.seed;
    manifest.finish(&args.out, &Resolved { config: &config, gt_poses: args.gt_poses }, seed, inputs, outputs)?;
    Ok(result)
}

/// Reads a result written by `fit` (or a bare subject file) and checks it
/// against the bundle.
fn read_result(path: &Path, bundle: &Bundle) -> Result<SubjectParams> {
    let subject = SubjectParams::load(path)?;
    subject.validate(&bundle.model).with_context(|| path.display().to_string())?;
    if subject.frames.len() != bundle.observations.len() {
        bail!("{}: {} frames for {} observations", path.display(), subject.frames.len(), bundle.observations.len());
    }
    Ok(subject)
}

fn result_dir(result: &Path) -> PathBuf {
    match result.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<bodyfit_core::synth::EvaluationReport> {
    let manifest = ManifestBuilder::start("eval");
    let bundle = read_bundle(&args.data)?;
    let estimate = read_result(&args.result, &bundle)?;
    let gt = bundle.require_ground_truth(&args.data)?;
    let report = evaluate_fit(&bundle.model, &bundle.camera()?, &estimate, gt, &bundle.observations)?;
    manifest.finish(
        &result_dir(&args.result),
        &serde_json::json!({}),
        bundle.scenario.seed,
        vec![args.result.clone(), args.data.clone()],
        vec![],
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceReport {
    pub config: GradcheckConfig,
    pub passed: bool,
    pub terms: Vec<TermCheck>,
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<Outcome> {
    let manifest = ManifestBuilder::start("gradcheck");
    let fault = args.fault.as_deref().map(str::parse::<TermKind>).transpose()?;
    if args.points == 0 {
        bail!("--points must be positive");
    }
    let config = GradcheckConfig { seed: args.seed, points: args.points, ..Default::default() };
    let terms = run_gradcheck(&gradcheck_model()?, &config, fault)?;
    let failing: Vec<&str> = terms.iter().filter(|t| !t.passed).map(|t| t.term.as_str()).collect();
    let report = ToleranceReport { config: config.clone(), passed: failing.is_empty(), terms: terms.clone() };
    let path = &args.tolerance_report;
    let dir = result_dir(path);
    create_dir(&dir)?;
    write_json(path, &report)?;
    for t in &terms {
        eprintln!(
            "{:<12} max relative error {:.3e} (tolerance {:.0e}) {}",
            t.term,
            t.max_relative_error,
            t.tolerance,
            if t.passed { "ok" } else { "FAIL" }
        );
    }
    manifest.finish(&dir, &config, args.seed, vec![], vec![path.clone()])?;
    if failing.is_empty() {
        Ok(Outcome::Success)
    } else {
        eprintln!("gradient check failed for: {}", failing.join(", "));
        Ok(Outcome::CheckFailed)
    }
}

/// Renders each frame at the bundle's resolution; returns per-frame IoU.
pub fn cmd_render(args: &RenderArgs) -> Result<Vec<f64>> {
    let manifest = ManifestBuilder::start("render");
    let bundle = read_bundle(&args.data)?;
    let subject = read_result(&args.result, &bundle)?;
    let camera = bundle.camera()?;
    create_dir(&args.out)?;
    let mut outputs = Vec::new();
    let mut csv = String::from("frame,iou\n");
    let mut ious = Vec::new();
    for (f, obs) in bundle.observations.iter().enumerate() {
        let posed = pose_mesh(&bundle.model, &subject, f)?;
        let image = render_silhouette(&camera, &posed, bundle.model.faces(), MASK_TAU)?;
        let iou = mask_iou(&image, &obs.mask)?;
        let path = args.out.join(render_file_name(f));
        image.save_pgm(&path)?;
        outputs.push(path);
        let _ = writeln!(csv, "{f},{iou}");
        ious.push(iou);
    }
    debug_assert_eq!(ious, silhouette_ious(&bundle.model, &camera, &subject, &bundle.observations)?);
    let csv_path = args.out.join(IOU_FILE);
    std::fs::write(&csv_path, csv).with_context(|| csv_path.display().to_string())?;
    outputs.push(csv_path);
    manifest.finish(
        &args.out,
        &serde_json::json!({ "mask_tau": MASK_TAU }),
        bundle.scenario.seed,
        vec![args.result.clone(), args.data.clone()],
        outputs,
    )?;
    Ok(ious)
}
