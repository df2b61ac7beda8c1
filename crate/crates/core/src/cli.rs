//! Command-line front end. Every subcommand reads a `RunConfig` (TOML) and
//! applies flag overrides on top of it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{load_template, make_mini_template, skin, BodyParams, BodyTemplate, MiniTemplateConfig};
use crate::error::Error;
use crate::fitting::{fit_batch, CorrectorKind, FitConfig, FitJob, FitReport, StartView};
use crate::fsutil::write_atomic;
use crate::gradcheck::{run_gradcheck, GradcheckOptions, GradcheckReport};
use crate::metrics::{aggregate, evaluate, format_table, AlignMode, EvalOptions, MetricsReport};
use crate::obj::write_obj;
use crate::synth::{generate_dataset, load_dataset, Manifest, OcclusionRate, PoseSource, Split, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

pub const FIT_SUMMARY_FILE: &str = "fit_summary.json";
pub const EVAL_FILE: &str = "eval.json";
pub const EVAL_TABLE_FILE: &str = "eval.txt";
pub const RUN_CONFIG_FILE: &str = "run_config.toml";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => EXIT_USAGE,
            CliError::Verification(_) => EXIT_VERIFICATION,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitSelection {
    Train,
    Test,
    #[default]
    All,
}

impl SplitSelection {
    pub fn split(self) -> Option<Split> {
        match self {
            SplitSelection::Train => Some(Split::Train),
            SplitSelection::Test => Some(Split::Test),
            SplitSelection::All => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub dataset: Option<PathBuf>,
    pub split: SplitSelection,
    /// Fit only the first `views` views of each instance; missing views are
    /// padded by copying.
    pub views: Option<usize>,
    pub solver: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub dataset: Option<PathBuf>,
    /// Directory holding `fit_XXXXXX.json` reports.
    pub reports: Option<PathBuf>,
    pub split: SplitSelection,
    pub metrics: EvalOptions,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportSection {
    /// Fit report or body parameter JSON; the rest pose when absent.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

/// Serializable description of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; replaces the seeds of every section when set.
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out: Option<PathBuf>,
    /// Body template file; the built-in procedural template when absent.
    pub template: Option<PathBuf>,
    pub gen: SynthConfig,
    pub fit: FitSection,
    pub eval: EvalSection,
    pub gradcheck: GradcheckOptions,
    pub export: ExportSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Pushes the master seed into every section.
    pub fn resolve_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.gen.seed = seed;
            self.gradcheck.seed = seed;
            if let StartView::Random { seed: s } = &mut self.fit.solver.start_view {
                *s = seed;
            }
        }
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    pub fn load_template(&self) -> CliResult<BodyTemplate> {
        match &self.template {
            Some(p) => Ok(load_template(p)?),
            None => Ok(make_mini_template(&MiniTemplateConfig::default())?),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mvhuman",
    version,
    about = "Multi-view body reconstruction: synthetic data, fitting and evaluation"
)]
pub struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory (output file for `export`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Body template file (default: built-in procedural template).
    #[arg(long, global = true, value_name = "PATH")]
    pub template: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-view dataset.
    Gen(GenArgs),
    /// Fit every instance of a dataset split.
    Fit(FitArgs),
    /// Score fit reports against dataset ground truth.
    Eval(EvalArgs),
    /// Compare analytic Jacobians with finite differences.
    Gradcheck(GradcheckArgs),
    /// Write the mesh of a fit report or parameter file as OBJ.
    Export(ExportArgs),
}

#[derive(Debug, Args, Default)]
pub struct GenArgs {
    #[arg(long, value_name = "N")]
    pub n_shapes: Option<usize>,
    #[arg(long, value_name = "N")]
    pub poses_per_shape: Option<usize>,
    #[arg(long, value_name = "N")]
    pub n_views: Option<usize>,
    /// Gaussian noise on 2D joints, pixels.
    #[arg(long, value_name = "PX")]
    pub noise_sigma: Option<f64>,
    /// Fraction of joints hidden in every view.
    #[arg(long, value_name = "RATE")]
    pub occlusion: Option<f64>,
    /// Procedural pose bound per axis, degrees.
    #[arg(long, value_name = "DEG", conflicts_with = "pose_file")]
    pub max_angle: Option<f64>,
    /// Draw poses from a JSON pose library instead.
    #[arg(long, value_name = "PATH")]
    pub pose_file: Option<PathBuf>,
    /// Garment clearance, metres.
    #[arg(long, value_name = "M")]
    pub epsilon: Option<f64>,
    /// Skip penetration resolution.
    #[arg(long)]
    pub no_penetration: bool,
    #[arg(long, value_name = "F")]
    pub split_fraction: Option<f64>,
    /// Also write ground-truth meshes as OBJ.
    #[arg(long)]
    pub export_meshes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectorArg {
    GaussNewton,
    Gradient,
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitSelection>,
    /// Use the first N views of each instance.
    #[arg(long, value_name = "N")]
    pub views: Option<usize>,
    #[arg(long, value_name = "N")]
    pub stages: Option<usize>,
    #[arg(long, value_enum)]
    pub corrector: Option<CorrectorArg>,
    #[arg(long, value_name = "LAMBDA")]
    pub damping: Option<f64>,
    #[arg(long, value_name = "N")]
    pub max_inner_iters: Option<usize>,
    /// First view of the chain: an index, or `random`.
    #[arg(long, value_name = "INDEX|random")]
    pub start_view: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    Similarity,
    Rigid,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Directory of fit reports.
    #[arg(long, value_name = "DIR")]
    pub reports: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitSelection>,
    #[arg(long, value_enum)]
    pub align: Option<AlignArg>,
    /// Skip the mesh Hausdorff distance.
    #[arg(long)]
    pub no_hausdorff: bool,
}

#[derive(Debug, Args, Default)]
pub struct GradcheckArgs {
    #[arg(long, value_name = "N")]
    pub draws: Option<usize>,
    /// Perturb the analytic Jacobians (negative control; must fail).
    #[arg(long)]
    pub corrupt_jacobian: bool,
}

#[derive(Debug, Args, Default)]
pub struct ExportArgs {
    /// Fit report or body parameter JSON (default: rest pose).
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output OBJ path.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

impl Cli {
    /// Loads the config file (if any) and applies every flag.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(t) = &self.template {
            cfg.template = Some(t.clone());
        }
        match &self.command {
            Command::Gen(a) => a.apply(&mut cfg.gen),
            Command::Fit(a) => a.apply(&mut cfg.fit)?,
            Command::Eval(a) => a.apply(&mut cfg.eval),
            Command::Gradcheck(a) => {
                if let Some(d) = a.draws {
                    cfg.gradcheck.draws = d;
                }
                cfg.gradcheck.corrupt |= a.corrupt_jacobian;
            }
            Command::Export(a) => {
                if let Some(i) = &a.input {
                    cfg.export.input = Some(i.clone());
                }
                if let Some(o) = &a.output {
                    cfg.export.output = Some(o.clone());
                }
            }
        }
        cfg.resolve_seed();
        Ok(cfg)
    }
}

impl GenArgs {
    fn apply(&self, g: &mut SynthConfig) {
        if let Some(v) = self.n_shapes {
            g.n_shapes = v;
        }
        if let Some(v) = self.poses_per_shape {
            g.poses_per_shape = v;
        }
        if let Some(v) = self.n_views {
            g.n_views = v;
        }
        if let Some(v) = self.noise_sigma {
            g.noise_sigma_px = v;
        }
        if let Some(v) = self.occlusion {
            g.occlusion_rate = OcclusionRate::Uniform(v);
        }
        if let Some(v) = self.max_angle {
            g.pose_source = PoseSource::Procedural { max_angle_deg: v };
        }
        if let Some(p) = &self.pose_file {
            g.pose_source = PoseSource::PoseFile { path: p.clone() };
        }
        if let Some(v) = self.epsilon {
            g.epsilon_margin = v;
        }
        if self.no_penetration {
            g.resolve_penetration = false;
        }
        if let Some(v) = self.split_fraction {
            g.split_fraction = v;
        }
        g.export_meshes |= self.export_meshes;
    }
}

impl FitArgs {
    fn apply(&self, f: &mut FitSection) -> CliResult<()> {
        if let Some(d) = &self.dataset {
            f.dataset = Some(d.clone());
        }
        if let Some(s) = self.split {
            f.split = s;
        }
        if let Some(v) = self.views {
            f.views = Some(v);
        }
        let s = &mut f.solver;
        if let Some(v) = self.stages {
            s.stages = v;
        }
        if let Some(c) = self.corrector {
            s.corrector = match c {
                CorrectorArg::GaussNewton => CorrectorKind::GaussNewton,
                CorrectorArg::Gradient => CorrectorKind::Gradient,
            };
        }
        if let Some(v) = self.damping {
            s.damping = v;
        }
        if let Some(v) = self.max_inner_iters {
            s.max_inner_iters = v;
        }
        if let Some(v) = &self.start_view {
            s.start_view = if v == "random" {
                StartView::Random { seed: 0 }
            } else {
                let index = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("--start-view expects an index or `random`, got `{v}`")))?;
                StartView::Fixed { index }
            };
        }
        Ok(())
    }
}

impl EvalArgs {
    fn apply(&self, e: &mut EvalSection) {
        if let Some(d) = &self.dataset {
            e.dataset = Some(d.clone());
        }
        if let Some(r) = &self.reports {
            e.reports = Some(r.clone());
        }
        if let Some(s) = self.split {
            e.split = s;
        }
        if let Some(a) = self.align {
            e.metrics.align = match a {
                AlignArg::Similarity => AlignMode::Similarity,
                AlignArg::Rigid => AlignMode::Rigid,
            };
        }
        if self.no_hausdorff {
            e.metrics.hausdorff = false;
        }
    }
}

fn require_dir(path: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    match path {
        None => usage(format!("{what} directory not given")),
        Some(p) if !p.is_dir() => usage(format!("{what} directory {} does not exist", p.display())),
        Some(p) => Ok(p.clone()),
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        usage(format!("{what} {} does not exist", path.display()))
    }
}

fn check_template_path(cfg: &RunConfig) -> CliResult<()> {
    match &cfg.template {
        Some(p) => require_file(p, "template"),
        None => Ok(()),
    }
}

fn create_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        format: "json",
        detail: e.to_string(),
    })?;
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

pub fn fit_report_file(instance_id: usize) -> String {
    format!("fit_{instance_id:06}.json")
}

/// Generates a dataset into `out` (default `dataset`).
pub fn cmd_gen(cfg: &RunConfig) -> CliResult<(PathBuf, Manifest)> {
    check_template_path(cfg)?;
    if let PoseSource::PoseFile { path } = &cfg.gen.pose_source {
        require_file(path, "pose file")?;
    }
    let out = cfg.out_or("dataset");
    create_out_dir(&out)?;
    let template = cfg.load_template()?;
    let manifest = generate_dataset(&template, &cfg.gen, &out)?;
    Ok((out, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub instances: usize,
    pub views: Option<usize>,
    pub stages: usize,
    pub mean_final_loss: f64,
    pub converged: usize,
    pub files: Vec<String>,
}

/// Fits every instance of the selected split; reports go to `out`
/// (default `fits`).
pub fn cmd_fit(cfg: &RunConfig) -> CliResult<(PathBuf, FitSummary)> {
    let dir = require_dir(&cfg.fit.dataset, "dataset")?;
    require_file(&dir.join(crate::synth::MANIFEST_FILE), "dataset manifest")?;
    if cfg.fit.views == Some(0) {
        return usage("--views must be at least 1");
    }
    cfg.fit.solver.validate()?;
    let out = cfg.out_or("fits");
    create_out_dir(&out)?;
    let data = load_dataset(&dir, cfg.fit.split.split())?;
    if data.instances.is_empty() {
        return usage("the selected split has no instances");
    }
    let mut jobs = Vec::with_capacity(data.instances.len());
    for inst in &data.instances {
        let views = &inst.observation.views;
        let n = cfg.fit.views.unwrap_or(views.len());
        if n > views.len() {
            return usage(format!(
                "--views {n} exceeds the {} views of instance {}",
                views.len(),
                inst.ground_truth.instance_id
            ));
        }
        jobs.push(FitJob {
            key: inst.ground_truth.instance_id as u64,
            views: views[..n].to_vec(),
            gt: None,
        });
    }
    let reports = fit_batch(&jobs, &data.template, &cfg.fit.solver);
    let mut files = Vec::with_capacity(reports.len());
    let mut loss_sum = 0.0;
    let mut converged = 0;
    for (job, report) in jobs.iter().zip(reports) {
        let report = report?;
        let file = fit_report_file(job.key as usize);
        report.save(out.join(&file))?;
        loss_sum += report.mean_final_loss;
        converged += usize::from(report.converged);
        files.push(file);
    }
    let summary = FitSummary {
        instances: files.len(),
        views: cfg.fit.views,
        stages: cfg.fit.solver.stages,
        mean_final_loss: loss_sum / files.len() as f64,
        converged,
        files,
    };
    write_json(&out.join(FIT_SUMMARY_FILE), &summary)?;
    write_atomic(&out.join(RUN_CONFIG_FILE), cfg.to_toml()?.as_bytes())?;
    Ok((out, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub instance_id: usize,
    pub metrics: MetricsReport,
}

/// An instance whose fit could not be scored (for example a predicted shape
/// so extreme that a measurement plane misses the torso).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub instance_id: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub rows: Vec<EvalRow>,
    pub failures: Vec<EvalFailure>,
    /// Mean over scored instances; absent when none could be scored.
    pub aggregate: Option<MetricsReport>,
    pub table: String,
}

/// Scores the fit reports of a split; writes `eval.json` and `eval.txt`
/// to `out` (default `eval`).
pub fn cmd_eval(cfg: &RunConfig) -> CliResult<(PathBuf, EvalOutput)> {
    let dir = require_dir(&cfg.eval.dataset, "dataset")?;
    require_file(&dir.join(crate::synth::MANIFEST_FILE), "dataset manifest")?;
    let reports = require_dir(&cfg.eval.reports, "reports")?;
    let out = cfg.out_or("eval");
    create_out_dir(&out)?;
    let data = load_dataset(&dir, cfg.eval.split.split())?;
    if data.instances.is_empty() {
        return usage("the selected split has no instances");
    }
    let scored: Vec<(usize, std::result::Result<MetricsReport, Error>)> = data
        .instances
        .par_iter()
        .map(|inst| -> CliResult<_> {
            let id = inst.ground_truth.instance_id;
            let fit = FitReport::load(reports.join(fit_report_file(id)))?;
            let metrics = evaluate(
                &data.template,
                &fit.state.body,
                &inst.ground_truth.body,
                &cfg.eval.metrics,
            );
            Ok((id, metrics))
        })
        .collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (instance_id, result) in scored {
        match result {
            Ok(metrics) => rows.push(EvalRow { instance_id, metrics }),
            Err(e) => failures.push(EvalFailure {
                instance_id,
                error: e.to_string(),
            }),
        }
    }
    let mut table = String::new();
    let mut mean = None;
    if !rows.is_empty() {
        let labelled: Vec<(String, MetricsReport)> = rows
            .iter()
            .map(|r| (format!("{:06}", r.instance_id), r.metrics))
            .collect();
        table = format_table(&labelled)?;
        let all: Vec<MetricsReport> = rows.iter().map(|r| r.metrics).collect();
        mean = Some(aggregate(&all)?);
    }
    for f in &failures {
        writeln!(table, "{:06}: not scored: {}", f.instance_id, f.error).expect("string write");
    }
    let output = EvalOutput {
        rows,
        failures,
        aggregate: mean,
        table,
    };
    write_json(&out.join(EVAL_FILE), &output)?;
    write_atomic(&out.join(EVAL_TABLE_FILE), output.table.as_bytes())?;
    Ok((out, output))
}

/// Runs the Jacobian suites; a failing suite is a verification error.
pub fn cmd_gradcheck(cfg: &RunConfig) -> CliResult<GradcheckReport> {
    check_template_path(cfg)?;
    let template = cfg.load_template()?;
    let report = run_gradcheck(&template, &cfg.gradcheck)?;
    if let Some(out) = &cfg.out {
        create_out_dir(out)?;
        write_json(&out.join("gradcheck.json"), &report)?;
    }
    Ok(report)
}

pub fn format_gradcheck(report: &GradcheckReport) -> String {
    let mut s = String::new();
    for suite in &report.suites {
        let verdict = if suite.passed { "pass" } else { "FAIL" };
        writeln!(
            s,
            "{:<28} draws {:>4}  worst rel err {:.3e}  {verdict}",
            suite.name, suite.draws, suite.worst_rel_err
        )
        .expect("string write");
    }
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    writeln!(s, "tolerance {:.0e}: {verdict}", report.tolerance).expect("string write");
    s
}

fn read_body(path: &Path, template: &BodyTemplate) -> CliResult<BodyParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let body = match serde_json::from_str::<FitReport>(&text) {
        Ok(report) => report.state.body,
        Err(_) => serde_json::from_str::<BodyParams>(&text).map_err(|e| Error::Format {
            format: "body parameters",
            detail: format!("{}: {e}", path.display()),
        })?,
    };
    body.check(template)?;
    Ok(body)
}

/// Skins the input parameters (rest pose when absent) and writes an OBJ to
/// `export.output`, else `out`, else `mesh.obj`.
pub fn cmd_export(cfg: &RunConfig) -> CliResult<PathBuf> {
    check_template_path(cfg)?;
    if let Some(input) = &cfg.export.input {
        require_file(input, "input")?;
    }
    let output = cfg
        .export
        .output
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("mesh.obj"));
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_out_dir(parent)?;
    }
    let template = cfg.load_template()?;
    let body = match &cfg.export.input {
        Some(p) => read_body(p, &template)?,
        None => BodyParams::zeros(&template),
    };
    let mesh = skin(&template, &body)?;
    write_obj(&output, &mesh, template.faces())?;
    Ok(output)
}

fn run_command(cli: &Cli, cfg: &RunConfig) -> CliResult<String> {
    match &cli.command {
        Command::Gen(_) => {
            let (out, m) = cmd_gen(cfg)?;
            Ok(format!(
                "generated {} instances ({} train shapes, {} test shapes) in {}\n",
                m.instances.len(),
                m.train_shapes.len(),
                m.test_shapes.len(),
                out.display()
            ))
        }
        Command::Fit(_) => {
            let (out, s) = cmd_fit(cfg)?;
            Ok(format!(
                "fitted {} instances ({} stages), mean final loss {:.6}, {} converged; reports in {}\n",
                s.instances,
                s.stages,
                s.mean_final_loss,
                s.converged,
                out.display()
            ))
        }
        Command::Eval(_) => {
            let (_, e) = cmd_eval(cfg)?;
            Ok(e.table)
        }
        Command::Gradcheck(_) => {
            let report = cmd_gradcheck(cfg)?;
            let text = format_gradcheck(&report);
            if report.passed {
                Ok(text)
            } else {
                Err(CliError::Verification(text))
            }
        }
        Command::Export(_) => {
            let path = cmd_export(cfg)?;
            Ok(format!("wrote {}\n", path.display()))
        }
    }
}

/// Resolves the configuration and runs the subcommand on a pool of
/// `jobs` workers. Returns the text to print on success.
pub fn run(cli: &Cli) -> CliResult<String> {
    let cfg = cli.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.jobs)))?;
    pool.install(|| run_command(cli, &cfg))
}
