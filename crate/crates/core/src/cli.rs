//! The `trace` command line and the run orchestration behind it.
//!
//! ```text
//! trace run    --task inpaint50 --input synthetic:64 --out runs/a [--T 40 --K 150 ...]
//! trace run    --manifest runs/a/manifest.json --out runs/b
//! trace verify theorems --n 16 --trials 100 --seed 0 [--csv certs.csv] [--force-fail]
//! trace sweep  --task inpaint50 --input synthetic:64 --out runs/s --budget 6000 --t-list 10,20,30
//! trace sweep  --task inpaint50 --input synthetic:64 --out runs/s --betas 5e-3:5e-4,0:0
//! ```
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::engine::{run_trace, Ablation, Problem, TraceConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::io::{encode_f32, format_sci, pnm_extension, read_image, write_f32, write_pnm, write_trace_csv};
use crate::network::ArchConfig;
use crate::phantom::{shepp_logan, synthetic_image};
use crate::prox::{verify_theorems, Certificate, Tolerances};
use crate::tasks::{degrade, normalize_unit, TaskKind, TaskSpec};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

/// Everything needed to reproduce a run bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub task: TaskSpec,
    /// Image path, `synthetic:N`, `synthetic-rgb:N` or `shepp-logan:N`.
    pub input: String,
    pub output: PathBuf,
    /// Score states against the input image.
    pub ground_truth: bool,
    pub config: TraceConfig,
}

impl RunManifest {
    pub fn new(task: TaskSpec, input: impl Into<String>, output: impl Into<PathBuf>, config: TraceConfig) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            task,
            input: input.into(),
            output: output.into(),
            ground_truth: true,
            config,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Loads an image file or generates a built-in test image.
pub fn load_input(spec: &str) -> Result<Tensor<f32>> {
    let generated = |prefix: &str| -> Option<Result<usize>> {
        spec.strip_prefix(prefix).map(|n| {
            n.parse()
                .map_err(|_| Error::invalid(format!("bad image size in `{spec}`")))
        })
    };
    if let Some(n) = generated("synthetic:") {
        return synthetic_image(n?, 1);
    }
    if let Some(n) = generated("synthetic-rgb:") {
        return synthetic_image(n?, 3);
    }
    if let Some(n) = generated("shepp-logan:") {
        return shepp_logan(n?);
    }
    read_image(spec)
}

/// Ground truth (normalized for CT) and the degraded problem.
pub fn prepare(manifest: &RunManifest) -> Result<(Problem, Tensor<f32>)> {
    let mut image = load_input(&manifest.input)?;
    if manifest.task.kind.is_ct() {
        image = normalize_unit(&image);
    }
    let (y, op) = degrade(&manifest.task, &image)?;
    let problem = Problem::new(y, op, image.shape())?;
    Ok((problem, image))
}

/// Runs the manifest and writes `manifest.json`, `recon.{pgm,ppm}`,
/// `recon.f32`, `y.f32`, `trace.csv` and `states/x_TTT.f32`.
pub fn execute(manifest: &RunManifest) -> Result<TrajectoryRecord> {
    let (problem, truth) = prepare(manifest)?;
    let out = &manifest.output;
    fs::create_dir_all(out.join("states"))?;
    fs::write(out.join(MANIFEST_FILE), manifest.to_json()?)?;
    fs::write(out.join("y.f32"), encode_f32(&problem.y)?)?;
    let record = run_trace(&manifest.config, &problem, manifest.ground_truth.then_some(&truth))?;
    let channels = record.reconstruction.shape()[0];
    write_pnm(out.join(format!("recon.{}", pnm_extension(channels))), &record.reconstruction)?;
    write_f32(out.join("recon.f32"), &record.reconstruction)?;
    write_trace_csv(out.join(TRACE_FILE), &record.transitions)?;
    for (t, state) in &record.snapshots {
        write_f32(out.join("states").join(format!("x_{t:03}.f32")), state)?;
    }
    Ok(record)
}

/// `(T, N/T)` for every `T`; the budget must split evenly.
pub fn budget_pairs(budget: usize, steps: &[usize]) -> Result<Vec<(usize, usize)>> {
    steps
        .iter()
        .map(|&t| {
            if t == 0 || !budget.is_multiple_of(t) {
                Err(Error::invalid(format!("budget {budget} is not divisible by T={t}")))
            } else {
                Ok((t, budget / t))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub steps: usize,
    pub inner_steps: usize,
    pub beta_hi: f64,
    pub beta_lo: f64,
    pub final_psnr: f64,
    pub final_ssim: f64,
    pub mean_delta: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("label,T,K,beta_hi,beta_lo,final_psnr,final_ssim,mean_delta\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.label,
            r.steps,
            r.inner_steps,
            format_sci(r.beta_hi),
            format_sci(r.beta_lo),
            format_sci(r.final_psnr),
            format_sci(r.final_ssim),
            format_sci(r.mean_delta)
        ));
    }
    out
}

pub fn certificates_csv(certs: &[Certificate]) -> String {
    let mut out = String::from("instance,bound,lhs,rhs,pass\n");
    for c in certs {
        out.push_str(&format!("{},{},{},{},{}\n", c.instance, c.bound, format_sci(c.lhs), format_sci(c.rhs), c.pass));
    }
    out
}

#[derive(Parser, Debug)]
#[command(name = "trace", version, about = "Trajectory-constrained reconstruction with untrained priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reconstruct one image.
    Run(RunArgs),
    /// Numerical certificates.
    Verify {
        #[command(subcommand)]
        target: VerifyTarget,
    },
    /// Fixed-budget T/K sweep or coupling-schedule sweep.
    Sweep(SweepArgs),
}

#[derive(Subcommand, Debug)]
pub enum VerifyTarget {
    /// Proximal stability bounds on quadratic instances.
    Theorems(TheoremArgs),
}

#[derive(Args, Debug)]
pub struct TheoremArgs {
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the certificate table here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Use unattainable tolerances (tests the failure path).
    #[arg(long)]
    pub force_fail: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    /// inpaint50, inpaint70, sr2, sr4, motion, nonlinear, ct_sparse or ct_limited
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskKind>,
    /// Image file (PGM, PPM, F32) or synthetic:N, synthetic-rgb:N, shepp-logan:N.
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Projection count for sparse-view CT.
    #[arg(long)]
    pub views: Option<usize>,
    /// Skip PSNR/SSIM against the input.
    #[arg(long)]
    pub no_ground_truth: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TraceArgs {
    #[arg(long = "T", default_value_t = 40)]
    pub steps: usize,
    #[arg(long = "K", default_value_t = 150)]
    pub inner_steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-3)]
    pub beta_hi: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub beta_lo: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub beta_start: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub beta_end: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub skip: usize,
    #[arg(long)]
    pub no_coupling: bool,
    #[arg(long)]
    pub no_perturb: bool,
    #[arg(long)]
    pub no_inherit: bool,
    #[arg(long, default_value_t = 1)]
    pub snapshot_every: usize,
}

impl TraceArgs {
    pub fn config(&self, channels: usize) -> TraceConfig {
        TraceConfig {
            steps: self.steps,
            inner_steps: self.inner_steps,
            lr: self.lr,
            beta_hi: self.beta_hi,
            beta_lo: self.beta_lo,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            eta: self.eta,
            arch: ArchConfig {
                channels,
                depth: self.depth,
                width: self.width,
                skip: self.skip,
                ..ArchConfig::default()
            },
            seed: self.seed,
            ablation: Ablation {
                disable_coupling: self.no_coupling,
                disable_perturbation: self.no_perturb,
                disable_inheritance: self.no_inherit,
            },
            snapshot_every: self.snapshot_every,
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub trace: TraceArgs,
    /// Rerun a previous manifest; other run flags except --out are ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub trace: TraceArgs,
    /// Total optimizer budget N = T·K shared by every configuration.
    #[arg(long, requires = "t_list")]
    pub budget: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub t_list: Vec<usize>,
    /// Coupling schedules `hi:lo`; `0:0` disables coupling.
    #[arg(long, value_delimiter = ',', value_parser = parse_beta_pair, conflicts_with = "budget")]
    pub betas: Vec<(f64, f64)>,
    /// Print the configurations without running them.
    #[arg(long)]
    pub dry_run: bool,
}

fn parse_task(s: &str) -> std::result::Result<TaskKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_beta_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (hi, lo) = s.split_once(':').ok_or_else(|| format!("expected hi:lo, got `{s}`"))?;
    let parse = |v: &str| v.parse::<f64>().map_err(|_| format!("bad coupling value `{v}`"));
    Ok((parse(hi)?, parse(lo)?))
}

impl ProblemArgs {
    fn manifest(&self, trace: &TraceArgs) -> Result<RunManifest> {
        let kind = self.task.ok_or_else(|| Error::invalid("--task is required"))?;
        let input = self.input.clone().ok_or_else(|| Error::invalid("--input is required"))?;
        let channels = load_input(&input)?.shape()[0];
        let mut task = TaskSpec::new(kind, trace.seed);
        task.views = self.views;
        let mut m = RunManifest::new(task, input, self.out.clone(), trace.config(channels));
        m.ground_truth = !self.no_ground_truth;
        Ok(m)
    }
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify {
            target: VerifyTarget::Theorems(args),
        } => cmd_verify(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => 2,
                _ => 1,
            }
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let manifest = match &args.manifest {
        Some(path) => RunManifest {
            output: args.problem.out.clone(),
            ..RunManifest::load(path)?
        },
        None => args.problem.manifest(&args.trace)?,
    };
    manifest.config.validate()?;
    let record = execute(&manifest)?;
    let metric = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!(
        "{}: T={} K={} steps={} psnr={} ssim={} -> {}",
        manifest.task.kind,
        manifest.config.steps,
        manifest.config.inner_steps,
        record.optimizer_steps,
        metric(record.final_psnr()),
        metric(record.final_ssim()),
        manifest.output.display()
    );
    Ok(0)
}

fn cmd_verify(args: TheoremArgs) -> Result<i32> {
    let tol = if args.force_fail {
        Tolerances::sabotaged()
    } else {
        Tolerances::default()
    };
    let certs = verify_theorems(args.n, args.trials, args.seed, tol)?;
    let table = certificates_csv(&certs);
    match &args.csv {
        Some(path) => fs::write(path, &table)?,
        None => print!("{table}"),
    }
    match certs.iter().find(|c| !c.pass) {
        Some(c) => {
            eprintln!(
                "certificate failed: {} on {}: lhs={} > rhs={}",
                c.bound,
                c.instance,
                format_sci(c.lhs),
                format_sci(c.rhs)
            );
            Ok(1)
        }
        None => {
            eprintln!("all {} certificates passed", certs.len());
            Ok(0)
        }
    }
}

/// One configuration of a sweep.
struct Plan {
    label: String,
    trace: TraceArgs,
}

fn sweep_plans(args: &SweepArgs) -> Result<Vec<Plan>> {
    if let Some(budget) = args.budget {
        return Ok(budget_pairs(budget, &args.t_list)?
            .into_iter()
            .map(|(t, k)| Plan {
                label: format!("T{t}_K{k}"),
                trace: TraceArgs {
                    steps: t,
                    inner_steps: k,
                    ..args.trace.clone()
                },
            })
            .collect());
    }
    if args.betas.is_empty() {
        return Err(Error::invalid("sweep needs --budget with --t-list, or --betas"));
    }
    Ok(args
        .betas
        .iter()
        .map(|&(hi, lo)| {
            let off = hi == 0.0 && lo == 0.0;
            Plan {
                label: if off { "no_coupling".into() } else { format!("beta_{hi:e}_{lo:e}") },
                trace: TraceArgs {
                    beta_hi: hi,
                    beta_lo: lo,
                    no_coupling: off || args.trace.no_coupling,
                    ..args.trace.clone()
                },
            }
        })
        .collect())
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let plans = sweep_plans(&args)?;
    if args.dry_run {
        println!("label,T,K,beta_hi,beta_lo");
        for p in &plans {
            println!("{},{},{},{},{}", p.label, p.trace.steps, p.trace.inner_steps, p.trace.beta_hi, p.trace.beta_lo);
        }
        return Ok(0);
    }
    fs::create_dir_all(&args.problem.out)?;
    let mut rows = Vec::with_capacity(plans.len());
    for plan in plans {
        let problem = ProblemArgs {
            out: args.problem.out.join(&plan.label),
            ..args.problem.clone()
        };
        let manifest = problem.manifest(&plan.trace)?;
        manifest.config.validate()?;
        let record = execute(&manifest)?;
        eprintln!("{}: psnr={:?}", plan.label, record.final_psnr());
        rows.push(SweepRow {
            label: plan.label,
            steps: manifest.config.steps,
            inner_steps: manifest.config.inner_steps,
            beta_hi: if manifest.config.ablation.disable_coupling { 0.0 } else { manifest.config.beta_hi },
            beta_lo: if manifest.config.ablation.disable_coupling { 0.0 } else { manifest.config.beta_lo },
            final_psnr: record.final_psnr().unwrap_or(f64::NAN),
            final_ssim: record.final_ssim().unwrap_or(f64::NAN),
            mean_delta: record.mean_delta(),
        });
    }
    fs::write(args.problem.out.join(SWEEP_FILE), sweep_csv(&rows))?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table6_pairs() {
        let pairs = budget_pairs(6000, &[10, 20, 30, 40, 50, 60]).unwrap();
        assert_eq!(pairs, vec![(10, 600), (20, 300), (30, 200), (40, 150), (50, 120), (60, 100)]);
        assert!(budget_pairs(6000, &[7]).is_err());
        assert!(budget_pairs(6000, &[0]).is_err());
    }

    #[test]
    fn defaults_match_reference_settings() {
        let cli = Cli::try_parse_from(["trace", "run", "--task", "inpaint50", "--input", "synthetic:32", "--out", "x"]).unwrap();
        let Command::Run(args) = cli.command else { panic!() };
        let cfg = args.trace.config(1);
        assert_eq!(cfg, TraceConfig::default());
    }

    #[test]
    fn bad_flags_exit_two() {
        assert_eq!(run_cli(["trace", "run", "--T", "abc", "--out", "x"]), 2);
        assert_eq!(run_cli(["trace", "frobnicate"]), 2);
        assert_eq!(run_cli(["trace", "run", "--task", "blur9", "--out", "x"]), 2);
        assert_eq!(run_cli(["trace", "run", "--out", "x"]), 2);
    }

    #[test]
    fn beta_pairs_parse() {
        assert_eq!(parse_beta_pair("5e-3:5e-4").unwrap(), (5e-3, 5e-4));
        assert!(parse_beta_pair("5e-3").is_err());
    }

    #[test]
    fn generated_inputs() {
        assert_eq!(load_input("synthetic:16").unwrap().shape(), &[1, 16, 16]);
        assert_eq!(load_input("synthetic-rgb:16").unwrap().shape(), &[3, 16, 16]);
        assert_eq!(load_input("shepp-logan:32").unwrap().shape(), &[1, 32, 32]);
        assert!(load_input("synthetic:x").is_err());
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = RunManifest::new(TaskSpec::new(TaskKind::CtSparse, 3).with_views(30), "shepp-logan:64", "out", TraceConfig::default());
        let back: RunManifest = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
