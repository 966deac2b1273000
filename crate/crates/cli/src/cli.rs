//! Argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 success, 1 error (including bad arguments), 2 the
//! segmentation stopped at the iteration limit without converging.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use svaseg_core::{segment, segment_tsa, SegmentationResult, SvaConfig, TraceKind};

use crate::error::{AppError, Result};
use crate::io::{load_image, load_labels, save_result};
use crate::phantom::{self, accuracy};
use crate::verify::{self, VerifyPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "svaseg",
    version,
    about = "Unsupervised K-class segmentation of grayscale images"
)]
pub struct Cli {
    /// Worker threads; 1 makes output byte-reproducible across machines
    /// with different core counts (it is reproducible for any fixed count).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment with the self-tuned regularisation weight.
    Segment(SegmentArgs),
    /// Two-stage baseline: one TV denoise at a fixed weight, then K-means.
    Tsa(TsaArgs),
    /// Cross-check the solvers against the reference implementations.
    Verify(VerifyArgs),
    /// Write a synthetic test image and its ground-truth label map.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Maximum outer iterations T.
    #[arg(long, default_value_t = 50)]
    pub max_outer: usize,
    /// Maximum inner iterations L.
    #[arg(long, default_value_t = 25)]
    pub max_inner: usize,
    /// Relative change in λ that ends the inner loop.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = svaseg_core::tvprox::DEFAULT_TOL)]
    pub prox_tol: f64,
    #[arg(long, default_value_t = svaseg_core::tvprox::DEFAULT_MAX_SWEEPS)]
    pub prox_max_sweeps: usize,
    #[arg(long, default_value_t = 100)]
    pub kmeans_max_iters: usize,
    /// Factor applied to the [0, 1] normalised input before iterating.
    #[arg(long, default_value_t = 255.0)]
    pub intensity_scale: f64,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Number of classes K.
    #[arg(short = 'k', long)]
    pub classes: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Label map to score the result against.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Print every trace record to stderr.
    #[arg(short, long)]
    pub verbose: bool,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TsaArgs {
    #[arg(short = 'k', long)]
    pub classes: usize,
    /// TV weight in working units (0 skips the denoise).
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(short, long)]
    pub verbose: bool,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_shape)]
    pub shape: (usize, usize),
    #[arg(short = 'k', long)]
    pub classes: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    pub output: PathBuf,
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let dim = |v: &str| match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("bad dimension {v:?} in {s:?}")),
    };
    Ok((dim(w)?, dim(h)?))
}

/// Every setting that shapes a `segment` or `tsa` run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub sva: SvaConfig,
    /// Fixed weight for the two-stage baseline; `None` for `segment`.
    pub lambda: Option<f64>,
    pub ground_truth: Option<PathBuf>,
    pub verbose: bool,
}

impl SolverArgs {
    fn config(&self, classes: usize) -> SvaConfig {
        SvaConfig {
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            tol: self.tol,
            prox_tol: self.prox_tol,
            prox_max_sweeps: self.prox_max_sweeps,
            kmeans_max_iters: self.kmeans_max_iters,
            intensity_scale: self.intensity_scale,
            ..SvaConfig::new(classes)
        }
    }
}

impl From<SegmentArgs> for RunConfig {
    fn from(a: SegmentArgs) -> Self {
        Self {
            sva: a.solver.config(a.classes),
            input: a.input,
            output: a.output,
            lambda: None,
            ground_truth: a.ground_truth,
            verbose: a.verbose,
        }
    }
}

impl From<TsaArgs> for RunConfig {
    fn from(a: TsaArgs) -> Self {
        Self {
            sva: a.solver.config(a.classes),
            input: a.input,
            output: a.output,
            lambda: Some(a.lambda),
            ground_truth: a.ground_truth,
            verbose: a.verbose,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let outcome = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(cli.command)),
        Err(e) => Err(AppError::Usage(format!("cannot start worker pool: {e}"))),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("svaseg: error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Segment(a) => run_segmentation(&a.into()),
        Command::Tsa(a) => run_segmentation(&a.into()),
        Command::Verify(a) => run_verify(a.seed),
        Command::Phantom(a) => run_phantom(&a),
    }
}

pub fn run_segmentation(rc: &RunConfig) -> Result<i32> {
    let loaded = load_image(&rc.input)?;
    if loaded.constant {
        eprintln!(
            "svaseg: warning: {} is constant; normalised to all zeros",
            rc.input.display()
        );
    }
    let result = match rc.lambda {
        None => segment(&loaded.image, &rc.sva)?,
        Some(lambda) => segment_tsa(&loaded.image, rc.sva.classes, lambda, &rc.sva)?,
    };
    if rc.verbose {
        print_trace(&result);
    }
    let paths = save_result(&result, &rc.sva, &rc.output)?;

    let mut out = std::io::stdout().lock();
    let means: Vec<String> = result
        .means_in_input_units()
        .iter()
        .map(|m| format!("{m:.6}"))
        .collect();
    let _ = writeln!(out, "converged        {}", result.converged);
    let _ = writeln!(out, "outer iterations {}", result.outer_iterations);
    let _ = writeln!(out, "lambda_final     {:.6}", result.lambda_final);
    let _ = writeln!(out, "means            {}", means.join(" "));
    if result.effective_classes < rc.sva.classes {
        let _ = writeln!(
            out,
            "warning          only {} of {} classes are occupied",
            result.effective_classes, rc.sva.classes
        );
    }
    if let Some(gt) = &rc.ground_truth {
        let truth = load_labels(gt)?;
        if truth.shape() != result.labels.shape() {
            return Err(AppError::Format {
                path: gt.clone(),
                reason: "ground truth shape differs from the input".into(),
            });
        }
        let _ = writeln!(
            out,
            "accuracy         {:.6}",
            accuracy(&result.labels, &truth)
        );
    }
    for p in [&paths.labels, &paths.x, &paths.trace] {
        let _ = writeln!(out, "wrote            {}", p.display());
    }
    Ok(if result.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn print_trace(result: &SegmentationResult) {
    let mut err = std::io::stderr().lock();
    for r in &result.trace {
        let kind = match r.kind {
            TraceKind::Inner => "inner",
            TraceKind::Outer => "outer",
        };
        let _ = writeln!(
            err,
            "{kind:<5} t={:<3} l={:<3} lambda={:.6e} tv={:.6e} F={:.9e} sweeps={} changed={}",
            r.outer, r.inner, r.lambda, r.tv, r.objective, r.prox_sweeps, r.labels_changed
        );
    }
}

fn run_verify(seed: u64) -> Result<i32> {
    let reports = verify::run(&VerifyPlan {
        seed,
        ..VerifyPlan::default()
    })?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", verify::table_header());
    for r in &reports {
        let _ = writeln!(out, "{r}");
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    let _ = writeln!(out, "{passed}/{} checks passed", reports.len());
    Ok(if passed == reports.len() {
        EXIT_OK
    } else {
        EXIT_ERROR
    })
}

fn run_phantom(a: &PhantomArgs) -> Result<i32> {
    let p = phantom::generate(a.shape.0, a.shape.1, a.classes, a.noise, a.seed)?;
    std::fs::create_dir_all(&a.output).map_err(crate::error::io_err(&a.output))?;
    let (image, truth) = phantom::write(Path::new(&a.output), &p)?;
    println!("wrote {}", image.display());
    println!("wrote {}", truth.display());
    Ok(EXIT_OK)
}
