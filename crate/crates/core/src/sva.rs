//! The segmentation estimator.
//!
//! Minimises, by alternation over `x`, `z` and `μ`,
//!
//! ```text
//! F(x, z, μ) = Σ_n ½(x_n − y_n)² + ½(x_n − μ_{z_n})² + N·log(TV(x) + 1)
//! ```
//!
//! The `x` step is majorisation-minimisation: the concave log penalty is
//! replaced by its tangent at the current iterate `v`, which leaves a TV
//! denoising problem with weight `λ = N / (TV(v) + 1)`. The `(z, μ)` step is
//! K-means on `x`. The penalty constant `N` comes from marginalising the Potts
//! regularisation parameter under a gamma prior with shape `α = N/σ²` and
//! offset `γ = 2 + N|V|`; neither survives as a runtime quantity.
//!
//! The objective is not scale invariant. [`SvaConfig::intensity_scale`]
//! multiplies the input (normally min-max normalised to `[0, 1]`) into a
//! working range before iterating; every quantity in a
//! [`SegmentationResult`] is in working units.

use crate::cluster::{kmeans, kmeans_from, ClassMeans};
use crate::error::{invalid, Result};
use crate::grid::{l0_gradient_norm, tv_isotropic, Image, LabelField};
use crate::tvprox::{self, fuse_data_term, DualField, ProxProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SvaConfig {
    /// Number of classes K.
    pub classes: usize,
    /// Maximum outer iterations T.
    pub max_outer: usize,
    /// Maximum MM iterations per outer iteration L.
    pub max_inner: usize,
    /// Relative λ change ε below which the MM loop stops.
    pub tol: f64,
    pub prox_tol: f64,
    pub prox_max_sweeps: usize,
    pub kmeans_max_iters: usize,
    /// Factor taking input intensities to working units. The default of 255
    /// puts `[0, 1]` inputs on an 8-bit range.
    pub intensity_scale: f64,
    /// Starting `x` in input units; `2y` when absent.
    pub x_init: Option<Image>,
}

impl SvaConfig {
    pub const DEFAULT_MAX_OUTER: usize = 50;
    pub const DEFAULT_MAX_INNER: usize = 25;
    pub const DEFAULT_TOL: f64 = 1e-3;
    pub const DEFAULT_INTENSITY_SCALE: f64 = 255.0;
    pub const DEFAULT_KMEANS_MAX_ITERS: usize = 100;

    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            max_outer: Self::DEFAULT_MAX_OUTER,
            max_inner: Self::DEFAULT_MAX_INNER,
            tol: Self::DEFAULT_TOL,
            prox_tol: tvprox::DEFAULT_TOL,
            prox_max_sweeps: tvprox::DEFAULT_MAX_SWEEPS,
            kmeans_max_iters: Self::DEFAULT_KMEANS_MAX_ITERS,
            intensity_scale: Self::DEFAULT_INTENSITY_SCALE,
            x_init: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(invalid(format!(
                "K must be at least 2, got {}",
                self.classes
            )));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(invalid("max_outer and max_inner must be positive"));
        }
        if self.prox_max_sweeps == 0 || self.kmeans_max_iters == 0 {
            return Err(invalid(
                "prox_max_sweeps and kmeans_max_iters must be positive",
            ));
        }
        for (name, v) in [
            ("tol", self.tol),
            ("prox_tol", self.prox_tol),
            ("intensity_scale", self.intensity_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn prox_problem(&self, prob: ProxProblem) -> Result<ProxProblem> {
        prob.with_tol(self.prox_tol)?
            .with_max_sweeps(self.prox_max_sweeps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// One MM step.
    Inner,
    /// End of an outer iteration, after clustering.
    Outer,
}

/// One line of the iteration trace.
///
/// Inner records: `lambda = N/(tv + 1)` where `tv` is the TV of the iterate
/// the step started from, and `objective` is `F` at the iterate it produced
/// (with the previous outer iteration's `z` and `μ`).
///
/// Outer records: `tv` and `lambda` are for `x^(t)` and `objective` is
/// `F(x^(t), z^(t), μ^(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub kind: TraceKind,
    /// Outer iteration, from 1.
    pub outer: usize,
    /// MM step index from 0 (inner); number of MM steps taken (outer).
    pub inner: usize,
    pub lambda: f64,
    pub tv: f64,
    pub objective: f64,
    /// Same objective with `||∇x||_0` in place of TV.
    pub l0_objective: f64,
    pub prox_sweeps: usize,
    pub labels_changed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Unsupervised,
    /// Fixed-λ denoise followed by one clustering.
    Tsa {
        lambda: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub mode: Mode,
    pub labels: LabelField,
    pub means: ClassMeans,
    pub x: Image,
    /// `N / (TV(x) + 1)`.
    pub lambda_final: f64,
    pub tv_final: f64,
    pub trace: Vec<TraceRecord>,
    /// Labels stopped changing before the outer iteration limit.
    pub converged: bool,
    pub outer_iterations: usize,
    pub intensity_scale: f64,
    pub effective_classes: usize,
    pub duplicate_means: bool,
}

impl SegmentationResult {
    /// Class means divided back by the intensity scale.
    pub fn means_in_input_units(&self) -> Vec<f64> {
        self.means
            .values()
            .iter()
            .map(|m| m / self.intensity_scale)
            .collect()
    }
}

fn quadratic_terms(x: &Image, z: &LabelField, mu: &ClassMeans, y: &Image) -> f64 {
    assert_eq!(x.shape(), y.shape(), "x and y shapes differ");
    assert_eq!(x.shape(), z.shape(), "x and z shapes differ");
    x.data()
        .iter()
        .zip(y.data())
        .zip(z.labels())
        .map(|((&xn, &yn), &l)| {
            let a = xn - yn;
            let b = xn - mu.of(l);
            0.5 * a * a + 0.5 * b * b
        })
        .sum()
}

/// `Σ ½(x_n − y_n)² + ½(x_n − μ_{z_n})² + N·log(TV(x) + 1)`.
pub fn sva_objective(x: &Image, z: &LabelField, mu: &ClassMeans, y: &Image) -> f64 {
    objective_with_tv(x, z, mu, y, tv_isotropic(x))
}

fn objective_with_tv(x: &Image, z: &LabelField, mu: &ClassMeans, y: &Image, tv: f64) -> f64 {
    quadratic_terms(x, z, mu, y) + x.len() as f64 * tv.ln_1p()
}

/// As [`sva_objective`] with `||∇x||_0` in place of TV. Reporting only.
pub fn sva_l0_objective(x: &Image, z: &LabelField, mu: &ClassMeans, y: &Image) -> f64 {
    quadratic_terms(x, z, mu, y) + x.len() as f64 * (l0_gradient_norm(x) as f64).ln_1p()
}

/// `N / (TV(v) + 1)`.
pub fn lambda_schedule(v: &Image) -> f64 {
    lambda_from_tv(v.len(), tv_isotropic(v))
}

fn lambda_from_tv(n: usize, tv: f64) -> f64 {
    n as f64 / (tv + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `λ_ℓ = N / (TV(v^(ℓ)) + 1)`.
    SelfTuned,
    /// A single denoise at the given λ.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub x: Image,
    pub dual: DualField,
    pub records: Vec<TraceRecord>,
    /// `F` at the starting iterate.
    pub initial_objective: f64,
    /// The relative λ change fell below ε before the step limit.
    pub lambda_stabilized: bool,
}

/// MM iterations on `x` with `z` and `μ` held fixed.
pub fn mm_inner(
    y: &Image,
    z: &LabelField,
    mu: &ClassMeans,
    x_init: &Image,
    cfg: &SvaConfig,
) -> Result<InnerResult> {
    mm_inner_with(y, z, mu, x_init, cfg, LambdaRule::SelfTuned, None, 1)
}

/// [`mm_inner`] with an explicit λ rule, warm-start dual and outer index for
/// the trace.
///
/// A prox output is accepted only if it does not increase the convex
/// majorant `Q(x) + λ_ℓ TV(x)` relative to the current iterate; with an
/// inexact prox this keeps `F` non-increasing. A rejected step leaves `v`
/// (and therefore λ) unchanged, which ends the loop.
#[allow(clippy::too_many_arguments)]
pub fn mm_inner_with(
    y: &Image,
    z: &LabelField,
    mu: &ClassMeans,
    x_init: &Image,
    cfg: &SvaConfig,
    rule: LambdaRule,
    warm_start: Option<&DualField>,
    outer: usize,
) -> Result<InnerResult> {
    x_init.check_shape(y.width(), y.height())?;
    let n = y.len();
    let mut v = x_init.clone();
    let mut tv_v = tv_isotropic(&v);
    let mut quad_v = quadratic_terms(&v, z, mu, y);
    let initial_objective = quad_v + n as f64 * tv_v.ln_1p();
    let mut dual = warm_start.cloned();
    let mut records = Vec::new();
    let mut lambda_stabilized = false;

    for step in 0..cfg.max_inner {
        let lambda = match rule {
            LambdaRule::SelfTuned => lambda_from_tv(n, tv_v),
            LambdaRule::Fixed(l) => l,
        };
        let prob = cfg.prox_problem(fuse_data_term(y, z, mu, lambda)?)?;
        let sol = tvprox::solve(&prob, dual.as_ref())?;
        dual = Some(sol.dual);

        let cand = sol.x;
        let tv_c = tv_isotropic(&cand);
        let quad_c = quadratic_terms(&cand, z, mu, y);
        let tv_started = tv_v;
        if quad_c + lambda * tv_c <= quad_v + lambda * tv_v {
            v = cand;
            tv_v = tv_c;
            quad_v = quad_c;
        }
        records.push(TraceRecord {
            kind: TraceKind::Inner,
            outer,
            inner: step,
            lambda,
            tv: tv_started,
            objective: quad_v + n as f64 * tv_v.ln_1p(),
            l0_objective: sva_l0_objective(&v, z, mu, y),
            prox_sweeps: sol.diagnostics.sweeps,
            labels_changed: 0,
        });

        if matches!(rule, LambdaRule::Fixed(_)) {
            break;
        }
        let next = lambda_from_tv(n, tv_v);
        if (next - lambda).abs() < cfg.tol * lambda {
            lambda_stabilized = true;
            break;
        }
    }

    Ok(InnerResult {
        x: v,
        dual: dual.unwrap_or_else(|| DualField::zeros(y.width(), y.height())),
        records,
        initial_objective,
        lambda_stabilized,
    })
}

fn check_input(y: &Image, cfg: &SvaConfig) -> Result<()> {
    cfg.validate()?;
    let distinct = y.distinct_count();
    if cfg.classes > distinct {
        return Err(invalid(format!(
            "K = {} exceeds the number of distinct intensities in the image ({distinct})",
            cfg.classes
        )));
    }
    Ok(())
}

/// Unsupervised segmentation of `y` into `cfg.classes` classes.
///
/// Starts from `x = 2y`, `z = 1`, `μ = 0`. Each outer iteration runs the MM
/// loop on `x` and then K-means on `x`; the first clustering is seeded from
/// quantiles, later ones warm-start from the previous means. Stops when the
/// labels do not change or after `cfg.max_outer` iterations.
pub fn segment(y: &Image, cfg: &SvaConfig) -> Result<SegmentationResult> {
    check_input(y, cfg)?;
    let k = cfg.classes;
    let n = y.len();
    let scale = cfg.intensity_scale;
    let y = y.scaled(scale)?;
    let mut x = match &cfg.x_init {
        Some(x0) => {
            x0.check_shape(y.width(), y.height())?;
            x0.scaled(scale)?
        }
        None => y.scaled(2.0)?,
    };
    let mut z = LabelField::uniform(y.width(), y.height(), k)?;
    let mut mu = ClassMeans::zeros(k)?;
    let mut dual: Option<DualField> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut outer_iterations = 0;
    let mut effective_classes = k;
    let mut duplicate_means = false;

    for t in 1..=cfg.max_outer {
        outer_iterations = t;
        let inner = mm_inner_with(
            &y,
            &z,
            &mu,
            &x,
            cfg,
            LambdaRule::SelfTuned,
            dual.as_ref(),
            t,
        )?;
        let steps = inner.records.len();
        trace.extend(inner.records);
        x = inner.x;
        dual = Some(inner.dual);

        let clustering = if t == 1 {
            kmeans(&x, k, cfg.kmeans_max_iters)?
        } else {
            kmeans_from(&x, mu.clone(), cfg.kmeans_max_iters)?
        };
        let changed = clustering.labels.count_differences(&z);
        z = clustering.labels;
        mu = clustering.means;
        effective_classes = clustering.effective_classes;
        duplicate_means = clustering.duplicate_means;

        let tv = tv_isotropic(&x);
        trace.push(TraceRecord {
            kind: TraceKind::Outer,
            outer: t,
            inner: steps,
            lambda: lambda_from_tv(n, tv),
            tv,
            objective: objective_with_tv(&x, &z, &mu, &y, tv),
            l0_objective: sva_l0_objective(&x, &z, &mu, &y),
            prox_sweeps: 0,
            labels_changed: changed,
        });
        if changed == 0 {
            converged = true;
            break;
        }
    }

    let tv_final = tv_isotropic(&x);
    Ok(SegmentationResult {
        mode: Mode::Unsupervised,
        labels: z,
        means: mu,
        lambda_final: lambda_from_tv(n, tv_final),
        tv_final,
        x,
        trace,
        converged,
        outer_iterations,
        intensity_scale: scale,
        effective_classes,
        duplicate_means,
    })
}

/// Two-stage baseline: one denoise of `½‖x − y‖² + λ·TV(x)` (plain data
/// term, λ in working units) followed by one K-means. `λ = 0` skips the
/// denoise.
pub fn segment_tsa(
    y: &Image,
    classes: usize,
    lambda: f64,
    cfg: &SvaConfig,
) -> Result<SegmentationResult> {
    let cfg = SvaConfig {
        classes,
        ..cfg.clone()
    };
    check_input(y, &cfg)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid(format!(
            "lambda must be non-negative and finite, got {lambda}"
        )));
    }
    let n = y.len();
    let y = y.scaled(cfg.intensity_scale)?;
    let (x, sweeps) = if lambda > 0.0 {
        let sol = tvprox::solve(
            &cfg.prox_problem(ProxProblem::new(y.clone(), lambda)?)?,
            None,
        )?;
        (sol.x, sol.diagnostics.sweeps)
    } else {
        (y.clone(), 0)
    };
    let clustering = kmeans(&x, classes, cfg.kmeans_max_iters)?;
    let z = clustering.labels;
    let mu = clustering.means;
    let tv = tv_isotropic(&x);
    let objective = objective_with_tv(&x, &z, &mu, &y, tv);
    let l0_objective = sva_l0_objective(&x, &z, &mu, &y);
    let trace = vec![
        TraceRecord {
            kind: TraceKind::Inner,
            outer: 1,
            inner: 0,
            lambda,
            tv: tv_isotropic(&y),
            objective,
            l0_objective,
            prox_sweeps: sweeps,
            labels_changed: 0,
        },
        TraceRecord {
            kind: TraceKind::Outer,
            outer: 1,
            inner: 1,
            lambda: lambda_from_tv(n, tv),
            tv,
            objective,
            l0_objective,
            prox_sweeps: 0,
            labels_changed: z.count_differences(&LabelField::uniform(
                z.width(),
                z.height(),
                classes,
            )?),
        },
    ];
    Ok(SegmentationResult {
        mode: Mode::Tsa { lambda },
        lambda_final: lambda_from_tv(n, tv),
        tv_final: tv,
        x,
        converged: clustering.converged,
        outer_iterations: 1,
        intensity_scale: cfg.intensity_scale,
        effective_classes: clustering.effective_classes,
        duplicate_means: clustering.duplicate_means,
        labels: z,
        means: mu,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, d: &[f64]) -> Image {
        Image::new(w, h, d.to_vec()).unwrap()
    }

    #[test]
    fn objective_on_noiseless_piecewise_constant() {
        let x = img(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let z = LabelField::new(2, 2, vec![1, 1, 1, 2], 2).unwrap();
        let mu = ClassMeans::new(vec![0.0, 1.0]).unwrap();
        let f = sva_objective(&x, &z, &mu, &x);
        assert!((f - 4.0 * 3f64.ln()).abs() < 1e-12); // TV = 2
        let f0 = sva_l0_objective(&x, &z, &mu, &x);
        assert!((f0 - 4.0 * 3f64.ln()).abs() < 1e-12); // ||∇x||_0 = 2
    }

    #[test]
    fn objective_zero_on_constant() {
        let x = Image::filled(3, 3, 0.4).unwrap();
        let z = LabelField::uniform(3, 3, 2).unwrap();
        let mu = ClassMeans::new(vec![0.4, 0.9]).unwrap();
        assert_eq!(sva_objective(&x, &z, &mu, &x), 0.0);
        assert_eq!(sva_l0_objective(&x, &z, &mu, &x), 0.0);
    }

    #[test]
    fn lambda_arithmetic() {
        // 100 pixels, TV 24: ten rows of 10 with a unit jump of height 2.4
        // between columns 4 and 5 gives TV = 10 * 2.4 = 24.
        let v = Image::from_fn(10, 10, |_, c| if c < 5 { 0.0 } else { 2.4 }).unwrap();
        assert!((tv_isotropic(&v) - 24.0).abs() < 1e-12);
        assert!((lambda_schedule(&v) - 4.0).abs() < 1e-12);
        assert_eq!(lambda_schedule(&Image::filled(5, 4, 1.0).unwrap()), 20.0);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = SvaConfig::new(3);
        assert_eq!((c.max_outer, c.max_inner, c.tol), (50, 25, 1e-3));
        assert!(c.validate().is_ok());
        assert!(SvaConfig::new(1).validate().is_err());
        let bad = SvaConfig {
            intensity_scale: 0.0,
            ..SvaConfig::new(2)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn segment_rejects_k_above_distinct_values() {
        let y = img(3, 1, &[0.0, 1.0, 1.0]);
        assert!(segment(&y, &SvaConfig::new(3)).is_err());
        assert!(segment(&Image::filled(4, 4, 0.5).unwrap(), &SvaConfig::new(2)).is_err());
    }

    #[test]
    fn tsa_rejects_negative_lambda() {
        let y = img(2, 1, &[0.0, 1.0]);
        assert!(segment_tsa(&y, 2, -1.0, &SvaConfig::new(2)).is_err());
    }
}
