//! Dual projection solver for
//!
//! ```text
//! argmin_x  ½‖x − m‖² + w·TV(x)
//! ```
//!
//! Each sweep takes a projected gradient step of size 1/8 on the dual field
//! `p` (Jacobi style, every pixel reads the previous iterate only) and forms
//! the primal iterate `x = clip(m − w·div p, [min m, max m])`. Clipping to the
//! range of `m` never increases the primal objective, and the solver reports
//! the best primal iterate seen, so the reported objective is non-increasing
//! sweep to sweep even though the raw dual iteration is not monotone in the
//! primal.
//!
//! The stopping test bounds the change of the unclipped primal iterate by
//! `w·√8·‖p_k − p_{k−1}‖` and compares it with `tol·‖m − mean(m)‖`. For a
//! projected gradient step of at most `1/L` the dual step length never
//! increases, so once the test passes it passes on every later sweep, and a
//! warm restart from the returned dual field stops after one sweep.
//!
//! Row reductions are accumulated per row and then summed in row order, so
//! results are bitwise identical for any number of worker threads.

use rayon::prelude::*;

use crate::cluster::ClassMeans;
use crate::error::{invalid, Error, Result};
use crate::grid::{tv_row, Image, LabelField};

/// Dual step size; 1/8 is the stability bound for the 4-connected forward
/// difference discretisation.
pub const DUAL_STEP: f64 = 0.125;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 500;

const PARALLEL_MIN_PIXELS: usize = 1 << 14;

/// Per-pixel dual variables. `ph` is zero in the last column and `pv` is zero
/// in the last row, where the corresponding forward difference does not exist.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    width: usize,
    height: usize,
    ph: Vec<f64>,
    pv: Vec<f64>,
}

impl DualField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ph: vec![0.0; width * height],
            pv: vec![0.0; width * height],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn ph(&self) -> &[f64] {
        &self.ph
    }

    pub fn pv(&self) -> &[f64] {
        &self.pv
    }

    /// Largest pointwise magnitude `sqrt(ph² + pv²)`.
    pub fn max_norm(&self) -> f64 {
        self.ph
            .iter()
            .zip(&self.pv)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }

    fn sanitize(&mut self) {
        let (w, h) = (self.width, self.height);
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                if col + 1 == w {
                    self.ph[i] = 0.0;
                }
                if row + 1 == h {
                    self.pv[i] = 0.0;
                }
                let n = (self.ph[i] * self.ph[i] + self.pv[i] * self.pv[i]).sqrt();
                if n > 1.0 {
                    self.ph[i] /= n;
                    self.pv[i] /= n;
                }
            }
        }
    }
}

/// One TV denoising subproblem `argmin_x ½‖x − target‖² + weight·TV(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxProblem {
    target: Image,
    weight: f64,
    tol: f64,
    max_sweeps: usize,
}

impl ProxProblem {
    pub fn new(target: Image, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(invalid(format!(
                "prox weight must be positive and finite, got {weight}"
            )));
        }
        Ok(Self {
            target,
            weight,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(invalid(format!(
                "prox tolerance must be positive, got {tol}"
            )));
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Result<Self> {
        if max_sweeps == 0 {
            return Err(invalid("max_sweeps must be at least 1"));
        }
        self.max_sweeps = max_sweeps;
        Ok(self)
    }

    pub fn target(&self) -> &Image {
        &self.target
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_sweeps(&self) -> usize {
        self.max_sweeps
    }

    /// Primal objective `½‖x − m‖² + weight·TV(x)`.
    pub fn objective(&self, x: &Image) -> f64 {
        let (w, h) = self.target.shape();
        let m = self.target.data();
        let d = x.data();
        let mut data = 0.0;
        let mut tv = 0.0;
        for row in 0..h {
            let r = row * w..(row + 1) * w;
            data += d[r.clone()]
                .iter()
                .zip(&m[r])
                .map(|(a, b)| 0.5 * (a - b) * (a - b))
                .sum::<f64>();
            tv += tv_row(d, w, h, row);
        }
        data + self.weight * tv
    }
}

/// Folds `½(x − y)² + ½(x − μ_z)²` into a single quadratic.
///
/// Uses `½(x − y)² + ½(x − μ)² = (x − (y + μ)/2)² + ¼(y − μ)²`, so the MM
/// subproblem with weight `λ` has the same minimiser as
/// `½‖x − m‖² + (λ/2)·TV(x)` with `m = (y + μ_z)/2`.
pub fn fuse_data_term(
    y: &Image,
    z: &LabelField,
    mu: &ClassMeans,
    lambda: f64,
) -> Result<ProxProblem> {
    y.check_shape(z.width(), z.height())?;
    let means = mu.values();
    let target = y
        .data()
        .iter()
        .zip(z.labels())
        .map(|(&yn, &l)| {
            means
                .get(l as usize - 1)
                .map(|&m| 0.5 * (yn + m))
                .ok_or_else(|| {
                    invalid(format!("label {l} has no class mean (K = {})", means.len()))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let target = Image::new(y.width(), y.height(), target)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    ProxProblem::new(target, 0.5 * lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxDiagnostics {
    pub sweeps: usize,
    /// Primal objective of the returned `x`.
    pub objective: f64,
    /// Primal objective of the returned `x` minus the dual bound of the
    /// returned dual field; an upper bound on suboptimality.
    pub duality_gap: f64,
    /// Bound on the change of the unclipped primal iterate in the last sweep.
    pub primal_step: f64,
    pub max_dual_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ProxSolution {
    pub x: Image,
    pub dual: DualField,
    pub diagnostics: ProxDiagnostics,
}

/// State after each sweep, handed to the observer of [`solve_observed`].
#[derive(Debug, Clone, Copy)]
pub struct SweepState {
    pub sweep: usize,
    /// Objective of the best primal iterate so far.
    pub objective: f64,
    /// Objective of this sweep's primal iterate.
    pub iterate_objective: f64,
    pub duality_gap: f64,
    pub primal_step: f64,
    pub max_dual_norm: f64,
    pub x_min: f64,
    pub x_max: f64,
}

pub fn solve(prob: &ProxProblem, warm_start: Option<&DualField>) -> Result<ProxSolution> {
    solve_observed(prob, warm_start, |_| {})
}

#[derive(Debug, Clone, Copy, Default)]
struct RowStats {
    data: f64,
    tv: f64,
    dual: f64,
    max_norm: f64,
    x_min: f64,
    x_max: f64,
}

struct Sweeper<'a> {
    width: usize,
    height: usize,
    m: &'a [f64],
    weight: f64,
    lo: f64,
    hi: f64,
    parallel: bool,
}

impl Sweeper<'_> {
    /// One projected gradient step; returns `‖p_new − p_old‖²`.
    fn update_dual(&self, ph: &mut [f64], pv: &mut [f64], div: &[f64]) -> f64 {
        let (w, h, m) = (self.width, self.height, self.m);
        let inv_w = 1.0 / self.weight;
        let u = |i: usize| div[i] - m[i] * inv_w;
        let body = |(row, (ph_row, pv_row)): (usize, (&mut [f64], &mut [f64]))| {
            let mut moved = 0.0;
            for col in 0..w {
                let i = row * w + col;
                let ui = u(i);
                let gh = if col + 1 < w { u(i + 1) - ui } else { 0.0 };
                let gv = if row + 1 < h { u(i + w) - ui } else { 0.0 };
                let qh = ph_row[col] + DUAL_STEP * gh;
                let qv = pv_row[col] + DUAL_STEP * gv;
                let n = (qh * qh + qv * qv).sqrt();
                let (nh, nv) = if n > 1.0 { (qh / n, qv / n) } else { (qh, qv) };
                let (dh, dv) = (nh - ph_row[col], nv - pv_row[col]);
                moved += dh * dh + dv * dv;
                ph_row[col] = nh;
                pv_row[col] = nv;
            }
            moved
        };
        let rows: Vec<f64> = if self.parallel {
            ph.par_chunks_mut(w)
                .zip(pv.par_chunks_mut(w))
                .enumerate()
                .map(body)
                .collect()
        } else {
            ph.chunks_mut(w)
                .zip(pv.chunks_mut(w))
                .enumerate()
                .map(body)
                .collect()
        };
        rows.into_iter().sum()
    }

    /// Recomputes `div p` and the clipped primal iterate.
    fn primal(&self, ph: &[f64], pv: &[f64], div: &mut [f64], x: &mut [f64]) {
        let (w, m) = (self.width, self.m);
        let body = |(row, (div_row, x_row)): (usize, (&mut [f64], &mut [f64]))| {
            for col in 0..w {
                let i = row * w + col;
                let mut d = ph[i] + pv[i];
                if col > 0 {
                    d -= ph[i - 1];
                }
                if row > 0 {
                    d -= pv[i - w];
                }
                div_row[col] = d;
                x_row[col] = (m[i] - self.weight * d).clamp(self.lo, self.hi);
            }
        };
        if self.parallel {
            div.par_chunks_mut(w)
                .zip(x.par_chunks_mut(w))
                .enumerate()
                .for_each(body);
        } else {
            div.chunks_mut(w)
                .zip(x.chunks_mut(w))
                .enumerate()
                .for_each(body);
        }
    }

    fn stats(&self, ph: &[f64], pv: &[f64], div: &[f64], x: &[f64]) -> RowStats {
        let (w, h, m) = (self.width, self.height, self.m);
        let row_stats = |row: usize| {
            let mut s = RowStats {
                x_min: f64::INFINITY,
                x_max: f64::NEG_INFINITY,
                ..RowStats::default()
            };
            for i in row * w..(row + 1) * w {
                let r = x[i] - m[i];
                s.data += 0.5 * r * r;
                let wd = self.weight * div[i];
                s.dual += wd * (m[i] - 0.5 * wd);
                s.max_norm = s.max_norm.max((ph[i] * ph[i] + pv[i] * pv[i]).sqrt());
                s.x_min = s.x_min.min(x[i]);
                s.x_max = s.x_max.max(x[i]);
            }
            s.tv = tv_row(x, w, h, row);
            s
        };
        let rows: Vec<RowStats> = if self.parallel {
            (0..h).into_par_iter().map(row_stats).collect()
        } else {
            (0..h).map(row_stats).collect()
        };
        rows.into_iter().fold(
            RowStats {
                x_min: f64::INFINITY,
                x_max: f64::NEG_INFINITY,
                ..RowStats::default()
            },
            |a, b| RowStats {
                data: a.data + b.data,
                tv: a.tv + b.tv,
                dual: a.dual + b.dual,
                max_norm: a.max_norm.max(b.max_norm),
                x_min: a.x_min.min(b.x_min),
                x_max: a.x_max.max(b.x_max),
            },
        )
    }
}

/// [`solve`] with a callback invoked after every sweep.
pub fn solve_observed(
    prob: &ProxProblem,
    warm_start: Option<&DualField>,
    mut observer: impl FnMut(&SweepState),
) -> Result<ProxSolution> {
    let (w, h) = prob.target.shape();
    let mut dual = match warm_start {
        Some(p) => {
            if p.shape() != (w, h) {
                return Err(Error::ShapeMismatch {
                    expected: (w, h),
                    found: p.shape(),
                });
            }
            if p.ph.iter().chain(&p.pv).any(|v| !v.is_finite()) {
                return Err(invalid("warm-start dual field has non-finite entries"));
            }
            let mut p = p.clone();
            p.sanitize();
            p
        }
        None => DualField::zeros(w, h),
    };

    let sweeper = Sweeper {
        width: w,
        height: h,
        m: prob.target.data(),
        weight: prob.weight,
        lo: prob.target.min(),
        hi: prob.target.max(),
        parallel: w * h >= PARALLEL_MIN_PIXELS,
    };
    let mut div = vec![0.0; w * h];
    let mut x = vec![0.0; w * h];
    sweeper.primal(&dual.ph, &dual.pv, &mut div, &mut x);
    let s = sweeper.stats(&dual.ph, &dual.pv, &div, &x);

    let m = prob.target.data();
    let mean = prob.target.mean();
    let spread = m
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        .sqrt();
    let step_bound = prob.weight * 8f64.sqrt();

    let mut best = s.data + prob.weight * s.tv;
    let mut best_x = x.clone();
    let mut dual_bound = s.dual;
    let mut max_norm = s.max_norm;
    let mut sweeps = 0;
    let mut converged = false;
    let mut last_step = 0.0;

    while sweeps < prob.max_sweeps {
        sweeps += 1;
        let moved = sweeper.update_dual(&mut dual.ph, &mut dual.pv, &div).sqrt();
        let primal_step = step_bound * moved;
        sweeper.primal(&dual.ph, &dual.pv, &mut div, &mut x);
        let s = sweeper.stats(&dual.ph, &dual.pv, &div, &x);
        let obj = s.data + prob.weight * s.tv;
        if obj < best {
            best = obj;
            best_x.copy_from_slice(&x);
        }
        dual_bound = s.dual;
        max_norm = s.max_norm;
        observer(&SweepState {
            sweep: sweeps,
            objective: best,
            iterate_objective: obj,
            duality_gap: best - dual_bound,
            primal_step,
            max_dual_norm: max_norm,
            x_min: s.x_min,
            x_max: s.x_max,
        });
        last_step = primal_step;
        if primal_step <= prob.tol * spread {
            converged = true;
            break;
        }
    }

    Ok(ProxSolution {
        x: Image::from_raw(w, h, best_x),
        dual,
        diagnostics: ProxDiagnostics {
            sweeps,
            objective: best,
            duality_gap: best - dual_bound,
            primal_step: last_step,
            max_dual_norm: max_norm,
            converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.25).unwrap()
    }

    #[test]
    fn fuse_arithmetic() {
        let y = Image::filled(2, 1, 0.0).unwrap();
        let z = LabelField::new(2, 1, vec![2, 2], 2).unwrap();
        let mu = ClassMeans::new(vec![0.0, 1.0]).unwrap();
        let p = fuse_data_term(&y, &z, &mu, 4.0).unwrap();
        assert_eq!(p.target().data(), &[0.5, 0.5]);
        assert_eq!(p.weight(), 2.0);
    }

    #[test]
    fn fuse_identity_when_means_match_data() {
        let y = Image::new(3, 1, vec![0.2, 0.2, 0.9]).unwrap();
        let z = LabelField::new(3, 1, vec![1, 1, 2], 2).unwrap();
        let mu = ClassMeans::new(vec![0.2, 0.9]).unwrap();
        let p = fuse_data_term(&y, &z, &mu, 1.0).unwrap();
        assert_eq!(p.target(), &y);
    }

    #[test]
    fn fuse_rejects_bad_input() {
        let y = Image::filled(2, 1, 0.0).unwrap();
        let z = LabelField::new(2, 1, vec![1, 3], 3).unwrap();
        let mu = ClassMeans::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            fuse_data_term(&y, &z, &mu, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        let z = LabelField::new(1, 2, vec![1, 2], 2).unwrap();
        assert!(matches!(
            fuse_data_term(&y, &z, &mu, 1.0),
            Err(Error::ShapeMismatch { .. })
        ));
        let z = LabelField::new(2, 1, vec![1, 2], 2).unwrap();
        assert!(fuse_data_term(&y, &z, &mu, 0.0).is_err());
        assert!(fuse_data_term(&y, &z, &mu, f64::NAN).is_err());
    }

    #[test]
    fn problem_validation() {
        let m = Image::filled(2, 2, 0.0).unwrap();
        assert!(ProxProblem::new(m.clone(), 0.0).is_err());
        assert!(ProxProblem::new(m.clone(), f64::INFINITY).is_err());
        assert!(ProxProblem::new(m.clone(), 1.0)
            .unwrap()
            .with_tol(0.0)
            .is_err());
        assert!(ProxProblem::new(m, 1.0)
            .unwrap()
            .with_max_sweeps(0)
            .is_err());
    }

    #[test]
    fn vanishing_weight_returns_target() {
        let m = ramp(7, 5);
        let sol = solve(&ProxProblem::new(m.clone(), 1e-12).unwrap(), None).unwrap();
        for (a, b) in sol.x.data().iter().zip(m.data()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn huge_weight_returns_mean() {
        let m = ramp(8, 8);
        let prob = ProxProblem::new(m.clone(), 1e6)
            .unwrap()
            .with_tol(1e-12)
            .unwrap()
            .with_max_sweeps(20_000)
            .unwrap();
        let sol = solve(&prob, None).unwrap();
        let mean = m.mean();
        for v in sol.x.data() {
            assert!((v - mean).abs() <= 1e-4, "{v} vs {mean}");
        }
    }

    #[test]
    fn constant_target_is_fixed_point() {
        let m = Image::filled(4, 3, 0.3).unwrap();
        let sol = solve(&ProxProblem::new(m.clone(), 2.0).unwrap(), None).unwrap();
        assert_eq!(sol.x, m);
        assert!(sol.diagnostics.converged);
    }

    #[test]
    fn single_pixel_image() {
        let m = Image::filled(1, 1, 0.8).unwrap();
        let sol = solve(&ProxProblem::new(m.clone(), 5.0).unwrap(), None).unwrap();
        assert_eq!(sol.x, m);
    }

    #[test]
    fn warm_start_shape_checked() {
        let prob = ProxProblem::new(ramp(3, 3), 1.0).unwrap();
        let p = DualField::zeros(2, 3);
        assert!(matches!(
            solve(&prob, Some(&p)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn not_converged_is_flagged() {
        let prob = ProxProblem::new(ramp(16, 16), 3.0)
            .unwrap()
            .with_tol(1e-15)
            .unwrap()
            .with_max_sweeps(3)
            .unwrap();
        let sol = solve(&prob, None).unwrap();
        assert!(!sol.diagnostics.converged);
        assert_eq!(sol.diagnostics.sweeps, 3);
    }

    #[test]
    fn reported_objective_matches_returned_image() {
        let prob = ProxProblem::new(ramp(9, 6), 0.4).unwrap();
        let sol = solve(&prob, None).unwrap();
        assert_eq!(prob.objective(&sol.x), sol.diagnostics.objective);
        assert!(sol.diagnostics.duality_gap >= -1e-12);
    }
}
