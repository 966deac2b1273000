//! Reference implementations for verification.
//!
//! Nothing here calls into `tvprox`, `cluster` or `sva`, nor into the energy
//! functions of `grid`; only the plain data types are shared. Every routine
//! favours directness over speed and is meant for small inputs.

use std::fmt;

use crate::cluster::ClassMeans;
use crate::error::{invalid, Result};
use crate::grid::{Image, LabelField};

/// Largest number of assignments [`exhaustive_clustering`] will enumerate.
pub const MAX_ENUMERATION: u64 = 1 << 20;

/// Comparison of an oracle value against a candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub instance: String,
    pub oracle: f64,
    pub candidate: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Passes when `|oracle − candidate| ≤ tolerance`.
    pub fn close(instance: impl Into<String>, oracle: f64, candidate: f64, tolerance: f64) -> Self {
        let gap = (oracle - candidate).abs();
        Self {
            instance: instance.into(),
            oracle,
            candidate,
            gap,
            tolerance,
            pass: gap <= tolerance,
        }
    }

    /// Passes when `candidate ≥ oracle − tolerance` (the oracle is a lower
    /// bound, e.g. a global minimum).
    pub fn bounded_below(
        instance: impl Into<String>,
        oracle: f64,
        candidate: f64,
        tolerance: f64,
    ) -> Self {
        let gap = (oracle - candidate).abs();
        Self {
            instance: instance.into(),
            oracle,
            candidate,
            gap,
            tolerance,
            pass: candidate >= oracle - tolerance,
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<44} {:>16.9e} {:>16.9e} {:>10.3e} {:>9.1e}  {}",
            self.instance,
            self.oracle,
            self.candidate,
            self.gap,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Global least-squares clustering by enumerating all `K^N` assignments.
///
/// Returns the first minimiser in enumeration order (pixel 0 is the least
/// significant digit). Empty classes get the overall mean of `x`.
pub fn exhaustive_clustering(x: &Image, k: usize) -> Result<(LabelField, ClassMeans, f64)> {
    if k < 2 {
        return Err(invalid(format!("K must be at least 2, got {k}")));
    }
    let n = x.len();
    let total = (k as u64)
        .checked_pow(n as u32)
        .filter(|&t| t <= MAX_ENUMERATION)
        .ok_or_else(|| {
            invalid(format!(
                "{k}^{n} assignments exceed the enumeration cap {MAX_ENUMERATION}"
            ))
        })?;
    let v = x.data();
    let overall = v.iter().sum::<f64>() / n as f64;

    let mut digits = vec![0usize; n];
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for code in 0..total {
        let mut c = code;
        for d in digits.iter_mut() {
            *d = (c % k as u64) as usize;
            c /= k as u64;
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (i, &d) in digits.iter().enumerate() {
            sums[d] += v[i];
            counts[d] += 1;
        }
        let means: Vec<f64> = (0..k)
            .map(|j| {
                if counts[j] > 0 {
                    sums[j] / counts[j] as f64
                } else {
                    overall
                }
            })
            .collect();
        let mut sse = 0.0;
        for (i, &d) in digits.iter().enumerate() {
            sse += (v[i] - means[d]).powi(2);
        }
        if best.as_ref().is_none_or(|b| sse < b.2) {
            best = Some((digits.clone(), means, sse));
        }
    }
    let (digits, means, sse) = best.expect("at least one assignment");
    let labels = LabelField::new(
        x.width(),
        x.height(),
        digits.into_iter().map(|d| d as u32 + 1).collect(),
        k,
    )?;
    Ok((labels, ClassMeans::new(means)?, sse))
}

/// Exact minimiser of `½Σ(x_i − m_i)² + weight·Σ|x_{i+1} − x_i|`.
///
/// Direct taut-string method: the output is built segment by segment while
/// tracking the admissible range `[vmin, vmax]` of the current segment's
/// value and the running dual variable, emitting a jump as soon as the tube
/// constraint is violated.
pub fn tv1d_exact(signal: &[f64], weight: f64) -> Vec<f64> {
    let n = signal.len();
    if n == 0 || weight <= 0.0 {
        return signal.to_vec();
    }
    let lambda = weight;
    let mut out = vec![0.0; n];
    let (mut k, mut k0) = (0usize, 0usize);
    let (mut kplus, mut kminus) = (0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = signal[0] - lambda;
    let mut vmax = signal[0] + lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = signal[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = signal[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    out[k0] = vmin;
                    k0 += 1;
                }
                return out;
            }
        }
        umin += signal[k + 1] - vmin;
        if umin < -lambda {
            loop {
                out[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmin = signal[k0];
            vmax = vmin + 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += signal[k + 1] - vmax;
        if umax > lambda {
            loop {
                out[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmax = signal[k0];
            vmin = vmax - 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= -lambda {
                kplus = k;
                vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                umax = -lambda;
            }
        }
    }
}

/// Largest violation of the optimality conditions of the 1D TV problem at
/// `x`: the cumulative residual `u_k = Σ_{i≤k}(m_i − x_i)` must satisfy
/// `u_{n−1} = 0`, `|u_k| ≤ weight`, and `u_k = ∓weight` where `x` jumps
/// up/down between `k` and `k + 1`.
pub fn tv1d_optimality_residual(signal: &[f64], weight: f64, x: &[f64]) -> f64 {
    let n = signal.len();
    let mut u = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        u += signal[i] - x[i];
        if i + 1 == n {
            worst = worst.max(u.abs());
        } else {
            let jump = x[i + 1] - x[i];
            let viol = if jump > 0.0 {
                (u + weight).abs()
            } else if jump < 0.0 {
                (u - weight).abs()
            } else {
                (u.abs() - weight).max(0.0)
            };
            worst = worst.max(viol);
        }
    }
    worst
}

struct Grid2 {
    w: usize,
    h: usize,
}

impl Grid2 {
    fn grad(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gx = vec![0.0; self.w * self.h];
        let mut gy = vec![0.0; self.w * self.h];
        for r in 0..self.h {
            for c in 0..self.w {
                let i = r * self.w + c;
                if c + 1 < self.w {
                    gx[i] = u[i + 1] - u[i];
                }
                if r + 1 < self.h {
                    gy[i] = u[i + self.w] - u[i];
                }
            }
        }
        (gx, gy)
    }

    /// Negative adjoint of `grad`.
    fn div(&self, px: &[f64], py: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.w * self.h];
        for r in 0..self.h {
            for c in 0..self.w {
                let i = r * self.w + c;
                let mut v = 0.0;
                if c + 1 < self.w {
                    v += px[i];
                }
                if c > 0 {
                    v -= px[i - 1];
                }
                if r + 1 < self.h {
                    v += py[i];
                }
                if r > 0 {
                    v -= py[i - self.w];
                }
                d[i] = v;
            }
        }
        d
    }

    fn project(px: &mut [f64], py: &mut [f64]) {
        for (a, b) in px.iter_mut().zip(py.iter_mut()) {
            let n = a.hypot(*b);
            if n > 1.0 {
                *a /= n;
                *b /= n;
            }
        }
    }
}

/// Accelerated projected gradient (FISTA) on the dual of
/// `½‖x − target‖² + weight·TV(x)`, returning the primal
/// `x = target − weight·div p` after `iters` steps.
pub fn projected_gradient_reference(target: &Image, weight: f64, iters: usize) -> Image {
    if weight <= 0.0 {
        return target.clone();
    }
    let g = Grid2 {
        w: target.width(),
        h: target.height(),
    };
    let m = target.data();
    let n = m.len();
    let (mut px, mut py) = (vec![0.0; n], vec![0.0; n]);
    let (mut qx, mut qy) = (px.clone(), py.clone());
    let mut t = 1.0f64;
    for _ in 0..iters {
        let d = g.div(&qx, &qy);
        let s: Vec<f64> = d.iter().zip(m).map(|(dv, mv)| dv - mv / weight).collect();
        let (gx, gy) = g.grad(&s);
        let mut nx: Vec<f64> = qx.iter().zip(&gx).map(|(q, gv)| q + gv / 8.0).collect();
        let mut ny: Vec<f64> = qy.iter().zip(&gy).map(|(q, gv)| q + gv / 8.0).collect();
        Grid2::project(&mut nx, &mut ny);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            qx[i] = nx[i] + beta * (nx[i] - px[i]);
            qy[i] = ny[i] + beta * (ny[i] - py[i]);
        }
        px = nx;
        py = ny;
        t = t_next;
    }
    let d = g.div(&px, &py);
    let x = m.iter().zip(&d).map(|(mv, dv)| mv - weight * dv).collect();
    Image::new(target.width(), target.height(), x).expect("finite primal")
}

/// Minimiser of the unfused two-term problem
/// `Σ ½(x_n − y_n)² + ½(x_n − μ_{z_n})² + λ·TV(x)` by FISTA on its own dual,
/// `min_{|p|≤1} ¼‖y + μ_z − λ·div p‖²`, with primal `x = (y + μ_z − λ·div p)/2`.
pub fn two_term_reference(
    y: &Image,
    z: &LabelField,
    mu: &ClassMeans,
    lambda: f64,
    iters: usize,
) -> Image {
    let g = Grid2 {
        w: y.width(),
        h: y.height(),
    };
    let n = y.len();
    let b: Vec<f64> = (0..n)
        .map(|i| y.data()[i] + mu.values()[z.labels()[i] as usize - 1])
        .collect();
    if lambda <= 0.0 {
        let x = b.iter().map(|v| v / 2.0).collect();
        return Image::new(y.width(), y.height(), x).expect("finite primal");
    }
    let step = 1.0 / (8.0 * lambda);
    let (mut px, mut py) = (vec![0.0; n], vec![0.0; n]);
    let (mut qx, mut qy) = (px.clone(), py.clone());
    let mut t = 1.0f64;
    for _ in 0..iters {
        let d = g.div(&qx, &qy);
        let s: Vec<f64> = (0..n).map(|i| b[i] - lambda * d[i]).collect();
        let (gx, gy) = g.grad(&s);
        let mut nx: Vec<f64> = (0..n).map(|i| qx[i] - step * gx[i]).collect();
        let mut ny: Vec<f64> = (0..n).map(|i| qy[i] - step * gy[i]).collect();
        Grid2::project(&mut nx, &mut ny);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            qx[i] = nx[i] + beta * (nx[i] - px[i]);
            qy[i] = ny[i] + beta * (ny[i] - py[i]);
        }
        px = nx;
        py = ny;
        t = t_next;
    }
    let d = g.div(&px, &py);
    let x = (0..n).map(|i| 0.5 * (b[i] - lambda * d[i])).collect();
    Image::new(y.width(), y.height(), x).expect("finite primal")
}

/// Isotropic TV by explicit neighbour lookups.
pub fn naive_tv(x: &Image) -> f64 {
    let (w, h) = x.shape();
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let here = x.get(r, c);
            let right = if c + 1 < w {
                x.get(r, c + 1) - here
            } else {
                0.0
            };
            let down = if r + 1 < h {
                x.get(r + 1, c) - here
            } else {
                0.0
            };
            total += (right * right + down * down).sqrt();
        }
    }
    total
}

/// Primal objective `½‖x − target‖² + weight·TV(x)` by naive loops.
pub fn prox_objective(target: &Image, weight: f64, x: &Image) -> f64 {
    let mut data = 0.0;
    for (a, b) in x.data().iter().zip(target.data()) {
        data += 0.5 * (a - b) * (a - b);
    }
    data + weight * naive_tv(x)
}

/// Segmentation objective evaluated class by class, by naive loops.
pub fn independent_objective(x: &Image, z: &LabelField, mu: &ClassMeans, y: &Image) -> f64 {
    let (w, h) = x.shape();
    let mut total = 0.0;
    for k in 1..=mu.len() as u32 {
        let mean = mu.values()[k as usize - 1];
        for r in 0..h {
            for c in 0..w {
                if z.get(r, c) == k {
                    let xv = x.get(r, c);
                    total += 0.5 * (xv - y.get(r, c)).powi(2) + 0.5 * (xv - mean).powi(2);
                }
            }
        }
    }
    total + (w * h) as f64 * (naive_tv(x) + 1.0).ln()
}
