//! Least-squares clustering of an image's intensities (K-means).
//!
//! Seeding is deterministic: the K initial centres are the sample quantiles
//! of `x` at levels `(k − ½)/K`. An empty cluster is re-seeded at the pixel
//! farthest from its nearest centre.

use crate::error::{invalid, Result};
use crate::grid::{Image, LabelField};

/// Class centres `μ_1..μ_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeans(Vec<f64>);

impl ClassMeans {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid(format!(
                "need at least 2 class means, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("class means must be finite"));
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Result<Self> {
        Self::new(vec![0.0; k])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Number of classes K.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mean of class `label` (1-based).
    pub fn of(&self, label: u32) -> f64 {
        self.0[label as usize - 1]
    }

    /// True when two classes share a centre.
    pub fn has_duplicates(&self) -> bool {
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        v.windows(2).any(|w| w[0] == w[1])
    }
}

/// Output of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: LabelField,
    pub means: ClassMeans,
    /// Within-cluster sum of squares of `(labels, means)`.
    pub sse: f64,
    /// SSE after each assignment step, in order.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
    /// Labels were unchanged by the final assignment step.
    pub converged: bool,
    /// Number of non-empty classes in `labels`.
    pub effective_classes: usize,
    pub duplicate_means: bool,
}

/// Nearest-centre assignment; ties go to the lowest class index.
pub fn assign(x: &Image, mu: &ClassMeans) -> LabelField {
    let means = mu.values();
    let labels = x
        .data()
        .iter()
        .map(|&v| {
            let mut best = 0;
            let mut best_d = (v - means[0]) * (v - means[0]);
            for (k, &m) in means.iter().enumerate().skip(1) {
                let d = (v - m) * (v - m);
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            best as u32 + 1
        })
        .collect();
    LabelField::from_raw(x.width(), x.height(), labels, means.len())
}

/// Class means of `x` over each `S_k`. Empty classes are re-seeded at the
/// pixel farthest from its nearest non-empty centre (lowest pixel index on
/// ties), one class at a time in index order.
pub fn update_means(x: &Image, z: &LabelField, k: usize) -> Result<ClassMeans> {
    Ok(update_means_counted(x, z, k)?.0)
}

fn update_means_counted(x: &Image, z: &LabelField, k: usize) -> Result<(ClassMeans, usize)> {
    x.check_shape(z.width(), z.height())?;
    if z.num_classes() != k {
        return Err(invalid(format!(
            "label field has K = {}, expected {k}",
            z.num_classes()
        )));
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&v, &l) in x.data().iter().zip(z.labels()) {
        sums[l as usize - 1] += v;
        counts[l as usize - 1] += 1;
    }
    let mut centres: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let mut reseeded = 0;
    for j in 0..k {
        if centres[j].is_some() {
            continue;
        }
        let placed: Vec<f64> = centres.iter().flatten().copied().collect();
        let mut far = x.data()[0];
        let mut far_d = f64::NEG_INFINITY;
        for &v in x.data() {
            let d = placed
                .iter()
                .map(|c| (v - c) * (v - c))
                .fold(f64::INFINITY, f64::min);
            if d > far_d {
                far = v;
                far_d = d;
            }
        }
        centres[j] = Some(far);
        reseeded += 1;
    }
    let values = centres.into_iter().map(|c| c.unwrap_or_default()).collect();
    Ok((ClassMeans::new(values)?, reseeded))
}

/// Within-cluster sum of squares.
pub fn sse(x: &Image, z: &LabelField, mu: &ClassMeans) -> f64 {
    x.data()
        .iter()
        .zip(z.labels())
        .map(|(&v, &l)| {
            let r = v - mu.of(l);
            r * r
        })
        .sum()
}

/// Quantile seeds at levels `(k − ½)/K`, linear interpolation between order
/// statistics.
pub fn quantile_seeds(x: &Image, k: usize) -> Result<ClassMeans> {
    let mut sorted = x.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let values = (0..k)
        .map(|j| {
            let pos = (j as f64 + 0.5) / k as f64 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect();
    ClassMeans::new(values)
}

/// K-means from quantile seeds.
///
/// Errors when `k < 2` or when `x` has fewer than `k` distinct values.
pub fn kmeans(x: &Image, k: usize, max_iters: usize) -> Result<Clustering> {
    if k < 2 {
        return Err(invalid(format!("K must be at least 2, got {k}")));
    }
    let distinct = x.distinct_count();
    if k > distinct {
        return Err(invalid(format!(
            "K = {k} exceeds the number of distinct values ({distinct})"
        )));
    }
    kmeans_from(x, quantile_seeds(x, k)?, max_iters)
}

/// K-means started from the given centres.
pub fn kmeans_from(x: &Image, init: ClassMeans, max_iters: usize) -> Result<Clustering> {
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    let k = init.len();
    let mut means = init;
    let mut labels = assign(x, &means);
    let mut sse_history = vec![sse(x, &labels, &means)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        means = update_means_counted(x, &labels, k)?.0;
        let next = assign(x, &means);
        sse_history.push(sse(x, &next, &means));
        let unchanged = next == labels;
        labels = next;
        if unchanged {
            converged = true;
            break;
        }
    }
    let effective_classes = labels.class_sizes().iter().filter(|&&c| c > 0).count();
    Ok(Clustering {
        sse: *sse_history.last().expect("history is never empty"),
        duplicate_means: means.has_duplicates(),
        labels,
        means,
        sse_history,
        iterations,
        converged,
        effective_classes,
    })
}
