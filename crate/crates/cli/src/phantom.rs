//! Synthetic piecewise-constant test images with known labels.
//!
//! Class 1 fills the background; classes `2..=K` are ellipses painted in
//! order, so later classes may cover earlier ones. Class `k` has plateau
//! `(k − ½)/K` and every pixel gets independent Gaussian noise. All
//! randomness comes from a ChaCha8 stream seeded with `seed`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use svaseg_core::{Image, LabelField};

use crate::error::{AppError, Result};
use crate::io::{save_gray16, save_labels};

pub const IMAGE_FILE: &str = "phantom.png";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.png";

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: Image,
    pub truth: LabelField,
}

pub fn plateau(label: u32, k: usize) -> f64 {
    (label as f64 - 0.5) / k as f64
}

pub fn generate(width: usize, height: usize, k: usize, noise: f64, seed: u64) -> Result<Phantom> {
    if k < 2 || width * height < k {
        return Err(AppError::Usage(format!(
            "cannot place {k} classes on a {width}x{height} grid"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(AppError::Usage(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = loop {
        let mut labels = vec![1u32; width * height];
        for class in 2..=k as u32 {
            let cy = rng.random_range(0.2..0.8) * height as f64;
            let cx = rng.random_range(0.2..0.8) * width as f64;
            let ry = rng.random_range(0.12..0.35) * height as f64;
            let rx = rng.random_range(0.12..0.35) * width as f64;
            for r in 0..height {
                for c in 0..width {
                    let dy = (r as f64 + 0.5 - cy) / ry;
                    let dx = (c as f64 + 0.5 - cx) / rx;
                    if dy * dy + dx * dx <= 1.0 {
                        labels[r * width + c] = class;
                    }
                }
            }
        }
        let z = LabelField::new(width, height, labels, k)?;
        if z.class_sizes().iter().all(|&s| s > 0) {
            break z;
        }
    };
    let gauss = Normal::new(0.0, noise).expect("noise checked above");
    let data = truth
        .labels()
        .iter()
        .map(|&l| {
            plateau(l, k)
                + if noise > 0.0 {
                    gauss.sample(&mut rng)
                } else {
                    0.0
                }
        })
        .collect();
    Ok(Phantom {
        image: Image::new(width, height, data)?,
        truth,
    })
}

/// Writes `phantom.png` (16-bit, min-max scaled) and `ground_truth.png`
/// (label map) into `dir`.
pub fn write(dir: &Path, p: &Phantom) -> Result<(PathBuf, PathBuf)> {
    let image = dir.join(IMAGE_FILE);
    let truth = dir.join(GROUND_TRUTH_FILE);
    save_gray16(&image, &p.image)?;
    save_labels(&truth, &p.truth)?;
    Ok((image, truth))
}

/// Fraction of pixels on which `a` and `b` agree, maximised over
/// relabellings of `a` when K ≤ 8 (label identity is arbitrary).
pub fn accuracy(a: &LabelField, b: &LabelField) -> f64 {
    let k = a.num_classes().max(b.num_classes());
    let n = a.len().max(1) as f64;
    if a.shape() != b.shape() {
        return 0.0;
    }
    // confusion[i][j] = #pixels with a = i + 1, b = j + 1
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &q) in a.labels().iter().zip(b.labels()) {
        confusion[p as usize - 1][q as usize - 1] += 1;
    }
    let identity = (0..k).map(|i| confusion[i][i]).sum::<usize>();
    if k > 8 {
        return identity as f64 / n;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        best = best.max((0..k).map(|i| confusion[i][p[i]]).sum::<usize>());
    });
    best as f64 / n
}

fn permute(p: &mut [usize], i: usize, f: &mut impl FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, f);
        p.swap(i, j);
    }
}
