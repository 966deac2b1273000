#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use svaseg_core::{Image, LabelField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, amplitude: f64) -> Image {
    Image::new(
        w,
        h,
        (0..w * h)
            .map(|_| rng.random_range(-amplitude..amplitude))
            .collect(),
    )
    .unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, w: usize, h: usize, k: usize) -> LabelField {
    LabelField::new(
        w,
        h,
        (0..w * h).map(|_| rng.random_range(1..=k as u32)).collect(),
        k,
    )
    .unwrap()
}

/// Label map with `k - 1` random ellipses painted over a class-1 background.
pub fn blob_labels(rng: &mut ChaCha8Rng, w: usize, h: usize, k: usize) -> LabelField {
    loop {
        let mut labels = vec![1u32; w * h];
        for class in 2..=k as u32 {
            let cy = rng.random_range(0.25..0.75) * h as f64;
            let cx = rng.random_range(0.25..0.75) * w as f64;
            let ry = rng.random_range(0.15..0.35) * h as f64;
            let rx = rng.random_range(0.15..0.35) * w as f64;
            for r in 0..h {
                for c in 0..w {
                    let dy = (r as f64 + 0.5 - cy) / ry;
                    let dx = (c as f64 + 0.5 - cx) / rx;
                    if dy * dy + dx * dx <= 1.0 {
                        labels[r * w + c] = class;
                    }
                }
            }
        }
        let z = LabelField::new(w, h, labels, k).unwrap();
        if z.class_sizes().iter().all(|&s| s > 0) {
            return z;
        }
    }
}

/// Plateau `(k − ½)/K` per class plus Gaussian noise.
pub fn phantom(rng: &mut ChaCha8Rng, z: &LabelField, sigma: f64) -> Image {
    let k = z.num_classes() as f64;
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let data = z
        .labels()
        .iter()
        .map(|&l| {
            let base = (l as f64 - 0.5) / k;
            if sigma > 0.0 {
                base + noise.sample(rng)
            } else {
                base
            }
        })
        .collect();
    Image::new(z.width(), z.height(), data).unwrap()
}

/// Fraction of pixels where `a` and `b` agree, maximised over relabellings.
pub fn accuracy(a: &LabelField, b: &LabelField) -> f64 {
    let k = a.num_classes().max(b.num_classes());
    let mut perm: Vec<u32> = (1..=k as u32).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits = a
            .labels()
            .iter()
            .zip(b.labels())
            .filter(|(&x, &y)| p[x as usize - 1] == y)
            .count();
        best = best.max(hits);
    });
    best as f64 / a.len() as f64
}

fn permute(p: &mut Vec<u32>, i: usize, f: &mut impl FnMut(&[u32])) {
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
