//! Cross-checks of the solvers against the reference implementations in
//! `svaseg_core::oracle`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svaseg_core::oracle::{
    exhaustive_clustering, independent_objective, naive_tv, projected_gradient_reference,
    prox_objective, tv1d_exact, OracleReport,
};
use svaseg_core::{
    kmeans, solve, sva_objective, tv_isotropic, ClassMeans, Image, LabelField, ProxProblem,
};

use crate::error::Result;

/// Instances per check.
#[derive(Debug, Clone, Copy)]
pub struct VerifyPlan {
    pub seed: u64,
    pub clustering: usize,
    pub prox_2d: usize,
    pub prox_1d: usize,
    pub objective: usize,
}

impl Default for VerifyPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            clustering: 40,
            prox_2d: 10,
            prox_1d: 10,
            objective: 20,
        }
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::new(
        w,
        h,
        (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("valid shape")
}

fn tight(target: Image, weight: f64) -> Result<ProxProblem> {
    Ok(ProxProblem::new(target, weight)?
        .with_tol(1e-14)?
        .with_max_sweeps(200_000)?)
}

pub fn run(plan: &VerifyPlan) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = Vec::new();

    for i in 0..plan.clustering {
        let n = rng.random_range(3..=9);
        let k = rng.random_range(2..=3);
        let x = random_image(&mut rng, n, 1);
        let (_, _, best) = exhaustive_clustering(&x, k)?;
        let c = kmeans(&x, k, 100)?;
        out.push(OracleReport::bounded_below(
            format!("kmeans sse, N={n} K={k} #{i}"),
            best,
            c.sse,
            1e-12,
        ));
    }

    for i in 0..plan.prox_2d {
        let m = random_image(&mut rng, 6, 6);
        let weight = rng.random_range(0.05..1.0);
        let reference = projected_gradient_reference(&m, weight, 100_000);
        let sol = solve(&tight(m.clone(), weight)?, None)?;
        out.push(OracleReport::close(
            format!("prox objective 6x6 w={weight:.3} #{i}"),
            prox_objective(&m, weight, &reference),
            prox_objective(&m, weight, &sol.x),
            1e-6 * 36.0,
        ));
    }

    for i in 0..plan.prox_1d {
        let m = random_image(&mut rng, 64, 1);
        let weight = rng.random_range(0.05..1.0);
        let exact = tv1d_exact(m.data(), weight);
        let sol = solve(&tight(m, weight)?, None)?;
        let gap = exact
            .iter()
            .zip(sol.x.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        out.push(OracleReport::close(
            format!("prox max pointwise gap 1x64 w={weight:.3} #{i}"),
            0.0,
            gap,
            1e-5,
        ));
    }

    for i in 0..plan.objective {
        let (w, h) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let y = random_image(&mut rng, w, h);
        let x = random_image(&mut rng, w, h);
        let z = LabelField::new(
            w,
            h,
            (0..w * h).map(|_| rng.random_range(1..=3)).collect(),
            3,
        )?;
        let mu = ClassMeans::new((0..3).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let oracle = independent_objective(&x, &z, &mu, &y);
        out.push(OracleReport::close(
            format!("objective {w}x{h} #{i}"),
            oracle,
            sva_objective(&x, &z, &mu, &y),
            1e-12 * (1.0 + oracle.abs()),
        ));
        out.push(OracleReport::close(
            format!("tv {w}x{h} #{i}"),
            naive_tv(&x),
            tv_isotropic(&x),
            1e-12 * (1.0 + naive_tv(&x)),
        ));
    }
    Ok(out)
}

pub fn table_header() -> String {
    format!(
        "{:<44} {:>16} {:>16} {:>10} {:>9}  {}",
        "instance", "oracle", "candidate", "gap", "tol", "result"
    )
}
