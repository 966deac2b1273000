//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svaseg::io::{LABELS_FILE, TRACE_FILE, X_FILE};
use svaseg::phantom::{self, accuracy};
use svaseg_core::cluster::sse;
use svaseg_core::oracle::{
    exhaustive_clustering, independent_objective, projected_gradient_reference, prox_objective,
    tv1d_exact,
};
use svaseg_core::tvprox::solve_observed;
use svaseg_core::{
    assign, complement_hamiltonian, directed_edge_count, hamiltonian, kmeans, l0_gradient_norm,
    mm_inner, segment, segment_tsa, update_means, ClassMeans, Image, LabelField, Neighborhood,
    ProxProblem, SvaConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::new(
        w,
        h,
        (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn energy_identities() -> Outcome {
    let mut rng = rng(1);
    let nb = Neighborhood::four_connected();
    let (mut fields, mut failures) = (0, 0);
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let k = rng.random_range(2..=4);
        let z = LabelField::new(
            w,
            h,
            (0..w * h).map(|_| rng.random_range(1..=k as u32)).collect(),
            k,
        )
        .unwrap();
        fields += 1;
        if hamiltonian(&z, &nb) + complement_hamiltonian(&z, &nb) != directed_edge_count(w, h, &nb)
        {
            failures += 1;
        }
        let levels: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x = Image::new(
            w,
            h,
            z.labels().iter().map(|&l| levels[l as usize - 1]).collect(),
        )
        .unwrap();
        let mut distinct = levels.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() == k && complement_hamiltonian(&z, &nb) != 2 * l0_gradient_norm(&x) as u64
        {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{fields} label fields, {failures} identity failures"),
    )
}

fn prox_certification() -> Outcome {
    let mut rng = rng(2);
    let tight = |m: Image, w: f64| {
        ProxProblem::new(m, w)
            .unwrap()
            .with_tol(1e-14)
            .unwrap()
            .with_max_sweeps(200_000)
            .unwrap()
    };
    let mut worst_2d: f64 = 0.0;
    let mut worst_1d: f64 = 0.0;
    let mut invariant_breaks = 0;
    for i in 0..200 {
        let (w, h) = if i < 100 { (6, 6) } else { (64, 1) };
        let m = random_image(&mut rng, w, h);
        let weight = rng.random_range(0.02..1.5);
        let (lo, hi) = (m.min(), m.max());
        let mut prev = f64::INFINITY;
        let sol = solve_observed(&tight(m.clone(), weight), None, |s| {
            let ok = s.objective <= prev
                && s.max_dual_norm <= 1.0 + 1e-12
                && s.x_min >= lo - 1e-12
                && s.x_max <= hi + 1e-12;
            if !ok {
                invariant_breaks += 1;
            }
            prev = s.objective;
        })
        .unwrap();
        if i < 100 {
            let reference = projected_gradient_reference(&m, weight, 100_000);
            let gap =
                (prox_objective(&m, weight, &reference) - prox_objective(&m, weight, &sol.x)).abs();
            worst_2d = worst_2d.max(gap / m.len() as f64);
        } else {
            let exact = tv1d_exact(m.data(), weight);
            for (a, b) in exact.iter().zip(sol.x.data()) {
                worst_1d = worst_1d.max((a - b).abs());
            }
        }
    }
    outcome(
        worst_2d <= 1e-6 && worst_1d <= 1e-5 && invariant_breaks == 0,
        format!(
            "100 6x6 worst gap/N {worst_2d:.2e}, 100 1x64 worst pointwise {worst_1d:.2e}, {invariant_breaks} sweep invariant breaks"
        ),
    )
}

fn mm_descent() -> Outcome {
    let mut rng = rng(3);
    let cfg = SvaConfig::new(2);
    let (mut stabilized, mut ascents, mut mismatches) = (0, 0, 0);
    let runs = 24;
    for i in 0..runs {
        let k = 2 + i % 2;
        let sigma = rng.random_range(0.02..0.2);
        let p = phantom::generate(32, 32, k, sigma, 300 + i as u64).unwrap();
        let y = p.image.scaled(255.0).unwrap();
        let mu = ClassMeans::new(
            (1..=k)
                .map(|l| (phantom::plateau(l as u32, k) + rng.random_range(-0.05..0.05)) * 255.0)
                .collect(),
        )
        .unwrap();
        let x0 = y.scaled(rng.random_range(0.5..2.0)).unwrap();
        let n = y.len() as f64;
        let out = mm_inner(&y, &p.truth, &mu, &x0, &cfg).unwrap();
        let mut prev = out.initial_objective;
        for r in &out.records {
            if r.objective > prev + 1e-8 * n {
                ascents += 1;
            }
            prev = r.objective;
        }
        let check = independent_objective(&out.x, &p.truth, &mu, &y);
        if (check - prev).abs() > 1e-9 * check.abs() {
            mismatches += 1;
        }
        stabilized += out.lambda_stabilized as usize;
    }
    outcome(
        ascents == 0 && mismatches == 0 && stabilized * 10 >= runs * 9,
        format!(
            "{runs} instances, {ascents} ascending steps, lambda stabilised in {stabilized}/{runs}"
        ),
    )
}

fn clustering_oracle() -> Outcome {
    let mut rng = rng(4);
    let (mut runs, mut in_basin, mut below, mut not_fixed) = (0, 0, 0, 0);
    while runs < 600 {
        let n = rng.random_range(2..=9);
        let (w, h) = if rng.random_bool(0.5) || n % 3 != 0 {
            (n, 1)
        } else {
            (3, n / 3)
        };
        let k = rng.random_range(2..=3);
        let coarse = rng.random_bool(0.3);
        let data = (0..w * h)
            .map(|_| {
                let v: f64 = rng.random_range(0.0..1.0);
                if coarse {
                    (v * 4.0).round() / 4.0
                } else {
                    v
                }
            })
            .collect();
        let x = Image::new(w, h, data).unwrap();
        if x.distinct_count() < k {
            continue;
        }
        runs += 1;
        let (_, _, best) = exhaustive_clustering(&x, k).unwrap();
        let c = kmeans(&x, k, 100).unwrap();
        if c.sse < best - 1e-12 {
            below += 1;
        }
        if (c.sse - best).abs() <= 1e-12 {
            in_basin += 1;
        }
        let refit = update_means(&x, &c.labels, k).unwrap();
        let fixed = assign(&x, &c.means) == c.labels
            && refit
                .values()
                .iter()
                .zip(c.means.values())
                .all(|(a, b)| (a - b).abs() <= 1e-12)
            && (sse(&x, &c.labels, &c.means) - c.sse).abs() <= 1e-12;
        if !fixed {
            not_fixed += 1;
        }
    }
    outcome(
        below == 0 && not_fixed == 0 && in_basin * 2 > runs,
        format!("{runs} instances, optimum reached in {in_basin}, {below} below optimum, {not_fixed} not fixed points"),
    )
}

struct SuiteRun {
    accuracy: f64,
    converged: bool,
    tsa_agreement: f64,
}

fn phantom_suite() -> Vec<SuiteRun> {
    (0..20u64)
        .map(|seed| {
            let p = phantom::generate(64, 64, 2, 0.05, seed).unwrap();
            let cfg = SvaConfig::new(2);
            let res = segment(&p.image, &cfg).unwrap();
            let tsa = segment_tsa(&p.image, 2, res.lambda_final, &cfg).unwrap();
            SuiteRun {
                accuracy: accuracy(&res.labels, &p.truth),
                converged: res.converged,
                tsa_agreement: accuracy(&tsa.labels, &res.labels),
            }
        })
        .collect()
}

fn synthetic_accuracy(suite: &[SuiteRun], elapsed: Duration) -> Outcome {
    let mean = suite.iter().map(|r| r.accuracy).sum::<f64>() / suite.len() as f64;
    let worst = suite.iter().map(|r| r.accuracy).fold(1.0, f64::min);
    let converged = suite.iter().filter(|r| r.converged).count();
    outcome(
        mean >= 0.99 && converged == suite.len() && elapsed < Duration::from_secs(60),
        format!(
            "{} seeds, mean accuracy {:.4}, worst {:.4}, {converged} converged, {:.2} s",
            suite.len(),
            mean,
            worst,
            elapsed.as_secs_f64()
        ),
    )
}

fn tsa_consistency(suite: &[SuiteRun]) -> Outcome {
    let worst = suite.iter().map(|r| r.tsa_agreement).fold(1.0, f64::min);
    let mean = suite.iter().map(|r| r.tsa_agreement).sum::<f64>() / suite.len() as f64;
    outcome(
        worst >= 0.95,
        format!("agreement mean {mean:.4}, worst {worst:.4}"),
    )
}

fn desk_runtime() -> Outcome {
    let p = phantom::generate(256, 256, 3, 0.05, 2014).unwrap();
    let start = Instant::now();
    let res = single_thread(|| segment(&p.image, &SvaConfig::new(3)).unwrap());
    let elapsed = start.elapsed();
    outcome(
        res.converged && elapsed <= Duration::from_secs(5),
        format!(
            "256x256 K=3 single thread {:.3} s, converged {}, {} outer iterations, accuracy {:.4}",
            elapsed.as_secs_f64(),
            res.converged,
            res.outer_iterations,
            accuracy(&res.labels, &p.truth)
        ),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let p = phantom::generate(200, 180, 3, 0.08, 8).unwrap();
    phantom::write(dir, &p).unwrap();
    let input = dir.join(phantom::IMAGE_FILE);
    let run = |name: &str| {
        let out = dir.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_svaseg"))
            .args(["--threads", "1", "segment", "--classes", "3"])
            .arg(&input)
            .arg(&out)
            .output()
            .unwrap()
            .status;
        let files =
            [LABELS_FILE, X_FILE, TRACE_FILE].map(|f| fs::read(out.join(f)).unwrap_or_default());
        (status.code(), files)
    };
    let (code_a, a) = run("a");
    let (code_b, b) = run("b");
    let identical = a == b && a.iter().all(|f| !f.is_empty());
    outcome(
        identical && code_a == Some(0) && code_b == Some(0),
        format!(
            "two --threads 1 runs, exit {code_a:?}/{code_b:?}, artifacts identical: {identical}"
        ),
    )
}

fn main() {
    let dir = std::env::temp_dir().join(format!("svaseg-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();

    let mut results: Vec<(usize, &str, Outcome, Duration, Option<Duration>)> = Vec::new();
    let mut timed = |id, name, limit: Option<u64>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        results.push((id, name, out, elapsed, limit.map(Duration::from_secs)));
    };
    timed(1, "energy identities", Some(5), &mut energy_identities);
    timed(
        2,
        "prox solver certification",
        Some(30),
        &mut prox_certification,
    );
    timed(3, "MM descent", Some(60), &mut mm_descent);
    timed(
        4,
        "clustering oracle equivalence",
        Some(10),
        &mut clustering_oracle,
    );
    let start = Instant::now();
    let suite = phantom_suite();
    let suite_time = start.elapsed();
    timed(5, "synthetic accuracy", None, &mut || {
        synthetic_accuracy(&suite, suite_time)
    });
    timed(
        6,
        "self-tuned vs fixed-weight consistency",
        None,
        &mut || tsa_consistency(&suite),
    );
    timed(7, "desk-scale runtime", None, &mut desk_runtime);
    timed(8, "single-thread determinism", None, &mut || {
        determinism(&dir)
    });
    let _ = fs::remove_dir_all(&dir);

    let mut failed = 0;
    for (id, name, out, elapsed, limit) in &results {
        let in_time = limit.is_none_or(|l| *elapsed < l);
        let pass = out.pass && in_time;
        failed += !pass as usize;
        println!(
            "criterion {id} {:<40} {}  ({}; {:.2} s)",
            name,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "{}/{} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
