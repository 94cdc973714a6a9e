//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (run with `--nocapture` to see them).
//!
//! The statistical criteria (3-5) run on fixed, recorded cell seeds 0..9;
//! instance and fit sub-seeds derive from each cell seed exactly as the
//! bench harness does, so every number here can be reproduced from the CLI.

use std::time::Instant;

use bmf_cli::bench::{derive_seed, run_cell, run_sweep, SweepContext};
use bmf_cli::spec::{SweepMode, SweepSpec};
use bmf_core::em::{fit, EmConfig};
use bmf_core::matrix::{BinaryMatrix, Mask, ObservedMatrix, RealMatrix};
use bmf_core::metrics::{completion_accuracy, reconstruction_error};
use bmf_core::model::{
    clean_probability, evaluate, gradients, log_likelihood, log_posterior, noise_free_ml_gradients,
    noisy_probability, or_product_probability, BetaPrior, FactorParams, NoiseModel,
};
use bmf_core::optimizer::{rprop_step, RpropConfig, RpropState};
use bmf_core::synth::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synth_200(rank: usize, noise: f64, observed: f64, instance_seed: u64) -> SynthConfig {
    let mut config = SynthConfig::new(200, 200, rank);
    config.noise = noise;
    config.observed_fraction = observed;
    config.seed = instance_seed;
    config
}

// -------------------------------------------------------------------------
// Criterion 1: analytic gradients match central finite differences on 50
// seeded random instances (N, M <= 10, L <= 4; eps in {0, 0.1, 0.3};
// alpha = beta in {0.8, 1.0, 1.2}); relative error <= 1e-5 with an absolute
// floor of 1e-8. Runtime under 10 seconds.
// -------------------------------------------------------------------------
#[test]
fn criterion_1_gradient_oracle() {
    const FD_STEP: f64 = 1e-5;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let eps_grid = [0.0, 0.1, 0.3];
    let shape_grid = [0.8, 1.0, 1.2];
    let mut checked = 0usize;

    for trial in 0..50 {
        let n = rng.gen_range(1..=10);
        let m = rng.gen_range(1..=10);
        let rank = rng.gen_range(1..=4);
        let values =
            BinaryMatrix::from_vec(n, m, (0..n * m).map(|_| rng.gen_range(0..2u8)).collect())
                .unwrap();
        let mut mask = Mask::empty(n, m);
        for r in 0..n {
            for c in 0..m {
                mask.set(r, c, rng.gen::<f64>() < 0.85);
            }
        }
        mask.set(0, 0, true);
        let x = ObservedMatrix::new(values, mask).unwrap();
        let params = FactorParams::new(
            RealMatrix::from_vec(n, rank, (0..n * rank).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .unwrap(),
            RealMatrix::from_vec(m, rank, (0..m * rank).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .unwrap(),
        )
        .unwrap();
        let noise = NoiseModel::new(eps_grid[trial % 3]).unwrap();
        let shape = shape_grid[(trial / 3) % 3];
        let prior = BetaPrior::new(shape, shape).unwrap();

        let (grad_a, grad_b) = gradients(&x, &params, &noise, &prior).unwrap();
        for (on_a, analytic) in [(true, &grad_a), (false, &grad_b)] {
            for idx in 0..analytic.as_slice().len() {
                let probe = |delta: f64| {
                    let mut p = params.clone();
                    let slice = if on_a {
                        p.a_mut().as_mut_slice()
                    } else {
                        p.b_mut().as_mut_slice()
                    };
                    slice[idx] += delta;
                    log_posterior(&x, &p, &noise, &prior).unwrap()
                };
                let numeric = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
                let exact = analytic.as_slice()[idx];
                let tol = 1e-8f64.max(1e-5 * exact.abs().max(numeric.abs()));
                assert!(
                    (exact - numeric).abs() <= tol,
                    "trial {trial} entry {idx}: analytic {exact} vs finite-diff {numeric}"
                );
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "gradient oracle took {elapsed:.1}s");
    println!(
        "criterion 1 (gradient oracle): PASS - {checked} entries on 50 instances in {elapsed:.2}s"
    );
}

// -------------------------------------------------------------------------
// Criterion 2: exhaustive Boolean-limit equivalence for all binary U, Z
// with N = M = L = 3; thresholded clean probability equals the OR-AND
// product exactly. Runtime under 1 second.
// -------------------------------------------------------------------------
#[test]
fn criterion_2_boolean_limit() {
    let start = Instant::now();
    let (n, m, rank) = (3usize, 3usize, 3usize);
    for u_bits in 0..1u32 << (n * rank) {
        for z_bits in 0..1u32 << (m * rank) {
            let mu: Vec<f64> = (0..n * rank).map(|i| ((u_bits >> i) & 1) as f64).collect();
            let zeta: Vec<f64> = (0..m * rank).map(|i| ((z_bits >> i) & 1) as f64).collect();
            let p = or_product_probability(
                &RealMatrix::from_vec(n, rank, mu.clone()).unwrap(),
                &RealMatrix::from_vec(m, rank, zeta.clone()).unwrap(),
            )
            .unwrap();
            for r in 0..n {
                for c in 0..m {
                    let or_and = (0..rank)
                        .any(|l| mu[r * rank + l] == 1.0 && zeta[c * rank + l] == 1.0);
                    assert_eq!(
                        p.get(r, c) >= 0.5,
                        or_and,
                        "u {u_bits:09b} z {z_bits:09b} cell ({r},{c})"
                    );
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "boolean-limit sweep took {elapsed:.2}s");
    println!("criterion 2 (boolean limit): PASS - 2^18 factor pairs in {elapsed:.2}s");
}

// -------------------------------------------------------------------------
// Criterion 3: noiseless recovery at 200x200 rank 5 with varied priors;
// zero reconstruction error on >= 8/10 recorded seeds and mean error
// <= 0.01. Runtime under 2 minutes.
// -------------------------------------------------------------------------
#[test]
fn criterion_3_noiseless_recovery() {
    let start = Instant::now();
    let mut zero = 0;
    let mut mean_err = 0.0;
    for cell in 0..10u64 {
        let inst = generate(&synth_200(5, 0.0, 1.0, derive_seed(cell, 1))).unwrap();
        let result = fit(
            &inst.x_noisy,
            &EmConfig::new(5).with_seed(derive_seed(cell, 2)),
        )
        .unwrap();
        let err = reconstruction_error(&result.reconstruction, &inst.x_clean).unwrap();
        mean_err += err / 10.0;
        if err == 0.0 {
            zero += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(zero >= 8, "zero error on {zero}/10 seeds (mean {mean_err:.4})");
    assert!(mean_err <= 0.01, "mean error {mean_err:.4}");
    assert!(elapsed < 120.0, "took {elapsed:.0}s");
    println!(
        "criterion 3 (noiseless recovery): PASS - zero error {zero}/10, mean {mean_err:.4}, {elapsed:.0}s"
    );
}

// -------------------------------------------------------------------------
// Criterion 4: noise robustness at flip probabilities 0.1 and 0.2; mean
// reconstruction error <= 0.12 and fitted epsilon within +-0.05 of the
// truth on >= 8/10 recorded seeds. Runtime under 5 minutes.
// -------------------------------------------------------------------------
#[test]
fn criterion_4_noise_robustness() {
    let start = Instant::now();
    for noise in [0.1, 0.2] {
        let mut mean_err = 0.0;
        let mut eps_ok = 0;
        for cell in 0..10u64 {
            let inst = generate(&synth_200(5, noise, 1.0, derive_seed(cell, 1))).unwrap();
            let result = fit(
                &inst.x_noisy,
                &EmConfig::new(5).with_seed(derive_seed(cell, 2)),
            )
            .unwrap();
            let err = reconstruction_error(&result.reconstruction, &inst.x_clean).unwrap();
            mean_err += err / 10.0;
            if (result.epsilon - noise).abs() <= 0.05 {
                eps_ok += 1;
            }
        }
        assert!(mean_err <= 0.12, "noise {noise}: mean error {mean_err:.4}");
        assert!(eps_ok >= 8, "noise {noise}: epsilon within 0.05 on {eps_ok}/10");
        println!(
            "criterion 4 (noise robustness, eps={noise}): PASS - mean error {mean_err:.4}, eps ok {eps_ok}/10"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "took {elapsed:.0}s");
}

// -------------------------------------------------------------------------
// Criterion 5: completion at 200x200 rank 5, noise 0.2; mean held-out
// accuracy >= 0.80 at 50% observed, and strictly above the accuracy at 5%
// observed on matched seeds. Runtime under 5 minutes.
// -------------------------------------------------------------------------
#[test]
fn criterion_5_completion() {
    let start = Instant::now();
    let mut means = Vec::new();
    for fraction in [0.5, 0.05] {
        let mut mean_acc = 0.0;
        for cell in 0..10u64 {
            // Matched seeds: the instance RNG draws priors, factors, and
            // flips before the mask, so both fractions see the same matrix.
            let inst = generate(&synth_200(5, 0.2, fraction, derive_seed(cell, 1))).unwrap();
            let result = fit(
                &inst.x_noisy,
                &EmConfig::new(5).with_seed(derive_seed(cell, 2)),
            )
            .unwrap();
            let heldout = inst.x_noisy.mask().complement();
            let reference = ObservedMatrix::fully_observed(inst.x_clean.clone()).unwrap();
            let acc = completion_accuracy(&result.reconstruction, &reference, &heldout).unwrap();
            mean_acc += acc / 10.0;
        }
        means.push(mean_acc);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(means[0] >= 0.80, "accuracy at 50% observed: {:.4}", means[0]);
    assert!(
        means[0] > means[1],
        "accuracy at 50% ({:.4}) must exceed 5% ({:.4})",
        means[0],
        means[1]
    );
    assert!(elapsed < 300.0, "took {elapsed:.0}s");
    println!(
        "criterion 5 (completion): PASS - accuracy {:.4} at 50% vs {:.4} at 5%, {elapsed:.0}s",
        means[0], means[1]
    );
}

// -------------------------------------------------------------------------
// Criterion 6: MovieLens-100K regression (optional; needs the dataset).
// 95% observed, harness default rank, 10 resampled splits; mean held-out
// accuracy within 3 percentage points of 0.682.
// -------------------------------------------------------------------------
fn movielens_path() -> Option<std::path::PathBuf> {
    if let Ok(path) = std::env::var("BMF_MOVIELENS") {
        let path = std::path::PathBuf::from(path);
        if path.exists() {
            return Some(path);
        }
    }
    for candidate in ["data/ml-100k/u.data", "../../data/ml-100k/u.data"] {
        let path = std::path::PathBuf::from(candidate);
        if path.exists() {
            return Some(path);
        }
    }
    None
}

#[test]
fn criterion_6_movielens_regression() {
    let Some(path) = movielens_path() else {
        println!(
            "criterion 6 (movielens): SKIPPED - dataset not present; set BMF_MOVIELENS to u.data"
        );
        return;
    };
    let start = Instant::now();
    let records = bmf_core::io::read_ratings(&path, None).unwrap();
    let (matrix, _) = bmf_core::io::binarize_ratings(&records, false).unwrap();
    assert_eq!(matrix.n_rows(), 943);
    assert_eq!(matrix.n_cols(), 1682);
    assert_eq!(matrix.observed_count(), 100_000);

    let mut mean_acc = 0.0;
    for cell in 0..10u64 {
        let (train, heldout) =
            bmf_core::io::holdout_split(&matrix, 0.95, derive_seed(cell, 1)).unwrap();
        let result = fit(&train, &EmConfig::new(5).with_seed(derive_seed(cell, 2))).unwrap();
        let acc = completion_accuracy(&result.reconstruction, &matrix, &heldout).unwrap();
        mean_acc += acc / 10.0;
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        (mean_acc - 0.682).abs() <= 0.03,
        "mean held-out accuracy {mean_acc:.4} vs expected 0.682 +- 0.03"
    );
    assert!(elapsed < 1800.0, "took {elapsed:.0}s");
    println!("criterion 6 (movielens): PASS - accuracy {mean_acc:.4} in {elapsed:.0}s");
}

// -------------------------------------------------------------------------
// Criterion 7: determinism. A fit rerun from the same config is bitwise
// identical, and a bench cell rerun from its recorded seed reproduces the
// row (modulo wall time).
// -------------------------------------------------------------------------
#[test]
fn criterion_7_determinism() {
    let mut synth = SynthConfig::new(60, 45, 3);
    synth.noise = 0.15;
    synth.observed_fraction = 0.8;
    synth.seed = 33;
    let inst = generate(&synth).unwrap();
    let config = EmConfig::new(3).with_seed(17);
    let first = fit(&inst.x_noisy, &config).unwrap();
    let second = fit(&inst.x_noisy, &config).unwrap();
    assert_eq!(first, second, "fit is not bitwise deterministic");

    let spec = SweepSpec {
        mode: SweepMode::CompletionSweep,
        grid: vec![0.6, 0.3],
        repetitions: 3,
        seed: 42,
        output: std::path::PathBuf::from("unused.csv"),
        n_rows: 40,
        n_cols: 40,
        rank: 3,
        density: 0.5,
        vary_priors: true,
        noise: 0.2,
        ratings_path: None,
        delimiter: None,
        ties_as_one: false,
        em: Default::default(),
    };
    let ctx = SweepContext::prepare(&spec).unwrap();
    let rows = run_sweep(&spec).unwrap();
    let mut reran = 0;
    for row in rows.iter().filter(|r| r.kind == "cell") {
        let report = run_cell(&spec, &ctx, row.grid_value, row.seed.unwrap()).unwrap();
        assert_eq!(Some(report.eval.reconstruction_error), row.recon_error);
        assert_eq!(report.eval.completion_accuracy, row.completion_accuracy);
        assert_eq!(Some(report.eval.estimated_epsilon), row.estimated_epsilon);
        assert_eq!(Some(report.eval.objective), row.objective);
        assert_eq!(Some(report.outer_iters), row.outer_iters);
        assert_eq!(Some(report.converged), row.converged);
        reran += 1;
    }
    assert_eq!(reran, 6);
    println!("criterion 7 (determinism): PASS - fit bitwise stable, {reran} cells rerun bitwise");
}

// -------------------------------------------------------------------------
// Criterion 8: complexity evidence. Doubling N at fixed M, L multiplies the
// per-iteration wall time (gradient evaluation + Rprop step) by 2x +- 30%.
// Measurements interleave the two sizes and compare medians, so uniform
// background load cancels out.
// -------------------------------------------------------------------------
#[test]
fn criterion_8_complexity_scaling() {
    fn iteration_time(n: usize, m: usize, rank: usize, reps: usize) -> Vec<f64> {
        let mut synth = SynthConfig::new(n, m, rank);
        synth.noise = 0.1;
        synth.seed = 7;
        let inst = generate(&synth).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = FactorParams::init_gaussian(n, m, rank, 0.01, &mut rng).unwrap();
        let noise = NoiseModel::new(0.1).unwrap();
        let prior = BetaPrior::new(0.95, 0.95).unwrap();
        let config = RpropConfig::default();
        let mut state = RpropState::new(n, m, rank, &config);
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let start = Instant::now();
            let eval = evaluate(&inst.x_noisy, &params, &noise, &prior).unwrap();
            rprop_step(&mut params, &eval.grad_a, &eval.grad_b, &mut state, &config).unwrap();
            times.push(start.elapsed().as_secs_f64());
        }
        times
    }

    // Warm-up, then interleave measurements of the two sizes.
    iteration_time(300, 300, 5, 3);
    let mut small = Vec::new();
    let mut large = Vec::new();
    for _ in 0..7 {
        small.extend(iteration_time(600, 300, 5, 3));
        large.extend(iteration_time(1200, 300, 5, 3));
    }
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let ratio = median(large) / median(small);
    assert!(
        (1.4..=2.6).contains(&ratio),
        "doubling N scaled per-iteration time by {ratio:.2}"
    );
    println!("criterion 8 (complexity): PASS - 2x rows scaled time by {ratio:.2}");
}

// -------------------------------------------------------------------------
// Criterion 9: neutrality identities. The flat-prior objective equals the
// pure likelihood route bitwise, and flip-noise gradients at eps = 0 match
// the noise-free implementation within 1e-12.
// -------------------------------------------------------------------------
#[test]
fn criterion_9_neutrality() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for trial in 0..20 {
        let n = rng.gen_range(2..=9);
        let m = rng.gen_range(2..=9);
        let rank = rng.gen_range(1..=4);
        let values =
            BinaryMatrix::from_vec(n, m, (0..n * m).map(|_| rng.gen_range(0..2u8)).collect())
                .unwrap();
        let mut mask = Mask::empty(n, m);
        for r in 0..n {
            for c in 0..m {
                mask.set(r, c, rng.gen::<f64>() < 0.9);
            }
        }
        mask.set(0, 0, true);
        let x = ObservedMatrix::new(values, mask).unwrap();
        let params = FactorParams::new(
            RealMatrix::from_vec(n, rank, (0..n * rank).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .unwrap(),
            RealMatrix::from_vec(m, rank, (0..m * rank).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .unwrap(),
        )
        .unwrap();

        // Flat prior == maximum likelihood, bitwise, via two code paths.
        let eps = [0.0, 0.07, 0.3][trial % 3];
        let noise = NoiseModel::new(eps).unwrap();
        let lp = log_posterior(&x, &params, &noise, &BetaPrior::flat()).unwrap();
        let ll =
            log_likelihood(&x, &noisy_probability(&clean_probability(&params), &noise)).unwrap();
        assert_eq!(lp.to_bits(), ll.to_bits(), "trial {trial}");

        // eps = 0 gradients equal the noise-free route within 1e-12.
        let (ga, gb) = gradients(&x, &params, &NoiseModel::noiseless(), &BetaPrior::flat())
            .unwrap();
        let (fa, fb) = noise_free_ml_gradients(&x, &params).unwrap();
        for (a, b) in ga
            .as_slice()
            .iter()
            .zip(fa.as_slice())
            .chain(gb.as_slice().iter().zip(fb.as_slice()))
        {
            assert!(
                (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                "trial {trial}: {a} vs {b}"
            );
        }
    }
    println!("criterion 9 (neutrality identities): PASS - 20 instances");
}
