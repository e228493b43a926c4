//! Independent numeric oracles: every expected value here is computed by a
//! second route (dense elimination, quadrature, Monte Carlo, brute-force
//! accumulation) that shares no code with the implementation under test.

use banditlab_core::numerics::{cholesky_factor, mvn_sample, paired_t_test, TriFactor};
use banditlab_core::policies::{PolicyInstance, PolicyKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Dense linear solve by Gauss-Jordan elimination with partial pivoting;
/// deliberately independent of the TriFactor solve path.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-12, "oracle matrix is singular");
        for j in col..n {
            a[col][j] /= diag;
        }
        b[col] /= diag;
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    b
}

/// Two-sided Student-t tail probability by trapezoidal quadrature of the
/// unnormalized density under the substitution u = tan(theta).
fn t_two_sided_p_oracle(t: f64, dof: usize) -> f64 {
    let nu = dof as f64;
    let integrand = |theta: f64| {
        let c = theta.cos();
        let u = theta.tan();
        (1.0 + u * u / nu).powf(-(nu + 1.0) / 2.0) / (c * c)
    };
    let trapezoid = |lo: f64, hi: f64, steps: usize| {
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.5 * (integrand(lo) + integrand(hi));
        for i in 1..steps {
            acc += integrand(lo + h * i as f64);
        }
        acc * h
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let cut = t.abs().atan();
    let tail = trapezoid(cut, half_pi, 400_000);
    let half_mass = trapezoid(0.0, half_pi, 400_000);
    tail / half_mass
}

#[test]
fn t_test_p_values_match_the_quadrature_oracle() {
    for &dof in &[2usize, 10, 99] {
        for &t in &[0.31, 1.0, 2.5, 3.4641016151377544, 5.0] {
            let p_impl = {
                // Build series whose paired difference gives exactly this t.
                // Easier: check the CDF kernel directly through a synthetic
                // pair with the desired statistic is fragile, so instead
                // compare via a fabricated pair below.
                fabricate_p(t, dof)
            };
            let p_oracle = t_two_sided_p_oracle(t, dof);
            assert!(
                (p_impl - p_oracle).abs() < 1e-6,
                "dof {dof}, t {t}: impl {p_impl} vs oracle {p_oracle}"
            );
        }
    }
}

/// Runs the real paired test on series engineered to produce the requested
/// t statistic with the requested degrees of freedom.
fn fabricate_p(target_t: f64, dof: usize) -> f64 {
    let n = dof + 1;
    // Differences with mean m and sample sd 1: t = m * sqrt(n). Use a series
    // holding one +delta, one -delta and (n - 2) zeros shifted by m.
    let nf = n as f64;
    let mean = target_t / nf.sqrt();
    // sample sd of (delta, -delta, 0...0) is delta * sqrt(2 / (n - 1)).
    let delta = ((nf - 1.0) / 2.0).sqrt();
    let mut diffs = vec![mean; n];
    diffs[0] += delta;
    diffs[1] -= delta;
    let zeros = vec![0.0; n];
    let result = paired_t_test(&diffs, &zeros).unwrap();
    assert!(
        (result.t_stat - target_t).abs() < 1e-9,
        "fabricated series produced t {} instead of {target_t}",
        result.t_stat
    );
    assert_eq!(result.dof, dof);
    result.p_two_sided
}

#[test]
fn frozen_example_matches_quadrature() {
    // Differences (1, 2, 3): t = 2 sqrt(3), dof 2.
    let r = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 1.0, 1.0]).unwrap();
    let oracle = t_two_sided_p_oracle(r.t_stat, r.dof);
    assert!((r.p_two_sided - oracle).abs() < 1e-6);
    assert!((r.p_two_sided - 0.0742).abs() < 5e-5);
}

#[test]
fn rank_one_chain_stays_on_the_directly_accumulated_matrix() {
    // Medium-size version of the maintenance-drift invariant (the full
    // 10_000-update, 64-dimensional check runs in the acceptance suite).
    let d = 16usize;
    let updates = 2_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut factor = TriFactor::identity(d);
    let mut direct = vec![vec![0.0; d]; d];
    for (i, row) in direct.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..updates {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        factor.rank_one_update(&x).unwrap();
        for i in 0..d {
            for j in 0..d {
                direct[i][j] += x[i] * x[j];
            }
        }
    }
    let reconstructed = factor.reconstruct();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            worst = worst.max((reconstructed[i][j] - direct[i][j]).abs());
        }
    }
    assert!(worst < 1e-6, "drift {worst} after {updates} updates");

    // And the refactorization of the direct matrix agrees with the chain.
    let refactored = cholesky_factor(&direct).unwrap();
    let again = refactored.reconstruct();
    let mut worst2 = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            worst2 = worst2.max((again[i][j] - reconstructed[i][j]).abs());
        }
    }
    assert!(worst2 < 1e-6);
}

#[test]
fn incremental_posterior_mean_matches_batch_ridge() {
    // Feed one slice through enough updates to cross the periodic
    // refactorization boundary, then compare mu_hat against the dense
    // solution of (I + sum x x^T) mu = sum r x.
    let d = 6usize;
    let updates = 1_100usize;
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut policy = PolicyInstance::new(PolicyKind::Ts, 2, d, None, 1).unwrap();

    let mut gram = vec![vec![0.0; d]; d];
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut response = vec![0.0; d];
    for _ in 0..updates {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let r = u8::from(rng.random::<f64>() < 0.4);
        policy.update(&x, 0, 0, r).unwrap();
        for i in 0..d {
            for j in 0..d {
                gram[i][j] += x[i] * x[j];
            }
            if r == 1 {
                response[i] += x[i];
            }
        }
    }
    let oracle = dense_solve(gram, response);
    let slice = policy.slice(0, 0).unwrap();
    assert_eq!(slice.update_count(), updates as u32);
    for (got, want) in slice.mu_hat().iter().zip(&oracle) {
        assert!(
            (got - want).abs() < 1e-6,
            "incremental {got} vs batch {want}"
        );
    }
}

#[test]
fn mvn_sampling_matches_the_target_covariance() {
    // Precision diag(4, 1): per-coordinate variances (0.25, 1.0).
    let factor = cholesky_factor(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let mean = [1.0, -2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000usize;
    let mut acc = [0.0f64; 2];
    let mut acc2 = [0.0f64; 2];
    for _ in 0..n {
        let s = mvn_sample(&mean, &factor, || rng.sample(StandardNormal)).unwrap();
        for c in 0..2 {
            acc[c] += s[c];
            acc2[c] += s[c] * s[c];
        }
    }
    let nf = n as f64;
    for (c, &target) in [0.25, 1.0].iter().enumerate() {
        let m = acc[c] / nf;
        let var = acc2[c] / nf - m * m;
        assert!(
            (var - target).abs() / target < 0.05,
            "coordinate {c}: variance {var} vs {target}"
        );
        assert!((m - mean[c]).abs() < 0.05);
    }
}

#[test]
fn spd_solve_residual_is_tiny_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let d = 5usize;
        // Well-conditioned SPD: A^T A + I.
        let a: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let mut b = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = if i == j { 1.0 } else { 0.0 };
                for row in &a {
                    acc += row[i] * row[j];
                }
                b[i][j] = acc;
            }
        }
        let rhs: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let factor = cholesky_factor(&b).unwrap();
        let y = factor.solve(&rhs).unwrap();
        for i in 0..d {
            let lhs: f64 = (0..d).map(|j| b[i][j] * y[j]).sum();
            assert!((lhs - rhs[i]).abs() < 1e-8, "residual too large");
        }
    }
}
