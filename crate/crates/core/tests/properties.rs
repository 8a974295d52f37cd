use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use bnse::baselines::{lomb_scargle, periodogram, LsConfig};
use bnse::gp::{nlml, nlml_gradient, SmParams, TimeSeries, TrainedGp};
use bnse::kernels::{kernel_gram, Kernel, Matern, MaternOrder, NoiseModel, SmComponent, SmKernel};
use bnse::linalg::symmetric_eigen;
use bnse::spectrum::{
    cross_cov_approx, cross_cov_exact_sm, prior_cov_approx, prior_cov_exact_sm, real_imag_covs, SpectrumPosterior,
    WindowConfig,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn sm_kernel(max_q: usize) -> impl Strategy<Value = SmKernel> {
    prop::collection::vec((0.1f64..10.0, 0.01f64..5.0, 0.0f64..3.0), 1..=max_q)
        .prop_map(|c| SmKernel::new(c.into_iter().map(|(s, g, t)| SmComponent::new(s, g, t)).collect()).unwrap())
}

fn sorted_times(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, n).prop_map(|mut t| {
        t.sort_by(f64::total_cmp);
        t.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        t
    })
}

fn series(n: std::ops::Range<usize>) -> impl Strategy<Value = TimeSeries> {
    sorted_times(n)
        .prop_flat_map(|t| {
            let len = t.len();
            (Just(t), prop::collection::vec(-3.0f64..3.0, len))
        })
        .prop_map(|(t, y)| TimeSeries::new(t, y).unwrap())
}

fn min_eig_ok(m: &DMatrix<f64>) -> bool {
    let eig = symmetric_eigen(m, "grid covariance").unwrap();
    let min = eig.eigenvalues.min();
    min >= -1e-8 * m.trace().abs()
}

fn grid_matrices(kf: impl Fn(f64, f64) -> f64, grid: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = grid.len();
    let mut rr = DMatrix::zeros(m, m);
    let mut ii = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let (a, b) = real_imag_covs(&kf, grid[i], grid[j]);
            rr[(i, j)] = a;
            ii[(i, j)] = b;
        }
    }
    (rr, ii)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nlml_gradient_matches_finite_differences(
        kernel in sm_kernel(3),
        noise in 0.01f64..1.0,
        data in series(5..30),
    ) {
        prop_assume!(data.len() >= 3);
        let noise = NoiseModel::new(noise).unwrap();
        let g = nlml_gradient(&kernel, noise, &data).unwrap();
        let p = SmParams::from_model(&kernel, noise);
        let h = 1e-6;
        let f = |v: Vec<f64>| {
            let (k, n) = SmParams(v).to_model();
            nlml(&k, n, &data).unwrap()
        };
        let fd: Vec<f64> = (0..p.0.len())
            .map(|i| {
                let mut up = p.0.clone();
                let mut dn = p.0.clone();
                up[i] += h;
                dn[i] -= h;
                (f(up) - f(dn)) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-4 * norm.max(1e-3), "analytic {:?} vs fd {:?}", g, fd);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_and_imag_prior_matrices_are_psd(kernel in sm_kernel(3), alpha in 0.01f64..2.0, span in 0.5f64..4.0) {
        let w = WindowConfig::new(alpha, 0.0).unwrap();
        let grid: Vec<f64> = (0..30).map(|i| -span + 2.0 * span * i as f64 / 29.0).collect();
        let (rr, ii) = grid_matrices(|a, b| prior_cov_exact_sm(&kernel, &w, a, b), &grid);
        prop_assert!(min_eig_ok(&rr));
        prop_assert!(min_eig_ok(&ii));
    }

    #[test]
    fn approximate_real_and_imag_matrices_are_psd(sigma2 in 0.1f64..5.0, ell in 0.2f64..3.0, alpha in 1e-4f64..1e-2) {
        let k = Matern::new(MaternOrder::ThreeHalves, sigma2, ell).unwrap();
        let w = WindowConfig::new(alpha, 0.0).unwrap();
        let grid: Vec<f64> = (0..30).map(|i| -1.0 + 2.0 * i as f64 / 29.0).collect();
        let (rr, ii) = grid_matrices(|a, b| prior_cov_approx(&k, &w, a, b), &grid);
        prop_assert!(min_eig_ok(&rr));
        prop_assert!(min_eig_ok(&ii));
    }

    #[test]
    fn real_plus_imag_is_prior(kernel in sm_kernel(3), alpha in 0.01f64..2.0, xi in -3.0f64..3.0, xp in -3.0f64..3.0) {
        let w = WindowConfig::new(alpha, 0.0).unwrap();
        let kf = |a, b| prior_cov_exact_sm(&kernel, &w, a, b);
        let (rr, ii) = real_imag_covs(kf, xi, xp);
        let scale = kf(xi, xp).abs().max(kf(xi, -xp).abs());
        // halving a subnormal drops a bit, hence the absolute floor of a few ulps of zero
        let floor = 4.0 * f64::from_bits(1);
        prop_assert!((rr + ii - kf(xi, xp)).abs() <= 4.0 * f64::EPSILON * scale + floor);
    }

    #[test]
    fn prior_cov_symmetric_and_even(kernel in sm_kernel(3), alpha in 0.01f64..2.0, xi in -3.0f64..3.0, xp in -3.0f64..3.0) {
        let w = WindowConfig::new(alpha, 1.7).unwrap();
        let k = |a, b| prior_cov_exact_sm(&kernel, &w, a, b);
        prop_assert!((k(xi, xp) - k(xp, xi)).abs() <= 1e-14 * k(xi, xp).abs().max(1e-300));
        prop_assert!((k(xi, xp) - k(-xi, -xp)).abs() <= 1e-14 * k(xi, xp).abs().max(1e-300));
        let a = k(xi, xp);
        prop_assert!(a >= 0.0);
        prop_assert!(a * a <= k(xi, xi) * k(xp, xp) * (1.0 + 1e-12));
    }

    #[test]
    fn wider_windows_decorrelate_baseband_frequencies(
        sigma2 in 0.1f64..10.0,
        gamma in 0.01f64..5.0,
        xi in -2.0f64..2.0,
        delta in 0.01f64..0.5,
    ) {
        let kernel = SmKernel::new(vec![SmComponent::new(sigma2, gamma, 0.0)]).unwrap();
        let xp = xi + delta;
        let mut prev = f64::INFINITY;
        for i in 0..25 {
            let alpha = 4.0 * 0.7f64.powi(i);
            let w = WindowConfig::new(alpha, 0.0).unwrap();
            let k = |a, b| prior_cov_exact_sm(&kernel, &w, a, b);
            let (va, vb) = (k(xi, xi), k(xp, xp));
            if va.min(vb) < f64::MIN_POSITIVE {
                break;
            }
            let r = k(xi, xp) / (va.sqrt() * vb.sqrt());
            // one Gaussian lobe: the lobe terms cancel down to this
            let expected = (-PI * PI * delta * delta * gamma / (alpha * (alpha + 2.0 * gamma))).exp();
            prop_assert!((r - expected).abs() <= 1e-9 * expected + 1e-12, "alpha {alpha}: {r} vs {expected}");
            prop_assert!(r <= prev * (1.0 + 1e-9), "alpha {alpha}: {r} > {prev}");
            prev = r;
        }
    }

    #[test]
    fn exact_and_approximate_paths_agree_for_wide_windows(
        sigma2 in 0.1f64..10.0,
        gamma in 0.01f64..10.0,
        theta in 0.0f64..3.0,
        frac in 0.001f64..1.0,
        centre in -5.0f64..5.0,
    ) {
        let k = SmKernel::new(vec![SmComponent::new(sigma2, gamma, theta)]).unwrap();
        let w = WindowConfig::new(frac * gamma / 100.0, centre).unwrap();
        let exact = prior_cov_exact_sm(&k, &w, theta, theta);
        let approx = prior_cov_approx(&k, &w, theta, theta);
        prop_assert!((exact - approx).abs() <= 0.02 * exact);
        let exact = cross_cov_exact_sm(&k, &w, centre, theta);
        let approx = cross_cov_approx(&k, &w, centre, theta);
        prop_assert!((exact - approx).norm() <= 0.02 * exact.norm());
    }

    #[test]
    fn gram_factorizes_with_noise(kernel in sm_kernel(3), noise in 1e-6f64..1.0, times in sorted_times(1..40)) {
        let g = kernel_gram(&kernel, NoiseModel::new(noise).unwrap(), &times).unwrap();
        let l = g.chol.l();
        let rebuilt = &l * l.transpose();
        prop_assert!((rebuilt - &g.matrix).amax() <= 1e-10 * g.matrix.amax());
    }

    #[test]
    fn posterior_mean_is_linear_in_observations(
        kernel in sm_kernel(2),
        data in series(4..20),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        xi in 0.0f64..3.0,
    ) {
        let noise = NoiseModel::new(0.1).unwrap();
        let y2: Vec<f64> = data.values().iter().enumerate().map(|(i, v)| (i as f64).sin() - v).collect();
        let combo: Vec<f64> = data.values().iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let w = WindowConfig::new(0.1, data.midpoint()).unwrap();
        let mean = |y: Vec<f64>| {
            let d = TimeSeries::new(data.times().to_vec(), y).unwrap();
            let gp = Arc::new(TrainedGp::fixed(kernel.clone(), noise, d).unwrap());
            SpectrumPosterior::new(gp, w, None).unwrap().mean(xi)
        };
        let m1 = mean(data.values().to_vec());
        let m2 = mean(y2.clone());
        let m = mean(combo);
        let scale = 1.0 + m1.0.abs() + m1.1.abs() + m2.0.abs() + m2.1.abs();
        prop_assert!((m.0 - (a * m1.0 + b * m2.0)).abs() <= 1e-9 * scale);
        prop_assert!((m.1 - (a * m1.1 + b * m2.1)).abs() <= 1e-9 * scale);
    }

    #[test]
    fn psd_summaries_are_nonnegative(kernel in sm_kernel(2), data in series(3..25), xi in 0.0f64..3.0) {
        let gp = Arc::new(TrainedGp::fixed(kernel, NoiseModel::new(0.05).unwrap(), data.clone()).unwrap());
        let post = SpectrumPosterior::new(gp, WindowConfig::default_for(&data), None).unwrap();
        let p = post.point(xi).unwrap();
        prop_assert!(p.var_re >= 0.0 && p.var_im >= 0.0);
        prop_assert!(p.psd_mean() >= 0.0 && p.psd_std() >= 0.0);
        prop_assert!(p.cov_ri * p.cov_ri <= p.var_re * p.var_im * (1.0 + 1e-6) + 1e-12);
    }

    #[test]
    fn lomb_scargle_equals_periodogram_on_even_sampling(
        n in 8usize..120,
        dt in 0.01f64..2.0,
        t0 in -50.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let y: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 100.0 - 5.0).collect();
        let t: Vec<f64> = (0..n).map(|i| t0 + dt * i as f64).collect();
        let data = TimeSeries::new(t, y).unwrap();
        let pg = periodogram(&data, 1).unwrap();
        let mut cfg = LsConfig::new(pg.grid.clone());
        cfg.fit_mean = false;
        let ls = lomb_scargle(&data, &cfg).unwrap();
        for (a, b) in ls.psd_mean.iter().zip(&pg.psd_mean) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-8 * pg.psd_mean.iter().cloned().fold(0.0, f64::max)));
        }
    }

    #[test]
    fn periodogram_parseval(y in prop::collection::vec(-10.0f64..10.0, 2..200), pad in 1usize..5, dt in 0.01f64..3.0) {
        let n = y.len();
        let data = TimeSeries::new((0..n).map(|i| dt * i as f64).collect(), y.clone()).unwrap();
        let pg = periodogram(&data, pad).unwrap();
        let total: f64 = pg.psd_mean.iter().sum::<f64>() / (n * pad) as f64;
        let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
        prop_assert!((total - mean_sq).abs() <= 1e-10 * mean_sq.max(1e-300));
    }

    #[test]
    fn lomb_scargle_is_translation_invariant(data in series(5..40), shift in -1e3f64..1e3) {
        let grid: Vec<f64> = (0..50).map(|i| 0.02 * i as f64).collect();
        let cfg = LsConfig::new(grid);
        let a = lomb_scargle(&data, &cfg).unwrap();
        let b = lomb_scargle(&data.shifted(shift), &cfg).unwrap();
        let top = a.psd_mean.iter().cloned().fold(0.0, f64::max);
        for (x, y) in a.psd_mean.iter().zip(&b.psd_mean) {
            prop_assert!((x - y).abs() <= 1e-8 * top.max(1e-12));
        }
    }
}

#[test]
fn exact_and_approximate_agree_with_several_components() {
    let k = SmKernel::new(vec![SmComponent::new(2.0, 0.5, 1.0), SmComponent::new(1.0, 0.2, 2.5)]).unwrap();
    let w = WindowConfig::new(0.2 / 100.0, 0.0).unwrap();
    for &xi in &[1.0, 2.5] {
        let e = prior_cov_exact_sm(&k, &w, xi, xi);
        assert_relative_eq!(prior_cov_approx(&k, &w, xi, xi), e, max_relative = 0.02);
        let e = cross_cov_exact_sm(&k, &w, 0.0, xi);
        assert!((cross_cov_approx(&k, &w, 0.0, xi) - e).norm() <= 0.02 * e.norm());
    }
}

#[test]
fn non_sm_kernels_use_the_approximation() {
    let k: Kernel = Matern::new(MaternOrder::FiveHalves, 1.0, 2.0).unwrap().into();
    let w = WindowConfig::new(1e-4, 0.0).unwrap();
    let post = SpectrumPosterior::prior(k, w, None).unwrap();
    assert_eq!(post.mode(), bnse::spectrum::SpectrumMode::DeltaApproximation);
}

// With lobes at ±θ the correlation is not monotone in α near ξ = 0: values checked at 50 digits.
#[test]
fn two_sided_lobes_can_recorrelate() {
    let kernel = SmKernel::new(vec![SmComponent::new(0.1, 0.01, 2.6658997730524447)]).unwrap();
    let (xi, xp) = (0.03238465509553901, 0.03238465509553901 + 0.01);
    let rho = |alpha: f64| {
        let w = WindowConfig::new(alpha, 0.0).unwrap();
        let k = |a, b| prior_cov_exact_sm(&kernel, &w, a, b);
        k(xi, xp) / (k(xi, xi).sqrt() * k(xp, xp).sqrt())
    };
    assert_relative_eq!(rho(2.8), 0.9961812220155309, max_relative = 1e-10);
    assert_relative_eq!(rho(1.96), 0.997389183240085, max_relative = 1e-10);
    assert!(rho(1.96) > rho(2.8));
}
