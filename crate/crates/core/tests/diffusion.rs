use mrbm::constraints::ConstraintSet;
use mrbm::diagnostics::{histogram_tv, rbm_density_1d, TvReference};
use mrbm::diffusion::{
    forward_noise_batch, forward_tv_at_horizon, reverse_generate, reverse_generate_steps, tune_beta1, uniform_sample,
    BetaSchedule, Pointwise, TimeGrid, TuneConfig,
};
use mrbm::geometry::{Manifold, Point};
use mrbm::rng::derive_seed;

fn square() -> (Manifold, ConstraintSet) {
    (Manifold::euclidean(2), ConstraintSet::hypercube(2, -1.0, 1.0))
}

#[test]
fn zero_score_keeps_the_uniform_law() {
    let (m, c) = square();
    let zero = Pointwise {
        dim: 2,
        f: |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0),
    };
    let grid = TimeGrid::new(BetaSchedule::new(1e-3, 2.0).unwrap(), 100).unwrap();
    let n = 100_000;
    let xs = reverse_generate(&m, &c, &zero, &grid, n, 3).unwrap();
    let mut counts = vec![0.0; 400];
    for p in &xs {
        assert!(c.contains(p));
        let cell = |v: f64| (((v + 1.0) * 10.0).floor() as usize).min(19);
        counts[cell(p.0[0]) * 20 + cell(p.0[1])] += 1.0;
    }
    let e = n as f64 / 400.0;
    let chi2: f64 = counts.iter().map(|o| (o - e) * (o - e) / e).sum();
    // 0.99 quantile of chi-square with 399 degrees of freedom
    assert!(chi2 < 467.7, "chi-square {chi2}");
}

#[test]
fn no_reverse_steps_returns_the_initial_draws() {
    let (m, c) = square();
    let zero = Pointwise {
        dim: 2,
        f: |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0),
    };
    let grid = TimeGrid::new(BetaSchedule::new(1e-3, 2.0).unwrap(), 10).unwrap();
    let got = reverse_generate_steps(&m, &c, &zero, &grid, 0, 50, 9).unwrap();
    let want = uniform_sample(&m, &c, 50, derive_seed(9, "reverse/init")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn forward_mixing_is_monotone_in_time() {
    let (m, c) = square();
    let start = vec![Point::new(vec![0.0, 0.0])];
    let cfg = TuneConfig {
        chains: 100_000,
        ..Default::default()
    };
    let reference = uniform_sample(&m, &c, cfg.chains, 77).unwrap();
    let tv_at = |b: f64| {
        let grid = TimeGrid::new(BetaSchedule::new(b, b).unwrap(), 100).unwrap();
        forward_tv_at_horizon(&m, &c, &start, &grid, &reference, &cfg).unwrap()
    };
    // a constant rate b over [0, 1] reaches the same law as rate 2b over [0, 1/2]
    let (quarter, half, full) = (tv_at(0.5), tv_at(1.0), tv_at(2.0));
    assert!(full < half && half < quarter, "{quarter} {half} {full}");
}

#[test]
fn looser_tuning_criterion_needs_no_more_noise() {
    let (m, c) = square();
    let start = vec![Point::new(vec![0.0, 0.0])];
    let cfg = TuneConfig::default();
    let strict = tune_beta1(&m, &c, &start, 0.05, &cfg).unwrap();
    let loose = tune_beta1(&m, &c, &start, 0.10, &cfg).unwrap();
    assert!(loose <= strict, "{loose} > {strict}");
}

#[test]
fn uniform_start_needs_no_tuning() {
    let (m, c) = square();
    let start = uniform_sample(&m, &c, 50_000, 5).unwrap();
    let cfg = TuneConfig::default();
    assert_eq!(tune_beta1(&m, &c, &start, 0.05, &cfg).unwrap(), cfg.beta0);
}

#[test]
fn forward_batches_stay_inside() {
    let (m, c) = square();
    let data: Vec<Point> = (0..200).map(|i| Point::new(vec![0.9, -0.9 + 0.009 * i as f64])).collect();
    let grid = TimeGrid::new(BetaSchedule::new(1e-3, 5.0).unwrap(), 50).unwrap();
    let batch = forward_noise_batch(&m, &c, &data, &grid, 4, 1).unwrap();
    assert_eq!(batch.len(), 800);
    for (t, p) in &batch {
        assert!((0.0..=1.0).contains(t));
        assert!(c.contains(p));
    }
}

/// Reflected heat kernel on [0, 1] started at `x0`, and its log-derivative.
fn image_density_and_score(x: f64, s: f64, x0: f64) -> (f64, f64) {
    let (mut p, mut dp) = (0.0, 0.0);
    for k in -6..=6 {
        for a in [x0 - 2.0 * k as f64, -x0 - 2.0 * k as f64] {
            let u = x - a;
            let phi = (-0.5 * u * u / s).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
            p += phi;
            dp -= u / s * phi;
        }
    }
    (p, dp / p)
}

#[test]
fn exact_score_reverses_to_a_reflected_gaussian() {
    // target: reflected Gaussian on [0, 1] at variance s0 around mu; the
    // forward law at time t is the same family at variance s0 + ∫β
    let (mu, s0) = (0.3, 0.01);
    let m = Manifold::euclidean(1);
    let c = ConstraintSet::hypercube(1, 0.0, 1.0);
    let schedule = BetaSchedule::new(1e-3, 3.0).unwrap();
    let grid = TimeGrid::new(schedule, 1000).unwrap();
    let score = Pointwise {
        dim: 1,
        f: move |t: f64, x: &[f64], out: &mut [f64]| {
            out[0] = image_density_and_score(x[0], s0 + schedule.integral(t), mu).1;
        },
    };
    let xs: Vec<f64> = reverse_generate(&m, &c, &score, &grid, 20_000, 11)
        .unwrap()
        .iter()
        .map(|p| p.0[0])
        .collect();
    let target = |x: f64| rbm_density_1d(x, s0, mu, 1e-16).unwrap();
    let tv = histogram_tv(&xs, TvReference::Density(&target), 0.0, 1.0, 50).unwrap();
    assert!(tv < 0.1, "TV {tv}");
}

#[test]
fn image_series_score_matches_the_density_oracle() {
    for &(x, s, x0) in &[(0.1, 0.02, 0.3), (0.7, 0.5, 0.3), (0.99, 0.05, 0.9)] {
        let (p, score) = image_density_and_score(x, s, x0);
        assert!((p - rbm_density_1d(x, s, x0, 1e-16).unwrap()).abs() < 1e-10);
        let h = 1e-6;
        let fd = (rbm_density_1d(x + h, s, x0, 1e-16).unwrap().ln() - rbm_density_1d(x - h, s, x0, 1e-16).unwrap().ln())
            / (2.0 * h);
        assert!((score - fd).abs() < 1e-5 * (1.0 + fd.abs()), "{score} vs {fd}");
    }
}
