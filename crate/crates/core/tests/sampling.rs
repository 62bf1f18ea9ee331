//! Empirical checks of the batch-size laws against their exact moments.

use cullsim::distributions::binomial_thin;
use cullsim::{IntegerLaw, Lane, RngStream};

fn law(s: &str) -> IntegerLaw {
    s.parse().unwrap()
}

fn draws(l: &IntegerLaw, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = RngStream::new(seed, 0, Lane::Births);
    (0..n).map(|_| l.sample(&mut rng)).collect()
}

#[test]
fn zeta_tail_frequency() {
    // P(X >= 100) for zeta(1.5), from 1 - sum_{k<100} k^-1.5 / zeta(1.5)
    // at 30 digits
    const EXACT: f64 = 0.076_750_551_976_637_43;
    let n = 1_000_000;
    let hits = draws(&law("zeta:1.5"), n, 1)
        .iter()
        .filter(|&&x| x >= 100)
        .count() as f64;
    let se = (EXACT * (1.0 - EXACT) / n as f64).sqrt();
    assert!(
        (hits / n as f64 - EXACT).abs() < 3.0 * se,
        "{}",
        hits / n as f64
    );
}

#[test]
fn uniform_range_frequencies() {
    let n = 1_000_000;
    let xs = draws(&law("unif:1:3"), n, 2);
    let se = (1.0 / 3.0 * 2.0 / 3.0 / n as f64).sqrt();
    for k in 1..=3 {
        let freq = xs.iter().filter(|&&x| x == k).count() as f64 / n as f64;
        assert!((freq - 1.0 / 3.0).abs() < 3.0 * se, "{k}: {freq}");
    }
}

#[test]
fn empirical_means_match_exact_means() {
    let n = 1_000_000;
    for (i, spec) in [
        "const:3",
        "unif:2:7",
        "geom:0.3",
        "pois1:2.5",
        "zeta:3.5",
        "zeta:4.5",
    ]
    .iter()
    .enumerate()
    {
        let l = law(spec);
        let xs = draws(&l, n, 10 + i as u64);
        let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        assert!(xs.iter().all(|&x| x >= 1));
        let se = (l.variance() / n as f64).sqrt();
        assert!(
            (mean - l.mean()).abs() <= 4.0 * se.max(1e-12),
            "{spec}: {mean} vs {}",
            l.mean()
        );
    }
}

#[test]
fn thinning_mean_and_residue() {
    let mut rng = RngStream::new(3, 0, Lane::Walk);
    let n = 1_000_000;
    let mut sum = 0u64;
    for _ in 0..n {
        let k = binomial_thin(10, 0.3, &mut rng);
        assert!(k <= 10);
        sum += k;
    }
    let mean = sum as f64 / n as f64;
    let se = (10.0 * 0.3 * 0.7 / n as f64).sqrt();
    assert!((mean - 3.0).abs() < 3.0 * se, "{mean}");

    let mut sum = 0u64;
    for _ in 0..10_000 {
        sum += binomial_thin(1_000, 0.25, &mut rng);
    }
    let mean = sum as f64 / 10_000.0;
    assert!((mean - 250.0).abs() < 4.0 * (1_000.0 * 0.25 * 0.75 / 10_000.0f64).sqrt());
}

#[test]
fn streams_are_reproducible() {
    let l = law("pois1:3.0");
    assert_eq!(draws(&l, 1000, 5), draws(&l, 1000, 5));
    assert_ne!(draws(&l, 1000, 5), draws(&l, 1000, 6));
}
