// SPDX-License-Identifier: Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zeta};

use procnet::powerlaw::{fit_power_law, MIN_TAIL};
use procnet::Error;

fn zeta_sample(alpha: f64, n: usize, seed: u64) -> Vec<u64> {
    let dist = Zeta::new(alpha).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| dist.sample(&mut rng) as u64).collect()
}

#[test]
fn recovers_exponent_of_zeta_samples() {
    for (alpha, seed) in [(2.5, 1), (2.5, 2), (2.2, 3), (3.0, 4)] {
        let fit = fit_power_law(&zeta_sample(alpha, 10_000, seed)).unwrap();
        assert!((fit.alpha - alpha).abs() < 0.1, "alpha {alpha}: {fit:?}");
        assert!(fit.n_tail >= MIN_TAIL);
    }
}

#[test]
fn duplicating_the_data_changes_nothing() {
    let data = zeta_sample(2.5, 3000, 7);
    let doubled: Vec<u64> = data.iter().chain(&data).copied().collect();
    let a = fit_power_law(&data).unwrap();
    let b = fit_power_law(&doubled).unwrap();
    assert_eq!(a.xmin, b.xmin);
    assert_eq!(b.n_tail, 2 * a.n_tail);
    assert!((a.alpha - b.alpha).abs() < 1e-6, "{a:?} vs {b:?}");
    assert!((a.ks_distance - b.ks_distance).abs() < 1e-9);
}

#[test]
fn constant_data_has_no_tail() {
    assert!(matches!(fit_power_law(&[4; 50]), Err(Error::NoTail)));
}
