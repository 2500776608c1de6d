// SPDX-License-Identifier: Apache-2.0

//! Discrete power-law fits of degree sequences.
//!
//! For each candidate lower cutoff `xmin` the exponent is the exact discrete
//! maximum-likelihood estimate, found by minimizing
//! `ln ζ(α, xmin) + α · mean(ln x)` over the tail. The cutoff with the
//! smallest Kolmogorov–Smirnov distance between the empirical tail and the
//! fitted model wins; ties go to the smaller cutoff.

use serde::Serialize;

use crate::{Error, Result};

/// Smallest tail a candidate cutoff may leave.
pub const MIN_TAIL: usize = 10;

const ALPHA_LO: f64 = 1.0 + 1e-6;
const ALPHA_HI: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub xmin: u64,
    pub n_tail: usize,
    pub ks_distance: f64,
}

// B_{2j} / (2j)!
const BERNOULLI_OVER_FACTORIAL: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
];

/// Hurwitz zeta ζ(s, q) = Σ_{k≥0} (q + k)^(−s) for s > 1, q > 0, by
/// Euler–Maclaurin summation after ten explicit terms.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    debug_assert!(s > 1.0 && q > 0.0);
    const N: usize = 10;
    let mut sum = 0.0;
    for k in 0..N {
        sum += (q + k as f64).powf(-s);
    }
    let a = q + N as f64;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // s (s+1) ... (s+2j-2) a^(-s-2j+1)
    let mut rising = s;
    let mut power = a.powf(-s - 1.0);
    let a2 = a * a;
    for (j, coef) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        let term = coef * rising * power;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        let k = 2.0 * j as f64;
        rising *= (s + k + 1.0) * (s + k + 2.0);
        power /= a2;
    }
    sum
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-10 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Discrete MLE of α for a tail with the given cutoff and mean log value.
pub fn discrete_mle_alpha(xmin: u64, mean_ln: f64) -> f64 {
    let q = xmin as f64;
    golden_section_min(|a| hurwitz_zeta(a, q).ln() + a * mean_ln, ALPHA_LO, ALPHA_HI)
}

/// The closed-form approximation `1 + n / Σ ln(x / (xmin − 0.5))`.
pub fn approximate_alpha(tail: &[u64], xmin: u64) -> f64 {
    let denom: f64 = tail
        .iter()
        .map(|&x| (x as f64 / (xmin as f64 - 0.5)).ln())
        .sum();
    1.0 + tail.len() as f64 / denom
}

/// KS distance between the empirical CDF of `tail` (sorted ascending) and
/// the discrete power law with parameters `(alpha, xmin)`.
fn ks_distance(tail: &[u64], alpha: f64, xmin: u64) -> f64 {
    let n = tail.len() as f64;
    let z0 = hurwitz_zeta(alpha, xmin as f64);
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < tail.len() {
        let x = tail[i];
        let mut j = i;
        while j < tail.len() && tail[j] == x {
            j += 1;
        }
        let empirical = j as f64 / n;
        let model = 1.0 - hurwitz_zeta(alpha, x as f64 + 1.0) / z0;
        d = d.max((empirical - model).abs());
        i = j;
    }
    d
}

pub fn fit_power_law(data: &[u64]) -> Result<PowerLawFit> {
    let mut xs: Vec<u64> = data.iter().copied().filter(|&x| x > 0).collect();
    if xs.len() != data.len() {
        return Err(Error::Invalid("power-law data must be positive".into()));
    }
    xs.sort_unstable();

    let mut best: Option<PowerLawFit> = None;
    let mut start = 0;
    while start < xs.len() {
        let xmin = xs[start];
        let tail = &xs[start..];
        // at least two distinct values, or the likelihood has no maximum
        if tail.len() < MIN_TAIL || *tail.last().unwrap() == xmin {
            break;
        }
        let mean_ln = tail.iter().map(|&x| (x as f64).ln()).sum::<f64>() / tail.len() as f64;
        let alpha = discrete_mle_alpha(xmin, mean_ln);
        let ks = ks_distance(tail, alpha, xmin);
        if best.is_none_or(|b| ks < b.ks_distance) {
            best = Some(PowerLawFit {
                alpha,
                xmin,
                n_tail: tail.len(),
                ks_distance: ks,
            });
        }
        while start < xs.len() && xs[start] == xmin {
            start += 1;
        }
    }
    best.ok_or(Error::NoTail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_zeta_matches_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((hurwitz_zeta(2.0, 1.0) - pi2_6).abs() < 1e-14);
        assert!((hurwitz_zeta(3.0, 1.0) - 1.202_056_903_159_594_3).abs() < 1e-14);
        assert!((hurwitz_zeta(4.0, 1.0) - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-14);
        // ζ(2, 3) = π²/6 − 1 − 1/4
        assert!((hurwitz_zeta(2.0, 3.0) - (pi2_6 - 1.25)).abs() < 1e-14);
    }

    #[test]
    fn hurwitz_zeta_matches_direct_sum_for_steep_exponents() {
        for &(s, q) in &[(6.0, 1.0), (8.5, 2.0), (12.0, 1.5)] {
            let direct: f64 = (0..10_000).map(|k| (q + k as f64).powf(-s)).sum();
            let z = hurwitz_zeta(s, q);
            assert!((z - direct).abs() <= 1e-13 * direct, "s={s} q={q}");
        }
    }

    #[test]
    fn hurwitz_zeta_near_one() {
        // ζ(s) ~ 1/(s−1) + γ
        let s = 1.0 + 1e-4;
        let z = hurwitz_zeta(s, 1.0);
        assert!((z - (1e4 + 0.577_215_664_9)).abs() < 1e-3);
    }

    #[test]
    fn degenerate_sequence_has_no_tail() {
        assert!(matches!(fit_power_law(&[4; 50]), Err(Error::NoTail)));
        assert!(matches!(fit_power_law(&[1, 2, 3]), Err(Error::NoTail)));
        assert!(fit_power_law(&[0, 1, 2]).is_err());
    }

    #[test]
    fn mle_is_stationary_point_of_likelihood() {
        let mean_ln = 0.8;
        let a = discrete_mle_alpha(1, mean_ln);
        let nll = |x: f64| hurwitz_zeta(x, 1.0).ln() + x * mean_ln;
        let h = 1e-4;
        assert!(nll(a) <= nll(a + h) && nll(a) <= nll(a - h));
    }

    #[test]
    fn approximation_is_close_for_larger_cutoffs() {
        let tail: Vec<u64> = (0..2000).map(|k| 10 + (k % 50) * (k % 7)).collect();
        let mean_ln = tail.iter().map(|&x| (x as f64).ln()).sum::<f64>() / tail.len() as f64;
        let exact = discrete_mle_alpha(10, mean_ln);
        assert!((approximate_alpha(&tail, 10) - exact).abs() < 0.05);
    }
}
