// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use procnet::synth::{
    generate_market, generate_market_with_truth, issuer_id, winner_id, RiskRegime, SynthConfig,
    WeightLaw,
};

/// Upper 1% point of chi-square with one degree of freedom.
const CHI2_1DF_99: f64 = 6.635;

fn blocks_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_issuers: 60,
        n_winners: 80,
        n_blocks: 2,
        p_intra: 0.3,
        p_inter: 0.02,
        weight_law: WeightLaw::PowerLaw { exponent: 2.2, max: 20 },
        n_cpv_classes: 12,
        risk_regime: RiskRegime::BlocksHot {
            p_base: 0.12,
            p_hot: 0.45,
            hot_blocks: [1].into(),
        },
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn same_seed_same_market() {
    let cfg = blocks_config(5);
    assert_eq!(generate_market(&cfg).unwrap().records, generate_market(&cfg).unwrap().records);
    let other = SynthConfig { seed: 6, ..cfg };
    assert_ne!(generate_market(&other).unwrap().records, generate_market(&blocks_config(5)).unwrap().records);
}

#[test]
fn intra_block_density_within_three_standard_errors() {
    for seed in 0..10 {
        let cfg = blocks_config(seed);
        let m = generate_market_with_truth(&cfg).unwrap();
        let pairs: BTreeSet<(&str, &str)> = m
            .table
            .records
            .iter()
            .map(|r| (r.issuer_id.as_str(), r.winner_id.as_str()))
            .collect();
        let mut n_pairs = 0usize;
        let mut linked = 0usize;
        for i in 0..cfg.n_issuers {
            for w in 0..cfg.n_winners {
                if m.issuer_block[i] == m.winner_block[w] {
                    n_pairs += 1;
                    linked += usize::from(pairs.contains(&(issuer_id(i).as_str(), winner_id(w).as_str())));
                }
            }
        }
        assert!(n_pairs >= 1000);
        let density = linked as f64 / n_pairs as f64;
        let se = (cfg.p_intra * (1.0 - cfg.p_intra) / n_pairs as f64).sqrt();
        assert!((density - cfg.p_intra).abs() < 3.0 * se, "seed {seed}: {density}");
    }
}

fn cold_flags_pass_chi_square(cfg: &SynthConfig) -> bool {
    let m = generate_market_with_truth(cfg).unwrap();
    let p = cfg.risk_regime.p_base();
    let (mut n, mut single) = (0f64, 0f64);
    for (r, &hot) in m.table.records.iter().zip(&m.hot) {
        if !hot {
            n += 1.0;
            single += f64::from(u8::from(r.single_bid));
        }
    }
    let expected = n * p;
    let chi2 = (single - expected).powi(2) / (expected * (1.0 - p));
    chi2 < CHI2_1DF_99
}

#[test]
fn flags_outside_hot_set_are_bernoulli_base() {
    let blocks = (0..50).filter(|&s| cold_flags_pass_chi_square(&blocks_config(s))).count();
    assert!(blocks >= 45, "blocks_hot: {blocks}/50");
    let core = (0..50)
        .filter(|&s| {
            cold_flags_pass_chi_square(&SynthConfig {
                hub_fraction: 0.1,
                hub_weight_multiplier: 5,
                risk_regime: RiskRegime::CoreHot { p_base: 0.1, p_hot: 0.4 },
                ..blocks_config(s)
            })
        })
        .count();
    assert!(core >= 45, "core_hot: {core}/50");
}

#[test]
fn hot_contracts_follow_the_regime() {
    let m = generate_market_with_truth(&blocks_config(1)).unwrap();
    for (r, &hot) in m.table.records.iter().zip(&m.hot) {
        let i: usize = r.issuer_id[1..].parse().unwrap();
        let w: usize = r.winner_id[1..].parse().unwrap();
        let intra = m.issuer_block[i] == m.winner_block[w];
        assert_eq!(hot, intra && m.issuer_block[i] == 1);
    }
}

#[test]
fn equal_probabilities_make_regimes_coincide() {
    let hot = SynthConfig {
        risk_regime: RiskRegime::BlocksHot {
            p_base: 0.2,
            p_hot: 0.2,
            hot_blocks: [0].into(),
        },
        ..blocks_config(9)
    };
    let uniform = SynthConfig {
        risk_regime: RiskRegime::Uniform { p_base: 0.2 },
        ..blocks_config(9)
    };
    // same random stream, same per-contract probability
    assert_eq!(generate_market(&hot).unwrap().records, generate_market(&uniform).unwrap().records);
}
