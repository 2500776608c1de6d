// SPDX-License-Identifier: Apache-2.0

//! Benchmark fixtures.

use procnet::synth::{generate_market, RiskRegime, SynthConfig, WeightLaw};
use procnet::MarketGraph;

/// Hub-heavy market with roughly `scale * 100k` contracts.
pub fn market(scale: f64, seed: u64) -> MarketGraph {
    let cfg = SynthConfig {
        n_issuers: (1000.0 * scale.sqrt()) as usize,
        n_winners: (2000.0 * scale.sqrt()) as usize,
        p_intra: 0.01,
        weight_law: WeightLaw::Constant(2),
        hub_fraction: 0.065,
        hub_weight_multiplier: 10,
        n_cpv_classes: 40,
        risk_regime: RiskRegime::Uniform { p_base: 0.2 },
        seed,
        ..SynthConfig::default()
    };
    MarketGraph::build(&generate_market(&cfg).expect("valid config")).expect("non-empty market")
}
