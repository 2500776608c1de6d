// SPDX-License-Identifier: Apache-2.0

//! Synthetic procurement markets with planted blocks, hubs and risk regimes.
//!
//! Issuers and winners are split evenly into blocks. Each issuer–winner pair
//! is linked with probability `p_intra` inside a block and `p_inter` across
//! blocks. A linked pair receives `w` contracts, with `w` drawn from the
//! weight law and multiplied by `hub_weight_multiplier` once per hub endpoint.
//! Every contract then gets a CPV class and a single-bid flag.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::KvConfig;
use crate::ingest::{ContractRecord, ContractTable, CpvCode};
use crate::{Error, Result};

/// Upper bound on CPV classes; codes are `10..=99`.
pub const MAX_CPV_CLASSES: usize = 90;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightLaw {
    Constant(u64),
    /// `P(w) ∝ w^-exponent` on `1..=max`.
    PowerLaw { exponent: f64, max: u64 },
}

impl WeightLaw {
    fn mean(&self) -> f64 {
        match *self {
            WeightLaw::Constant(w) => w as f64,
            WeightLaw::PowerLaw { exponent, max } => {
                let (num, den) = (1..=max).fold((0.0, 0.0), |(n, d), k| {
                    let p = (k as f64).powf(-exponent);
                    (n + k as f64 * p, d + p)
                });
                num / den
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RiskRegime {
    Uniform { p_base: f64 },
    /// Contracts between a hub issuer and a hub winner are single-bid with `p_hot`.
    CoreHot { p_base: f64, p_hot: f64 },
    /// Contracts inside a hot block are single-bid with `p_hot`.
    BlocksHot {
        p_base: f64,
        p_hot: f64,
        hot_blocks: BTreeSet<usize>,
    },
}

impl RiskRegime {
    pub fn p_base(&self) -> f64 {
        match *self {
            RiskRegime::Uniform { p_base }
            | RiskRegime::CoreHot { p_base, .. }
            | RiskRegime::BlocksHot { p_base, .. } => p_base,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_issuers: usize,
    pub n_winners: usize,
    pub n_blocks: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub weight_law: WeightLaw,
    pub hub_fraction: f64,
    pub hub_weight_multiplier: u64,
    pub n_cpv_classes: usize,
    /// Assign CPV classes by block instead of uniformly at random.
    pub cpv_by_block: bool,
    pub risk_regime: RiskRegime,
    pub seed: u64,
    pub country: String,
    pub year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_issuers: 100,
            n_winners: 200,
            n_blocks: 1,
            p_intra: 0.05,
            p_inter: 0.0,
            weight_law: WeightLaw::Constant(1),
            hub_fraction: 0.0,
            hub_weight_multiplier: 1,
            n_cpv_classes: 10,
            cpv_by_block: false,
            risk_regime: RiskRegime::Uniform { p_base: 0.2 },
            seed: 0,
            country: "XX".into(),
            year: 2014,
        }
    }
}

fn prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be in [0, 1], got {p}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        prob("p_intra", self.p_intra)?;
        prob("p_inter", self.p_inter)?;
        prob("hub_fraction", self.hub_fraction)?;
        if self.p_inter > self.p_intra {
            return Err(Error::Invalid("p_inter must not exceed p_intra".into()));
        }
        if self.n_blocks == 0 || self.n_blocks > self.n_issuers.min(self.n_winners).max(1) {
            return Err(Error::Invalid(format!(
                "n_blocks must be between 1 and min(n_issuers, n_winners), got {}",
                self.n_blocks
            )));
        }
        if self.hub_weight_multiplier == 0 {
            return Err(Error::Invalid("hub_weight_multiplier must be at least 1".into()));
        }
        if !(1..=MAX_CPV_CLASSES).contains(&self.n_cpv_classes) {
            return Err(Error::Invalid(format!(
                "n_cpv_classes must be between 1 and {MAX_CPV_CLASSES}"
            )));
        }
        match self.weight_law {
            WeightLaw::Constant(0) => {
                return Err(Error::Invalid("constant weight must be at least 1".into()))
            }
            WeightLaw::PowerLaw { exponent, max } if max == 0 || !exponent.is_finite() => {
                return Err(Error::Invalid("power-law weights need max ≥ 1 and a finite exponent".into()))
            }
            _ => {}
        }
        match &self.risk_regime {
            RiskRegime::Uniform { p_base } => prob("p_base", *p_base)?,
            RiskRegime::CoreHot { p_base, p_hot } => {
                prob("p_base", *p_base)?;
                prob("p_hot", *p_hot)?;
            }
            RiskRegime::BlocksHot {
                p_base,
                p_hot,
                hot_blocks,
            } => {
                prob("p_base", *p_base)?;
                prob("p_hot", *p_hot)?;
                if let Some(&b) = hot_blocks.iter().find(|&&b| b >= self.n_blocks) {
                    return Err(Error::Invalid(format!("hot block {b} does not exist")));
                }
            }
        }
        Ok(())
    }

    /// Expected number of contracts.
    pub fn expected_contracts(&self) -> f64 {
        let hubs_i = self.n_hubs(self.n_issuers) as f64;
        let hubs_w = self.n_hubs(self.n_winners) as f64;
        let (ni, nw) = (self.n_issuers as f64, self.n_winners as f64);
        let b = self.n_blocks as f64;
        let intra_pairs = ni * nw / b;
        let pairs_density = (intra_pairs * self.p_intra + (ni * nw - intra_pairs) * self.p_inter) / (ni * nw);
        let m = self.hub_weight_multiplier as f64;
        // hub status is independent of block membership in expectation
        let fi = if ni > 0.0 { hubs_i / ni } else { 0.0 };
        let fw = if nw > 0.0 { hubs_w / nw } else { 0.0 };
        let mult = (1.0 + fi * (m - 1.0)) * (1.0 + fw * (m - 1.0));
        ni * nw * pairs_density * self.weight_law.mean() * mult
    }

    fn n_hubs(&self, n: usize) -> usize {
        (self.hub_fraction * n as f64).round() as usize
    }

    /// Reads a config file. Recognized keys: `n_issuers`, `n_winners`,
    /// `n_blocks`, `p_intra`, `p_inter`, `weight_law` (`constant` or
    /// `power_law`), `weight`, `weight_exponent`, `weight_max`,
    /// `hub_fraction`, `hub_weight_multiplier`, `n_cpv_classes`,
    /// `cpv_by_block`, `risk_regime` (`uniform`, `core_hot`, `blocks_hot`),
    /// `p_base`, `p_hot`, `hot_blocks` (comma list), `seed`, `country`, `year`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "n_issuers", "n_winners", "n_blocks", "p_intra", "p_inter", "weight_law", "weight",
            "weight_exponent", "weight_max", "hub_fraction", "hub_weight_multiplier",
            "n_cpv_classes", "cpv_by_block", "risk_regime", "p_base", "p_hot", "hot_blocks",
            "seed", "country", "year",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::Invalid(format!("unknown synth config key `{k}`")));
        }
        let d = Self::default();
        let weight_law = match kv.get("weight_law").unwrap_or("constant") {
            "constant" => WeightLaw::Constant(kv.get_parsed("weight")?.unwrap_or(1)),
            "power_law" => WeightLaw::PowerLaw {
                exponent: kv.get_parsed("weight_exponent")?.unwrap_or(2.5),
                max: kv.get_parsed("weight_max")?.unwrap_or(100),
            },
            other => return Err(Error::Invalid(format!("unknown weight_law `{other}`"))),
        };
        let p_base = kv.get_parsed("p_base")?.unwrap_or(d.risk_regime.p_base());
        let p_hot = kv.get_parsed::<f64>("p_hot")?;
        let need_hot = || p_hot.ok_or_else(|| Error::Invalid("risk regime needs p_hot".into()));
        let risk_regime = match kv.get("risk_regime").unwrap_or("uniform") {
            "uniform" => RiskRegime::Uniform { p_base },
            "core_hot" => RiskRegime::CoreHot {
                p_base,
                p_hot: need_hot()?,
            },
            "blocks_hot" => {
                let hot_blocks = kv
                    .get("hot_blocks")
                    .unwrap_or("")
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse()
                            .map_err(|_| Error::Invalid(format!("bad hot block {s:?}")))
                    })
                    .collect::<Result<_>>()?;
                RiskRegime::BlocksHot {
                    p_base,
                    p_hot: need_hot()?,
                    hot_blocks,
                }
            }
            other => return Err(Error::Invalid(format!("unknown risk_regime `{other}`"))),
        };
        let cfg = Self {
            n_issuers: kv.get_parsed("n_issuers")?.unwrap_or(d.n_issuers),
            n_winners: kv.get_parsed("n_winners")?.unwrap_or(d.n_winners),
            n_blocks: kv.get_parsed("n_blocks")?.unwrap_or(d.n_blocks),
            p_intra: kv.get_parsed("p_intra")?.unwrap_or(d.p_intra),
            p_inter: kv.get_parsed("p_inter")?.unwrap_or(d.p_inter),
            weight_law,
            hub_fraction: kv.get_parsed("hub_fraction")?.unwrap_or(d.hub_fraction),
            hub_weight_multiplier: kv
                .get_parsed("hub_weight_multiplier")?
                .unwrap_or(d.hub_weight_multiplier),
            n_cpv_classes: kv.get_parsed("n_cpv_classes")?.unwrap_or(d.n_cpv_classes),
            cpv_by_block: kv.get_parsed("cpv_by_block")?.unwrap_or(false),
            risk_regime,
            seed: kv.get_parsed("seed")?.unwrap_or(d.seed),
            country: kv.get("country").unwrap_or(&d.country).to_string(),
            year: kv.get_parsed("year")?.unwrap_or(d.year),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A generated market together with its planted structure.
#[derive(Debug, Clone)]
pub struct SynthMarket {
    pub table: ContractTable,
    pub issuer_block: Vec<usize>,
    pub winner_block: Vec<usize>,
    pub hub_issuers: Vec<bool>,
    pub hub_winners: Vec<bool>,
    /// Whether each contract (in table order) was drawn with `p_hot`.
    pub hot: Vec<bool>,
}

pub fn issuer_id(i: usize) -> String {
    format!("I{i:05}")
}

pub fn winner_id(w: usize) -> String {
    format!("W{w:05}")
}

fn block_of(i: usize, n: usize, n_blocks: usize) -> usize {
    i * n_blocks / n
}

fn pick_hubs(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut hub = vec![false; n];
    for &i in &idx[..k.min(n)] {
        hub[i] = true;
    }
    hub
}

pub fn generate_market(config: &SynthConfig) -> Result<ContractTable> {
    generate_market_with_truth(config).map(|m| m.table)
}

pub fn generate_market_with_truth(config: &SynthConfig) -> Result<SynthMarket> {
    config.validate()?;
    if config.expected_contracts() <= 0.0 {
        return Err(Error::Invalid("configuration yields an expected contract count of 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (ni, nw, nb) = (config.n_issuers, config.n_winners, config.n_blocks);
    let issuer_block: Vec<usize> = (0..ni).map(|i| block_of(i, ni, nb)).collect();
    let winner_block: Vec<usize> = (0..nw).map(|w| block_of(w, nw, nb)).collect();
    let hub_issuers = pick_hubs(ni, config.n_hubs(ni), &mut rng);
    let hub_winners = pick_hubs(nw, config.n_hubs(nw), &mut rng);

    let power_law = match config.weight_law {
        WeightLaw::PowerLaw { exponent, max } => Some(
            WeightedIndex::new((1..=max).map(|k| (k as f64).powf(-exponent)))
                .map_err(|e| Error::Invalid(format!("power-law weights: {e}")))?,
        ),
        WeightLaw::Constant(_) => None,
    };
    let issuer_ids: Vec<String> = (0..ni).map(issuer_id).collect();
    let winner_ids: Vec<String> = (0..nw).map(winner_id).collect();
    let cpv_codes: Vec<CpvCode> = (0..config.n_cpv_classes)
        .map(|c| CpvCode::parse(&format!("{:02}000000", 10 + c)).expect("valid code"))
        .collect();

    let mut records = Vec::new();
    let mut hot_flags = Vec::new();
    for i in 0..ni {
        for w in 0..nw {
            let same_block = issuer_block[i] == winner_block[w];
            let p = if same_block { config.p_intra } else { config.p_inter };
            if !rng.random_bool(p) {
                continue;
            }
            let base = match (&config.weight_law, &power_law) {
                (WeightLaw::Constant(c), _) => *c,
                (_, Some(dist)) => dist.sample(&mut rng) as u64 + 1,
                _ => unreachable!(),
            };
            let n_hub_ends = u32::from(hub_issuers[i]) + u32::from(hub_winners[w]);
            let weight = base * config.hub_weight_multiplier.pow(n_hub_ends);
            let hot = match &config.risk_regime {
                RiskRegime::Uniform { .. } => false,
                RiskRegime::CoreHot { .. } => n_hub_ends == 2,
                RiskRegime::BlocksHot { hot_blocks, .. } => {
                    same_block && hot_blocks.contains(&issuer_block[i])
                }
            };
            let p_sb = match config.risk_regime {
                RiskRegime::CoreHot { p_hot, .. } | RiskRegime::BlocksHot { p_hot, .. } if hot => p_hot,
                _ => config.risk_regime.p_base(),
            };
            for _ in 0..weight {
                let class = if config.cpv_by_block {
                    issuer_block[i] % config.n_cpv_classes
                } else {
                    rng.random_range(0..config.n_cpv_classes)
                };
                let single_bid = rng.random_bool(p_sb);
                let n_bids = if single_bid { 1 } else { rng.random_range(2..=5) };
                records.push(ContractRecord {
                    contract_id: format!("C{:07}", records.len()),
                    country: config.country.clone(),
                    year: config.year,
                    issuer_id: issuer_ids[i].clone(),
                    winner_id: winner_ids[w].clone(),
                    cpv: cpv_codes[class].clone(),
                    n_bids: Some(n_bids),
                    single_bid,
                    value: None,
                });
                hot_flags.push(hot);
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Invalid("generated market has no contracts".into()));
    }
    log::info!(
        "synthesized {} contracts (expected {:.0})",
        records.len(),
        config.expected_contracts()
    );
    Ok(SynthMarket {
        table: ContractTable::new(records),
        issuer_block,
        winner_block,
        hub_issuers,
        hub_winners,
        hot: hot_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rate_concentrates() {
        let cfg = SynthConfig {
            n_issuers: 100,
            n_winners: 200,
            p_intra: 0.1,
            weight_law: WeightLaw::Constant(5),
            seed: 4,
            ..SynthConfig::default()
        };
        let t = generate_market(&cfg).unwrap();
        assert!(t.len() > 9000, "{}", t.len());
        let rate = t.records.iter().filter(|r| r.single_bid).count() as f64 / t.len() as f64;
        assert!((rate - 0.2).abs() < 0.02, "{rate}");
    }

    #[test]
    fn hub_weights_multiply_per_endpoint() {
        let cfg = SynthConfig {
            n_issuers: 10,
            n_winners: 10,
            p_intra: 1.0,
            hub_fraction: 0.1,
            hub_weight_multiplier: 3,
            weight_law: WeightLaw::Constant(2),
            ..SynthConfig::default()
        };
        let m = generate_market_with_truth(&cfg).unwrap();
        let hi = m.hub_issuers.iter().position(|&h| h).unwrap();
        let hw = m.hub_winners.iter().position(|&h| h).unwrap();
        let count = |i: usize, w: usize| {
            m.table
                .records
                .iter()
                .filter(|r| r.issuer_id == issuer_id(i) && r.winner_id == winner_id(w))
                .count()
        };
        assert_eq!(count(hi, hw), 18);
        assert_eq!(count(hi, (hw + 1) % 10), 6);
        assert_eq!(count((hi + 1) % 10, (hw + 1) % 10), 2);
        assert_eq!(m.table.len() as f64, cfg.expected_contracts());
    }

    #[test]
    fn zero_expected_contracts_is_an_error() {
        let cfg = SynthConfig {
            p_intra: 0.0,
            ..SynthConfig::default()
        };
        assert!(generate_market(&cfg).is_err());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig { p_inter: 0.5, p_intra: 0.1, ..SynthConfig::default() },
            SynthConfig { p_intra: 1.5, ..SynthConfig::default() },
            SynthConfig { n_cpv_classes: 0, ..SynthConfig::default() },
            SynthConfig {
                risk_regime: RiskRegime::BlocksHot {
                    p_base: 0.1,
                    p_hot: 0.5,
                    hot_blocks: [3].into(),
                },
                n_blocks: 2,
                ..SynthConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn kv_round_trip() {
        let kv = KvConfig::parse(
            "n_issuers = 40\nn_winners = 80\nn_blocks = 4\np_intra = 0.3\np_inter = 0.01\n\
             risk_regime = blocks_hot\np_base = 0.1\np_hot = 0.5\nhot_blocks = 0, 2\n\
             weight_law = power_law\nweight_exponent = 2\nweight_max = 20\nseed = 9\n",
        )
        .unwrap();
        let cfg = SynthConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.n_blocks, 4);
        assert_eq!(
            cfg.risk_regime,
            RiskRegime::BlocksHot {
                p_base: 0.1,
                p_hot: 0.5,
                hot_blocks: [0, 2].into()
            }
        );
        assert_eq!(cfg.weight_law, WeightLaw::PowerLaw { exponent: 2.0, max: 20 });
        assert!(SynthConfig::from_kv(&KvConfig::parse("colour = red").unwrap()).is_err());
        assert!(SynthConfig::from_kv(&KvConfig::parse("risk_regime = core_hot").unwrap()).is_err());
    }

    #[test]
    fn cpv_by_block_follows_blocks() {
        let cfg = SynthConfig {
            n_blocks: 4,
            n_issuers: 40,
            n_winners: 40,
            p_intra: 0.5,
            cpv_by_block: true,
            ..SynthConfig::default()
        };
        let t = generate_market(&cfg).unwrap();
        for r in &t.records {
            let i: usize = r.issuer_id[1..].parse().unwrap();
            assert_eq!(r.cpv.class2(), format!("{}", 10 + i * 4 / 40));
        }
    }
}
