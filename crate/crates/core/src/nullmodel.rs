// SPDX-License-Identifier: Apache-2.0

//! Sector-preserving permutation null model.
//!
//! Single-bid flags are shuffled only among contracts sharing a two-digit CPV
//! class; topology, weights and any node labelling stay fixed. Replicate `i`
//! draws from a generator seeded by a hash of `(seed, i)`, so results do not
//! depend on how replicates are scheduled across threads.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::communities::{ContractClusters, EdgePartition};
use crate::core_periphery::CorePartition;
use crate::graph::MarketGraph;
use crate::{Error, Result};

pub const DEFAULT_REPS: usize = 1000;

/// A statistic of the contract-level single-bid flags (indexed like
/// [`MarketGraph::contracts`]). Evaluators only read shared state.
pub trait ContractStatistic: Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, flags: &[bool]) -> Option<f64>;
}

/// Share of single-bid contracts in the whole market.
pub struct GlobalSbRate;

impl ContractStatistic for GlobalSbRate {
    fn name(&self) -> &str {
        "global_sb"
    }

    fn evaluate(&self, flags: &[bool]) -> Option<f64> {
        (!flags.is_empty())
            .then(|| flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
    }
}

/// Single-bidding rate among contracts between core issuers and core winners.
pub struct CoreSbRate {
    core_contracts: Vec<u32>,
}

impl CoreSbRate {
    pub fn new(graph: &MarketGraph, partition: &CorePartition) -> Self {
        let core_contracts = graph
            .contracts()
            .iter()
            .enumerate()
            .filter(|(_, c)| partition.is_core_edge(graph, c.edge))
            .map(|(i, _)| i as u32)
            .collect();
        Self { core_contracts }
    }

    pub fn n_core_contracts(&self) -> usize {
        self.core_contracts.len()
    }
}

impl ContractStatistic for CoreSbRate {
    fn name(&self) -> &str {
        "core_sb"
    }

    fn evaluate(&self, flags: &[bool]) -> Option<f64> {
        if self.core_contracts.is_empty() {
            return None;
        }
        let k = self
            .core_contracts
            .iter()
            .filter(|&&i| flags[i as usize])
            .count();
        Some(k as f64 / self.core_contracts.len() as f64)
    }
}

/// Weighted CV of single bidding across link communities.
pub struct SbClusteringCv {
    clusters: ContractClusters,
}

impl SbClusteringCv {
    pub fn new(graph: &MarketGraph, partition: &EdgePartition) -> Self {
        Self {
            clusters: ContractClusters::new(graph, partition),
        }
    }
}

impl ContractStatistic for SbClusteringCv {
    fn name(&self) -> &str {
        "cv"
    }

    fn evaluate(&self, flags: &[bool]) -> Option<f64> {
        self.clusters.evaluate(flags).cv
    }
}

/// Contracts grouped by two-digit CPV class.
#[derive(Debug, Clone)]
pub struct CpvClasses {
    labels: Vec<String>,
    members: Vec<Vec<u32>>,
}

impl CpvClasses {
    pub fn from_graph(graph: &MarketGraph) -> Self {
        let mut by_class: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for (i, c) in graph.contracts().iter().enumerate() {
            by_class.entry(&c.cpv_class).or_default().push(i as u32);
        }
        let (labels, members) = by_class
            .into_iter()
            .map(|(l, m)| (l.to_string(), m))
            .unzip();
        Self { labels, members }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn members(&self) -> &[Vec<u32>] {
        &self.members
    }

    /// Single-bid count per class under `flags`.
    pub fn counts(&self, flags: &[bool]) -> Vec<usize> {
        self.members
            .iter()
            .map(|m| m.iter().filter(|&&i| flags[i as usize]).count())
            .collect()
    }

    /// Fisher–Yates permutation of the flags within every class, in place.
    pub fn shuffle_in_place<R: rand::Rng + ?Sized>(
        &self,
        flags: &mut [bool],
        scratch: &mut Vec<bool>,
        rng: &mut R,
    ) {
        for m in &self.members {
            scratch.clear();
            scratch.extend(m.iter().map(|&i| flags[i as usize]));
            scratch.shuffle(rng);
            for (&i, &f) in m.iter().zip(scratch.iter()) {
                flags[i as usize] = f;
            }
        }
    }
}

/// Permutes `flags` within CPV classes and returns the result.
pub fn cpv_shuffle<R: rand::Rng + ?Sized>(classes: &CpvClasses, flags: &[bool], rng: &mut R) -> Vec<bool> {
    let mut out = flags.to_vec();
    classes.shuffle_in_place(&mut out, &mut Vec::new(), rng);
    out
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master` seed.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Generates permuted labelings of one market.
pub struct NullEngine<'a> {
    classes: CpvClasses,
    observed: Vec<bool>,
    seed: u64,
    graph: &'a MarketGraph,
}

impl<'a> NullEngine<'a> {
    pub fn new(graph: &'a MarketGraph, seed: u64) -> Self {
        Self {
            classes: CpvClasses::from_graph(graph),
            observed: graph.single_bid_flags(),
            seed,
            graph,
        }
    }

    pub fn graph(&self) -> &MarketGraph {
        self.graph
    }

    pub fn classes(&self) -> &CpvClasses {
        &self.classes
    }

    pub fn observed_flags(&self) -> &[bool] {
        &self.observed
    }

    /// Writes the flags of replicate `index` into `flags`.
    pub fn replicate_into(&self, index: usize, flags: &mut Vec<bool>, scratch: &mut Vec<bool>) {
        flags.clear();
        flags.extend_from_slice(&self.observed);
        let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(self.seed, index as u64));
        self.classes.shuffle_in_place(flags, scratch, &mut rng);
    }

    pub fn replicate(&self, index: usize) -> Vec<bool> {
        let mut flags = Vec::new();
        self.replicate_into(index, &mut flags, &mut Vec::new());
        flags
    }

    /// Statistic values of replicates `0..n_reps`, in index order. Runs on
    /// the current rayon pool.
    pub fn samples(&self, statistic: &dyn ContractStatistic, n_reps: usize) -> Vec<Option<f64>> {
        (0..n_reps)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(flags, scratch), i| {
                    self.replicate_into(i, flags, scratch);
                    statistic.evaluate(flags)
                },
            )
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullModelResult {
    pub statistic: String,
    pub observed: f64,
    pub null_mean: Option<f64>,
    pub null_std: Option<f64>,
    pub ratio: Option<f64>,
    pub z: Option<f64>,
    pub n_reps: usize,
    pub n_missing: usize,
    pub seed: u64,
    /// Replicate values (`None` where undefined); not part of the JSON.
    #[serde(skip)]
    pub samples: Option<Vec<Option<f64>>>,
}

/// `(observed / mean, (observed − mean) / std)`, each `None` when its
/// denominator is zero or unavailable.
pub fn relative_score(
    observed: f64,
    null_mean: Option<f64>,
    null_std: Option<f64>,
) -> (Option<f64>, Option<f64>) {
    let ratio = null_mean.filter(|&m| m != 0.0).map(|m| observed / m);
    let z = match (null_mean, null_std) {
        (Some(m), Some(s)) if s != 0.0 => Some((observed - m) / s),
        _ => None,
    };
    (ratio, z)
}

/// Mean and sample standard deviation, shifted by the first value so that a
/// constant sample yields exactly that value and zero spread.
pub(crate) fn mean_and_sample_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let Some(&shift) = values.first() else {
        return (None, None);
    };
    let n = values.len() as f64;
    let mean_dev = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let mean = shift + mean_dev;
    let std = (values.len() >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (Some(mean), std)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NullConfig {
    pub n_reps: usize,
    pub seed: u64,
    pub keep_samples: bool,
}

impl NullConfig {
    pub fn new(n_reps: usize, seed: u64) -> Self {
        Self {
            n_reps,
            seed,
            keep_samples: false,
        }
    }
}

/// Observed statistic against its CPV-preserving permutation distribution.
/// Replicates where the statistic is undefined are left out of the moments
/// and counted in `n_missing`.
pub fn null_distribution(
    statistic: &dyn ContractStatistic,
    graph: &MarketGraph,
    config: NullConfig,
) -> Result<NullModelResult> {
    if config.n_reps == 0 {
        return Err(Error::Invalid("n_reps must be at least 1".into()));
    }
    let engine = NullEngine::new(graph, config.seed);
    let observed = statistic
        .evaluate(engine.observed_flags())
        .ok_or_else(|| Error::UndefinedStatistic(statistic.name().to_string()))?;
    let samples = engine.samples(statistic, config.n_reps);
    let valid: Vec<f64> = samples.iter().flatten().copied().collect();
    let n_missing = samples.len() - valid.len();
    if n_missing > 0 {
        log::warn!(
            "{}: statistic undefined on {n_missing} of {} replicates",
            statistic.name(),
            config.n_reps
        );
    }
    let (null_mean, null_std) = mean_and_sample_std(&valid);
    let (ratio, z) = relative_score(observed, null_mean, null_std);
    Ok(NullModelResult {
        statistic: statistic.name().to_string(),
        observed,
        null_mean,
        null_std,
        ratio,
        z,
        n_reps: config.n_reps,
        n_missing,
        seed: config.seed,
        samples: config.keep_samples.then_some(samples),
    })
}

pub fn write_result_json<W: Write>(result: &NullModelResult, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, result)?;
    Ok(())
}

/// `replicate,value` with `NA` for undefined replicates.
pub fn write_samples<W: Write>(samples: &[Option<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replicate", "value"])?;
    for (i, s) in samples.iter().enumerate() {
        w.write_record([i.to_string(), crate::fmt_opt(*s)])?;
    }
    w.flush().map_err(|e| Error::io("<sample writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ContractRecord, ContractTable, CpvCode};

    fn market(flags: &[(&str, bool)]) -> MarketGraph {
        let records = flags
            .iter()
            .enumerate()
            .map(|(k, &(cpv, sb))| ContractRecord {
                contract_id: format!("c{k}"),
                country: "HU".into(),
                year: 2014,
                issuer_id: format!("I{}", k % 3),
                winner_id: format!("W{}", k % 4),
                cpv: CpvCode::parse(cpv).unwrap(),
                n_bids: Some(if sb { 1 } else { 2 }),
                single_bid: sb,
                value: None,
            })
            .collect();
        MarketGraph::build(&ContractTable::new(records)).unwrap()
    }

    #[test]
    fn constant_class_never_changes() {
        let g = market(&[("45000000", true), ("45100000", true), ("45200000", true)]);
        let classes = CpvClasses::from_graph(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(cpv_shuffle(&classes, &g.single_bid_flags(), &mut rng), [true; 3]);
        }
    }

    #[test]
    fn two_element_class_is_uniform() {
        let g = market(&[("45000000", true), ("45000000", false)]);
        let classes = CpvClasses::from_graph(&g);
        let mut first_has_one = 0;
        let n = 4000;
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(9, i));
            let f = cpv_shuffle(&classes, &g.single_bid_flags(), &mut rng);
            assert_eq!(f.iter().filter(|&&x| x).count(), 1);
            first_has_one += usize::from(f[0]);
        }
        // each of the two permutations should appear half the time
        let share = first_has_one as f64 / n as f64;
        assert!((share - 0.5).abs() < 0.03, "share {share}");
    }

    #[test]
    fn classes_are_isolated() {
        let g = market(&[
            ("45000000", true),
            ("45000000", false),
            ("33000000", false),
            ("33000000", false),
        ]);
        let engine = NullEngine::new(&g, 5);
        let classes = engine.classes();
        assert_eq!(classes.labels(), ["33", "45"]);
        for i in 0..100 {
            let f = engine.replicate(i);
            assert_eq!(classes.counts(&f), [0, 1]);
        }
    }

    #[test]
    fn relative_score_cases() {
        let (r, z) = relative_score(0.3, Some(0.2), Some(0.05));
        assert!((r.unwrap() - 1.5).abs() < 1e-12);
        assert!((z.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(relative_score(0.2, Some(0.2), Some(0.05)), (Some(1.0), Some(0.0)));
        assert_eq!(relative_score(0.2, Some(0.0), Some(0.0)), (None, None));
    }

    #[test]
    fn global_rate_ratio_is_exactly_one() {
        let flags: Vec<(&str, bool)> = (0..60)
            .map(|k| (if k % 3 == 0 { "45000000" } else { "33000000" }, k % 7 == 0))
            .collect();
        let g = market(&flags);
        let r = null_distribution(&GlobalSbRate, &g, NullConfig::new(200, 3)).unwrap();
        assert_eq!(r.ratio, Some(1.0));
        assert_eq!(r.null_std, Some(0.0));
        assert_eq!(r.z, None);
    }

    #[test]
    fn all_single_bid_has_degenerate_null() {
        let g = market(&[("45000000", true), ("45000000", true), ("33000000", true)]);
        let r = null_distribution(&GlobalSbRate, &g, NullConfig::new(10, 0)).unwrap();
        assert_eq!((r.ratio, r.z), (Some(1.0), None));
    }

    #[test]
    fn undefined_observed_is_an_error() {
        let g = market(&[("45000000", true), ("45000000", false)]);
        let empty_core = CoreSbRate { core_contracts: vec![] };
        assert!(matches!(
            null_distribution(&empty_core, &g, NullConfig::new(10, 0)),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn undefined_replicates_are_counted() {
        struct OnlyObserved(Vec<bool>);
        impl ContractStatistic for OnlyObserved {
            fn name(&self) -> &str {
                "only_observed"
            }
            fn evaluate(&self, flags: &[bool]) -> Option<f64> {
                (flags == self.0.as_slice()).then_some(1.0)
            }
        }
        let g = market(&[("45000000", true), ("45000000", false), ("45000000", false)]);
        let stat = OnlyObserved(g.single_bid_flags());
        let r = null_distribution(&stat, &g, NullConfig::new(300, 2)).unwrap();
        assert!(r.n_missing > 100 && r.n_missing < 300, "{}", r.n_missing);
        assert_eq!(r.null_mean, Some(1.0));
    }

    #[test]
    fn json_has_the_documented_fields() {
        let g = market(&[("45000000", true), ("45000000", false)]);
        let r = null_distribution(&GlobalSbRate, &g, NullConfig::new(5, 11)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["n_missing", "n_reps", "null_mean", "null_std", "observed", "ratio", "seed", "statistic", "z"]
        );
        assert!(v["z"].is_null());
    }
}
