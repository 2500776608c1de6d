// SPDX-License-Identifier: Apache-2.0

//! Country/year aggregation, indicator correlations and summary tables.

mod correlation;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::communities::{
    self, louvain, modularity_across_seeds, ContractClusters, LineGraph, RiskClusteringResult,
    DEFAULT_LINE_EDGE_CAP,
};
use crate::core_periphery::{
    core_membership_with, core_stats, weighted_core_numbers, CoreStats, ThresholdKind,
};
use crate::graph::{market_stats, MarketGraph, MarketStats};
use crate::ingest::ContractTable;
use crate::manifest::RunManifest;
use crate::nullmodel::{
    null_distribution, replicate_seed, CoreSbRate, NullConfig, NullModelResult, SbClusteringCv,
};
use crate::{fmt_opt, Error, Result};

pub use correlation::{
    pearson, pearson_with_bootstrap, CorrelationResult, IndicatorSeries, Polarity,
    DEFAULT_BOOTSTRAP,
};

pub const DEFAULT_MODULARITY_SEEDS: usize = 10;

/// Share of single-bid contracts among contracts with bid data.
pub fn country_sb_rate(table: &ContractTable) -> Option<f64> {
    let with_bids = table.records.iter().filter(|r| r.has_bids()).count();
    let single = table.records.iter().filter(|r| r.single_bid).count();
    (with_bids > 0).then(|| single as f64 / with_bids as f64)
}

/// Seed for a named stochastic step, derived from the master seed.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    // FNV-1a over the parts, separated so ("ab","c") differs from ("a","bc")
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    replicate_seed(master, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub seed: u64,
    pub n_reps: usize,
    pub null_enabled: bool,
    pub modularity_seeds: usize,
    pub threshold: ThresholdKind,
    pub line_edge_cap: u64,
    /// Weight cross-year means by contract counts instead of one vote per year.
    pub contract_weighted: bool,
    pub n_boot: usize,
}

impl AnalysisOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_reps: crate::nullmodel::DEFAULT_REPS,
            null_enabled: true,
            modularity_seeds: DEFAULT_MODULARITY_SEEDS,
            threshold: ThresholdKind::Weighted,
            line_edge_cap: DEFAULT_LINE_EDGE_CAP,
            contract_weighted: false,
            n_boot: DEFAULT_BOOTSTRAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityAnalysis {
    pub modularity_mean: f64,
    pub modularity_std: f64,
    pub n_communities: usize,
    pub clustering: RiskClusteringResult,
    pub cv_null: Option<NullModelResult>,
}

/// Everything computed for one country-year market.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketAnalysis {
    pub country: String,
    pub year: i32,
    pub n_contracts: u64,
    pub n_single_bid: u64,
    pub stats: MarketStats,
    pub core: CoreStats,
    pub core_null: Option<NullModelResult>,
    pub communities: Option<CommunityAnalysis>,
    pub notes: Vec<String>,
}

/// Runs every per-market analysis on a single country-year table.
pub fn analyze_market(
    table: &ContractTable,
    country: &str,
    year: i32,
    opts: &AnalysisOptions,
) -> Result<MarketAnalysis> {
    let graph = MarketGraph::build(table)?;
    let tag = year.to_string();
    let seed = |purpose: &str| derive_seed(opts.seed, &[country, &tag, purpose]);
    let mut notes = Vec::new();
    let stats = market_stats(&graph);
    let cores = weighted_core_numbers(&graph);
    let partition = core_membership_with(&graph, &cores, opts.threshold);
    let core = core_stats(&graph, &partition);

    let null_cfg = |purpose| NullConfig::new(opts.n_reps, seed(purpose));
    let core_null = if !opts.null_enabled {
        None
    } else if core.core_contracts == 0 {
        notes.push(format!("{country} {year}: empty core, core null model skipped"));
        None
    } else {
        let stat = CoreSbRate::new(&graph, &partition);
        Some(null_distribution(&stat, &graph, null_cfg("core_null"))?)
    };

    let communities = match LineGraph::build_with_cap(&graph, opts.line_edge_cap) {
        Err(e @ Error::LineGraphTooLarge { .. }) => {
            notes.push(format!("{country} {year}: communities skipped: {e}"));
            None
        }
        Err(e) => return Err(e),
        Ok(lg) => {
            let seeds: Vec<u64> = (0..opts.modularity_seeds.max(1))
                .map(|k| seed(&format!("louvain{k}")))
                .collect();
            let spread = modularity_across_seeds(&lg, &seeds);
            let part = louvain(&lg, seeds[0]);
            let clusters = ContractClusters::new(&graph, &part);
            let clustering = clusters.evaluate(&graph.single_bid_flags());
            let cv_null = match clustering.cv {
                Some(_) if opts.null_enabled => {
                    let stat = SbClusteringCv::new(&graph, &part);
                    Some(null_distribution(&stat, &graph, null_cfg("cv_null"))?)
                }
                None if opts.null_enabled => {
                    notes.push(format!("{country} {year}: clustering CV undefined, null skipped"));
                    None
                }
                _ => None,
            };
            Some(CommunityAnalysis {
                modularity_mean: spread.mean,
                modularity_std: spread.std,
                n_communities: part.n_communities,
                clustering,
                cv_null,
            })
        }
    };
    Ok(MarketAnalysis {
        country: country.to_string(),
        year,
        n_contracts: stats.n_contracts,
        n_single_bid: graph.n_single_bid(),
        stats,
        core,
        core_null,
        communities,
        notes,
    })
}

/// Splits a table into country-year markets and analyzes each one.
pub fn analyze_table(table: &ContractTable, opts: &AnalysisOptions) -> Result<Vec<MarketAnalysis>> {
    let mut groups: BTreeMap<(String, i32), Vec<_>> = BTreeMap::new();
    for r in table.records.iter().filter(|r| r.has_bids()) {
        groups
            .entry((r.country.clone(), r.year))
            .or_default()
            .push(r.clone());
    }
    if groups.is_empty() {
        return Err(Error::EmptyMarket);
    }
    groups
        .into_par_iter()
        .map(|((country, year), records)| {
            analyze_market(&ContractTable::new(records), &country, year, opts)
        })
        .collect()
}

/// Per-country aggregate of per-year analyses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountrySummary {
    pub country: String,
    pub n_years: usize,
    pub n_contracts: u64,
    /// Pooled over years: total single-bid over total contracts.
    pub sb_rate: f64,
    pub centralization: Option<f64>,
    pub core_sb_rate: Option<f64>,
    pub core_null_mean: Option<f64>,
    pub core_ratio: Option<f64>,
    pub core_z: Option<f64>,
    pub modularity: Option<f64>,
    pub modularity_std: Option<f64>,
    pub cv: Option<f64>,
    pub cv_null_mean: Option<f64>,
    pub cv_ratio: Option<f64>,
    pub cv_z: Option<f64>,
}

/// Mean over years of the defined values; weights are contract counts when
/// `weighted`, otherwise 1.
fn year_mean<'a>(
    years: &[&'a MarketAnalysis],
    weighted: bool,
    f: impl Fn(&'a MarketAnalysis) -> Option<f64>,
) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for a in years {
        if let Some(v) = f(a) {
            let w = if weighted { a.n_contracts as f64 } else { 1.0 };
            num += w * v;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

pub fn summarize_countries(analyses: &[MarketAnalysis], contract_weighted: bool) -> Vec<CountrySummary> {
    let mut by_country: BTreeMap<&str, Vec<&MarketAnalysis>> = BTreeMap::new();
    for a in analyses {
        by_country.entry(&a.country).or_default().push(a);
    }
    by_country
        .into_iter()
        .map(|(country, years)| {
            let m = |f: &dyn Fn(&MarketAnalysis) -> Option<f64>| year_mean(&years, contract_weighted, f);
            let n_contracts: u64 = years.iter().map(|a| a.n_contracts).sum();
            let n_single: u64 = years.iter().map(|a| a.n_single_bid).sum();
            fn comm(a: &MarketAnalysis) -> Option<&CommunityAnalysis> {
                a.communities.as_ref()
            }
            fn cv_null(a: &MarketAnalysis) -> Option<&NullModelResult> {
                comm(a).and_then(|c| c.cv_null.as_ref())
            }
            CountrySummary {
                country: country.to_string(),
                n_years: years.len(),
                n_contracts,
                sb_rate: n_single as f64 / n_contracts as f64,
                centralization: m(&|a| Some(a.core.core_share)),
                core_sb_rate: m(&|a| a.core.core_single_bidding_rate),
                core_null_mean: m(&|a| a.core_null.as_ref().and_then(|n| n.null_mean)),
                core_ratio: m(&|a| a.core_null.as_ref().and_then(|n| n.ratio)),
                core_z: m(&|a| a.core_null.as_ref().and_then(|n| n.z)),
                modularity: m(&|a| comm(a).map(|c| c.modularity_mean)),
                modularity_std: m(&|a| comm(a).map(|c| c.modularity_std)),
                cv: m(&|a| comm(a).and_then(|c| c.clustering.cv)),
                cv_null_mean: m(&|a| cv_null(a).and_then(|n| n.null_mean)),
                cv_ratio: m(&|a| cv_null(a).and_then(|n| n.ratio)),
                cv_z: m(&|a| cv_null(a).and_then(|n| n.z)),
            }
        })
        .collect()
}

/// One indicator correlated against a country-level measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorCorrelation {
    pub indicator: String,
    pub measure: String,
    pub year: Option<i32>,
    pub polarity: Polarity,
    pub result: CorrelationResult,
    pub sign_matches: bool,
}

/// Correlates `measure` (country → value) with `indicator` over the
/// countries present in both. Needs at least three such countries.
pub fn correlate_indicator(
    measure_name: &str,
    measure: &BTreeMap<String, f64>,
    indicator: &IndicatorSeries,
    n_boot: usize,
    seed: u64,
) -> Result<IndicatorCorrelation> {
    let (x, y): (Vec<f64>, Vec<f64>) = measure
        .iter()
        .filter_map(|(c, &v)| indicator.values.get(c).map(|&i| (v, i)))
        .unzip();
    let result = pearson_with_bootstrap(
        &x,
        &y,
        n_boot,
        derive_seed(seed, &["bootstrap", measure_name, &indicator.name]),
    )?;
    Ok(IndicatorCorrelation {
        indicator: indicator.name.clone(),
        measure: measure_name.to_string(),
        year: indicator.year,
        polarity: indicator.polarity,
        sign_matches: result.r * indicator.polarity.expected_sign() > 0.0,
        result,
    })
}

pub const CORRELATION_HEADER: [&str; 12] = [
    "indicator", "measure", "year", "polarity", "n", "r", "ci_low", "ci_high", "n_boot",
    "n_degenerate", "expected_sign", "sign_matches",
];

fn correlation_row(c: &IndicatorCorrelation) -> Vec<String> {
    vec![
        c.indicator.clone(),
        c.measure.clone(),
        c.year.map_or("NA".into(), |y| y.to_string()),
        c.polarity.as_str().into(),
        c.result.n.to_string(),
        c.result.r.to_string(),
        fmt_opt(c.result.ci_low),
        fmt_opt(c.result.ci_high),
        c.result.n_boot.to_string(),
        c.result.n_degenerate.to_string(),
        if c.polarity.expected_sign() > 0.0 { "positive" } else { "negative" }.into(),
        c.sign_matches.to_string(),
    ]
}

pub fn write_correlations<W: std::io::Write>(rows: &[IndicatorCorrelation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CORRELATION_HEADER)?;
    for c in rows {
        w.write_record(correlation_row(c))?;
    }
    w.flush().map_err(|e| Error::io("<correlation writer>", e))?;
    Ok(())
}

fn csv_file(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, dir: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(dir, e))
}

/// Correlations of each country measure against every indicator; pairs with
/// too few shared countries are recorded as notes.
fn all_correlations(
    measures: &[(&str, BTreeMap<String, f64>)],
    indicators: &[IndicatorSeries],
    opts: &AnalysisOptions,
    notes: &mut Vec<String>,
) -> Result<Vec<IndicatorCorrelation>> {
    let mut out = Vec::new();
    for (name, values) in measures {
        for ind in indicators {
            match correlate_indicator(name, values, ind, opts.n_boot, opts.seed) {
                Ok(c) => out.push(c),
                Err(e @ (Error::Invalid(_) | Error::ZeroVariance)) => {
                    notes.push(format!("correlation {name} vs {}: {e}", ind.name))
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

fn measure(summaries: &[CountrySummary], f: impl Fn(&CountrySummary) -> Option<f64>) -> BTreeMap<String, f64> {
    summaries
        .iter()
        .filter_map(|s| f(s).map(|v| (s.country.clone(), v)))
        .collect()
}

/// Writes the summary tables and the manifest into `dir`.
///
/// Files: `sb_rates.csv`, `market_stats.csv`, `core_stats.csv`,
/// `centralization.csv`, `modularity.csv`, `per_year.csv`, plus
/// `core_single_bidding.csv`, `sb_clustering.csv` and `core_vs_clustering.csv`
/// when the null model ran, and `indicator_correlations.csv`,
/// `centralization_correlations.csv` when indicators were supplied.
pub fn emit_report(
    analyses: &[MarketAnalysis],
    indicators: &[IndicatorSeries],
    opts: &AnalysisOptions,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summaries = summarize_countries(analyses, opts.contract_weighted);

    let mut w = csv_file(dir, "sb_rates.csv")?;
    w.write_record(["country", "sb_rate", "n_contracts"])?;
    for s in &summaries {
        w.write_record([s.country.clone(), s.sb_rate.to_string(), s.n_contracts.to_string()])?;
    }
    finish(w, dir)?;

    let mut w = csv_file(dir, "market_stats.csv")?;
    w.write_record(
        ["country", "year"]
            .into_iter()
            .chain(crate::graph::MARKET_STATS_HEADER),
    )?;
    for a in analyses {
        let mut row = vec![a.country.clone(), a.year.to_string()];
        row.extend(crate::graph::market_stats_fields(&a.stats));
        w.write_record(row)?;
    }
    finish(w, dir)?;

    let mut w = csv_file(dir, "core_stats.csv")?;
    w.write_record(
        ["country", "year"]
            .into_iter()
            .chain(crate::core_periphery::CORE_STATS_HEADER),
    )?;
    for a in analyses {
        let mut row = vec![a.country.clone(), a.year.to_string()];
        row.extend(crate::core_periphery::core_stats_fields(&a.core));
        w.write_record(row)?;
    }
    finish(w, dir)?;

    let mut w = csv_file(dir, "per_year.csv")?;
    w.write_record([
        "country", "year", "n_contracts", "sb_rate", "centralization", "core_sb_rate",
        "core_ratio", "core_z", "modularity_mean", "modularity_std", "n_communities", "mu_w",
        "sigma_w", "cv", "cv_ratio", "cv_z",
    ])?;
    for a in analyses {
        let comm = a.communities.as_ref();
        let clus = comm.map(|c| communities::clustering_fields(&c.clustering));
        let cv_null = comm.and_then(|c| c.cv_null.as_ref());
        let mut row = vec![
            a.country.clone(),
            a.year.to_string(),
            a.n_contracts.to_string(),
            a.stats.single_bidding_rate.to_string(),
            a.core.core_share.to_string(),
            fmt_opt(a.core.core_single_bidding_rate),
            fmt_opt(a.core_null.as_ref().and_then(|n| n.ratio)),
            fmt_opt(a.core_null.as_ref().and_then(|n| n.z)),
            fmt_opt(comm.map(|c| c.modularity_mean)),
            fmt_opt(comm.map(|c| c.modularity_std)),
            comm.map_or("NA".into(), |c| c.n_communities.to_string()),
        ];
        row.extend(clus.unwrap_or_else(|| ["NA".into(), "NA".into(), "NA".into()]));
        row.push(fmt_opt(cv_null.and_then(|n| n.ratio)));
        row.push(fmt_opt(cv_null.and_then(|n| n.z)));
        w.write_record(row)?;
    }
    finish(w, dir)?;

    let mut w = csv_file(dir, "centralization.csv")?;
    w.write_record(["country", "centralization", "sb_rate", "core_sb_rate"])?;
    for s in &summaries {
        w.write_record([
            s.country.clone(),
            fmt_opt(s.centralization),
            s.sb_rate.to_string(),
            fmt_opt(s.core_sb_rate),
        ])?;
    }
    finish(w, dir)?;

    let mut w = csv_file(dir, "modularity.csv")?;
    w.write_record(["country", "modularity_mean", "modularity_std"])?;
    for s in &summaries {
        w.write_record([s.country.clone(), fmt_opt(s.modularity), fmt_opt(s.modularity_std)])?;
    }
    finish(w, dir)?;

    if opts.null_enabled {
        let mut w = csv_file(dir, "core_single_bidding.csv")?;
        w.write_record(["country", "core_sb_rate", "null_mean", "ratio", "z"])?;
        for s in &summaries {
            w.write_record([
                s.country.clone(),
                fmt_opt(s.core_sb_rate),
                fmt_opt(s.core_null_mean),
                fmt_opt(s.core_ratio),
                fmt_opt(s.core_z),
            ])?;
        }
        finish(w, dir)?;

        let mut w = csv_file(dir, "sb_clustering.csv")?;
        w.write_record(["country", "cv", "null_mean", "ratio", "z"])?;
        for s in &summaries {
            w.write_record([
                s.country.clone(),
                fmt_opt(s.cv),
                fmt_opt(s.cv_null_mean),
                fmt_opt(s.cv_ratio),
                fmt_opt(s.cv_z),
            ])?;
        }
        finish(w, dir)?;

        let overall = {
            let total: u64 = summaries.iter().map(|s| s.n_contracts).sum();
            let sb: f64 = summaries.iter().map(|s| s.sb_rate * s.n_contracts as f64).sum();
            sb / total as f64
        };
        let mut w = csv_file(dir, "core_vs_clustering.csv")?;
        w.write_record(["country", "core_ratio", "cv_ratio", "sb_rate", "above_average_sb"])?;
        for s in &summaries {
            w.write_record([
                s.country.clone(),
                fmt_opt(s.core_ratio),
                fmt_opt(s.cv_ratio),
                s.sb_rate.to_string(),
                (s.sb_rate > overall).to_string(),
            ])?;
        }
        finish(w, dir)?;
    } else {
        manifest.note("null model disabled: core_single_bidding.csv, sb_clustering.csv and core_vs_clustering.csv omitted");
    }

    if indicators.is_empty() {
        manifest.note("no indicators supplied: correlation tables omitted");
    } else {
        let mut notes = Vec::new();
        let sb = measure(&summaries, |s| Some(s.sb_rate));
        let rows = all_correlations(&[("sb_rate", sb.clone())], indicators, opts, &mut notes)?;
        write_correlations(&rows, BufWriter::new(create(dir, "indicator_correlations.csv")?))?;
        let central = measure(&summaries, |s| s.centralization);
        let mut rows = Vec::new();
        match pearson_with_bootstrap(
            &central.values().copied().collect::<Vec<_>>(),
            &central.keys().map(|c| sb.get(c).copied().unwrap_or(f64::NAN)).collect::<Vec<_>>(),
            opts.n_boot,
            derive_seed(opts.seed, &["bootstrap", "centralization", "sb_rate"]),
        ) {
            Ok(result) => rows.push(IndicatorCorrelation {
                indicator: "sb_rate".into(),
                measure: "centralization".into(),
                year: None,
                polarity: Polarity::HigherIsWorse,
                sign_matches: result.r > 0.0,
                result,
            }),
            Err(e) => notes.push(format!("correlation centralization vs sb_rate: {e}")),
        }
        rows.extend(all_correlations(&[("centralization", central)], indicators, opts, &mut notes)?);
        write_correlations(&rows, BufWriter::new(create(dir, "centralization_correlations.csv")?))?;
        for ind in indicators {
            if let Some(y) = ind.year {
                manifest.param(&format!("indicator_year.{}", ind.name), y);
            }
        }
        for n in notes {
            manifest.note(n);
        }
    }
    for a in analyses {
        for n in &a.notes {
            manifest.note(n.clone());
        }
    }
    manifest.seed = Some(opts.seed);
    manifest.n_reps = opts.null_enabled.then_some(opts.n_reps);
    manifest.param("null_enabled", opts.null_enabled);
    manifest.param("modularity_seeds", opts.modularity_seeds);
    manifest.param("threshold", format!("{:?}", opts.threshold).to_lowercase());
    manifest.param("year_mean", if opts.contract_weighted { "contract_weighted" } else { "unweighted" });
    manifest.param("n_boot", opts.n_boot);
    manifest.write_to_dir(dir)?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<File> {
    let path = dir.join(name);
    File::create(&path).map_err(|e| Error::io(&path, e))
}
