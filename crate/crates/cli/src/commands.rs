// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use procnet::communities::{
    louvain, modularity_across_seeds, sb_clustering_cv, write_cluster_summary, write_partition,
    LineGraph,
};
use procnet::config::KvConfig;
use procnet::core_periphery::{
    core_membership_with, core_stats, weighted_core_numbers, write_core_nodes, CoreStats,
    ThresholdKind, CORE_STATS_HEADER,
};
use procnet::graph::{market_stats, write_edge_list, write_market_stats};
use procnet::ingest::{
    deduplicate_entities, filter_contracts, parse_contracts_from, write_contracts,
    write_entity_map, write_rejections, ContractFilter, FormatConfig,
};
use procnet::manifest::RunManifest;
use procnet::nullmodel::{
    null_distribution, write_result_json, write_samples, ContractStatistic, CoreSbRate,
    GlobalSbRate, NullConfig, SbClusteringCv,
};
use procnet::powerlaw::fit_power_law;
use procnet::report::{
    self, analyze_table, correlate_indicator, derive_seed, emit_report, write_correlations,
    AnalysisOptions, IndicatorSeries, Polarity,
};
use procnet::synth::{generate_market, SynthConfig};
use procnet::{fmt_opt, ContractTable, MarketGraph, Role};

use crate::{
    Cli, Command, CorrelateArgs, IndicatorArgs, InputArgs, StatisticArg, Threshold,
};

/// A problem with how the command was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl From<Threshold> for ThresholdKind {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::Weighted => ThresholdKind::Weighted,
            Threshold::Unweighted => ThresholdKind::Unweighted,
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Stats(_) => "stats",
        Command::Core(_) => "core",
        Command::Communities(_) => "communities",
        Command::Null(_) => "null",
        Command::Synth(_) => "synth",
        Command::Correlate(_) => "correlate",
        Command::Report(_) => "report",
    };
    let mut manifest = RunManifest::new(name, args);
    manifest.threads = cli.threads as usize;
    if cli.record_time {
        manifest.record_time();
    }
    match &cli.command {
        Command::Ingest(a) => ingest(a, &mut manifest),
        Command::Stats(a) => stats(a, &mut manifest),
        Command::Core(a) => core(a, &mut manifest),
        Command::Communities(a) => communities(a, &mut manifest),
        Command::Null(a) => null(a, &mut manifest),
        Command::Synth(a) => synth(a, &mut manifest),
        Command::Correlate(a) => correlate(a, &mut manifest),
        Command::Report(a) => report(a, &mut manifest),
    }
}

fn read_input(path: &str) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    if path == "-" {
        std::io::stdin().read_to_end(&mut bytes).context("reading stdin")?;
    } else {
        bytes = std::fs::read(path).with_context(|| format!("reading {path}"))?;
    }
    Ok(bytes)
}

fn format_config(path: Option<&Path>, manifest: &mut RunManifest) -> Result<FormatConfig> {
    match path {
        None => Ok(FormatConfig::default()),
        Some(p) => {
            manifest.config = Some(p.display().to_string());
            manifest.add_input(&p.display().to_string(), None)?;
            Ok(FormatConfig::from_kv(&KvConfig::load(p)?)?)
        }
    }
}

struct Loaded {
    table: ContractTable,
    dedup: procnet::ingest::Deduplicated,
}

/// Parse, deduplicate, filter.
fn load(input: &InputArgs, keep_missing_bids: bool, manifest: &mut RunManifest) -> Result<Loaded> {
    let mut cfg = format_config(input.format.as_deref(), manifest)?;
    cfg.keep_missing_bids |= keep_missing_bids;
    let bytes = read_input(&input.input)?;
    manifest.add_input(&input.input, Some(&bytes))?;
    let parsed = parse_contracts_from(bytes.as_slice(), &cfg)?;
    let dedup = deduplicate_entities(&parsed, &cfg.normalizer());
    let filter = ContractFilter {
        country: input.country.clone(),
        years: input.years.clone(),
        require_bids: !cfg.keep_missing_bids,
    };
    if let Some(c) = &input.country {
        manifest.param("country", c);
    }
    if let Some(y) = &input.years {
        manifest.param("years", format!("{}:{}", y.start(), y.end()));
    }
    let table = filter_contracts(&dedup.table, &filter);
    Ok(Loaded { table, dedup })
}

/// Loads a single-country market with bid data.
fn load_market(input: &InputArgs, manifest: &mut RunManifest) -> Result<ContractTable> {
    let table = load(input, false, manifest)?.table;
    if table.is_empty() {
        return Err(procnet::Error::EmptyMarket.into());
    }
    let countries = table.countries();
    if countries.len() > 1 {
        return Err(usage(format!(
            "input spans {} countries ({}); select one with --country",
            countries.len(),
            countries.join(", ")
        )));
    }
    Ok(table)
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn ingest(a: &crate::IngestArgs, manifest: &mut RunManifest) -> Result<()> {
    out_dir(&a.out)?;
    let loaded = load(&a.input, a.keep_missing_bids, manifest)?;
    let d = &loaded.dedup;
    write_contracts(&loaded.table, create(&a.out, "contracts.csv")?)?;
    write_entity_map(&d.mapping, create(&a.out, "entity_map.csv")?)?;
    let mut rejections = d.table.provenance.rejections.clone();
    rejections.extend(d.rejected.iter().cloned());
    write_rejections(&rejections, create(&a.out, "rejections.csv")?)?;
    let p = &d.table.provenance;
    manifest.param("rows_read", p.rows_read);
    manifest.param("rows_rejected", p.rejections.len());
    manifest.param("dropped_missing_bids", p.dropped_missing_bids);
    manifest.param("issuers_before", d.before.issuers);
    manifest.param("issuers_after", d.after.issuers);
    manifest.param("winners_before", d.before.winners);
    manifest.param("winners_after", d.after.winners);
    manifest.param("contracts_written", loaded.table.len());
    eprintln!(
        "{} contracts; issuers {} -> {}, winners {} -> {}; {} rows rejected",
        loaded.table.len(),
        d.before.issuers,
        d.after.issuers,
        d.before.winners,
        d.after.winners,
        rejections.len()
    );
    manifest.write_to_dir(&a.out)?;
    Ok(())
}

fn stats(a: &crate::StatsArgs, manifest: &mut RunManifest) -> Result<()> {
    let table = load_market(&a.input, manifest)?;
    out_dir(&a.out)?;
    let graph = MarketGraph::build(&table)?;
    write_market_stats(&market_stats(&graph), create(&a.out, "stats.csv")?)?;
    write_edge_list(&graph, create(&a.out, "edges.csv")?)?;
    let mut w = csv_writer(create(&a.out, "powerlaw.csv")?);
    w.write_record(["role", "measure", "alpha", "xmin", "n_tail", "ks_distance"])?;
    for role in [Role::Issuer, Role::Winner] {
        for (measure, data) in [("strength", graph.strengths(role)), ("degree", graph.degrees(role))] {
            let row = match fit_power_law(&data) {
                Ok(f) => [
                    f.alpha.to_string(),
                    f.xmin.to_string(),
                    f.n_tail.to_string(),
                    f.ks_distance.to_string(),
                ],
                Err(procnet::Error::NoTail) => {
                    manifest.note(format!("{role} {measure}: too few values for a power-law fit"));
                    ["NA".into(), "NA".into(), "NA".into(), "NA".into()]
                }
                Err(e) => return Err(e.into()),
            };
            w.write_record([role.as_str(), measure].into_iter().map(String::from).chain(row))?;
        }
    }
    w.flush()?;
    drop(w);
    manifest.write_to_dir(&a.out)?;
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn core(a: &crate::CoreArgs, manifest: &mut RunManifest) -> Result<()> {
    let table = load_market(&a.input, manifest)?;
    out_dir(&a.out)?;
    let kind: ThresholdKind = a.threshold.into();
    manifest.param("threshold", format!("{:?}", a.threshold).to_lowercase());
    manifest.param("pooled", a.pooled);
    let mut markets: Vec<(String, ContractTable)> = Vec::new();
    if a.pooled {
        markets.push(("pooled".into(), table));
    } else {
        for y in table.years() {
            let records = table.records.iter().filter(|r| r.year == y).cloned().collect();
            markets.push((y.to_string(), ContractTable::new(records)));
        }
    }
    let mut rows: Vec<(String, CoreStats, f64, f64)> = Vec::new();
    for (label, t) in &markets {
        let graph = MarketGraph::build(t)?;
        let partition = core_membership_with(&graph, &weighted_core_numbers(&graph), kind);
        let name = if a.pooled {
            "core_nodes.csv".to_string()
        } else {
            format!("core_nodes_{label}.csv")
        };
        write_core_nodes(&graph, &partition, create(&a.out, &name)?)?;
        rows.push((
            label.clone(),
            core_stats(&graph, &partition),
            partition.issuer_threshold,
            partition.winner_threshold,
        ));
    }
    let mut w = csv_writer(create(&a.out, "core_stats.csv")?);
    w.write_record(
        ["year"]
            .into_iter()
            .chain(CORE_STATS_HEADER)
            .chain(["issuer_threshold", "winner_threshold"]),
    )?;
    for (label, s, ti, tw) in &rows {
        w.write_record([
            label.clone(),
            s.core_contracts.to_string(),
            s.core_share.to_string(),
            s.core_n_winners.to_string(),
            s.core_n_issuers.to_string(),
            s.core_n_edges.to_string(),
            fmt_opt(s.core_single_bidding_rate),
            ti.to_string(),
            tw.to_string(),
        ])?;
    }
    if rows.len() > 1 {
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&CoreStats) -> f64| rows.iter().map(|r| f(&r.1)).sum::<f64>() / n;
        let sb: Vec<f64> = rows.iter().filter_map(|r| r.1.core_single_bidding_rate).collect();
        let sb_mean = (!sb.is_empty()).then(|| sb.iter().sum::<f64>() / sb.len() as f64);
        w.write_record([
            "mean".to_string(),
            mean(&|s| s.core_contracts as f64).to_string(),
            mean(&|s| s.core_share).to_string(),
            mean(&|s| s.core_n_winners as f64).to_string(),
            mean(&|s| s.core_n_issuers as f64).to_string(),
            mean(&|s| s.core_n_edges as f64).to_string(),
            fmt_opt(sb_mean),
            (rows.iter().map(|r| r.2).sum::<f64>() / n).to_string(),
            (rows.iter().map(|r| r.3).sum::<f64>() / n).to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    manifest.write_to_dir(&a.out)?;
    Ok(())
}

fn communities(a: &crate::CommunitiesArgs, manifest: &mut RunManifest) -> Result<()> {
    let table = load_market(&a.input, manifest)?;
    out_dir(&a.out)?;
    let graph = MarketGraph::build(&table)?;
    let lg = LineGraph::build_with_cap(&graph, a.line_edge_cap)?;
    let seeds: Vec<u64> = (0..a.modularity_seeds.max(1))
        .map(|k| derive_seed(a.seed, &[&format!("louvain{k}")]))
        .collect();
    let spread = modularity_across_seeds(&lg, &seeds);
    let part = louvain(&lg, seeds[0]);
    let clustering = sb_clustering_cv(&graph, &part);
    write_partition(&graph, &part, create(&a.out, "partition.csv")?)?;
    write_cluster_summary(&clustering, create(&a.out, "clusters.csv")?)?;
    let mut w = csv_writer(create(&a.out, "communities.csv")?);
    w.write_record([
        "n_communities",
        "modularity",
        "modularity_mean",
        "modularity_std",
        "mu_w",
        "sigma_w",
        "cv",
    ])?;
    w.write_record([
        part.n_communities.to_string(),
        part.modularity.to_string(),
        spread.mean.to_string(),
        spread.std.to_string(),
        clustering.mu_w.to_string(),
        fmt_opt(clustering.sigma_w),
        fmt_opt(clustering.cv),
    ])?;
    w.flush()?;
    drop(w);
    manifest.seed = Some(a.seed);
    for (k, s) in seeds.iter().enumerate() {
        manifest.seeds.insert(format!("louvain{k}"), *s);
    }
    manifest.param("line_edge_cap", a.line_edge_cap);
    manifest.write_to_dir(&a.out)?;
    Ok(())
}

fn null(a: &crate::NullArgs, manifest: &mut RunManifest) -> Result<()> {
    let table = load_market(&a.input, manifest)?;
    let graph = MarketGraph::build(&table)?;
    let wanted: Vec<StatisticArg> = match a.statistic {
        StatisticArg::All => vec![StatisticArg::CoreSb, StatisticArg::Cv, StatisticArg::GlobalSb],
        s => vec![s],
    };
    let mut stats: Vec<Box<dyn ContractStatistic>> = Vec::new();
    for s in wanted {
        match s {
            StatisticArg::CoreSb => {
                let partition =
                    core_membership_with(&graph, &weighted_core_numbers(&graph), a.threshold.into());
                stats.push(Box::new(CoreSbRate::new(&graph, &partition)));
            }
            StatisticArg::Cv => {
                let seed = derive_seed(a.seed, &["louvain0"]);
                manifest.seeds.insert("louvain0".into(), seed);
                let lg = LineGraph::build(&graph)?;
                stats.push(Box::new(SbClusteringCv::new(&graph, &louvain(&lg, seed))));
            }
            StatisticArg::GlobalSb => stats.push(Box::new(GlobalSbRate)),
            StatisticArg::All => unreachable!(),
        }
    }
    manifest.seed = Some(a.seed);
    manifest.n_reps = Some(a.reps);
    let mut results = Vec::new();
    for stat in &stats {
        let seed = derive_seed(a.seed, &["null", stat.name()]);
        manifest.seeds.insert(format!("null.{}", stat.name()), seed);
        let mut cfg = NullConfig::new(a.reps, seed);
        cfg.keep_samples = a.samples;
        match null_distribution(stat.as_ref(), &graph, cfg) {
            Ok(r) => results.push(r),
            // with `all`, statistics that do not apply to this market are skipped
            Err(procnet::Error::UndefinedStatistic(name)) if a.statistic == StatisticArg::All => {
                log::warn!("{name} is undefined on this market; skipped");
                manifest.note(format!("{name}: undefined on the observed labels, skipped"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    match &a.out {
        None => {
            let mut out = std::io::stdout().lock();
            for r in &results {
                serde_json::to_writer(&mut out, r)?;
                writeln!(out)?;
            }
        }
        Some(dir) => {
            out_dir(dir)?;
            for r in &results {
                write_result_json(r, create(dir, &format!("null_{}.json", r.statistic))?)?;
                if let Some(samples) = &r.samples {
                    write_samples(samples, create(dir, &format!("null_{}_samples.csv", r.statistic))?)?;
                }
            }
            manifest.write_to_dir(dir)?;
        }
    }
    Ok(())
}

fn synth(a: &crate::SynthArgs, manifest: &mut RunManifest) -> Result<()> {
    let mut kv = KvConfig::load(&a.config)?;
    manifest.config = Some(a.config.display().to_string());
    manifest.add_input(&a.config.display().to_string(), None)?;
    if let Some(s) = a.seed {
        kv.set("seed", s.to_string());
    } else if kv.get("seed").is_none() {
        return Err(usage("a seed is required: pass --seed or set `seed` in the config"));
    }
    let cfg = SynthConfig::from_kv(&kv)?;
    let table = generate_market(&cfg)?;
    match &a.out {
        None => write_contracts(&table, std::io::stdout().lock())?,
        Some(dir) => {
            out_dir(dir)?;
            write_contracts(&table, create(dir, "contracts.csv")?)?;
            manifest.seed = Some(cfg.seed);
            manifest.param("contracts", table.len());
            manifest.param("expected_contracts", format!("{:.1}", cfg.expected_contracts()));
            manifest.write_to_dir(dir)?;
        }
    }
    Ok(())
}

fn parse_indicators(args: &IndicatorArgs, manifest: &mut RunManifest) -> Result<Vec<IndicatorSeries>> {
    let mut out = Vec::new();
    for spec in &args.indicators {
        let mut parts = spec.splitn(3, ':');
        let (Some(name), Some(pol), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(usage(format!("--indicator expects NAME:POLARITY:PATH, got {spec:?}")));
        };
        let polarity: Polarity = pol.parse().map_err(|e: procnet::Error| usage(e.to_string()))?;
        manifest.add_input(path, None)?;
        let mut series = IndicatorSeries::load(Path::new(path), name, polarity)?;
        series.year = args.indicator_year;
        out.push(series);
    }
    if let Some(y) = args.indicator_year {
        manifest.param("indicator_year", y);
    }
    Ok(out)
}

fn correlate(a: &CorrelateArgs, manifest: &mut RunManifest) -> Result<()> {
    let indicators = parse_indicators(&a.indicators, manifest)?;
    if indicators.is_empty() {
        return Err(usage("at least one --indicator is required"));
    }
    let (name, measure): (&str, BTreeMap<String, f64>) = match (&a.input, &a.measure) {
        (Some(input), _) => {
            let args = InputArgs {
                input: input.clone(),
                format: a.format.clone(),
                country: None,
                years: None,
            };
            let table = load(&args, false, manifest)?.table;
            let mut m = BTreeMap::new();
            for c in table.countries() {
                let sub = ContractTable::new(
                    table.records.iter().filter(|r| r.country == c).cloned().collect(),
                );
                if let Some(rate) = report::country_sb_rate(&sub) {
                    m.insert(c, rate);
                }
            }
            ("sb_rate", m)
        }
        (None, Some(path)) => {
            manifest.add_input(&path.display().to_string(), None)?;
            let s = IndicatorSeries::load(path, "measure", Polarity::HigherIsWorse)?;
            ("measure", s.values)
        }
        (None, None) => unreachable!("clap requires one of --input, --measure"),
    };
    out_dir(&a.out)?;
    let mut rows = Vec::new();
    for ind in &indicators {
        rows.push(correlate_indicator(name, &measure, ind, a.indicators.n_boot, a.seed)?);
    }
    write_correlations(&rows, create(&a.out, "correlations.csv")?)?;
    manifest.seed = Some(a.seed);
    manifest.param("n_boot", a.indicators.n_boot);
    manifest.write_to_dir(&a.out)?;
    Ok(())
}

fn report(a: &crate::ReportArgs, manifest: &mut RunManifest) -> Result<()> {
    let indicators = parse_indicators(&a.indicators, manifest)?;
    let table = load(&a.input, false, manifest)?.table;
    if table.is_empty() {
        return Err(procnet::Error::EmptyMarket.into());
    }
    let mut opts = AnalysisOptions::new(a.seed);
    opts.n_reps = a.reps;
    opts.null_enabled = !a.no_null;
    opts.modularity_seeds = a.modularity_seeds;
    opts.threshold = a.threshold.into();
    opts.contract_weighted = a.contract_weighted;
    opts.line_edge_cap = a.line_edge_cap;
    opts.n_boot = a.indicators.n_boot;
    let analyses = analyze_table(&table, &opts)?;
    emit_report(&analyses, &indicators, &opts, &a.out, manifest)?;
    Ok(())
}
