// SPDX-License-Identifier: Apache-2.0

//! Corruption-risk analytics for public procurement markets.
//!
//! Contract award records are turned into weighted bipartite issuer–winner
//! networks. On top of those networks the crate measures market
//! centralization (weighted core–periphery decomposition), topological
//! clustering (link communities found by Louvain on the line graph) and how
//! single-bid contracts are distributed across both structures, benchmarked
//! against sector-preserving permutation null models.
//!
//! Module map:
//!
//! - [`ingest`]: contract CSV parsing, entity-name normalization, filters
//! - [`graph`]: market graph construction and descriptive statistics
//! - [`powerlaw`]: discrete power-law fits of degree sequences
//! - [`core_periphery`]: weighted core numbers and core membership
//! - [`communities`]: line graphs, Louvain, modularity, risk clustering
//! - [`nullmodel`]: CPV-class-preserving label permutation engine
//! - [`synth`]: synthetic markets with planted structure
//! - [`report`]: country/year aggregation, correlations, summary tables

pub mod communities;
pub mod config;
pub mod core_periphery;
mod error;
pub mod graph;
pub mod ingest;
pub mod manifest;
pub mod nullmodel;
pub mod powerlaw;
pub mod report;
pub mod synth;

pub use communities::{EdgePartition, LineGraph, RiskClusteringResult};
pub use core_periphery::{CoreNumbers, CorePartition, CoreStats};
pub use error::{Error, Result};
pub use graph::{MarketGraph, MarketStats, Role};
pub use ingest::{ContractRecord, ContractTable, CpvCode};
pub use nullmodel::NullModelResult;
pub use powerlaw::PowerLawFit;

/// Formats an optional statistic for CSV output; undefined values become `NA`.
pub fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}
