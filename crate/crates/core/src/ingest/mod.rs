// SPDX-License-Identifier: Apache-2.0

//! Contract-award records: parsing, canonical CSV output, filtering and
//! entity deduplication.

mod normalize;

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::KvConfig;
use crate::{Error, Result};

pub use normalize::{
    deduplicate_entities, normalize_entity_name, write_entity_map, Deduplicated, EntityCounts,
    EntityMapping, NameNormalizer, DEFAULT_LEGAL_FORMS,
};

/// Country code used when the input has no country column and the mapping
/// does not name a default.
pub const UNKNOWN_COUNTRY: &str = "XX";

/// Header of the canonical contract CSV.
pub const CANONICAL_HEADER: [&str; 8] = [
    "contract_id",
    "country",
    "year",
    "issuer_raw",
    "winner_raw",
    "cpv",
    "bids",
    "value",
];

/// An eight-digit Common Procurement Vocabulary code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CpvCode(String);

impl CpvCode {
    /// Accepts `dddddddd`, optionally followed by a `-d` check digit which is
    /// dropped.
    pub fn parse(raw: &str) -> Option<Self> {
        let raw = raw.trim();
        let code = match raw.split_once('-') {
            Some((code, check)) if check.len() == 1 && check.as_bytes()[0].is_ascii_digit() => {
                code
            }
            Some(_) => return None,
            None => raw,
        };
        (code.len() == 8 && code.bytes().all(|b| b.is_ascii_digit()))
            .then(|| CpvCode(code.to_string()))
    }

    pub fn full_code(&self) -> &str {
        &self.0
    }

    /// The two-digit division, the sector class used by the null model.
    pub fn class2(&self) -> &str {
        &self.0[..2]
    }
}

impl fmt::Display for CpvCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractRecord {
    pub contract_id: String,
    pub country: String,
    pub year: i32,
    pub issuer_id: String,
    pub winner_id: String,
    pub cpv: CpvCode,
    pub n_bids: Option<u32>,
    /// `n_bids == Some(1)`; false when the bid count is missing.
    pub single_bid: bool,
    pub value: Option<f64>,
}

impl ContractRecord {
    pub fn has_bids(&self) -> bool {
        self.n_bids.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub rows_read: usize,
    pub rejections: Vec<Rejection>,
    pub dropped_missing_bids: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ContractTable {
    pub records: Vec<ContractRecord>,
    pub provenance: Provenance,
}

impl ContractTable {
    pub fn new(records: Vec<ContractRecord>) -> Self {
        Self {
            records,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted distinct countries.
    pub fn countries(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .records
            .iter()
            .map(|r| r.country.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        out.sort();
        out
    }

    /// Sorted distinct years.
    pub fn years(&self) -> Vec<i32> {
        let mut out: Vec<i32> = self
            .records
            .iter()
            .map(|r| r.year)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        out.sort_unstable();
        out
    }

    fn with_records(&self, records: Vec<ContractRecord>) -> Self {
        Self {
            records,
            provenance: self.provenance.clone(),
        }
    }
}

/// Maps the logical contract fields onto header names of a delimited file.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatConfig {
    pub delimiter: u8,
    pub contract_id: Option<String>,
    pub country: Option<String>,
    pub year: String,
    pub issuer: String,
    pub winner: String,
    pub cpv: String,
    pub bids: String,
    pub value: Option<String>,
    pub default_country: Option<String>,
    /// Keep records without a bid count (they still never count as single
    /// bid). Off by default.
    pub keep_missing_bids: bool,
    /// Legal-form suffixes stripped during name normalization.
    pub legal_forms: Option<Vec<String>>,
}

impl Default for FormatConfig {
    fn default() -> Self {
        Self {
            delimiter: b',',
            contract_id: Some("contract_id".into()),
            country: Some("country".into()),
            year: "year".into(),
            issuer: "issuer_raw".into(),
            winner: "winner_raw".into(),
            cpv: "cpv".into(),
            bids: "bids".into(),
            value: Some("value".into()),
            default_country: None,
            keep_missing_bids: false,
            legal_forms: None,
        }
    }
}

impl FormatConfig {
    /// Reads a column mapping. Recognized keys: `delimiter`, `contract_id`,
    /// `country`, `year`, `issuer`, `winner`, `cpv`, `bids`, `value`,
    /// `default_country`, `keep_missing_bids`, `legal_forms` (comma list).
    /// An empty value for an optional column disables it.
    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let mut out = Self::default();
        for key in cfg.keys() {
            let value = cfg.get(key).unwrap_or_default();
            let optional = || (!value.is_empty()).then(|| value.to_string());
            match key {
                "delimiter" => {
                    out.delimiter = match value {
                        "\\t" | "tab" => b'\t',
                        v if v.len() == 1 => v.as_bytes()[0],
                        v => return Err(Error::Invalid(format!("bad delimiter {v:?}"))),
                    }
                }
                "contract_id" => out.contract_id = optional(),
                "country" => out.country = optional(),
                "value" => out.value = optional(),
                "year" => out.year = value.to_string(),
                "issuer" => out.issuer = value.to_string(),
                "winner" => out.winner = value.to_string(),
                "cpv" => out.cpv = value.to_string(),
                "bids" => out.bids = value.to_string(),
                "default_country" => out.default_country = optional(),
                "keep_missing_bids" => {
                    out.keep_missing_bids = cfg.get_parsed("keep_missing_bids")?.unwrap_or(false)
                }
                "legal_forms" => {
                    out.legal_forms = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().to_lowercase())
                            .filter(|s| !s.is_empty())
                            .collect(),
                    )
                }
                other => return Err(Error::Invalid(format!("unknown mapping key `{other}`"))),
            }
        }
        Ok(out)
    }

    pub fn normalizer(&self) -> NameNormalizer {
        match &self.legal_forms {
            Some(forms) => NameNormalizer::with_legal_forms(forms.iter().cloned()),
            None => NameNormalizer::default(),
        }
    }
}

struct Columns {
    contract_id: Option<usize>,
    country: Option<usize>,
    year: usize,
    issuer: usize,
    winner: usize,
    cpv: usize,
    bids: usize,
    value: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, cfg: &FormatConfig) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.into()));
        let optional = |name: &Option<String>| name.as_deref().and_then(find);
        Ok(Self {
            contract_id: optional(&cfg.contract_id),
            country: optional(&cfg.country),
            year: required(&cfg.year)?,
            issuer: required(&cfg.issuer)?,
            winner: required(&cfg.winner)?,
            cpv: required(&cfg.cpv)?,
            bids: required(&cfg.bids)?,
            value: optional(&cfg.value),
        })
    }
}

enum RowOutcome {
    Record(ContractRecord),
    MissingBids,
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &Columns,
    cfg: &FormatConfig,
    line: u64,
) -> std::result::Result<RowOutcome, &'static str> {
    let field = |i: usize| row.get(i).unwrap_or("");

    let contract_id = match cols.contract_id {
        Some(i) if !field(i).trim().is_empty() => field(i).trim().to_string(),
        Some(_) => return Err("empty contract_id"),
        None => format!("row-{line}"),
    };
    let country = match cols.country {
        Some(i) => {
            let c = field(i).trim();
            if c.len() != 2 || !c.bytes().all(|b| b.is_ascii_alphabetic()) {
                return Err("malformed country");
            }
            c.to_ascii_uppercase()
        }
        None => cfg
            .default_country
            .clone()
            .unwrap_or_else(|| UNKNOWN_COUNTRY.to_string()),
    };
    let year: i32 = field(cols.year).trim().parse().map_err(|_| "invalid year")?;
    let issuer = field(cols.issuer);
    if issuer.trim().is_empty() {
        return Err("empty issuer");
    }
    let winner = field(cols.winner);
    if winner.trim().is_empty() {
        return Err("empty winner");
    }
    let cpv = CpvCode::parse(field(cols.cpv)).ok_or("malformed CPV")?;
    let bids_raw = field(cols.bids).trim();
    let n_bids = if bids_raw.is_empty() {
        None
    } else {
        let n: u32 = bids_raw.parse().map_err(|_| "non-integer bids")?;
        if n == 0 {
            return Err("non-positive bids");
        }
        Some(n)
    };
    let value = match cols.value.map(|i| field(i).trim()) {
        None | Some("") => None,
        Some(v) => match v.parse::<f64>() {
            Ok(x) if x.is_finite() && x >= 0.0 => Some(x),
            _ => return Err("invalid value"),
        },
    };
    if n_bids.is_none() && !cfg.keep_missing_bids {
        return Ok(RowOutcome::MissingBids);
    }
    Ok(RowOutcome::Record(ContractRecord {
        contract_id,
        country,
        year,
        issuer_id: issuer.to_string(),
        winner_id: winner.to_string(),
        cpv,
        n_bids,
        single_bid: n_bids == Some(1),
        value,
    }))
}

/// Parses contract rows from any reader. Malformed rows are rejected and
/// reported; more than half rejected is fatal.
pub fn parse_contracts_from<R: Read>(reader: R, cfg: &FormatConfig) -> Result<ContractTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(cfg.delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(&headers, cfg)?;

    let mut provenance = Provenance::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut row = csv::StringRecord::new();
    loop {
        let line = rdr.position().line() + 1;
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                provenance.rows_read += 1;
                provenance.rejections.push(Rejection {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        }
        let line = row.position().map_or(line, |p| p.line());
        provenance.rows_read += 1;
        match parse_row(&row, &cols, cfg, line) {
            Ok(RowOutcome::Record(rec)) => {
                if !seen.insert(rec.contract_id.clone()) {
                    provenance.rejections.push(Rejection {
                        line,
                        reason: "duplicate contract_id".into(),
                    });
                } else {
                    records.push(rec);
                }
            }
            Ok(RowOutcome::MissingBids) => provenance.dropped_missing_bids += 1,
            Err(reason) => provenance.rejections.push(Rejection {
                line,
                reason: reason.into(),
            }),
        }
    }
    let rejected = provenance.rejections.len();
    if rejected * 2 > provenance.rows_read {
        return Err(Error::TooManyRejected {
            rejected,
            total: provenance.rows_read,
        });
    }
    if rejected > 0 {
        log::warn!("{rejected} of {} rows rejected", provenance.rows_read);
    }
    Ok(ContractTable {
        records,
        provenance,
    })
}

pub fn parse_contracts(path: impl AsRef<Path>, cfg: &FormatConfig) -> Result<ContractTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = parse_contracts_from(std::io::BufReader::new(file), cfg)?;
    table.provenance.source = Some(path.to_path_buf());
    Ok(table)
}

/// Writes the canonical contract CSV. Entity ids go into the `*_raw`
/// columns, so a deduplicated table re-parses to itself.
pub fn write_contracts<W: Write>(table: &ContractTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANONICAL_HEADER)?;
    for r in &table.records {
        let year = r.year.to_string();
        let bids = r.n_bids.map(|n| n.to_string()).unwrap_or_default();
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.contract_id.as_str(),
            r.country.as_str(),
            year.as_str(),
            r.issuer_id.as_str(),
            r.winner_id.as_str(),
            r.cpv.full_code(),
            bids.as_str(),
            value.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<contract writer>", e))?;
    Ok(())
}

pub fn write_rejections<W: Write>(rejections: &[Rejection], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["line", "reason"])?;
    for r in rejections {
        w.write_record([r.line.to_string(), r.reason.clone()])?;
    }
    w.flush().map_err(|e| Error::io("<rejection writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractFilter {
    pub country: Option<String>,
    pub years: Option<RangeInclusive<i32>>,
    pub require_bids: bool,
}

impl ContractFilter {
    pub fn matches(&self, r: &ContractRecord) -> bool {
        self.country
            .as_deref()
            .is_none_or(|c| r.country.eq_ignore_ascii_case(c))
            && self.years.as_ref().is_none_or(|y| y.contains(&r.year))
            && (!self.require_bids || r.has_bids())
    }
}

/// Keeps the records matching every supplied predicate, in order.
pub fn filter_contracts(table: &ContractTable, filter: &ContractFilter) -> ContractTable {
    let records: Vec<ContractRecord> = table
        .records
        .iter()
        .filter(|r| filter.matches(r))
        .cloned()
        .collect();
    if records.is_empty() {
        log::warn!("filter {filter:?} matched no contracts");
    }
    table.with_records(records)
}
