// SPDX-License-Identifier: Apache-2.0

//! Deterministic entity-name normalization and exact-match deduplication.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use serde::Serialize;

use super::{ContractTable, Rejection};
use crate::graph::Role;
use crate::{Error, Result};

/// Legal-form tokens stripped from the end of entity names.
pub const DEFAULT_LEGAL_FORMS: &[&str] = &[
    "ltd", "gmbh", "kft", "zrt", "sa", "srl", "sro", "spzoo", "bv", "oy", "ab", "as", "sas", "plc",
];

/// Longest run of trailing tokens joined when matching a legal form, so that
/// `s r l` and `sp z oo` match `srl` and `spzoo`.
const MAX_SUFFIX_TOKENS: usize = 3;

/// Name canonicalizer:
///
/// 1. `.` and apostrophes are deleted (`S.R.L` becomes `SRL`);
/// 2. letters and digits are transliterated to ASCII and lowercased;
/// 3. every other character becomes a space and whitespace is collapsed;
/// 4. trailing legal-form suffixes are removed repeatedly, never removing the
///    last remaining token.
///
/// The output is a fixed point: normalizing it again returns it unchanged.
#[derive(Debug, Clone)]
pub struct NameNormalizer {
    legal_forms: HashSet<String>,
}

impl Default for NameNormalizer {
    fn default() -> Self {
        Self::with_legal_forms(DEFAULT_LEGAL_FORMS.iter().map(|s| s.to_string()))
    }
}

impl NameNormalizer {
    pub fn with_legal_forms(forms: impl IntoIterator<Item = String>) -> Self {
        Self {
            legal_forms: forms.into_iter().map(|f| f.to_lowercase()).collect(),
        }
    }

    pub fn normalize(&self, raw: &str) -> Result<String> {
        let mut folded = String::with_capacity(raw.len());
        for ch in raw.chars() {
            match ch {
                '.' | '\'' | '\u{2019}' | '`' => {}
                c if c.is_ascii_alphanumeric() => folded.push(c.to_ascii_lowercase()),
                c if c.is_alphanumeric() => {
                    for t in deunicode::deunicode_char(c).unwrap_or(" ").chars() {
                        folded.push(if t.is_ascii_alphanumeric() {
                            t.to_ascii_lowercase()
                        } else {
                            ' '
                        });
                    }
                }
                _ => folded.push(' '),
            }
        }
        let mut tokens: Vec<&str> = folded.split_whitespace().collect();
        'strip: loop {
            for k in (1..=MAX_SUFFIX_TOKENS).rev() {
                if tokens.len() > k && self.legal_forms.contains(&tokens[tokens.len() - k..].concat())
                {
                    tokens.truncate(tokens.len() - k);
                    continue 'strip;
                }
            }
            break;
        }
        if tokens.is_empty() {
            return Err(Error::EmptyName(raw.to_string()));
        }
        Ok(tokens.join(" "))
    }
}

/// Normalizes with the default legal-form list.
pub fn normalize_entity_name(raw: &str) -> Result<String> {
    NameNormalizer::default().normalize(raw)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct EntityMapping {
    pub raw_name: String,
    pub role: Role,
    pub country: String,
    pub canonical_id: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EntityCounts {
    pub issuers: usize,
    pub winners: usize,
}

#[derive(Debug, Clone)]
pub struct Deduplicated {
    pub table: ContractTable,
    /// Sorted by role, country, raw name.
    pub mapping: Vec<EntityMapping>,
    pub before: EntityCounts,
    pub after: EntityCounts,
    /// Records dropped because a name normalized to nothing. Line numbers are
    /// 1-based record positions within the input table.
    pub rejected: Vec<Rejection>,
}

/// Replaces issuer and winner ids by their normalized names. An entity is
/// the triple (role, country, canonical id), so merges never cross roles or
/// countries.
pub fn deduplicate_entities(table: &ContractTable, normalizer: &NameNormalizer) -> Deduplicated {
    let mut cache: BTreeMap<(Role, String, String), Option<String>> = BTreeMap::new();
    let mut canonical = |role: Role, country: &str, raw: &str| -> Option<String> {
        cache
            .entry((role, country.to_string(), raw.to_string()))
            .or_insert_with(|| normalizer.normalize(raw).ok())
            .clone()
    };

    let mut records = Vec::with_capacity(table.records.len());
    let mut rejected = Vec::new();
    for (idx, rec) in table.records.iter().enumerate() {
        let issuer = canonical(Role::Issuer, &rec.country, &rec.issuer_id);
        let winner = canonical(Role::Winner, &rec.country, &rec.winner_id);
        match (issuer, winner) {
            (Some(issuer_id), Some(winner_id)) => {
                let mut r = rec.clone();
                r.issuer_id = issuer_id;
                r.winner_id = winner_id;
                records.push(r);
            }
            (issuer, _) => rejected.push(Rejection {
                line: idx as u64 + 1,
                reason: if issuer.is_none() {
                    format!("issuer name reduces to empty: {:?}", rec.issuer_id)
                } else {
                    format!("winner name reduces to empty: {:?}", rec.winner_id)
                },
            }),
        }
    }

    let mut before = EntityCounts::default();
    let mut after_sets: [BTreeSet<(&str, &str)>; 2] = Default::default();
    let mut mapping = Vec::with_capacity(cache.len());
    for ((role, country, raw), id) in &cache {
        match role {
            Role::Issuer => before.issuers += 1,
            Role::Winner => before.winners += 1,
        }
        if let Some(id) = id {
            after_sets[*role as usize].insert((country, id));
            mapping.push(EntityMapping {
                raw_name: raw.clone(),
                role: *role,
                country: country.clone(),
                canonical_id: id.clone(),
            });
        }
    }
    let after = EntityCounts {
        issuers: after_sets[Role::Issuer as usize].len(),
        winners: after_sets[Role::Winner as usize].len(),
    };
    if !rejected.is_empty() {
        log::warn!("{} records dropped: entity name reduces to empty", rejected.len());
    }
    log::info!(
        "deduplication: issuers {} -> {}, winners {} -> {}",
        before.issuers,
        after.issuers,
        before.winners,
        after.winners
    );

    Deduplicated {
        table: ContractTable {
            records,
            provenance: table.provenance.clone(),
        },
        mapping,
        before,
        after,
        rejected,
    }
}

/// Writes the `raw_name,role,country,canonical_id` side artifact.
pub fn write_entity_map<W: Write>(mapping: &[EntityMapping], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["raw_name", "role", "country", "canonical_id"])?;
    for m in mapping {
        w.write_record([
            m.raw_name.as_str(),
            m.role.as_str(),
            m.country.as_str(),
            m.canonical_id.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<entity map writer>", e))?;
    Ok(())
}
