// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use procnet::ingest::{
    deduplicate_entities, filter_contracts, normalize_entity_name, parse_contracts,
    parse_contracts_from, write_contracts, ContractFilter, FormatConfig, NameNormalizer,
};
use procnet::{ContractRecord, ContractTable, CpvCode};

fn record() -> impl Strategy<Value = ContractRecord> {
    (
        prop::sample::select(vec!["HU", "PL", "CZ"]),
        2008i32..=2016,
        "[A-Za-z][A-Za-z0-9 ,.&'-]{0,15}",
        "[A-Za-z][A-Za-z0-9 ,.&\"-]{0,15}",
        10u32..99,
        prop::option::of(1u32..8),
        prop::option::of(0.0f64..1e9),
    )
        .prop_map(|(c, year, issuer, winner, cpv, n_bids, value)| ContractRecord {
            contract_id: String::new(),
            country: c.to_string(),
            year,
            issuer_id: issuer,
            winner_id: winner,
            cpv: CpvCode::parse(&format!("{cpv}123456")).unwrap(),
            n_bids,
            single_bid: n_bids == Some(1),
            value,
        })
}

fn table() -> impl Strategy<Value = ContractTable> {
    prop::collection::vec(record(), 1..40).prop_map(|mut rs| {
        for (k, r) in rs.iter_mut().enumerate() {
            r.contract_id = format!("c{k}");
        }
        ContractTable::new(rs)
    })
}

fn keep_all() -> FormatConfig {
    FormatConfig {
        keep_missing_bids: true,
        ..FormatConfig::default()
    }
}

proptest! {
    #[test]
    fn canonical_csv_round_trips(t in table()) {
        let mut buf = Vec::new();
        write_contracts(&t, &mut buf).unwrap();
        let back = parse_contracts_from(buf.as_slice(), &keep_all()).unwrap();
        prop_assert!(back.provenance.rejections.is_empty());
        prop_assert_eq!(back.records, t.records);
    }

    #[test]
    fn deduplication_is_idempotent(t in table()) {
        let n = NameNormalizer::default();
        let once = deduplicate_entities(&t, &n);
        let twice = deduplicate_entities(&once.table, &n);
        prop_assert_eq!(&twice.table.records, &once.table.records);
        prop_assert_eq!(twice.before, once.after);
        prop_assert_eq!(twice.after, once.after);
    }

    #[test]
    fn deduplication_never_increases_entities(t in table()) {
        let d = deduplicate_entities(&t, &NameNormalizer::default());
        prop_assert!(d.after.issuers <= d.before.issuers);
        prop_assert!(d.after.winners <= d.before.winners);
    }

    #[test]
    fn normalization_is_idempotent(name in "\\PC{1,30}") {
        if let Ok(once) = normalize_entity_name(&name) {
            prop_assert_eq!(normalize_entity_name(&once).unwrap(), once);
        }
    }

    #[test]
    fn filters_compose(t in table(), lo in 2008i32..=2016, span in 0i32..4) {
        let years = lo..=lo + span;
        let both = filter_contracts(&t, &ContractFilter {
            country: Some("HU".into()),
            years: Some(years.clone()),
            require_bids: true,
        });
        let stepwise = filter_contracts(
            &filter_contracts(&t, &ContractFilter { country: Some("HU".into()), ..Default::default() }),
            &ContractFilter { years: Some(years), require_bids: true, ..Default::default() },
        );
        prop_assert_eq!(both.records, stepwise.records);
    }
}

#[test]
fn file_round_trip_keeps_source() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(
        &path,
        "contract_id,country,year,issuer_raw,winner_raw,cpv,bids,value\n\
         a,HU,2014,City of X,ACME Kft.,45000000-7,1,10\n\
         b,HU,2014,City of X,Acme KFT,45210000,3,\n\
         c,HU,2015,City of X,Beta Zrt,33000000,,\n",
    )
    .unwrap();
    let t = parse_contracts(&path, &FormatConfig::default()).unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(t.provenance.dropped_missing_bids, 1);
    assert_eq!(t.provenance.source.as_deref(), Some(path.as_path()));
    let d = deduplicate_entities(&t, &NameNormalizer::default());
    assert_eq!((d.before.winners, d.after.winners), (2, 1));
    assert!(d.table.records.iter().all(|r| r.winner_id == "acme"));
}

#[test]
fn custom_mapping_with_tabs() {
    let cfg = FormatConfig::from_kv(
        &procnet::config::KvConfig::parse(
            "delimiter = tab\ncontract_id =\ncountry =\ndefault_country = SK\n\
             year = yr\nissuer = buyer\nwinner = supplier\ncpv = cpv_code\nbids = offers\nvalue =\n",
        )
        .unwrap(),
    )
    .unwrap();
    let data = "yr\tbuyer\tsupplier\tcpv_code\toffers\n2013\tB1\tS1\t72000000\t1\n2013\tB1\tS2\t72000000\t2\n";
    let t = parse_contracts_from(data.as_bytes(), &cfg).unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(t.records[0].country, "SK");
    assert_eq!(t.records[1].contract_id, "row-3");
}
