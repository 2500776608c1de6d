// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use procnet::communities::{louvain, modularity, weighted_sb_moments, LineGraph};
use procnet::MarketGraph;

fn random_market() -> impl Strategy<Value = Vec<(String, String, u64, u64)>> {
    prop::collection::btree_set((0u8..8, 0u8..8), 1..30).prop_map(|s| {
        s.into_iter()
            .map(|(i, w)| (format!("I{i}"), format!("W{w}"), 1 + u64::from(i % 3), u64::from(w % 2)))
            .collect()
    })
}

fn build(edges: &[(String, String, u64, u64)]) -> MarketGraph {
    let refs: Vec<_> = edges.iter().map(|(i, w, a, b)| (i.as_str(), w.as_str(), *a, *b)).collect();
    MarketGraph::from_weighted_edges(&refs).unwrap()
}

proptest! {
    #[test]
    fn louvain_beats_singletons_and_is_seeded(edges in random_market(), seed in any::<u64>()) {
        let g = build(&edges);
        let lg = LineGraph::build(&g).unwrap();
        let p = louvain(&lg, seed);
        prop_assert_eq!(&p, &louvain(&lg, seed));
        prop_assert_eq!(p.community.len(), g.n_edges());
        let singletons: Vec<u32> = (0..lg.n_nodes() as u32).collect();
        prop_assert!(p.modularity >= modularity(&lg, &singletons) - 1e-12);
        prop_assert!((-0.5..=1.0).contains(&p.modularity));
        // labels are dense
        let mut seen = vec![false; p.n_communities];
        for &c in &p.community {
            seen[c as usize] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
        prop_assert!((modularity(&lg, &p.community) - p.modularity).abs() < 1e-12);
    }

    #[test]
    fn moments_ignore_cluster_order_and_scale(
        clusters in prop::collection::vec((1u64..50, 0.0f64..=1.0), 2..12),
        k in 1u64..6,
    ) {
        let a = weighted_sb_moments(&clusters).unwrap();
        let mut rev = clusters.clone();
        rev.reverse();
        let b = weighted_sb_moments(&rev).unwrap();
        prop_assert!((a.mu_w - b.mu_w).abs() < 1e-12);
        prop_assert!((a.sigma_w.unwrap() - b.sigma_w.unwrap()).abs() < 1e-12);
        let scaled: Vec<_> = clusters.iter().map(|&(s, r)| (s * k, r)).collect();
        let c = weighted_sb_moments(&scaled).unwrap();
        prop_assert!((a.mu_w - c.mu_w).abs() < 1e-12);
        prop_assert!((a.sigma_w.unwrap() - c.sigma_w.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn equal_rates_have_zero_spread(sizes in prop::collection::vec(1u64..50, 2..10), r in 0.0f64..=1.0) {
        let clusters: Vec<_> = sizes.iter().map(|&s| (s, r)).collect();
        let m = weighted_sb_moments(&clusters).unwrap();
        prop_assert!((m.mu_w - r).abs() < 1e-12);
        prop_assert!(m.sigma_w.unwrap() < 1e-9);
    }
}

#[test]
fn two_blocks_with_bridge_split() {
    let mut edges = Vec::new();
    for b in 0..2 {
        for i in 0..3 {
            for w in 0..3 {
                edges.push((format!("I{b}{i}"), format!("W{b}{w}"), 1, 0));
            }
        }
    }
    edges.push(("I00".into(), "W10".into(), 1, 0));
    let g = build(&edges);
    let lg = LineGraph::build(&g).unwrap();
    for seed in 0..10 {
        let p = louvain(&lg, seed);
        assert!(p.modularity >= 0.4, "seed {seed}: {}", p.modularity);
        assert!(p.n_communities >= 2);
    }
}
