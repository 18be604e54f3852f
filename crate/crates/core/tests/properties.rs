//! Property tests for the structural guarantees the rest of the system
//! leans on: normalization, decay composition, stream merging, store
//! adjacency, and edit-distance basics.

use proptest::prelude::*;

use search_assist::association::{decay_factor, ContingencyTable};
use search_assist::model::{EngineConfig, Query, QueryEvent, QuerySource, TweetEvent};
use search_assist::spelling::{weighted_edit_distance_raw, EditCosts};
use search_assist::stores::{CoocStore, DecayedWeight};
use search_assist::streams::{merge_streams, Event};

fn cfg() -> EngineConfig {
    EngineConfig::default()
}

prop_compose! {
    fn arb_query_text()(parts in prop::collection::vec("[a-z#@]{1,6}", 1..4)) -> String {
        parts.join(" ")
    }
}

proptest! {
    #[test]
    fn normalize_is_idempotent(raw in "\\PC{1,40}") {
        if let Ok(first) = Query::normalize(&raw) {
            let second = Query::normalize(first.text()).unwrap();
            prop_assert_eq!(&first, &second);
            prop_assert_eq!(first.text(), second.text());
        }
    }

    #[test]
    fn query_equality_is_text_equality(a in arb_query_text(), b in arb_query_text()) {
        let qa = Query::normalize(&a).unwrap();
        let qb = Query::normalize(&b).unwrap();
        prop_assert_eq!(qa == qb, qa.text() == qb.text());
    }

    #[test]
    fn exponential_decay_composes(d1 in 0i64..10_000_000, d2 in 0i64..10_000_000) {
        let cfg = cfg();
        let joint = decay_factor(d1 + d2, &cfg);
        let split = decay_factor(d1, &cfg) * decay_factor(d2, &cfg);
        prop_assert!((joint - split).abs() < 1e-12);
    }

    #[test]
    fn lazy_decay_matches_eager_materialization(
        value in 0.01f64..1000.0,
        d1 in 0i64..5_000_000,
        d2 in 0i64..5_000_000,
    ) {
        let cfg = cfg();
        let lazy = DecayedWeight::new(value, 0);
        let mut eager = DecayedWeight::new(value, 0);
        eager.materialize(d1, &cfg);
        let diff = (lazy.read(d1 + d2, &cfg) - eager.read(d1 + d2, &cfg)).abs();
        prop_assert!(diff < 1e-9);
    }

    #[test]
    fn merge_is_ordered_and_complete(
        qts in prop::collection::vec(0i64..1_000_000, 0..50),
        tts in prop::collection::vec(0i64..1_000_000, 0..50),
    ) {
        let mut qts = qts;
        let mut tts = tts;
        qts.sort_unstable();
        tts.sort_unstable();
        let queries: Vec<QueryEvent> = qts.iter().map(|&ts| QueryEvent {
            session_id: "s".into(),
            query: Query::normalize("x").unwrap(),
            source: QuerySource::Typed,
            lang: "en".into(),
            ts: ts + 1,
        }).collect();
        let tweets: Vec<TweetEvent> = tts.iter().map(|&ts| TweetEvent {
            tweet_id: "t".into(),
            text: "y".into(),
            lang: "en".into(),
            ts: ts + 1,
        }).collect();
        let merged = merge_streams(queries, tweets, 0).unwrap();
        prop_assert_eq!(merged.len(), qts.len() + tts.len());
        for pair in merged.windows(2) {
            prop_assert!(pair[0].ts() <= pair[1].ts());
            // Stability: at equal timestamps the query comes first.
            if pair[0].ts() == pair[1].ts() {
                prop_assert!(!(matches!(pair[0], Event::Tweet(_))
                    && matches!(pair[1], Event::Query(_))));
            }
        }
    }

    #[test]
    fn cooc_adjacency_is_symmetric(
        edges in prop::collection::vec((0usize..8, 0usize..8, 0.1f64..5.0), 1..60),
    ) {
        let cfg = cfg();
        let names: Vec<Query> = (0..8)
            .map(|i| Query::normalize(&format!("n{i}")).unwrap())
            .collect();
        let mut store = CoocStore::default();
        for (a, b, w) in &edges {
            if a != b {
                store.update(&names[*a], &names[*b], *w, 1, &cfg).unwrap();
            }
        }
        for a in &names {
            for (b, w) in store.followers(a, 1, &cfg) {
                prop_assert!(w > 0.0);
                let preds = store.predecessors(&b, 1, &cfg);
                prop_assert!(preds.contains_key(a), "{a} -> {b} missing reverse edge");
            }
        }
    }

    #[test]
    fn table_from_weights_has_no_negative_cells(
        pair in 0.0f64..50.0,
        wa in 0.0f64..100.0,
        wb in 0.0f64..100.0,
        extra in 0.0f64..500.0,
    ) {
        let total = wa + wb + extra;
        let tbl = ContingencyTable::from_weights(pair, wa, wb, total);
        prop_assert!(tbl.n11 >= 0.0);
        prop_assert!(tbl.n12 >= 0.0);
        prop_assert!(tbl.n21 >= 0.0);
        prop_assert!(tbl.n22 >= 0.0);
        prop_assert_eq!(tbl.n11, pair.max(0.0));
    }

    #[test]
    fn edit_distance_is_symmetric_and_grounded(a in "[a-e]{0,8}", b in "[a-e]{0,8}") {
        let costs = EditCosts::default();
        let ab = weighted_edit_distance_raw(&a, &b, &costs);
        let ba = weighted_edit_distance_raw(&b, &a, &costs);
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab == 0.0, a == b);
        let len_gap = (a.chars().count() as f64 - b.chars().count() as f64).abs();
        prop_assert!(ab + 1e-12 >= len_gap);
    }
}
