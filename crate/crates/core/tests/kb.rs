use std::collections::HashSet;

use proptest::prelude::*;
use scenforge::dsl::ComponentKind;
use scenforge::kb::*;

/// Exhaustive scan written independently of `Index::retrieve`.
fn brute_force(kb: &KnowledgeBase, kind: ComponentKind, query: &Embedding) -> Vec<(EntryId, f64)> {
    let mut scored: Vec<(usize, EntryId, f64)> = Vec::new();
    for (order, e) in kb.entries().iter().filter(|e| e.kind == kind).enumerate() {
        let mut best = f64::NEG_INFINITY;
        for emb in &e.embeddings {
            let dot: f64 = query.as_slice().iter().zip(emb.as_slice()).map(|(a, b)| a * b).sum();
            best = best.max(dot);
        }
        scored.push((order, e.id, best));
    }
    scored.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(_, id, s)| (id, s)).collect()
}

#[test]
fn holdout_rephrasings_retrieve_their_entry() {
    let (kb, held) = seed_kb_with_holdout();
    assert!(kb.len() >= 30);
    assert!(kb.entries().iter().all(|e| e.rephrasings.len() >= 2));
    let frozen = kb.freeze().unwrap();
    let mut hits = 0;
    for (id, text) in &held {
        let kind = kb.entry(*id).unwrap().kind;
        let q = embed(text, kb.encoder().as_ref()).unwrap();
        let got = frozen.index(kind).retrieve(&q, usize::MAX).unwrap();
        let oracle = brute_force(&kb, kind, &q);
        assert_eq!(got.len(), oracle.len());
        for (h, (oid, os)) in got.iter().zip(&oracle) {
            assert_eq!(h.entry, *oid, "{text}");
            assert!((h.score - os).abs() < 1e-12);
        }
        hits += usize::from(got[0].entry == *id);
    }
    assert!(hits * 10 >= held.len() * 9, "{hits}/{}", held.len());
}

#[test]
fn cosine_hand_example() {
    let mut a = vec![0.0; DEFAULT_DIM];
    let mut b = vec![0.0; DEFAULT_DIM];
    a[0] = 0.6;
    a[1] = 0.8;
    b[0] = 1.0;
    let (a, b) = (Embedding::normalized(a).unwrap(), Embedding::normalized(b).unwrap());
    assert!((cosine_similarity(&a, &b) - 0.6).abs() < 1e-12);
    assert!(
        (embed("a pedestrian crosses", &HashingEncoder::default())
            .unwrap()
            .norm()
            - 1.0)
            .abs()
            < 1e-9
    );
}

const WORDS: &[&str] = &[
    "pedestrian",
    "car",
    "cyclist",
    "crosses",
    "brakes",
    "suddenly",
    "lane",
    "left",
    "right",
    "junction",
    "turn",
    "ahead",
    "behind",
    "merges",
    "stops",
    "road",
    "signal",
    "red",
    "light",
    "oncoming",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 2..8).prop_map(|w| w.join(" "))
}

fn scores(kb: &KnowledgeBase, kind: ComponentKind, q: &Embedding) -> Vec<(EntryId, f64)> {
    kb.build_index(kind)
        .unwrap()
        .retrieve(q, usize::MAX)
        .unwrap()
        .into_iter()
        .map(|h| (h.entry, h.score))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retrieval_matches_scan_and_dedups(query in sentence(), k in 1usize..12) {
        let kb = seed_kb();
        let enc = HashingEncoder::default();
        let q = embed(&query, &enc).unwrap();
        for kind in ComponentKind::ALL {
            let got = kb.build_index(kind).unwrap().retrieve(&q, k).unwrap();
            let oracle = brute_force(&kb, kind, &q);
            prop_assert_eq!(got.len(), k.min(oracle.len()));
            let ids: HashSet<EntryId> = got.iter().map(|h| h.entry).collect();
            prop_assert_eq!(ids.len(), got.len());
            for (h, (oid, os)) in got.iter().zip(&oracle) {
                prop_assert_eq!(h.entry, *oid);
                prop_assert!((h.score - os).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adding_an_entry_never_lowers_existing_scores(query in sentence(), extra in sentence()) {
        let mut kb = seed_kb();
        let q = embed(&query, kb.encoder().as_ref()).unwrap();
        let before = scores(&kb, ComponentKind::Behavior, &q);
        let desc = format!("unrelated entry about {extra}");
        kb.add_entry(
            ComponentKind::Behavior,
            &desc,
            "behavior AdvBehavior():\n    do StopBehavior()\n",
            &[format!("{desc} again")],
        )
        .unwrap();
        let after = scores(&kb, ComponentKind::Behavior, &q);
        for (id, s) in before {
            let now = after.iter().find(|(i, _)| *i == id).unwrap().1;
            prop_assert_eq!(now, s);
        }
    }
}

#[test]
fn identical_query_scores_one() {
    let kb = seed_kb();
    let frozen = kb.freeze().unwrap();
    for e in kb.entries() {
        for variant in e.variants() {
            let hits = frozen.query(e.kind, variant, 1).unwrap();
            assert!((hits[0].score - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn saved_directory_reloads_identically() {
    let kb = seed_kb();
    let dir = tempfile::tempdir().unwrap();
    kb.save_dir(dir.path()).unwrap();
    let back = KnowledgeBase::load_dir(dir.path(), std::sync::Arc::new(HashingEncoder::default())).unwrap();
    assert_eq!(back.len(), kb.len());
    for (a, b) in kb.entries().iter().zip(back.entries()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.snippet, b.snippet);
    }
}
