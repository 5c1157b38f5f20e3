mod common;

use common::dsl_gen::arb_behavior_snippet;
use proptest::prelude::*;
use regex::Regex;
use scenforge::dsl::*;
use scenforge::kb::seed_kb;

/// Re-indent with `unit` spaces per level and loosen token spacing.
fn perturb(text: &str, unit: usize) -> String {
    text.lines()
        .map(|l| {
            let trimmed = l.trim_start();
            let level = (l.len() - trimmed.len()) / 4;
            let body = trimmed.replace('(', "( ").replace(", ", " ,  ").replace('=', " = ");
            format!("{}{body}  \n\n", " ".repeat(level * unit))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generated_snippets_round_trip(ast in arb_behavior_snippet()) {
        let text = serialize(&ast);
        let parsed = parse_snippet(&text, ComponentKind::Behavior).unwrap();
        prop_assert_eq!(&parsed, &ast);
        prop_assert_eq!(serialize(&parsed), text);
    }

    #[test]
    fn parse_then_serialize_equals_canonicalize(ast in arb_behavior_snippet(), unit in 1usize..6) {
        let noisy = perturb(&serialize(&ast), unit);
        let parsed = parse_snippet(&noisy, ComponentKind::Behavior).unwrap();
        prop_assert_eq!(serialize(&parsed), canonicalize(&noisy).unwrap());
        prop_assert_eq!(parsed, ast);
    }
}

#[test]
fn seed_corpus_round_trips() {
    let kb = seed_kb();
    for e in kb.entries() {
        let canonical = canonicalize(&e.snippet_text).unwrap();
        assert_eq!(serialize(&e.snippet), canonical, "{}", e.description);
        assert_eq!(parse_snippet(&canonical, e.kind).unwrap(), e.snippet);
    }
}

fn all_caps_identifiers(text: &str) -> Vec<String> {
    let re = Regex::new(r"\b[A-Z][A-Z0-9_]+\b").unwrap();
    re.find_iter(text).map(|m| m.as_str().to_string()).collect()
}

#[test]
fn every_admitted_triple_assembles_and_validates() {
    let kb = seed_kb();
    let of = |k: ComponentKind| kb.entries().iter().filter(move |e| e.kind == k).collect::<Vec<_>>();
    let (behaviors, geometries, spawns) = (
        of(ComponentKind::Behavior),
        of(ComponentKind::Geometry),
        of(ComponentKind::SpawnPosition),
    );
    let mut admitted = 0;
    let mut rejected = 0;
    for g in &geometries {
        for s in &spawns {
            if !compatible(&g.snippet, &s.snippet) {
                rejected += 1;
                assert!(matches!(
                    assemble_script(behaviors[0].snippet.clone(), g.snippet.clone(), s.snippet.clone()),
                    Err(AssembleError::IncompatibleGeometry { .. } | AssembleError::UnsupportedManeuver { .. })
                ));
                continue;
            }
            for b in &behaviors {
                let script = assemble_script(b.snippet.clone(), g.snippet.clone(), s.snippet.clone())
                    .unwrap_or_else(|e| panic!("{} / {} / {}: {e}", b.description, g.description, s.description));
                let report = validate(&script);
                assert!(report.is_ok(), "{:?}", report.issues);
                admitted += 1;

                let declared: Vec<String> = list_params(&script).into_iter().map(|p| p.name).collect();
                for section in script.sections() {
                    for name in all_caps_identifiers(&serialize(section)) {
                        assert!(declared.contains(&name), "{name} not listed");
                    }
                }
                let text = script.to_text();
                assert_eq!(SceneScript::from_text(&text).unwrap().to_text(), text);
            }
        }
    }
    assert!(admitted > 500, "{admitted}");
    assert!(rejected > 0);
}

#[test]
fn list_params_keeps_declaration_order() {
    let b = parse_snippet(
        "behavior AdvBehavior():\n    do CrossingBehavior(ego, ADV_SPEED, ADV_DISTANCE)\nparam ADV_SPEED = Range(0, 5)\nparam ADV_DISTANCE = Range(0, 20)\n",
        ComponentKind::Behavior,
    )
    .unwrap();
    let g = parse_snippet("road StraightRoad(1)\n", ComponentKind::Geometry).unwrap();
    let s = parse_snippet("spawn RightFront(10)\n", ComponentKind::SpawnPosition).unwrap();
    let script = assemble_script(b, g.clone(), s.clone()).unwrap();
    assert_eq!(
        list_params(&script),
        vec![
            ParamSpec::new("ADV_SPEED", 0.0, 5.0),
            ParamSpec::new("ADV_DISTANCE", 0.0, 20.0)
        ]
    );
    let fixed = parse_snippet(
        "behavior AdvBehavior():\n    do StopBehavior()\n",
        ComponentKind::Behavior,
    )
    .unwrap();
    assert!(list_params(&assemble_script(fixed, g, s).unwrap()).is_empty());
}
