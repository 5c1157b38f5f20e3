use scenforge::dsl::{validate, ComponentKind, Maneuver, PlacementKind, Primitive, Statement};
use scenforge::kb::seed_kb;
use scenforge::pipeline::{
    compose_scene_script, decompose, few_shot_examples, generate_description, scenario_corpus, BaseScenario,
    ComposeOptions, FixtureClient, PipelineError, PromptTemplate,
};

#[test]
fn every_corpus_scenario_composes_into_a_valid_script() {
    let kb = seed_kb().freeze().unwrap();
    let client = FixtureClient::bundled();
    let describe = PromptTemplate::describe();
    for s in scenario_corpus() {
        let text = generate_description(s.base, s.index, &client, &describe).unwrap();
        assert_eq!(text, s.description);
        let d = decompose(&text, &client).unwrap();
        assert_eq!(d, s.decomposition());
        let (script, trace) = compose_scene_script(&d, &kb, ComposeOptions::default())
            .unwrap_or_else(|e| panic!("{} {}: {e}", s.base, s.index));
        assert!(validate(&script).is_ok());
        assert_eq!(trace.components.len(), 3);
        assert_eq!(
            script.road().map(|r| r.name()),
            Some(s.base.road().name()),
            "{} {}",
            s.base,
            s.index
        );
        assert!(
            s.base.maneuvers().contains(&script.geometry.maneuver()),
            "{} {}",
            s.base,
            s.index
        );
    }
}

#[test]
fn sudden_brake_example_decomposes_and_retrieves() {
    let client = FixtureClient::bundled();
    let (scenario, expected) = few_shot_examples().into_iter().next().unwrap();
    let d = decompose(&scenario, &client).unwrap();
    assert_eq!(d, expected);
    assert_eq!(d.behavior, "The car up front slams on its brakes as the gap shrinks.");
    assert_eq!(d.geometry, "A plain straight road.");
    assert_eq!(d.spawn, "The other car starts directly ahead of the ego in its lane.");

    let kb = seed_kb().freeze().unwrap();
    let (script, trace) = compose_scene_script(&d, &kb, ComposeOptions::default()).unwrap();
    let mut brakes = false;
    scenforge::dsl::visit_statements(&script.behavior.statements, &mut |s| {
        if let Statement::DoBehavior(c) = s {
            brakes |= c.primitive == Primitive::Brake;
        }
    });
    assert!(brakes);
    assert_eq!(script.geometry.maneuver(), Maneuver::Straight);
    assert_eq!(script.spawn.placement().unwrap().kind, PlacementKind::Ahead);
    assert!(trace.components.iter().all(|c| !c.low_confidence));
    assert_eq!(trace.components[1].kind, ComponentKind::Geometry);
}

#[test]
fn composition_is_deterministic() {
    let kb = seed_kb().freeze().unwrap();
    let client = FixtureClient::bundled();
    let s = &scenario_corpus()[7];
    let run = || {
        let d = decompose(&s.description, &client).unwrap();
        let (script, trace) = compose_scene_script(&d, &kb, ComposeOptions::default()).unwrap();
        (script.to_text(), serde_json::to_string(&trace).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn unknown_description_has_no_fixture() {
    let client = FixtureClient::bundled();
    assert!(matches!(
        decompose("A scenario nobody wrote down.", &client),
        Err(PipelineError::MissingFixture { .. })
    ));
    assert!(matches!(
        decompose("   ", &client),
        Err(PipelineError::EmptyDescription)
    ));
    assert!(generate_description(BaseScenario::RightTurn, 99, &client, &PromptTemplate::describe()).is_err());
}

mod properties {
    use proptest::prelude::*;
    use scenforge::pipeline::{extract_fields, Decomposition};

    fn field() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z0-9,.:' -]{0,60}".prop_map(|s| s.trim_end().to_string())
    }

    proptest! {
        #[test]
        fn extract_inverts_format(behavior in field(), geometry in field(), spawn in field()) {
            let d = Decomposition { behavior, geometry, spawn };
            prop_assert_eq!(extract_fields(&d.format()).unwrap(), d);
        }

        #[test]
        fn label_order_and_case_do_not_matter(behavior in field(), geometry in field(), spawn in field()) {
            let text = format!("  SPAWN POSITION:  {spawn}\ngeometry:{geometry}  \nBehavior : {behavior}\n");
            let d = extract_fields(&text).unwrap();
            prop_assert_eq!(d, Decomposition { behavior, geometry, spawn });
        }
    }
}
