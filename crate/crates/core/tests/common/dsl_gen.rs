use proptest::prelude::*;
use scenforge::dsl::*;

pub fn arb_expr() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..400).prop_map(|n| Expr::Number(n as f64 / 4.0)),
        ("[A-Z][A-Z0-9_]{0,8}", any::<bool>()).prop_map(|(name, qualified)| Expr::Param { name, qualified }),
    ]
}

pub fn arb_call() -> impl Strategy<Value = Statement> {
    let prim = prop::sample::select(Primitive::ALL.to_vec());
    (prim, prop::collection::vec(arb_expr(), 3), any::<bool>()).prop_map(|(primitive, values, keyword)| {
        let formals = primitive.formals();
        let args = formals
            .iter()
            .zip(values)
            .map(|(f, v)| {
                let value = if primitive == Primitive::Crossing && *f == "target" {
                    Expr::Ego
                } else {
                    v
                };
                Arg {
                    keyword: keyword.then(|| f.to_string()),
                    value,
                }
            })
            .collect();
        Statement::DoBehavior(BehaviorCall { primitive, args })
    })
}

pub fn arb_leaf() -> impl Strategy<Value = Statement> {
    prop_oneof![
        4 => arb_call(),
        1 => (prop::sample::select(vec![SpeedAction::Vehicle, SpeedAction::Walking]), arb_expr())
            .prop_map(|(action, value)| Statement::SetSpeed { action, value }),
    ]
}

pub fn arb_condition() -> impl Strategy<Value = Condition> {
    let leaf = prop_oneof![
        arb_expr().prop_map(Condition::WithinDistanceToAnyCars),
        Just(Condition::InSameLaneAsEgo),
        arb_expr().prop_map(Condition::DistanceToEgoLaneBelow),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|c| Condition::Not(Box::new(c))),
            (inner.clone(), inner).prop_map(|(a, b)| Condition::And(Box::new(a), Box::new(b))),
        ]
    })
}

pub fn arb_block(depth: u32) -> BoxedStrategy<Vec<Statement>> {
    let leaf = prop::collection::vec(arb_leaf(), 1..4);
    if depth == 0 {
        return leaf.boxed();
    }
    let try_stmt =
        (arb_block(depth - 1), arb_condition(), arb_block(depth - 1)).prop_map(|(body, condition, handler)| {
            Statement::TryInterrupt {
                body,
                condition,
                handler,
            }
        });
    let loop_stmt = prop::collection::vec(arb_leaf(), 1..3).prop_map(Statement::Loop);
    let item = prop_oneof![3 => arb_leaf(), 1 => try_stmt, 1 => loop_stmt];
    prop::collection::vec(item, 1..4).boxed()
}

pub fn arb_behavior_snippet() -> impl Strategy<Value = SnippetAst> {
    (
        prop::option::of(prop::sample::select(AgentClass::ALL.to_vec())),
        arb_block(2),
        prop::collection::btree_map("[A-Z][A-Z0-9_]{0,8}", (0u32..40, 0u32..40), 0..4),
    )
        .prop_map(|(agent, body, params)| {
            let mut stmts: Vec<Statement> = agent.into_iter().map(Statement::Agent).collect();
            stmts.push(Statement::Behavior {
                name: "AdvBehavior".into(),
                body,
            });
            for (name, (a, b)) in params {
                let (lo, hi) = (a.min(b) as f64 / 2.0, a.max(b) as f64 / 2.0);
                stmts.push(Statement::ParamDecl(ParamSpec::new(name, lo, hi)));
            }
            SnippetAst::new(ComponentKind::Behavior, stmts)
        })
}
