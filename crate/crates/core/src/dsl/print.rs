//! Canonical serialization of snippets.

use super::ast::*;
use super::lexer::fmt_number;

pub fn serialize(ast: &SnippetAst) -> String {
    let mut out = String::new();
    write_block(&mut out, &ast.statements, 0);
    out
}

fn write_block(out: &mut String, stmts: &[Statement], level: usize) {
    for s in stmts {
        write_statement(out, s, level);
    }
}

fn line(out: &mut String, level: usize, text: &str) {
    out.push_str(&"    ".repeat(level));
    out.push_str(text);
    out.push('\n');
}

fn write_statement(out: &mut String, s: &Statement, level: usize) {
    match s {
        Statement::Agent(c) => line(out, level, &format!("agent {}", c.as_str())),
        Statement::Behavior { name, body } => {
            line(out, level, &format!("behavior {name}():"));
            write_block(out, body, level + 1);
        }
        Statement::DoBehavior(call) => line(
            out,
            level,
            &format!("do {}({})", call.primitive.as_str(), args(&call.args)),
        ),
        Statement::TryInterrupt {
            body,
            condition,
            handler,
        } => {
            line(out, level, "try:");
            write_block(out, body, level + 1);
            line(out, level, &format!("interrupt when {}:", cond(condition)));
            write_block(out, handler, level + 1);
        }
        Statement::SetSpeed { action, value } => {
            line(out, level, &format!("take {}({})", action.as_str(), expr(value)))
        }
        Statement::Loop(body) => {
            line(out, level, "while True:");
            write_block(out, body, level + 1);
        }
        Statement::ParamDecl(p) => line(
            out,
            level,
            &format!("param {} = Range({}, {})", p.name, fmt_number(p.lo), fmt_number(p.hi)),
        ),
        Statement::Road(r) => line(out, level, &format!("road {}", road(*r))),
        Statement::Route(m) => line(out, level, &format!("route {}", m.as_str())),
        Statement::Spawn(p) => line(out, level, &format!("spawn {}({})", p.kind.as_str(), expr(&p.distance))),
    }
}

pub fn road(r: RoadSpec) -> String {
    match r {
        RoadSpec::StraightRoad { lanes_per_direction } => format!("StraightRoad({lanes_per_direction})"),
        RoadSpec::FourWayIntersection { signalized } => {
            format!("FourWayIntersection({})", if signalized { "True" } else { "False" })
        }
        RoadSpec::TIntersection => "TIntersection()".to_string(),
    }
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Number(v) => fmt_number(*v),
        Expr::Bool(true) => "True".into(),
        Expr::Bool(false) => "False".into(),
        Expr::Param { name, qualified: true } => format!("globalParameters.{name}"),
        Expr::Param { name, .. } => name.clone(),
        Expr::Ego => "ego".into(),
        Expr::SelfRef => "self".into(),
    }
}

fn args(args: &[Arg]) -> String {
    args.iter()
        .map(|a| match &a.keyword {
            Some(k) => format!("{k}={}", expr(&a.value)),
            None => expr(&a.value),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn cond(c: &Condition) -> String {
    match c {
        Condition::WithinDistanceToAnyCars(d) => format!("withinDistanceToAnyCars(self, {})", expr(d)),
        Condition::InSameLaneAsEgo => "inSameLaneAsEgo(self)".into(),
        Condition::DistanceToEgoLaneBelow(d) => format!("distanceToEgoLane(self) < {}", expr(d)),
        Condition::Not(inner) => match inner.as_ref() {
            Condition::And(..) => format!("not ({})", cond(inner)),
            _ => format!("not {}", cond(inner)),
        },
        Condition::And(a, b) => {
            let rhs = match b.as_ref() {
                Condition::And(..) => format!("({})", cond(b)),
                _ => cond(b),
            };
            format!("{} and {rhs}", cond(a))
        }
    }
}
