//! Recursive-descent parser over indented token lines.

use super::ast::*;
use super::lexer::{lex, Line, Tok, Token};
use super::DslError;

pub const MAX_TRY_DEPTH: usize = 2;

/// Parse a snippet of the given component kind.
pub fn parse_snippet(text: &str, kind: ComponentKind) -> Result<SnippetAst, DslError> {
    let lines = lex(text)?;
    if lines.is_empty() {
        return Err(DslError::syntax(1, 1, "empty snippet"));
    }
    let mut p = Parser {
        lines: &lines,
        pos: 0,
        kind,
        try_depth: 0,
    };
    let statements = p.top_level()?;
    let ast = SnippetAst::new(kind, statements);
    check_shape(&ast, &lines)?;
    Ok(ast)
}

struct Parser<'a> {
    lines: &'a [Line],
    pos: usize,
    kind: ComponentKind,
    try_depth: usize,
}

/// Cursor over the tokens of one line.
struct Cursor<'a> {
    line: &'a Line,
    i: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a Line) -> Self {
        Cursor { line, i: 0 }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.line.tokens.get(self.i)
    }

    fn col(&self) -> usize {
        self.peek()
            .map(|t| t.col)
            .or_else(|| self.line.tokens.last().map(|t| t.col + 1))
            .unwrap_or(self.line.indent + 1)
    }

    fn err(&self, msg: impl Into<String>) -> DslError {
        DslError::syntax(self.line.number, self.col(), msg)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.line.tokens.get(self.i);
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(t) if t.tok == want => {
                self.i += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(&'a str, usize), DslError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Ident(s),
                col,
            }) => {
                self.i += 1;
                Ok((s.as_str(), *col))
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) if s == kw => {
                self.i += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{kw}`"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s == kw)
    }

    fn number(&mut self, what: &str) -> Result<f64, DslError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Number(v), ..
            }) => {
                self.i += 1;
                Ok(*v)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn end(&self) -> Result<(), DslError> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.err("unexpected trailing tokens")),
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let Some(t) = self.peek() else {
            return Err(self.err("expected an expression"));
        };
        match &t.tok {
            Tok::Number(v) => {
                self.i += 1;
                Ok(Expr::Number(*v))
            }
            Tok::Ident(s) => {
                self.i += 1;
                match s.as_str() {
                    "True" => Ok(Expr::Bool(true)),
                    "False" => Ok(Expr::Bool(false)),
                    "ego" => Ok(Expr::Ego),
                    "self" => Ok(Expr::SelfRef),
                    "globalParameters" => {
                        self.expect(Tok::Dot, "`.` after globalParameters")?;
                        let (name, col) = self.ident("parameter name")?;
                        if !is_param_name(name) {
                            return Err(DslError::syntax(
                                self.line.number,
                                col,
                                format!("`{name}` is not a parameter name"),
                            ));
                        }
                        Ok(Expr::Param {
                            name: name.to_string(),
                            qualified: true,
                        })
                    }
                    name if is_param_name(name) => Ok(Expr::param(name)),
                    other => Err(DslError::syntax(
                        self.line.number,
                        t.col,
                        format!("unknown name `{other}`"),
                    )),
                }
            }
            _ => Err(self.err("expected an expression")),
        }
    }

    /// `( [arg {, arg}] )` where `arg := [ident =] expr`.
    fn args(&mut self) -> Result<Vec<Arg>, DslError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if matches!(self.peek(), Some(Token { tok: Tok::RParen, .. })) {
            self.i += 1;
            return Ok(args);
        }
        loop {
            let keyword = match (self.line.tokens.get(self.i), self.line.tokens.get(self.i + 1)) {
                (Some(Token { tok: Tok::Ident(k), .. }), Some(Token { tok: Tok::Eq, .. })) => {
                    self.i += 2;
                    Some(k.clone())
                }
                _ => None,
            };
            let value = self.expr()?;
            args.push(Arg { keyword, value });
            match self.next() {
                Some(Token { tok: Tok::Comma, .. }) => continue,
                Some(Token { tok: Tok::RParen, .. }) => break,
                _ => return Err(self.err("expected `,` or `)`")),
            }
        }
        Ok(args)
    }

    fn condition(&mut self) -> Result<Condition, DslError> {
        let mut lhs = self.cond_unary()?;
        while self.at_keyword("and") {
            self.i += 1;
            let rhs = self.cond_unary()?;
            lhs = Condition::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cond_unary(&mut self) -> Result<Condition, DslError> {
        if self.at_keyword("not") {
            self.i += 1;
            return Ok(Condition::Not(Box::new(self.cond_unary()?)));
        }
        if matches!(self.peek(), Some(Token { tok: Tok::LParen, .. })) {
            self.i += 1;
            let c = self.condition()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(c);
        }
        let (name, col) = self.ident("a predicate")?;
        match name {
            "withinDistanceToAnyCars" => {
                self.expect(Tok::LParen, "`(`")?;
                self.keyword("self")?;
                self.expect(Tok::Comma, "`,`")?;
                let d = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Condition::WithinDistanceToAnyCars(d))
            }
            "inSameLaneAsEgo" => {
                self.expect(Tok::LParen, "`(`")?;
                self.keyword("self")?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Condition::InSameLaneAsEgo)
            }
            "distanceToEgoLane" => {
                self.expect(Tok::LParen, "`(`")?;
                self.keyword("self")?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Lt, "`<`")?;
                let d = self.expr()?;
                Ok(Condition::DistanceToEgoLaneBelow(d))
            }
            other => Err(DslError::syntax(
                self.line.number,
                col,
                format!("unknown predicate `{other}`"),
            )),
        }
    }
}

impl<'a> Parser<'a> {
    fn wrong(&self, construct: &str) -> DslError {
        DslError::WrongComponent {
            kind: self.kind,
            construct: construct.to_string(),
        }
    }

    fn top_level(&mut self) -> Result<Vec<Statement>, DslError> {
        let mut out = Vec::new();
        while self.pos < self.lines.len() {
            let line = &self.lines[self.pos];
            if line.indent != 0 {
                return Err(DslError::syntax(line.number, 1, "unexpected indent"));
            }
            self.pos += 1;
            let mut c = Cursor::new(line);
            let (head, col) = c.ident("a statement")?;
            let stmt = match head {
                "param" => {
                    let (name, ncol) = c.ident("parameter name")?;
                    if !is_param_name(name) {
                        return Err(DslError::syntax(
                            line.number,
                            ncol,
                            format!("parameter `{name}` must match [A-Z][A-Z0-9_]*"),
                        ));
                    }
                    c.expect(Tok::Eq, "`=`")?;
                    c.keyword("Range")?;
                    c.expect(Tok::LParen, "`(`")?;
                    let lo = c.number("lower bound")?;
                    c.expect(Tok::Comma, "`,`")?;
                    let hi = c.number("upper bound")?;
                    c.expect(Tok::RParen, "`)`")?;
                    c.end()?;
                    if lo > hi {
                        return Err(DslError::syntax(
                            line.number,
                            ncol,
                            format!("empty range for `{name}`: {lo} > {hi}"),
                        ));
                    }
                    Statement::ParamDecl(ParamSpec::new(name, lo, hi))
                }
                "agent" => {
                    if self.kind != ComponentKind::Behavior {
                        return Err(self.wrong("agent"));
                    }
                    let (name, ccol) = c.ident("agent class")?;
                    let class = AgentClass::from_name(name)
                        .ok_or_else(|| DslError::syntax(line.number, ccol, format!("unknown agent class `{name}`")))?;
                    c.end()?;
                    Statement::Agent(class)
                }
                "behavior" => {
                    if self.kind != ComponentKind::Behavior {
                        return Err(self.wrong("behavior"));
                    }
                    let (name, _) = c.ident("behavior name")?;
                    c.expect(Tok::LParen, "`(`")?;
                    c.expect(Tok::RParen, "`)`")?;
                    c.expect(Tok::Colon, "`:`")?;
                    c.end()?;
                    let body = self.block(line, 0)?;
                    Statement::Behavior {
                        name: name.to_string(),
                        body,
                    }
                }
                "road" => {
                    if self.kind != ComponentKind::Geometry {
                        return Err(self.wrong("road"));
                    }
                    let (name, ncol) = c.ident("road template")?;
                    let args = c.args()?;
                    c.end()?;
                    Statement::Road(road_spec(name, &args).map_err(|m| match m {
                        RoadErr::Unknown => DslError::UnknownPrimitive(name.to_string()),
                        RoadErr::Args(msg) => DslError::syntax(line.number, ncol, msg),
                    })?)
                }
                "route" => {
                    if self.kind != ComponentKind::Geometry {
                        return Err(self.wrong("route"));
                    }
                    let (name, _) = c.ident("maneuver")?;
                    let m = Maneuver::from_name(name).ok_or_else(|| DslError::UnknownPrimitive(name.to_string()))?;
                    c.end()?;
                    Statement::Route(m)
                }
                "spawn" => {
                    if self.kind != ComponentKind::SpawnPosition {
                        return Err(self.wrong("spawn"));
                    }
                    let (name, ncol) = c.ident("placement")?;
                    let kind =
                        PlacementKind::from_name(name).ok_or_else(|| DslError::UnknownPrimitive(name.to_string()))?;
                    let args = c.args()?;
                    c.end()?;
                    if args.len() != 1 || args[0].keyword.is_some() {
                        return Err(DslError::syntax(
                            line.number,
                            ncol,
                            format!("{name} takes exactly one distance argument"),
                        ));
                    }
                    Statement::Spawn(Placement {
                        kind,
                        distance: args.into_iter().next().map(|a| a.value).unwrap_or(Expr::Number(0.0)),
                    })
                }
                "do" | "try" | "take" | "while" | "interrupt" => {
                    if self.kind != ComponentKind::Behavior {
                        return Err(self.wrong(head));
                    }
                    return Err(DslError::syntax(
                        line.number,
                        col,
                        format!("`{head}` is only allowed inside a behavior body"),
                    ));
                }
                other => {
                    return Err(DslError::syntax(
                        line.number,
                        col,
                        format!("unknown statement `{other}`"),
                    ))
                }
            };
            out.push(stmt);
        }
        Ok(out)
    }

    /// Parse the indented block that follows `header`.
    fn block(&mut self, header: &Line, parent_indent: usize) -> Result<Vec<Statement>, DslError> {
        let Some(first) = self.lines.get(self.pos) else {
            return Err(DslError::syntax(
                header.number,
                header.indent + 1,
                "expected an indented block",
            ));
        };
        if first.indent <= parent_indent {
            return Err(DslError::syntax(first.number, 1, "expected an indented block"));
        }
        let indent = first.indent;
        let mut out = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent < indent {
                if line.indent > parent_indent {
                    return Err(DslError::syntax(
                        line.number,
                        1,
                        "dedent does not match any outer block",
                    ));
                }
                break;
            }
            if line.indent > indent {
                return Err(DslError::syntax(line.number, 1, "unexpected indent"));
            }
            out.push(self.statement(line, indent)?);
        }
        Ok(out)
    }

    fn statement(&mut self, line: &'a Line, indent: usize) -> Result<Statement, DslError> {
        self.pos += 1;
        let mut c = Cursor::new(line);
        let (head, col) = c.ident("a statement")?;
        match head {
            "do" => {
                let (name, _) = c.ident("behavior primitive")?;
                let primitive =
                    Primitive::from_name(name).ok_or_else(|| DslError::UnknownPrimitive(name.to_string()))?;
                let args = c.args()?;
                c.end()?;
                check_call_args(primitive, &args).map_err(|m| DslError::syntax(line.number, col, m))?;
                Ok(Statement::DoBehavior(BehaviorCall { primitive, args }))
            }
            "take" => {
                let (name, _) = c.ident("action")?;
                let action =
                    SpeedAction::from_name(name).ok_or_else(|| DslError::UnknownPrimitive(name.to_string()))?;
                c.expect(Tok::LParen, "`(`")?;
                let value = c.expr()?;
                c.expect(Tok::RParen, "`)`")?;
                c.end()?;
                Ok(Statement::SetSpeed { action, value })
            }
            "while" => {
                c.keyword("True")?;
                c.expect(Tok::Colon, "`:`")?;
                c.end()?;
                Ok(Statement::Loop(self.block(line, indent)?))
            }
            "try" => {
                c.expect(Tok::Colon, "`:`")?;
                c.end()?;
                self.try_depth += 1;
                if self.try_depth > MAX_TRY_DEPTH {
                    return Err(DslError::syntax(
                        line.number,
                        col,
                        format!("try/interrupt nested deeper than {MAX_TRY_DEPTH}"),
                    ));
                }
                let body = self.block(line, indent)?;
                let Some(next) = self.lines.get(self.pos).filter(|l| l.indent == indent) else {
                    return Err(DslError::syntax(line.number, col, "`try` without `interrupt when`"));
                };
                self.pos += 1;
                let mut ic = Cursor::new(next);
                ic.keyword("interrupt")?;
                ic.keyword("when")?;
                let condition = ic.condition()?;
                ic.expect(Tok::Colon, "`:`")?;
                ic.end()?;
                let handler = self.block(next, indent)?;
                self.try_depth -= 1;
                Ok(Statement::TryInterrupt {
                    body,
                    condition,
                    handler,
                })
            }
            "param" | "road" | "route" | "spawn" | "agent" | "behavior" => Err(DslError::syntax(
                line.number,
                col,
                format!("`{head}` is only allowed at top level"),
            )),
            "interrupt" => Err(DslError::syntax(line.number, col, "`interrupt` without `try`")),
            other => Err(DslError::syntax(
                line.number,
                col,
                format!("unknown statement `{other}`"),
            )),
        }
    }
}

enum RoadErr {
    Unknown,
    Args(String),
}

fn road_spec(name: &str, args: &[Arg]) -> Result<RoadSpec, RoadErr> {
    let positional: Vec<&Expr> = args
        .iter()
        .map(|a| {
            if a.keyword.is_some() {
                Err(RoadErr::Args(format!("{name} takes positional literals only")))
            } else {
                Ok(&a.value)
            }
        })
        .collect::<Result<_, _>>()?;
    match name {
        "StraightRoad" => match positional.as_slice() {
            [Expr::Number(n)] if *n >= 1.0 && n.fract() == 0.0 && *n <= 8.0 => Ok(RoadSpec::StraightRoad {
                lanes_per_direction: *n as u32,
            }),
            _ => Err(RoadErr::Args(
                "StraightRoad takes one integer literal (lanes per direction, 1-8)".into(),
            )),
        },
        "FourWayIntersection" => match positional.as_slice() {
            [Expr::Bool(b)] => Ok(RoadSpec::FourWayIntersection { signalized: *b }),
            _ => Err(RoadErr::Args(
                "FourWayIntersection takes one boolean literal (signalized)".into(),
            )),
        },
        "TIntersection" => {
            if positional.is_empty() {
                Ok(RoadSpec::TIntersection)
            } else {
                Err(RoadErr::Args("TIntersection takes no arguments".into()))
            }
        }
        _ => Err(RoadErr::Unknown),
    }
}

fn check_call_args(p: Primitive, args: &[Arg]) -> Result<(), String> {
    let formals = p.formals();
    if args.len() != formals.len() {
        return Err(format!(
            "{} takes {} argument(s), got {}",
            p.as_str(),
            formals.len(),
            args.len()
        ));
    }
    let mut seen_keyword = false;
    for (i, a) in args.iter().enumerate() {
        match &a.keyword {
            Some(k) => {
                seen_keyword = true;
                if !formals.contains(&k.as_str()) {
                    return Err(format!("{} has no parameter `{k}`", p.as_str()));
                }
                if args[..i].iter().any(|b| b.keyword.as_deref() == Some(k)) {
                    return Err(format!("duplicate argument `{k}`"));
                }
            }
            None if seen_keyword => return Err("positional argument after keyword argument".into()),
            None => {}
        }
    }
    for f in formals {
        let v = BehaviorCall {
            primitive: p,
            args: args.to_vec(),
        };
        match (f, v.arg(f)) {
            (&"target", Some(Expr::Ego)) if p == Primitive::Crossing => {}
            (&"target", _) if p == Primitive::Crossing => {
                return Err("CrossingBehavior expects `ego` as its first argument".into())
            }
            (_, Some(Expr::Number(_)) | Some(Expr::Param { .. })) => {}
            (_, _) => return Err(format!("argument `{f}` must be a number or parameter")),
        }
    }
    Ok(())
}

fn check_shape(ast: &SnippetAst, lines: &[Line]) -> Result<(), DslError> {
    let line_of = |pred: &dyn Fn(&Line) -> bool| lines.iter().find(|l| pred(l)).map(|l| l.number).unwrap_or(1);
    let count = |f: &dyn Fn(&Statement) -> bool| ast.statements.iter().filter(|s| f(s)).count();
    let first_word =
        |w: &'static str| move |l: &Line| matches!(l.tokens.first(), Some(Token { tok: Tok::Ident(s), .. }) if s == w);
    let mut names: Vec<&str> = Vec::new();
    for p in &ast.params {
        if names.contains(&p.name.as_str()) {
            let name = p.name.clone();
            return Err(DslError::syntax(
                line_of(&|l: &Line| l.tokens.get(1).is_some_and(|t| t.tok == Tok::Ident(name.clone()))),
                1,
                format!("parameter `{}` declared twice", p.name),
            ));
        }
        names.push(&p.name);
    }
    let (required, what): (&dyn Fn(&Statement) -> bool, &str) = match ast.kind {
        ComponentKind::Behavior => (&|s| matches!(s, Statement::Behavior { .. }), "behavior"),
        ComponentKind::Geometry => (&|s| matches!(s, Statement::Road(_)), "road"),
        ComponentKind::SpawnPosition => (&|s| matches!(s, Statement::Spawn(_)), "spawn"),
    };
    match count(required) {
        1 => {}
        0 => {
            return Err(DslError::syntax(
                lines.last().map(|l| l.number).unwrap_or(1),
                1,
                format!("{} snippet needs one `{what}` statement", ast.kind),
            ))
        }
        _ => {
            return Err(DslError::syntax(
                lines
                    .iter()
                    .filter(|l| {
                        first_word(match what {
                            "behavior" => "behavior",
                            "road" => "road",
                            _ => "spawn",
                        })(l)
                    })
                    .nth(1)
                    .map(|l| l.number)
                    .unwrap_or(1),
                1,
                format!("duplicate `{what}` statement"),
            ))
        }
    }
    if count(&|s| matches!(s, Statement::Agent(_))) > 1 {
        return Err(DslError::syntax(
            line_of(&first_word("agent")),
            1,
            "duplicate `agent` statement",
        ));
    }
    if count(&|s| matches!(s, Statement::Route(_))) > 1 {
        return Err(DslError::syntax(
            line_of(&first_word("route")),
            1,
            "duplicate `route` statement",
        ));
    }
    Ok(())
}
