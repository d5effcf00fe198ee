use super::lexer::{Lexer, Tok};
use super::{Diagnostic, Parsed, RuleFile, SourceMap, Span, KEYWORDS};
use crate::context::FactorId;
use crate::engine::{Action, Rule};
use crate::expressions::{Connective, Expr};
use crate::triggers::{RingerMode, Setting, SettingValue, Trigger};
use crate::values::{GeoPoint, Operator, Pattern, Value};

type PResult<T> = Result<T, Diagnostic>;

/// Hard limit on syntactic nesting, far above the semantic rule-depth limit
/// that `check` reports.
const MAX_SYNTAX_DEPTH: usize = 200;

/// Parses a whole rule file. Parsing stops at the first error.
pub fn parse(text: &str) -> Result<Parsed, Vec<Diagnostic>> {
    let mut p = Parser {
        lx: Lexer::new(text),
        map: SourceMap {
            text: text.to_string(),
            ..Default::default()
        },
        depth: 0,
    };
    match p.file() {
        Ok(file) => Ok(Parsed { file, map: p.map }),
        Err(d) => Err(vec![d]),
    }
}

struct Parser<'a> {
    lx: Lexer<'a>,
    map: SourceMap,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, span: Span, message: String) -> Diagnostic {
        Diagnostic::error(self.lx.source(), span, message)
    }

    fn peek(&mut self) -> PResult<(Tok, Span)> {
        self.lx.peek()
    }

    fn next(&mut self) -> PResult<(Tok, Span)> {
        self.lx.next_token()
    }

    fn peek_keyword(&mut self, kw: &str) -> PResult<bool> {
        Ok(matches!(self.peek()?.0, Tok::Ident(ref s) if s == kw))
    }

    fn unexpected(&self, tok: &Tok, span: Span, expected: &str) -> Diagnostic {
        self.error(
            span,
            format!("expected {expected}, found {}", tok.describe()),
        )
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<Span> {
        let (tok, span) = self.next()?;
        match tok {
            Tok::Ident(ref s) if s == kw => Ok(span),
            _ => Err(self.unexpected(&tok, span, &format!("`{kw}`"))),
        }
    }

    fn expect(&mut self, want: Tok) -> PResult<Span> {
        let (tok, span) = self.next()?;
        if tok == want {
            Ok(span)
        } else {
            Err(self.unexpected(&tok, span, &want.describe()))
        }
    }

    /// A non-keyword identifier; `dotted` allows `a.b` forms.
    fn name(&mut self, what: &str, dotted: bool) -> PResult<(String, Span)> {
        let (tok, span) = self.next()?;
        match tok {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => Err(self.error(
                span,
                format!("`{s}` is a keyword and cannot be used as {what}"),
            )),
            Tok::Ident(s) if !dotted && s.contains('.') => {
                Err(self.error(span, format!("{what} cannot contain `.`")))
            }
            Tok::Ident(s) => Ok((s, span)),
            other => Err(self.unexpected(&other, span, what)),
        }
    }

    fn enter(&mut self, span: Span) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_SYNTAX_DEPTH {
            return Err(self.error(span, "nesting is too deep".into()));
        }
        Ok(())
    }

    fn file(&mut self) -> PResult<RuleFile> {
        let mut file = RuleFile::default();
        loop {
            if self.peek_keyword("catalog")? {
                let (_, kw) = self.next()?;
                if file.catalog.is_some() {
                    return Err(self.error(kw, "duplicate `catalog` header".into()));
                }
                match self.next()? {
                    (Tok::Str(s), _) => file.catalog = Some(s),
                    (t, span) => return Err(self.unexpected(&t, span, "a quoted catalog path")),
                }
            } else if self.peek_keyword("tick")? {
                let (_, kw) = self.next()?;
                if file.tick.is_some() {
                    return Err(self.error(kw, "duplicate `tick` header".into()));
                }
                match self.next()? {
                    (Tok::Int(n), _) if n > 0 => file.tick = Some(n as u64),
                    (t, span) => {
                        return Err(self.unexpected(
                            &t,
                            span,
                            "a positive tick interval in milliseconds",
                        ))
                    }
                }
            } else {
                break;
            }
        }
        loop {
            let (tok, span) = self.peek()?;
            match tok {
                Tok::Eof => return Ok(file),
                Tok::Ident(ref s) if s == "rule" => file.rules.push(self.rule(false)?),
                _ => return Err(self.unexpected(&tok, span, "`rule`")),
            }
        }
    }

    fn rule(&mut self, nested: bool) -> PResult<Rule> {
        let start = self.expect_keyword("rule")?;
        self.enter(start)?;
        let (id, _) = self.name("a rule id", false)?;
        self.expect(Tok::Colon)?;
        self.expect_keyword("when")?;
        let mut leaves = Vec::new();
        let when = self.expr(0, &mut leaves)?;
        let mut i = 0;
        when.for_each_leaf(&mut |path, _| {
            self.map
                .leaves
                .insert((id.clone(), path.to_string()), leaves[i]);
            i += 1;
        });
        self.expect_keyword("then")?;
        let then = self.action(&id, "then")?;
        let otherwise = if self.peek_keyword("else")? {
            self.next()?;
            self.action(&id, "else")?
        } else {
            Action::nothing()
        };
        let end = if nested {
            self.expect_keyword("end")?
        } else {
            start
        };
        self.map.rules.insert(
            id.clone(),
            Span {
                start: start.start,
                end: end.end.max(start.end),
            },
        );
        self.depth -= 1;
        Ok(Rule {
            id,
            when,
            then,
            otherwise,
            enabled: true,
        })
    }

    fn action(&mut self, rule_id: &str, branch: &'static str) -> PResult<Action> {
        let (tok, span) = self.peek()?;
        let Tok::Ident(kw) = tok else {
            return Err(self.unexpected(&tok, span, "an action"));
        };
        if kw == "rule" {
            return Ok(Action::Rule(Box::new(self.rule(true)?)));
        }
        self.next()?;
        let trigger = match kw.as_str() {
            "nothing" => Trigger::Nothing,
            "set" => self.set_action()?,
            "play" => Trigger::Play { sound: self.name("a sound id", true)?.0 },
            "call" => {
                let (callback, span) = self.name("a callback id", true)?;
                self.map.calls.insert((rule_id.to_string(), branch), span);
                Trigger::Call { callback }
            }
            "emit" => {
                let (channel, _) = self.name("a channel name", true)?;
                let (payload, _) = self.lx.json()?;
                Trigger::Emit { channel, payload }
            }
            "vibrate" => {
                let open = self.expect(Tok::LBracket)?;
                let mut pattern = Vec::new();
                loop {
                    match self.next()? {
                        (Tok::Int(n), span) => {
                            if n <= 0 || n > u32::MAX as i64 {
                                return Err(self.error(span, "vibration durations must be positive milliseconds".into()));
                            }
                            pattern.push(n as u32);
                        }
                        (t, span) => return Err(self.unexpected(&t, span, "a duration in milliseconds")),
                    }
                    match self.next()? {
                        (Tok::Comma, _) => continue,
                        (Tok::RBracket, _) => break,
                        (t, span) => return Err(self.unexpected(&t, span, "`,` or `]`")),
                    }
                }
                if pattern.is_empty() {
                    return Err(self.error(open, "empty vibration pattern".into()));
                }
                Trigger::Vibrate { pattern }
            }
            _ => {
                return Err(self.error(
                    span,
                    format!("expected an action (set, play, vibrate, emit, call, nothing, rule), found `{kw}`"),
                ))
            }
        };
        Ok(Action::Trigger(trigger))
    }

    fn set_action(&mut self) -> PResult<Trigger> {
        let (name, name_span) = self.name("a setting name", false)?;
        let setting = Setting::parse(&name).ok_or_else(|| {
            let known: Vec<&str> = Setting::ALL.iter().map(|s| s.name()).collect();
            self.error(
                name_span,
                format!("unknown setting `{name}` (known: {})", known.join(", ")),
            )
        })?;
        self.expect(Tok::Assign)?;
        let (tok, span) = self.next()?;
        let value = match (&tok, setting) {
            (Tok::Ident(s), Setting::Ringer) => RingerMode::parse(s)
                .map(SettingValue::Ringer)
                .ok_or_else(|| {
                    self.error(
                        span,
                        format!("ringer must be normal, vibrate or silent, not `{s}`"),
                    )
                })?,
            (Tok::Ident(s), _) if s == "true" || s == "false" => SettingValue::Bool(s == "true"),
            (Tok::Float(f), _) => SettingValue::Level(*f),
            (Tok::Int(i), _) => SettingValue::Level(*i as f64),
            _ => return Err(self.unexpected(&tok, span, "a setting value")),
        };
        if !setting.admits(&value) {
            return Err(self.error(
                span,
                format!("setting `{setting}` cannot take value `{value}`"),
            ));
        }
        Ok(Trigger::Set { setting, value })
    }

    /// Precedence climbing over binary connectives.
    fn expr(&mut self, min_prec: u8, leaves: &mut Vec<Span>) -> PResult<Expr> {
        let mut lhs = self.unary(leaves)?;
        loop {
            let (tok, _) = self.peek()?;
            let op = match tok {
                Tok::Ident(ref s) => Connective::from_keyword(s),
                _ => None,
            };
            match op {
                Some(op) if op.precedence() >= min_prec => {
                    self.next()?;
                    let rhs = self.expr(op.precedence() + 1, leaves)?;
                    lhs = Expr::binary(op, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self, leaves: &mut Vec<Span>) -> PResult<Expr> {
        let (tok, span) = self.peek()?;
        self.enter(span)?;
        let e = match tok {
            Tok::Ident(ref s) if s == "not" => {
                self.next()?;
                Expr::not(self.unary(leaves)?)
            }
            Tok::LParen => {
                self.next()?;
                let inner = self.expr(0, leaves)?;
                self.expect(Tok::RParen)?;
                inner
            }
            _ => {
                let (stmt, span) = self.statement()?;
                leaves.push(span);
                stmt
            }
        };
        self.depth -= 1;
        Ok(e)
    }

    fn statement(&mut self) -> PResult<(Expr, Span)> {
        let (tok, span) = self.next()?;
        let factor: FactorId = match &tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => s.parse().map_err(|_| {
                self.error(
                    span,
                    format!("`{s}` is not a factor id (expected `group.name`)"),
                )
            })?,
            _ => return Err(self.unexpected(&tok, span, "a factor, `not` or `(`")),
        };
        let (op_tok, op_span) = self.next()?;
        let op = match op_tok {
            Tok::Cmp(c) => {
                let lit = self.literal()?;
                match c {
                    "==" => Operator::Eq(lit),
                    "!=" => Operator::NotEq(lit),
                    "<" => Operator::SmallerThan(lit),
                    "<=" => Operator::SmallerEq(lit),
                    ">" => Operator::GreaterThan(lit),
                    _ => Operator::GreaterEq(lit),
                }
            }
            Tok::Ident(ref s) if s == "in" => {
                let open = self.expect(Tok::LBracket)?;
                let lo = self.number()?;
                self.expect(Tok::Comma)?;
                let hi = self.number()?;
                let close = self.expect(Tok::RBracket)?;
                Operator::in_range(lo, hi).map_err(|e| {
                    self.error(
                        Span {
                            start: open.start,
                            end: close.end,
                        },
                        e.to_string(),
                    )
                })?
            }
            Tok::Ident(ref s) if s == "matches" => {
                let (src, re_span) = self.lx.regex()?;
                Operator::Matches(
                    Pattern::new(&src).map_err(|e| self.error(re_span, e.to_string()))?,
                )
            }
            Tok::Ident(ref s) if s == "within" => {
                let (dist_tok, dist_span) = self.next()?;
                let radius = match dist_tok {
                    Tok::Int(i) => i as f64,
                    Tok::Float(f) => f,
                    t => return Err(self.unexpected(&t, dist_span, "a distance in meters")),
                };
                self.expect_keyword("of")?;
                let (center, _) = self.geo()?;
                Operator::within(center, radius)
                    .map_err(|e| self.error(dist_span, e.to_string()))?
            }
            t => {
                return Err(self.unexpected(
                    &t,
                    op_span,
                    "a comparison, `in`, `matches` or `within`",
                ))
            }
        };
        let end = self.lx.peek().map(|(_, s)| s.start).unwrap_or(span.end);
        let text_end = self.lx.source()[..end].trim_end().len();
        Ok((
            Expr::stmt(factor, op),
            Span {
                start: span.start,
                end: text_end.max(span.end),
            },
        ))
    }

    fn number(&mut self) -> PResult<Value> {
        match self.next()? {
            (Tok::Int(i), _) => Ok(Value::Int(i)),
            (Tok::Float(f), _) => Ok(Value::Float(f)),
            (t, span) => Err(self.unexpected(&t, span, "a number")),
        }
    }

    fn geo(&mut self) -> PResult<(GeoPoint, Span)> {
        let open = self.expect(Tok::LParen)?;
        let lat = self.number()?;
        self.expect(Tok::Comma)?;
        let lon = self.number()?;
        let close = self.expect(Tok::RParen)?;
        let span = Span {
            start: open.start,
            end: close.end,
        };
        let as_f = |v: Value| match v {
            Value::Int(i) => i as f64,
            Value::Float(f) => f,
            _ => unreachable!("number() yields numerics"),
        };
        GeoPoint::new(as_f(lat), as_f(lon))
            .map(|g| (g, span))
            .map_err(|e| self.error(span, e.to_string()))
    }

    fn literal(&mut self) -> PResult<Value> {
        let (tok, span) = self.peek()?;
        match tok {
            Tok::LParen => Ok(Value::Geo(self.geo()?.0)),
            Tok::Int(_) | Tok::Float(_) => self.number(),
            Tok::Str(s) => {
                self.next()?;
                Ok(Value::Text(s))
            }
            Tok::Ident(ref s) if s == "true" || s == "false" => {
                self.next()?;
                Ok(Value::Bool(s == "true"))
            }
            t => Err(self.unexpected(&t, span, "a literal")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expressions::Connective;

    fn id(s: &str) -> FactorId {
        s.parse().unwrap()
    }

    fn one_rule(src: &str) -> Rule {
        let mut parsed = parse(src).unwrap_or_else(|d| panic!("{src}: {d:?}"));
        assert_eq!(parsed.file.rules.len(), 1);
        parsed.file.rules.remove(0)
    }

    fn when(expr: &str) -> Expr {
        one_rule(&format!("rule r: when {expr} then nothing")).when
    }

    fn s(name: &str) -> Expr {
        Expr::stmt(id(&format!("f.{name}")), Operator::Eq(Value::Bool(true)))
    }

    #[test]
    fn flip_to_mute() {
        let rule = one_rule("rule flip_to_mute: when light.level < 5.0 then set ringer = vibrate else set ringer = normal");
        assert_eq!(rule.id, "flip_to_mute");
        assert_eq!(
            rule.when,
            Expr::stmt(id("light.level"), Operator::SmallerThan(Value::Float(5.0)))
        );
        assert_eq!(
            rule.then,
            Action::Trigger(Trigger::Set {
                setting: Setting::Ringer,
                value: SettingValue::Ringer(RingerMode::Vibrate)
            })
        );
        assert_eq!(
            rule.otherwise,
            Action::Trigger(Trigger::Set {
                setting: Setting::Ringer,
                value: SettingValue::Ringer(RingerMode::Normal)
            })
        );
    }

    #[test]
    fn power_ok_or() {
        let rule = one_rule(
            "rule power_ok: when battery.level > 50.0 or battery.plugged == true then nothing",
        );
        assert_eq!(
            rule.when,
            Expr::binary(
                Connective::Or,
                Expr::stmt(
                    id("battery.level"),
                    Operator::GreaterThan(Value::Float(50.0))
                ),
                Expr::stmt(id("battery.plugged"), Operator::Eq(Value::Bool(true))),
            )
        );
        assert_eq!(rule.otherwise, Action::nothing());
    }

    #[test]
    fn precedence_and_associativity() {
        use Connective::*;
        let (a, b, c) = (s("a"), s("b"), s("c"));
        assert_eq!(
            when("f.a == true or f.b == true and f.c == true"),
            Expr::binary(Or, a.clone(), Expr::binary(And, b.clone(), c.clone()))
        );
        assert_eq!(
            when("f.a == true xor f.b == true nand f.c == true"),
            Expr::binary(Xor, a.clone(), Expr::binary(Nand, b.clone(), c.clone()))
        );
        assert_eq!(
            when("f.a == true nor f.b == true or f.c == true"),
            Expr::binary(Or, Expr::binary(Nor, a.clone(), b.clone()), c.clone())
        );
        assert_eq!(
            when("not f.a == true and f.b == true"),
            Expr::binary(And, Expr::not(a.clone()), b.clone())
        );
        assert_eq!(
            when("f.a == true and (f.b == true xnor f.c == true)"),
            Expr::binary(And, a.clone(), Expr::binary(Xnor, b.clone(), c.clone()))
        );
        assert_eq!(when("((f.a == true))"), a);
    }

    #[test]
    fn statement_forms() {
        assert_eq!(
            when("clock.hour in [8, 18]"),
            Expr::stmt(
                id("clock.hour"),
                Operator::in_range(Value::Int(8), Value::Int(18)).unwrap()
            )
        );
        assert_eq!(
            when(r"transport.mode matches /^(bus|train)$/"),
            Expr::stmt(
                id("transport.mode"),
                Operator::Matches(Pattern::new("^(bus|train)$").unwrap())
            )
        );
        assert_eq!(
            when("location.position within 150.0 of (48.15, 11.58)"),
            Expr::stmt(
                id("location.position"),
                Operator::within(GeoPoint::new(48.15, 11.58).unwrap(), 150.0).unwrap()
            )
        );
        assert_eq!(
            when(r#"orientation.pose != "upright""#),
            Expr::stmt(
                id("orientation.pose"),
                Operator::NotEq(Value::Text("upright".into()))
            )
        );
    }

    #[test]
    fn actions_and_nesting() {
        let src = r#"
            catalog "catalog.json"
            tick 500
            # comment
            rule outer:
              when light.level < 5.0
              then rule inner:
                when battery.level > 20
                then vibrate [200, 100, 200]
                else emit steering {"angle": 12.5}
              end
              else call launch.camera
            rule second: when touch.tap == true then play chime
        "#;
        let parsed = parse(src).unwrap();
        assert_eq!(parsed.file.catalog.as_deref(), Some("catalog.json"));
        assert_eq!(parsed.file.tick, Some(500));
        assert_eq!(parsed.file.rules.len(), 2);
        let Action::Rule(inner) = &parsed.file.rules[0].then else {
            panic!("nested")
        };
        assert_eq!(inner.id, "inner");
        assert_eq!(
            inner.then,
            Action::Trigger(Trigger::Vibrate {
                pattern: vec![200, 100, 200]
            })
        );
        assert!(parsed.map.rules.contains_key("inner"));
        assert!(parsed
            .map
            .leaves
            .contains_key(&("inner".to_string(), "$".to_string())));
    }

    #[test]
    fn missing_literal_is_located() {
        let src = "rule bad: when light.level < then nothing";
        let d = &parse(src).unwrap_err()[0];
        assert_eq!((d.line, d.column), (1, 30));
        assert_eq!(&src[d.span.start..d.span.end], "then");
        assert!(d.message.contains("expected a literal"), "{}", d.message);
    }

    #[test]
    fn syntax_errors() {
        let cases = [
            "rule x: when light.level < 5.0",
            "rule x: when light.level < 5.0 then set volume = 3",
            "rule x: when light.level < 5.0 then set ringer = loud",
            "rule x: when light.level < 5.0 then set screen_brightness = 2.0",
            "rule x: when light.level in [10, 1] then nothing",
            "rule x: when light.level matches /\\d+/ then nothing",
            "rule x: when light then nothing",
            "rule and: when a.b == 1 then nothing",
            "rule x: when a.b == 1 then vibrate [0]",
            "rule x: when a.b == 1 then emit ch {bad json}",
            "rule x: when a.b == 1 then rule y: when a.c == 1 then nothing",
            "tick 0 rule x: when a.b == 1 then nothing",
            "Rule x: when a.b == 1 then nothing",
            "rule x: when (a.b == 1 then nothing",
            "",
        ];
        for src in cases.iter().take(cases.len() - 1) {
            let diags = parse(src).unwrap_err();
            assert_eq!(diags.len(), 1, "{src}");
            let d = &diags[0];
            assert!(
                d.span.start <= src.len() && d.span.end <= src.len(),
                "{src}: {d:?}"
            );
            assert!(d.line >= 1 && d.column >= 1);
        }
        assert!(parse("").unwrap().file.rules.is_empty());
    }

    #[test]
    fn pathological_nesting_is_rejected_not_overflowed() {
        let src = format!(
            "rule x: when {}a.b == 1{} then nothing",
            "(".repeat(5000),
            ")".repeat(5000)
        );
        assert!(parse(&src).is_err());
    }
}
