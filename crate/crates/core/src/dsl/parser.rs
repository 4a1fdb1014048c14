use super::lexer::{tokenize, Tok, Token};
use super::{
    AggFn, BinOp, Datasource, Diagnostic, Entity, Expr, Field, FieldKind, KpiDef, KpiLocs, Loc,
    Model, Target, ValidationReport,
};

const TYPE_NAMES: &str = "string, int, float, bool, datetime, enum(...)";

/// Parses `.cbm` source into a [`Model`]. Declaration order is preserved
/// within each category. Lexical errors are all reported; parsing stops at the
/// first syntax error.
pub fn parse_model(text: &str) -> Result<Model, ValidationReport> {
    let tokens = tokenize(text).map_err(|diagnostics| ValidationReport { diagnostics })?;
    let mut parser = Parser { tokens, pos: 0 };
    parser.model().map_err(|d| ValidationReport {
        diagnostics: vec![d],
    })
}

/// Byte-oriented entry point: invalid UTF-8 is reported as a lexical error.
pub fn parse_model_bytes(bytes: &[u8]) -> Result<Model, ValidationReport> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_model(text),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let prefix = std::str::from_utf8(prefix).unwrap_or_default();
            let line = prefix.matches('\n').count() as u32 + 1;
            let column = prefix.rsplit('\n').next().unwrap_or("").chars().count() as u32 + 1;
            Err(ValidationReport {
                diagnostics: vec![Diagnostic::error(
                    "E-LEX",
                    Loc::new(line, column),
                    "input is not valid UTF-8",
                )],
            })
        }
    }
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn next(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, loc: Loc, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::error("E-SYNTAX", loc, msg))
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<Loc> {
        let t = self.next();
        if t.tok == want {
            Ok(t.loc)
        } else {
            self.error(t.loc, format!("expected {what}, found {}", t.tok.describe()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Loc)> {
        let t = self.next();
        match t.tok {
            Tok::Ident(name) => Ok((name, t.loc)),
            other => self.error(t.loc, format!("expected {what}, found {}", other.describe())),
        }
    }

    fn at_ident(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(w) if w == word)
    }

    fn skip_semi(&mut self) {
        if self.peek().tok == Tok::Semi {
            self.next();
        }
    }

    fn model(&mut self) -> PResult<Model> {
        let mut model = Model::default();
        loop {
            let t = self.next();
            match &t.tok {
                Tok::Eof => return Ok(model),
                Tok::Ident(kw) if kw == "entity" => model.entities.push(self.entity(t.loc)?),
                Tok::Ident(kw) if kw == "datasource" => {
                    model.datasources.push(self.datasource(t.loc)?)
                }
                Tok::Ident(kw) if kw == "kpi" => model.kpis.push(self.kpi()?),
                other => {
                    return self.error(
                        t.loc,
                        format!(
                            "expected `entity`, `datasource` or `kpi`, found {}",
                            other.describe()
                        ),
                    )
                }
            }
            self.skip_semi();
        }
    }

    fn entity(&mut self, loc: Loc) -> PResult<Entity> {
        let (name, _) = self.ident("entity name")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut fields = Vec::new();
        loop {
            if self.peek().tok == Tok::RBrace {
                self.next();
                break;
            }
            fields.push(self.field()?);
            self.skip_semi();
        }
        Ok(Entity { name, fields, loc })
    }

    fn field(&mut self) -> PResult<Field> {
        let (name, loc) = self.ident("field name or `}`")?;
        self.expect(Tok::Colon, "`:`")?;
        let kind = self.field_kind()?;
        let mut unit = None;
        if self.at_ident("unit") {
            self.next();
            let t = self.next();
            match t.tok {
                Tok::Str(s) => unit = Some(s),
                other => {
                    return self.error(
                        t.loc,
                        format!("expected unit string, found {}", other.describe()),
                    )
                }
            }
        }
        let optional = if self.at_ident("optional") {
            self.next();
            true
        } else {
            false
        };
        Ok(Field {
            name,
            kind,
            unit,
            optional,
            loc,
        })
    }

    fn field_kind(&mut self) -> PResult<FieldKind> {
        let t = self.next();
        let word = match t.tok {
            Tok::Ident(w) => w,
            other => {
                return self.error(
                    t.loc,
                    format!("expected a type ({TYPE_NAMES}), found {}", other.describe()),
                )
            }
        };
        Ok(match word.as_str() {
            "string" => FieldKind::String,
            "int" => FieldKind::Int,
            "float" => FieldKind::Float,
            "bool" => FieldKind::Bool,
            "datetime" => FieldKind::Datetime,
            "enum" => {
                self.expect(Tok::LParen, "`(` after `enum`")?;
                let mut values = vec![self.ident("enum value")?.0];
                while self.peek().tok == Tok::Comma {
                    self.next();
                    values.push(self.ident("enum value")?.0);
                }
                self.expect(Tok::RParen, "`,` or `)`")?;
                FieldKind::Enum(values)
            }
            other => {
                return self.error(
                    t.loc,
                    format!("unknown type `{other}`; expected one of {TYPE_NAMES}"),
                )
            }
        })
    }

    fn datasource(&mut self, loc: Loc) -> PResult<Datasource> {
        let (name, _) = self.ident("datasource name")?;
        self.expect(Tok::Colon, "`:`")?;
        let (entity, entity_loc) = self.ident("entity name")?;
        Ok(Datasource {
            name,
            entity,
            loc,
            entity_loc,
        })
    }

    fn kpi(&mut self) -> PResult<KpiDef> {
        let (name, name_loc) = self.ident("KPI name")?;
        let open = self.expect(Tok::LBrace, "`{`")?;
        let mut locs = KpiLocs {
            name: name_loc,
            ..KpiLocs::default()
        };
        let mut source = None;
        let mut expr = None;
        let mut window = None;
        let mut unit = None;
        let mut target = None;
        let mut baseline = None;
        let mut group_by = None;

        loop {
            if self.peek().tok == Tok::RBrace {
                self.next();
                break;
            }
            let (attr, attr_loc) = self.ident("KPI attribute or `}`")?;
            self.expect(Tok::Colon, "`:`")?;
            let duplicate = match attr.as_str() {
                "source" => {
                    locs.source = self.peek().loc;
                    source.replace(self.ident("datasource name")?.0).is_some()
                }
                "expr" => expr.replace(self.expr()?).is_some(),
                "window" => {
                    let t = self.next();
                    locs.window = t.loc;
                    match t.tok {
                        Tok::Duration(d) => window.replace(d).is_some(),
                        other => {
                            return self.error(
                                t.loc,
                                format!(
                                    "expected a duration such as `30d`, found {}",
                                    other.describe()
                                ),
                            )
                        }
                    }
                }
                "unit" => {
                    let t = self.next();
                    match t.tok {
                        Tok::Str(s) => unit.replace(s).is_some(),
                        other => {
                            return self.error(
                                t.loc,
                                format!("expected unit string, found {}", other.describe()),
                            )
                        }
                    }
                }
                "target" => {
                    let t = self.next();
                    let cmp = match t.tok {
                        Tok::Cmp(c) => c,
                        other => {
                            return self.error(
                                t.loc,
                                format!(
                                    "expected comparator (<=, >=, <, >, ==), found {}",
                                    other.describe()
                                ),
                            )
                        }
                    };
                    let bound = self.signed_number()?;
                    target.replace(Target { cmp, bound }).is_some()
                }
                "baseline" => baseline.replace(self.signed_number()?).is_some(),
                "group_by" => {
                    locs.group_by = self.peek().loc;
                    group_by.replace(self.ident("field name")?.0).is_some()
                }
                other => {
                    return self.error(
                        attr_loc,
                        format!(
                            "unknown KPI attribute `{other}`; expected source, expr, window, unit, target, baseline or group_by"
                        ),
                    )
                }
            };
            if duplicate {
                return self.error(attr_loc, format!("attribute `{attr}` given twice"));
            }
            self.skip_semi();
        }

        let Some(source) = source else {
            return self.error(open, format!("KPI `{name}` is missing `source`"));
        };
        let Some(expr) = expr else {
            return self.error(open, format!("KPI `{name}` is missing `expr`"));
        };
        Ok(KpiDef {
            name,
            source,
            expr,
            window,
            unit,
            target,
            baseline,
            group_by,
            locs,
        })
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let negative = if self.peek().tok == Tok::Minus {
            self.next();
            true
        } else {
            false
        };
        let t = self.next();
        match t.tok {
            Tok::Number(n) => Ok(if negative { -n } else { n }),
            other => self.error(t.loc, format!("expected a number, found {}", other.describe())),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        let t = self.next();
        match t.tok {
            Tok::Number(value) => Ok(Expr::Number { value }),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) if name == "count" => {
                self.expect(Tok::LParen, "`(` after `count`")?;
                self.expect(Tok::RParen, "`)`; count() takes no argument")?;
                Ok(Expr::Count)
            }
            Tok::Ident(name) => {
                let Some(func) = AggFn::from_name(&name) else {
                    return self.error(
                        t.loc,
                        format!(
                            "unknown aggregate `{name}`; expected sum, avg, min, max, first, last or count"
                        ),
                    );
                };
                self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
                let (field, _) = self.ident("field name")?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::Agg {
                    func,
                    field,
                    loc: t.loc,
                })
            }
            other => self.error(
                t.loc,
                format!("expected a number, aggregate or `(`, found {}", other.describe()),
            ),
        }
    }
}
