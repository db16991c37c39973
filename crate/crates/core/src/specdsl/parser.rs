use std::collections::BTreeMap;

use super::lexer::{lex, Spanned, Tok};
use super::{ParseError, Policy, PolicyDecl, SpecDocument, TableDecl};
use crate::algebra::{AggFunc, AggItem, Cond, Expr, Operand, Query};
use crate::align::ViewDef;
use crate::model::{KeyAttr, KeyType, KeyValue};

const OPS: &[&str] = &[
    "select", "projaway", "rename", "derive", "agg", "shift", "coalesce",
];

pub struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    params: BTreeMap<String, f64>,
    overrides: &'a BTreeMap<String, f64>,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    pub fn new(src: &str, overrides: &'a BTreeMap<String, f64>) -> PResult<Self> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            params: BTreeMap::new(),
            overrides,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> PResult<T> {
        let s = &self.toks[self.pos];
        Err(ParseError {
            line: s.line,
            col: s.col,
            expected: expected.iter().map(|e| e.to_string()).collect(),
            found: s.tok.describe(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == w)
    }

    fn sym(&mut self, s: &'static str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("`{s}`")])
        }
    }

    fn word(&mut self, w: &str) -> PResult<()> {
        if self.is_word(w) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("`{w}`")])
        }
    }

    fn name(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail(&["a name"]),
        }
    }

    fn names(&mut self, close: &'static str) -> PResult<Vec<String>> {
        let mut out = Vec::new();
        if self.is_sym(close) {
            return Ok(out);
        }
        out.push(self.name()?);
        while self.is_sym(",") {
            self.bump();
            out.push(self.name()?);
        }
        Ok(out)
    }

    fn param(&mut self) -> PResult<f64> {
        let Tok::Param(p) = self.peek().clone() else {
            return self.fail(&["a parameter"]);
        };
        match self.params.get(&p).copied() {
            Some(v) => {
                self.bump();
                Ok(v)
            }
            None => self.fail(&["a parameter defined earlier by `set`"]),
        }
    }

    fn number(&mut self) -> PResult<f64> {
        let neg = self.is_sym("-");
        if neg {
            self.bump();
        }
        let v = match self.peek() {
            Tok::Int(i) => *i as f64,
            Tok::Real(r) => *r,
            Tok::Param(_) if !neg => return self.param(),
            _ => return self.fail(&["a number"]),
        };
        self.bump();
        Ok(if neg { -v } else { v })
    }

    pub fn document(&mut self) -> PResult<SpecDocument> {
        let mut doc = SpecDocument::default();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(doc),
                Tok::Ident(w) if w == "table" => doc.tables.push(self.table()?),
                Tok::Ident(w) if w == "policy" => doc.policies.push(self.policy()?),
                Tok::Ident(w) if w == "set" => {
                    let (k, v) = self.setting()?;
                    doc.settings.push((k, v));
                }
                Tok::Ident(w) if w == "view" => doc.views.push(self.view()?),
                _ => return self.fail(&["`table`", "`policy`", "`set`", "`view`"]),
            }
        }
    }

    fn table(&mut self) -> PResult<TableDecl> {
        self.word("table")?;
        let name = self.name()?;
        self.sym("(")?;
        let mut keys = vec![self.key_attr()?];
        while self.is_sym(",") {
            self.bump();
            keys.push(self.key_attr()?);
        }
        let mut values = Vec::new();
        if self.is_sym("|") {
            self.bump();
            values = self.names(")")?;
        }
        self.sym(")")?;
        self.sym(";")?;
        Ok(TableDecl { name, keys, values })
    }

    fn key_attr(&mut self) -> PResult<KeyAttr> {
        let name = self.name()?;
        self.sym(":")?;
        let ty: KeyType = match self.peek() {
            Tok::Ident(t) => match t.parse() {
                Ok(ty) => ty,
                Err(_) => return self.fail(&["a key type (text, int, decimal, date, week)"]),
            },
            _ => return self.fail(&["a key type (text, int, decimal, date, week)"]),
        };
        self.bump();
        Ok(KeyAttr::new(name, ty))
    }

    fn policy(&mut self) -> PResult<PolicyDecl> {
        self.word("policy")?;
        let table = self.name()?;
        self.sym(".")?;
        let column = self.name()?;
        self.sym("=")?;
        let policy = match self.peek() {
            Tok::Ident(w) if w == "exact" => Policy::Exact,
            Tok::Ident(w) if w == "error" => Policy::Error,
            Tok::Ident(w) if w == "null" => Policy::Null,
            Tok::Ident(w) if w == "guess" => {
                self.bump();
                self.sym("(")?;
                let c = self.number()?;
                if !self.is_sym(")") {
                    return self.fail(&["`)`"]);
                }
                Policy::Guess(c)
            }
            _ => return self.fail(&["`exact`", "`error`", "`null`", "`guess`"]),
        };
        self.bump();
        self.sym(";")?;
        Ok(PolicyDecl {
            table,
            column,
            policy,
        })
    }

    fn setting(&mut self) -> PResult<(String, f64)> {
        self.word("set")?;
        let name = self.name()?;
        self.sym("=")?;
        let written = self.number()?;
        self.sym(";")?;
        let v = self.overrides.get(&name).copied().unwrap_or(written);
        self.params.insert(name.clone(), v);
        Ok((name, v))
    }

    fn view(&mut self) -> PResult<ViewDef> {
        self.word("view")?;
        let name = self.name()?;
        self.sym(":=")?;
        let mut queries = vec![self.query()?];
        while self.is_word("fuse") {
            self.bump();
            queries.push(self.query()?);
        }
        self.sym(";")?;
        Ok(ViewDef { name, queries })
    }

    pub fn query(&mut self) -> PResult<Query> {
        let mut q = self.unit()?;
        loop {
            if self.is_word("join") {
                self.bump();
                q = q.join(self.unit()?);
            } else if self.is_word("minus") {
                self.bump();
                q = q.minus(self.unit()?);
            } else if self.is_word("dunion") {
                self.bump();
                self.sym("[")?;
                let d = self.name()?;
                self.sym("]")?;
                q = q.dunion(&d, self.unit()?);
            } else {
                return Ok(q);
            }
        }
    }

    fn unit(&mut self) -> PResult<Query> {
        if self.is_sym("(") {
            self.bump();
            let q = self.query()?;
            self.sym(")")?;
            return Ok(q);
        }
        let Tok::Ident(w) = self.peek().clone() else {
            return self.fail(&["a query"]);
        };
        if !OPS.contains(&w.as_str()) {
            if matches!(
                w.as_str(),
                "fuse" | "join" | "minus" | "dunion" | "view" | "table"
            ) {
                return self.fail(&["a query"]);
            }
            self.bump();
            return Ok(Query::Rel(w));
        }
        self.bump();
        self.sym("(")?;
        let build: Box<dyn FnOnce(Query) -> Query> = match w.as_str() {
            "select" => {
                let c = self.cond()?;
                Box::new(move |q| q.select(c))
            }
            "projaway" => {
                let attrs = self.names(")")?;
                Box::new(move |q| Query::ProjectAway(attrs, Box::new(q)))
            }
            "rename" => {
                let from = self.name()?;
                self.sym("->")?;
                let to = self.name()?;
                Box::new(move |q| q.rename(&from, &to))
            }
            "derive" => {
                let attr = self.name()?;
                self.sym(":=")?;
                let e = self.expr()?;
                Box::new(move |q| q.derive(&attr, e))
            }
            "agg" => {
                let keys = self.names(";")?;
                self.sym(";")?;
                let mut items = Vec::new();
                if !self.is_sym(")") {
                    items.push(self.agg_item()?);
                    while self.is_sym(",") {
                        self.bump();
                        items.push(self.agg_item()?);
                    }
                }
                let plain = items
                    .iter()
                    .all(|i| i.func == AggFunc::Sum && i.alias.is_none());
                if plain {
                    let values = items
                        .into_iter()
                        .map(|i| i.attr.expect("sum has an attribute"))
                        .collect();
                    Box::new(move |q| Query::Aggregate {
                        keys,
                        values,
                        input: Box::new(q),
                    })
                } else {
                    Box::new(move |q| Query::GroupBy {
                        keys,
                        items,
                        input: Box::new(q),
                    })
                }
            }
            "shift" => {
                let attr = self.name()?;
                let sign = if self.is_sym("+") {
                    1
                } else if self.is_sym("-") {
                    -1
                } else {
                    return self.fail(&["`+`", "`-`"]);
                };
                self.bump();
                let delta = match self.peek().clone() {
                    Tok::Int(i) => {
                        self.bump();
                        i
                    }
                    Tok::Param(_) => {
                        let v = self.param()?;
                        if v.fract() != 0.0 {
                            self.pos -= 1;
                            return self.fail(&["an integer parameter"]);
                        }
                        v as i64
                    }
                    _ => return self.fail(&["an integer", "a parameter"]),
                };
                Box::new(move |q| q.shift(&attr, sign * delta))
            }
            "coalesce" => {
                let attrs = self.names(")")?;
                Box::new(move |q| Query::Coalesce(attrs, Box::new(q)))
            }
            _ => unreachable!(),
        };
        self.sym(")")?;
        self.sym("(")?;
        let input = self.query()?;
        self.sym(")")?;
        Ok(build(input))
    }

    fn agg_item(&mut self) -> PResult<AggItem> {
        let func = match self.peek() {
            Tok::Ident(w) if w == "sum" => AggFunc::Sum,
            Tok::Ident(w) if w == "avg" => AggFunc::Avg,
            Tok::Ident(w) if w == "count" => AggFunc::Count,
            _ => return self.fail(&["`sum`", "`avg`", "`count`"]),
        };
        self.bump();
        let attr = if func == AggFunc::Count {
            None
        } else {
            Some(self.name()?)
        };
        let alias = if self.is_word("as") {
            self.bump();
            Some(self.name()?)
        } else {
            None
        };
        Ok(AggItem { func, attr, alias })
    }

    fn cond(&mut self) -> PResult<Cond> {
        let mut c = self.conj()?;
        while self.is_word("or") {
            self.bump();
            c = Cond::or(c, self.conj()?);
        }
        Ok(c)
    }

    fn conj(&mut self) -> PResult<Cond> {
        let mut c = self.neg()?;
        while self.is_word("and") {
            self.bump();
            c = Cond::and(c, self.neg()?);
        }
        Ok(c)
    }

    fn neg(&mut self) -> PResult<Cond> {
        if self.is_word("not") {
            self.bump();
            return Ok(Cond::not(self.neg()?));
        }
        if self.is_word("true") {
            self.bump();
            return Ok(Cond::True);
        }
        if self.is_sym("(") {
            self.bump();
            let c = self.cond()?;
            self.sym(")")?;
            return Ok(c);
        }
        let a = self.operand()?;
        let op = match self.peek() {
            Tok::Sym(s @ ("=" | "<" | ">" | "<=" | ">=" | "!=")) => *s,
            _ => return self.fail(&["a comparison"]),
        };
        self.bump();
        let b = self.operand()?;
        Ok(match op {
            "=" => Cond::Eq(a, b),
            "<" => Cond::Lt(a, b),
            ">" => Cond::Lt(b, a),
            "<=" => Cond::not(Cond::Lt(b, a)),
            ">=" => Cond::not(Cond::Lt(a, b)),
            _ => Cond::not(Cond::Eq(a, b)),
        })
    }

    fn operand(&mut self) -> PResult<Operand> {
        let bad = |p: &Self| p.fail::<Operand>(&["an attribute or literal"]);
        let lit = match self.peek().clone() {
            Tok::Ident(w) if !matches!(w.as_str(), "not" | "and" | "or" | "true") => {
                self.bump();
                return Ok(Operand::Attr(w));
            }
            Tok::Str(s) => KeyValue::Text(s),
            Tok::Int(i) => KeyValue::Integer(i),
            Tok::Real(r) => KeyValue::decimal(r),
            Tok::Sym("-") => match self.peek_at(1).clone() {
                Tok::Int(i) => {
                    self.bump();
                    KeyValue::Integer(-i)
                }
                Tok::Real(r) => {
                    self.bump();
                    KeyValue::decimal(-r)
                }
                _ => return bad(self),
            },
            Tok::Week(w) => match KeyValue::parse_as(KeyType::Week, &w) {
                Ok(v) => v,
                Err(_) => return self.fail(&["a valid ISO week"]),
            },
            Tok::Date(d) => match KeyValue::parse_as(KeyType::Date, &d) {
                Ok(v) => v,
                Err(_) => return self.fail(&["a valid date"]),
            },
            _ => return bad(self),
        };
        self.bump();
        Ok(Operand::Lit(lit))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.term()?;
        loop {
            if self.is_sym("+") {
                self.bump();
                e = Expr::add(e, self.term()?);
            } else if self.is_sym("-") {
                self.bump();
                e = Expr::sub(e, self.term()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut e = self.factor()?;
        loop {
            if self.is_sym("*") {
                self.bump();
                e = Expr::mul(e, self.factor()?);
            } else if self.is_sym("/") {
                self.bump();
                e = Expr::div(e, self.factor()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            Tok::Ident(a) => {
                self.bump();
                Ok(Expr::Attr(a))
            }
            Tok::Int(_) | Tok::Real(_) | Tok::Param(_) => Ok(Expr::Num(self.number()?)),
            Tok::Sym("-") if matches!(self.peek_at(1), Tok::Int(_) | Tok::Real(_)) => {
                Ok(Expr::Num(self.number()?))
            }
            _ => self.fail(&["an expression"]),
        }
    }
}
