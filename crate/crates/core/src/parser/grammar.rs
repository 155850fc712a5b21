//! Recursive-descent parser.
//!
//! Precedence, loosest first: OR, AND, comparison, additive, multiplicative,
//! unary. GIVEN is left-associative on models. Inside `SELECT .. FROM t`,
//! a trailing WHERE filters the SELECT's output and a trailing GROUP BY is
//! rewritten into the GROUP .. BY .. AGGREGATING form.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Kw, Tok, Token};
use super::ParseError;
use crate::value::{Op, Value};

enum PErr {
    Syntax,
    Custom(ParseError),
}

type PResult<T> = Result<T, PErr>;

#[derive(Clone, Copy, Default)]
struct Flags {
    no_where: bool,
    no_as: bool,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    furthest: usize,
    expected: BTreeSet<String>,
}

pub fn parse_statement(src: &str) -> Result<Statement, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, furthest: 0, expected: BTreeSet::new() };
    p.statement().map_err(|e| p.finish_error(e))
}

impl Parser {
    fn finish_error(&self, e: PErr) -> ParseError {
        match e {
            PErr::Custom(e) => e,
            PErr::Syntax => {
                let t = &self.toks[self.furthest.min(self.toks.len() - 1)];
                ParseError {
                    message: format!("unexpected {}", t.tok.describe()),
                    line: t.span.line,
                    col: t.span.col,
                    expected: self.expected.iter().cloned().collect(),
                }
            }
        }
    }

    fn custom<T>(&self, span: Span, message: impl Into<String>) -> PResult<T> {
        Err(PErr::Custom(ParseError { message: message.into(), line: span.line, col: span.col, expected: Vec::new() }))
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn note(&mut self, what: &str) {
        if self.pos > self.furthest {
            self.furthest = self.pos;
            self.expected.clear();
        }
        if self.pos == self.furthest {
            self.expected.insert(what.to_string());
        }
    }

    fn fail<T>(&mut self, what: &str) -> PResult<T> {
        self.note(what);
        Err(PErr::Syntax)
    }

    fn is_kw(&self, kw: Kw) -> bool {
        *self.peek() == Tok::Kw(kw)
    }

    fn eat_kw(&mut self, kw: Kw) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            self.note(kw.text());
            false
        }
    }

    fn expect_kw(&mut self, kw: Kw) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(PErr::Syntax)
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.advance();
            true
        } else {
            self.note(&format!("'{s}'"));
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(PErr::Syntax)
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => self.fail("identifier"),
        }
    }

    fn is_word(&self, k: usize, word: &str) -> bool {
        matches!(self.peek_at(k), Tok::Ident(s) if s.eq_ignore_ascii_case(word))
    }

    // ---- statements ----

    fn statement(&mut self) -> PResult<Statement> {
        let query = self.query()?;
        let mut order_by = Vec::new();
        if self.is_word(0, "ORDER") && *self.peek_at(1) == Tok::Kw(Kw::By) {
            self.advance();
            self.advance();
            loop {
                let mut descending = false;
                if self.is_word(0, "ASC") || self.is_word(0, "DESC") {
                    descending = self.is_word(0, "DESC");
                    self.advance();
                }
                let column = self.ident()?;
                if self.is_word(0, "ASC") || self.is_word(0, "DESC") {
                    descending = self.is_word(0, "DESC");
                    self.advance();
                }
                order_by.push(OrderKey { column, descending });
                if !self.eat_sym(",") {
                    break;
                }
            }
        } else {
            self.note("ORDER BY");
        }
        let mut limit = None;
        if self.eat_kw(Kw::Limit) {
            match self.peek().clone() {
                Tok::Int(n) if n >= 0 => {
                    self.advance();
                    limit = Some(n as u64);
                }
                _ => return self.fail("non-negative integer"),
            }
        }
        self.eat_sym(";");
        if *self.peek() != Tok::Eof {
            return self.fail("end of input");
        }
        Ok(Statement { query, order_by, limit })
    }

    fn at_query_end(&self) -> bool {
        matches!(self.peek(), Tok::Eof | Tok::Kw(Kw::Limit))
            || self.is_sym(";")
            || (self.is_word(0, "ORDER") && *self.peek_at(1) == Tok::Kw(Kw::By))
    }

    fn query(&mut self) -> PResult<Query> {
        let start = self.pos;
        match self.table(Flags::default()) {
            Ok(t) if self.at_query_end() => return Ok(Query::Table(t)),
            Err(PErr::Custom(e)) => return Err(PErr::Custom(e)),
            _ => {}
        }
        self.pos = start;
        let e = self.scalar()?;
        if !self.at_query_end() {
            return self.fail("end of input");
        }
        Ok(Query::Scalar(e))
    }

    // ---- tables ----

    fn table(&mut self, flags: Flags) -> PResult<TableExpr> {
        if self.is_kw(Kw::With) {
            return self.with();
        }
        self.note("WITH");
        let mut t = self.postfix(flags)?;
        while self.eat_kw(Kw::Union) {
            let r = self.postfix(flags)?;
            let span = t.span.to(r.span);
            t = TableExpr::new(TableKind::Union(Box::new(t), Box::new(r)), span);
        }
        Ok(t)
    }

    fn with(&mut self) -> PResult<TableExpr> {
        let start = self.span();
        self.expect_kw(Kw::With)?;
        let binding = match (self.peek().clone(), self.peek_at(1).clone()) {
            (Tok::Ident(_), Tok::Kw(Kw::Given)) => Binding::Model(self.model()?),
            (Tok::Ident(name), Tok::Kw(Kw::As)) => {
                let span = self.span();
                self.advance();
                Binding::Ident(name, span)
            }
            _ => Binding::Table(self.table(Flags { no_as: true, no_where: false })?),
        };
        self.expect_kw(Kw::As)?;
        let name = self.ident()?;
        self.expect_sym(":")?;
        let body = self.table(Flags::default())?;
        let span = start.to(body.span);
        Ok(TableExpr::new(TableKind::With { binding: Box::new(binding), name, body: Box::new(body) }, span))
    }

    fn postfix(&mut self, flags: Flags) -> PResult<TableExpr> {
        let mut t = self.primary_table()?;
        loop {
            let start = t.span;
            if self.eat_kw(Kw::Join) {
                let r = self.primary_table()?;
                let span = start.to(r.span);
                t = TableExpr::new(TableKind::Join(Box::new(t), Box::new(r)), span);
            } else if self.is_kw(Kw::Generative) {
                self.advance();
                self.expect_kw(Kw::Join)?;
                let m = self.model()?;
                let span = start.to(m.span);
                t = TableExpr::new(TableKind::GenerativeJoin { table: Box::new(t), model: m }, span);
            } else if !flags.no_where && self.is_kw(Kw::Where) {
                self.advance();
                let e = self.scalar()?;
                let span = start.to(e.span);
                t = TableExpr::new(TableKind::Where(Box::new(t), e), span);
            } else if self.eat_kw(Kw::Duplicate) {
                let e = self.additive()?;
                self.expect_kw(Kw::Times)?;
                let span = start.to(self.prev_span());
                t = TableExpr::new(TableKind::Duplicate(Box::new(t), e), span);
            } else if !flags.no_as && self.is_kw(Kw::As) && matches!(self.peek_at(1), Tok::Ident(_)) {
                self.advance();
                let name = self.ident()?;
                let span = start.to(self.prev_span());
                t = TableExpr::new(TableKind::Rename(Box::new(t), name), span);
            } else {
                if !flags.no_where {
                    self.note("WHERE");
                }
                self.note("GENERATIVE");
                self.note("DUPLICATE");
                return Ok(t);
            }
        }
    }

    fn primary_table(&mut self) -> PResult<TableExpr> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(TableExpr::new(TableKind::Id(name), start))
            }
            Tok::Sym("(") => {
                self.advance();
                let t = self.table(Flags::default())?;
                self.expect_sym(")")?;
                Ok(t)
            }
            Tok::Kw(Kw::Select) => self.select(),
            Tok::Kw(Kw::Generate) => {
                self.advance();
                self.expect_kw(Kw::Under)?;
                let model = self.model()?;
                self.expect_kw(Kw::Limit)?;
                let limit = self.additive()?;
                let span = start.to(limit.span);
                Ok(TableExpr::new(TableKind::Generate { model, limit }, span))
            }
            Tok::Kw(Kw::Dedup) => {
                self.advance();
                let t = self.primary_table()?;
                let span = start.to(t.span);
                Ok(TableExpr::new(TableKind::Dedup(Box::new(t)), span))
            }
            Tok::Kw(Kw::Rename) => {
                self.advance();
                let t = self.table(Flags { no_as: true, no_where: false })?;
                self.expect_kw(Kw::As)?;
                let name = self.ident()?;
                Ok(TableExpr::new(TableKind::Rename(Box::new(t), name), start.to(self.prev_span())))
            }
            Tok::Kw(Kw::Group) => self.group(),
            _ => {
                for what in ["identifier", "'('", "SELECT", "GENERATE", "DEDUP", "RENAME", "GROUP"] {
                    self.note(what);
                }
                Err(PErr::Syntax)
            }
        }
    }

    fn group(&mut self) -> PResult<TableExpr> {
        let start = self.span();
        self.expect_kw(Kw::Group)?;
        let source = self.primary_table()?;
        self.expect_kw(Kw::By)?;
        self.expect_sym("[")?;
        let mut keys = Vec::new();
        if !self.eat_sym("]") {
            loop {
                let e = self.scalar()?;
                self.expect_kw(Kw::As)?;
                let name = self.ident()?;
                keys.push((e, name));
                if self.eat_sym("]") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        self.expect_kw(Kw::Aggregating)?;
        let mut aggs = Vec::new();
        while matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Sym("(") {
            let name_span = self.span();
            let fname = self.ident()?;
            let Some(agg) = Aggregate::from_name(&fname) else {
                return self.custom(name_span, format!("unknown aggregate {fname}"));
            };
            let (agg, arg) = self.agg_args(agg)?;
            self.expect_kw(Kw::As)?;
            let name = self.ident()?;
            aggs.push(AggItem { agg, arg, name });
            if !self.eat_sym(",") {
                break;
            }
        }
        let span = start.to(self.prev_span());
        Ok(TableExpr::new(TableKind::GroupBy { source: Box::new(source), keys, aggs }, span))
    }

    /// Parses `( * )`, `( DISTINCT e )` or `( e )` after an aggregate name.
    fn agg_args(&mut self, agg: Aggregate) -> PResult<(Aggregate, Option<ScalarExpr>)> {
        self.expect_sym("(")?;
        let out = if agg == Aggregate::Count && self.is_sym("*") {
            self.advance();
            (agg, None)
        } else if agg == Aggregate::Count && self.is_word(0, "DISTINCT") {
            self.advance();
            (Aggregate::CountDistinct, Some(self.scalar()?))
        } else {
            (agg, Some(self.scalar()?))
        };
        self.expect_sym(")")?;
        Ok(out)
    }

    fn select(&mut self) -> PResult<TableExpr> {
        let start = self.span();
        self.expect_kw(Kw::Select)?;
        let mut items = Vec::new();
        loop {
            items.push(self.select_item()?);
            if !self.eat_sym(",") {
                break;
            }
            if self.is_kw(Kw::From) {
                break;
            }
        }
        let from = if self.eat_kw(Kw::From) {
            Some(Box::new(self.table(Flags { no_where: true, no_as: false })?))
        } else {
            None
        };
        let filter = if self.eat_kw(Kw::Where) { Some(self.scalar()?) } else { None };
        let mut group_keys = None;
        if self.is_kw(Kw::Group) && *self.peek_at(1) == Tok::Kw(Kw::By) {
            self.advance();
            self.advance();
            let mut keys = vec![self.comparison()?];
            while self.eat_sym(",") || self.eat_kw(Kw::And) {
                keys.push(self.comparison()?);
            }
            group_keys = Some(keys);
        }
        let span = start.to(self.prev_span());
        let legacy = group_keys.is_some()
            || items.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_agg()));
        if legacy {
            let mut source = match from {
                Some(t) => *t,
                None => return self.custom(start, "aggregates need a FROM clause"),
            };
            if let Some(e) = filter {
                let s = source.span.to(e.span);
                source = TableExpr::new(TableKind::Where(Box::new(source), e), s);
            }
            return self.rewrite_group(items, source, group_keys.unwrap_or_default(), span);
        }
        let t = TableExpr::new(TableKind::Select { items, from }, span);
        Ok(match filter {
            Some(e) => {
                let s = span.to(e.span);
                TableExpr::new(TableKind::Where(Box::new(t), e), s)
            }
            None => t,
        })
    }

    fn rewrite_group(
        &mut self,
        items: Vec<SelectItem>,
        source: TableExpr,
        keys: Vec<ScalarExpr>,
        span: Span,
    ) -> PResult<TableExpr> {
        let mut named_keys = Vec::new();
        for (i, k) in keys.into_iter().enumerate() {
            let name = match &k.kind {
                ScalarKind::Col(c) => c.col.clone(),
                _ => format!("key{}", i + 1),
            };
            named_keys.push((k, name));
        }
        let mut aggs = Vec::new();
        let mut out_items = Vec::new();
        for item in items {
            let (expr, alias) = match item {
                SelectItem::Star { span, .. } => return self.custom(span, "SELECT * cannot be combined with GROUP BY"),
                SelectItem::Expr { expr, alias } => (expr, alias),
            };
            let top_name = match (&expr.kind, &alias) {
                (ScalarKind::Agg(..), Some(a)) => Some(a.clone()),
                _ => None,
            };
            let rewritten = replace_group_refs(expr, &named_keys, &mut aggs, top_name);
            out_items.push(SelectItem::Expr { expr: rewritten, alias });
        }
        let group = TableExpr::new(TableKind::GroupBy { source: Box::new(source), keys: named_keys, aggs }, span);
        Ok(TableExpr::new(TableKind::Select { items: out_items, from: Some(Box::new(group)) }, span))
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        let start = self.span();
        if self.eat_sym("*") {
            let except = self.except_list()?;
            return Ok(SelectItem::Star { except, span: start.to(self.prev_span()) });
        }
        let expr = self.scalar()?;
        let alias = if self.eat_kw(Kw::As) { Some(self.ident()?) } else { None };
        Ok(SelectItem::Expr { expr, alias })
    }

    fn except_list(&mut self) -> PResult<Vec<ColRef>> {
        if !self.eat_kw(Kw::Except) {
            return Ok(Vec::new());
        }
        if self.eat_sym("(") {
            let mut cols = vec![self.colref()?];
            while self.eat_sym(",") {
                cols.push(self.colref()?);
            }
            self.expect_sym(")")?;
            Ok(cols)
        } else {
            Ok(vec![self.colref()?])
        }
    }

    fn colref(&mut self) -> PResult<ColRef> {
        let start = self.span();
        let first = self.ident()?;
        if self.is_sym(".") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.advance();
            let col = self.ident()?;
            Ok(ColRef { qual: Some(first), col, span: start.to(self.prev_span()) })
        } else {
            Ok(ColRef { qual: None, col: first, span: start })
        }
    }

    // ---- models and conditions ----

    fn model(&mut self) -> PResult<ModelExpr> {
        let mut m = self.primary_model()?;
        while self.eat_kw(Kw::Given) {
            let c = self.event()?;
            let span = m.span.to(c.span);
            m = ModelExpr::new(ModelKind::Given(Box::new(m), c), span);
        }
        Ok(m)
    }

    fn primary_model(&mut self) -> PResult<ModelExpr> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(ModelExpr::new(ModelKind::Id(name), start))
            }
            Tok::Sym("(") => {
                self.advance();
                let m = self.model()?;
                self.expect_sym(")")?;
                Ok(m)
            }
            Tok::Kw(Kw::Rename) => {
                self.advance();
                let m = self.model()?;
                self.expect_kw(Kw::As)?;
                let name = self.ident()?;
                Ok(ModelExpr::new(ModelKind::Rename(Box::new(m), name), start.to(self.prev_span())))
            }
            _ => {
                self.note("identifier");
                self.note("'('");
                self.fail("RENAME")
            }
        }
    }

    fn event(&mut self) -> PResult<Cond> {
        let mut c = self.event_and()?;
        while self.eat_kw(Kw::Or) {
            let r = self.event_and()?;
            let span = c.span.to(r.span);
            c = Cond { kind: CondKind::Or(Box::new(c), Box::new(r)), span };
        }
        Ok(c)
    }

    fn event_and(&mut self) -> PResult<Cond> {
        let mut c = self.event_atom()?;
        while self.eat_kw(Kw::And) {
            let r = self.event_atom()?;
            c = Cond::and(c, r);
        }
        Ok(c)
    }

    fn event_atom(&mut self) -> PResult<Cond> {
        let start = self.span();
        if self.eat_sym("(") {
            let c = self.event()?;
            self.expect_sym(")")?;
            return Ok(c);
        }
        if self.eat_sym("*") {
            let except = self.except_list()?;
            return Ok(Cond { kind: CondKind::Star { except }, span: start.to(self.prev_span()) });
        }
        let r = self.colref()?;
        let op = match self.peek() {
            Tok::Sym("=") => Some(CmpOp::Eq),
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym(">") => Some(CmpOp::Gt),
            _ => None,
        };
        match op {
            Some(op) => {
                self.advance();
                let rhs = self.additive()?;
                let span = start.to(rhs.span);
                Ok(Cond { kind: CondKind::Atom { model: r.qual, col: r.col, op, rhs: Box::new(rhs) }, span })
            }
            None => {
                for s in ["'='", "'<'", "'>'"] {
                    self.note(s);
                }
                Ok(Cond { kind: CondKind::Bare { qual: r.qual, col: r.col }, span: r.span })
            }
        }
    }

    // ---- scalars ----

    fn scalar(&mut self) -> PResult<ScalarExpr> {
        let mut e = self.conjunction()?;
        while self.eat_kw(Kw::Or) {
            let r = self.conjunction()?;
            e = binop(Op::Or, e, r);
        }
        Ok(e)
    }

    fn conjunction(&mut self) -> PResult<ScalarExpr> {
        let mut e = self.comparison()?;
        while self.eat_kw(Kw::And) {
            let r = self.comparison()?;
            e = binop(Op::And, e, r);
        }
        Ok(e)
    }

    fn comparison(&mut self) -> PResult<ScalarExpr> {
        let e = self.additive()?;
        let op = match self.peek() {
            Tok::Sym("=") => Op::Eq,
            Tok::Sym("<>") | Tok::Sym("!=") => Op::Ne,
            Tok::Sym("<") => Op::Lt,
            Tok::Sym(">") => Op::Gt,
            Tok::Sym("<=") => Op::Le,
            Tok::Sym(">=") => Op::Ge,
            _ => {
                self.note("comparison operator");
                return Ok(e);
            }
        };
        self.advance();
        let r = self.additive()?;
        Ok(binop(op, e, r))
    }

    fn additive(&mut self) -> PResult<ScalarExpr> {
        let mut e = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => Op::Add,
                Tok::Sym("-") => Op::Sub,
                _ => {
                    self.note("'+'");
                    self.note("'-'");
                    return Ok(e);
                }
            };
            self.advance();
            let r = self.multiplicative()?;
            e = binop(op, e, r);
        }
    }

    fn multiplicative(&mut self) -> PResult<ScalarExpr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => Op::Mul,
                Tok::Sym("/") => Op::Div,
                _ => {
                    self.note("'*'");
                    self.note("'/'");
                    return Ok(e);
                }
            };
            self.advance();
            let r = self.unary()?;
            e = binop(op, e, r);
        }
    }

    fn unary(&mut self) -> PResult<ScalarExpr> {
        let start = self.span();
        if self.eat_sym("-") {
            match self.peek().clone() {
                Tok::Int(n) => {
                    self.advance();
                    return Ok(ScalarExpr::constant(Value::Int(-n), start.to(self.prev_span())));
                }
                Tok::Real(x) => {
                    self.advance();
                    return Ok(ScalarExpr::constant(Value::Real(-x), start.to(self.prev_span())));
                }
                _ => {}
            }
            let e = self.unary()?;
            let span = start.to(e.span);
            return Ok(ScalarExpr { kind: ScalarKind::Op(Op::Neg, vec![e]), span });
        }
        self.primary_scalar()
    }

    fn primary_scalar(&mut self) -> PResult<ScalarExpr> {
        let start = self.span();
        let lit = |v| Ok(ScalarExpr::constant(v, start));
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                lit(Value::Int(n))
            }
            Tok::Real(x) => {
                self.advance();
                lit(Value::Real(x))
            }
            Tok::Str(s) => {
                self.advance();
                lit(Value::Str(s))
            }
            Tok::Kw(Kw::Null) => {
                self.advance();
                lit(Value::Null)
            }
            Tok::Kw(Kw::True) => {
                self.advance();
                lit(Value::Bool(true))
            }
            Tok::Kw(Kw::False) => {
                self.advance();
                lit(Value::Bool(false))
            }
            Tok::Sym("(") => {
                self.advance();
                let e = self.scalar()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Kw(Kw::Probability) => {
                self.advance();
                let density = self.eat_kw(Kw::Density);
                self.expect_kw(Kw::Of)?;
                let event = self.event()?;
                self.expect_kw(Kw::Under)?;
                let model = self.model()?;
                let span = start.to(model.span);
                Ok(ScalarExpr { kind: ScalarKind::Probability { event, model, density }, span })
            }
            Tok::Kw(Kw::Mutual) => {
                self.advance();
                self.expect_kw(Kw::Info)?;
                self.expect_sym("(")?;
                let a = self.col_list()?;
                self.expect_sym(",")?;
                let b = self.col_list()?;
                let cond = if self.eat_sym(",") { Some(self.event()?) } else { None };
                self.expect_sym(")")?;
                self.expect_kw(Kw::Under)?;
                let model = self.model()?;
                let span = start.to(model.span);
                Ok(ScalarExpr { kind: ScalarKind::MutualInfo { a, b, cond, model }, span })
            }
            Tok::Ident(name) if *self.peek_at(1) == Tok::Sym("(") => {
                self.advance();
                if let Some(op) = Op::function_name(&name) {
                    self.advance();
                    let arg = self.scalar()?;
                    self.expect_sym(")")?;
                    let span = start.to(self.prev_span());
                    return Ok(ScalarExpr { kind: ScalarKind::Op(op, vec![arg]), span });
                }
                let Some(agg) = Aggregate::from_name(&name) else {
                    return self.custom(start, format!("unknown function {name}"));
                };
                let (agg, arg) = self.agg_args(agg)?;
                let span = start.to(self.prev_span());
                Ok(ScalarExpr { kind: ScalarKind::Agg(agg, arg.map(Box::new)), span })
            }
            Tok::Ident(_) => {
                let r = self.colref()?;
                let span = r.span;
                Ok(ScalarExpr { kind: ScalarKind::Col(r), span })
            }
            _ => {
                for what in ["number", "string", "identifier", "'('", "NULL", "TRUE", "FALSE", "PROBABILITY", "MUTUAL"] {
                    self.note(what);
                }
                Err(PErr::Syntax)
            }
        }
    }

    fn col_list(&mut self) -> PResult<Vec<ColRef>> {
        if self.eat_sym("[") {
            let mut cols = vec![self.colref()?];
            while self.eat_sym(",") {
                cols.push(self.colref()?);
            }
            self.expect_sym("]")?;
            Ok(cols)
        } else {
            Ok(vec![self.colref()?])
        }
    }
}

fn binop(op: Op, a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    let span = a.span.to(b.span);
    ScalarExpr { kind: ScalarKind::Op(op, vec![a, b]), span }
}

fn replace_group_refs(
    e: ScalarExpr,
    keys: &[(ScalarExpr, String)],
    aggs: &mut Vec<AggItem>,
    top_name: Option<String>,
) -> ScalarExpr {
    if let Some((_, name)) = keys.iter().find(|(k, _)| *k == e) {
        return ScalarExpr::col(None, name, e.span);
    }
    match e.kind {
        ScalarKind::Agg(agg, arg) => {
            let name = top_name.unwrap_or_else(|| format!("agg{}", aggs.len() + 1));
            aggs.push(AggItem { agg, arg: arg.map(|b| *b), name: name.clone() });
            ScalarExpr::col(None, &name, e.span)
        }
        ScalarKind::Op(op, args) => ScalarExpr {
            kind: ScalarKind::Op(op, args.into_iter().map(|a| replace_group_refs(a, keys, aggs, None)).collect()),
            span: e.span,
        },
        kind => ScalarExpr { kind, span: e.span },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse, print_statement};

    fn rt(q: &str) {
        let a = parse_statement(q).unwrap_or_else(|e| panic!("{q}: {e}"));
        let printed = print_statement(&a);
        let b = parse_statement(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
        assert_eq!(a, b, "{printed}");
    }

    #[test]
    fn generate() {
        let q = parse("GENERATE UNDER m LIMIT 10").unwrap();
        let Query::Table(t) = q else { panic!() };
        let TableKind::Generate { model, limit } = t.kind else { panic!() };
        assert_eq!(model.kind, ModelKind::Id("m".into()));
        assert_eq!(limit.kind, ScalarKind::Const(Value::Int(10)));
    }

    #[test]
    fn where_wraps_select() {
        let Query::Table(t) = parse("SELECT * FROM t WHERE t.x > 3").unwrap() else { panic!() };
        let TableKind::Where(inner, _) = t.kind else { panic!("{t:?}") };
        let TableKind::Select { items, .. } = inner.kind else { panic!() };
        assert!(matches!(items[0], SelectItem::Star { .. }));
    }

    #[test]
    fn missing_event_is_reported() {
        let e = parse("PROBABILITY OF UNDER m").unwrap_err();
        assert_eq!((e.line, e.col), (1, 16));
        assert!(e.expected.iter().any(|x| x == "identifier"), "{e}");
    }

    #[test]
    fn precedence() {
        let Query::Scalar(e) = parse("1 + 2 * 3 = 7 OR TRUE AND FALSE").unwrap() else { panic!() };
        let ScalarKind::Op(Op::Or, args) = &e.kind else { panic!() };
        assert!(matches!(args[0].kind, ScalarKind::Op(Op::Eq, _)));
        assert!(matches!(args[1].kind, ScalarKind::Op(Op::And, _)));
    }

    #[test]
    fn given_left_associative() {
        let Query::Table(t) = parse("GENERATE UNDER m GIVEN x > 1 GIVEN y = 2 LIMIT 1").unwrap() else { panic!() };
        let TableKind::Generate { model, .. } = t.kind else { panic!() };
        let ModelKind::Given(inner, c) = model.kind else { panic!() };
        assert!(c.is_event0());
        assert!(matches!(inner.kind, ModelKind::Given(..)));
    }

    #[test]
    fn legacy_group_by() {
        let Query::Table(t) = parse("SELECT w, AVG(x) AS a FROM t GROUP BY w").unwrap() else { panic!() };
        let TableKind::Select { from: Some(g), .. } = t.kind else { panic!() };
        let TableKind::GroupBy { keys, aggs, .. } = g.kind else { panic!() };
        assert_eq!(keys[0].1, "w");
        assert_eq!(aggs[0].name, "a");
        assert_eq!(aggs[0].agg, Aggregate::Avg);
    }

    #[test]
    fn round_trips() {
        for q in [
            "SELECT a, b AS c FROM t WHERE a > 1",
            "t JOIN u UNION v",
            "RENAME t AS u",
            "DEDUP t DUPLICATE 3 TIMES",
            "WITH t AS u: SELECT * EXCEPT (u.a, b) FROM u",
            "WITH m GIVEN x > 2 AS c: GENERATE UNDER c LIMIT 5",
            "GROUP t BY [t.a AS a] AGGREGATING COUNT(*) AS n, SUM(t.b) AS s",
            "SELECT -LOG(p) AS q, -3 AS r, 'it''s' AS s FROM t",
            "t GENERATIVE JOIN m GIVEN * EXCEPT x",
            "PROBABILITY OF m.x > 1 OR (m.y < 2 AND m.z = 'a') UNDER RENAME m AS k GIVEN k.w = 1",
            "MUTUAL INFO ([a, b], c, d > 1) UNDER m",
            "SELECT p FROM (GENERATE UNDER m LIMIT 10) ORDER BY p DESC LIMIT 3",
            "SELECT w, AVG(x) * 2 AS a FROM t WHERE x > 0 GROUP BY w AND v",
            "GENERATE UNDER a GIVEN (x > 10 * PROBABILITY OF y > 0.9 UNDER b) LIMIT 100",
        ] {
            rt(q);
        }
    }
}
