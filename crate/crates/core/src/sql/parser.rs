use super::ast::*;
use super::lexer::{tokenize, Token};
use super::SqlError;
use crate::value::Value;

/// Which placeholder forms a piece of SQL may contain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseMode {
    /// Application queries: bare `?` only.
    Application,
    /// View definitions: `?Name`, and `IN (SELECT ...)` subqueries.
    View,
    /// Constraint sides: no placeholders.
    Constraint,
    /// Template SQL: `?Name`, `?k`, and `*` operands.
    Template,
}

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "AND", "OR", "NOT", "IN", "IS", "NULL", "JOIN", "INNER", "LEFT",
    "RIGHT", "FULL", "OUTER", "CROSS", "ON", "ORDER", "BY", "LIMIT", "UNION", "GROUP", "HAVING",
    "DISTINCT", "AS", "ASC", "DESC", "TRUE", "FALSE", "EXISTS", "OFFSET", "EXCEPT", "MINUS",
    "INTERSECT", "BETWEEN", "LIKE",
];

const AGGREGATES: &[&str] = &["COUNT", "MIN", "MAX", "AVG"];

fn is_reserved(s: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(s))
}

/// Parses application SQL, substituting positional parameters.
pub fn parse(sql: &str, params: &[Value]) -> Result<QueryAst, SqlError> {
    parse_with_mode(sql, params, ParseMode::Application)
}

pub fn parse_with_mode(sql: &str, params: &[Value], mode: ParseMode) -> Result<QueryAst, SqlError> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens, pos: 0, params, next_param: 0, mode };
    let q = p.query()?;
    while p.eat(&Token::Semicolon) {}
    if let Some(t) = p.peek() {
        return Err(p.unexpected(t.clone()));
    }
    if p.next_param != params.len() {
        return Err(SqlError::ParamCount { expected: p.next_param, got: params.len() });
    }
    Ok(q)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    params: &'a [Value],
    next_param: usize,
    mode: ParseMode,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Token> {
        self.tokens.get(self.pos + k)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat(&mut self, t: &Token) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Token) -> Result<(), SqlError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.err_here(&format!("expected {t:?}")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err_here(&format!("expected {kw}")))
        }
    }

    fn err_here(&self, msg: &str) -> SqlError {
        match self.peek() {
            Some(t) => SqlError::Syntax(format!("{msg}, found {t:?}")),
            None => SqlError::Syntax(format!("{msg}, found end of input")),
        }
    }

    fn unexpected(&self, t: Token) -> SqlError {
        SqlError::Syntax(format!("unexpected {t:?}"))
    }

    fn unsupported(feature: &str) -> SqlError {
        SqlError::UnsupportedFeature(feature.to_string())
    }

    fn ident(&mut self) -> Result<String, SqlError> {
        match self.peek() {
            Some(Token::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err_here("expected identifier")),
        }
    }

    fn query(&mut self) -> Result<QueryAst, SqlError> {
        let mut selects = vec![self.union_part()?];
        while self.eat_kw("UNION") {
            if self.at_kw("ALL") {
                return Err(Self::unsupported("UNION ALL"));
            }
            self.eat_kw("DISTINCT");
            selects.push(self.union_part()?);
        }
        for kw in ["EXCEPT", "MINUS", "INTERSECT"] {
            if self.at_kw(kw) {
                return Err(Self::unsupported(kw));
            }
        }
        let mut order_by = Vec::new();
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            loop {
                order_by.push(self.column_name()?);
                if !self.eat_kw("ASC") {
                    self.eat_kw("DESC");
                }
                if !self.eat(&Token::Comma) {
                    break;
                }
            }
        }
        let mut limit = None;
        if self.eat_kw("LIMIT") {
            match self.advance() {
                Some(Token::Number(n)) if n >= 0 => limit = Some(n as u64),
                Some(Token::Positional) if self.mode == ParseMode::Application => {
                    match self.take_param()? {
                        Value::Int(n) if n >= 0 => limit = Some(n as u64),
                        v => return Err(SqlError::Syntax(format!("bad LIMIT value {v}"))),
                    }
                }
                _ => return Err(SqlError::Syntax("LIMIT expects a non-negative integer".into())),
            }
            if self.at_kw("OFFSET") {
                return Err(Self::unsupported("OFFSET"));
            }
        }
        Ok(QueryAst { selects, order_by, limit })
    }

    fn union_part(&mut self) -> Result<SelectAst, SqlError> {
        if self.peek() == Some(&Token::LParen) && self.peek_at(1).is_some_and(|t| t.is_keyword("SELECT")) {
            self.pos += 1;
            let s = self.select()?;
            self.expect(&Token::RParen)?;
            Ok(s)
        } else {
            self.select()
        }
    }

    fn select(&mut self) -> Result<SelectAst, SqlError> {
        self.expect_kw("SELECT")?;
        let distinct = self.eat_kw("DISTINCT");
        if !distinct {
            self.eat_kw("ALL");
        }
        let mut items = vec![self.select_item()?];
        while self.eat(&Token::Comma) {
            items.push(self.select_item()?);
        }
        self.expect_kw("FROM")?;
        let mut from = vec![self.from_item()?];
        while self.eat(&Token::Comma) {
            from.push(self.from_item()?);
        }
        let where_clause = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        if self.at_kw("GROUP") {
            return Err(Self::unsupported("GROUP BY"));
        }
        if self.at_kw("HAVING") {
            return Err(Self::unsupported("HAVING"));
        }
        Ok(SelectAst { distinct, items, from, where_clause })
    }

    fn alias(&mut self) -> Result<Option<String>, SqlError> {
        if self.eat_kw("AS") {
            return self.ident().map(Some);
        }
        match self.peek() {
            Some(Token::Ident(s)) if !is_reserved(s) => self.ident().map(Some),
            _ => Ok(None),
        }
    }

    fn select_item(&mut self) -> Result<SelectItem, SqlError> {
        if self.eat(&Token::Star) {
            return Ok(SelectItem::Star);
        }
        if let (Some(Token::Ident(q)), Some(Token::Dot), Some(Token::Star)) =
            (self.peek(), self.peek_at(1), self.peek_at(2))
        {
            let q = q.clone();
            self.pos += 3;
            return Ok(SelectItem::QualifiedStar(q));
        }
        if let (Some(Token::Ident(f)), Some(Token::LParen)) = (self.peek(), self.peek_at(1)) {
            if f.eq_ignore_ascii_case("SUM") {
                self.pos += 2;
                let column = self.column_name()?;
                self.expect(&Token::RParen)?;
                let alias = self.alias()?;
                return Ok(SelectItem::Sum { column, alias });
            }
            if AGGREGATES.iter().any(|a| f.eq_ignore_ascii_case(a)) {
                return Err(Self::unsupported(&format!("aggregate {}", f.to_uppercase())));
            }
            return Err(Self::unsupported(&format!("function {f}")));
        }
        let operand = self.operand()?;
        let alias = self.alias()?;
        Ok(SelectItem::Operand { operand, alias })
    }

    fn table_ref(&mut self) -> Result<TableRef, SqlError> {
        if self.peek() == Some(&Token::LParen) {
            return Err(Self::unsupported("subquery in FROM"));
        }
        let name = self.ident()?;
        let alias = self.alias()?;
        Ok(TableRef { name, alias })
    }

    #[allow(clippy::wrong_self_convention)]
    fn from_item(&mut self) -> Result<FromItem, SqlError> {
        let base = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.at_kw("JOIN") {
                self.pos += 1;
                JoinKind::Inner
            } else if self.at_kw("INNER") {
                self.pos += 1;
                self.expect_kw("JOIN")?;
                JoinKind::Inner
            } else if self.at_kw("LEFT") {
                self.pos += 1;
                self.eat_kw("OUTER");
                self.expect_kw("JOIN")?;
                JoinKind::Left
            } else if self.at_kw("RIGHT") || self.at_kw("FULL") || self.at_kw("CROSS") {
                return Err(Self::unsupported("RIGHT/FULL/CROSS JOIN"));
            } else {
                break;
            };
            let table = self.table_ref()?;
            self.expect_kw("ON")?;
            let on = self.expr()?;
            joins.push(Join { kind, table, on });
        }
        Ok(FromItem { base, joins })
    }

    fn expr(&mut self) -> Result<Expr, SqlError> {
        let mut parts = vec![self.and_expr()?];
        while self.eat_kw("OR") {
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::Or(parts) })
    }

    fn and_expr(&mut self) -> Result<Expr, SqlError> {
        let mut parts = vec![self.primary()?];
        while self.eat_kw("AND") {
            parts.push(self.primary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::And(parts) })
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        if self.at_kw("NOT") {
            return Err(Self::unsupported("NOT operator"));
        }
        if self.at_kw("EXISTS") {
            return Err(Self::unsupported("EXISTS"));
        }
        if self.peek() == Some(&Token::LParen) {
            if self.peek_at(1).is_some_and(|t| t.is_keyword("SELECT")) {
                return Err(Self::unsupported("scalar subquery"));
            }
            self.pos += 1;
            let e = self.expr()?;
            self.expect(&Token::RParen)?;
            return Ok(e);
        }
        let lhs = self.operand()?;
        let op = match self.peek() {
            Some(Token::Eq) => Some(CmpOp::Eq),
            Some(Token::Ne) => Some(CmpOp::Ne),
            Some(Token::Lt) => Some(CmpOp::Lt),
            Some(Token::Le) => Some(CmpOp::Le),
            Some(Token::Gt) => Some(CmpOp::Gt),
            Some(Token::Ge) => Some(CmpOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            if self.at_kw("ANY") || self.at_kw("ALL") || self.at_kw("SOME") {
                return Err(Self::unsupported("ANY/ALL comparison"));
            }
            let rhs = self.operand()?;
            return Ok(Expr::Cmp(op, lhs, rhs));
        }
        if self.at_kw("IS") {
            self.pos += 1;
            let negated = self.eat_kw("NOT");
            self.expect_kw("NULL")?;
            return Ok(Expr::IsNull { operand: lhs, negated });
        }
        if self.at_kw("BETWEEN") {
            self.pos += 1;
            let lo = self.operand()?;
            self.expect_kw("AND")?;
            let hi = self.operand()?;
            return Ok(Expr::And(vec![
                Expr::Cmp(CmpOp::Ge, lhs.clone(), lo),
                Expr::Cmp(CmpOp::Le, lhs, hi),
            ]));
        }
        if self.at_kw("LIKE") {
            return Err(Self::unsupported("LIKE"));
        }
        let negated = if self.at_kw("NOT") && self.peek_at(1).is_some_and(|t| t.is_keyword("IN")) {
            self.pos += 1;
            true
        } else {
            false
        };
        if self.eat_kw("IN") {
            self.expect(&Token::LParen)?;
            if self.at_kw("SELECT") {
                if self.mode != ParseMode::View {
                    return Err(Self::unsupported("subquery inside IN"));
                }
                let query = self.query()?;
                self.expect(&Token::RParen)?;
                return Ok(Expr::InSubquery { operand: lhs, query: Box::new(query), negated });
            }
            let mut list = vec![self.operand()?];
            while self.eat(&Token::Comma) {
                list.push(self.operand()?);
            }
            self.expect(&Token::RParen)?;
            return Ok(Expr::InList { operand: lhs, list, negated });
        }
        if negated {
            return Err(Self::unsupported("NOT operator"));
        }
        match lhs {
            AstOperand::Literal(Value::Bool(b)) => Ok(Expr::Const(b)),
            other => Ok(Expr::Truth(other)),
        }
    }

    fn column_name(&mut self) -> Result<ColumnName, SqlError> {
        let first = self.ident()?;
        if self.eat(&Token::Dot) {
            let name = self.ident()?;
            Ok(ColumnName { qualifier: Some(first), name })
        } else {
            Ok(ColumnName { qualifier: None, name: first })
        }
    }

    fn take_param(&mut self) -> Result<Value, SqlError> {
        let v = self.params.get(self.next_param).cloned();
        self.next_param += 1;
        match v {
            Some(v) => Ok(v),
            None => Ok(Value::Null),
        }
    }

    fn operand(&mut self) -> Result<AstOperand, SqlError> {
        let tok = self.peek().cloned();
        match tok {
            Some(Token::Number(n)) => {
                self.pos += 1;
                Ok(AstOperand::Literal(Value::Int(n)))
            }
            Some(Token::Str(s)) => {
                self.pos += 1;
                Ok(AstOperand::Literal(Value::Str(s)))
            }
            Some(Token::Positional) => {
                if self.mode != ParseMode::Application {
                    return Err(SqlError::Syntax("positional ? is only allowed in application queries".into()));
                }
                self.pos += 1;
                Ok(AstOperand::Literal(self.take_param()?))
            }
            Some(Token::Named(name)) => {
                if !matches!(self.mode, ParseMode::View | ParseMode::Template) {
                    return Err(SqlError::Syntax(format!("context parameter ?{name} not allowed here")));
                }
                self.pos += 1;
                Ok(AstOperand::Param(name))
            }
            Some(Token::Var(k)) => {
                if self.mode != ParseMode::Template {
                    return Err(SqlError::Syntax(format!("template variable ?{k} not allowed here")));
                }
                self.pos += 1;
                Ok(AstOperand::Var(k))
            }
            Some(Token::Star) if self.mode == ParseMode::Template => {
                self.pos += 1;
                Ok(AstOperand::Wildcard)
            }
            Some(Token::Ident(s)) if s.eq_ignore_ascii_case("NULL") => {
                self.pos += 1;
                Ok(AstOperand::Literal(Value::Null))
            }
            Some(Token::Ident(s)) if s.eq_ignore_ascii_case("TRUE") => {
                self.pos += 1;
                Ok(AstOperand::Literal(Value::Bool(true)))
            }
            Some(Token::Ident(s)) if s.eq_ignore_ascii_case("FALSE") => {
                self.pos += 1;
                Ok(AstOperand::Literal(Value::Bool(false)))
            }
            Some(Token::Ident(s)) if s.eq_ignore_ascii_case("TIMESTAMP") => {
                if let Some(Token::Str(text)) = self.peek_at(1).cloned() {
                    self.pos += 2;
                    return Value::Str(text)
                        .coerce(crate::value::ColumnType::Timestamp)
                        .map(AstOperand::Literal)
                        .map_err(|e| SqlError::Syntax(e.to_string()));
                }
                self.column_name().map(AstOperand::Column)
            }
            Some(Token::Ident(s)) if s.eq_ignore_ascii_case("ANY") || s.eq_ignore_ascii_case("ALL") => {
                Err(Self::unsupported("ANY/ALL"))
            }
            Some(Token::Ident(_)) => self.column_name().map(AstOperand::Column),
            _ => Err(self.err_here("expected operand")),
        }
    }
}
